//! Finite-dimensional C*-algebras ⊕_k M_{d_k}(ℂ) with faithful tracial states.
//!
//! The flat layout of an element concatenates its blocks, each row-major; the
//! same layout indexes GNS vectors throughout the crate.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Block sizes (d_1, …, d_K) of ⊕_k M_{d_k}(ℂ).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockShape {
    dims: Vec<usize>,
}

impl BlockShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput("a block shape needs at least one block".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "block dimensions must be >= 1, got {dims:?}"
            )));
        }
        Ok(BlockShape { dims })
    }

    pub fn scalars() -> Self {
        BlockShape { dims: vec![1] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    /// Σ d_k², the dimension of the algebra as a vector space.
    pub fn linear_dim(&self) -> usize {
        self.dims.iter().map(|d| d * d).sum()
    }

    /// Flat offset of each block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.dims
            .iter()
            .map(|d| {
                let o = acc;
                acc += d * d;
                o
            })
            .collect()
    }

    /// Block index of every flat position.
    pub fn block_of_flat(&self) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .flat_map(|(k, d)| std::iter::repeat_n(k, d * d))
            .collect()
    }
}

impl TryFrom<Vec<usize>> for BlockShape {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        BlockShape::new(dims)
    }
}

impl From<BlockShape> for Vec<usize> {
    fn from(s: BlockShape) -> Self {
        s.dims
    }
}

impl fmt::Display for BlockShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| format!("M{d}")).collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// A block-diagonal element; block k is d_k × d_k.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    shape: BlockShape,
    blocks: Vec<DMatrix<Complex64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArithOp {
    Add,
    Mul,
    Adjoint,
    Scale(Complex64),
}

impl AlgebraElement {
    pub fn from_blocks(blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let mut dims = Vec::with_capacity(blocks.len());
        for b in &blocks {
            if b.nrows() != b.ncols() {
                return Err(Error::InvalidInput(format!(
                    "block of size {}x{} is not square",
                    b.nrows(),
                    b.ncols()
                )));
            }
            dims.push(b.nrows());
        }
        Ok(AlgebraElement {
            shape: BlockShape::new(dims)?,
            blocks,
        })
    }

    pub fn zeros(shape: &BlockShape) -> Self {
        AlgebraElement {
            shape: shape.clone(),
            blocks: shape.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
        }
    }

    pub fn identity(shape: &BlockShape) -> Self {
        AlgebraElement {
            shape: shape.clone(),
            blocks: shape.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        }
    }

    pub fn scalar(shape: &BlockShape, c: Complex64) -> Self {
        AlgebraElement::identity(shape).scale(c)
    }

    /// The matrix unit e_ij of block k.
    pub fn matrix_unit(shape: &BlockShape, k: usize, i: usize, j: usize) -> Result<Self> {
        let d = *shape
            .dims
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("block {k} out of range for {shape}")))?;
        if i >= d || j >= d {
            return Err(Error::InvalidInput(format!("entry ({i},{j}) out of range for M{d}")));
        }
        let mut e = AlgebraElement::zeros(shape);
        e.blocks[k][(i, j)] = Complex64::new(1.0, 0.0);
        Ok(e)
    }

    /// Gaussian entries (real and imaginary parts standard normal).
    pub fn random<R: Rng + ?Sized>(shape: &BlockShape, rng: &mut R) -> Self {
        let blocks = shape
            .dims
            .iter()
            .map(|&d| {
                DMatrix::from_fn(d, d, |_, _| {
                    Complex64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
                })
            })
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    /// (x + x*)/2 for Gaussian x.
    pub fn random_self_adjoint<R: Rng + ?Sized>(shape: &BlockShape, rng: &mut R) -> Self {
        let x = AlgebraElement::random(shape, rng);
        let blocks = x
            .blocks
            .iter()
            .map(|b| (b + b.adjoint()) * Complex64::new(0.5, 0.0))
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    pub fn from_flat(shape: &BlockShape, flat: &[Complex64]) -> Result<Self> {
        if flat.len() != shape.linear_dim() {
            return Err(Error::InvalidInput(format!(
                "flat vector has {} entries, shape {shape} needs {}",
                flat.len(),
                shape.linear_dim()
            )));
        }
        let mut offset = 0;
        let blocks = shape
            .dims
            .iter()
            .map(|&d| {
                let b = DMatrix::from_row_slice(d, d, &flat[offset..offset + d * d]);
                offset += d * d;
                b
            })
            .collect();
        Ok(AlgebraElement {
            shape: shape.clone(),
            blocks,
        })
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.shape.linear_dim());
        for b in &self.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    out.push(b[(i, j)]);
                }
            }
        }
        out
    }

    pub fn shape(&self) -> &BlockShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &DMatrix<Complex64> {
        &self.blocks[k]
    }

    pub(crate) fn block_mut(&mut self, k: usize) -> &mut DMatrix<Complex64> {
        &mut self.blocks[k]
    }

    fn check_shape(&self, other: &AlgebraElement) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape.dims, &other.shape.dims));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &AlgebraElement,
        f: impl Fn(&DMatrix<Complex64>, &DMatrix<Complex64>) -> DMatrix<Complex64>,
    ) -> Result<Self> {
        self.check_shape(other)?;
        Ok(AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn adjoint(&self) -> Self {
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &AlgebraElement) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ElementFile::from(self)).expect("element serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ElementFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }
}

/// Blockwise arithmetic; `b` is ignored for unary operations.
pub fn arith(a: &AlgebraElement, b: &AlgebraElement, op: ArithOp) -> Result<AlgebraElement> {
    match op {
        ArithOp::Add => a.add(b),
        ArithOp::Mul => a.mul(b),
        ArithOp::Adjoint => Ok(a.adjoint()),
        ArithOp::Scale(c) => Ok(a.scale(c)),
    }
}

/// On-disk element format: row-major `[re, im]` pairs per block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementFile {
    pub shape: Vec<usize>,
    pub blocks: Vec<Vec<[f64; 2]>>,
}

impl From<&AlgebraElement> for ElementFile {
    fn from(a: &AlgebraElement) -> Self {
        ElementFile {
            shape: a.shape.dims.clone(),
            blocks: a
                .blocks
                .iter()
                .map(|b| {
                    let d = b.nrows();
                    (0..d * d)
                        .map(|f| {
                            let z = b[(f / d, f % d)];
                            [z.re, z.im]
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<ElementFile> for AlgebraElement {
    type Error = Error;
    fn try_from(file: ElementFile) -> Result<Self> {
        let shape = BlockShape::new(file.shape)?;
        if file.blocks.len() != shape.num_blocks() {
            return Err(Error::Parse(format!(
                "shape lists {} blocks but {} were given",
                shape.num_blocks(),
                file.blocks.len()
            )));
        }
        let mut flat = Vec::with_capacity(shape.linear_dim());
        for (k, (entries, &d)) in file.blocks.iter().zip(&shape.dims).enumerate() {
            if entries.len() != d * d {
                return Err(Error::Parse(format!(
                    "block {k} has {} entries, expected {}",
                    entries.len(),
                    d * d
                )));
            }
            flat.extend(entries.iter().map(|[re, im]| Complex64::new(*re, *im)));
        }
        AlgebraElement::from_flat(&shape, &flat)
    }
}

pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Block weights μ_k > 0 with Σ μ_k = 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceWeights {
    weights: Vec<f64>,
    /// Set when the input sum missed 1 by more than [`WEIGHT_TOLERANCE`] and
    /// the weights were rescaled.
    renormalized: bool,
}

impl TraceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("trace weights are empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("trace weights must be positive, got {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() <= WEIGHT_TOLERANCE {
            return Ok(TraceWeights {
                weights,
                renormalized: false,
            });
        }
        Ok(TraceWeights {
            weights: weights.iter().map(|w| w / sum).collect(),
            renormalized: true,
        })
    }

    /// Weights stored as given, without validation; for fault injection.
    pub fn unchecked(weights: Vec<f64>) -> Self {
        TraceWeights {
            weights,
            renormalized: false,
        }
    }

    pub fn single() -> Self {
        TraceWeights {
            weights: vec![1.0],
            renormalized: false,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn check(&self, shape: &BlockShape) -> Result<()> {
        if self.weights.len() != shape.num_blocks() {
            return Err(Error::ShapeMismatch {
                expected: shape.dims.clone(),
                found: vec![self.weights.len()],
            });
        }
        Ok(())
    }

    /// The GNS metric on flat vectors: μ_k/d_k at every entry of block k.
    pub fn flat_metric(&self, shape: &BlockShape) -> Result<Vec<f64>> {
        self.check(shape)?;
        Ok(shape
            .dims
            .iter()
            .zip(&self.weights)
            .flat_map(|(&d, &mu)| std::iter::repeat_n(mu / d as f64, d * d))
            .collect())
    }
}

/// C*-norm: the largest singular value over all blocks.
pub fn op_norm(a: &AlgebraElement) -> f64 {
    a.blocks.iter().map(linalg::sigma_max).fold(0.0, f64::max)
}

/// τ(a) = Σ_k (μ_k/d_k) Tr(a_k).
pub fn trace_state(w: &TraceWeights, a: &AlgebraElement) -> Result<Complex64> {
    w.check(&a.shape)?;
    Ok(a.blocks
        .iter()
        .zip(&w.weights)
        .map(|(b, mu)| b.trace() * (mu / b.nrows() as f64))
        .sum())
}

/// ⟨a, b⟩_τ = τ(b*a).
pub fn gns_inner(w: &TraceWeights, a: &AlgebraElement, b: &AlgebraElement) -> Result<Complex64> {
    a.check_shape(b)?;
    w.check(&a.shape)?;
    // τ(b*a) = Σ_k (μ_k/d_k) Σ_ij a_ij conj(b_ij); avoids forming b*a.
    Ok(a.blocks
        .iter()
        .zip(&b.blocks)
        .zip(&w.weights)
        .map(|((x, y), mu)| {
            let s: Complex64 = x.iter().zip(y.iter()).map(|(p, q)| p * q.conj()).sum();
            s * (mu / x.nrows() as f64)
        })
        .sum())
}

pub fn gns_norm(w: &TraceWeights, a: &AlgebraElement) -> Result<f64> {
    Ok(gns_inner(w, a, a)?.re.max(0.0).sqrt())
}

/// The least c with ‖a‖ ≤ c‖a‖_τ: max_k √(d_k/μ_k), cross-checked against the
/// matrix unit e_11 of the maximizing block, which attains it.
pub fn sharp_constant(shape: &BlockShape, w: &TraceWeights) -> Result<f64> {
    w.check(shape)?;
    let (k, c) = shape
        .dims
        .iter()
        .zip(&w.weights)
        .map(|(&d, &mu)| (d as f64 / mu).sqrt())
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (k, c)| if c > best.1 { (k, c) } else { best },
        );
    let e = AlgebraElement::matrix_unit(shape, k, 0, 0)?;
    let attained = op_norm(&e) / gns_norm(w, &e)?;
    if (attained - c).abs() > 1e-10 * c {
        return Err(Error::InternalInconsistency(format!(
            "sharp constant {c} not attained by e_11 of block {k} (ratio {attained})"
        )));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn shape(d: &[usize]) -> BlockShape {
        BlockShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn shapes() {
        assert!(BlockShape::new(vec![]).is_err());
        assert!(BlockShape::new(vec![2, 0]).is_err());
        let s = shape(&[3, 2]);
        assert_eq!(s.linear_dim(), 13);
        assert_eq!(s.offsets(), vec![0, 9]);
        assert_eq!(s.to_string(), "M3+M2");
    }

    #[test]
    fn op_norm_examples() {
        let s = shape(&[2, 1]);
        assert_eq!(op_norm(&AlgebraElement::identity(&s)), 1.0);
        let a = AlgebraElement::from_flat(&s, &[c(1.0), c(0.0), c(0.0), c(-1.0), c(3.0)]).unwrap();
        assert!((op_norm(&a) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn trace_examples() {
        let s = shape(&[2]);
        let w = TraceWeights::single();
        assert_eq!(trace_state(&w, &AlgebraElement::identity(&s)).unwrap(), c(1.0));
        let e11 = AlgebraElement::matrix_unit(&s, 0, 0, 0).unwrap();
        let e22 = AlgebraElement::matrix_unit(&s, 0, 1, 1).unwrap();
        assert_eq!(trace_state(&w, &e11).unwrap(), c(0.5));
        assert_eq!(gns_inner(&w, &e11, &e22).unwrap(), c(0.0));
        assert!((gns_norm(&w, &e11).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let one = AlgebraElement::identity(&s);
        assert_eq!(gns_inner(&w, &one, &one).unwrap(), c(1.0));
    }

    #[test]
    fn sharp_constant_examples() {
        let c2 = sharp_constant(&shape(&[2]), &TraceWeights::single()).unwrap();
        assert!((c2 - 2f64.sqrt()).abs() < 1e-15);
        let theta = (5f64.sqrt() - 1.0) / 2.0;
        let w = TraceWeights::new(vec![theta, 1.0 - theta]).unwrap();
        let cg = sharp_constant(&shape(&[1, 1]), &w).unwrap();
        assert!((cg - 1.0 / (1.0 - theta).sqrt()).abs() < 1e-14);
        assert!((cg - 1.618_034).abs() < 1e-6);
    }

    #[test]
    fn sharp_constant_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dims, weights) in [
            (vec![2], vec![1.0]),
            (vec![3, 2], vec![0.7, 0.3]),
            (vec![1, 1], vec![0.25, 0.75]),
        ] {
            let s = shape(&dims);
            let w = TraceWeights::new(weights).unwrap();
            let cst = sharp_constant(&s, &w).unwrap();
            let mut best: f64 = 0.0;
            for _ in 0..10_000 {
                // Rank-one elements concentrated in one block are near-extremal.
                let mut a = AlgebraElement::zeros(&s);
                let k = rng.gen_range(0..s.num_blocks());
                let d = s.dims()[k];
                let u = nalgebra::DVector::from_fn(d, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let v = nalgebra::DVector::from_fn(d, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                *a.block_mut(k) = &u * v.adjoint();
                let r = AlgebraElement::random(&s, &mut rng).scale_real(1e-3);
                let a = a.add(&r).unwrap();
                let ratio = op_norm(&a) / gns_norm(&w, &a).unwrap();
                assert!(ratio <= cst * (1.0 + 1e-12));
                best = best.max(ratio);
            }
            assert!(best >= 0.95 * cst, "sampled {best} vs {cst}");
        }
    }

    #[test]
    fn weights_renormalize() {
        let w = TraceWeights::new(vec![0.5, 0.5 + 1e-13]).unwrap();
        assert!(!w.renormalized());
        let w = TraceWeights::new(vec![1.0, 1.0]).unwrap();
        assert!(w.renormalized());
        assert_eq!(w.weights(), &[0.5, 0.5]);
        assert!(TraceWeights::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let a = AlgebraElement::identity(&shape(&[2]));
        let b = AlgebraElement::identity(&shape(&[1, 1]));
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(
            trace_state(&TraceWeights::single(), &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = AlgebraElement::random(&shape(&[2, 1]), &mut rng);
        let back = AlgebraElement::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
        assert!(AlgebraElement::from_json(r#"{"shape":[2],"blocks":[[[1,0]]]}"#).is_err());
    }

    #[test]
    fn large_block_power_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = shape(&[70]);
        let a = AlgebraElement::random(&s, &mut rng);
        let dense = linalg::dense_sigma_max(a.block(0));
        assert!((op_norm(&a) - dense).abs() <= 1e-10 * dense);
    }

    fn arb_element() -> impl Strategy<Value = (AlgebraElement, AlgebraElement, TraceWeights)> {
        (proptest::collection::vec(1usize..4, 1..4), any::<u64>()).prop_map(|(dims, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = BlockShape::new(dims).unwrap();
            let raw: Vec<f64> = (0..s.num_blocks()).map(|_| rng.gen_range(0.05..1.0)).collect();
            let w = TraceWeights::new(raw).unwrap();
            (
                AlgebraElement::random(&s, &mut rng),
                AlgebraElement::random(&s, &mut rng),
                w,
            )
        })
    }

    proptest! {
        #[test]
        fn algebra_laws((a, b, w) in arb_element()) {
            let one = AlgebraElement::identity(a.shape());
            prop_assert!(one.mul(&a).unwrap().max_abs_diff(&a).unwrap() < 1e-14);
            let lhs = a.mul(&b).unwrap().adjoint();
            let rhs = b.adjoint().mul(&a.adjoint()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
            let zero = a.add(&a.scale_real(-1.0)).unwrap();
            prop_assert_eq!(op_norm(&zero), 0.0);
            let tab = trace_state(&w, &a.mul(&b).unwrap()).unwrap();
            let tba = trace_state(&w, &b.mul(&a).unwrap()).unwrap();
            prop_assert!((tab - tba).norm() < 1e-11);
        }

        #[test]
        fn norm_inequalities((a, _b, w) in arb_element()) {
            let n = op_norm(&a);
            let t = gns_norm(&w, &a).unwrap();
            prop_assert!(t <= n * (1.0 + 1e-12));
            prop_assert!(n <= sharp_constant(a.shape(), &w).unwrap() * t * (1.0 + 1e-12));
            let star = op_norm(&a.adjoint().mul(&a).unwrap());
            prop_assert!((star - n * n).abs() <= 1e-8 * n * n);
            let inner = gns_inner(&w, &a, &a).unwrap();
            prop_assert!(inner.re > 0.0 && inner.im.abs() < 1e-12 * inner.re);
        }
    }
}
