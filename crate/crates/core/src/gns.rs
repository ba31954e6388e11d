//! GNS-orthonormal bases of embedded sublevels, conditional expectations
//! E_{n,k} and the differences Q_{n,k} = E_{n,k} − E_{n,k−1}.
//!
//! All projections act on flat vectors (see [`crate::fdca`]) with the GNS
//! metric μ_b/d_b on block b; basis vectors are sparse in that layout.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fdca::AlgebraElement;
use crate::tower::Tower;

/// Relative norm below which an orthogonalized vector counts as dependent.
pub const DEPENDENCE_THRESHOLD: f64 = 1e-12;

/// A flat vector stored as `(flat index, value)` pairs sorted by index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseElement {
    entries: Vec<(usize, Complex64)>,
}

impl SparseElement {
    fn from_map(map: &BTreeMap<usize, Complex64>) -> Self {
        SparseElement {
            entries: map
                .iter()
                .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
                .map(|(&i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, Complex64)] {
        &self.entries
    }

    /// ⟨x, self⟩ for a dense flat vector x.
    pub fn coefficient(&self, x: &[Complex64], metric: &[f64]) -> Complex64 {
        self.entries.iter().map(|&(i, u)| x[i] * u.conj() * metric[i]).sum()
    }

    pub fn to_element(&self, shape: &crate::fdca::BlockShape) -> Result<AlgebraElement> {
        let mut flat = vec![Complex64::new(0.0, 0.0); shape.linear_dim()];
        for &(i, v) in &self.entries {
            flat[i] = v;
        }
        AlgebraElement::from_flat(shape, &flat)
    }
}

/// Orthonormal basis of α_{k→n}(ℬ_k) inside (ℬ_n, ⟨·,·⟩_{τ_n}).
#[derive(Clone, Debug, PartialEq)]
pub struct SubalgebraBasis {
    pub level: usize,
    pub sublevel: usize,
    vectors: Vec<SparseElement>,
    /// max |⟨u_i, u_j⟩ − δ_ij|.
    pub gram_residual: f64,
}

fn sparse_dot(x: &BTreeMap<usize, Complex64>, u: &SparseElement, metric: &[f64]) -> Complex64 {
    u.entries
        .iter()
        .filter_map(|&(i, ui)| x.get(&i).map(|xi| xi * ui.conj() * metric[i]))
        .sum()
}

fn sparse_norm(x: &BTreeMap<usize, Complex64>, metric: &[f64]) -> f64 {
    x.iter().map(|(&i, v)| v.norm_sqr() * metric[i]).sum::<f64>().sqrt()
}

impl SubalgebraBasis {
    /// Modified Gram–Schmidt with one reorthogonalization pass over the images
    /// of the matrix units of ℬ_k, ordered by (block, row, column).
    pub fn build(t: &Tower, n: usize, k: usize) -> Result<Self> {
        let shape = t.shape(n)?;
        let metric = t.weights(n)?.flat_metric(shape)?;
        let offsets = shape.offsets();
        let dims = shape.dims();
        let placements = t.placements(k, n)?;
        let src_dims = t.shape(k)?.dims().to_vec();

        let mut vectors: Vec<SparseElement> = Vec::new();
        // flat index → basis vectors with a nonzero entry there
        let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut index = 0;
        for (s, copies) in placements.iter().enumerate() {
            let d = src_dims[s];
            for i in 0..d {
                for j in 0..d {
                    let mut v: BTreeMap<usize, Complex64> = copies
                        .iter()
                        .map(|&(b, o)| (offsets[b] + (o + i) * dims[b] + (o + j), Complex64::new(1.0, 0.0)))
                        .collect();
                    let original = sparse_norm(&v, &metric);
                    for _pass in 0..2 {
                        let overlapping: BTreeSet<usize> =
                            v.keys().filter_map(|f| postings.get(f)).flatten().copied().collect();
                        for id in overlapping {
                            let c = sparse_dot(&v, &vectors[id], &metric);
                            if c != Complex64::new(0.0, 0.0) {
                                for &(f, u) in vectors[id].entries() {
                                    *v.entry(f).or_insert(Complex64::new(0.0, 0.0)) -= c * u;
                                }
                            }
                        }
                    }
                    let norm = sparse_norm(&v, &metric);
                    if norm.is_nan() || norm <= DEPENDENCE_THRESHOLD * original {
                        return Err(Error::DegenerateBasis {
                            level: n,
                            sublevel: k,
                            index,
                        });
                    }
                    v.values_mut().for_each(|x| *x /= norm);
                    let u = SparseElement::from_map(&v);
                    for &(f, _) in u.entries() {
                        postings.entry(f).or_default().push(vectors.len());
                    }
                    vectors.push(u);
                    index += 1;
                }
            }
        }
        let gram_residual = gram_residual(&vectors, &postings, &metric);
        Ok(SubalgebraBasis {
            level: n,
            sublevel: k,
            vectors,
            gram_residual,
        })
    }

    pub fn vectors(&self) -> &[SparseElement] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Σ_i ⟨x, u_i⟩ u_i on a flat vector.
    pub fn project_flat(&self, x: &[Complex64], metric: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        self.project_flat_into(x, metric, Complex64::new(1.0, 0.0), &mut out);
        out
    }

    /// out += scale · Σ_i ⟨x, u_i⟩ u_i.
    pub fn project_flat_into(&self, x: &[Complex64], metric: &[f64], scale: Complex64, out: &mut [Complex64]) {
        for u in &self.vectors {
            let c = u.coefficient(x, metric) * scale;
            for &(i, v) in u.entries() {
                out[i] += c * v;
            }
        }
    }
}

/// Gram entries only arise between vectors sharing a flat index.
fn gram_residual(vectors: &[SparseElement], postings: &HashMap<usize, Vec<usize>>, metric: &[f64]) -> f64 {
    let mut gram: HashMap<(usize, usize), Complex64> = HashMap::new();
    for (&f, ids) in postings {
        let value = |id: usize| {
            vectors[id]
                .entries()
                .binary_search_by_key(&f, |e| e.0)
                .map(|p| vectors[id].entries()[p].1)
                .unwrap_or_default()
        };
        for &i in ids {
            for &j in ids {
                *gram.entry((i, j)).or_default() += value(i) * value(j).conj() * metric[f];
            }
        }
    }
    let mut residual: f64 = 0.0;
    for i in 0..vectors.len() {
        let diag = gram.get(&(i, i)).copied().unwrap_or_default();
        residual = residual.max((diag - 1.0).norm());
    }
    for (&(i, j), g) in &gram {
        if i != j {
            residual = residual.max(g.norm());
        }
    }
    residual
}

/// The orthonormal basis of sublevel k inside level n (cached on the tower).
pub fn subalgebra_basis(t: &Tower, n: usize, k: usize) -> Result<std::sync::Arc<SubalgebraBasis>> {
    t.basis(n, k)
}

fn check_level_element(t: &Tower, n: usize, a: &AlgebraElement) -> Result<()> {
    let shape = t.shape(n)?;
    if a.shape() != shape {
        return Err(Error::shape(shape.dims(), a.shape().dims()));
    }
    Ok(())
}

/// E_{n,k}(a): the τ_n-preserving conditional expectation onto α_{k→n}(ℬ_k).
pub fn cond_expectation(t: &Tower, n: usize, k: usize, a: &AlgebraElement) -> Result<AlgebraElement> {
    check_level_element(t, n, a)?;
    if k > n {
        return Err(Error::InvalidInput(format!("sublevel {k} above level {n}")));
    }
    if k == n {
        return Ok(a.clone());
    }
    let shape = t.shape(n)?;
    let metric = t.weights(n)?.flat_metric(shape)?;
    let basis = t.basis(n, k)?;
    AlgebraElement::from_flat(shape, &basis.project_flat(&a.to_flat(), &metric))
}

/// Q_{n,k}(a) = E_{n,k}(a) − E_{n,k−1}(a), for 1 ≤ k ≤ n.
pub fn q_projection(t: &Tower, n: usize, k: usize, a: &AlgebraElement) -> Result<AlgebraElement> {
    if k == 0 {
        return Err(Error::InvalidInput("Q projections start at sublevel 1".into()));
    }
    cond_expectation(t, n, k, a)?.sub(&cond_expectation(t, n, k - 1, a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfrac::{BaireSequence, IrrationalHandle};
    use crate::fdca::{gns_inner, trace_state, BlockShape};
    use crate::tower::{es_tower, uhf_tower};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn golden(depth: usize) -> Tower {
        es_tower(&IrrationalHandle::golden(), depth).unwrap()
    }

    /// Normalized partial trace over the second tensor factor, re-embedded as
    /// b ⊗ 1: the average of the diagonal d×d blocks, repeated down the diagonal.
    fn partial_trace_oracle(a: &DMatrix<Complex64>, d: usize) -> DMatrix<Complex64> {
        let m = a.nrows() / d;
        let mut b = DMatrix::<Complex64>::zeros(d, d);
        for c in 0..m {
            b += a.view((c * d, c * d), (d, d));
        }
        b /= Complex64::new(m as f64, 0.0);
        let mut out = DMatrix::<Complex64>::zeros(a.nrows(), a.ncols());
        for c in 0..m {
            out.view_mut((c * d, c * d), (d, d)).copy_from(&b);
        }
        out
    }

    #[test]
    fn sublevel_zero_is_unit() {
        let t = golden(3);
        let b = subalgebra_basis(&t, 3, 0).unwrap();
        assert_eq!(b.len(), 1);
        let u = b.vectors()[0].to_element(t.shape(3).unwrap()).unwrap();
        let one = AlgebraElement::identity(t.shape(3).unwrap());
        assert!(u.max_abs_diff(&one).unwrap() < 1e-14);
    }

    #[test]
    fn uhf_level_two_sublevel_one() {
        let t = uhf_tower(&BaireSequence::constant(1).unwrap(), 2).unwrap();
        let b = subalgebra_basis(&t, 2, 1).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.gram_residual < 1e-10);
    }

    #[test]
    fn golden_gram_residuals() {
        let t = golden(5);
        for n in 0..=5 {
            for k in 0..=n {
                let b = subalgebra_basis(&t, n, k).unwrap();
                assert_eq!(b.len(), t.shape(k).unwrap().linear_dim());
                assert!(b.gram_residual < 1e-10, "n={n} k={k}: {}", b.gram_residual);
            }
        }
    }

    #[test]
    fn expectation_examples() {
        let t = golden(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = t.weights(4).unwrap();
        let a = AlgebraElement::random(t.shape(4).unwrap(), &mut rng);
        let e0 = cond_expectation(&t, 4, 0, &a).unwrap();
        let scalar = AlgebraElement::scalar(t.shape(4).unwrap(), trace_state(w, &a).unwrap());
        assert!(e0.max_abs_diff(&scalar).unwrap() < 1e-12);
        let b = AlgebraElement::random(t.shape(2).unwrap(), &mut rng);
        let eb = t.embed_through(2, 4, &b).unwrap();
        assert!(cond_expectation(&t, 4, 2, &eb).unwrap().max_abs_diff(&eb).unwrap() < 1e-10);
    }

    #[test]
    fn uhf_matches_partial_trace() {
        let t = uhf_tower(&BaireSequence::constant(1).unwrap(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = AlgebraElement::random(t.shape(2).unwrap(), &mut rng);
        let e = cond_expectation(&t, 2, 1, &a).unwrap();
        // Level 1 → 2 places M_2 as diag(x, x), i.e. x ⊗ 1 with the copy index first.
        let oracle = partial_trace_oracle(a.block(0), 2);
        assert!((e.block(0) - oracle).iter().all(|z| z.norm() < 1e-12));
        let t3 = uhf_tower(&BaireSequence::finite(vec![2, 1]).unwrap(), 2).unwrap();
        let a = AlgebraElement::random(t3.shape(2).unwrap(), &mut rng);
        let e = cond_expectation(&t3, 2, 1, &a).unwrap();
        assert!((e.block(0) - partial_trace_oracle(a.block(0), 3))
            .iter()
            .all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn expectation_laws() {
        let t = golden(5);
        let n = 5;
        let w = t.weights(n).unwrap();
        let shape = t.shape(n).unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..=n {
            let a = AlgebraElement::random(&shape, &mut rng);
            let b = AlgebraElement::random(&shape, &mut rng);
            let ea = cond_expectation(&t, n, k, &a).unwrap();
            let eea = cond_expectation(&t, n, k, &ea).unwrap();
            assert!(eea.max_abs_diff(&ea).unwrap() < 1e-10);
            let eb = cond_expectation(&t, n, k, &b).unwrap();
            let lhs = gns_inner(w, &ea, &b).unwrap();
            let rhs = gns_inner(w, &a, &eb).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
            assert!((trace_state(w, &ea).unwrap() - trace_state(w, &a).unwrap()).norm() < 1e-10);
            let ks = t.shape(k).unwrap();
            let x = t.embed_through(k, n, &AlgebraElement::random(ks, &mut rng)).unwrap();
            let y = t.embed_through(k, n, &AlgebraElement::random(ks, &mut rng)).unwrap();
            let xay = x.mul(&a).unwrap().mul(&y).unwrap();
            let lhs = cond_expectation(&t, n, k, &xay).unwrap();
            let rhs = x.mul(&ea).unwrap().mul(&y).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-9);
        }
    }

    #[test]
    fn q_projections() {
        let t = golden(4);
        let n = 4;
        let shape = t.shape(n).unwrap().clone();
        let w = t.weights(n).unwrap();
        let one = AlgebraElement::identity(&shape);
        for k in 1..=n {
            assert!(
                q_projection(&t, n, k, &one)
                    .unwrap()
                    .max_abs_diff(&AlgebraElement::zeros(&shape))
                    .unwrap()
                    < 1e-12
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = AlgebraElement::random(&shape, &mut rng);
        let b = AlgebraElement::random(&shape, &mut rng);
        let mut sum = cond_expectation(&t, n, 0, &a).unwrap();
        for k in 1..=n {
            sum = sum.add(&q_projection(&t, n, k, &a).unwrap()).unwrap();
        }
        assert!(sum.max_abs_diff(&a).unwrap() < 1e-10);
        for j in 1..=n {
            for k in 1..=n {
                if j != k {
                    let qa = q_projection(&t, n, j, &a).unwrap();
                    let qb = q_projection(&t, n, k, &b).unwrap();
                    assert!(gns_inner(w, &qa, &qb).unwrap().norm() < 1e-10);
                }
            }
        }
        assert!(q_projection(&t, n, 0, &a).is_err());
    }

    #[test]
    fn shape_checked() {
        let t = golden(2);
        let wrong = AlgebraElement::identity(&BlockShape::new(vec![3]).unwrap());
        assert!(matches!(
            cond_expectation(&t, 2, 1, &wrong),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
