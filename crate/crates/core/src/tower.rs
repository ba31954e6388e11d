//! Inductive sequences (ℬ_n, α_n) with compatible faithful traces.
//!
//! Inside a target block, source copies are laid out down the diagonal in
//! layout order. For Effros–Shen towers the first target block holds r_{n+1}
//! copies of the first source block followed by one copy of the second, and
//! the second target block holds one copy of the first source block.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cfrac::{
    box_product, convergents, es_beta, t_weight_enclosure, to_f64, uhf_gamma, BaireSequence, ConvergentTable, Digit,
    IrrationalHandle,
};
use crate::error::{Error, Result};
use crate::fdca::{trace_state, AlgebraElement, BlockShape, TraceWeights};
use crate::gns::SubalgebraBasis;

/// A unital block-diagonal *-homomorphism between finite-dimensional algebras.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Embedding {
    source: BlockShape,
    target: BlockShape,
    /// For each target block, `(source block, repeat count)` in diagonal order.
    layout: Vec<Vec<(usize, usize)>>,
}

/// A copy of a source block inside a target block: `(target block, diagonal offset)`.
pub type Placement = (usize, usize);

impl Embedding {
    pub fn new(source: BlockShape, target: BlockShape, layout: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        if layout.len() != target.num_blocks() {
            return Err(Error::InvalidInput(format!(
                "layout has {} entries for {} target blocks",
                layout.len(),
                target.num_blocks()
            )));
        }
        let mut used = vec![false; source.num_blocks()];
        for (j, row) in layout.iter().enumerate() {
            let mut size = 0usize;
            for &(s, r) in row {
                let d = *source
                    .dims()
                    .get(s)
                    .ok_or_else(|| Error::InvalidInput(format!("layout references source block {s} of {source}")))?;
                if r > 0 {
                    used[s] = true;
                }
                size += r * d;
            }
            if size != target.dims()[j] {
                return Err(Error::InvalidInput(format!(
                    "target block {j} has size {} but its layout fills {size}",
                    target.dims()[j]
                )));
            }
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::InvalidInput(format!(
                "source block {s} is not embedded (map is not injective)"
            )));
        }
        Ok(Embedding { source, target, layout })
    }

    pub fn source(&self) -> &BlockShape {
        &self.source
    }

    pub fn target(&self) -> &BlockShape {
        &self.target
    }

    pub fn layout(&self) -> &[Vec<(usize, usize)>] {
        &self.layout
    }

    /// Every copy of each source block, in diagonal order.
    pub fn placements(&self) -> Vec<Vec<Placement>> {
        let mut out = vec![Vec::new(); self.source.num_blocks()];
        for (j, row) in self.layout.iter().enumerate() {
            let mut offset = 0;
            for &(s, r) in row {
                let d = self.source.dims()[s];
                for _ in 0..r {
                    out[s].push((j, offset));
                    offset += d;
                }
            }
        }
        out
    }

    pub fn apply(&self, a: &AlgebraElement) -> Result<AlgebraElement> {
        if a.shape() != &self.source {
            return Err(Error::shape(self.source.dims(), a.shape().dims()));
        }
        Ok(place(&self.target, &self.placements(), a))
    }
}

fn place(target: &BlockShape, placements: &[Vec<Placement>], a: &AlgebraElement) -> AlgebraElement {
    let mut out = AlgebraElement::zeros(target);
    for (s, copies) in placements.iter().enumerate() {
        let src = a.block(s);
        let d = src.nrows();
        for &(j, o) in copies {
            out.block_mut(j).view_mut((o, o), (d, d)).copy_from(src);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub shape: BlockShape,
    pub weights: TraceWeights,
}

/// Where a tower came from; carries what the tail bounds need.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    EffrosShen {
        label: String,
        digits: Vec<Digit>,
        table: ConvergentTable,
    },
    Uhf {
        sequence: BaireSequence,
    },
    Custom {
        label: String,
    },
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::EffrosShen { label, .. } => label.clone(),
            Provenance::Uhf { sequence } => sequence.to_string(),
            Provenance::Custom { label } => label.clone(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::EffrosShen { .. } => "effros-shen",
            Provenance::Uhf { .. } => "uhf",
            Provenance::Custom { .. } => "custom",
        }
    }
}

type BasisCell = OnceLock<Result<Arc<SubalgebraBasis>>>;

/// Levels 0..=depth, embeddings n → n+1, and the summable sequence β_n
/// (β_0 = 1 is a placeholder; the Dirac operator uses β_1..β_depth).
#[derive(Clone, Debug)]
pub struct Tower {
    levels: Vec<Level>,
    embeddings: Vec<Embedding>,
    provenance: Provenance,
    betas: Vec<BigRational>,
    custom_betas: bool,
    bases: Vec<Vec<BasisCell>>,
}

fn empty_cache(depth: usize) -> Vec<Vec<BasisCell>> {
    (0..=depth)
        .map(|n| (0..=n).map(|_| OnceLock::new()).collect())
        .collect()
}

fn to_usize(x: &BigInt, what: &str) -> Result<usize> {
    x.to_usize()
        .ok_or_else(|| Error::Overflow(format!("{what} = {x} does not fit in usize")))
}

/// Effros–Shen tower for θ: level n ≥ 1 is M_{q_n} ⊕ M_{q_{n−1}} with weights
/// (t(θ,n), 1 − t(θ,n)).
pub fn es_tower(x: &IrrationalHandle, depth: usize) -> Result<Tower> {
    if depth == 0 {
        return Err(Error::InvalidInput("tower depth must be >= 1".into()));
    }
    let digits = x.cf_expand(depth)?;
    let table = convergents(&digits)?;
    let mut levels = vec![Level {
        shape: BlockShape::scalars(),
        weights: TraceWeights::single(),
    }];
    let mut betas = vec![BigRational::one()];
    for n in 1..=depth {
        let shape = BlockShape::new(vec![to_usize(table.q(n), "q_n")?, to_usize(table.q(n - 1), "q_{n-1}")?])?;
        let t = t_weight_enclosure(x, &table, n)?.mid();
        let weights = TraceWeights::new(vec![to_f64(&t), to_f64(&(BigRational::one() - &t))])?;
        levels.push(Level { shape, weights });
        betas.push(es_beta(&table, n)?);
    }
    let mut embeddings = Vec::with_capacity(depth);
    for n in 0..depth {
        let r = digits[n] as usize;
        let layout = if n == 0 {
            vec![vec![(0, r)], vec![(0, 1)]]
        } else {
            vec![vec![(0, r), (1, 1)], vec![(0, 1)]]
        };
        embeddings.push(Embedding::new(
            levels[n].shape.clone(),
            levels[n + 1].shape.clone(),
            layout,
        )?);
    }
    Ok(Tower {
        levels,
        embeddings,
        provenance: Provenance::EffrosShen {
            label: x.label(),
            digits,
            table,
        },
        betas,
        custom_betas: false,
        bases: empty_cache(depth),
    })
}

/// UHF tower: level n is M_{⊠β(n)}, each embedding repeats the block β(n)+1 times.
pub fn uhf_tower(b: &BaireSequence, depth: usize) -> Result<Tower> {
    let entries = b.take(depth)?;
    let mut levels = Vec::with_capacity(depth + 1);
    let mut betas = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let size = to_usize(&box_product(b, n)?, "box product")?;
        levels.push(Level {
            shape: BlockShape::new(vec![size])?,
            weights: TraceWeights::single(),
        });
        betas.push(if n == 0 { BigRational::one() } else { uhf_gamma(b, n)? });
    }
    let embeddings = (0..depth)
        .map(|n| {
            Embedding::new(
                levels[n].shape.clone(),
                levels[n + 1].shape.clone(),
                vec![vec![(0, entries[n] as usize + 1)]],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tower {
        levels,
        embeddings,
        provenance: Provenance::Uhf { sequence: b.clone() },
        betas,
        custom_betas: false,
        bases: empty_cache(depth),
    })
}

impl Tower {
    /// Assembles a tower from explicit data. Embedding shapes must chain;
    /// trace compatibility is not enforced here (see [`verify_tower`]).
    pub fn from_parts(
        levels: Vec<Level>,
        embeddings: Vec<Embedding>,
        betas: Vec<BigRational>,
        provenance: Provenance,
    ) -> Result<Self> {
        if levels.is_empty() || embeddings.len() + 1 != levels.len() || betas.len() != levels.len() {
            return Err(Error::InvalidInput(format!(
                "{} levels need {} embeddings and betas, got {} and {}",
                levels.len(),
                levels.len().saturating_sub(1),
                embeddings.len(),
                betas.len()
            )));
        }
        for (n, e) in embeddings.iter().enumerate() {
            if e.source() != &levels[n].shape || e.target() != &levels[n + 1].shape {
                return Err(Error::shape(levels[n + 1].shape.dims(), e.target().dims()));
            }
        }
        for l in &levels {
            if l.weights.len() != l.shape.num_blocks() {
                return Err(Error::shape(l.shape.dims(), &[l.weights.len()]));
            }
        }
        if betas.iter().any(|b| b <= &BigRational::from_integer(0.into())) {
            return Err(Error::InvalidInput("betas must be positive".into()));
        }
        let depth = levels.len() - 1;
        Ok(Tower {
            levels,
            embeddings,
            provenance,
            betas,
            custom_betas: false,
            bases: empty_cache(depth),
        })
    }

    /// The same tower with a different summable sequence (β_1..β_depth).
    pub fn with_betas(&self, betas: Vec<BigRational>) -> Result<Self> {
        if betas.len() != self.depth() {
            return Err(Error::InvalidInput(format!(
                "expected {} betas, got {}",
                self.depth(),
                betas.len()
            )));
        }
        if betas.iter().any(|b| b <= &BigRational::from_integer(0.into())) {
            return Err(Error::InvalidInput("betas must be positive".into()));
        }
        let mut t = self.clone();
        t.betas = std::iter::once(BigRational::one()).chain(betas).collect();
        t.custom_betas = true;
        Ok(t)
    }

    /// The same tower with the weights of one level replaced; caches are reset.
    pub fn with_level_weights(&self, n: usize, weights: TraceWeights) -> Result<Self> {
        let mut levels = self.levels.clone();
        levels
            .get_mut(n)
            .ok_or(Error::LevelOutOfRange {
                level: n,
                depth: self.depth(),
            })?
            .weights = weights;
        let mut t = Tower::from_parts(
            levels,
            self.embeddings.clone(),
            self.betas.clone(),
            self.provenance.clone(),
        )?;
        t.custom_betas = self.custom_betas;
        Ok(t)
    }

    /// The first `depth` levels of this tower.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        self.check_level(depth)?;
        let mut t = Tower::from_parts(
            self.levels[..=depth].to_vec(),
            self.embeddings[..depth].to_vec(),
            self.betas[..=depth].to_vec(),
            self.provenance.clone(),
        )?;
        t.custom_betas = self.custom_betas;
        Ok(t)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub(crate) fn check_level(&self, n: usize) -> Result<()> {
        if n > self.depth() {
            return Err(Error::LevelOutOfRange {
                level: n,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    pub fn level(&self, n: usize) -> Result<&Level> {
        self.check_level(n)?;
        Ok(&self.levels[n])
    }

    pub fn shape(&self, n: usize) -> Result<&BlockShape> {
        Ok(&self.level(n)?.shape)
    }

    pub fn weights(&self, n: usize) -> Result<&TraceWeights> {
        Ok(&self.level(n)?.weights)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// The embedding ℬ_n → ℬ_{n+1}.
    pub fn embedding(&self, n: usize) -> Result<&Embedding> {
        self.embeddings.get(n).ok_or(Error::LevelOutOfRange {
            level: n + 1,
            depth: self.depth(),
        })
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn beta(&self, n: usize) -> Result<&BigRational> {
        self.check_level(n)?;
        Ok(&self.betas[n])
    }

    pub fn betas(&self) -> &[BigRational] {
        &self.betas
    }

    pub fn custom_betas(&self) -> bool {
        self.custom_betas
    }

    pub fn embed(&self, n: usize, a: &AlgebraElement) -> Result<AlgebraElement> {
        self.embedding(n)?.apply(a)
    }

    /// Placements of each level-k block inside level n (composition of layouts).
    pub fn placements(&self, k: usize, n: usize) -> Result<Vec<Vec<Placement>>> {
        self.check_level(n)?;
        if k > n {
            return Err(Error::InvalidInput(format!("sublevel {k} above level {n}")));
        }
        let mut current: Vec<Vec<Placement>> = (0..self.levels[k].shape.num_blocks()).map(|s| vec![(s, 0)]).collect();
        for m in k..n {
            let step = self.embeddings[m].placements();
            current = current
                .into_iter()
                .map(|copies| {
                    copies
                        .into_iter()
                        .flat_map(|(b, o1)| step[b].iter().map(move |&(j, o2)| (j, o2 + o1)))
                        .collect()
                })
                .collect();
        }
        Ok(current)
    }

    /// α_{to−1} ∘ … ∘ α_{from}; identity when `from == to`.
    pub fn embed_through(&self, from: usize, to: usize, a: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_level(to)?;
        if from > to {
            return Err(Error::InvalidInput(format!(
                "cannot embed level {from} into lower level {to}"
            )));
        }
        if a.shape() != &self.levels[from].shape {
            return Err(Error::shape(self.levels[from].shape.dims(), a.shape().dims()));
        }
        if from == to {
            return Ok(a.clone());
        }
        Ok(place(&self.levels[to].shape, &self.placements(from, to)?, a))
    }

    /// Orthonormal basis of α_{k→n}(ℬ_k) in (ℬ_n, τ_n), built once and cached.
    pub fn basis(&self, n: usize, k: usize) -> Result<Arc<SubalgebraBasis>> {
        self.check_level(n)?;
        if k > n {
            return Err(Error::InvalidInput(format!("sublevel {k} above level {n}")));
        }
        self.bases[n][k]
            .get_or_init(|| SubalgebraBasis::build(self, n, k).map(Arc::new))
            .clone()
    }

    /// Deterministic JSON descriptor.
    pub fn descriptor(&self) -> Value {
        let mut provenance = json!({ "kind": self.provenance.kind(), "parameter": self.provenance.label() });
        match &self.provenance {
            Provenance::EffrosShen { digits, .. } => provenance["digits"] = json!(digits),
            Provenance::Uhf { sequence } => {
                provenance["digits"] = json!(sequence.take(self.depth()).unwrap_or_default())
            }
            Provenance::Custom { .. } => {}
        }
        let levels: Vec<Value> = self
            .levels
            .iter()
            .enumerate()
            .map(|(n, l)| {
                json!({
                    "level": n,
                    "shape": l.shape.dims(),
                    "weights": l.weights.weights(),
                    "beta": self.betas[n].to_string(),
                })
            })
            .collect();
        let embeddings: Vec<Value> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(n, e)| json!({ "from": n, "to": n + 1, "layout": e.layout() }))
            .collect();
        json!({
            "provenance": provenance,
            "depth": self.depth(),
            "custom_betas": self.custom_betas,
            "levels": levels,
            "embeddings": embeddings,
        })
    }
}

/// One line of a [`TowerReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    /// The embedding n → n+1 (or level n for level-local checks).
    pub level: usize,
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    /// True when the check was not run because the level is too large.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TowerReport {
    pub checks: Vec<Check>,
}

impl TowerReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| !c.skipped)
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }
}

pub const VERIFY_TOLERANCE: f64 = 1e-10;

/// Levels whose linear dimension exceeds this are not materialized by
/// [`verify_tower`]; their checks are recorded as skipped.
pub const VERIFY_DIM_LIMIT: usize = 1 << 16;

/// Checks unitality, multiplicativity and *-preservation on matrix units and
/// random pairs, trace compatibility on the full matrix-unit basis, and the
/// shape recurrences.
pub fn verify_tower(t: &Tower) -> TowerReport {
    let mut report = TowerReport::default();
    let mut push = |level, name, residual: f64, skipped| {
        report.checks.push(Check {
            level,
            name,
            passed: skipped || residual <= VERIFY_TOLERANCE,
            residual,
            skipped,
        })
    };
    let l0 = &t.levels[0];
    let scalar_ok = l0.shape.dims() == [1] && l0.weights.weights() == [1.0];
    push(0, "level-0-scalars", if scalar_ok { 0.0 } else { 1.0 }, false);
    for (n, l) in t.levels.iter().enumerate() {
        let sum: f64 = l.weights.weights().iter().sum();
        push(
            n,
            "weights-normalized",
            (sum - 1.0).abs().max(if l.weights.weights().iter().all(|w| *w > 0.0) {
                0.0
            } else {
                1.0
            }),
            false,
        );
    }
    for (n, e) in t.embeddings.iter().enumerate() {
        let too_big = e
            .target()
            .dims()
            .iter()
            .any(|&d| d.checked_mul(d).is_none_or(|x| x > VERIFY_DIM_LIMIT));
        if too_big {
            for name in ["unital", "multiplicative", "adjoint", "trace-compatible"] {
                push(n, name, 0.0, true);
            }
        } else {
            let r = embedding_residuals(t, n, e);
            push(n, "unital", r.unital, false);
            push(n, "multiplicative", r.multiplicative, false);
            push(n, "adjoint", r.adjoint, false);
            push(n, "trace-compatible", r.trace, false);
        }
        push(n, "shape-recurrence", shape_recurrence(t, n), false);
    }
    report
}

struct Residuals {
    unital: f64,
    multiplicative: f64,
    adjoint: f64,
    trace: f64,
}

fn embedding_residuals(t: &Tower, n: usize, e: &Embedding) -> Residuals {
    let src = e.source();
    let (w_src, w_tgt) = (&t.levels[n].weights, &t.levels[n + 1].weights);
    let one = AlgebraElement::identity(src);
    let emb = |a: &AlgebraElement| e.apply(a).expect("source shape checked");
    let unital = emb(&one)
        .max_abs_diff(&AlgebraElement::identity(e.target()))
        .unwrap_or(f64::INFINITY);

    let mut multiplicative: f64 = 0.0;
    let mut adjoint: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for (k, &d) in src.dims().iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                let eij = AlgebraElement::matrix_unit(src, k, i, j).expect("in range");
                let eji = AlgebraElement::matrix_unit(src, k, j, i).expect("in range");
                let eii = AlgebraElement::matrix_unit(src, k, i, i).expect("in range");
                let (aij, aji) = (emb(&eij), emb(&eji));
                let prod = aij.mul(&aji).expect("same shape");
                multiplicative = multiplicative.max(prod.max_abs_diff(&emb(&eii)).unwrap_or(f64::INFINITY));
                adjoint = adjoint.max(aij.adjoint().max_abs_diff(&aji).unwrap_or(f64::INFINITY));
                let lhs = trace_state(w_tgt, &aij).unwrap_or(Complex64::new(f64::INFINITY, 0.0));
                let rhs = trace_state(w_src, &eij).unwrap_or(Complex64::new(f64::INFINITY, 0.0));
                trace = trace.max((lhs - rhs).norm());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    for _ in 0..4 {
        let a = AlgebraElement::random(src, &mut rng);
        let b = AlgebraElement::random(src, &mut rng);
        let lhs = emb(&a.mul(&b).expect("same shape"));
        let rhs = emb(&a).mul(&emb(&b)).expect("same shape");
        let scale = 1.0
            + lhs
                .blocks()
                .iter()
                .flat_map(|m| m.iter())
                .map(|z| z.norm())
                .fold(0.0, f64::max);
        multiplicative = multiplicative.max(lhs.max_abs_diff(&rhs).unwrap_or(f64::INFINITY) / scale);
    }
    Residuals {
        unital,
        multiplicative,
        adjoint,
        trace,
    }
}

fn shape_recurrence(t: &Tower, n: usize) -> f64 {
    let (s, s1) = (t.levels[n].shape.dims(), t.levels[n + 1].shape.dims());
    let ok = match &t.provenance {
        Provenance::EffrosShen { digits, table, .. } => {
            let r = digits[n] as usize;
            let q = |m: usize| table.q(m).to_usize();
            let q_prev = |m: usize| table.q_prev(m).to_usize();
            let recurrence = n == 0 || q(n + 1) == Some(r * q(n).unwrap_or(0) + q_prev(n).unwrap_or(0));
            recurrence
                && Some(s1[0]) == q(n + 1)
                && Some(s1[1]) == q(n)
                && (n == 0 || (Some(s[0]) == q(n) && Some(s[1]) == q_prev(n)))
        }
        Provenance::Uhf { sequence } => sequence
            .get(n)
            .is_some_and(|b| s.len() == 1 && s1.len() == 1 && s1[0] == s[0] * (b as usize + 1)),
        Provenance::Custom { .. } => true,
    };
    if ok {
        0.0
    } else {
        1.0
    }
}
