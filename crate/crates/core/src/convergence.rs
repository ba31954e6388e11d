//! Convergence experiments over families of parameters, and certificates that
//! bound the distance between two towers' limits by tail sums.
//!
//! Tail summands are rigorous (exact rationals plus a proven remainder). The
//! finite-level middle term is only ever a sampled diagnostic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cfrac::{
    baire_distance, box_product, cf_agreement_depth, convergents, es_beta, es_remainder_bound, t_weight_enclosure,
    tail_bound, to_f64, uhf_exact_tail, uhf_gamma, uhf_remainder_bound, BaireSequence, BetaSource, ConvergentTable,
    Digit, DigitStream, IrrationalHandle, TailBound,
};
use crate::error::{Error, Result};
use crate::fdca::{AlgebraElement, BlockShape, TraceWeights};
use crate::spectral::{lip_seminorm, LipOptions};
use crate::tower::{es_tower, uhf_tower, Provenance, Tower};

/// The parameter of a tower: θ for Effros–Shen, β for UHF.
#[derive(Clone, Debug, PartialEq)]
pub enum ScanParameter {
    EffrosShen(IrrationalHandle),
    Uhf(BaireSequence),
}

impl ScanParameter {
    pub fn label(&self) -> String {
        match self {
            ScanParameter::EffrosShen(h) => h.label(),
            ScanParameter::Uhf(b) => b.to_string(),
        }
    }

    pub fn tower(&self, depth: usize) -> Result<Tower> {
        match self {
            ScanParameter::EffrosShen(h) => es_tower(h, depth),
            ScanParameter::Uhf(b) => uhf_tower(b, depth),
        }
    }
}

/// Keep the first j digits of the limit, then repeat `suffix` forever.
pub fn approximant_family(
    limit: &ScanParameter,
    js: impl IntoIterator<Item = usize>,
    suffix: &[Digit],
) -> Result<Vec<(usize, ScanParameter)>> {
    js.into_iter()
        .map(|j| {
            let p = match limit {
                ScanParameter::EffrosShen(h) => {
                    let prefix = if j == 0 { Vec::new() } else { h.cf_expand(j)? };
                    ScanParameter::EffrosShen(IrrationalHandle::Digits(DigitStream::periodic(
                        prefix,
                        suffix.to_vec(),
                    )?))
                }
                ScanParameter::Uhf(b) => ScanParameter::Uhf(b.with_suffix(j, suffix)?),
            };
            Ok((j, p))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanStep {
    pub index: usize,
    pub label: String,
    pub value: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub quantity: &'static str,
    pub level: usize,
    pub limit_label: String,
    pub limit_value: f64,
    pub steps: Vec<ScanStep>,
    /// Smallest step index from which the gaps never increase.
    pub monotone_from: Option<usize>,
    /// max gap / (weight-vector gap) over steps with a weight gap above 1e−12.
    pub empirical_constant: Option<f64>,
}

impl ScanResult {
    fn new(
        quantity: &'static str,
        level: usize,
        limit: &ScanParameter,
        limit_value: f64,
        steps: Vec<ScanStep>,
    ) -> Self {
        let mut monotone_from = steps.last().map(|s| s.index);
        for w in steps.windows(2).rev() {
            if w[1].gap <= w[0].gap {
                monotone_from = Some(w[0].index);
            } else {
                break;
            }
        }
        ScanResult {
            quantity,
            level,
            limit_label: limit.label(),
            limit_value,
            steps,
            monotone_from,
            empirical_constant: None,
        }
    }

    /// Gaps never increase over steps with index ≥ `from`.
    pub fn nonincreasing_from(&self, from: usize) -> bool {
        self.monotone_from.is_none_or(|m| m <= from)
            || self
                .steps
                .windows(2)
                .filter(|w| w[0].index >= from)
                .all(|w| w[1].gap <= w[0].gap)
    }

    pub fn gap_at(&self, index: usize) -> Option<f64> {
        self.steps.iter().find(|s| s.index == index).map(|s| s.gap)
    }
}

fn level_dims(p: &ScanParameter, n: usize) -> Result<Vec<BigInt>> {
    match p {
        ScanParameter::EffrosShen(_) if n == 0 => Ok(vec![BigInt::from(1)]),
        ScanParameter::EffrosShen(h) => {
            let table = convergents(&h.cf_expand(n)?)?;
            Ok(vec![table.q(n).clone(), table.q(n - 1).clone()])
        }
        ScanParameter::Uhf(b) => Ok(vec![box_product(b, n)?]),
    }
}

/// Whether `p` has the same level-n shape as `limit`, i.e. whether it can
/// take part in a scan at that level.
pub fn same_level_shape(limit: &ScanParameter, p: &ScanParameter, level: usize) -> Result<bool> {
    Ok(level_dims(limit, level)? == level_dims(p, level)?)
}

/// Exact level-n weight data: shape and weight vector as rationals.
fn exact_level(p: &ScanParameter, n: usize) -> Result<(Vec<BigInt>, Vec<BigRational>)> {
    let dims = level_dims(p, n)?;
    match p {
        ScanParameter::EffrosShen(h) if n > 0 => {
            let table = convergents(&h.cf_expand(n)?)?;
            let t = t_weight_enclosure(h, &table, n)?.mid();
            let one = BigRational::from_integer(1.into());
            Ok((dims, vec![t.clone(), one - t]))
        }
        _ => Ok((dims, vec![BigRational::from_integer(1.into())])),
    }
}

fn exact_sqrt_gap(a: &BigRational, b: &BigRational) -> f64 {
    // |√a − √b| = |a − b| / (√a + √b), free of cancellation.
    let diff = to_f64(&(a - b).abs());
    if diff == 0.0 {
        return 0.0;
    }
    diff / (to_f64(a).sqrt() + to_f64(b).sqrt())
}

fn squared_sharp_constant(dims: &[BigInt], weights: &[BigRational]) -> BigRational {
    dims.iter()
        .zip(weights)
        .map(|(d, w)| BigRational::from_integer(d.clone()) / w)
        .max()
        .expect("at least one block")
}

fn check_same_shape(limit: &[BigInt], other: &[BigInt]) -> Result<()> {
    if limit != other {
        let conv = |v: &[BigInt]| {
            v.iter()
                .map(|x| num_traits::ToPrimitive::to_usize(x).unwrap_or(usize::MAX))
                .collect::<Vec<_>>()
        };
        return Err(Error::shape(&conv(limit), &conv(other)));
    }
    Ok(())
}

/// c_N of each approximant against c_N of the limit; gaps from exact weights.
pub fn constants_convergence_scan(
    limit: &ScanParameter,
    approximants: &[(usize, ScanParameter)],
    level: usize,
) -> Result<ScanResult> {
    let (dims, weights) = exact_level(limit, level)?;
    let c2 = squared_sharp_constant(&dims, &weights);
    let mut steps = Vec::with_capacity(approximants.len());
    for (j, p) in approximants {
        let (d, w) = exact_level(p, level)?;
        check_same_shape(&dims, &d)?;
        let cj2 = squared_sharp_constant(&d, &w);
        steps.push(ScanStep {
            index: *j,
            label: p.label(),
            value: to_f64(&cj2).sqrt(),
            gap: exact_sqrt_gap(&cj2, &c2),
        });
    }
    Ok(ScanResult::new(
        "sharp-constant",
        level,
        limit,
        to_f64(&c2).sqrt(),
        steps,
    ))
}

fn max_weight_gap(a: &Tower, b: &Tower, level: usize) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for n in 0..=level {
        for (x, y) in a.weights(n)?.weights().iter().zip(b.weights(n)?.weights()) {
            gap = gap.max((x - y).abs());
        }
    }
    Ok(gap)
}

/// L(a) at level m for each approximant against the limit.
pub fn lip_convergence_scan(
    limit: &ScanParameter,
    approximants: &[(usize, ScanParameter)],
    level: usize,
    a: &AlgebraElement,
    opts: &LipOptions,
) -> Result<ScanResult> {
    let lt = limit.tower(level)?;
    let limit_value = lip_seminorm(&lt, level, a, opts)?.value;
    let mut steps = Vec::with_capacity(approximants.len());
    let mut constant: Option<f64> = None;
    for (j, p) in approximants {
        let t = p.tower(level)?;
        if t.shape(level)? != lt.shape(level)? {
            return Err(Error::shape(lt.shape(level)?.dims(), t.shape(level)?.dims()));
        }
        let value = lip_seminorm(&t, level, a, opts)?.value;
        let gap = (value - limit_value).abs();
        let wg = max_weight_gap(&t, &lt, level)?;
        if wg > 1e-12 {
            constant = Some(constant.unwrap_or(0.0).max(gap / wg));
        }
        steps.push(ScanStep {
            index: *j,
            label: p.label(),
            value,
            gap,
        });
    }
    let mut r = ScanResult::new("lip-seminorm", level, limit, limit_value, steps);
    r.empirical_constant = constant;
    Ok(r)
}

fn check_weights(shape: &BlockShape, w: &TraceWeights) -> Result<()> {
    if w.len() != shape.num_blocks() {
        return Err(Error::shape(shape.dims(), &[w.len()]));
    }
    Ok(())
}

/// max{ max_k |1 − √(μ∞_k/μn_k)|·√(d_k/μ∞_k), max_k |1 − √(μn_k/μ∞_k)|·√(d_k/μn_k) }:
/// a bound on the Hausdorff distance, in operator norm, between the τ-unit
/// balls of the two weightings.
pub fn ball_hausdorff_bound(shape: &BlockShape, w_n: &TraceWeights, w_inf: &TraceWeights) -> Result<f64> {
    check_weights(shape, w_n)?;
    check_weights(shape, w_inf)?;
    let mut bound: f64 = 0.0;
    for ((&d, &mn), &mi) in shape.dims().iter().zip(w_n.weights()).zip(w_inf.weights()) {
        let d = d as f64;
        let first = (1.0 - (mi / mn).sqrt()).abs() * (d / mi).sqrt();
        let second = (1.0 - (mn / mi).sqrt()).abs() * (d / mn).sqrt();
        bound = bound.max(first).max(second);
    }
    Ok(bound)
}

/// Sampled two-sided estimate of the same Hausdorff distance. Each sample a on
/// one τ-unit sphere is matched with its blockwise rescaling onto the other
/// ball, a_k ↦ √(μ_k/μ′_k)·a_k, and ‖a − rescaled(a)‖ is recorded; half the
/// samples are rank-one in a single block, which is where the bound is attained.
pub fn ball_hausdorff_sampled(
    shape: &BlockShape,
    w1: &TraceWeights,
    w2: &TraceWeights,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_weights(shape, w1)?;
    check_weights(shape, w2)?;
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for (from, to) in [(w1, w2), (w2, w1)] {
        for i in 0..samples {
            let a = if i % 2 == 0 {
                AlgebraElement::random(shape, &mut rng)
            } else {
                rank_one_in_block(shape, &mut rng)
            };
            let norm = crate::fdca::gns_norm(from, &a)?;
            if norm == 0.0 {
                continue;
            }
            // ‖a − s·a‖ = max_k |1 − s_k|·‖a_k‖ for the block scales s_k.
            let mut dist: f64 = 0.0;
            for (k, block) in a.blocks().iter().enumerate() {
                let s = (from.weights()[k] / to.weights()[k]).sqrt();
                dist = dist.max((1.0 - s).abs() * crate::linalg::sigma_max(block) / norm);
            }
            best = best.max(dist);
        }
    }
    Ok(best)
}

fn rank_one_in_block(shape: &BlockShape, rng: &mut ChaCha8Rng) -> AlgebraElement {
    use rand::Rng;
    let k = rng.gen_range(0..shape.num_blocks());
    let d = shape.dims()[k];
    let u = AlgebraElement::random(&BlockShape::new(vec![d]).expect("d >= 1"), rng);
    let col = u.block(0).column(0).into_owned();
    let row = u.block(0).column(d.saturating_sub(1)).adjoint();
    let mut a = AlgebraElement::zeros(shape);
    *a.block_mut(k) = col * row;
    a
}

/// Weight-vector Hausdorff bound at a level along a parameter family.
pub fn ball_bound_scan(
    limit: &ScanParameter,
    approximants: &[(usize, ScanParameter)],
    level: usize,
) -> Result<ScanResult> {
    let lt = limit.tower(level)?;
    let shape = lt.shape(level)?;
    let w_inf = lt.weights(level)?;
    let mut steps = Vec::with_capacity(approximants.len());
    for (j, p) in approximants {
        let t = p.tower(level)?;
        if t.shape(level)? != shape {
            return Err(Error::shape(shape.dims(), t.shape(level)?.dims()));
        }
        let b = ball_hausdorff_bound(shape, t.weights(level)?, w_inf)?;
        steps.push(ScanStep {
            index: *j,
            label: p.label(),
            value: b,
            gap: b,
        });
    }
    Ok(ScanResult::new("ball-hausdorff-bound", level, limit, 0.0, steps))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupTransferStep {
    pub index: usize,
    /// |sup_{C_n} f_n − sup_C f|.
    pub sup_gap: f64,
    /// Hausdorff distance between C_n and C.
    pub hausdorff: f64,
    /// max over C_n of |f_n − f|.
    pub uniform_gap: f64,
    /// max |f(x) − f(y)| over x ∈ C_n, y ∈ C with d(x,y) ≤ hausdorff.
    pub modulus: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupTransferReport {
    pub steps: Vec<SupTransferStep>,
}

impl SupTransferReport {
    pub fn all_hold(&self) -> bool {
        self.steps.iter().all(|s| s.holds)
    }
}

/// Checks |sup_{C_n} f_n − sup_C f| ≤ ‖f_n − f‖_{C_n} + ω_f(d_H(C_n, C)) on
/// finite clouds, with the modulus ω_f taken exactly over the sampled pairs.
pub fn sup_transfer_check<P, D, F, G>(
    limit: &[P],
    clouds: &[Vec<P>],
    dist: D,
    f: F,
    f_n: G,
) -> Result<SupTransferReport>
where
    D: Fn(&P, &P) -> f64,
    F: Fn(&P) -> f64,
    G: Fn(usize, &P) -> f64,
{
    if limit.is_empty() {
        return Err(Error::EmptyCloud("limit cloud".into()));
    }
    if let Some(i) = clouds.iter().position(|c| c.is_empty()) {
        return Err(Error::EmptyCloud(format!("cloud {i}")));
    }
    let sup = |vals: &mut dyn Iterator<Item = f64>| vals.fold(f64::NEG_INFINITY, f64::max);
    let limit_sup = sup(&mut limit.iter().map(&f));
    let mut steps = Vec::with_capacity(clouds.len());
    for (i, cloud) in clouds.iter().enumerate() {
        let cloud_sup = sup(&mut cloud.iter().map(|x| f_n(i, x)));
        let uniform_gap = cloud.iter().map(|x| (f_n(i, x) - f(x)).abs()).fold(0.0, f64::max);
        let d: Vec<Vec<f64>> = cloud
            .iter()
            .map(|x| limit.iter().map(|y| dist(x, y)).collect())
            .collect();
        let one_side = d
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let other_side = (0..limit.len())
            .map(|j| d.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let hausdorff = one_side.max(other_side);
        let mut modulus: f64 = 0.0;
        for (x, row) in cloud.iter().zip(&d) {
            for (y, &dxy) in limit.iter().zip(row) {
                if dxy <= hausdorff {
                    modulus = modulus.max((f(x) - f(y)).abs());
                }
            }
        }
        let sup_gap = (cloud_sup - limit_sup).abs();
        let slack = 1e-12 * (1.0 + limit_sup.abs());
        steps.push(SupTransferStep {
            index: i,
            sup_gap,
            hausdorff,
            uniform_gap,
            modulus,
            holds: sup_gap <= uniform_gap + modulus + slack,
        });
    }
    Ok(SupTransferReport { steps })
}

/// Rigorous bound Σ_{k≥n} β_k for the tower's own β sequence: exact partial
/// sums through the tower depth plus a proven remainder, or the exact closed
/// form for eventually periodic UHF sequences.
pub fn propinquity_tail_bound(t: &Tower, n: usize) -> Result<TailBound> {
    if t.custom_betas() {
        return Err(Error::InvalidInput(
            "no tail bound is available for a custom beta sequence".into(),
        ));
    }
    match t.provenance() {
        Provenance::EffrosShen { table, .. } => tail_bound(BetaSource::EffrosShen(table), n, t.depth()),
        Provenance::Uhf { sequence } => {
            if n == 0 {
                return Err(Error::InvalidInput("tail bounds start at n >= 1".into()));
            }
            match uhf_exact_tail(sequence, n) {
                Some(exact) => Ok(TailBound {
                    n,
                    depth: t.depth(),
                    partial: exact,
                    remainder: BigRational::zero(),
                }),
                None => tail_bound(BetaSource::Uhf(sequence), n, t.depth()),
            }
        }
        Provenance::Custom { .. } => Err(Error::InvalidInput(
            "no tail bound is available for a custom tower".into(),
        )),
    }
}

/// Sampled comparison of two Lip-norms on the same level. Not a certified bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distortion {
    pub level: usize,
    pub samples: usize,
    /// max |L1(a) − L2(a)| over samples rescaled to L1(a) = 1.
    pub max_abs: f64,
    pub mean_abs: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub certified: bool,
}

pub fn seminorm_distortion(t1: &Tower, t2: &Tower, n: usize, samples: usize, seed: u64) -> Result<Distortion> {
    let shape = t1.shape(n)?;
    if shape != t2.shape(n)? {
        return Err(Error::shape(shape.dims(), t2.shape(n)?.dims()));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    let opts = LipOptions {
        seed,
        ..LipOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_abs, mut sum, mut rmin, mut rmax) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut used = 0;
    for _ in 0..samples {
        let a = AlgebraElement::random_self_adjoint(shape, &mut rng);
        let l = lip_seminorm(t1, n, &a, &opts)?.value;
        if l == 0.0 {
            continue;
        }
        let a = a.scale_real(1.0 / l);
        let l1 = lip_seminorm(t1, n, &a, &opts)?.value;
        let l2 = lip_seminorm(t2, n, &a, &opts)?.value;
        let diff = (l1 - l2).abs();
        max_abs = max_abs.max(diff);
        sum += diff;
        rmin = rmin.min(l2 / l1);
        rmax = rmax.max(l2 / l1);
        used += 1;
    }
    if used == 0 {
        // Level 0: every element is scalar and both seminorms vanish.
        return Ok(Distortion {
            level: n,
            samples: 0,
            max_abs: 0.0,
            mean_abs: 0.0,
            ratio_min: 1.0,
            ratio_max: 1.0,
            certified: false,
        });
    }
    Ok(Distortion {
        level: n,
        samples: used,
        max_abs,
        mean_abs: sum / used as f64,
        ratio_min: rmin,
        ratio_max: rmax,
        certified: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateOptions {
    /// Digits (or Baire entries) used for exact tail sums.
    pub depth: usize,
    pub samples: usize,
    pub seed: u64,
    /// The middle diagnostic is skipped above this GNS dimension.
    pub middle_dim_limit: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            depth: 40,
            samples: 16,
            seed: 0x5eed,
            middle_dim_limit: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSummary {
    pub n: usize,
    pub depth: usize,
    pub partial: String,
    pub remainder: String,
    pub total: f64,
}

impl From<&TailBound> for TailSummary {
    fn from(t: &TailBound) -> Self {
        TailSummary {
            n: t.n,
            depth: t.depth,
            partial: t.partial.to_string(),
            remainder: t.remainder.to_string(),
            total: t.total_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub kind: &'static str,
    pub parameters: [String; 2],
    pub epsilon: f64,
    /// Smallest n with Σ_{k≥n} (dominating β)_k < ε/3.
    pub n1: usize,
    /// Number of leading digits (or Baire entries) on which both agree.
    pub n2: usize,
    pub depth: usize,
    pub dominating_tail: TailSummary,
    pub tails: [TailSummary; 2],
    /// Sum of the two rigorous tails and the budget 2ε/3 it must stay below.
    pub tails_total: f64,
    pub tail_budget: f64,
    pub middle: Option<Distortion>,
    pub middle_note: String,
    pub baire_distance: Option<f64>,
    pub status: &'static str,
}

fn n1_search(
    dominating: &[BigRational],
    remainder: &BigRational,
    depth: usize,
    eps: f64,
) -> Result<(usize, BigRational)> {
    let third = BigRational::from_float(eps / 3.0).ok_or_else(|| Error::InvalidInput(format!("bad epsilon {eps}")))?;
    // dominating[k] holds β_k for k = 1..=depth (index 0 unused).
    let mut suffix = remainder.clone();
    let mut tails = vec![BigRational::zero(); depth + 2];
    tails[depth + 1] = suffix.clone();
    for k in (1..=depth).rev() {
        suffix += &dominating[k];
        tails[k] = suffix.clone();
    }
    (1..=depth)
        .find(|&n| tails[n] < third)
        .map(|n| (n, tails[n].clone()))
        .ok_or_else(|| {
            Error::PrecisionExhausted(format!(
                "no level n <= {depth} has dominating tail below epsilon/3 = {}",
                eps / 3.0
            ))
        })
}

fn middle_term(a: &Tower, b: &Tower, n1: usize, opts: &CertificateOptions) -> Result<(Option<Distortion>, String)> {
    let dim = a.shape(n1)?.linear_dim();
    if dim > opts.middle_dim_limit {
        return Ok((
            None,
            format!(
                "skipped: GNS dimension {dim} at level {n1} exceeds {}",
                opts.middle_dim_limit
            ),
        ));
    }
    let d = seminorm_distortion(a, b, n1, opts.samples, opts.seed)?;
    Ok((
        Some(d),
        "heuristic: sampled Lip-norm distortion at level n1, not a certified bound".to_string(),
    ))
}

impl Certificate {
    fn assemble(
        kind: &'static str,
        parameters: [String; 2],
        eps: f64,
        dominating: &TailBound,
        tails: [TailBound; 2],
    ) -> Self {
        Certificate {
            kind,
            parameters,
            epsilon: eps,
            n1: dominating.n,
            n2: 0,
            depth: dominating.depth,
            dominating_tail: dominating.into(),
            tails_total: tails[0].total_f64() + tails[1].total_f64(),
            tail_budget: 2.0 * eps / 3.0,
            tails: [(&tails[0]).into(), (&tails[1]).into()],
            middle: None,
            middle_note: String::new(),
            baire_distance: None,
            status: "rigorous-tails-only",
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

fn available_digits(h: &IrrationalHandle, depth: usize) -> usize {
    h.precision_budget().map_or(depth, |b| b.min(depth))
}

/// Tail-bound certificate for two Effros–Shen parameters.
pub fn es_certificate(
    a: &IrrationalHandle,
    b: &IrrationalHandle,
    eps: f64,
    opts: &CertificateOptions,
) -> Result<Certificate> {
    check_eps(eps)?;
    let depth = available_digits(a, opts.depth).min(available_digits(b, opts.depth));
    if depth == 0 {
        return Err(Error::PrecisionExhausted("no digits available".into()));
    }
    let (da, db) = (a.cf_expand(depth)?, b.cf_expand(depth)?);
    let (ta, tb): (ConvergentTable, ConvergentTable) = (convergents(&da)?, convergents(&db)?);
    let mut dominating = vec![BigRational::zero()];
    for k in 1..=depth {
        dominating.push(es_beta(&ta, k)?.max(es_beta(&tb, k)?));
    }
    let q_min = ta.q(depth).min(tb.q(depth)).clone();
    let q_prev_min = ta.q_prev(depth).min(tb.q_prev(depth));
    let remainder = es_remainder_bound(&q_min, &q_prev_min);
    let (n1, dom_total) = n1_search(&dominating, &remainder, depth, eps)?;
    let agreement = cf_agreement_depth(&da, &db);
    if agreement.depth < n1 {
        return Err(Error::AgreementTooShallow {
            agreement: agreement.depth,
            cutoff: n1,
        });
    }
    let tails = [
        tail_bound(BetaSource::EffrosShen(&ta), n1, depth)?,
        tail_bound(BetaSource::EffrosShen(&tb), n1, depth)?,
    ];
    let dominating_tail = TailBound {
        n: n1,
        depth,
        partial: &dom_total - &remainder,
        remainder,
    };
    let mut cert = Certificate::assemble("effros-shen", [a.label(), b.label()], eps, &dominating_tail, tails);
    cert.n2 = agreement.depth;
    (cert.middle, cert.middle_note) = middle_term(&es_tower(a, n1)?, &es_tower(b, n1)?, n1, opts)?;
    Ok(cert)
}

/// Tail-bound certificate for two UHF multiplicity sequences.
pub fn uhf_certificate(
    a: &BaireSequence,
    b: &BaireSequence,
    eps: f64,
    opts: &CertificateOptions,
) -> Result<Certificate> {
    check_eps(eps)?;
    let avail = |s: &BaireSequence| s.len().map_or(opts.depth, |l| l.min(opts.depth));
    let depth = avail(a).min(avail(b));
    if depth == 0 {
        return Err(Error::PrecisionExhausted("no Baire entries available".into()));
    }
    let mut dominating = vec![BigRational::zero()];
    for k in 1..=depth {
        dominating.push(uhf_gamma(a, k)?.max(uhf_gamma(b, k)?));
    }
    let box_min = box_product(a, depth)?.min(box_product(b, depth)?);
    let remainder = uhf_remainder_bound(&box_min);
    let (n1, dom_total) = n1_search(&dominating, &remainder, depth, eps)?;
    let dist = baire_distance(a, b);
    let n2 = dist.first_difference.unwrap_or(depth).min(depth);
    if n2 < n1 {
        return Err(Error::AgreementTooShallow {
            agreement: n2,
            cutoff: n1,
        });
    }
    let tails = [
        tail_bound(BetaSource::Uhf(a), n1, depth)?,
        tail_bound(BetaSource::Uhf(b), n1, depth)?,
    ];
    let dominating_tail = TailBound {
        n: n1,
        depth,
        partial: &dom_total - &remainder,
        remainder,
    };
    let mut cert = Certificate::assemble("uhf", [a.to_string(), b.to_string()], eps, &dominating_tail, tails);
    cert.n2 = n2;
    cert.baire_distance = Some(dist.value);
    (cert.middle, cert.middle_note) = middle_term(&uhf_tower(a, n1)?, &uhf_tower(b, n1)?, n1, opts)?;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> ScanParameter {
        ScanParameter::EffrosShen(IrrationalHandle::golden())
    }

    fn w(v: &[f64]) -> TraceWeights {
        TraceWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn family_prefixes() {
        let fam = approximant_family(&golden(), [3], &[2]).unwrap();
        match &fam[0].1 {
            ScanParameter::EffrosShen(h) => assert_eq!(h.cf_expand(6).unwrap(), vec![1, 1, 1, 2, 2, 2]),
            _ => unreachable!(),
        }
        let ones = ScanParameter::Uhf(BaireSequence::constant(1).unwrap());
        let fam = approximant_family(&ones, [10], &[2]).unwrap();
        match &fam[0].1 {
            ScanParameter::Uhf(b) => assert_eq!(
                baire_distance(b, &BaireSequence::constant(1).unwrap()).value,
                2f64.powi(-10)
            ),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constants_scan_golden() {
        let fam = approximant_family(&golden(), 1..=40, &[2]).unwrap();
        let r = constants_convergence_scan(&golden(), &fam[3..], 3).unwrap();
        assert!(r.gap_at(40).unwrap() < 1e-6);
        assert!(r.nonincreasing_from(10));
        let same = constants_convergence_scan(&golden(), &[(0, golden())], 3).unwrap();
        assert_eq!(same.steps[0].gap, 0.0);
        // j = 1 diverges at the second digit, before level 3.
        assert!(matches!(
            constants_convergence_scan(&golden(), &fam[..1], 3),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ball_bound_examples() {
        let s = BlockShape::new(vec![1, 1]).unwrap();
        assert_eq!(ball_hausdorff_bound(&s, &w(&[0.5, 0.5]), &w(&[0.5, 0.5])).unwrap(), 0.0);
        // Frozen from an independent evaluation of the displayed formula.
        let b = ball_hausdorff_bound(&s, &w(&[0.6, 0.4]), &w(&[0.5, 0.5])).unwrap();
        assert!((b - 0.166_925_267_7).abs() < 1e-9, "{b}");
        let sampled = ball_hausdorff_sampled(&s, &w(&[0.6, 0.4]), &w(&[0.5, 0.5]), 1000, 7).unwrap();
        assert!(sampled <= b + 1e-9);
        assert!(sampled > 0.9 * b);
        assert_eq!(
            ball_hausdorff_sampled(&s, &w(&[0.6, 0.4]), &w(&[0.6, 0.4]), 10, 1).unwrap(),
            0.0
        );
        let again = ball_hausdorff_sampled(&s, &w(&[0.6, 0.4]), &w(&[0.5, 0.5]), 1000, 7).unwrap();
        assert_eq!(sampled.to_bits(), again.to_bits());
    }

    #[test]
    fn sampled_never_exceeds_bound_on_matrix_blocks() {
        let s = BlockShape::new(vec![3, 2]).unwrap();
        for (a, b) in [([0.7, 0.3], [0.4, 0.6]), ([0.1, 0.9], [0.5, 0.5])] {
            let bound = ball_hausdorff_bound(&s, &w(&a), &w(&b)).unwrap();
            let sampled = ball_hausdorff_sampled(&s, &w(&a), &w(&b), 500, 3).unwrap();
            assert!(sampled <= bound + 1e-9, "{sampled} > {bound}");
        }
    }

    #[test]
    fn sup_transfer_examples() {
        let cloud: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let dist = |x: &f64, y: &f64| (x - y).abs();
        let f = |x: &f64| (3.0 * x).sin();
        let same = sup_transfer_check(&cloud, std::slice::from_ref(&cloud), dist, f, |_, x| f(x)).unwrap();
        assert_eq!(same.steps[0].sup_gap, 0.0);
        let clouds = vec![cloud.clone(); 5];
        let shifted = sup_transfer_check(&cloud, &clouds, dist, f, |i, x| f(x) + 1.0 / (i + 1) as f64).unwrap();
        for (i, s) in shifted.steps.iter().enumerate() {
            assert!((s.sup_gap - 1.0 / (i + 1) as f64).abs() < 1e-12);
        }
        // Perturbed clouds with a 2-Lipschitz function.
        let g = |x: &f64| 2.0 * (x - 0.3).abs();
        let perturbed: Vec<Vec<f64>> = (1..6)
            .map(|n| {
                cloud
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + 0.1 / n as f64 * ((i * 7 % 5) as f64 / 5.0))
                    .collect()
            })
            .collect();
        let r = sup_transfer_check(&cloud, &perturbed, dist, g, |n, x| g(x) + 0.01 / (n + 1) as f64).unwrap();
        assert!(r.all_hold());
        for s in &r.steps {
            assert!(s.sup_gap <= 2.0 * s.hausdorff + s.uniform_gap + 1e-12);
        }
        assert!(matches!(
            sup_transfer_check(&cloud, &[vec![]], dist, f, |_, x| f(x)),
            Err(Error::EmptyCloud(_))
        ));
    }

    #[test]
    fn tail_examples() {
        let u = uhf_tower(&BaireSequence::constant(1).unwrap(), 3).unwrap();
        let tb = propinquity_tail_bound(&u, 1).unwrap();
        assert_eq!(tb.total(), BigRational::new(1.into(), 3.into()));
        let g = es_tower(&IrrationalHandle::golden(), 30).unwrap();
        let t1 = propinquity_tail_bound(&g, 1).unwrap();
        assert!((t1.total_f64() - 0.824_515_157_4).abs() < 1e-9);
        let mut prev = t1.total();
        for n in 2..=30 {
            let t = propinquity_tail_bound(&g, n).unwrap().total();
            assert!(t <= prev);
            prev = t;
        }
        let custom = g
            .truncate(3)
            .unwrap()
            .with_betas(vec![BigRational::from_integer(1.into()); 3])
            .unwrap();
        assert!(propinquity_tail_bound(&custom, 1).is_err());
    }

    #[test]
    fn distortion_examples() {
        let t = es_tower(&IrrationalHandle::golden(), 3).unwrap();
        let same = seminorm_distortion(&t, &t, 3, 4, 1).unwrap();
        assert_eq!(same.max_abs, 0.0);
        let halved: Vec<BigRational> = (1..=3).map(|k| t.beta(k).unwrap() / BigInt::from(2)).collect();
        let doubled = t.with_betas(halved).unwrap();
        let d = seminorm_distortion(&t, &doubled, 3, 4, 1).unwrap();
        assert!((d.max_abs - 1.0).abs() < 1e-9 && (d.ratio_min - 2.0).abs() < 1e-9);
        let u = uhf_tower(&BaireSequence::constant(1).unwrap(), 3).unwrap();
        assert!(matches!(
            seminorm_distortion(&t, &u, 3, 2, 1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn golden_certificate() {
        let g = IrrationalHandle::golden();
        let near = IrrationalHandle::Digits(DigitStream::periodic(vec![1; 6], vec![2]).unwrap());
        let c = es_certificate(&g, &near, 0.5, &CertificateOptions::default()).unwrap();
        assert_eq!(c.n1, 3);
        assert_eq!(c.n2, 6);
        assert!(c.tails.iter().all(|t| t.total < 0.5 / 3.0));
        assert!(c.tails_total < c.tail_budget);
        assert!(c.middle.as_ref().unwrap().max_abs > 0.0);
        let same = es_certificate(&g, &g, 0.5, &CertificateOptions::default()).unwrap();
        assert_eq!(same.middle.unwrap().max_abs, 0.0);
        let far = IrrationalHandle::Digits(DigitStream::periodic(vec![1], vec![2]).unwrap());
        assert!(matches!(
            es_certificate(&g, &far, 0.5, &CertificateOptions::default()),
            Err(Error::AgreementTooShallow {
                agreement: 1,
                cutoff: 3
            })
        ));
        assert!(matches!(
            es_certificate(&g, &g, 1e-30, &CertificateOptions::default()),
            Err(Error::PrecisionExhausted(_))
        ));
    }

    #[test]
    fn certificate_tails_match_propinquity() {
        let g = IrrationalHandle::golden();
        let near = IrrationalHandle::Digits(DigitStream::periodic(vec![1; 8], vec![3]).unwrap());
        let opts = CertificateOptions::default();
        let c = es_certificate(&g, &near, 0.2, &opts).unwrap();
        for (h, tail) in [(&g, &c.tails[0]), (&near, &c.tails[1])] {
            let tb = propinquity_tail_bound(&es_tower(h, opts.depth).unwrap(), c.n1).unwrap();
            assert_eq!(TailSummary::from(&tb), *tail);
        }
    }

    #[test]
    fn uhf_certificate_records_distance() {
        let ones = BaireSequence::constant(1).unwrap();
        let late = ones.with_suffix(10, &[2]).unwrap();
        let c = uhf_certificate(&ones, &late, 0.1, &CertificateOptions::default()).unwrap();
        assert_eq!(c.baire_distance, Some(2f64.powi(-10)));
        assert_eq!(c.n2, 10);
        assert!(c.n1 <= 10 && c.tails_total < c.tail_budget);
    }
}
