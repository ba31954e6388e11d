//! Exact continued-fraction machinery.
//!
//! Convergents are big integers and every β, γ and tail sum is an exact
//! rational; values are converted to `f64` only when reported. Digit lists
//! exposed to callers start at r_1 (r_0 = 0 for θ ∈ (0,1)); Baire sequences are
//! indexed from 0.

mod baire;
mod handle;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub use baire::{baire_distance, box_product, uhf_exact_tail, uhf_gamma, BaireDistance, BaireSequence};
pub use handle::{
    parse_digit_pattern, parse_surd, DecimalLiteral, DigitStream, IrrationalHandle, QuadraticSurd, SurdDigits,
};

use crate::error::{Error, Result};

/// A single continued-fraction digit.
pub type Digit = u64;

/// Closed interval with exact rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl RationalInterval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi);
        RationalInterval { lo, hi }
    }

    pub fn ordered(a: BigRational, b: BigRational) -> Self {
        if a <= b {
            RationalInterval { lo: a, hi: b }
        } else {
            RationalInterval { lo: b, hi: a }
        }
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> BigRational {
        (&self.lo + &self.hi) / BigInt::from(2)
    }

    pub fn mid_f64(&self) -> f64 {
        to_f64(&self.mid())
    }

    pub fn radius_f64(&self) -> f64 {
        to_f64(&self.width()) / 2.0
    }
}

pub(crate) fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Exact convergents p_n/q_n for n = 0..=N.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergentTable {
    p: Vec<BigInt>,
    q: Vec<BigInt>,
}

impl ConvergentTable {
    /// Largest index N in the table.
    pub fn depth(&self) -> usize {
        self.q.len() - 1
    }

    pub fn p(&self, n: usize) -> &BigInt {
        &self.p[n]
    }

    pub fn q(&self, n: usize) -> &BigInt {
        &self.q[n]
    }

    /// p_{n−1}, with the convention p_{−1} = 1.
    pub fn p_prev(&self, n: usize) -> BigInt {
        if n == 0 {
            BigInt::one()
        } else {
            self.p[n - 1].clone()
        }
    }

    /// q_{n−1}, with the convention q_{−1} = 0.
    pub fn q_prev(&self, n: usize) -> BigInt {
        if n == 0 {
            BigInt::zero()
        } else {
            self.q[n - 1].clone()
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&BigInt, &BigInt)> {
        self.p.iter().zip(self.q.iter())
    }

    pub fn convergent(&self, n: usize) -> BigRational {
        BigRational::new(self.p[n].clone(), self.q[n].clone())
    }
}

/// Convergents of `[0; r_1, …, r_N]`.
pub fn convergents(digits: &[Digit]) -> Result<ConvergentTable> {
    if let Some(pos) = digits.iter().position(|&d| d == 0) {
        return Err(Error::InvalidDigit {
            position: pos + 1,
            digit: 0,
        });
    }
    let mut p = vec![BigInt::zero()];
    let mut q = vec![BigInt::one()];
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    for &r in digits {
        let r = BigInt::from(r);
        let n = p.len() - 1;
        let p_next = &r * &p[n] + &p_prev;
        let q_next = &r * &q[n] + &q_prev;
        p_prev = p[n].clone();
        q_prev = q[n].clone();
        p.push(p_next);
        q.push(q_next);
    }
    Ok(ConvergentTable { p, q })
}

/// Exact enclosure of the trace weight
/// t(θ,n) = (−1)^{n−1} q_n (θ q_{n−1} − p_{n−1}), certified to lie in (0,1).
pub fn t_weight_enclosure(x: &IrrationalHandle, table: &ConvergentTable, n: usize) -> Result<RationalInterval> {
    if n == 0 || n > table.depth() {
        return Err(Error::LevelOutOfRange {
            level: n,
            depth: table.depth(),
        });
    }
    let scale = table.q(n) * table.q(n - 1) + BigInt::one();
    let target = BigRational::new(BigInt::one(), (BigInt::one() << 96u32) * scale);
    let theta = x.theta_enclosure(n + 1, &target)?;
    let sign = if n % 2 == 1 { BigInt::one() } else { -BigInt::one() };
    let qn = BigRational::from_integer(table.q(n).clone());
    let qm = BigRational::from_integer(table.q(n - 1).clone());
    let pm = BigRational::from_integer(table.p(n - 1).clone());
    let s = BigRational::from_integer(sign);
    let eval = |th: &BigRational| &s * &qn * (th * &qm - &pm);
    let t = RationalInterval::ordered(eval(&theta.lo), eval(&theta.hi));
    if t.lo <= BigRational::zero() || t.hi >= BigRational::one() {
        return Err(Error::PrecisionExhausted(format!(
            "cannot certify t(θ,{n}) ∈ (0,1) for {x}: enclosure [{}, {}]",
            to_f64(&t.lo),
            to_f64(&t.hi)
        )));
    }
    Ok(t)
}

/// t(θ,n) as a float (midpoint of the certified enclosure).
pub fn t_weight(x: &IrrationalHandle, table: &ConvergentTable, n: usize) -> Result<f64> {
    Ok(t_weight_enclosure(x, table, n)?.mid_f64())
}

/// β^θ_n = 1/(q_n² + q_{n−1}²).
pub fn es_beta(table: &ConvergentTable, n: usize) -> Result<BigRational> {
    if n == 0 || n > table.depth() {
        return Err(Error::LevelOutOfRange {
            level: n,
            depth: table.depth(),
        });
    }
    let dim = table.q(n) * table.q(n) + table.q(n - 1) * table.q(n - 1);
    Ok(BigRational::new(BigInt::one(), dim))
}

/// Which summable sequence a tail bound is taken over.
#[derive(Clone, Copy, Debug)]
pub enum BetaSource<'a> {
    EffrosShen(&'a ConvergentTable),
    Uhf(&'a BaireSequence),
}

/// Σ_{k=n}^{depth} β_k exactly, plus a rigorous bound on Σ_{k>depth} β_k.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TailBound {
    pub n: usize,
    pub depth: usize,
    pub partial: BigRational,
    pub remainder: BigRational,
}

impl TailBound {
    pub fn total(&self) -> BigRational {
        &self.partial + &self.remainder
    }

    pub fn partial_f64(&self) -> f64 {
        to_f64(&self.partial)
    }

    pub fn remainder_f64(&self) -> f64 {
        to_f64(&self.remainder)
    }

    pub fn total_f64(&self) -> f64 {
        to_f64(&self.total())
    }
}

/// Bound on Σ_{k>D} 1/(q_k² + q_{k−1}²) from q_D, q_{D−1} alone, valid for
/// every continuation of the digits: q_{k+2} ≥ 2 q_k makes the terms shrink by
/// 1/4 every two steps, and the two leading terms are bounded by taking the
/// next digits equal to 1.
pub fn es_remainder_bound(q_d: &BigInt, q_dm1: &BigInt) -> BigRational {
    let q1 = q_d + q_dm1;
    let q2 = q_d * 2 + q_dm1;
    let b1 = BigRational::new(BigInt::one(), &q1 * &q1 + q_d * q_d);
    let b2 = BigRational::new(BigInt::one(), &q2 * &q2 + &q1 * &q1);
    (b1 + b2) * BigRational::new(BigInt::from(4), BigInt::from(3))
}

/// Bound on Σ_{k>D} 1/⊠(k)² using ⊠(k+1) ≥ 2·⊠(k).
pub fn uhf_remainder_bound(box_d: &BigInt) -> BigRational {
    BigRational::new(BigInt::one(), box_d * box_d * 3)
}

pub fn tail_bound(betas: BetaSource<'_>, n: usize, depth: usize) -> Result<TailBound> {
    if n == 0 {
        return Err(Error::InvalidInput("tail bounds start at n >= 1".into()));
    }
    let mut partial = BigRational::zero();
    let remainder = match betas {
        BetaSource::EffrosShen(table) => {
            if depth > table.depth() {
                return Err(Error::LevelOutOfRange {
                    level: depth,
                    depth: table.depth(),
                });
            }
            for k in n..=depth {
                partial += es_beta(table, k)?;
            }
            es_remainder_bound(table.q(depth), &table.q_prev(depth))
        }
        BetaSource::Uhf(seq) => {
            for k in n..=depth {
                partial += uhf_gamma(seq, k)?;
            }
            uhf_remainder_bound(&box_product(seq, depth)?)
        }
    };
    Ok(TailBound {
        n,
        depth,
        partial,
        remainder,
    })
}

/// Outcome of comparing two digit sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Agreement {
    /// Largest N with a_k = b_k for all k ≤ N.
    pub depth: usize,
    /// True when no disagreement was found before a sequence ran out.
    pub exhausted: bool,
}

/// Length of the common prefix of two digit lists (digits r_1, r_2, …).
pub fn cf_agreement_depth(a: &[Digit], b: &[Digit]) -> Agreement {
    let common = a.len().min(b.len());
    match (0..common).find(|&i| a[i] != b[i]) {
        Some(i) => Agreement {
            depth: i,
            exhausted: false,
        },
        None => Agreement {
            depth: common,
            exhausted: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn int(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(int(n), int(d))
    }

    #[test]
    fn fibonacci_denominators() {
        let t = convergents(&[1, 1, 1, 1, 1]).unwrap();
        let q: Vec<BigInt> = (0..=5).map(|n| t.q(n).clone()).collect();
        assert_eq!(q, [1, 1, 2, 3, 5, 8].map(int));
    }

    #[test]
    fn silver_convergents_by_hand() {
        let t = convergents(&[2, 2, 2]).unwrap();
        let rows: Vec<(BigInt, BigInt)> = t.rows().map(|(p, q)| (p.clone(), q.clone())).collect();
        assert_eq!(
            rows,
            vec![(int(0), int(1)), (int(1), int(2)), (int(2), int(5)), (int(5), int(12))]
        );
    }

    #[test]
    fn single_digit() {
        let t = convergents(&[7]).unwrap();
        assert_eq!(t.convergent(1), ratio(1, 7));
    }

    #[test]
    fn zero_digit_rejected() {
        assert_eq!(convergents(&[1, 0]), Err(Error::InvalidDigit { position: 2, digit: 0 }));
    }

    #[test]
    fn golden_t_weights() {
        let g = IrrationalHandle::golden();
        let t = convergents(&g.cf_expand(12).unwrap()).unwrap();
        let theta = (5f64.sqrt() - 1.0) / 2.0;
        assert!((t_weight(&g, &t, 1).unwrap() - theta).abs() < 1e-15);
        assert!((t_weight(&g, &t, 2).unwrap() - 2.0 * (1.0 - theta)).abs() < 1e-15);
        for n in 1..=10 {
            let w = t_weight(&g, &t, n).unwrap();
            assert!(w > 0.0 && w < 1.0, "t(θ,{n}) = {w}");
        }
    }

    #[test]
    fn t_weight_needs_enough_precision() {
        let h = IrrationalHandle::parse_digits("[1,1,1]").unwrap();
        let t = convergents(&[1, 1, 1]).unwrap();
        assert!(matches!(t_weight(&h, &t, 3), Err(Error::PrecisionExhausted(_))));
    }

    #[test]
    fn golden_betas() {
        let t = convergents(&[1, 1, 1, 1]).unwrap();
        assert_eq!(es_beta(&t, 1).unwrap(), ratio(1, 2));
        assert_eq!(es_beta(&t, 3).unwrap(), ratio(1, 13));
    }

    #[test]
    fn golden_tail_depth_three() {
        let t = convergents(&[1, 1, 1]).unwrap();
        let tb = tail_bound(BetaSource::EffrosShen(&t), 1, 3).unwrap();
        assert_eq!(tb.partial, ratio(1, 2) + ratio(1, 5) + ratio(1, 13));
        assert!((tb.partial_f64() - 0.776_923_076_9).abs() < 1e-9);
        // q_4 ≥ 5, q_5 ≥ 8: remainder ≤ (4/3)(1/34 + 1/89)
        assert_eq!(tb.remainder, (ratio(1, 34) + ratio(1, 89)) * ratio(4, 3));
    }

    #[test]
    fn golden_tail_depth_thirty() {
        // Oracle: Σ_{k=1}^{30} 1/F_{2k+1} summed with Python's fractions module.
        let t = convergents(&[1; 30]).unwrap();
        let tb = tail_bound(BetaSource::EffrosShen(&t), 1, 30).unwrap();
        assert!((tb.partial_f64() - 0.824_515_157_406_677_8).abs() < 1e-15);
        assert!(tb.remainder_f64() < 1e-12);
    }

    #[test]
    fn agreement_depths() {
        assert_eq!(
            cf_agreement_depth(&[1, 1, 1, 2], &[1, 1, 1, 3]),
            Agreement {
                depth: 3,
                exhausted: false
            }
        );
        assert_eq!(cf_agreement_depth(&[2, 1], &[1, 1]).depth, 0);
        assert_eq!(
            cf_agreement_depth(&[1, 2, 3], &[1, 2, 3]),
            Agreement {
                depth: 3,
                exhausted: true
            }
        );
    }

    proptest! {
        #[test]
        fn convergent_invariants(digits in proptest::collection::vec(1u64..50, 1..25)) {
            let t = convergents(&digits).unwrap();
            prop_assert_eq!(t.p(0), &int(0));
            prop_assert_eq!(t.p(1), &int(1));
            prop_assert_eq!(t.q(0), &int(1));
            prop_assert_eq!(t.q(1), &BigInt::from(digits[0]));
            for (n, &d) in digits.iter().enumerate().skip(1) {
                let r = BigInt::from(d);
                prop_assert_eq!(t.p(n + 1), &(&r * t.p(n) + t.p(n - 1)));
                prop_assert_eq!(t.q(n + 1), &(&r * t.q(n) + t.q(n - 1)));
            }
            for n in 0..=t.depth() {
                prop_assert!(num_integer::Integer::gcd(t.p(n), t.q(n)).is_one());
                if n >= 2 {
                    prop_assert!(t.q(n) > t.q(n - 1));
                }
            }
        }

        #[test]
        fn convergents_approximate_surds(a in 1i64..40, d in 2i64..200) {
            // θ = (√d − a)/1 reduced into (0,1) by choosing a = ⌊√d⌋.
            let root = (d as f64).sqrt().floor() as i64;
            prop_assume!(root * root != d);
            let _ = a;
            let h = IrrationalHandle::Surd(QuadraticSurd::new(-root, 1, d, 1).unwrap());
            let digits = h.cf_expand(12).unwrap();
            let t = convergents(&digits).unwrap();
            let w = BigRational::new(BigInt::one(), BigInt::one() << 200u32);
            let theta = h.theta_enclosure(12, &w).unwrap();
            for n in 1..12 {
                // |θ − p_n/q_n| < 1/(q_n q_{n+1}), checked on both enclosure ends.
                let bound = BigRational::new(BigInt::one(), t.q(n) * t.q(n + 1));
                let c = t.convergent(n);
                let dev = |x: &BigRational| { let v = x - &c; if v < BigRational::zero() { -v } else { v } };
                prop_assert!(dev(&theta.lo).max(dev(&theta.hi)) < bound);
            }
        }

        #[test]
        fn t_weight_in_unit_interval(prefix in proptest::collection::vec(1u64..9, 0..6), period in proptest::collection::vec(1u64..9, 1..3)) {
            let h = IrrationalHandle::Digits(DigitStream::periodic(prefix, period).unwrap());
            let t = convergents(&h.cf_expand(10).unwrap()).unwrap();
            for n in 1..=10 {
                let w = t_weight(&h, &t, n).unwrap();
                prop_assert!(w > 0.0 && w < 1.0);
            }
        }

        #[test]
        fn es_tail_remainder_dominates(digits in proptest::collection::vec(1u64..6, 30..40), n in 1usize..10, d in 10usize..20) {
            let t = convergents(&digits).unwrap();
            let shallow = tail_bound(BetaSource::EffrosShen(&t), n, d).unwrap();
            let deep = tail_bound(BetaSource::EffrosShen(&t), n, t.depth()).unwrap();
            prop_assert!(deep.partial <= shallow.total());
            let next = tail_bound(BetaSource::EffrosShen(&t), n + 1, d).unwrap();
            prop_assert!(next.total() <= shallow.total());
        }
    }
}
