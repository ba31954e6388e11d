//! Baire-space multiplicity sequences for UHF towers.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{handle::parse_digit_pattern, Digit};
use crate::error::{Error, Result};

/// A sequence (β(0), β(1), …) of positive integers: an explicit prefix,
/// optionally followed by a period repeated forever. Indexing starts at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaireSequence {
    prefix: Vec<Digit>,
    period: Vec<Digit>,
}

impl BaireSequence {
    pub fn new(prefix: Vec<Digit>, period: Vec<Digit>) -> Result<Self> {
        if let Some(i) = prefix.iter().chain(period.iter()).position(|&d| d == 0) {
            return Err(Error::InvalidDigit { position: i, digit: 0 });
        }
        if prefix.is_empty() && period.is_empty() {
            return Err(Error::InvalidInput("empty Baire sequence".into()));
        }
        Ok(BaireSequence { prefix, period })
    }

    pub fn finite(digits: Vec<Digit>) -> Result<Self> {
        BaireSequence::new(digits, Vec::new())
    }

    /// The constant sequence `value, value, …`.
    pub fn constant(value: Digit) -> Result<Self> {
        BaireSequence::new(Vec::new(), vec![value])
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (prefix, period) = parse_digit_pattern(s)?;
        // parse_digit_pattern reports 1-based positions; Baire indices are 0-based.
        BaireSequence::new(prefix, period)
    }

    pub fn get(&self, index: usize) -> Option<Digit> {
        if index < self.prefix.len() {
            Some(self.prefix[index])
        } else if self.period.is_empty() {
            None
        } else {
            Some(self.period[(index - self.prefix.len()) % self.period.len()])
        }
    }

    /// Truncation depth; `None` when the sequence is periodic (infinite).
    pub fn len(&self) -> Option<usize> {
        if self.period.is_empty() {
            Some(self.prefix.len())
        } else {
            None
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prefix(&self) -> &[Digit] {
        &self.prefix
    }

    pub fn period(&self) -> &[Digit] {
        &self.period
    }

    /// First `n` entries.
    pub fn take(&self, n: usize) -> Result<Vec<Digit>> {
        (0..n)
            .map(|i| {
                self.get(i).ok_or_else(|| {
                    Error::PrecisionExhausted(format!(
                        "Baire sequence has {} entries, {n} requested",
                        self.prefix.len()
                    ))
                })
            })
            .collect()
    }

    /// Keeps the first `keep` entries, then continues with `suffix` repeated.
    pub fn with_suffix(&self, keep: usize, suffix: &[Digit]) -> Result<Self> {
        BaireSequence::new(self.take(keep)?, suffix.to_vec())
    }
}

impl fmt::Display for BaireSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Digit]| format!("[{}]", v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
        write!(f, "{}", list(&self.prefix))?;
        if !self.period.is_empty() {
            write!(f, "periodic:{}", list(&self.period))?;
        }
        Ok(())
    }
}

/// ⊠β(n) = Π_{j<n} (β(j) + 1), with ⊠β(0) = 1.
pub fn box_product(b: &BaireSequence, n: usize) -> Result<BigInt> {
    let mut acc = BigInt::one();
    for d in b.take(n)? {
        acc *= BigInt::from(d) + 1;
    }
    Ok(acc)
}

/// γ_β(n) = 1/dim M_{⊠β(n)} = 1/(⊠β(n))².
pub fn uhf_gamma(b: &BaireSequence, n: usize) -> Result<BigRational> {
    let m = box_product(b, n)?;
    Ok(BigRational::new(BigInt::one(), &m * &m))
}

/// Σ_{k≥n} γ_β(k) in closed form for an eventually periodic sequence: past the
/// prefix, one period multiplies ⊠β by M, so the tail is a geometric series in
/// 1/M².
pub fn uhf_exact_tail(b: &BaireSequence, n: usize) -> Option<BigRational> {
    if b.period.is_empty() {
        return None;
    }
    let start = n.max(b.prefix.len());
    let mut sum = BigRational::zero();
    for k in n..start {
        sum += uhf_gamma(b, k).ok()?;
    }
    let mut block = BigRational::zero();
    for k in start..start + b.period.len() {
        block += uhf_gamma(b, k).ok()?;
    }
    let m: BigInt = b.period.iter().map(|&d| BigInt::from(d) + 1).product();
    let ratio = BigRational::new(BigInt::one(), &m * &m);
    Some(sum + block / (BigRational::one() - ratio))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaireDistance {
    pub value: f64,
    /// Index of the first disagreement, if one was found.
    pub first_difference: Option<usize>,
    /// The sequences agree on their common truncation but at least one of them
    /// is finite, so equality of the full sequences is not established.
    pub truncated_equality: bool,
}

/// 2^{−min{n : x(n) ≠ y(n)}}, or 0 when no disagreement exists.
pub fn baire_distance(a: &BaireSequence, b: &BaireSequence) -> BaireDistance {
    // Two eventually periodic sequences that agree up to the longer prefix plus
    // a common multiple of the periods agree forever.
    let horizon = match (a.len(), b.len()) {
        (None, None) => {
            let lcm = num_integer::lcm(a.period.len(), b.period.len());
            a.prefix.len().max(b.prefix.len()) + lcm
        }
        (Some(n), None) | (None, Some(n)) => n,
        (Some(n), Some(m)) => n.min(m),
    };
    let first = (0..horizon).find(|&i| a.get(i) != b.get(i));
    match first {
        Some(i) => BaireDistance {
            value: 2f64.powi(-(i as i32)),
            first_difference: Some(i),
            truncated_equality: false,
        },
        None => BaireDistance {
            value: 0.0,
            first_difference: None,
            truncated_equality: a.len().is_some() || b.len().is_some(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn gammas() {
        let ones = BaireSequence::constant(1).unwrap();
        assert_eq!(uhf_gamma(&ones, 2).unwrap(), r(1, 16));
        assert_eq!(uhf_gamma(&ones, 0).unwrap(), r(1, 1));
        let b = BaireSequence::finite(vec![2, 3]).unwrap();
        assert_eq!(uhf_gamma(&b, 2).unwrap(), r(1, 144));
        assert!(uhf_gamma(&b, 3).is_err());
    }

    #[test]
    fn exact_geometric_tail() {
        let ones = BaireSequence::constant(1).unwrap();
        assert_eq!(uhf_exact_tail(&ones, 1).unwrap(), r(1, 3));
        assert_eq!(uhf_exact_tail(&ones, 0).unwrap(), r(4, 3));
        // prefix [2], then period [1, 3]: brute-force 40 terms approach the closed form.
        let b = BaireSequence::new(vec![2], vec![1, 3]).unwrap();
        let exact = uhf_exact_tail(&b, 1).unwrap();
        let mut partial = BigRational::zero();
        for k in 1..40 {
            partial += uhf_gamma(&b, k).unwrap();
        }
        assert!(partial < exact);
        assert!(super::super::to_f64(&(&exact - &partial)) < 1e-30);
        assert!(uhf_exact_tail(&BaireSequence::finite(vec![1]).unwrap(), 0).is_none());
    }

    #[test]
    fn distances() {
        let a = BaireSequence::finite(vec![1, 2, 3, 4]).unwrap();
        assert_eq!(baire_distance(&a, &a).value, 0.0);
        assert!(baire_distance(&a, &a).truncated_equality);
        let b = BaireSequence::finite(vec![2, 2, 3, 4]).unwrap();
        assert_eq!(baire_distance(&a, &b).value, 1.0);
        let c = BaireSequence::finite(vec![1, 2, 3, 5]).unwrap();
        assert_eq!(baire_distance(&a, &c).value, 0.125);

        let ones = BaireSequence::constant(1).unwrap();
        let also_ones = BaireSequence::new(vec![1, 1], vec![1, 1]).unwrap();
        let d = baire_distance(&ones, &also_ones);
        assert_eq!(d.value, 0.0);
        assert!(!d.truncated_equality);
        let late = ones.with_suffix(10, &[2]).unwrap();
        assert_eq!(baire_distance(&ones, &late).value, 2f64.powi(-10));
    }

    proptest! {
        #[test]
        fn ultrametric(x in proptest::collection::vec(1u64..3, 8), y in proptest::collection::vec(1u64..3, 8), z in proptest::collection::vec(1u64..3, 8)) {
            let (x, y, z) = (
                BaireSequence::finite(x).unwrap(),
                BaireSequence::finite(y).unwrap(),
                BaireSequence::finite(z).unwrap(),
            );
            let d = |a: &BaireSequence, b: &BaireSequence| baire_distance(a, b).value;
            prop_assert!(d(&x, &z) <= d(&x, &y).max(d(&y, &z)));
            prop_assert_eq!(d(&x, &y), d(&y, &x));
        }
    }
}
