//! Presentations of an irrational θ ∈ (0,1) and their continued-fraction digits.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use regex::Regex;

use super::{convergents, Digit, RationalInterval};
use crate::error::{Error, Result};

/// The quadratic surd `(a + b·√d) / c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticSurd {
    a: BigInt,
    b: BigInt,
    d: BigInt,
    c: BigInt,
}

impl QuadraticSurd {
    pub fn new(a: impl Into<BigInt>, b: impl Into<BigInt>, d: impl Into<BigInt>, c: impl Into<BigInt>) -> Result<Self> {
        let (a, b, d, c) = (a.into(), b.into(), d.into(), c.into());
        if c.is_zero() {
            return Err(Error::InvalidInput("surd denominator is zero".into()));
        }
        if d.is_negative() {
            return Err(Error::InvalidInput("surd radicand is negative".into()));
        }
        Ok(QuadraticSurd { a, b, d, c })
    }

    /// (√5 − 1)/2.
    pub fn golden() -> Self {
        QuadraticSurd::new(-1, 1, 5, 2).expect("valid surd")
    }

    /// √2 − 1.
    pub fn silver() -> Self {
        QuadraticSurd::new(-1, 1, 2, 1).expect("valid surd")
    }

    pub fn to_f64(&self) -> f64 {
        let f = |x: &BigInt| x.to_f64().unwrap_or(f64::NAN);
        (f(&self.a) + f(&self.b) * f(&self.d).sqrt()) / f(&self.c)
    }

    /// Rewrites the surd as `(P + √D)/Q` with `Q | D − P²`, the form the
    /// classical complete-quotient recurrence needs.
    fn reduced(&self) -> Result<(BigInt, BigInt, BigInt)> {
        let root = self.d.sqrt();
        if self.b.is_zero() || &root * &root == self.d {
            let value = BigRational::new(self.a.clone() + &self.b * &root, self.c.clone());
            return Err(Error::RationalInput {
                terms: rational_cf(&value).len(),
            });
        }
        let radicand = &self.b * &self.b * &self.d;
        let (mut p, mut q) = if self.b.is_positive() {
            (self.a.clone(), self.c.clone())
        } else {
            (-self.a.clone(), -self.c.clone())
        };
        let mut radicand = radicand;
        if !(&radicand - &p * &p).is_multiple_of(&q) {
            let aq = q.abs();
            p *= &aq;
            radicand *= &q * &q;
            q *= &aq;
        }
        Ok((p, radicand, q))
    }

    /// Iterator over r_1, r_2, … . Fails when the surd is rational or not in (0,1).
    pub fn digits(&self) -> Result<SurdDigits> {
        let (p, d, q) = self.reduced()?;
        let root = d.sqrt();
        let mut it = SurdDigits { p, d, q, root };
        let r0 = it.step();
        if !r0.is_zero() {
            return Err(Error::InvalidInput(format!(
                "{self} is not in (0,1): integer part {r0}"
            )));
        }
        Ok(it)
    }
}

impl fmt::Display for QuadraticSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.b.is_negative() { '-' } else { '+' };
        write!(f, "({}{}{}*sqrt({}))/{}", self.a, sign, self.b.abs(), self.d, self.c)
    }
}

/// Exact digit stream of a reduced surd `(P + √D)/Q`.
#[derive(Clone, Debug)]
pub struct SurdDigits {
    p: BigInt,
    d: BigInt,
    q: BigInt,
    root: BigInt,
}

impl SurdDigits {
    /// `m <= (P + √D)/Q`, decided exactly.
    fn at_most(&self, m: &BigInt) -> bool {
        let t = m * &self.q - &self.p;
        if self.q.is_positive() {
            !t.is_positive() || &t * &t < self.d
        } else {
            !t.is_negative() && &t * &t > self.d
        }
    }

    fn step(&mut self) -> BigInt {
        let mut m = (&self.p + &self.root).div_floor(&self.q);
        while !self.at_most(&m) {
            m -= 1;
        }
        loop {
            let next = &m + 1;
            if self.at_most(&next) {
                m = next;
            } else {
                break;
            }
        }
        let p_next = &m * &self.q - &self.p;
        let num = &self.d - &p_next * &p_next;
        debug_assert!(num.is_multiple_of(&self.q));
        self.q = num / &self.q;
        self.p = p_next;
        m
    }
}

impl Iterator for SurdDigits {
    type Item = BigInt;
    fn next(&mut self) -> Option<BigInt> {
        Some(self.step())
    }
}

/// An explicit digit stream: a finite prefix, optionally followed by a period
/// repeated forever.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitStream {
    prefix: Vec<Digit>,
    period: Vec<Digit>,
}

impl DigitStream {
    pub fn new(prefix: Vec<Digit>, period: Vec<Digit>) -> Result<Self> {
        if prefix.is_empty() && period.is_empty() {
            return Err(Error::InvalidInput("empty digit stream".into()));
        }
        for (i, &d) in prefix.iter().chain(period.iter()).enumerate() {
            if d == 0 {
                return Err(Error::InvalidDigit {
                    position: i + 1,
                    digit: 0,
                });
            }
        }
        Ok(DigitStream { prefix, period })
    }

    pub fn finite(digits: Vec<Digit>) -> Result<Self> {
        DigitStream::new(digits, Vec::new())
    }

    /// `prefix` followed by `period` repeated.
    pub fn periodic(prefix: Vec<Digit>, period: Vec<Digit>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidInput("empty period".into()));
        }
        DigitStream::new(prefix, period)
    }

    pub fn prefix(&self) -> &[Digit] {
        &self.prefix
    }

    pub fn period(&self) -> &[Digit] {
        &self.period
    }

    /// Digit r_{index+1}, if the stream has one.
    pub fn get(&self, index: usize) -> Option<Digit> {
        if index < self.prefix.len() {
            Some(self.prefix[index])
        } else if self.period.is_empty() {
            None
        } else {
            Some(self.period[(index - self.prefix.len()) % self.period.len()])
        }
    }

    pub fn budget(&self) -> Option<usize> {
        if self.period.is_empty() {
            Some(self.prefix.len())
        } else {
            None
        }
    }
}

impl fmt::Display for DigitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_list(&self.prefix))?;
        if !self.period.is_empty() {
            write!(f, "periodic:{}", format_list(&self.period))?;
        }
        Ok(())
    }
}

fn format_list(digits: &[Digit]) -> String {
    let items: Vec<String> = digits.iter().map(|d| d.to_string()).collect();
    format!("[{}]", items.join(","))
}

/// A decimal literal together with the number of decimal places it certifies.
/// The represented θ is only known to lie within `10^-precision` of the literal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecimalLiteral {
    text: String,
    value: BigRational,
    precision: u32,
}

impl DecimalLiteral {
    /// Parses `0.ddd…`; `precision` defaults to the number of fractional digits.
    pub fn parse(text: &str, precision: Option<u32>) -> Result<Self> {
        let text = text.trim();
        let (int_part, frac_part) = text
            .split_once('.')
            .ok_or_else(|| Error::Parse(format!("decimal literal without a point: {text:?}")))?;
        if int_part.is_empty()
            || !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(Error::Parse(format!("malformed decimal literal {text:?}")));
        }
        let places = frac_part.len() as u32;
        let digits: BigInt = format!("{int_part}{frac_part}")
            .parse()
            .map_err(|_| Error::Parse(format!("malformed decimal literal {text:?}")))?;
        let value = BigRational::new(digits, BigInt::from(10u32).pow(places));
        let precision = precision.unwrap_or(places);
        Ok(DecimalLiteral {
            text: text.to_string(),
            value,
            precision,
        })
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn radius(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::from(10u32).pow(self.precision))
    }

    fn enclosure(&self) -> RationalInterval {
        let r = self.radius();
        RationalInterval::new(&self.value - &r, &self.value + &r)
    }
}

/// How θ is presented to the library.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IrrationalHandle {
    Surd(QuadraticSurd),
    Decimal(DecimalLiteral),
    Digits(DigitStream),
}

impl IrrationalHandle {
    pub fn golden() -> Self {
        IrrationalHandle::Surd(QuadraticSurd::golden())
    }

    pub fn parse_surd(s: &str) -> Result<Self> {
        Ok(IrrationalHandle::Surd(parse_surd(s)?))
    }

    pub fn parse_digits(s: &str) -> Result<Self> {
        let (prefix, period) = parse_digit_pattern(s)?;
        Ok(IrrationalHandle::Digits(DigitStream::new(prefix, period)?))
    }

    pub fn parse_decimal(s: &str, precision: Option<u32>) -> Result<Self> {
        Ok(IrrationalHandle::Decimal(DecimalLiteral::parse(s, precision)?))
    }

    /// Number of digits guaranteed exact; `None` when unlimited.
    pub fn precision_budget(&self) -> Option<usize> {
        match self {
            IrrationalHandle::Surd(_) => None,
            IrrationalHandle::Digits(s) => s.budget(),
            IrrationalHandle::Decimal(d) => Some(certified_digits(&d.enclosure()).0.len()),
        }
    }

    /// Canonical text form, used as a parameter label in reports.
    pub fn label(&self) -> String {
        match self {
            IrrationalHandle::Surd(s) => s.to_string(),
            IrrationalHandle::Digits(s) => s.to_string(),
            IrrationalHandle::Decimal(d) => format!("{}~1e-{}", d.text, d.precision),
        }
    }

    /// Continued-fraction digits r_1..r_depth.
    pub fn cf_expand(&self, depth: usize) -> Result<Vec<Digit>> {
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        match self {
            IrrationalHandle::Surd(s) => s
                .digits()?
                .take(depth)
                .map(|d| {
                    d.to_u64()
                        .ok_or_else(|| Error::Overflow(format!("digit {d} exceeds 64 bits")))
                })
                .collect(),
            IrrationalHandle::Digits(s) => {
                if let Some(budget) = s.budget() {
                    if depth > budget {
                        return Err(Error::PrecisionExhausted(format!(
                            "requested {depth} digits but the stream holds {budget}"
                        )));
                    }
                }
                Ok((0..depth).map(|i| s.get(i).expect("within budget")).collect())
            }
            IrrationalHandle::Decimal(d) => {
                let enclosure = d.enclosure();
                if enclosure.hi <= BigRational::zero() || enclosure.lo >= BigRational::one() {
                    return Err(Error::InvalidInput(format!("{} is not in (0,1)", d.text)));
                }
                let (certified, leading_ok) = certified_digits(&enclosure);
                if !leading_ok {
                    return Err(Error::PrecisionExhausted(format!(
                        "{} does not certify θ ∈ (0,1)",
                        d.text
                    )));
                }
                if certified.len() >= depth {
                    return Ok(certified[..depth].to_vec());
                }
                let exact_terms = rational_cf(&d.value).len().saturating_sub(1);
                if exact_terms <= certified.len() + 1 {
                    Err(Error::RationalInput { terms: exact_terms })
                } else {
                    Err(Error::PrecisionExhausted(format!(
                        "{} certifies only {} digits, {depth} requested",
                        d.text,
                        certified.len()
                    )))
                }
            }
        }
    }

    /// A rational interval containing θ. Unlimited presentations are expanded
    /// until the enclosure is narrower than `width`; at least `min_depth` digits
    /// are always consumed.
    pub fn theta_enclosure(&self, min_depth: usize, width: &BigRational) -> Result<RationalInterval> {
        match self {
            IrrationalHandle::Decimal(d) => Ok(d.enclosure()),
            IrrationalHandle::Digits(s) if s.budget().is_some() => {
                let budget = s.budget().unwrap_or_default();
                if budget < min_depth {
                    return Err(Error::PrecisionExhausted(format!(
                        "θ enclosure needs {min_depth} digits, stream holds {budget}"
                    )));
                }
                // Every continuation has next complete quotient in (1, ∞).
                let table = convergents(s.prefix())?;
                let k = table.depth();
                let a = BigRational::new(table.p(k).clone(), table.q(k).clone());
                let b = BigRational::new(table.p(k) + table.p_prev(k), table.q(k) + table.q_prev(k));
                Ok(RationalInterval::ordered(a, b))
            }
            _ => {
                let mut depth = (min_depth + 2).max(16);
                loop {
                    let digits = self.cf_expand(depth)?;
                    let table = convergents(&digits)?;
                    let m = depth - 1;
                    let gap = BigRational::new(BigInt::one(), table.q(m) * table.q(m + 1));
                    if &gap <= width {
                        let a = BigRational::new(table.p(m).clone(), table.q(m).clone());
                        let b = BigRational::new(table.p(m + 1).clone(), table.q(m + 1).clone());
                        return Ok(RationalInterval::ordered(a, b));
                    }
                    depth *= 2;
                }
            }
        }
    }

    /// Floating-point approximation of θ for display.
    pub fn approx_f64(&self) -> f64 {
        match self {
            IrrationalHandle::Surd(s) => s.to_f64(),
            IrrationalHandle::Decimal(d) => d.value.to_f64().unwrap_or(f64::NAN),
            IrrationalHandle::Digits(_) => {
                let w = BigRational::new(BigInt::one(), BigInt::from(1u64) << 60u32);
                self.theta_enclosure(1, &w).map(|e| e.mid_f64()).unwrap_or(f64::NAN)
            }
        }
    }
}

impl fmt::Display for IrrationalHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Digits common to every point of the open interval `(lo, hi)`, plus whether
/// the integer part was certified to be 0.
fn certified_digits(enclosure: &RationalInterval) -> (Vec<Digit>, bool) {
    let mut lo = enclosure.lo.clone();
    let mut hi = enclosure.hi.clone();
    let mut out = Vec::new();
    let mut first = true;
    loop {
        let m = lo.floor();
        if hi > &m + BigRational::one() {
            return (out, !first);
        }
        if first {
            if !m.is_zero() {
                return (out, false);
            }
            first = false;
        } else {
            match m.to_integer().to_u64() {
                Some(d) if d >= 1 => out.push(d),
                _ => return (out, true),
            }
        }
        if lo == m {
            return (out, true);
        }
        let new_lo = (&hi - &m).recip();
        let new_hi = (&lo - &m).recip();
        lo = new_lo;
        hi = new_hi;
    }
}

/// Terms r_0, r_1, … of a rational (terminating expansion).
pub(crate) fn rational_cf(x: &BigRational) -> Vec<BigInt> {
    let mut out = Vec::new();
    let mut num = x.numer().clone();
    let mut den = x.denom().clone();
    while !den.is_zero() {
        let (q, r) = num.div_mod_floor(&den);
        out.push(q);
        num = den;
        den = r;
    }
    out
}

fn normalize_minus(s: &str) -> String {
    s.replace(['−', '–'], "-")
}

/// Parses `(a+b*sqrt(d))/c`. Unicode minus signs are accepted.
pub fn parse_surd(s: &str) -> Result<QuadraticSurd> {
    let s = normalize_minus(s);
    let re = Regex::new(
        r"^\s*\(\s*([+-]?\s*\d+)\s*([+-])\s*(?:(\d+)\s*\*\s*)?sqrt\s*\(\s*(\d+)\s*\)\s*\)\s*/\s*([+-]?\s*\d+)\s*$",
    )
    .expect("static regex");
    let caps = re
        .captures(&s)
        .ok_or_else(|| Error::Parse(format!("expected (a+b*sqrt(d))/c, got {s:?}")))?;
    let int = |i: usize| -> Result<BigInt> {
        let t: String = caps[i].chars().filter(|c| !c.is_whitespace()).collect();
        BigInt::from_str(&t).map_err(|e| Error::Parse(format!("{t:?}: {e}")))
    };
    let a = int(1)?;
    // An omitted coefficient means b = 1.
    let mut b = if caps.get(3).is_some() {
        int(3)?
    } else {
        BigInt::from(1)
    };
    if &caps[2] == "-" {
        b = -b;
    }
    QuadraticSurd::new(a, b, int(4)?, int(5)?)
}

/// Parses a digit list `[r1,r2,...]` with an optional `periodic:[s1,...]` suffix.
/// Returns `(prefix, period)`.
pub fn parse_digit_pattern(s: &str) -> Result<(Vec<Digit>, Vec<Digit>)> {
    let s = normalize_minus(s);
    let s = s.trim();
    let (head, tail) = match s.find("periodic:") {
        Some(i) => (&s[..i], Some(&s[i + "periodic:".len()..])),
        None => (s, None),
    };
    let head = head.trim().trim_end_matches([',', ';']).trim();
    let prefix = if head.is_empty() {
        Vec::new()
    } else {
        parse_list(head, 0)?
    };
    let period = match tail {
        Some(t) => {
            let p = parse_list(t.trim(), prefix.len())?;
            if p.is_empty() {
                return Err(Error::Parse("empty periodic part".into()));
            }
            p
        }
        None => Vec::new(),
    };
    if prefix.is_empty() && period.is_empty() {
        return Err(Error::Parse(format!("no digits in {s:?}")));
    }
    Ok((prefix, period))
}

fn parse_list(s: &str, offset: usize) -> Result<Vec<Digit>> {
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse(format!("expected a bracketed list, got {s:?}")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .enumerate()
        .map(|(i, tok)| {
            let tok = tok.trim();
            let v: i64 = tok.parse().map_err(|_| Error::Parse(format!("bad digit {tok:?}")))?;
            if v < 1 {
                return Err(Error::InvalidDigit {
                    position: offset + i + 1,
                    digit: v,
                });
            }
            Ok(v as Digit)
        })
        .collect()
}
