//! Exact binary-digit machinery for points of [0,1): eventually periodic
//! digit streams, truncations, one-positions, first disagreement and
//! digit-exact offsets.
//!
//! Dyadic rationals always use the terminating expansion (finitely many
//! one-digits); the tail-of-ones form is never produced or accepted.
//! Irrational test points are represented by long finite prefixes with an
//! explicit `truncated` flag.

use std::collections::HashMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest repeating-block length accepted when expanding a rational.
pub const MAX_PERIOD: usize = 1 << 16;

/// A reduced dyadic rational k/2^n in [0, 1].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicRational {
    num: BigUint,
    level: u32,
}

impl DyadicRational {
    pub fn new(num: impl Into<BigUint>, level: u32) -> Self {
        let mut num: BigUint = num.into();
        let mut level = level;
        while level > 0 && !num.is_zero() && num.is_even() {
            num >>= 1;
            level -= 1;
        }
        if num.is_zero() {
            level = 0;
        }
        debug_assert!(num <= BigUint::one() << level);
        DyadicRational { num, level }
    }

    pub fn zero() -> Self {
        DyadicRational::new(0u32, 0)
    }

    pub fn numerator(&self) -> &BigUint {
        &self.num
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.num.clone()),
            BigInt::from(BigUint::one() << self.level),
        )
    }

    pub fn value(&self) -> f64 {
        rational_to_f64(&self.to_rational())
    }
}

/// A point of [0,1) as a binary digit stream: finite prefix plus an
/// optional repeating block.
#[derive(Clone, Debug)]
pub struct BinaryPoint {
    prefix: Vec<bool>,
    period: Vec<bool>,
    truncated: bool,
}

impl BinaryPoint {
    pub fn zero() -> Self {
        BinaryPoint {
            prefix: Vec::new(),
            period: Vec::new(),
            truncated: false,
        }
    }

    pub fn from_bits(prefix: Vec<bool>, period: Vec<bool>, truncated: bool) -> Result<Self> {
        if !period.is_empty() && period.iter().all(|&b| b) {
            return Err(Error::AllOnesPeriod);
        }
        let mut p = BinaryPoint {
            prefix,
            period,
            truncated,
        };
        if p.period.iter().all(|&b| !b) {
            p.period.clear();
        }
        if p.period.is_empty() {
            while p.prefix.last() == Some(&false) {
                p.prefix.pop();
            }
        }
        Ok(p)
    }

    pub fn from_dyadic(d: &DyadicRational) -> Result<Self> {
        if d.num == BigUint::one() << d.level && !d.num.is_zero() {
            return Err(Error::OutOfRange(1.0));
        }
        let mut prefix = Vec::with_capacity(d.level as usize);
        for i in (0..d.level).rev() {
            prefix.push(d.num.bit(i as u64));
        }
        BinaryPoint::from_bits(prefix, Vec::new(), false)
    }

    /// Expand p/q in [0, 1) by exact long division, detecting the repeating
    /// block from the first repeated remainder.
    pub fn from_rational(r: &BigRational) -> Result<Self> {
        if r.is_negative() || *r >= BigRational::one() {
            return Err(Error::OutOfRange(rational_to_f64(r)));
        }
        let den = r.denom().magnitude().clone();
        let mut rem = r.numer().magnitude().clone();
        let mut digits: Vec<bool> = Vec::new();
        let mut seen: HashMap<BigUint, usize> = HashMap::new();
        loop {
            if rem.is_zero() {
                return BinaryPoint::from_bits(digits, Vec::new(), false);
            }
            if let Some(&start) = seen.get(&rem) {
                let period = digits.split_off(start);
                return BinaryPoint::from_bits(digits, period, false);
            }
            if digits.len() >= MAX_PERIOD {
                return Err(Error::PeriodTooLong(MAX_PERIOD));
            }
            seen.insert(rem.clone(), digits.len());
            rem <<= 1;
            if rem >= den {
                rem -= &den;
                digits.push(true);
            } else {
                digits.push(false);
            }
        }
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn period_len(&self) -> usize {
        self.period.len()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Membership in D, the dyadic rationals. Truncated stand-ins for
    /// irrational points are treated as non-dyadic.
    pub fn is_dyadic(&self) -> bool {
        self.period.is_empty() && !self.truncated
    }

    /// X_i(x), 1-based.
    pub fn digit(&self, i: u64) -> u8 {
        debug_assert!(i >= 1);
        let idx = (i - 1) as usize;
        if idx < self.prefix.len() {
            self.prefix[idx] as u8
        } else if self.period.is_empty() {
            0
        } else {
            let off = (idx - self.prefix.len()) % self.period.len();
            self.period[off] as u8
        }
    }

    pub fn digits(&self) -> impl Iterator<Item = u8> + '_ {
        (1u64..).map(move |i| self.digit(i))
    }

    /// x_n, the level-n truncation.
    pub fn truncate(&self, n: u32) -> DyadicRational {
        let mut num = BigUint::zero();
        for i in 1..=n as u64 {
            num <<= 1;
            if self.digit(i) == 1 {
                num += 1u32;
            }
        }
        DyadicRational::new(num, n)
    }

    pub fn to_rational(&self) -> BigRational {
        let p = self.prefix.len() as u32;
        let mut num = BigUint::zero();
        for &b in &self.prefix {
            num <<= 1;
            if b {
                num += 1u32;
            }
        }
        let mut r = BigRational::new(num.into(), BigInt::from(BigUint::one() << p));
        if !self.period.is_empty() {
            let q = self.period.len() as u32;
            let mut v = BigUint::zero();
            for &b in &self.period {
                v <<= 1;
                if b {
                    v += 1u32;
                }
            }
            let den = (BigUint::one() << q) - BigUint::one();
            r += BigRational::new(v.into(), BigInt::from(den << p));
        }
        r
    }

    pub fn value(&self) -> f64 {
        let mut acc = 0.0f64;
        let mut scale = 0.5f64;
        for i in 1..=128u64 {
            if self.digit(i) == 1 {
                acc += scale;
            }
            scale *= 0.5;
        }
        acc
    }

    /// Positions m_1 < m_2 < ... of the first `count` one-digits.
    pub fn ones_positions(&self, count: usize) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(count);
        let limit = if self.period.is_empty() {
            self.prefix.len() as u64
        } else {
            u64::MAX
        };
        let mut i = 1u64;
        while out.len() < count && i <= limit {
            if self.digit(i) == 1 {
                out.push(i);
            }
            i += 1;
        }
        if out.len() < count {
            return Err(Error::OnesExhausted { found: out.len() });
        }
        Ok(out)
    }

    /// Smallest j > after with X_j = `bit`, or an exhaustion error.
    pub fn position_of_next(&self, after: u64, bit: u8) -> Result<u64> {
        let cap = (self.prefix.len() + self.period.len().max(1) + 1) as u64;
        let mut j = after + 1;
        loop {
            if self.digit(j) == bit {
                return Ok(j);
            }
            if j > after + cap && j > cap {
                return Err(Error::OnesExhausted { found: 0 });
            }
            j += 1;
        }
    }

    /// Digit-exact x + h for rational h; errors if the result leaves [0, 1).
    pub fn add_offset(&self, h: &BigRational) -> Result<BinaryPoint> {
        let r = self.to_rational() + h;
        let mut out = BinaryPoint::from_rational(&r)?;
        out.truncated = self.truncated;
        Ok(out)
    }

    /// The reflected point 1 - x (x must be nonzero).
    pub fn complement(&self) -> Result<BinaryPoint> {
        let r = BigRational::one() - self.to_rational();
        if r >= BigRational::one() {
            return Err(Error::OutOfRange(1.0));
        }
        let mut out = BinaryPoint::from_rational(&r)?;
        out.truncated = self.truncated;
        Ok(out)
    }
}

impl PartialEq for BinaryPoint {
    fn eq(&self, other: &Self) -> bool {
        self.to_rational() == other.to_rational()
    }
}

impl fmt::Display for BinaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.")?;
        for &b in &self.prefix {
            write!(f, "{}", b as u8)?;
        }
        if !self.period.is_empty() {
            write!(f, "(")?;
            for &b in &self.period {
                write!(f, "{}", b as u8)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// l(y, z), the first position where the digit streams disagree.
pub fn first_disagreement(y: &BinaryPoint, z: &BinaryPoint) -> Result<u64> {
    if y == z {
        return Err(Error::EqualInputs);
    }
    let l = y.prefix_len().max(z.prefix_len()) as u64;
    let q = (y.period_len().max(1)).lcm(&z.period_len().max(1)) as u64;
    for i in 1..=l + q + 1 {
        if y.digit(i) != z.digit(i) {
            return Ok(i);
        }
    }
    unreachable!("unequal eventually periodic streams disagree within prefix + lcm(periods)");
}

/// A rational as f64, robust to large numerators/denominators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Fall back to a 128-digit binary expansion of the fractional part.
    let floor = r.floor();
    let frac = r - &floor;
    match BinaryPoint::from_rational(&frac) {
        Ok(p) => floor.numer().to_f64().unwrap_or(0.0) + p.value(),
        Err(_) => f64::NAN,
    }
}

/// h = k / 2^n as a signed rational.
pub fn dyadic_offset(k: i64, n: u32) -> BigRational {
    BigRational::new(BigInt::from(k), BigInt::from(BigUint::one() << n))
}

/// Parse "0.5", "1/3" or binary "0.01(01)" into a point of [0, 1).
pub fn parse_point(s: &str) -> Result<BinaryPoint> {
    let s = s.trim();
    let fail = || Error::PointParse(s.to_string());
    if s.contains('(') {
        // Binary form 0.b1b2...(p1p2...).
        let body = s.strip_prefix("0.").ok_or_else(fail)?;
        let (pre, rest) = body.split_once('(').ok_or_else(fail)?;
        let per = rest.strip_suffix(')').ok_or_else(fail)?;
        let bits = |t: &str| -> Result<Vec<bool>> {
            t.chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(fail()),
                })
                .collect()
        };
        return BinaryPoint::from_bits(bits(pre)?, bits(per)?, false);
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| fail())?;
        let q: BigInt = q.trim().parse().map_err(|_| fail())?;
        if q.is_zero() {
            return Err(fail());
        }
        return BinaryPoint::from_rational(&BigRational::new(p, q));
    }
    // Decimal form, converted exactly.
    let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
    if int_part.chars().any(|c| !c.is_ascii_digit())
        || frac_part.chars().any(|c| !c.is_ascii_digit())
        || (int_part.is_empty() && frac_part.is_empty())
    {
        return Err(fail());
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().map_err(|_| fail())?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    BinaryPoint::from_rational(&BigRational::new(num, den))
}
