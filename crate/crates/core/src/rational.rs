//! Small helpers around [`BigRational`].

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `n/d` as a big rational. Panics when `d == 0`.
pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"` or `"p"`.
pub fn parse(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let r: BigRational = s.parse().ok()?;
    Some(r)
}

fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = num_integer::Roots::sqrt(n);
    (&r * &r == *n).then_some(r)
}

/// Square root of a rational when it is itself rational.
pub fn rational_sqrt(x: &BigRational) -> Option<BigRational> {
    Some(BigRational::new(exact_sqrt(x.numer())?, exact_sqrt(x.denom())?))
}

/// The number `rational / √radicand`, kept exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Surd {
    pub rational: BigRational,
    pub radicand: BigRational,
}

impl Surd {
    pub fn new(rational: BigRational, radicand: BigRational) -> Self {
        Surd { rational, radicand }
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.rational) / to_f64(&self.radicand).sqrt()
    }

    /// The exact square `rational² / radicand`.
    pub fn square(&self) -> BigRational {
        &self.rational * &self.rational / &self.radicand
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rational.is_zero() {
            return write!(f, "0");
        }
        if let Some(root) = rational_sqrt(&self.radicand) {
            return write!(f, "{}", &self.rational / root);
        }
        // Move the radicand's denominator into the numerator: r/√(n/d) = r·d/√(n·d).
        let d = self.radicand.denom().clone();
        let n = self.radicand.numer() * &d;
        let r = &self.rational * BigRational::from_integer(d);
        let sign = if r.is_negative() { "-" } else { "" };
        let r = r.abs();
        if r.denom().is_one() {
            write!(f, "{sign}{}/√{n}", r.numer())
        } else {
            write!(f, "{sign}{}/({}√{n})", r.numer(), r.denom())
        }
    }
}
