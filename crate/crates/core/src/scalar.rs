use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::Value;

pub type C64 = Complex<f64>;
pub type QComplex = Complex<BigRational>;

/// Coefficient field for exponential polynomials and spectra.
///
/// `C64` is the default floating field; `QComplex` is exact and only supports
/// the rational subset of symbol arithmetic.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    const EXACT: bool;

    fn from_i64(n: i64) -> Self;
    fn from_q(q: &QComplex) -> Self;
    fn to_c64(&self) -> C64;
    fn i_unit() -> Self;
    fn conj(&self) -> Self;
    fn modulus(&self) -> f64;
    /// Total order used for canonical sorting (real part, then imaginary part).
    fn order(&self, other: &Self) -> Ordering;
    fn sqrt(&self) -> Option<Self>;
    fn exp(&self) -> Option<Self>;
    fn powf(&self, p: f64) -> Option<Self>;
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Option<Self>;

    /// Rate equality used for resonance; `tol` enables the relative fallback.
    fn same_rate(&self, other: &Self, tol: Option<f64>) -> bool {
        if self == other {
            return true;
        }
        match tol {
            None => false,
            Some(tol) => {
                let a = self.to_c64();
                let b = other.to_c64();
                let scale = a.norm().max(b.norm()).max(1.0);
                (a - b).norm() <= tol * scale
            }
        }
    }
}

impl Scalar for C64 {
    const EXACT: bool = false;

    fn from_i64(n: i64) -> Self {
        C64::new(n as f64, 0.0)
    }
    fn from_q(q: &QComplex) -> Self {
        C64::new(q_to_f64(&q.re), q_to_f64(&q.im))
    }
    fn to_c64(&self) -> C64 {
        *self
    }
    fn i_unit() -> Self {
        C64::new(0.0, 1.0)
    }
    fn conj(&self) -> Self {
        Complex::conj(self)
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
    fn order(&self, other: &Self) -> Ordering {
        self.re.total_cmp(&other.re).then(self.im.total_cmp(&other.im))
    }
    fn sqrt(&self) -> Option<Self> {
        Some(Complex::sqrt(*self))
    }
    fn exp(&self) -> Option<Self> {
        Some(Complex::exp(*self))
    }
    fn powf(&self, p: f64) -> Option<Self> {
        if self.is_zero() {
            return Some(if p > 0.0 { C64::zero() } else { C64::one() });
        }
        Some(Complex::powf(*self, p))
    }
    fn to_json(&self) -> Value {
        serde_json::json!([self.re, self.im])
    }
    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => Some(C64::new(n.as_f64()?, 0.0)),
            Value::Array(a) if a.len() == 2 => Some(C64::new(a[0].as_f64()?, a[1].as_f64()?)),
            Value::String(s) => {
                let q = parse_rational(s)?;
                Some(C64::new(q_to_f64(&q), 0.0))
            }
            _ => None,
        }
    }
}

impl Scalar for QComplex {
    const EXACT: bool = true;

    fn from_i64(n: i64) -> Self {
        Complex::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
    }
    fn from_q(q: &QComplex) -> Self {
        q.clone()
    }
    fn to_c64(&self) -> C64 {
        C64::new(q_to_f64(&self.re), q_to_f64(&self.im))
    }
    fn i_unit() -> Self {
        Complex::new(BigRational::zero(), BigRational::one())
    }
    fn conj(&self) -> Self {
        Complex::new(self.re.clone(), -self.im.clone())
    }
    fn modulus(&self) -> f64 {
        self.to_c64().norm()
    }
    fn order(&self, other: &Self) -> Ordering {
        self.re.cmp(&other.re).then(self.im.cmp(&other.im))
    }
    fn sqrt(&self) -> Option<Self> {
        if !self.im.is_zero() || self.re.is_negative() {
            return None;
        }
        let n = self.re.numer().sqrt();
        let d = self.re.denom().sqrt();
        if &(&n * &n) == self.re.numer() && &(&d * &d) == self.re.denom() {
            Some(Complex::new(BigRational::new(n, d), BigRational::zero()))
        } else {
            None
        }
    }
    fn exp(&self) -> Option<Self> {
        if self.is_zero() {
            Some(Self::one())
        } else {
            None
        }
    }
    fn powf(&self, p: f64) -> Option<Self> {
        if p.fract() == 0.0 && p.abs() < 64.0 {
            let k = p as i32;
            if k < 0 && self.is_zero() {
                return None;
            }
            let mut r = Self::one();
            for _ in 0..k.unsigned_abs() {
                r = r * self.clone();
            }
            return Some(if k < 0 { Self::one() / r } else { r });
        }
        if self.is_zero() && p > 0.0 {
            return Some(Self::zero());
        }
        None
    }
    fn to_json(&self) -> Value {
        serde_json::json!([self.re.to_string(), self.im.to_string()])
    }
    fn from_json(v: &Value) -> Option<Self> {
        let part = |x: &Value| -> Option<BigRational> {
            match x {
                Value::String(s) => parse_rational(s),
                Value::Number(n) => {
                    if let Some(i) = n.as_i64() {
                        Some(BigRational::from_integer(i.into()))
                    } else {
                        BigRational::from_float(n.as_f64()?)
                    }
                }
                _ => None,
            }
        };
        match v {
            Value::Array(a) if a.len() == 2 => Some(Complex::new(part(&a[0])?, part(&a[1])?)),
            other => Some(Complex::new(part(other)?, BigRational::zero())),
        }
    }
}

pub fn q_to_f64(q: &BigRational) -> f64 {
    if let Some(f) = q.to_f64() {
        if f.is_finite() {
            return f;
        }
    }
    // scale down huge numerators/denominators before dividing
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift = nb - db;
    let num = q.numer() << (64 - nb).max(0) as usize >> (nb - 64).max(0) as usize;
    let den = q.denom() << (64 - db).max(0) as usize >> (db - 64).max(0) as usize;
    let m = num.to_f64().unwrap_or(0.0) / den.to_f64().unwrap_or(1.0);
    m * 2f64.powi(shift.clamp(-2000, 2000) as i32)
}

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn qc(re: BigRational, im: BigRational) -> QComplex {
    Complex::new(re, im)
}

pub fn qc_real(re: BigRational) -> QComplex {
    Complex::new(re, BigRational::zero())
}

/// Parses "p/q", an integer, or a finite decimal ("0.25", "-1.5e-3") exactly.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    if ip.is_empty() && fp.is_empty() {
        return None;
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{}{}", ip, fp).parse().ok()?;
    let scale = exp - fp.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(digits);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

/// Exact rational from a finite f64 (dyadic, so no rounding).
pub fn f64_to_q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

pub fn c64_to_qc(z: C64) -> QComplex {
    Complex::new(f64_to_q(z.re), f64_to_q(z.im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_rational("0.1").unwrap(), q(1, 10));
        assert_eq!(parse_rational("-3/6").unwrap(), q(-1, 2));
        assert_eq!(parse_rational("2.5e-1").unwrap(), q(1, 4));
        assert!(parse_rational("abc").is_none());
    }

    #[test]
    fn huge_rational_to_float() {
        let big = BigRational::new(BigInt::from(3) << 2000usize, BigInt::from(1) << 1999usize);
        assert!((q_to_f64(&big) - 6.0).abs() < 1e-12);
    }
}
