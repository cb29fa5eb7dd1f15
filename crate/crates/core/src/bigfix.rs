// Binary fixed point on BigInt: a value x is stored as round(x * 2^bits).

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Fix {
    pub bits: u32,
}

impl Fix {
    pub fn new(bits: u32) -> Self {
        Fix { bits }
    }

    pub fn one(&self) -> BigInt {
        BigInt::one() << self.bits
    }

    pub fn from_ratio(&self, r: &BigRational) -> BigInt {
        let num = r.numer() << self.bits;
        let (q, rem) = num.div_mod_floor(r.denom());
        if (rem << 1u32) >= *r.denom() {
            q + 1
        } else {
            q
        }
    }

    pub fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        round_shift(a * b, self.bits)
    }

    #[cfg(test)]
    pub fn pow(&self, a: &BigInt, mut e: u64) -> BigInt {
        let mut base = a.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        acc
    }

    /// e^{-x} for x >= 0, accurate to a few units in the last place.
    pub fn exp_neg(&self, x: &BigRational) -> BigInt {
        assert!(!x.is_negative());
        let guard = 64;
        let inner = Fix::new(self.bits + guard);
        // halve until x/2^k < 1/2
        let mut k = 0u32;
        let mut y = x.clone();
        let half = BigRational::new(1.into(), 2.into());
        while y > half {
            y /= BigRational::from_integer(2.into());
            k += 1;
        }
        let yf = inner.from_ratio(&y);
        let mut term = inner.one();
        let mut sum = inner.one();
        let mut n = 1u64;
        while !term.is_zero() {
            term = -inner.mul(&term, &yf) / BigInt::from(n);
            sum += &term;
            n += 1;
        }
        for _ in 0..k {
            sum = inner.mul(&sum, &sum);
        }
        round_shift(sum, guard)
    }

    #[cfg(test)]
    pub fn to_f64(&self, a: &BigInt) -> f64 {
        let bl = a.bits() as i64;
        let shift = bl - 60;
        if shift <= 0 {
            return a.to_f64().unwrap() * 2f64.powi(-(self.bits as i32));
        }
        let m = (a >> shift as u64).to_f64().unwrap();
        m * 2f64.powf((shift - self.bits as i64) as f64)
    }

    /// log of the absolute value, valid far below the f64 range.
    pub fn ln_abs(&self, a: &BigInt) -> f64 {
        let bl = a.bits() as i64;
        let shift = (bl - 60).max(0);
        let m = (a.abs() >> shift as u64).to_f64().unwrap();
        m.ln() + (shift - self.bits as i64) as f64 * std::f64::consts::LN_2
    }
}

fn round_shift(a: BigInt, s: u32) -> BigInt {
    if s == 0 {
        return a;
    }
    let neg = a.sign() == Sign::Minus;
    let mag = a.abs() + (BigInt::one() << (s - 1));
    let r = mag >> s;
    if neg {
        -r
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_f64() {
        let f = Fix::new(200);
        for (n, d) in [(1, 10), (3, 1), (7, 2), (0, 1)] {
            let x = BigRational::new(n.into(), d.into());
            let e = f.to_f64(&f.exp_neg(&x));
            let want = (-(n as f64) / d as f64).exp();
            assert!((e - want).abs() < 1e-15 * want, "{} {}", e, want);
        }
    }

    #[test]
    fn tiny_values_keep_relative_accuracy() {
        let f = Fix::new(400);
        let q = f.exp_neg(&BigRational::new(1.into(), 10.into()));
        let p = f.one() - q;
        let v = f.pow(&p, 59);
        let want = 59.0 * (1.0 - (-0.1f64).exp()).ln();
        assert!((f.ln_abs(&v) - want).abs() < 1e-12);
    }
}
