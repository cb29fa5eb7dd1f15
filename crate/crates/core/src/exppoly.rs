use std::cmp::Ordering;
use std::io::Write;

use num_traits::Zero;
use serde_json::{json, Value};

use crate::scalar::{Scalar, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct Term<T> {
    pub rate: T,
    pub power: u32,
    pub coeff: T,
}

/// Finite sum `Σ c t^m e^{λt}` kept in canonical form: sorted by (λ, m),
/// duplicates merged, zero coefficients dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpPoly<T: Scalar> {
    terms: Vec<Term<T>>,
}

impl<T: Scalar> Default for ExpPoly<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Scalar> ExpPoly<T> {
    pub fn zero() -> Self {
        ExpPoly { terms: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::term(T::zero(), 0, c)
    }

    pub fn term(rate: T, power: u32, coeff: T) -> Self {
        Self::from_terms(vec![Term { rate, power, coeff }])
    }

    pub fn exp(rate: T) -> Self {
        Self::term(rate, 0, T::one())
    }

    pub fn from_terms(mut terms: Vec<Term<T>>) -> Self {
        terms.sort_by(|a, b| cmp_key(a, b));
        let mut out: Vec<Term<T>> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.power == t.power && last.rate == t.rate => {
                    last.coeff = last.coeff.clone() + t.coeff;
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| !t.coeff.is_zero());
        ExpPoly { terms: out }
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut v = self.terms.clone();
        v.extend(other.terms.iter().cloned());
        Self::from_terms(v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-T::one())
    }

    pub fn scale(&self, c: &T) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { rate: t.rate.clone(), power: t.power, coeff: t.coeff.clone() * c.clone() })
                .filter(|t| !t.coeff.is_zero())
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut v = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                v.push(Term {
                    rate: a.rate.clone() + b.rate.clone(),
                    power: a.power + b.power,
                    coeff: a.coeff.clone() * b.coeff.clone(),
                });
            }
        }
        Self::from_terms(v)
    }

    /// Multiplies every term by `e^{λt}`.
    pub fn shift_rate(&self, lambda: &T) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term { rate: t.rate.clone() + lambda.clone(), power: t.power, coeff: t.coeff.clone() })
                .collect(),
        )
    }

    pub fn derivative(&self) -> Self {
        let mut v = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            v.push(Term { rate: t.rate.clone(), power: t.power, coeff: t.rate.clone() * t.coeff.clone() });
            if t.power > 0 {
                v.push(Term {
                    rate: t.rate.clone(),
                    power: t.power - 1,
                    coeff: t.coeff.clone() * T::from_i64(t.power as i64),
                });
            }
        }
        Self::from_terms(v)
    }

    pub fn eval(&self, t: f64) -> C64 {
        let mut s = C64::zero();
        for term in &self.terms {
            let r = term.rate.to_c64();
            let c = term.coeff.to_c64();
            s += c * (r * t).exp() * t.powi(term.power as i32);
        }
        s
    }

    /// Value at t = 0, exact.
    pub fn at_zero(&self) -> T {
        self.terms.iter().filter(|t| t.power == 0).fold(T::zero(), |a, t| a + t.coeff.clone())
    }

    /// Coefficient of `t^m e^{λt}`.
    pub fn coeff(&self, rate: &T, power: u32) -> T {
        self.terms
            .iter()
            .find(|t| t.power == power && &t.rate == rate)
            .map(|t| t.coeff.clone())
            .unwrap_or_else(T::zero)
    }

    /// Sum of |c| over all terms.
    pub fn l1(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.modulus()).sum()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> ExpPoly<U> {
        ExpPoly::from_terms(
            self.terms.iter().map(|t| Term { rate: f(&t.rate), power: t.power, coeff: f(&t.coeff) }).collect(),
        )
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Exact `∫_0^t e^{λ₀(t−s)} p(s) ds`.
    pub fn duhamel(&self, lambda0: &T) -> Self {
        duhamel_with(lambda0, self, None)
    }

    /// Merges terms whose rates agree to relative tolerance `tol`. Used to
    /// compare floating results whose rates were summed in different orders.
    pub fn merged_with_tolerance(&self, tol: f64) -> Self {
        let mut out: Vec<Term<T>> = Vec::new();
        for t in &self.terms {
            if let Some(o) = out.iter_mut().find(|o| o.power == t.power && o.rate.same_rate(&t.rate, Some(tol))) {
                o.coeff = o.coeff.clone() + t.coeff.clone();
            } else {
                out.push(t.clone());
            }
        }
        ExpPoly { terms: out }
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|t| json!({"rate": t.rate.to_json(), "power": t.power, "coeff": t.coeff.to_json()}))
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        let arr = v.as_array()?;
        let mut terms = Vec::with_capacity(arr.len());
        for e in arr {
            terms.push(Term {
                rate: T::from_json(e.get("rate")?)?,
                power: e.get("power")?.as_u64()? as u32,
                coeff: T::from_json(e.get("coeff")?)?,
            });
        }
        Some(Self::from_terms(terms))
    }

    /// Writes `t,re,im` rows for the given time grid.
    pub fn write_samples<W: Write>(&self, w: &mut W, ts: &[f64]) -> std::io::Result<()> {
        writeln!(w, "t,re,im")?;
        for &t in ts {
            let z = self.eval(t);
            writeln!(w, "{},{},{}", t, z.re, z.im)?;
        }
        Ok(())
    }
}

fn cmp_key<T: Scalar>(a: &Term<T>, b: &Term<T>) -> Ordering {
    a.rate.order(&b.rate).then(a.power.cmp(&b.power))
}

/// Duhamel kernel with optional near-resonance tolerance (floating symbols only).
pub fn duhamel_with<T: Scalar>(lambda0: &T, p: &ExpPoly<T>, tol: Option<f64>) -> ExpPoly<T> {
    let mut out = Vec::new();
    for term in p.terms() {
        let c = term.coeff.clone();
        let m = term.power;
        if term.rate.same_rate(lambda0, tol) {
            out.push(Term {
                rate: lambda0.clone(),
                power: m + 1,
                coeff: c / T::from_i64(m as i64 + 1),
            });
            continue;
        }
        // ∫_0^t s^m e^{μs} ds = e^{μt} Σ_j (-1)^j m!/(m-j)! t^{m-j} μ^{-(j+1)} − (-1)^m m! μ^{-(m+1)}
        let mu = term.rate.clone() - lambda0.clone();
        let inv = T::one() / mu;
        let mut falling = T::one();
        let mut inv_pow = inv.clone();
        for j in 0..=m {
            let sign = if j % 2 == 0 { T::one() } else { -T::one() };
            out.push(Term {
                rate: term.rate.clone(),
                power: m - j,
                coeff: c.clone() * sign * falling.clone() * inv_pow.clone(),
            });
            if j < m {
                falling = falling * T::from_i64((m - j) as i64);
                inv_pow = inv_pow * inv.clone();
            }
        }
        // falling now equals m!, inv_pow equals μ^{-(m+1)}
        let sign = if m % 2 == 0 { -T::one() } else { T::one() };
        out.push(Term { rate: lambda0.clone(), power: 0, coeff: c * sign * falling * inv_pow });
    }
    ExpPoly::from_terms(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, qc_real, QComplex};

    fn r(n: i64) -> QComplex {
        qc_real(q(n, 1))
    }

    #[test]
    fn product_of_exponentials_adds_rates() {
        let p = ExpPoly::exp(r(2)).mul(&ExpPoly::exp(r(-5)));
        assert_eq!(p, ExpPoly::exp(r(-3)));
    }

    #[test]
    fn derivative_of_t_exp() {
        let lam = r(3);
        let p = ExpPoly::term(lam.clone(), 1, r(1));
        let want = ExpPoly::exp(lam.clone()).add(&ExpPoly::term(lam.clone(), 1, lam));
        assert_eq!(p.derivative(), want);
    }

    #[test]
    fn add_negation_vanishes() {
        let p = ExpPoly::term(r(1), 2, r(7)).add(&ExpPoly::exp(r(-1)));
        assert!(p.add(&p.neg()).is_zero());
    }

    #[test]
    fn duhamel_examples() {
        let lam = r(-4);
        assert_eq!(ExpPoly::exp(lam.clone()).duhamel(&lam), ExpPoly::term(lam, 1, r(1)));
        assert_eq!(ExpPoly::constant(r(1)).duhamel(&r(0)), ExpPoly::term(r(0), 1, r(1)));
        let got = ExpPoly::constant(r(2)).duhamel(&r(-2));
        let want = ExpPoly::constant(r(1)).sub(&ExpPoly::exp(r(-2)));
        assert_eq!(got, want);
    }

    #[test]
    fn json_round_trip() {
        let p = ExpPoly::term(r(-2), 3, qc_real(q(5, 7))).add(&ExpPoly::exp(r(1)));
        let back = ExpPoly::<QComplex>::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
        let f = p.map(|z| z.to_c64());
        let back = ExpPoly::<C64>::from_json(&f.to_json()).unwrap();
        assert_eq!(f, back);
    }
}
