use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exppoly::ExpPoly;
use crate::monofun::MonotoneFn;
use crate::scalar::{parse_rational, q_to_f64, QComplex, Scalar, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dim(usize, usize),
    #[error("component mismatch: {0} vs {1}")]
    Components(usize, usize),
    #[error("atom at level {level} is not above the boundary")]
    Boundary { level: String },
    #[error("malformed spectrum: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FreqPoint(pub Vec<BigRational>);

impl FreqPoint {
    pub fn new(coords: Vec<BigRational>) -> Self {
        FreqPoint(coords)
    }

    pub fn from_ints(v: &[i64]) -> Self {
        FreqPoint(v.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect())
    }

    pub fn zero(d: usize) -> Self {
        FreqPoint(vec![BigRational::zero(); d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, o: &FreqPoint) -> FreqPoint {
        FreqPoint(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: &BigRational) -> FreqPoint {
        FreqPoint(self.0.iter().map(|a| a * k).collect())
    }

    pub fn dot(&self, v: &[BigRational]) -> BigRational {
        self.0.iter().zip(v).fold(BigRational::zero(), |s, (a, b)| s + a * b)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(q_to_f64).collect()
    }

    pub fn norm(&self) -> f64 {
        self.to_f64().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.0.iter().map(|c| Value::String(c.to_string())).collect())
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        let mut out = Vec::new();
        for c in v.as_array()? {
            out.push(match c {
                Value::String(s) => parse_rational(s)?,
                Value::Number(n) => match n.as_i64() {
                    Some(i) => BigRational::from_integer(i.into()),
                    None => BigRational::from_float(n.as_f64()?)?,
                },
                _ => return None,
            });
        }
        Some(FreqPoint(out))
    }
}

impl fmt::Display for FreqPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Ring operations needed on spectral coefficients.
pub trait Coef: Clone + Send + Sync + fmt::Debug + PartialEq {
    fn zero_like() -> Self;
    fn is_zero_coef(&self) -> bool;
    fn add_c(&self, o: &Self) -> Self;
    fn mul_c(&self, o: &Self) -> Self;
    fn coef_to_json(&self) -> Value;
    fn coef_from_json(v: &Value) -> Option<Self>;
    /// A nonnegative size used by ρ-norms (modulus or ℓ¹ of terms).
    fn size(&self) -> f64;
    /// Constant coefficient from an exact complex rational.
    fn from_qc(q: &QComplex) -> Self;
}

macro_rules! scalar_coef {
    ($t:ty) => {
        impl Coef for $t {
            fn zero_like() -> Self {
                <$t>::zero()
            }
            fn is_zero_coef(&self) -> bool {
                self.is_zero()
            }
            fn add_c(&self, o: &Self) -> Self {
                self.clone() + o.clone()
            }
            fn mul_c(&self, o: &Self) -> Self {
                self.clone() * o.clone()
            }
            fn coef_to_json(&self) -> Value {
                Scalar::to_json(self)
            }
            fn coef_from_json(v: &Value) -> Option<Self> {
                <$t as Scalar>::from_json(v)
            }
            fn size(&self) -> f64 {
                self.modulus()
            }
            fn from_qc(q: &QComplex) -> Self {
                <$t as Scalar>::from_q(q)
            }
        }
    };
}
scalar_coef!(C64);
scalar_coef!(QComplex);

impl<T: Scalar> Coef for ExpPoly<T> {
    fn zero_like() -> Self {
        ExpPoly::zero()
    }
    fn is_zero_coef(&self) -> bool {
        self.is_zero()
    }
    fn add_c(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn mul_c(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn coef_to_json(&self) -> Value {
        self.to_json()
    }
    fn coef_from_json(v: &Value) -> Option<Self> {
        ExpPoly::from_json(v)
    }
    fn size(&self) -> f64 {
        self.l1()
    }
    fn from_qc(q: &QComplex) -> Self {
        ExpPoly::constant(T::from_q(q))
    }
}

/// Sparse map from frequency points to per-component coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicSpectrum<C: Coef> {
    dim: usize,
    components: usize,
    atoms: BTreeMap<FreqPoint, Vec<C>>,
}

impl<C: Coef> AtomicSpectrum<C> {
    pub fn new(dim: usize, components: usize) -> Self {
        AtomicSpectrum { dim, components, atoms: BTreeMap::new() }
    }

    pub fn scalar(dim: usize) -> Self {
        Self::new(dim, 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &BTreeMap<FreqPoint, Vec<C>> {
        &self.atoms
    }

    pub fn get(&self, xi: &FreqPoint) -> Option<&Vec<C>> {
        self.atoms.get(xi)
    }

    /// Inserts (adds to) the atom at ξ; zero vectors are dropped.
    pub fn insert(&mut self, xi: FreqPoint, coeffs: Vec<C>) {
        assert_eq!(xi.dim(), self.dim, "frequency dimension");
        assert_eq!(coeffs.len(), self.components, "component count");
        let entry = self.atoms.entry(xi.clone()).or_insert_with(|| vec![C::zero_like(); coeffs.len()]);
        for (e, c) in entry.iter_mut().zip(coeffs) {
            *e = e.add_c(&c);
        }
        if entry.iter().all(|c| c.is_zero_coef()) {
            self.atoms.remove(&xi);
        }
    }

    pub fn insert_scalar(&mut self, xi: FreqPoint, c: C) {
        self.insert(xi, vec![c]);
    }

    /// Component `j` as a scalar spectrum.
    pub fn component(&self, j: usize) -> AtomicSpectrum<C> {
        let mut out = AtomicSpectrum::scalar(self.dim);
        for (xi, v) in &self.atoms {
            if !v[j].is_zero_coef() {
                out.atoms.insert(xi.clone(), vec![v[j].clone()]);
            }
        }
        out
    }

    pub fn from_components(dim: usize, comps: &[AtomicSpectrum<C>]) -> Self {
        let mut out = AtomicSpectrum::new(dim, comps.len());
        for (j, c) in comps.iter().enumerate() {
            for (xi, v) in &c.atoms {
                let mut row = vec![C::zero_like(); comps.len()];
                row[j] = v[0].clone();
                out.insert(xi.clone(), row);
            }
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (xi, v) in &o.atoms {
            out.insert(xi.clone(), v.clone());
        }
        out
    }

    pub fn map<D: Coef>(&self, f: impl Fn(&C) -> D) -> AtomicSpectrum<D> {
        let mut out = AtomicSpectrum::new(self.dim, self.components);
        for (xi, v) in &self.atoms {
            out.insert(xi.clone(), v.iter().map(&f).collect());
        }
        out
    }

    pub fn truncate(&self, v: &[BigRational], lambda: &BigRational) -> Self {
        let mut out = AtomicSpectrum::new(self.dim, self.components);
        for (xi, c) in &self.atoms {
            if &xi.dot(v) <= lambda {
                out.atoms.insert(xi.clone(), c.clone());
            }
        }
        out
    }

    pub fn min_level(&self, v: &[BigRational]) -> Option<BigRational> {
        self.atoms.keys().map(|xi| xi.dot(v)).min()
    }

    pub fn max_level(&self, v: &[BigRational]) -> Option<BigRational> {
        self.atoms.keys().map(|xi| xi.dot(v)).max()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "dim": self.dim,
            "components": self.components,
            "atoms": self.atoms.iter().map(|(xi, c)| json!({
                "xi": xi.to_json(),
                "coeff": c.iter().map(|x| x.coef_to_json()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, SpectralError> {
        let bad = |m: &str| SpectralError::Malformed(m.to_string());
        let dim = v.get("dim").and_then(Value::as_u64).ok_or_else(|| bad("dim"))? as usize;
        let components = v.get("components").and_then(Value::as_u64).unwrap_or(1) as usize;
        let mut out = AtomicSpectrum::new(dim, components);
        for a in v.get("atoms").and_then(Value::as_array).ok_or_else(|| bad("atoms"))? {
            let xi = a.get("xi").and_then(FreqPoint::from_json).ok_or_else(|| bad("xi"))?;
            if xi.dim() != dim {
                return Err(SpectralError::Dim(xi.dim(), dim));
            }
            let cs = a.get("coeff").and_then(Value::as_array).ok_or_else(|| bad("coeff"))?;
            if cs.len() != components {
                return Err(SpectralError::Components(cs.len(), components));
            }
            let mut row = Vec::new();
            for c in cs {
                row.push(C::coef_from_json(c).ok_or_else(|| bad("coefficient"))?);
            }
            out.insert(xi, row);
        }
        Ok(out)
    }
}

/// Sparse product of two scalar maps.
pub(crate) fn conv_maps<C: Coef>(
    a: &BTreeMap<FreqPoint, C>,
    b: &BTreeMap<FreqPoint, C>,
    cap: Option<(&[BigRational], &BigRational)>,
) -> BTreeMap<FreqPoint, C> {
    let mut out: BTreeMap<FreqPoint, C> = BTreeMap::new();
    for (x, cx) in a {
        for (y, cy) in b {
            let z = x.add(y);
            if let Some((v, lam)) = cap {
                if &z.dot(v) > lam {
                    continue;
                }
            }
            let p = cx.mul_c(cy);
            match out.get_mut(&z) {
                Some(e) => *e = e.add_c(&p),
                None => {
                    out.insert(z, p);
                }
            }
        }
    }
    out.retain(|_, c| !c.is_zero_coef());
    out
}

/// Convolution: atoms at ξ+η with coefficient products. Scalar spectra convolve
/// directly; equal-width vector spectra convolve componentwise.
pub fn convolve<C: Coef>(f: &AtomicSpectrum<C>, g: &AtomicSpectrum<C>) -> Result<AtomicSpectrum<C>, SpectralError> {
    if f.dim != g.dim {
        return Err(SpectralError::Dim(f.dim, g.dim));
    }
    if f.components != g.components {
        return Err(SpectralError::Components(f.components, g.components));
    }
    let n = f.components;
    let mut comps = Vec::with_capacity(n);
    for j in 0..n {
        let a: BTreeMap<_, _> = f.atoms.iter().map(|(k, v)| (k.clone(), v[j].clone())).collect();
        let b: BTreeMap<_, _> = g.atoms.iter().map(|(k, v)| (k.clone(), v[j].clone())).collect();
        let c = conv_maps(&a, &b, None);
        let mut s = AtomicSpectrum::scalar(f.dim);
        for (k, v) in c {
            s.atoms.insert(k, vec![v]);
        }
        comps.push(s);
    }
    if n == 1 {
        return Ok(comps.pop().unwrap());
    }
    Ok(AtomicSpectrum::from_components(f.dim, &comps))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupportKind {
    HalfSpace,
    /// |ξ| ≤ R(v·ξ)
    Cone(MonotoneFn),
    /// integer combinations of the basis rows with level ≥ min_level
    Lattice { basis: Vec<Vec<BigRational>>, min_level: BigRational },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportSpec {
    pub direction: Vec<BigRational>,
    pub kind: SupportKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub xi: FreqPoint,
    pub reason: String,
}

impl SupportSpec {
    pub fn halfspace(d: usize) -> Self {
        SupportSpec { direction: e1(d), kind: SupportKind::HalfSpace }
    }

    pub fn level(&self, xi: &FreqPoint) -> BigRational {
        xi.dot(&self.direction)
    }

    pub fn contains(&self, xi: &FreqPoint) -> Result<(), String> {
        let l = self.level(xi);
        if !l.is_positive() {
            return Err(format!("level {} is not positive", l));
        }
        match &self.kind {
            SupportKind::HalfSpace => Ok(()),
            SupportKind::Cone(r) => {
                let bound = r.at(q_to_f64(&l));
                let nrm = xi.norm();
                if nrm <= bound * (1.0 + 1e-12) {
                    Ok(())
                } else {
                    Err(format!("|xi|={} exceeds R(level)={}", nrm, bound))
                }
            }
            SupportKind::Lattice { basis, min_level } => {
                if &l < min_level {
                    return Err(format!("level {} below lattice minimum {}", l, min_level));
                }
                match lattice_coords(basis, &xi.0) {
                    Some(c) if c.iter().all(|x| x.is_integer()) => Ok(()),
                    _ => Err("not a lattice point".into()),
                }
            }
        }
    }
}

pub fn e1(d: usize) -> Vec<BigRational> {
    let mut v = vec![BigRational::zero(); d];
    if d > 0 {
        v[0] = BigRational::one();
    }
    v
}

// Solves Σ c_i basis_i = x by rational elimination.
fn lattice_coords(basis: &[Vec<BigRational>], x: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = basis.len();
    let d = x.len();
    // augmented d × (n+1)
    let mut m: Vec<Vec<BigRational>> =
        (0..d).map(|r| (0..n).map(|c| basis[c][r].clone()).chain(std::iter::once(x[r].clone())).collect()).collect();
    let mut piv_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..d).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let pv = m[row][col].clone();
        for c in col..=n {
            m[row][c] = &m[row][c] / &pv;
        }
        for r in 0..d {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let t = &f * &m[row][c];
                    m[r][c] -= t;
                }
            }
        }
        piv_cols.push(col);
        row += 1;
    }
    if m[row..].iter().any(|r| !r[n].is_zero()) {
        return None;
    }
    let mut out = vec![BigRational::zero(); n];
    for (r, &c) in piv_cols.iter().enumerate() {
        out[c] = m[r][n].clone();
    }
    Some(out)
}

pub fn check_support<C: Coef>(f: &AtomicSpectrum<C>, spec: &SupportSpec) -> Result<(), Vec<Violation>> {
    let v: Vec<Violation> = f
        .atoms()
        .keys()
        .filter_map(|xi| spec.contains(xi).err().map(|reason| Violation { xi: xi.clone(), reason }))
        .collect();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Half-line density Σ c ξ^a e^{−zξ}.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpDensity {
    pub terms: Vec<(u32, C64, C64)>,
}

impl ExpDensity {
    pub fn zero() -> Self {
        ExpDensity { terms: Vec::new() }
    }

    pub fn term(a: u32, z: C64, c: C64) -> Self {
        ExpDensity::from_terms(vec![(a, z, c)])
    }

    pub fn from_terms(mut terms: Vec<(u32, C64, C64)>) -> Self {
        terms.sort_by(|x, y| {
            x.1.re.total_cmp(&y.1.re).then(x.1.im.total_cmp(&y.1.im)).then(x.0.cmp(&y.0))
        });
        let mut out: Vec<(u32, C64, C64)> = Vec::new();
        for t in terms {
            match out.last_mut() {
                Some(l) if l.0 == t.0 && l.1 == t.1 => l.2 += t.2,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.2 != C64::zero());
        ExpDensity { terms: out }
    }

    pub fn add(&self, o: &Self) -> Self {
        ExpDensity::from_terms(self.terms.iter().chain(&o.terms).copied().collect())
    }

    pub fn scale(&self, c: C64) -> Self {
        ExpDensity::from_terms(self.terms.iter().map(|&(a, z, x)| (a, z, x * c)).collect())
    }

    /// Multiplies the density by c·ξ^k.
    pub fn mul_monomial(&self, c: C64, k: u32) -> Self {
        ExpDensity::from_terms(self.terms.iter().map(|&(a, z, x)| (a + k, z, x * c)).collect())
    }

    /// Density of the reflected conjugate u^⋆(x) = conj(u(−x)).
    pub fn star(&self) -> Self {
        ExpDensity::from_terms(self.terms.iter().map(|&(a, z, c)| (a, z.conj(), c.conj())).collect())
    }

    pub fn eval(&self, xi: f64) -> C64 {
        if xi <= 0.0 {
            return C64::zero();
        }
        self.terms.iter().map(|&(a, z, c)| c * xi.powi(a as i32) * (-z * xi).exp()).sum()
    }

    /// Largest |coefficient|.
    pub fn max_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.2.norm()).fold(0.0, f64::max)
    }

    pub fn convolve(&self, o: &Self) -> Self {
        let mut out = Vec::new();
        for &(a, z, c) in &self.terms {
            for &(b, w, d) in &o.terms {
                out.extend(conv_pair(a, z, b, w).into_iter().map(|(p, r, k)| (p, r, k * c * d)));
            }
        }
        ExpDensity::from_terms(out)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

// (ξ^a e^{−zξ}) * (ξ^b e^{−wξ}) on the half line.
fn conv_pair(a: u32, z: C64, b: u32, w: C64) -> Vec<(u32, C64, C64)> {
    if z == w {
        let beta = factorial(a) * factorial(b) / factorial(a + b + 1);
        return vec![(a + b + 1, z, C64::new(beta, 0.0))];
    }
    let delta = z - w;
    let mut out = Vec::new();
    for k in 0..=b {
        let m = a + k;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let base = C64::new(sign * binom(b, k) * factorial(m), 0.0) / delta.powu(m + 1);
        out.push((b - k, w, base));
        let mut dj = C64::new(1.0, 0.0);
        for j in 0..=m {
            out.push((b - k + j, z, -base * dj / factorial(j)));
            dj *= delta;
        }
    }
    out
}

pub fn expdensity_convolve(f: &ExpDensity, g: &ExpDensity) -> ExpDensity {
    f.convolve(g)
}

/// Level of each rational as f64, convenience for reports.
pub fn level_f64(l: &BigRational) -> f64 {
    l.to_f64().unwrap_or_else(|| q_to_f64(l))
}

pub fn qc_from_parts(re: f64, im: f64) -> QComplex {
    Complex::new(BigRational::from_float(re).unwrap(), BigRational::from_float(im).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn delta_convolution() {
        let mut f = AtomicSpectrum::<C64>::scalar(2);
        f.insert_scalar(FreqPoint::from_ints(&[1, 0]), c(2.0));
        let mut g = AtomicSpectrum::<C64>::scalar(2);
        g.insert_scalar(FreqPoint::from_ints(&[0, 3]), c(3.0));
        let h = convolve(&f, &g).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.get(&FreqPoint::from_ints(&[1, 3])).unwrap()[0], c(6.0));
        let hh = convolve(&f, &f).unwrap();
        assert_eq!(hh.get(&FreqPoint::from_ints(&[2, 0])).unwrap()[0], c(4.0));
    }

    #[test]
    fn boundary_atom_is_a_violation() {
        let mut f = AtomicSpectrum::<C64>::scalar(2);
        f.insert_scalar(FreqPoint::from_ints(&[0, 1]), c(1.0));
        let err = check_support(&f, &SupportSpec::halfspace(2)).unwrap_err();
        assert_eq!(err.len(), 1);
    }

    #[test]
    fn cone_violation() {
        let spec = SupportSpec { direction: e1(2), kind: SupportKind::Cone(MonotoneFn::linear(1.0)) };
        let mut f = AtomicSpectrum::<C64>::scalar(2);
        f.insert_scalar(FreqPoint::from_ints(&[1, 2]), c(1.0));
        assert!(check_support(&f, &spec).is_err());
        let mut g = AtomicSpectrum::<C64>::scalar(2);
        g.insert_scalar(FreqPoint::from_ints(&[3, 0]), c(1.0));
        assert!(check_support(&g, &spec).is_ok());
    }

    #[test]
    fn lattice_membership() {
        let basis = vec![vec![q(1, 2), q(0, 1)], vec![q(0, 1), q(1, 3)]];
        let spec = SupportSpec { direction: e1(2), kind: SupportKind::Lattice { basis, min_level: q(1, 2) } };
        assert!(spec.contains(&FreqPoint(vec![q(3, 2), q(2, 3)])).is_ok());
        assert!(spec.contains(&FreqPoint(vec![q(3, 2), q(1, 2)])).is_err());
        assert!(spec.contains(&FreqPoint(vec![q(0, 1), q(1, 3)])).is_err());
    }

    #[test]
    fn truncate_empty() {
        let f = AtomicSpectrum::<C64>::scalar(1);
        assert!(f.truncate(&e1(1), &q(3, 1)).is_empty());
    }

    #[test]
    fn expdensity_same_rate() {
        let z = C64::new(0.7, 0.3);
        let e = ExpDensity::term(0, z, c(1.0));
        assert_eq!(e.convolve(&e), ExpDensity::term(1, z, c(1.0)));
        let x = ExpDensity::term(1, z, c(1.0));
        let got = x.convolve(&x);
        assert_eq!(got.terms.len(), 1);
        assert_eq!(got.terms[0].0, 3);
        assert!((got.terms[0].2 - c(1.0 / 6.0)).norm() < 1e-15);
    }

    #[test]
    fn expdensity_mixed_rates() {
        let z = C64::new(1.0, 0.5);
        let w = C64::new(2.0, -0.25);
        let got = ExpDensity::term(0, z, c(1.0)).convolve(&ExpDensity::term(0, w, c(1.0)));
        for &xi in &[0.1, 1.0, 3.0] {
            let want = ((-w * xi).exp() - (-z * xi).exp()) / (z - w);
            assert!((got.eval(xi) - want).norm() < 1e-14);
        }
    }

    fn quad_conv(f: &ExpDensity, g: &ExpDensity, xi: f64) -> C64 {
        // composite Simpson on [0, ξ]
        let n = 4000;
        let h = xi / n as f64;
        let mut s = C64::zero();
        for i in 0..=n {
            let eta = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += f.eval(eta.max(1e-300)) * g.eval((xi - eta).max(1e-300)) * w;
        }
        s * h / 3.0
    }

    #[test]
    fn expdensity_matches_quadrature() {
        let f = ExpDensity::from_terms(vec![(1, C64::new(1.0, 0.2), c(1.0)), (2, C64::new(0.5, 0.0), C64::new(0.0, 2.0))]);
        let g = ExpDensity::from_terms(vec![(1, C64::new(1.0, 0.2), c(-1.0)), (0, C64::new(3.0, 1.0), c(0.5))]);
        let h = f.convolve(&g);
        for &xi in &[0.3, 1.7, 4.0] {
            assert!((h.eval(xi) - quad_conv(&f, &g, xi)).norm() < 1e-10);
        }
    }

    #[test]
    fn spectrum_json_round_trip() {
        let mut f = AtomicSpectrum::<ExpPoly<C64>>::new(2, 2);
        f.insert(
            FreqPoint(vec![q(1, 2), q(-3, 1)]),
            vec![ExpPoly::exp(C64::new(-1.0, 0.0)), ExpPoly::constant(C64::new(0.0, 2.0))],
        );
        let back = AtomicSpectrum::<ExpPoly<C64>>::from_json(&f.to_json()).unwrap();
        assert_eq!(f, back);
    }
}
