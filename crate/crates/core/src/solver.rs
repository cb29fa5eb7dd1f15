use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::equations::{builtin, evaluate_nonlinearity, EqError, NonlinearSeries, SymbolTable};
use crate::exppoly::{duhamel_with, ExpPoly};
use crate::scalar::{c64_to_qc, f64_to_q, q, qc, QComplex, Scalar, C64};
use crate::spectral::{check_support, AtomicSpectrum, Coef, FreqPoint};

/// Relative tolerance for treating two floating rates as resonant.
pub const FLOAT_RESONANCE_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Equation(#[from] EqError),
    #[error("symbol L is not diagonalizable at {0}")]
    NotDiagonalizable(String),
    #[error("matrix symbol at {0} needs floating mode")]
    NeedsFloating(String),
    #[error("data violates the support: {0}")]
    Support(String),
    #[error("data has an atom at level {0} <= 0")]
    Boundary(String),
    #[error("no atoms at or below the truncation level")]
    Empty,
    #[error("data has {got} components, expected {want}")]
    Components { got: usize, want: usize },
    #[error("grid iteration diverged after {iters} sweeps (distance {distance})")]
    Diverged { iters: usize, distance: f64, trace: Vec<f64> },
    #[error("bad grid setup: {0}")]
    Grid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub atoms_checked: usize,
    /// every residual vanished as an ExpPoly identity
    pub exact_zero: bool,
    /// largest ℓ¹ residual (after merging near-equal rates in floating mode)
    pub max_l1: f64,
    pub worst: Option<FreqPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSolution<T: Scalar + Coef> {
    pub spectrum: AtomicSpectrum<ExpPoly<T>>,
    pub lambda: BigRational,
    pub direction: Vec<BigRational>,
    pub residual: Option<ResidualReport>,
}

impl<T: Scalar + Coef> LatticeSolution<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "lambda": self.lambda.to_string(),
            "direction": self.direction.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            "spectrum": self.spectrum.to_json(),
            "residual": self.residual.as_ref().map(|r| json!({
                "atoms_checked": r.atoms_checked,
                "exact_zero": r.exact_zero,
                "max_l1": r.max_l1,
            })),
        })
    }

    pub fn truncate(&self, lambda: &BigRational) -> AtomicSpectrum<ExpPoly<T>> {
        self.spectrum.truncate(&self.direction, lambda)
    }
}

fn to_t<T: Scalar + Coef>(z: C64) -> T {
    T::from_q(&c64_to_qc(z))
}

/// Eigen-decomposition of a symbol matrix at one frequency: eigenvalues and,
/// for non-diagonal input, (V, V⁻¹).
struct Eigen<T> {
    lambdas: Vec<T>,
    basis: Option<(Vec<T>, Vec<T>)>,
}

fn eigen<T: Scalar + Coef>(l: &[T], n: usize, xi: &FreqPoint) -> Result<Eigen<T>, SolveError> {
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || l[i * n + j].is_zero()));
    if diagonal {
        return Ok(Eigen { lambdas: (0..n).map(|i| l[i * n + i].clone()).collect(), basis: None });
    }
    if T::EXACT {
        return Err(SolveError::NeedsFloating(xi.to_string()));
    }
    let (lam, v, vinv) = eigen_c64(&l.iter().map(|x| x.to_c64()).collect::<Vec<_>>(), n)
        .ok_or_else(|| SolveError::NotDiagonalizable(xi.to_string()))?;
    Ok(Eigen {
        lambdas: lam.into_iter().map(to_t).collect(),
        basis: Some((v.into_iter().map(to_t).collect(), vinv.into_iter().map(to_t).collect())),
    })
}

/// Eigenvalues via Schur, eigenvectors as SVD null vectors; None when the
/// eigenvector matrix is numerically singular.
fn eigen_c64(l: &[C64], n: usize) -> Option<(Vec<C64>, Vec<C64>, Vec<C64>)> {
    let a = DMatrix::<C64>::from_fn(n, n, |i, j| l[i * n + j]);
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let lam: Vec<C64> = a.clone().schur().eigenvalues()?.iter().copied().collect();
    let mut v = DMatrix::<C64>::zeros(n, n);
    for (k, &lk) in lam.iter().enumerate() {
        let shifted = &a - DMatrix::<C64>::identity(n, n) * lk;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let (imin, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        for j in 0..n {
            v[(j, k)] = vt[(imin, j)].conj();
        }
    }
    let vinv = v.clone().try_inverse()?;
    let cond = v.norm() * vinv.norm();
    if !cond.is_finite() || cond > 1e8 * scale.max(1.0) {
        return None;
    }
    let flat = |m: &DMatrix<C64>| (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect::<Vec<_>>();
    Some((lam, flat(&v), flat(&vinv)))
}

fn matvec<T: Scalar + Coef>(m: &[T], rows: usize, cols: usize, x: &[ExpPoly<T>]) -> Vec<ExpPoly<T>> {
    (0..rows)
        .map(|i| {
            let mut acc = ExpPoly::zero();
            for j in 0..cols {
                if !m[i * cols + j].is_zero() && !x[j].is_zero() {
                    acc = acc.add(&x[j].scale(&m[i * cols + j]));
                }
            }
            acc
        })
        .collect()
}

fn resonance_tol<T: Scalar + Coef>() -> Option<f64> {
    if T::EXACT {
        None
    } else {
        Some(FLOAT_RESONANCE_TOL)
    }
}

/// û(ξ,t) = e^{tL̂}û₀ + ∫_0^t e^{(t−s)L̂}N̂ S(s) ds, eigencomponent-wise.
fn flow_atom<T: Scalar + Coef>(
    eq: &SymbolTable,
    xi: &FreqPoint,
    u0: Option<&Vec<T>>,
    src: Option<&Vec<ExpPoly<T>>>,
) -> Result<Vec<ExpPoly<T>>, SolveError> {
    let n1 = eq.n1;
    let l: Vec<T> = eq.l.eval(xi)?;
    let e = eigen(&l, n1, xi)?;
    let mut init: Vec<ExpPoly<T>> = match u0 {
        Some(u) => u.iter().map(|c| ExpPoly::constant(c.clone())).collect(),
        None => vec![ExpPoly::zero(); n1],
    };
    let mut forcing: Vec<ExpPoly<T>> = match src {
        Some(s) => {
            let nm: Vec<T> = eq.n.eval(xi)?;
            matvec(&nm, n1, eq.n3, s)
        }
        None => vec![ExpPoly::zero(); n1],
    };
    if let Some((_, vinv)) = &e.basis {
        init = matvec(vinv, n1, n1, &init);
        forcing = matvec(vinv, n1, n1, &forcing);
    }
    let tol = resonance_tol::<T>();
    let y: Vec<ExpPoly<T>> = (0..n1)
        .map(|j| {
            let lam = &e.lambdas[j];
            init[j].shift_rate(lam).add(&duhamel_with(lam, &forcing[j], tol))
        })
        .collect();
    Ok(match &e.basis {
        Some((v, _)) => matvec(v, n1, n1, &y),
        None => y,
    })
}

fn m_channels<T: Scalar + Coef>(eq: &SymbolTable, xi: &FreqPoint, u: &[ExpPoly<T>]) -> Result<Vec<ExpPoly<T>>, SolveError> {
    let m: Vec<T> = eq.m.eval(xi)?;
    Ok(matvec(&m, eq.n2, eq.n1, u))
}

fn prepare<T: Scalar + Coef>(eq: &SymbolTable, u0: &AtomicSpectrum<T>, lambda: &BigRational) -> Result<(Vec<BigRational>, BigRational), SolveError> {
    if u0.components() != eq.n1 {
        return Err(SolveError::Components { got: u0.components(), want: eq.n1 });
    }
    if let Err(v) = check_support(u0, &eq.support) {
        return Err(SolveError::Support(v.iter().map(|x| format!("{}: {}", x.xi, x.reason)).collect::<Vec<_>>().join("; ")));
    }
    let dir = eq.support.direction.clone();
    let trimmed = u0.truncate(&dir, lambda);
    let delta = trimmed.min_level(&dir).ok_or(SolveError::Empty)?;
    if delta <= BigRational::zero() {
        return Err(SolveError::Boundary(delta.to_string()));
    }
    Ok((dir, delta))
}

/// Exact level-triangular solve of the Fourier-side Duhamel problem up to level Λ.
pub fn solve_lattice<T: Scalar + Coef>(
    eq: &SymbolTable,
    h: &NonlinearSeries,
    u0: &AtomicSpectrum<T>,
    lambda: &BigRational,
) -> Result<LatticeSolution<T>, SolveError> {
    let (dir, delta) = prepare(eq, u0, lambda)?;
    let data = u0.truncate(&dir, lambda);
    let mut sol: AtomicSpectrum<ExpPoly<T>> = AtomicSpectrum::new(eq.dim, eq.n1);
    let mut chans: AtomicSpectrum<ExpPoly<T>> = AtomicSpectrum::new(eq.dim, eq.n2);
    // Band [jδ, (j+1)δ) only sees sources built from levels < jδ, since every
    // product has at least two factors of level ≥ δ.
    let mut j = 1i64;
    loop {
        let lo = &delta * BigRational::from_integer(j.into());
        if &lo > lambda {
            break;
        }
        let hi = &delta * BigRational::from_integer((j + 1).into());
        let cap = if &hi < lambda { hi.clone() } else { lambda.clone() };
        let src = if j >= 2 && !chans.is_empty() {
            evaluate_nonlinearity(h, &chans, &dir, &cap)?
        } else {
            AtomicSpectrum::new(eq.dim, eq.n3)
        };
        let in_band = |x: &FreqPoint| {
            let l = x.dot(&dir);
            l >= lo && l < hi && &l <= lambda
        };
        let mut targets: Vec<FreqPoint> = data.atoms().keys().filter(|x| in_band(x)).cloned().collect();
        targets.extend(src.atoms().keys().filter(|x| in_band(x)).cloned());
        targets.sort();
        targets.dedup();
        let results: Vec<Result<(FreqPoint, Vec<ExpPoly<T>>, Vec<ExpPoly<T>>), SolveError>> = targets
            .par_iter()
            .map(|x| {
                let u = flow_atom(eq, x, data.get(x), src.get(x))?;
                let w = m_channels(eq, x, &u)?;
                Ok((x.clone(), u, w))
            })
            .collect();
        for r in results {
            let (x, u, w) = r?;
            sol.insert(x.clone(), u);
            chans.insert(x, w);
        }
        j += 1;
    }
    let mut out = LatticeSolution { spectrum: sol, lambda: lambda.clone(), direction: dir, residual: None };
    out.residual = Some(residual(eq, h, &out)?);
    Ok(out)
}

/// Linear flow e^{tL̂}û₀ at every data atom up to level Λ.
pub fn linear_flow<T: Scalar + Coef>(eq: &SymbolTable, u0: &AtomicSpectrum<T>, lambda: &BigRational) -> Result<LatticeSolution<T>, SolveError> {
    let (dir, _) = prepare(eq, u0, lambda)?;
    let data = u0.truncate(&dir, lambda);
    let mut sol = AtomicSpectrum::new(eq.dim, eq.n1);
    for (x, c) in data.atoms() {
        sol.insert(x.clone(), flow_atom(eq, x, Some(c), None)?);
    }
    Ok(LatticeSolution { spectrum: sol, lambda: lambda.clone(), direction: dir, residual: None })
}

/// v₀ = linear flow, v_j = Duhamel map applied to v_{j−1}; returns v₀..v_n.
pub fn picard_sequence<T: Scalar + Coef>(
    eq: &SymbolTable,
    h: &NonlinearSeries,
    u0: &AtomicSpectrum<T>,
    lambda: &BigRational,
    n: usize,
) -> Result<Vec<LatticeSolution<T>>, SolveError> {
    let first = linear_flow(eq, u0, lambda)?;
    let dir = first.direction.clone();
    let data = u0.truncate(&dir, lambda);
    let mut seq = vec![first];
    for _ in 0..n {
        let prev = &seq.last().unwrap().spectrum;
        let mut chans = AtomicSpectrum::new(eq.dim, eq.n2);
        for (x, u) in prev.atoms() {
            chans.insert(x.clone(), m_channels(eq, x, u)?);
        }
        let src = evaluate_nonlinearity(h, &chans, &dir, lambda)?;
        let mut targets: Vec<FreqPoint> = data.atoms().keys().chain(src.atoms().keys()).cloned().collect();
        targets.sort();
        targets.dedup();
        let rows: Vec<Result<(FreqPoint, Vec<ExpPoly<T>>), SolveError>> = targets
            .par_iter()
            .map(|x| Ok((x.clone(), flow_atom(eq, x, data.get(x), src.get(x))?)))
            .collect();
        let mut next = AtomicSpectrum::new(eq.dim, eq.n1);
        for r in rows {
            let (x, u) = r?;
            next.insert(x, u);
        }
        seq.push(LatticeSolution { spectrum: next, lambda: lambda.clone(), direction: dir.clone(), residual: None });
    }
    Ok(seq)
}

/// Checks ∂ₜû − L̂û − N̂Ĥ(M̂û) = 0 at every atom of level ≤ Λ.
pub fn residual<T: Scalar + Coef>(eq: &SymbolTable, h: &NonlinearSeries, sol: &LatticeSolution<T>) -> Result<ResidualReport, SolveError> {
    let mut chans = AtomicSpectrum::new(eq.dim, eq.n2);
    for (x, u) in sol.spectrum.atoms() {
        chans.insert(x.clone(), m_channels(eq, x, u)?);
    }
    let src = evaluate_nonlinearity(h, &chans, &sol.direction, &sol.lambda)?;
    let mut keys: Vec<FreqPoint> = sol.spectrum.atoms().keys().chain(src.atoms().keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let zero_u = vec![ExpPoly::<T>::zero(); eq.n1];
    let zero_s = vec![ExpPoly::<T>::zero(); eq.n3];
    let rows: Vec<Result<(FreqPoint, f64, bool), SolveError>> = keys
        .par_iter()
        .map(|x| {
            let u = sol.spectrum.get(x).unwrap_or(&zero_u);
            let s = src.get(x).unwrap_or(&zero_s);
            let l: Vec<T> = eq.l.eval(x)?;
            let nm: Vec<T> = eq.n.eval(x)?;
            let lu = matvec(&l, eq.n1, eq.n1, u);
            let ns = matvec(&nm, eq.n1, eq.n3, s);
            let mut worst = 0.0f64;
            let mut zero = true;
            for i in 0..eq.n1 {
                let r = u[i].derivative().sub(&lu[i]).sub(&ns[i]);
                if !r.is_zero() {
                    zero = false;
                }
                let size = if T::EXACT {
                    r.l1()
                } else {
                    let scale = u[i].derivative().l1() + lu[i].l1() + ns[i].l1();
                    r.merged_with_tolerance(1e-12).l1() / scale.max(1.0)
                };
                worst = worst.max(size);
            }
            Ok((x.clone(), worst, zero))
        })
        .collect();
    let mut rep = ResidualReport { atoms_checked: 0, exact_zero: true, max_l1: 0.0, worst: None };
    for r in rows {
        let (x, w, z) = r?;
        rep.atoms_checked += 1;
        rep.exact_zero &= z;
        if w > rep.max_l1 {
            rep.max_l1 = w;
            rep.worst = Some(x);
        }
    }
    Ok(rep)
}

/// Relative residual accepted for floating-mode solves.
pub const FLOAT_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub equation: String,
    pub sample: usize,
    pub exact: bool,
    pub data_atoms: usize,
    pub lambda: String,
    pub atoms_checked: usize,
    pub exact_zero: bool,
    pub max_l1: f64,
    /// the solve at 2Λ restricted to level ≤ Λ equals the solve at Λ
    pub coherent: bool,
    pub error: Option<String>,
}

impl ResidualRow {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.coherent && if self.exact { self.exact_zero } else { self.max_l1 <= FLOAT_RESIDUAL_TOL }
    }
}

/// Random data on a quarter-integer lattice, first coordinate in [1, 13/4].
pub fn random_lattice_data<R: Rng>(rng: &mut R, dim: usize, comps: usize, atoms: usize) -> AtomicSpectrum<QComplex> {
    let mut out = AtomicSpectrum::new(dim, comps);
    let r = |rng: &mut R| q(rng.gen_range(-4..=4), rng.gen_range(1..=4));
    for _ in 0..atoms {
        let xi: Vec<BigRational> = (0..dim).map(|j| if j == 0 { q(rng.gen_range(4..=13), 4) } else { q(rng.gen_range(-1..=1), 1) }).collect();
        let c: Vec<QComplex> = (0..comps).map(|_| qc(r(rng), r(rng))).collect();
        if c.iter().any(|z| !z.is_zero()) {
            out.insert(FreqPoint::new(xi), c);
        }
    }
    out
}

/// Truncation level, in units of the smallest data level, used for an
/// equation in the residual suite; systems branch fastest.
pub fn suite_lambda(name: &str) -> i64 {
    match name {
        "ns_incompressible" => 2,
        "nls_star" | "nlkg" | "clm" | "fractional_heat" => 3,
        _ => 4,
    }
}

fn residual_case<T: Scalar + Coef>(eq: &SymbolTable, h: &NonlinearSeries, u0: &AtomicSpectrum<T>, lo: &BigRational) -> Result<(ResidualReport, bool), SolveError> {
    let a = solve_lattice(eq, h, u0, lo)?;
    let b = solve_lattice(eq, h, u0, &(lo * q(2, 1)))?;
    let coherent = if T::EXACT {
        a.spectrum == b.truncate(lo)
    } else {
        let bt = b.truncate(lo);
        bt.len() == a.spectrum.len()
            && a.spectrum.atoms().iter().all(|(x, us)| match bt.get(x) {
                Some(vs) => us.iter().zip(vs).all(|(u, v)| u.sub(v).merged_with_tolerance(1e-12).l1() <= 1e-12 * u.l1().max(1.0)),
                None => false,
            })
    };
    let mut rep = a.residual.unwrap();
    let rb = b.residual.unwrap();
    rep.exact_zero &= rb.exact_zero;
    rep.max_l1 = rep.max_l1.max(rb.max_l1);
    rep.atoms_checked += rb.atoms_checked;
    Ok((rep, coherent))
}

/// Residual exactness and truncation coherence over the built-in catalogue on
/// seeded random data. Equations whose symbols leave the exact field are run
/// in floating mode.
pub fn residual_suite(seed: u64, names: &[&str], samples: usize, max_atoms: usize) -> Result<Vec<ResidualRow>, SolveError> {
    let mut rows = Vec::new();
    for (e, name) in names.iter().enumerate() {
        let (eq, h) = builtin(name, &Value::Null)?;
        let lam = suite_lambda(name);
        for sample in 0..samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((e as u64) << 32) ^ sample as u64);
            let atoms = if sample == 0 { max_atoms } else { rng.gen_range(1..=max_atoms) };
            let u0 = random_lattice_data(&mut rng, eq.dim, eq.n1, atoms);
            let delta = u0.min_level(&crate::spectral::e1(eq.dim)).unwrap_or_else(|| q(1, 1));
            let lo = delta * q(lam, 1);
            let mut exact = true;
            let mut res = residual_case(&eq, &h, &u0, &lo);
            if matches!(res, Err(SolveError::NeedsFloating(_)) | Err(SolveError::Equation(_))) {
                exact = false;
                res = residual_case(&eq, &h, &u0.map(|z| z.to_c64()), &lo);
            }
            let mut row = ResidualRow {
                equation: name.to_string(),
                sample,
                exact,
                data_atoms: u0.len(),
                lambda: lo.to_string(),
                atoms_checked: 0,
                exact_zero: false,
                max_l1: f64::NAN,
                coherent: false,
                error: None,
            };
            match res {
                Ok((rep, coherent)) => {
                    row.atoms_checked = rep.atoms_checked;
                    row.exact_zero = rep.exact_zero;
                    row.max_l1 = rep.max_l1;
                    row.coherent = coherent;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionParams {
    pub theta: f64,
    pub b: f64,
    /// κ bound at the returned (θ, b) for k = k₀+1
    pub kappa: f64,
}

fn jbracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// θ^{−1/k+1/k₀}e^{−sθ} + ⟨s⟩e^{(σ−s)θ} at k = k₀+1, σ = bθ^{a−1}s.
pub fn kappa_bound(s: f64, a: f64, k0: usize, theta: f64, b: f64) -> f64 {
    let k0 = k0 as f64;
    let sigma = b * theta.powf(a - 1.0) * s;
    theta.powf(1.0 / k0 - 1.0 / (k0 + 1.0)) * (-s * theta).exp() + jbracket(s) * ((sigma - s) * theta).exp()
}

/// Halves θ from 1 until the small-frequency term is ≤ ε/2, then takes the
/// least b making the large-frequency term ≤ ε/2 and absorbing the k = k₀
/// constant (2e^{−s})^{k₀} through the 1/(c₀b) Duhamel factor.
pub fn select_contraction_params(s: f64, c0: f64, eps: f64, a: f64, k0: usize) -> ContractionParams {
    assert!(s < 0.0 && c0 > 0.0 && c0 < 1.0 && eps > 0.0 && eps < 1.0 && a >= 2.0 && k0 >= 1);
    let k0f = k0 as f64;
    let expo = 1.0 / k0f - 1.0 / (k0f + 1.0);
    let mut theta = 1.0f64;
    while theta.powf(expo) * (-s * theta).exp() > eps / 2.0 {
        theta /= 2.0;
    }
    // ⟨s⟩e^{(bθ^{a−1}−1)sθ} ≤ ε/2
    let need = (1.0 + (eps / (2.0 * jbracket(s))).ln() / (s * theta)) / theta.powf(a - 1.0);
    let absorb = (2.0 * (-s).exp() / eps).powf(k0f) / c0;
    let b = need.max(absorb).max(1.0 / c0).max(1.0);
    ContractionParams { theta, b, kappa: kappa_bound(s, a, k0, theta, b) }
}

/// Largest ε ∈ (0,1) for which Σ_α C₀|c_α|(C₀ε·2B)^{|α|} ≤ B, so that the
/// Duhamel map sends the 2B-ball into itself.
pub fn ball_epsilon(h: &NonlinearSeries, cap_c0: f64, b0: f64) -> f64 {
    let terms = h.terms_up_to(64);
    let f = |e: f64| -> f64 {
        terms
            .iter()
            .map(|(a, c)| {
                let deg: u32 = a.iter().sum();
                let norm = c.iter().map(|z| z.to_c64().norm_sqr()).sum::<f64>().sqrt();
                cap_c0 * norm * (cap_c0 * e * 2.0 * b0).powi(deg as i32)
            })
            .sum()
    };
    if f(0.999) <= b0 {
        return 0.999;
    }
    let (mut lo, mut hi) = (0.0, 0.999);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= b0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Weight parameters of the Z^{b,s}_𝔭 norm, with 𝔭(ξ) = ξ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridParams {
    pub s: f64,
    pub a: f64,
    pub k0: usize,
    pub b: f64,
}

/// W_{s,k₀}(ρ) = max(ρ^{−1/k₀}, ρ − 1/s) e^{sρ}.
pub fn w_weight(rho: f64, s: f64, k0: usize) -> f64 {
    rho.powf(-1.0 / k0 as f64).max(rho - 1.0 / s) * (s * rho).exp()
}

/// Piecewise-constant densities on cells [kh, (k+1)h], k < cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    pub h: f64,
    pub cells: usize,
    /// data[component][cell]
    pub data: Vec<Vec<C64>>,
}

impl GridState {
    pub fn zeros(h: f64, cells: usize, comps: usize) -> Self {
        GridState { h, cells, data: vec![vec![C64::zero(); cells]; comps] }
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }

    /// Cell averages of f by 16-point midpoint sampling.
    pub fn from_fn(h: f64, cells: usize, comps: usize, f: impl Fn(f64) -> Vec<C64>) -> Self {
        let mut g = GridState::zeros(h, cells, comps);
        const SUB: usize = 16;
        for k in 0..cells {
            for q in 0..SUB {
                let x = (k as f64 + (q as f64 + 0.5) / SUB as f64) * h;
                let v = f(x);
                for c in 0..comps {
                    g.data[c][k] += v[c] / SUB as f64;
                }
            }
        }
        g
    }

    /// Smooth bump on [lo, hi] with total mass `mass`, in component 0.
    pub fn bump(h: f64, cells: usize, comps: usize, lo: f64, hi: f64, mass: C64) -> Self {
        let psi = |y: f64| if y <= 0.0 || y >= 1.0 { 0.0 } else { (-1.0 / (y * (1.0 - y))).exp() };
        // ∫_0^1 ψ, by fine midpoint rule
        let n = 20000;
        let total: f64 = (0..n).map(|i| psi((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        let width = hi - lo;
        GridState::from_fn(h, cells, comps, |x| {
            let mut v = vec![C64::zero(); comps];
            v[0] = mass * psi((x - lo) / width) / (total * width);
            v
        })
    }

    pub fn comps(&self) -> usize {
        self.data.len()
    }

    /// ∫ W(ξ)·extra(ξ)·|φ(ξ)| dξ by the cell midpoint rule.
    pub fn weighted_norm(&self, s: f64, k0: usize, extra: impl Fn(f64) -> f64) -> f64 {
        (0..self.cells)
            .map(|k| {
                let x = self.center(k);
                let m = self.data.iter().map(|c| c[k].norm_sqr()).sum::<f64>().sqrt();
                if m == 0.0 {
                    0.0
                } else {
                    self.h * w_weight(x, s, k0) * extra(x) * m
                }
            })
            .sum()
    }

    /// ‖e^{s𝔭^a}φ‖_Z with Z the W-weighted L¹ space.
    pub fn data_norm(&self, p: &GridParams) -> f64 {
        self.weighted_norm(p.s, p.k0, |x| (p.s * x.powf(p.a)).exp())
    }

    /// Averages fine cells onto a grid with `factor`-times coarser cells.
    pub fn coarsen(&self, factor: usize) -> GridState {
        let cells = self.cells / factor;
        let mut g = GridState::zeros(self.h * factor as f64, cells, self.comps());
        for c in 0..self.comps() {
            for k in 0..cells {
                g.data[c][k] = (0..factor).map(|q| self.data[c][k * factor + q]).sum::<C64>() / factor as f64;
            }
        }
        g
    }
}

/// Cell-overlap convolution of piecewise-constant densities, truncated to the grid.
pub fn grid_convolve(f: &[C64], g: &[C64], h: f64) -> Vec<C64> {
    let n = f.len();
    let mut out = vec![C64::zero(); n];
    let fi: Vec<usize> = (0..n).filter(|&i| f[i] != C64::zero()).collect();
    let gj: Vec<usize> = (0..n).filter(|&j| g[j] != C64::zero()).collect();
    for &i in &fi {
        for &j in &gj {
            let m = i + j;
            if m >= n {
                break;
            }
            let p = f[i] * g[j] * (0.5 * h);
            out[m] += p;
            if m + 1 < n {
                out[m + 1] += p;
            }
        }
    }
    out
}

/// φ₁(z) = (e^z−1)/z and φ₂(z) = (e^z−1−z)/z².
fn phi12(z: C64) -> (C64, C64) {
    if z.norm() < 1e-2 {
        let mut p1 = C64::zero();
        let mut p2 = C64::zero();
        let mut zk = C64::new(1.0, 0.0);
        let mut fact1 = 1.0;
        let mut fact2 = 2.0;
        for k in 0..10 {
            p1 += zk / fact1;
            p2 += zk / fact2;
            zk *= z;
            fact1 *= (k + 2) as f64;
            fact2 *= (k + 3) as f64;
        }
        (p1, p2)
    } else {
        let ez = z.exp();
        ((ez - 1.0) / z, (ez - 1.0 - z) / (z * z))
    }
}

#[derive(Clone, Debug)]
pub struct GridOptions {
    pub t_end: f64,
    pub dt: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub params: GridParams,
    /// asserted bound B on ‖e^{s𝔭^a}û₀‖_Z
    pub ball: Option<f64>,
}

impl GridOptions {
    pub fn new(t_end: f64, dt: f64, params: GridParams) -> Self {
        GridOptions { t_end, dt, max_iters: 50, tol: 1e-10, params, ball: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormSample {
    pub t: f64,
    /// ∫ W e^{b(s𝔭^a − t𝔭)} |û(t)|
    pub norm: f64,
    /// ∫ W sup_{τ ≤ t} e^{b(s𝔭^a − τ𝔭)} |û(τ)|, nondecreasing; its final value is ‖û‖_{Z^{b,s}_𝔭}
    pub running: f64,
}

#[derive(Clone, Debug)]
pub struct GridSolution {
    pub times: Vec<f64>,
    pub states: Vec<GridState>,
    pub trace: Vec<NormSample>,
    pub iterations: usize,
    pub distances: Vec<f64>,
    pub data_norm: f64,
    pub ball: Option<f64>,
}

impl GridSolution {
    pub fn z_norm(&self) -> f64 {
        self.trace.last().map(|s| s.running).unwrap_or(0.0)
    }

    /// ‖û‖_{Z^{b,s}_𝔭} ≤ 2B throughout.
    pub fn ball_holds(&self) -> Option<bool> {
        self.ball.map(|b| self.trace.iter().all(|s| s.running <= 2.0 * b))
    }

    pub fn state_at(&self, t: f64) -> Option<&GridState> {
        let dt = self.times.get(1)? - self.times[0];
        let n = (t / dt).round() as usize;
        if ((n as f64) * dt - t).abs() > 1e-9 * dt.max(1.0) {
            return None;
        }
        self.states.get(n)
    }
}

struct CellSymbols {
    lambdas: Vec<C64>,
    v: Option<(Vec<C64>, Vec<C64>)>,
    m: Vec<C64>,
    n: Vec<C64>,
}

fn cell_symbols(eq: &SymbolTable, x: f64) -> Result<CellSymbols, SolveError> {
    let xi = FreqPoint(vec![f64_to_q(x)]);
    let l: Vec<C64> = eq.l.eval(&xi)?;
    let n1 = eq.n1;
    let diagonal = (0..n1).all(|i| (0..n1).all(|j| i == j || l[i * n1 + j] == C64::zero()));
    let (lambdas, v) = if diagonal {
        ((0..n1).map(|i| l[i * n1 + i]).collect(), None)
    } else {
        let (lam, v, vi) = eigen_c64(&l, n1).ok_or_else(|| SolveError::NotDiagonalizable(format!("{}", x)))?;
        (lam, Some((v, vi)))
    };
    Ok(CellSymbols { lambdas, v, m: eq.m.eval(&xi)?, n: eq.n.eval(&xi)? })
}

fn mat_c(m: &[C64], rows: usize, cols: usize, x: &[C64]) -> Vec<C64> {
    (0..rows).map(|i| (0..cols).map(|j| m[i * cols + j] * x[j]).sum()).collect()
}

/// N̂Ĥ(M̂u) on the grid, per cell in ℂ^{n₁}.
fn grid_forcing(eq: &SymbolTable, h: &NonlinearSeries, syms: &[CellSymbols], u: &GridState) -> Vec<Vec<C64>> {
    let cells = u.cells;
    let n1 = eq.n1;
    let chans: Vec<Vec<C64>> = (0..eq.n2)
        .map(|c| (0..cells).map(|k| (0..n1).map(|j| syms[k].m[c * n1 + j] * u.data[j][k]).sum()).collect())
        .collect();
    let first = chans.iter().filter_map(|ch| ch.iter().position(|z| *z != C64::zero())).min();
    let Some(first) = first else { return vec![vec![C64::zero(); n1]; cells] };
    let max_deg = if first == 0 { 64 } else { (cells / first).min(64) as u64 };
    let mut powers: Vec<Vec<Vec<C64>>> = vec![Vec::new(); eq.n2];
    let mut hout = vec![vec![C64::zero(); cells]; eq.n3];
    for (alpha, coeff) in h.terms_up_to(max_deg) {
        let mut prod: Option<Vec<C64>> = None;
        for (j, &a) in alpha.iter().enumerate() {
            if a == 0 {
                continue;
            }
            while powers[j].len() < a as usize {
                let next = match powers[j].last() {
                    None => chans[j].clone(),
                    Some(p) => grid_convolve(p, &chans[j], u.h),
                };
                powers[j].push(next);
            }
            let pj = &powers[j][a as usize - 1];
            prod = Some(match prod {
                None => pj.clone(),
                Some(p) => grid_convolve(&p, pj, u.h),
            });
        }
        let Some(prod) = prod else { continue };
        for (r, cf) in coeff.iter().enumerate() {
            let cf = cf.to_c64();
            if cf == C64::zero() {
                continue;
            }
            for k in 0..cells {
                hout[r][k] += cf * prod[k];
            }
        }
    }
    (0..cells)
        .map(|k| {
            let hk: Vec<C64> = (0..eq.n3).map(|r| hout[r][k]).collect();
            mat_c(&syms[k].n, n1, eq.n3, &hk)
        })
        .collect()
}

fn trajectory_distance(a: &[GridState], b: &[GridState], times: &[f64], p: &GridParams) -> (f64, f64) {
    let cells = a[0].cells;
    let hh = a[0].h;
    let mut sup_w = vec![0.0f64; cells];
    let mut plain = 0.0f64;
    let mut scale = 0.0f64;
    for (n, t) in times.iter().enumerate() {
        for k in 0..cells {
            let x = a[n].center(k);
            let d = (0..a[n].comps()).map(|c| (a[n].data[c][k] - b[n].data[c][k]).norm_sqr()).sum::<f64>().sqrt();
            let m = (0..a[n].comps()).map(|c| a[n].data[c][k].norm_sqr()).sum::<f64>().sqrt();
            plain = plain.max(d);
            scale = scale.max(m);
            let w = (p.b * (p.s * x.powf(p.a) - t * x)).exp();
            sup_w[k] = sup_w[k].max(w * d);
        }
    }
    let zdist: f64 = (0..cells).map(|k| hh * w_weight(a[0].center(k), p.s, p.k0) * sup_w[k]).sum();
    (zdist, plain / scale.max(1e-300))
}

fn norm_trace(states: &[GridState], times: &[f64], p: &GridParams) -> Vec<NormSample> {
    let cells = states[0].cells;
    let hh = states[0].h;
    let mut sup = vec![0.0f64; cells];
    let wts: Vec<f64> = (0..cells).map(|k| hh * w_weight(states[0].center(k), p.s, p.k0)).collect();
    let mut out = Vec::with_capacity(times.len());
    for (st, &t) in states.iter().zip(times) {
        let mut norm = 0.0;
        for k in 0..cells {
            let x = st.center(k);
            let m = st.data.iter().map(|c| c[k].norm_sqr()).sum::<f64>().sqrt();
            if m == 0.0 {
                continue;
            }
            let v = (p.b * (p.s * x.powf(p.a) - t * x)).exp() * m;
            norm += wts[k] * v;
            sup[k] = sup[k].max(v);
        }
        let running = (0..cells).map(|k| wts[k] * sup[k]).sum();
        out.push(NormSample { t, norm, running });
    }
    out
}

/// Picard iteration of the discretized Duhamel map on a 1-D frequency grid.
/// Time integration multiplies the exact kernel e^{(t−s)λ} against the linear
/// interpolant of the forcing; convolution integrates cell overlaps exactly.
pub fn solve_grid(eq: &SymbolTable, h: &NonlinearSeries, u0: &GridState, opts: &GridOptions) -> Result<GridSolution, SolveError> {
    if eq.dim != 1 {
        return Err(SolveError::Grid("grid solver supports d = 1".into()));
    }
    if u0.comps() != eq.n1 {
        return Err(SolveError::Components { got: u0.comps(), want: eq.n1 });
    }
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) {
        return Err(SolveError::Grid("need dt > 0 and T >= 0".into()));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    if ((steps as f64) * opts.dt - opts.t_end).abs() > 1e-9 * opts.dt {
        return Err(SolveError::Grid("T must be a multiple of dt".into()));
    }
    let cells = u0.cells;
    let n1 = eq.n1;
    if eq.claims.is_some() {
        let pts: Vec<FreqPoint> = (0..cells).map(|k| FreqPoint(vec![f64_to_q(u0.center(k))])).collect();
        eq.check_claims(&pts)?;
    }
    let syms: Vec<CellSymbols> = (0..cells).into_par_iter().map(|k| cell_symbols(eq, u0.center(k))).collect::<Result<_, _>>()?;
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * opts.dt).collect();
    // eigen-coordinates of the data and per-cell step weights
    let c0: Vec<Vec<C64>> = (0..cells)
        .map(|k| {
            let x: Vec<C64> = (0..n1).map(|j| u0.data[j][k]).collect();
            match &syms[k].v {
                Some((_, vi)) => mat_c(vi, n1, n1, &x),
                None => x,
            }
        })
        .collect();
    let weights: Vec<Vec<(C64, C64, C64)>> = syms
        .iter()
        .map(|s| {
            s.lambdas
                .iter()
                .map(|&lam| {
                    let z = lam * opts.dt;
                    let (p1, p2) = phi12(z);
                    (z.exp(), (p1 - p2) * opts.dt, p2 * opts.dt)
                })
                .collect()
        })
        .collect();
    let to_phys = |k: usize, y: Vec<C64>| -> Vec<C64> {
        match &syms[k].v {
            Some((v, _)) => mat_c(v, n1, n1, &y),
            None => y,
        }
    };
    let linear: Vec<GridState> = times
        .iter()
        .map(|&t| {
            let mut g = GridState::zeros(u0.h, cells, n1);
            for k in 0..cells {
                let y: Vec<C64> = (0..n1).map(|j| (syms[k].lambdas[j] * t).exp() * c0[k][j]).collect();
                for (j, z) in to_phys(k, y).into_iter().enumerate() {
                    g.data[j][k] = z;
                }
            }
            g
        })
        .collect();
    let mut cur = linear.clone();
    let mut distances = Vec::new();
    let mut iterations = 0;
    if !h.is_zero() {
        loop {
            iterations += 1;
            let forcing: Vec<Vec<Vec<C64>>> = cur.par_iter().map(|u| grid_forcing(eq, h, &syms, u)).collect();
            // forcing in eigen-coordinates
            let fe: Vec<Vec<Vec<C64>>> = forcing
                .par_iter()
                .map(|f| {
                    (0..cells)
                        .map(|k| match &syms[k].v {
                            Some((_, vi)) => mat_c(vi, n1, n1, &f[k]),
                            None => f[k].clone(),
                        })
                        .collect()
                })
                .collect();
            let cols: Vec<Vec<Vec<C64>>> = (0..cells)
                .into_par_iter()
                .map(|k| {
                    let mut acc = vec![C64::zero(); n1];
                    let mut out = Vec::with_capacity(steps + 1);
                    out.push(to_phys(k, acc.clone()));
                    for n in 0..steps {
                        for j in 0..n1 {
                            let (e, w0, w1) = weights[k][j];
                            acc[j] = e * acc[j] + w0 * fe[n][k][j] + w1 * fe[n + 1][k][j];
                        }
                        out.push(to_phys(k, acc.clone()));
                    }
                    out
                })
                .collect();
            let next: Vec<GridState> = (0..=steps)
                .map(|n| {
                    let mut g = linear[n].clone();
                    for (k, col) in cols.iter().enumerate() {
                        for j in 0..n1 {
                            g.data[j][k] += col[n][j];
                        }
                    }
                    g
                })
                .collect();
            let (zd, rel) = trajectory_distance(&next, &cur, &times, &opts.params);
            let d = zd.max(rel);
            distances.push(d);
            cur = next;
            if !d.is_finite() || (iterations > 3 && d > 1e6 * distances[0].max(1e-300)) {
                return Err(SolveError::Diverged { iters: iterations, distance: d, trace: distances });
            }
            if d <= opts.tol {
                break;
            }
            if iterations >= opts.max_iters {
                return Err(SolveError::Diverged { iters: iterations, distance: d, trace: distances });
            }
        }
    }
    let trace = norm_trace(&cur, &times, &opts.params);
    Ok(GridSolution { times, states: cur, trace, iterations, distances, data_norm: u0.data_norm(&opts.params), ball: opts.ball })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub cells: [usize; 3],
    pub differences: [f64; 2],
    pub order: f64,
}

/// Runs three resolutions (h, h/2, h/4 with dt scaled alike) and measures the
/// rate at which sampled coarse-cell averages settle.
pub fn self_convergence(
    eq: &SymbolTable,
    h: &NonlinearSeries,
    data: impl Fn(f64, usize) -> GridState,
    base_h: f64,
    base_cells: usize,
    opts: &GridOptions,
    sample_times: &[f64],
) -> Result<ConvergenceReport, SolveError> {
    let mut sols = Vec::new();
    for r in 0..3 {
        let f = 1usize << r;
        let mut o = opts.clone();
        o.dt = opts.dt / f as f64;
        let u0 = data(base_h / f as f64, base_cells * f);
        sols.push(solve_grid(eq, h, &u0, &o)?);
    }
    let diff = |a: &GridSolution, fa: usize, b: &GridSolution, fb: usize| -> f64 {
        let mut worst = 0.0f64;
        for &t in sample_times {
            let (Some(x), Some(y)) = (a.state_at(t), b.state_at(t)) else { continue };
            let x = x.coarsen(fa);
            let y = y.coarsen(fb);
            for c in 0..x.comps() {
                for k in 0..x.cells {
                    worst = worst.max((x.data[c][k] - y.data[c][k]).norm());
                }
            }
        }
        worst
    };
    let d1 = diff(&sols[0], 1, &sols[1], 2);
    let d2 = diff(&sols[1], 2, &sols[2], 4);
    Ok(ConvergenceReport {
        cells: [base_cells, base_cells * 2, base_cells * 4],
        differences: [d1, d2],
        order: (d1 / d2).log2(),
    })
}

/// Rational-mode data for sampling a lattice solution on a time grid: rows of
/// (t, level, component, value).
pub fn sample_lattice<T: Scalar + Coef>(sol: &LatticeSolution<T>, ts: &[f64]) -> Vec<(f64, FreqPoint, usize, C64)> {
    let mut out = Vec::new();
    for &t in ts {
        for (x, cs) in sol.spectrum.atoms() {
            for (j, c) in cs.iter().enumerate() {
                out.push((t, x.clone(), j, c.eval(t)));
            }
        }
    }
    out
}

/// Coefficient map t^k ↦ c of a pure polynomial (all rates zero).
pub fn poly_coeffs<T: Scalar + Coef>(p: &ExpPoly<T>) -> Option<BTreeMap<u32, T>> {
    let mut out = BTreeMap::new();
    for t in p.terms() {
        if !t.rate.is_zero() {
            return None;
        }
        out.insert(t.power, t.coeff.clone());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::builtin;
    use crate::scalar::{q, qc, qc_real, QComplex};
    use serde_json::json;

    fn r(n: i64) -> QComplex {
        qc_real(q(n, 1))
    }

    #[test]
    fn ode_square_matches_geometric_series() {
        let (eq, h) = builtin("ode_square", &Value::Null).unwrap();
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[2]), r(3));
        let sol = solve_lattice(&eq, &h, &u0, &q(20, 1)).unwrap();
        assert_eq!(sol.spectrum.len(), 10);
        for n in 0..10u32 {
            let c = &sol.spectrum.get(&FreqPoint::from_ints(&[2 * (n as i64 + 1)])).unwrap()[0];
            assert_eq!(c, &ExpPoly::term(r(0), n, r(3i64.pow(n + 1))));
        }
        assert!(sol.residual.unwrap().exact_zero);
    }

    #[test]
    fn burgers_first_mode() {
        let (eq, h) = builtin("burgers", &Value::Null).unwrap();
        let a = q(7, 2);
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[1]), qc(q(0, 1), -a.clone()));
        let sol = solve_lattice(&eq, &h, &u0, &q(4, 1)).unwrap();
        let u1 = &sol.spectrum.get(&FreqPoint::from_ints(&[1])).unwrap()[0];
        assert_eq!(u1, &ExpPoly::term(r(-1), 0, qc(q(0, 1), -a)));
        assert!(sol.residual.unwrap().exact_zero);
    }

    #[test]
    fn linear_flow_when_h_vanishes() {
        let (mut eq, _) = builtin("complex_heat", &json!({"eps": 1})).unwrap();
        eq.claims = None;
        let h = NonlinearSeries::zero(1, 1);
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[3]), r(2));
        let sol = solve_lattice(&eq, &h, &u0, &q(10, 1)).unwrap();
        assert_eq!(sol.spectrum.len(), 1);
        assert_eq!(sol.spectrum.get(&FreqPoint::from_ints(&[3])).unwrap()[0], ExpPoly::term(r(-9), 0, r(2)));
    }

    #[test]
    fn truncation_coherence_kdv() {
        let (eq, h) = builtin("kdv", &Value::Null).unwrap();
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[1]), qc(q(1, 2), q(-1, 3)));
        u0.insert_scalar(FreqPoint::from_ints(&[2]), r(1));
        let a = solve_lattice(&eq, &h, &u0, &q(6, 1)).unwrap();
        let b = solve_lattice(&eq, &h, &u0, &q(12, 1)).unwrap();
        assert_eq!(a.spectrum, b.truncate(&q(6, 1)));
        assert!(b.residual.unwrap().exact_zero);
    }

    #[test]
    fn exact_mode_rejects_matrix_symbol() {
        let (eq, h) = builtin("nlkg", &Value::Null).unwrap();
        let mut u0 = AtomicSpectrum::<QComplex>::new(1, 2);
        u0.insert(FreqPoint::from_ints(&[1]), vec![r(1), r(0)]);
        assert!(matches!(solve_lattice(&eq, &h, &u0, &q(3, 1)), Err(SolveError::NeedsFloating(_))));
        let uf = u0.map(|z| z.to_c64());
        let sol = solve_lattice(&eq, &h, &uf, &q(3, 1)).unwrap();
        assert!(sol.residual.unwrap().max_l1 < 1e-10);
    }

    #[test]
    fn picard_iterates_of_ode_square() {
        let (eq, h) = builtin("ode_square", &Value::Null).unwrap();
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[1]), r(1));
        let seq = picard_sequence(&eq, &h, &u0, &q(64, 1), 4).unwrap();
        assert_eq!(seq[0].spectrum.len(), 1);
        let v3 = &seq[3].spectrum;
        assert_eq!(v3.len(), 8);
        // v₂ = 1 + t + t² + t³/3 at a = 1
        let v2 = &seq[2].spectrum;
        let c = |k: i64| poly_coeffs(&v2.get(&FreqPoint::from_ints(&[k + 1])).unwrap()[0]).unwrap();
        assert_eq!(c(2)[&2], r(1));
        assert_eq!(c(3)[&3], qc_real(q(1, 3)));
    }

    #[test]
    fn contraction_params_regression() {
        let p = select_contraction_params(-1.0, 0.5, 0.1, 2.0, 1);
        assert!(p.kappa <= 0.1 + 1e-12);
        assert_eq!(p.theta, 1.0 / 512.0);
        let p2 = select_contraction_params(-1.0, 0.5, 0.05, 2.0, 1);
        assert!(p2.b >= p.b);
    }

    #[test]
    fn grid_linear_oracle() {
        let (mut eq, _) = builtin("complex_heat", &json!({"eps": 1})).unwrap();
        eq.claims = None;
        let h = NonlinearSeries::zero(1, 1);
        let u0 = GridState::bump(0.05, 80, 1, 1.0, 2.0, C64::new(1.0, 0.0));
        let p = GridParams { s: -1.0, a: 2.0, k0: 1, b: 1.0 };
        let sol = solve_grid(&eq, &h, &u0, &GridOptions::new(1.0, 0.1, p)).unwrap();
        let last = sol.states.last().unwrap();
        for k in 0..80 {
            let x = u0.center(k);
            assert!((last.data[0][k] - u0.data[0][k] * (-x * x).exp()).norm() < 1e-14);
        }
        for w in sol.trace.windows(2) {
            assert!(w[1].norm <= w[0].norm + 1e-15);
        }
    }

    #[test]
    fn grid_convolution_of_boxes() {
        let h = 0.5;
        let mut f = vec![C64::zero(); 8];
        f[2] = C64::new(1.0, 0.0);
        let g = grid_convolve(&f, &f, h);
        // triangle on [2,3] of mass h², split evenly between cells 4 and 5
        assert!((g[4].re - 0.25).abs() < 1e-15 && (g[5].re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exponential_trapezoid_is_exact_for_linear_forcing() {
        let z = C64::new(-3.0, 2.0);
        let (p1, p2) = phi12(z);
        let (s1, s2) = phi12(C64::new(-3e-3, 2e-3));
        let (l1, l2) = phi12(C64::new(-3e-3 * 1.001, 2e-3 * 1.001));
        assert!((p1 - (z.exp() - 1.0) / z).norm() < 1e-15);
        assert!((p2 - (z.exp() - 1.0 - z) / (z * z)).norm() < 1e-15);
        assert!((s1 - l1).norm() < 1e-5 && (s2 - l2).norm() < 1e-5);
    }
}
