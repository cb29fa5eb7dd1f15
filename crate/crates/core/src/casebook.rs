use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bigfix::Fix;
use crate::exppoly::ExpPoly;
use crate::scalar::{f64_to_q, q_to_f64, qc_real, QComplex, C64};
use crate::equations::builtin;
use crate::solver::{solve_lattice, SolveError};
use crate::spectral::{AtomicSpectrum, ExpDensity, FreqPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no zero of v found for t in [{0}, {1}]")]
    NoZero(f64, f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Σ num_m q^m / denom with exact integer numerators.
#[derive(Clone, Debug, PartialEq)]
pub struct QPoly {
    pub denom: BigInt,
    pub terms: Vec<(u32, BigInt)>,
}

impl QPoly {
    pub fn one() -> Self {
        QPoly { denom: BigInt::one(), terms: vec![(0, BigInt::one())] }
    }

    fn from_rationals(cs: Vec<(u32, BigRational)>) -> Self {
        let denom = cs.iter().fold(BigInt::one(), |d, (_, c)| d.lcm(c.denom()));
        let terms = cs
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(m, c)| (m, c.numer() * (&denom / c.denom())))
            .collect();
        QPoly { denom, terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.0).max().unwrap_or(0)
    }

    pub fn coeffs(&self) -> Vec<(u32, BigRational)> {
        self.terms.iter().map(|(m, c)| (*m, BigRational::new(c.clone(), self.denom.clone()))).collect()
    }

    pub fn eval_q(&self, q: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for (m, c) in self.terms.iter().rev() {
            acc += BigRational::new(c.clone(), self.denom.clone()) * num_traits::pow(q.clone(), *m as usize);
        }
        acc
    }

    /// As an exponential polynomial in t, with q = e^{−2βt}.
    pub fn to_exppoly(&self, beta: &BigRational) -> ExpPoly<QComplex> {
        let two = BigRational::from_integer(2.into());
        let mut out = ExpPoly::zero();
        for (m, c) in self.coeffs() {
            let rate = qc_real(-(two.clone() * beta * BigRational::from_integer((m as i64).into())));
            out = out.add(&ExpPoly::term(rate, 0, qc_real(c)));
        }
        out
    }

    fn eval_fixed(&self, pows: &[BigInt]) -> BigInt {
        let mut acc = BigInt::zero();
        for (m, c) in &self.terms {
            acc += c * &pows[*m as usize];
        }
        acc.div_floor(&self.denom)
    }

    /// Error bound in units of the last place for `eval_fixed`, given powers
    /// accurate to 4(m+1) ulp.
    fn fixed_error_ulps(&self) -> f64 {
        let d = self.denom.to_f64().unwrap_or(f64::INFINITY);
        self.terms.iter().map(|(m, c)| c.abs().to_f64().unwrap_or(f64::INFINITY) / d * 4.0 * (*m as f64 + 1.0)).sum::<f64>() + 2.0
    }

    /// Plain f64 sum; cancels badly for small t, where `ln_un_at` is reliable.
    pub fn eval(&self, t: f64) -> f64 {
        let q = (-2.0 * t).exp();
        self.terms.iter().map(|(m, c)| q_to_f64(&BigRational::new(c.clone(), self.denom.clone())) * q.powi(*m as i32)).sum()
    }

    pub fn to_json(&self) -> Value {
        json!(self.coeffs().iter().map(|(m, c)| json!({"power": m, "coeff": c.to_string()})).collect::<Vec<_>>())
    }
}

/// U_1, …, U_N of the monochromatic Burgers problem as exact polynomials in
/// q = e^{−2t}: U_n = n∫₀ᵗ e^{−n(n−1)(t−s)} Σ U_kU_{n−k} ds.
pub fn burgers_un(n_max: usize) -> Vec<QPoly> {
    let mut un = vec![QPoly::one()];
    for n in 2..=n_max {
        let big_n = n * (n - 1) / 2;
        let dens: Vec<BigInt> = (1..=n / 2).map(|k| &un[k - 1].denom * &un[n - k - 1].denom).collect();
        let l = dens.iter().fold(BigInt::one(), |a, d| a.lcm(d));
        let partial: Vec<Vec<BigInt>> = (1..=n / 2)
            .into_par_iter()
            .map(|k| {
                let mut s = vec![BigInt::zero(); big_n];
                let w = if 2 * k == n { 1 } else { 2 };
                let scale = (&l / &dens[k - 1]) * BigInt::from(w);
                for (i, x) in &un[k - 1].terms {
                    let xs = x * &scale;
                    for (j, y) in &un[n - k - 1].terms {
                        s[(i + j) as usize] += &xs * y;
                    }
                }
                s
            })
            .collect();
        let mut s = vec![BigInt::zero(); big_n];
        for p in partial {
            for (a, b) in s.iter_mut().zip(p) {
                *a += b;
            }
        }
        // each q^m source integrates to (q^m − q^N)/(2(N − m))
        let mut cs = Vec::new();
        let mut total = BigRational::zero();
        for (m, sm) in s.into_iter().enumerate() {
            if sm.is_zero() {
                continue;
            }
            let c = BigRational::new(sm * BigInt::from(n), &l * BigInt::from(2 * (big_n - m)));
            total += &c;
            cs.push((m as u32, c));
        }
        cs.push((big_n as u32, -total));
        un.push(QPoly::from_rationals(cs));
    }
    un
}

fn fix_for(t: &BigRational, n_max: usize) -> Fix {
    // U_n(t) ≥ (1 − e^{−2t})^{n−1}; keep 128 bits below the smallest value
    let tf = q_to_f64(t).max(1e-6);
    let lost = -((n_max as f64) - 1.0) * (-(-2.0 * tf).exp_m1()).log2();
    Fix::new(192 + lost.ceil().max(0.0) as u32)
}

struct Powers {
    fix: Fix,
    q: BigInt,
    pows: Vec<BigInt>,
}

impl Powers {
    fn new(t: &BigRational, max_deg: usize, n_max: usize) -> Self {
        let fix = fix_for(t, n_max);
        let q = fix.exp_neg(&(t * BigRational::from_integer(2.into())));
        let mut pows = Vec::with_capacity(max_deg + 1);
        pows.push(fix.one());
        for m in 0..max_deg {
            let next = fix.mul(&pows[m], &q);
            pows.push(next);
        }
        Powers { fix, q, pows }
    }
}

/// ln U_n(t) for every n, evaluated in fixed point.
pub fn ln_un_at(un: &[QPoly], t: &BigRational) -> Vec<f64> {
    let deg = un.last().map(|u| u.degree()).unwrap_or(0) as usize;
    let p = Powers::new(t, deg, un.len());
    un.iter().map(|u| p.fix.ln_abs(&u.eval_fixed(&p.pows))).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichRow {
    pub n: usize,
    pub t: f64,
    /// ln U_n(t) − (n−1) ln(1 − e^{−2t})
    pub lower_margin: f64,
    /// −ln U_n(t)
    pub upper_margin: f64,
    pub pass: bool,
}

/// Checks (1 − e^{−2t})^{n−1} ≤ U_n(t) ≤ 1 with certified error bounds.
pub fn burgers_sandwich(un: &[QPoly], times: &[BigRational]) -> Vec<SandwichRow> {
    let deg = un.last().map(|u| u.degree()).unwrap_or(0) as usize;
    times
        .par_iter()
        .flat_map_iter(|t| {
            let p = Powers::new(t, deg, un.len());
            let fix = p.fix;
            let one = fix.one();
            let base = &one - &p.q;
            let mut low = one.clone();
            let tf = q_to_f64(t);
            let mut rows = Vec::with_capacity(un.len());
            for (i, u) in un.iter().enumerate() {
                let n = i + 1;
                if n > 1 {
                    low = fix.mul(&low, &base);
                }
                let v = u.eval_fixed(&p.pows);
                let ev = BigInt::from(u.fixed_error_ulps().ceil() as u64 + 1);
                let el = BigInt::from(4 * n as u64 + 4);
                // n ≤ 2 are the equality cases U_1 = 1, U_2 = 1 − q
                let pass = match n {
                    1 => *u == QPoly::one(),
                    2 => u.terms == [(0, BigInt::one()), (1, -BigInt::one())] && u.denom.is_one(),
                    _ => &v - &ev >= &low + &el && &v + &ev <= one && v.is_positive(),
                };
                rows.push(SandwichRow {
                    n,
                    t: tf,
                    lower_margin: fix.ln_abs(&v) - fix.ln_abs(&low),
                    upper_margin: -fix.ln_abs(&v),
                    pass,
                });
            }
            rows
        })
        .collect()
}

/// U_n at t by integrating Ẇ_n = −n(n−1)W_n + nΣW_kW_{n−k} with RK4.
pub fn burgers_ode(n_max: usize, t: f64, steps: usize) -> Vec<f64> {
    let rhs = |w: &[f64]| -> Vec<f64> {
        (1..=n_max)
            .map(|n| {
                if n == 1 {
                    return 0.0;
                }
                let s: f64 = (1..n).map(|k| w[k - 1] * w[n - k - 1]).sum();
                -((n * (n - 1)) as f64) * w[n - 1] + n as f64 * s
            })
            .collect()
    };
    let mut w = vec![0.0; n_max];
    w[0] = 1.0;
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(&w);
        let y: Vec<f64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = rhs(&y);
        let y: Vec<f64> = w.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = rhs(&y);
        let y: Vec<f64> = w.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = rhs(&y);
        for i in 0..n_max {
            w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    w
}

pub const ASTARSTAR_UPPER: f64 = 2.598_076_211_353_316; // (3/2)√3

/// Upper curve e^t/(1 − e^{−2t}) of the a_* bracket.
pub fn astar_upper(t: f64) -> f64 {
    t.exp() / -(-2.0 * t).exp_m1()
}

#[derive(Clone, Debug, Serialize)]
pub struct AstarEstimate {
    pub t: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
    /// growth rate from the least-squares fit over the top third of n
    pub rho_fit: f64,
    pub rho_richardson: f64,
    pub used_fallback: bool,
    pub extrapolation_ok: bool,
}

fn rho_from_logs(logs: &[f64]) -> (f64, f64) {
    let n = logs.len();
    let lo = n - n / 3;
    let xs: Vec<f64> = (lo..n).map(|i| (i + 1) as f64).collect();
    let ys = &logs[lo..];
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let fit = (sxy / sxx).exp();
    // Richardson on log-ratios r_n ≈ ln ρ + c/n
    let r = |i: usize| logs[i] - logs[i - 1];
    let nn = n as f64;
    let rich = (nn * r(n - 1) - (nn - 1.0) * r(n - 2)).exp();
    (fit, rich)
}

/// Estimate of a_*(t) = e^t/ρ with ρ = limsup U_n(t)^{1/n}, and the bracket
/// [e^t, e^t/(1−e^{−2t})].
pub fn astar_from_table(un: &[QPoly], t: f64) -> AstarEstimate {
    let logs = ln_un_at(un, &f64_to_q(t));
    let (fit, rich) = rho_from_logs(&logs);
    let lower = t.exp();
    let upper = astar_upper(t);
    let inb = |a: f64| a >= lower * (1.0 - 1e-12) && a <= upper * (1.0 + 1e-12);
    let mut estimate = lower / fit;
    let mut used_fallback = false;
    if !inb(estimate) && inb(lower / rich) {
        estimate = lower / rich;
        used_fallback = true;
    }
    let extrapolation_ok = ((fit - rich) / fit).abs() < 1e-6;
    AstarEstimate { t, estimate, lower, upper, inside: inb(estimate), rho_fit: fit, rho_richardson: rich, used_fallback, extrapolation_ok }
}

pub fn burgers_astar(t: f64, n: usize) -> Result<AstarEstimate, CaseError> {
    if !(t > 0.0) || n < 20 {
        return Err(CaseError::Param("need t > 0 and N >= 20".into()));
    }
    Ok(astar_from_table(&burgers_un(n), t))
}

#[derive(Clone, Debug, Serialize)]
pub struct AstarStar {
    pub estimate: f64,
    pub argmin: f64,
    pub bracket: (f64, f64),
    pub inside: bool,
    pub curve: Vec<AstarEstimate>,
}

pub fn astarstar_from_table(un: &[QPoly], tgrid: &[f64]) -> AstarStar {
    let curve: Vec<AstarEstimate> = tgrid.par_iter().map(|&t| astar_from_table(un, t)).collect();
    let best = curve.iter().min_by(|a, b| a.estimate.total_cmp(&b.estimate)).unwrap();
    AstarStar {
        estimate: best.estimate,
        argmin: best.t,
        bracket: (1.0, ASTARSTAR_UPPER),
        inside: best.estimate >= 1.0 && best.estimate <= ASTARSTAR_UPPER + 1e-9,
        curve: curve.clone(),
    }
}

pub fn burgers_astarstar(tgrid: &[f64], n: usize) -> AstarStar {
    astarstar_from_table(&burgers_un(n), tgrid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TstarStatus {
    BlowUp,
    /// 1 ≤ |a| ≤ (3/2)√3: the brackets alone cannot decide
    InsideBracket,
    NoBlowUp,
    ExtrapolationFailure,
}

#[derive(Clone, Debug, Serialize)]
pub struct TstarEstimate {
    pub a: f64,
    pub estimate: Option<f64>,
    pub status: TstarStatus,
    /// T_* lies in the union of these intervals
    pub bracket: Vec<(f64, f64)>,
    pub log_a: f64,
}

// roots of e^t/(1 − e^{−2t}) = a on each side of the minimum at ½ log 3
fn upper_curve_roots(a: f64) -> Option<(f64, f64)> {
    if a <= ASTARSTAR_UPPER {
        return None;
    }
    let tm = 0.5 * 3f64.ln();
    let solve = |mut lo: f64, mut hi: f64, decreasing: bool| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (astar_upper(mid) > a) == decreasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Some((solve(1e-300, tm, true), solve(tm, a.ln().max(tm) + 1.0, false)))
}

/// Bracket of T_*(a) from e^T ≤ |a| ≤ e^T/(1 − e^{−2T}).
pub fn tstar_bracket(a: f64) -> Vec<(f64, f64)> {
    let la = a.ln();
    if a < 1.0 {
        return Vec::new();
    }
    match upper_curve_roots(a) {
        None => vec![(0.0, la)],
        Some((t1, t2)) => {
            let mut v = vec![(0.0, t1)];
            if t2 <= la {
                v.push((t2, la));
            }
            v
        }
    }
}

/// First t at which Σ|ae^{−t}|ⁿU_n(t) diverges, from the a_* estimate curve.
pub fn tstar_from_table(un: &[QPoly], a: f64) -> TstarEstimate {
    let a = a.abs();
    let la = a.ln();
    let bracket = tstar_bracket(a);
    let mut out = TstarEstimate { a, estimate: None, status: TstarStatus::NoBlowUp, bracket: bracket.clone(), log_a: la };
    if a <= 1.0 {
        return out;
    }
    let diverges = |t: f64| astar_from_table(un, t).estimate <= a;
    let t_min = 1e-3;
    let dt = 0.01;
    let mut prev = t_min;
    let mut found = None;
    if diverges(t_min) {
        found = Some((0.0, t_min));
    } else {
        let mut t = t_min;
        while t < la {
            t = (t + dt).min(la);
            if diverges(t) {
                found = Some((prev, t));
                break;
            }
            prev = t;
        }
    }
    let undecidable = a <= ASTARSTAR_UPPER;
    match found {
        Some((mut lo, mut hi)) => {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if diverges(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.estimate = Some(hi.min(la));
            out.status = if undecidable { TstarStatus::InsideBracket } else { TstarStatus::BlowUp };
        }
        None => {
            out.status = if undecidable { TstarStatus::InsideBracket } else { TstarStatus::ExtrapolationFailure };
        }
    }
    out
}

pub fn burgers_tstar(a: f64, n: usize) -> TstarEstimate {
    tstar_from_table(&burgers_un(n), a)
}

#[derive(Clone, Debug, Serialize)]
pub struct BurgersAnalysis {
    pub a: f64,
    pub n: usize,
    pub un: Vec<Value>,
    pub astar_curve: Vec<AstarEstimate>,
    pub astarstar: AstarStar,
    pub tstar: TstarEstimate,
}

pub fn burgers_analysis(a: f64, n: usize, tgrid: &[f64]) -> BurgersAnalysis {
    let un = burgers_un(n);
    let star = astarstar_from_table(&un, tgrid);
    let tstar = tstar_from_table(&un, a);
    BurgersAnalysis { a, n, un: un.iter().map(QPoly::to_json).collect(), astar_curve: star.curve.clone(), astarstar: star, tstar }
}

/// v(t,x) = Σ (−a)ⁿ/n! e^{inx − n²t}; u = v_x/v solves u_t = u_xx + 2uu_x
/// with u(0) = −iae^{ix}.
pub fn colehopf_v(a: C64, t: f64, x: f64, terms: usize) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    let mut coef = C64::new(1.0, 0.0);
    for n in 0..terms {
        if n > 0 {
            coef *= -a / n as f64;
        }
        let nf = n as f64;
        let ph = C64::from_polar((-nf * nf * t).exp(), nf * x);
        sum += coef * ph;
    }
    sum
}

fn phase_step(a: C64, b: C64) -> f64 {
    (b / a).arg()
}

/// Zeros of v(t,·) inside the strip between ℝ and the data's singular
/// line, counted by winding number along x ∈ [0, 2π] with local refinement.
pub fn colehopf_winding(a: C64, t: f64, samples: usize, terms: usize) -> i64 {
    let v = |x: f64| colehopf_v(a, t, x, terms);
    let mut total = 0.0;
    let h = std::f64::consts::TAU / samples as f64;
    fn seg(v: &dyn Fn(f64) -> C64, x0: f64, x1: f64, f0: C64, f1: C64, depth: u32) -> f64 {
        let d = phase_step(f0, f1);
        if d.abs() < 0.5 || depth > 40 {
            return d;
        }
        let xm = 0.5 * (x0 + x1);
        let fm = v(xm);
        seg(v, x0, xm, f0, fm, depth + 1) + seg(v, xm, x1, fm, f1, depth + 1)
    }
    let mut f0 = v(0.0);
    for i in 0..samples {
        let x0 = i as f64 * h;
        let x1 = x0 + h;
        let f1 = v(x1);
        total += seg(&v, x0, x1, f0, f1, 0);
        f0 = f1;
    }
    (total / std::f64::consts::TAU).round() as i64
}

#[derive(Clone, Debug, Serialize)]
pub struct ColeHopfResult {
    pub a: f64,
    pub t_ch: f64,
    pub terms: usize,
    pub min_abs_v: f64,
}

/// First t at which v(t,·) vanishes somewhere on ℝ.
pub fn colehopf_first_zero(a: C64, samples: usize, tsearch: (f64, f64), terms: usize) -> Result<ColeHopfResult, CaseError> {
    let count = |t: f64| colehopf_winding(a, t, samples, terms);
    let base = count(tsearch.0);
    let dt = 0.005;
    let mut t = tsearch.0;
    let mut bracket = None;
    while t < tsearch.1 {
        let t1 = (t + dt).min(tsearch.1);
        if count(t1) != base {
            bracket = Some((t, t1));
            break;
        }
        t = t1;
    }
    let (mut lo, mut hi) = bracket.ok_or(CaseError::NoZero(tsearch.0, tsearch.1))?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count(mid) != base {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let t_ch = 0.5 * (lo + hi);
    let min_abs_v = (0..samples).map(|i| colehopf_v(a, t_ch, i as f64 * std::f64::consts::TAU / samples as f64, terms).norm()).fold(f64::INFINITY, f64::min);
    Ok(ColeHopfResult { a: a.norm(), t_ch, terms, min_abs_v })
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeRow {
    pub n: usize,
    pub frequency: String,
    pub coefficient: String,
    pub expected: String,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeOracle {
    pub rows: Vec<OdeRow>,
    pub atoms: usize,
    pub residual_zero: bool,
}

impl OdeOracle {
    pub fn passed(&self) -> bool {
        self.residual_zero && self.rows.iter().all(|r| r.exact)
    }
}

/// Lattice solve of v' = v² from a point mass a at c, truncated at m·c; the
/// atom at (n+1)c must carry exactly a^{n+1} tⁿ.
pub fn ode_lattice_oracle(a: &QComplex, c: &BigRational, m: i64) -> Result<OdeOracle, CaseError> {
    if !c.is_positive() || m < 1 {
        return Err(CaseError::Param("need c > 0 and m >= 1".into()));
    }
    let (eq, h) = builtin("ode_square", &Value::Null).map_err(SolveError::from)?;
    let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
    u0.insert_scalar(FreqPoint::new(vec![c.clone()]), a.clone());
    let lam = c * BigRational::from_integer(m.into());
    let sol = solve_lattice(&eq, &h, &u0, &lam)?;
    let zero = ExpPoly::<QComplex>::zero();
    let mut power = a.clone();
    let rows = (0..m as usize)
        .map(|n| {
            let x = FreqPoint::new(vec![c * BigRational::from_integer((n as i64 + 1).into())]);
            let got = sol.spectrum.get(&x).map(|v| &v[0]).unwrap_or(&zero);
            let want = ExpPoly::term(QComplex::zero(), n as u32, power.clone());
            power = power.clone() * a.clone();
            OdeRow { n, frequency: x.to_string(), coefficient: got.to_json().to_string(), expected: want.to_json().to_string(), exact: *got == want }
        })
        .collect();
    Ok(OdeOracle { rows, atoms: sol.spectrum.len(), residual_zero: sol.residual.map(|r| r.exact_zero).unwrap_or(false) })
}

/// Picard iterate v_n(t) = Σ_k c_{n,k} t^k of v' = v², v(0) = 1, stored as
/// numerators over one common denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardIterate {
    pub n: usize,
    pub denom: BigUint,
    pub numer: Vec<BigUint>,
}

impl PicardIterate {
    pub fn coeff(&self, k: usize) -> BigRational {
        let num = self.numer.get(k).cloned().unwrap_or_default();
        BigRational::new(BigInt::from(num), BigInt::from(self.denom.clone()))
    }

    /// c_k = 1 for k ≤ n and 0 < c_k < 1 beyond, up to degree 2ⁿ − 1.
    pub fn pattern_holds(&self) -> bool {
        self.numer.len() == 1 << self.n
            && self.numer.iter().enumerate().all(|(k, p)| if k <= self.n { *p == self.denom } else { !p.is_zero() && *p < self.denom })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardRow {
    pub n: usize,
    pub terms: usize,
    pub denom_bits: u64,
    pub pattern_holds: bool,
}

fn pack_slots(p: &[BigUint], w: usize) -> BigUint {
    let mut d = vec![0u32; p.len() * w];
    for (k, c) in p.iter().enumerate() {
        for (i, x) in c.to_u32_digits().into_iter().enumerate() {
            d[k * w + i] = x;
        }
    }
    BigUint::new(d)
}

fn unpack_slots(x: &BigUint, w: usize, n: usize) -> Vec<BigUint> {
    let d = x.to_u32_digits();
    (0..n)
        .map(|k| {
            let lo = (k * w).min(d.len());
            let hi = ((k + 1) * w).min(d.len());
            BigUint::from_slice(&d[lo..hi])
        })
        .collect()
}

/// Exact iterates v_0..=v_{n_max}. Squaring uses one big multiplication on
/// coefficients packed into fixed-width slots wide enough to avoid carries.
pub fn ode_picard(n_max: usize) -> Vec<PicardIterate> {
    let mut out = vec![PicardIterate { n: 0, denom: BigUint::one(), numer: vec![BigUint::one()] }];
    for n in 1..=n_max {
        let prev = out.last().unwrap();
        let len = prev.numer.len();
        let maxbits = prev.numer.iter().map(|c| c.bits()).max().unwrap_or(0) as usize;
        let slot = 2 * maxbits + (usize::BITS - len.leading_zeros()) as usize + 1;
        let w = slot.div_ceil(32);
        let x = pack_slots(&prev.numer, w);
        let sq = unpack_slots(&(&x * &x), w, 2 * len - 1);
        let kmax = 2 * len - 1;
        let l = (1..=kmax).fold(BigUint::one(), |acc, k| acc.lcm(&BigUint::from(k)));
        let denom = &prev.denom * &prev.denom * &l;
        let mut numer = Vec::with_capacity(kmax + 1);
        numer.push(denom.clone());
        for (k, s) in sq.iter().enumerate() {
            numer.push(s * (&l / BigUint::from(k + 1)));
        }
        out.push(PicardIterate { n, denom, numer });
    }
    out
}

pub fn picard_rows(seq: &[PicardIterate]) -> Vec<PicardRow> {
    seq.iter()
        .map(|v| PicardRow { n: v.n, terms: v.numer.len(), denom_bits: v.denom.bits(), pattern_holds: v.pattern_holds() })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CosineReport {
    pub k_max: usize,
    /// a_{0,2k−1} = C(2k,k)/4^k as exact fractions
    pub coefficients: Vec<String>,
    pub first_is_half: bool,
    pub ratio_law: bool,
    pub ratio_bound: bool,
    pub termwise_harmonic: bool,
    /// (t, partial sum, harmonic comparison)
    pub partial_sums: Vec<(f64, f64, f64)>,
}

pub fn cosine_coefficients(k_max: usize) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(k_max);
    let mut c = BigRational::new(1.into(), 2.into());
    for k in 1..=k_max {
        out.push(c.clone());
        // C(2k+2,k+1)/4^{k+1} = C(2k,k)/4^k · (2k+1)/(2k+2)
        c *= BigRational::new(BigInt::from(2 * k + 1), BigInt::from(2 * k + 2));
    }
    out
}

/// Zero-mode coefficients of Σ tⁿ cosⁿ⁺¹ and their divergence as t → 1⁻.
pub fn cosine_zero_mode(k_max: usize, ts: &[f64]) -> CosineReport {
    let cs = cosine_coefficients(k_max);
    let half = BigRational::new(1.into(), 2.into());
    let ratio_law = cs.windows(2).enumerate().all(|(i, w)| {
        let k = i + 1;
        &w[1] / &w[0] == BigRational::new(BigInt::from(2 * k + 1), BigInt::from(2 * k + 2))
    });
    let ratio_bound = cs.windows(2).enumerate().all(|(i, w)| {
        let k = i + 1;
        &w[1] / &w[0] >= BigRational::new(BigInt::from(k), BigInt::from(k + 1))
    });
    let termwise_harmonic = cs.iter().enumerate().all(|(i, c)| *c >= BigRational::new(1.into(), BigInt::from(2 * (i + 1))));
    let cf: Vec<f64> = cs.iter().map(q_to_f64).collect();
    let partial_sums = ts
        .iter()
        .map(|&t| {
            let mut s = 0.0;
            let mut h = 0.0;
            for (i, c) in cf.iter().enumerate() {
                let k = (i + 1) as f64;
                let p = t.powf(2.0 * k - 1.0);
                s += c * p;
                h += p / (2.0 * k);
            }
            (t, s, h)
        })
        .collect();
    CosineReport {
        k_max,
        coefficients: cs.iter().map(|c| c.to_string()).collect(),
        first_is_half: cs.first() == Some(&half),
        ratio_law,
        ratio_bound,
        termwise_harmonic,
        partial_sums,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeRow {
    pub n: usize,
    pub t: f64,
    pub lower_bound: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub upper_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct CascadeBounds {
    /// f̲_n and f̄_n as exponential polynomials
    pub lower: Vec<ExpPoly<QComplex>>,
    pub upper: Vec<ExpPoly<QComplex>>,
    pub rows: Vec<CascadeRow>,
}

impl CascadeBounds {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn eval_scaled(u: &QPoly, lambda: f64, beta: f64, n: usize, t: f64) -> (f64, f64) {
    // λ^{n−1} U_n(βt), returned as (ln value, value)
    let p = Powers::new(&f64_to_q(beta * t), u.degree() as usize, n);
    let ln = p.fix.ln_abs(&u.eval_fixed(&p.pows)) + (n as f64 - 1.0) * lambda.ln();
    (ln, ln.exp())
}

/// Sub/super-solutions of the positive heat cascade:
/// f_n = c∫₀ᵗ n e^{−b²n(n−1)(t−s)} Σ f_k f_{n−k} ds, with (c, b) = (c̲, b̄) or (c̄, b̲).
/// Both are (c/b²)^{n−1} U_n(b²t) for the Burgers polynomials U_n.
pub fn cascade_bounds(bl: f64, bu: f64, cl: f64, cu: f64, n_max: usize, ts: &[f64], tol: f64) -> Result<CascadeBounds, CaseError> {
    if !(bl > 0.0 && bl <= bu && cl > 0.0 && cl <= cu) {
        return Err(CaseError::Param("need 0 < b_lo <= b_hi and 0 < c_lo <= c_hi".into()));
    }
    if cl > bl * bl || cu > bu * bu {
        return Err(CaseError::Param("inner products cannot exceed squared radii: need c_lo <= b_lo^2 and c_hi <= b_hi^2".into()));
    }
    let un = burgers_un(n_max);
    let (bu2, bl2) = (f64_to_q(bu * bu), f64_to_q(bl * bl));
    let scaled = |beta: &BigRational, c: f64| -> Vec<ExpPoly<QComplex>> {
        let lam = f64_to_q(c) / beta;
        un.iter()
            .enumerate()
            .map(|(i, u)| u.to_exppoly(beta).scale(&qc_real(num_traits::pow(lam.clone(), i))))
            .collect()
    };
    let lower = scaled(&bu2, cl);
    let upper = scaled(&bl2, cu);
    let lam_lo = cl / (bu * bu);
    let lam_hi = cu / (bl * bl);
    let rows = ts
        .par_iter()
        .flat_map_iter(|&t| {
            let un = &un;
            (1..=n_max).map(move |n| {
                let u = &un[n - 1];
                let (ln_lo, f_lower) = eval_scaled(u, lam_lo, bu * bu, n, t);
                let (ln_hi, f_upper) = eval_scaled(u, lam_hi, bl * bl, n, t);
                let ln_lb = (n as f64 - 1.0) * (lam_lo * -(-2.0 * bu * bu * t).exp_m1()).ln();
                let ln_ub = (n as f64 - 1.0) * lam_hi.ln();
                // relative tolerance, compared on the log scale
                let pass = ln_lo >= ln_lb - tol && ln_lo <= ln_hi + tol && ln_hi <= ln_ub + tol;
                CascadeRow { n, t, lower_bound: ln_lb.exp(), f_lower, f_upper, upper_bound: ln_ub.exp(), pass }
            })
        })
        .collect();
    Ok(CascadeBounds { lower, upper, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryReport {
    pub name: String,
    pub z: C64,
    /// constant stated alongside the candidate
    pub stated: C64,
    pub best_fit: C64,
    pub residual_stated: f64,
    pub residual_best: f64,
    /// residual density at the stated constant, as (power, rate, coefficient)
    pub residual_terms: Vec<(u32, C64, C64)>,
    /// ‖linear part‖ and ‖nonlinear part‖ at the stated constant
    pub linear_norm: f64,
    pub nonlinear_norm: f64,
    pub nonlinear_degree: u32,
}

fn dens_norm(d: &ExpDensity) -> f64 {
    d.terms.iter().map(|t| t.2.norm()).sum()
}

fn dens_inner(a: &ExpDensity, b: &ExpDensity) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for x in &a.terms {
        for y in &b.terms {
            if x.0 == y.0 && (x.1 - y.1).norm() <= 1e-14 * x.1.norm().max(1.0) {
                s += x.2.conj() * y.2;
            }
        }
    }
    s
}

/// Candidate shape and the linear and nonlinear parts of the stationary
/// equation on ξ > 0, as functions of the amplitude c: R(c) = c·L + c^k·N
/// (for nls_star the cubic part is c|c|²·N).
fn stationary_parts(name: &str, z: C64, params: &Value) -> Result<(ExpDensity, ExpDensity, ExpDensity, C64, u32), CaseError> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let getc = |k: &str, d: f64| -> Result<C64, CaseError> {
        match params.get(k) {
            None => Ok(C64::new(d, 0.0)),
            Some(Value::Number(n)) => Ok(C64::new(n.as_f64().unwrap(), 0.0)),
            Some(v) => {
                let re = v.get("re").and_then(Value::as_f64).unwrap_or(0.0);
                let im = v.get("im").and_then(Value::as_f64).unwrap_or(0.0);
                if v.get("re").is_none() && v.get("im").is_none() {
                    return Err(CaseError::Param(format!("{} must be a number or {{re, im}}", k)));
                }
                Ok(C64::new(re, im))
            }
        }
    };
    match name {
        "kdv" => {
            // û = −c ξ e^{−zξ}; û_t = iξ³û + 3iξ(û*û)
            let shape = ExpDensity::term(1, z, -one);
            let lin = shape.mul_monomial(i, 3);
            let non = shape.convolve(&shape).mul_monomial(3.0 * i, 1);
            Ok((shape, lin, non, one, 2))
        }
        "clm" => {
            // v̂ = −c ξ e^{−zξ}; v̂_t = −εξ²v̂ + v̂ * (i sign ξ v̂)
            let eps = getc("eps", 1.0)?;
            let shape = ExpDensity::term(1, z, -one);
            let lin = shape.mul_monomial(-eps, 2);
            let non = shape.convolve(&shape.scale(i));
            Ok((shape, lin, non, 6.0 * i * eps, 2))
        }
        "nls_star" => {
            // û = −ic e^{−zξ}; û_t = −iξ²û − iα û*û*û^⋆ with u^⋆ = conj(u(−x))
            let alpha = getc("alpha", -1.0)?;
            if alpha.norm() == 0.0 {
                return Err(CaseError::Param("alpha must be nonzero".into()));
            }
            let shape = ExpDensity::term(0, z, -i);
            let lin = shape.mul_monomial(-i, 2);
            let non = shape.convolve(&shape).convolve(&shape.star()).scale(-i * alpha);
            Ok((shape, lin, non, (2.0 / alpha).sqrt(), 3))
        }
        other => Err(CaseError::Param(format!("no stationary candidate for {}", other))),
    }
}

/// Residual of a stationary candidate, with the constant that minimizes it.
pub fn stationary_residual(name: &str, z: C64, params: &Value) -> Result<StationaryReport, CaseError> {
    if !(z.re > 0.0) {
        return Err(CaseError::Param("need Re z > 0".into()));
    }
    let (_, lin, non, stated, deg) = stationary_parts(name, z, params)?;
    let residual = |c: C64| -> ExpDensity {
        let nl = if deg == 3 { c * c.norm_sqr() } else { c * c };
        lin.scale(c).add(&non.scale(nl))
    };
    // R(c)/c = L + w·N with w = c (quadratic) or |c|² (cubic); least squares in w
    let w = -dens_inner(&non, &lin) / dens_inner(&non, &non);
    let best_fit = if deg == 3 { C64::new(w.re.max(0.0).sqrt(), 0.0) } else { w };
    let r_stated = residual(stated);
    let r_best = residual(best_fit);
    let scale = dens_norm(&lin.scale(stated)).max(1e-300);
    let nl = if deg == 3 { stated * stated.norm_sqr() } else { stated * stated };
    Ok(StationaryReport {
        name: name.into(),
        z,
        stated,
        best_fit,
        residual_stated: dens_norm(&r_stated) / scale,
        // no nontrivial cubic fit when w ≤ 0; R(c)/‖cL‖ → 1 as c → 0
        residual_best: if best_fit.norm() == 0.0 { 1.0 } else { dens_norm(&r_best) / dens_norm(&lin.scale(best_fit)) },
        residual_terms: r_stated.terms.clone(),
        linear_norm: dens_norm(&lin.scale(stated)),
        nonlinear_norm: dens_norm(&non.scale(nl)),
        nonlinear_degree: deg,
    })
}

/// Linear and nonlinear parts at amplitude c, for homogeneity checks.
pub fn stationary_parts_at(name: &str, z: C64, params: &Value, c: C64) -> Result<(ExpDensity, ExpDensity), CaseError> {
    let (_, lin, non, _, deg) = stationary_parts(name, z, params)?;
    let nl = if deg == 3 { c * c.norm_sqr() } else { c * c };
    Ok((lin.scale(c), non.scale(nl)))
}

/// The candidate density û(ξ) at amplitude c.
pub fn stationary_candidate(name: &str, z: C64, params: &Value, c: C64) -> Result<ExpDensity, CaseError> {
    Ok(stationary_parts(name, z, params)?.0.scale(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    #[test]
    fn first_polynomials() {
        let un = burgers_un(3);
        assert_eq!(un[0], QPoly::one());
        assert_eq!(un[1].coeffs(), vec![(0, q(1, 1)), (1, q(-1, 1))]);
        assert_eq!(un[2].coeffs(), vec![(0, q(1, 1)), (1, q(-3, 2)), (3, q(1, 2))]);
    }

    #[test]
    fn degrees_and_values() {
        let un = burgers_un(12);
        for (i, u) in un.iter().enumerate() {
            let n = i + 1;
            assert!(u.degree() as usize <= n * (n - 1) / 2);
            // U_n(0) = 0 for n ≥ 2
            if n > 1 {
                assert!(u.eval_q(&BigRational::one()).is_zero());
            }
        }
    }

    #[test]
    fn u3_by_quadrature() {
        // U_3(t) = 3∫₀ᵗ e^{−6(t−s)} 2U_2(s) ds, Simpson on a fine grid
        let un = burgers_un(3);
        let t = 0.7;
        let m = 2000;
        let h = t / m as f64;
        let f = |s: f64| 6.0 * (-6.0 * (t - s)).exp() * (1.0 - (-2.0 * s).exp());
        let mut acc = f(0.0) + f(t);
        for j in 1..m {
            acc += f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let simpson = acc * h / 3.0;
        assert!((simpson - un[2].eval(t)).abs() < 1e-10);
    }

    #[test]
    fn matches_ode_integration() {
        let un = burgers_un(15);
        for t in [0.2, 1.0, 2.5] {
            let ode = burgers_ode(15, t, 40_000);
            let logs = ln_un_at(&un, &f64_to_q(t));
            for n in 0..15 {
                assert!((logs[n].exp() - ode[n]).abs() < 1e-9, "n={} t={}", n + 1, t);
            }
        }
    }

    #[test]
    fn exppoly_route_agrees() {
        // the recursion run directly with ExpPoly Duhamel integrals
        let un = burgers_un(8);
        let mut e: Vec<ExpPoly<QComplex>> = vec![ExpPoly::constant(qc_real(q(1, 1)))];
        for n in 2..=8usize {
            let mut s = ExpPoly::zero();
            for k in 1..n {
                s = s.add(&e[k - 1].mul(&e[n - k - 1]));
            }
            let s = s.scale(&qc_real(q(n as i64, 1)));
            e.push(s.duhamel(&qc_real(q(-((n * (n - 1)) as i64), 1))));
        }
        for n in 0..8 {
            assert_eq!(e[n], un[n].to_exppoly(&q(1, 1)));
        }
    }

    #[test]
    fn sandwich_small() {
        let un = burgers_un(20);
        let ts: Vec<BigRational> = (1..=20).map(|j| q(j, 4)).collect();
        assert!(burgers_sandwich(&un, &ts).iter().all(|r| r.pass));
    }

    #[test]
    fn astar_brackets() {
        let un = burgers_un(30);
        for t in [0.3, 0.55, 1.0, 2.0] {
            let e = astar_from_table(&un, t);
            assert!(e.inside, "{:?}", e);
        }
        let far = astar_from_table(&un, 6.0);
        assert!((far.estimate / far.lower - 1.0).abs() < 1e-4);
        assert!((astar_upper(0.5 * 3f64.ln()) - ASTARSTAR_UPPER).abs() < 1e-12);
    }

    #[test]
    fn tstar_brackets() {
        assert!(tstar_bracket(0.5).is_empty());
        let b = tstar_bracket(10.0);
        assert_eq!(b.len(), 2);
        assert!(astar_upper(b[0].1) >= 10.0 - 1e-9);
        let un = burgers_un(30);
        let r = tstar_from_table(&un, 2.0);
        assert_eq!(r.status, TstarStatus::InsideBracket);
    }

    #[test]
    fn colehopf_matches_series() {
        // v has no zero at t = 0, since v(0,x) = exp(−ae^{ix})
        assert_eq!(colehopf_winding(C64::new(5.0, 0.0), 0.0, 512, 80), 0);
        let small = colehopf_first_zero(C64::new(0.5, 0.0), 512, (0.0, 3.0), 60);
        assert!(small.is_err());
    }

    #[test]
    fn ode_lattice_powers() {
        let a = crate::scalar::qc(q(3, 2), q(-1, 3));
        let o = ode_lattice_oracle(&a, &q(2, 3), 8).unwrap();
        assert_eq!(o.rows.len(), 8);
        assert_eq!(o.atoms, 8);
        assert!(o.passed());
        assert!(ode_lattice_oracle(&a, &q(-1, 1), 8).is_err());
    }

    #[test]
    fn picard_engine_matches_lattice_iteration() {
        use crate::equations::builtin;
        use crate::scalar::qc_real;
        use crate::solver::{picard_sequence, poly_coeffs};
        use crate::spectral::{AtomicSpectrum, FreqPoint};
        let (eq, h) = builtin("ode_square", &Value::Null).unwrap();
        let a = q(2, 1);
        let mut u0 = AtomicSpectrum::<QComplex>::scalar(1);
        u0.insert_scalar(FreqPoint::from_ints(&[1]), qc_real(a.clone()));
        let n = 5;
        let lattice = picard_sequence(&eq, &h, &u0, &q(64, 1), n).unwrap();
        let fast = ode_picard(n);
        for (v, sol) in fast.iter().zip(&lattice) {
            assert!(v.pattern_holds());
            assert_eq!(sol.spectrum.len(), v.numer.len());
            for k in 0..v.numer.len() {
                let c = poly_coeffs(&sol.spectrum.get(&FreqPoint::from_ints(&[k as i64 + 1])).unwrap()[0]).unwrap();
                let want = v.coeff(k) * num_traits::pow(a.clone(), k + 1);
                assert_eq!(c.len(), 1);
                assert_eq!(c[&(k as u32)], qc_real(want));
            }
        }
    }

    #[test]
    fn cosine_examples() {
        let cs = cosine_coefficients(3);
        assert_eq!(cs[0], q(1, 2));
        assert_eq!(cs[1], q(3, 8));
        assert_eq!(cs[2], q(5, 16));
        // independent: zero mode of ((e^{ix}+e^{−ix})/2)^{2k} by repeated convolution
        // index j of p holds the coefficient of e^{i(2j−n)x} after n factors
        let mut p: Vec<BigRational> = vec![BigRational::one()];
        let half = BigRational::new(1.into(), 2.into());
        for n in 1..=24usize {
            let mut next = vec![BigRational::zero(); p.len() + 1];
            for (j, c) in p.iter().enumerate() {
                next[j] += c * &half;
                next[j + 1] += c * &half;
            }
            p = next;
            if n % 2 == 0 {
                assert_eq!(p[n / 2], cosine_coefficients(n / 2)[n / 2 - 1]);
            }
        }
        let rep = cosine_zero_mode(200, &[0.9, 0.999]);
        assert!(rep.first_is_half && rep.ratio_law && rep.ratio_bound && rep.termwise_harmonic);
    }

    #[test]
    fn cascade_collapses_when_symmetric() {
        let c = cascade_bounds(1.0, 1.0, 0.5, 0.5, 10, &[0.1, 1.0], 1e-10).unwrap();
        assert_eq!(c.lower, c.upper);
        assert!(c.all_pass());
        assert_eq!(c.lower[0], ExpPoly::constant(qc_real(q(1, 1))));
        assert!(cascade_bounds(1.0, 0.5, 0.5, 0.5, 5, &[0.1], 1e-10).is_err());
    }

    #[test]
    fn stationary_constants() {
        let z = C64::new(0.7, 0.2);
        let p = json!({"eps": 0.3});
        let r = stationary_residual("clm", z, &p).unwrap();
        assert!(r.residual_stated < 1e-12, "{:?}", r);
        let k = stationary_residual("kdv", z, &Value::Null).unwrap();
        assert!((k.best_fit - C64::new(2.0, 0.0)).norm() < 1e-12);
        assert!(k.residual_best < 1e-12);
        let n = stationary_residual("nls_star", C64::new(0.7, 0.0), &json!({"alpha": -0.5})).unwrap();
        assert!((n.best_fit.norm() - 2.0).abs() < 1e-12);
        // (ξe^{−zξ}) * (ξe^{−zξ}) = ξ³e^{−zξ}/6
        let s = ExpDensity::term(1, z, C64::new(1.0, 0.0));
        let c = s.convolve(&s);
        assert_eq!(c.terms.len(), 1);
        assert!((c.terms[0].2 - C64::new(1.0 / 6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn stationary_homogeneity() {
        let z = C64::new(1.0, 0.0);
        let c = C64::new(0.3, 0.4);
        let (l1, n1) = stationary_parts_at("kdv", z, &Value::Null, c).unwrap();
        let (l2, n2) = stationary_parts_at("kdv", z, &Value::Null, 2.0 * c).unwrap();
        assert_eq!(l1.scale(C64::new(2.0, 0.0)), l2);
        assert_eq!(n1.scale(C64::new(4.0, 0.0)), n2);
    }
}
