use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHI_TABLE_VERSION: &str = "chi-expbump-v1";
/// Highest derivative order kept in the cutoff table.
pub const CHI_MAX_ORDER: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonoError {
    #[error("negative abscissa {0}")]
    NegativeArgument(f64),
    #[error("invalid monotone function: {0}")]
    Invalid(String),
    #[error("cutoff table only covers derivative orders up to {max}, requested {requested}")]
    OrderTooHigh { requested: f64, max: usize },
    #[error("samples have unbounded R0(x)/|x| near zero")]
    Unbounded,
}

/// Piecewise-linear nondecreasing function on [0, ∞) with a linear tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MonoRepr", into = "MonoRepr")]
pub struct MonotoneFn {
    xs: Vec<f64>,
    ys: Vec<f64>,
    tail_slope: f64,
}

#[derive(Serialize, Deserialize)]
struct MonoRepr {
    points: Vec<[f64; 2]>,
    tail_slope: f64,
}

impl TryFrom<MonoRepr> for MonotoneFn {
    type Error = MonoError;
    fn try_from(r: MonoRepr) -> Result<Self, MonoError> {
        MonotoneFn::new(r.points.iter().map(|p| p[0]).collect(), r.points.iter().map(|p| p[1]).collect(), r.tail_slope)
    }
}

impl From<MonotoneFn> for MonoRepr {
    fn from(f: MonotoneFn) -> Self {
        MonoRepr { points: f.xs.iter().zip(&f.ys).map(|(&x, &y)| [x, y]).collect(), tail_slope: f.tail_slope }
    }
}

impl MonotoneFn {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, tail_slope: f64) -> Result<Self, MonoError> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(MonoError::Invalid("breakpoints and values must be nonempty and of equal length".into()));
        }
        if xs[0] < 0.0 || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(MonoError::Invalid("breakpoints must be finite and nonnegative".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MonoError::Invalid("breakpoints must be strictly ascending".into()));
        }
        if ys[0] < 0.0 || ys.windows(2).any(|w| w[1] < w[0]) {
            return Err(MonoError::Invalid("values must be nonnegative and nondecreasing".into()));
        }
        if !(tail_slope >= 0.0 && tail_slope.is_finite()) {
            return Err(MonoError::Invalid("tail slope must be finite and nonnegative".into()));
        }
        Ok(MonotoneFn { xs, ys, tail_slope })
    }

    pub fn zero() -> Self {
        MonotoneFn { xs: vec![0.0], ys: vec![0.0], tail_slope: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        MonotoneFn::new(vec![0.0], vec![c], 0.0).expect("constant must be nonnegative")
    }

    /// f(l) = slope·l
    pub fn linear(slope: f64) -> Self {
        MonotoneFn::new(vec![0.0], vec![0.0], slope).expect("slope must be nonnegative")
    }

    /// Interpolates `f` on the given ascending abscissas; values are forced
    /// nondecreasing by a running max.
    pub fn sample(f: impl Fn(f64) -> f64, xs: &[f64], tail_slope: f64) -> Result<Self, MonoError> {
        let mut ys = Vec::with_capacity(xs.len());
        let mut run = 0.0f64;
        for &x in xs {
            run = run.max(f(x));
            ys.push(run);
        }
        MonotoneFn::new(xs.to_vec(), ys, tail_slope)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn last_breakpoint(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn eval(&self, l: f64) -> Result<f64, MonoError> {
        if l < 0.0 || l.is_nan() {
            return Err(MonoError::NegativeArgument(l));
        }
        Ok(self.at(l))
    }

    /// Evaluation without the sign check; negative arguments clamp to 0.
    pub fn at(&self, l: f64) -> f64 {
        let xs = &self.xs;
        let n = xs.len();
        if l <= xs[0] {
            return self.ys[0];
        }
        if l >= xs[n - 1] {
            return self.ys[n - 1] + self.tail_slope * (l - xs[n - 1]);
        }
        let i = xs.partition_point(|&x| x <= l) - 1;
        let (x0, x1) = (xs[i], xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let w = (l - x0) / (x1 - x0);
        (y0 + w * (y1 - y0)).clamp(y0, y1)
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.at(0.0) == 0.0
    }

    pub fn in_c_delta(&self, delta: f64) -> bool {
        self.vanishes_at_zero() && self.at(2.0 * delta) <= 0.5
    }

    fn merged_grid(&self, other: &MonotoneFn) -> Vec<f64> {
        let mut g: Vec<f64> = self.xs.iter().chain(&other.xs).copied().collect();
        g.push(0.0);
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// Pointwise combination on the union of breakpoints. Exact for sums;
    /// for max the crossing points are added so the result is exact as well.
    pub fn sum(&self, other: &MonotoneFn) -> MonotoneFn {
        let g = self.merged_grid(other);
        let ys = g.iter().map(|&x| self.at(x) + other.at(x)).collect();
        MonotoneFn::new(g, ys, self.tail_slope + other.tail_slope).unwrap()
    }

    pub fn max(&self, other: &MonotoneFn) -> MonotoneFn {
        let mut g = self.merged_grid(other);
        let mut extra = Vec::new();
        for w in g.windows(2) {
            let (a, b) = (w[0], w[1]);
            let da = self.at(a) - other.at(a);
            let db = self.at(b) - other.at(b);
            if da * db < 0.0 {
                extra.push(a + (b - a) * da / (da - db));
            }
        }
        let last = *g.last().unwrap();
        let da = self.at(last) - other.at(last);
        let ds = self.tail_slope - other.tail_slope;
        let tail_crossing = da * ds < 0.0;
        if tail_crossing {
            extra.push(last - da / ds);
        }
        g.extend(extra);
        g.sort_by(f64::total_cmp);
        g.dedup();
        let ys = g.iter().map(|&x| self.at(x).max(other.at(x))).collect();
        let last = *g.last().unwrap();
        // past a tail crossing the values at `last` agree only up to rounding
        let tail = if tail_crossing {
            self.tail_slope.max(other.tail_slope)
        } else if self.at(last) > other.at(last) {
            self.tail_slope
        } else if self.at(last) < other.at(last) {
            other.tail_slope
        } else {
            self.tail_slope.max(other.tail_slope)
        };
        MonotoneFn::new(g, ys, tail).unwrap()
    }

    pub fn scale(&self, c: f64) -> MonotoneFn {
        assert!(c >= 0.0);
        MonotoneFn { xs: self.xs.clone(), ys: self.ys.iter().map(|y| y * c).collect(), tail_slope: self.tail_slope * c }
    }

    /// Adds breakpoints without changing the function.
    pub fn with_breakpoints(&self, extra: &[f64]) -> MonotoneFn {
        let mut g: Vec<f64> = self.xs.iter().chain(extra.iter().filter(|x| **x >= 0.0)).copied().collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        let ys = g.iter().map(|&x| self.at(x)).collect();
        MonotoneFn::new(g, ys, self.tail_slope).unwrap()
    }
}

/// Nonincreasing function with values in (0, 1], stored as `top − g` with g monotone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    top: f64,
    drop: MonotoneFn,
}

impl Kappa {
    pub fn new(top: f64, drop: MonotoneFn) -> Result<Self, MonoError> {
        if !(top > 0.0 && top <= 1.0) {
            return Err(MonoError::Invalid("kappa(0) must lie in (0,1]".into()));
        }
        if drop.tail_slope() != 0.0 || !drop.vanishes_at_zero() {
            return Err(MonoError::Invalid("kappa drop must vanish at 0 and have zero tail slope".into()));
        }
        if top - drop.values().last().unwrap() <= 0.0 {
            return Err(MonoError::Invalid("kappa must stay positive".into()));
        }
        Ok(Kappa { top, drop })
    }

    pub fn constant(c: f64) -> Result<Self, MonoError> {
        Kappa::new(c, MonotoneFn::zero())
    }

    /// From nonincreasing samples (x_i, κ_i) with x_0 = 0, constant after the last.
    pub fn from_points(xs: Vec<f64>, ks: Vec<f64>) -> Result<Self, MonoError> {
        if ks.is_empty() {
            return Err(MonoError::Invalid("empty kappa".into()));
        }
        let top = ks[0];
        let drop = MonotoneFn::new(xs, ks.iter().map(|k| top - k).collect(), 0.0)?;
        Kappa::new(top, drop)
    }

    pub fn at(&self, l: f64) -> f64 {
        self.top - self.drop.at(l)
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.drop.breakpoints()
    }

    pub fn min_value(&self) -> f64 {
        self.top - self.drop.values().last().unwrap()
    }
}

/// Scalar weight function used by the condition checker and ρ-norms.
pub trait Weight: Sync {
    fn w(&self, l: f64) -> f64;
    /// Infimum over the half-open interval (a, b]; `b = ∞` allowed.
    fn inf_on(&self, a: f64, _b: f64) -> f64 {
        self.w(a)
    }
}

impl Weight for MonotoneFn {
    fn w(&self, l: f64) -> f64 {
        self.at(l)
    }
}

/// κ(l)·ν(l); not necessarily monotone between breakpoints, so `inf_on`
/// looks at every breakpoint inside the interval (the product is concave on
/// each common linear piece, hence minimized at piece endpoints).
pub struct KappaTimes<'a> {
    pub kappa: &'a Kappa,
    pub nu: &'a MonotoneFn,
}

impl Weight for KappaTimes<'_> {
    fn w(&self, l: f64) -> f64 {
        self.kappa.at(l) * self.nu.at(l)
    }
    fn inf_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.w(a);
        for &x in self.kappa.breakpoints().iter().chain(self.nu.breakpoints()) {
            if x > a && x <= b {
                m = m.min(self.w(x));
            }
        }
        if b.is_finite() {
            m = m.min(self.w(b));
        } else {
            let last = self.kappa.breakpoints().last().unwrap().max(self.nu.last_breakpoint()).max(a);
            m = m.min(self.w(last));
        }
        m
    }
}

/// Certified sup bounds of the cutoff derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub version: String,
    pub chi_derivative_sups: Vec<f64>,
}

impl CutoffProfile {
    pub fn global() -> &'static CutoffProfile {
        static TABLE: OnceLock<CutoffProfile> = OnceLock::new();
        TABLE.get_or_init(build_chi_table)
    }

    /// Evaluates the transition χ (1 on t ≤ 1, 0 on t ≥ 2).
    pub fn chi(t: f64) -> f64 {
        1.0 - psi_jet(t - 1.0, 0)[0]
    }
}

// Ψ(x) = f(x)/(f(x)+f(1−x)), f(x)=exp(−1/x) for x>0. Taylor coefficients at x.
fn psi_jet(x: f64, order: usize) -> Vec<f64> {
    let n = order + 1;
    if x <= 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 0.0;
        return v;
    }
    if x >= 1.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    let a = f_jet(x, n, 1.0);
    let b = f_jet(1.0 - x, n, -1.0);
    let den: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
    series_div(&a, &den)
}

// Taylor coefficients of h ↦ exp(−1/(x + s·h)).
fn f_jet(x: f64, n: usize, s: f64) -> Vec<f64> {
    // −1/(x+sh) = −Σ (−s h)^k / x^{k+1}
    let mut u = vec![0.0; n];
    let mut p = 1.0 / x;
    for (k, uk) in u.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *uk = -sign * s.powi(k as i32) * p;
        p /= x;
    }
    series_exp(&u)
}

fn series_exp(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut e = vec![0.0; n];
    e[0] = u[0].exp();
    for k in 1..n {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * u[j] * e[k - j];
        }
        e[k] = s / k as f64;
    }
    e
}

fn series_div(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n];
    for k in 0..n {
        let mut s = a[k];
        for j in 1..=k {
            s -= b[j] * c[k - j];
        }
        c[k] = s / b[0];
    }
    c
}

fn build_chi_table() -> CutoffProfile {
    let samples = 40_000;
    let mut sups = vec![0.0f64; CHI_MAX_ORDER + 1];
    let mut fact = vec![1.0f64; CHI_MAX_ORDER + 1];
    for k in 1..=CHI_MAX_ORDER {
        fact[k] = fact[k - 1] * k as f64;
    }
    for i in 1..samples {
        let x = i as f64 / samples as f64;
        let jet = psi_jet(x, CHI_MAX_ORDER);
        for k in 1..=CHI_MAX_ORDER {
            sups[k] = sups[k].max((jet[k] * fact[k]).abs());
        }
    }
    for s in sups.iter_mut().skip(1) {
        *s *= 1.1;
    }
    sups[0] = 1.0;
    CutoffProfile { version: CHI_TABLE_VERSION.to_string(), chi_derivative_sups: sups }
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn mchi_integer(delta: f64, n: usize) -> f64 {
    let sups = &CutoffProfile::global().chi_derivative_sups;
    (0..=n).map(|k| binom(n, k) * delta.powi(-(k as i32)) * sups[k]).sum()
}

/// The cutoff constant M^χ_δ(m).
pub fn mchi(delta: f64, m: f64) -> Result<f64, MonoError> {
    if m < 0.0 || m.is_nan() {
        return Err(MonoError::NegativeArgument(m));
    }
    if m <= 0.5 {
        return Ok(1.0 + m);
    }
    if m > CHI_MAX_ORDER as f64 {
        return Err(MonoError::OrderTooHigh { requested: m, max: CHI_MAX_ORDER });
    }
    if m <= 1.0 {
        let w = (m - 0.5) / 0.5;
        return Ok(1.5 + w * (mchi_integer(delta, 1) - 1.5));
    }
    let lo = m.floor() as usize;
    let frac = m - lo as f64;
    let a = mchi_integer(delta, lo);
    if frac == 0.0 {
        return Ok(a);
    }
    let b = mchi_integer(delta, lo + 1);
    Ok(a + frac * (b - a))
}

/// Super-additive majorant of sampled data `(|ξ|, R0(ξ))`.
pub fn superadditive_envelope(samples: &[(f64, f64)]) -> Result<MonotoneFn, MonoError> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for &(r, v) in samples {
        if r < 0.0 || !r.is_finite() || !v.is_finite() {
            return Err(MonoError::Invalid("sample norms must be finite and nonnegative".into()));
        }
        let v = v.max(0.0);
        if r == 0.0 {
            if v > 0.0 {
                return Err(MonoError::Unbounded);
            }
            continue;
        }
        pts.push((r, v / r));
    }
    if pts.is_empty() {
        return Ok(MonotoneFn::zero());
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts[0].1 > 1e12 * (1.0 + pts.iter().map(|p| p.1).fold(0.0, f64::max) / pts.len() as f64) {
        return Err(MonoError::Unbounded);
    }
    // step function R1: jumps at r_i to the running max of the ratios
    let mut rs = Vec::new();
    let mut levels = Vec::new();
    let mut run = 0.0f64;
    for (r, q) in pts {
        run = run.max(q);
        if rs.last() == Some(&r) {
            *levels.last_mut().unwrap() = run;
        } else {
            rs.push(r);
            levels.push(run);
        }
    }
    // F(x) = ∫_0^x R1, piecewise linear with breakpoints rs
    let big_f = |x: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..rs.len() {
            let a = rs[i];
            if x <= a {
                break;
            }
            let b = if i + 1 < rs.len() { rs[i + 1].min(x) } else { x };
            s += levels[i] * (b - a);
        }
        s
    };
    let mut grid: Vec<f64> = vec![0.0];
    for &r in &rs {
        grid.push(r);
        grid.push(r / 2.0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let ys: Vec<f64> = grid.iter().map(|&l| big_f(2.0 * l) - big_f(l)).collect();
    let mut ys_mono = Vec::with_capacity(ys.len());
    let mut m = 0.0f64;
    for y in ys {
        m = m.max(y);
        ys_mono.push(m);
    }
    MonotoneFn::new(grid, ys_mono, *levels.last().unwrap())
}

/// Same construction from points in ℝ^d.
pub fn superadditive_envelope_points(samples: &[(Vec<f64>, f64)]) -> Result<MonotoneFn, MonoError> {
    let s: Vec<(f64, f64)> =
        samples.iter().map(|(x, v)| (x.iter().map(|c| c * c).sum::<f64>().sqrt(), *v)).collect();
    superadditive_envelope(&s)
}

/// Checks f(a)+f(b) ≤ f(a+b)(1+tol) on all grid pairs; returns the first violation.
pub fn is_superadditive(f: &MonotoneFn, grid: &[f64], tol: f64) -> Result<(), (f64, f64)> {
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i..] {
            let lhs = f.at(a) + f.at(b);
            let rhs = f.at(a + b);
            if lhs > rhs * (1.0 + tol) + tol * f64::MIN_POSITIVE {
                return Err((a, b));
            }
        }
    }
    Ok(())
}

pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect()
}
