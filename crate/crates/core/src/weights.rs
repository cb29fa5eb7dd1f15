use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::monofun::{mchi, Kappa, KappaTimes, MonoError, MonotoneFn, Weight, CHI_TABLE_VERSION, DEFAULT_TOL};
use crate::scalar::{f64_to_q, C64};
use crate::spectral::{convolve, AtomicSpectrum, Coef, FreqPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Mono(#[from] MonoError),
    #[error("invalid weight triple: {0}")]
    Triple(String),
    #[error("horizon {horizon} is below l0 = {l0}")]
    Horizon { horizon: f64, l0: f64 },
    #[error("nu1 overflows near l = {0}")]
    Overflow(f64),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("atom at level {0} <= 0")]
    Boundary(f64),
}

/// Input of the weight maps: μ₀ ∈ C^ndc_δ, ν₀ ∈ C^ndc_0, κ nonincreasing in (0,1].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightTriple {
    pub mu0: MonotoneFn,
    pub nu0: MonotoneFn,
    pub kappa: Kappa,
    pub delta: f64,
}

impl WeightTriple {
    pub fn new(mu0: MonotoneFn, nu0: MonotoneFn, kappa: Kappa, delta: f64) -> Result<Self, WeightError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(WeightError::Triple(format!("delta = {} outside (0,1]", delta)));
        }
        if !mu0.in_c_delta(delta) {
            return Err(WeightError::Triple("mu0 must vanish at 0 with mu0(2 delta) <= 1/2".into()));
        }
        if !nu0.vanishes_at_zero() {
            return Err(WeightError::Triple("nu0 must vanish at 0".into()));
        }
        Ok(WeightTriple { mu0, nu0, kappa, delta })
    }

    pub fn from_json(v: &Value) -> Result<Self, WeightError> {
        let get = |k: &str| v.get(k).cloned().ok_or_else(|| WeightError::Triple(format!("missing {}", k)));
        let parse = |k: &str| -> Result<MonotoneFn, WeightError> {
            serde_json::from_value(get(k)?).map_err(|e| WeightError::Triple(format!("{}: {}", k, e)))
        };
        let kappa = match get("kappa")? {
            Value::Number(n) => Kappa::constant(n.as_f64().unwrap_or(0.0))?,
            k => serde_json::from_value(k).map_err(|e| WeightError::Triple(format!("kappa: {}", e)))?,
        };
        let delta = get("delta")?.as_f64().ok_or_else(|| WeightError::Triple("delta must be a number".into()))?;
        WeightTriple::new(parse("mu0")?, parse("nu0")?, kappa, delta)
    }

    pub fn scaled_nu(&self, b: f64) -> WeightTriple {
        WeightTriple { nu0: self.nu0.scale(b), ..self.clone() }
    }

    /// Random triple in the regime where the recursion stays finite over a
    /// horizon of 5δ: gentle μ₀, small ν₀, κ ≥ 1/4.
    pub fn random<R: Rng>(rng: &mut R) -> WeightTriple {
        let delta = rng.gen_range(0.2..=1.0);
        let horizon = 6.0 * delta;
        let knots = |rng: &mut R, n: usize| -> Vec<f64> {
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
            xs.push(0.0);
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        };
        let mono = |rng: &mut R, xs: &[f64], max_slope: f64| -> (Vec<f64>, f64) {
            let mut ys = vec![0.0];
            for w in xs.windows(2) {
                let last = *ys.last().unwrap();
                ys.push(last + rng.gen_range(0.0..max_slope) * (w[1] - w[0]));
            }
            (ys, rng.gen_range(0.0..max_slope))
        };
        let xs = knots(rng, 3);
        let (ys, tail) = mono(rng, &xs, 0.2 / delta);
        let mu0 = MonotoneFn::new(xs, ys, tail).unwrap();
        let xs = knots(rng, 3);
        let (ys, tail) = mono(rng, &xs, 2e-3);
        let nu0 = MonotoneFn::new(xs, ys, tail).unwrap();
        let kx = knots(rng, 2);
        let mut ks = vec![rng.gen_range(0.5..=1.0)];
        for _ in 1..kx.len() {
            let last: f64 = *ks.last().unwrap();
            ks.push(rng.gen_range(0.25f64.min(last)..=last));
        }
        let kappa = Kappa::from_points(kx, ks).unwrap();
        WeightTriple::new(mu0, nu0, kappa, delta).unwrap()
    }
}

fn geq(a: f64, b: f64, tol: f64) -> bool {
    a >= b - tol * b.abs().max(a.abs()) - 1e-300
}

/// 𝔠¹_δ: μ₁(l) = 2^{max(l/δ−3,0)} μ₀(l), sampled up to `horizon`.
///
/// Nodes past 3δ repeat with period δ, so the interpolant keeps
/// 2μ₁(l−δ) ≤ μ₁(l); chords of the convex pieces lie above μ₁.
pub fn cmap1(mu0: &MonotoneFn, delta: f64, horizon: f64) -> Result<MonotoneFn, WeightError> {
    if !mu0.in_c_delta(delta) {
        return Err(WeightError::Triple("mu0 is not in the class C_delta".into()));
    }
    let f = |l: f64| 2f64.powf((l / delta - 3.0).max(0.0)) * mu0.at(l);
    let mut xs: Vec<f64> = mu0.breakpoints().iter().copied().filter(|&x| x <= 3.0 * delta).collect();
    xs.push(0.0);
    xs.push(3.0 * delta);
    let mut residues: Vec<f64> = (0..256).map(|j| j as f64 * delta / 256.0).collect();
    for &x in mu0.breakpoints() {
        if x > 3.0 * delta {
            residues.push((x - 3.0 * delta).rem_euclid(delta));
        }
    }
    let periods = ((horizon - 3.0 * delta) / delta).ceil().max(0.0) as usize + 1;
    for k in 0..periods {
        for &r in &residues {
            xs.push(3.0 * delta + k as f64 * delta + r);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(WeightError::Overflow(horizon));
    }
    let n = xs.len();
    let tail = if n >= 2 { ((ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])).max(0.0) } else { 0.0 };
    let mut out = ys.clone();
    for i in 1..n {
        out[i] = out[i].max(out[i - 1]);
    }
    Ok(MonotoneFn::new(xs, out, tail)?)
}

/// sup{ε ∈ (0, δ/2] : 9ν̂(2ε) ≤ k(1 − 2ε/δ)} by bisection; always returns a feasible ε.
pub fn hat_epsilon_at(nuhat: &dyn Weight, k: f64, delta: f64) -> f64 {
    let ok = |e: f64| 9.0 * nuhat.w(2.0 * e) <= k * (1.0 - 2.0 * e / delta);
    let mut hi = delta / 2.0;
    if ok(hi) {
        return hi;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    lo
}

pub fn hat_epsilon(nuhat: &dyn Weight, kappa: &Kappa, delta: f64, l: f64) -> f64 {
    hat_epsilon_at(nuhat, kappa.at(l), delta)
}

#[derive(Clone, Debug)]
pub struct Cmap2Options {
    pub horizon: f64,
    /// uniform node spacing; by default derived from ε̂ at the horizon
    pub step: Option<f64>,
}

impl Cmap2Options {
    pub fn new(horizon: f64) -> Self {
        Cmap2Options { horizon, step: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvCertificate {
    pub mu1: MonotoneFn,
    pub nu1: MonotoneFn,
    pub nuhat: MonotoneFn,
    pub l0: f64,
    pub anchors: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub triple: WeightTriple,
    pub chi_version: String,
}

impl ConvCertificate {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).unwrap()
    }

    pub fn kappa_nu1(&self) -> KappaTimes<'_> {
        KappaTimes { kappa: &self.triple.kappa, nu: &self.nu1 }
    }

    pub fn hat_epsilon(&self, l: f64) -> f64 {
        hat_epsilon(&self.nuhat, &self.triple.kappa, self.triple.delta, l)
    }

    /// γ(l) = l − min(l₀/2, ε̂(l)).
    pub fn gamma(&self, l: f64) -> f64 {
        l - (self.l0 / 2.0).min(self.hat_epsilon(l))
    }

    /// Default evaluation grid: `n` points evenly spread over (0, horizon].
    pub fn lgrid(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.horizon * i as f64 / n as f64).collect()
    }
}

fn base_nodes(t: &WeightTriple, upto: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = t.nu0.breakpoints().iter().chain(t.kappa.breakpoints()).chain(t.mu0.breakpoints()).copied().filter(|&x| x <= upto).collect();
    let n = (upto / (t.delta / 64.0)).ceil() as usize;
    xs.extend((0..=n).map(|j| j as f64 * t.delta / 64.0));
    xs.extend([t.delta, 3.0 * t.delta].into_iter().filter(|&x| x <= upto));
    sort_nodes(xs)
}

fn sort_nodes(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1e-3));
    xs
}

/// Interpolant of ν₀/κ on the base nodes; it dominates ν₀/κ because the
/// ratio is convex wherever ν₀ and κ are both linear.
fn nuhat_upper(t: &WeightTriple, upto: f64) -> Result<MonotoneFn, WeightError> {
    let xs = base_nodes(t, upto);
    let mut ys: Vec<f64> = xs.iter().map(|&x| t.nu0.at(x) / t.kappa.at(x)).collect();
    for i in 1..ys.len() {
        ys[i] = ys[i].max(ys[i - 1]);
    }
    let tail = t.nu0.tail_slope() / t.kappa.min_value();
    Ok(MonotoneFn::new(xs, ys, tail)?)
}

/// l₀ = sup{l ∈ (0, δ] : l ≤ 2ε̂(l)}, feasible endpoint of a bisection.
fn find_l0(nuhat: &MonotoneFn, t: &WeightTriple) -> f64 {
    let ok = |l: f64| l <= 2.0 * hat_epsilon(nuhat, &t.kappa, t.delta, l);
    if ok(t.delta) {
        return t.delta;
    }
    let (mut lo, mut hi) = (0.0, t.delta);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The step cmap2 would choose for this triple and horizon.
pub fn default_step(t: &WeightTriple, horizon: f64) -> Result<f64, WeightError> {
    let nuhat = nuhat_upper(t, horizon + 2.0 * t.delta)?;
    let l0 = find_l0(&nuhat, t);
    Ok((l0 / 2.0).min(hat_epsilon(&nuhat, &t.kappa, t.delta, horizon + t.delta)) / 8.0)
}

fn interp(xs: &[f64], ys: &[f64], known: usize, l: f64) -> f64 {
    let xs = &xs[..known];
    let ys = &ys[..known];
    if l <= xs[0] {
        return ys[0];
    }
    let i = xs.partition_point(|&x| x <= l);
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (l - x0) / (x1 - x0);
    (ys[i - 1] + w * (ys[i] - ys[i - 1])).clamp(ys[i - 1], ys[i])
}

/// 𝔠²_δ together with 𝔠¹_δ: the discretized ν₁ recursion.
///
/// ν₁ is piecewise linear on a node set containing every breakpoint of the
/// inputs. On a segment (s_j, s_{j+1}] the target 𝔪(ν̂, max(ν_L, ν_H)) is bounded
/// using ν̂ linear there and max(ν_L, ν_H) ≤ its value at s_{j+1}; node values
/// are raised until both segment ends dominate that bound.
pub fn cmap2(t: &WeightTriple, opts: &Cmap2Options) -> Result<ConvCertificate, WeightError> {
    let delta = t.delta;
    let horizon = opts.horizon;
    let nuhat = nuhat_upper(t, horizon + 2.0 * delta)?;
    let l0 = find_l0(&nuhat, t);
    if horizon < l0 {
        return Err(WeightError::Horizon { horizon, l0 });
    }
    let eps_far = hat_epsilon(&nuhat, &t.kappa, delta, horizon + delta);
    let h = match opts.step {
        Some(s) => s,
        None => (l0 / 2.0).min(eps_far) / 8.0,
    };
    if !(h > 0.0) {
        return Err(WeightError::Construction("non-positive node step".into()));
    }
    let top = horizon + 4.0 * h;
    let mut xs = base_nodes(t, top);
    let n_uniform = (top / h).ceil() as usize;
    if n_uniform > 5_000_000 {
        return Err(WeightError::Construction(format!("node step {} too fine for horizon {}", h, horizon)));
    }
    xs.extend((0..=n_uniform).map(|j| j as f64 * h));
    let xs = sort_nodes(xs);
    let k = xs.partition_point(|&x| x <= l0) - 1;
    let l0p = xs[k];
    let eps_eff = |l: f64| (l0p / 2.0).min(hat_epsilon(&nuhat, &t.kappa, delta, l));
    if 2.0 * h > eps_eff(top) {
        return Err(WeightError::Construction(format!("step {} exceeds half the smallest epsilon {}", h, eps_eff(top))));
    }
    let n = xs.len();
    let nh: Vec<f64> = xs.iter().map(|&x| nuhat.at(x)).collect();
    let mut v = vec![0.0; n];
    v[..=k].copy_from_slice(&nh[..=k]);
    // bound on max(ν_L, ν_H) over segment j, i.e. its value at s_{j+1}, from nodes < j
    let bound = |v: &[f64], j: usize| -> Result<f64, WeightError> {
        let l = xs[j + 1];
        let known = j;
        let g = l - eps_eff(l);
        debug_assert!(g <= xs[known - 1] + 1e-12, "l={} g={} j={} xs={:?} eps={}", l, g, j, &xs[j.saturating_sub(2)..j+2], eps_eff(l));
        let kap = t.kappa.at(l);
        let x = interp(&xs, v, known, g);
        let nl = 9.0 * x * x / kap;
        let nhv = if l > 3.0 * delta {
            let m = mchi(delta, t.mu0.at(l - delta))?;
            let y = m * interp(&xs, v, known, l - delta);
            3.0 * y * y / kap
        } else {
            0.0
        };
        Ok(nl.max(nhv))
    };
    let mut b_prev = bound(&v, k)?;
    if b_prev > v[k] || (nh[k] > 0.0 && b_prev > 1.0) {
        return Err(WeightError::Construction(format!("recursion does not start continuously at l0 = {}", l0p)));
    }
    for j in k..n - 2 {
        let b_next = bound(&v, j + 1)?;
        let cand = v[j].max(nh[j + 1] * b_prev.max(1.0)).max(b_next).max(nh[j + 1] * b_next.max(1.0));
        if !cand.is_finite() {
            return Err(WeightError::Overflow(xs[j + 1]));
        }
        v[j + 1] = cand;
        b_prev = b_next;
    }
    v[n - 1] = v[n - 2].max(nh[n - 1]);
    let tail = ((v[n - 1] - v[n - 2]) / (xs[n - 1] - xs[n - 2])).max(0.0);
    let nu1 = MonotoneFn::new(xs.clone(), v, tail)?;
    // anchors l_n = λ(l_{n−1}) with γ(l) = l − ε_eff(l)
    let mut anchors = vec![l0p];
    let gamma = |l: f64| l - eps_eff(l);
    while *anchors.last().unwrap() < horizon && anchors.len() < 1_000_000 {
        let prev = *anchors.last().unwrap();
        let (mut lo, mut hi) = (prev, prev + delta);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if gamma(mid) < prev {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        anchors.push(hi);
    }
    let nu1 = nu1.with_breakpoints(&anchors);
    let mu1 = cmap1(&t.mu0, delta, top)?;
    Ok(ConvCertificate {
        mu1,
        nu1,
        nuhat,
        l0: l0p,
        anchors,
        horizon,
        step: h,
        triple: t.clone(),
        chi_version: CHI_TABLE_VERSION.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvRow {
    pub l: f64,
    pub cond1: bool,
    /// largest admissible ε for the first half of condition (2)
    pub eps: f64,
    pub cond2: bool,
    /// None when l ≤ 4δ
    pub cond3: Option<bool>,
    pub note: Option<String>,
}

impl ConvRow {
    pub fn pass(&self) -> bool {
        self.cond1 && self.cond2 && self.cond3.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvReport {
    pub rows: Vec<ConvRow>,
    pub chi_version: String,
}

impl ConvReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(ConvRow::pass)
    }

    pub fn failures(&self) -> Vec<&ConvRow> {
        self.rows.iter().filter(|r| !r.pass()).collect()
    }
}

/// Checks the three convolution conditions at every l of the grid.
pub fn check_conv_conditions(
    mu: &dyn Weight,
    mutilde: &dyn Weight,
    nu: &dyn Weight,
    nutilde: &dyn Weight,
    delta: f64,
    lgrid: &[f64],
) -> ConvReport {
    check_conv_conditions_tol(mu, mutilde, nu, nutilde, delta, lgrid, DEFAULT_TOL)
}

pub fn check_conv_conditions_tol(
    mu: &dyn Weight,
    mutilde: &dyn Weight,
    nu: &dyn Weight,
    nutilde: &dyn Weight,
    delta: f64,
    lgrid: &[f64],
    tol: f64,
) -> ConvReport {
    let rows = lgrid
        .par_iter()
        .map(|&l| {
            let mut note = None;
            let mut cond1 = geq(mutilde.w(l), mu.w(l), tol);
            if l > 4.0 * delta {
                cond1 &= geq(mutilde.w(l), 2.0 * mu.w(l - delta), tol);
            }
            let nl = nu.w(l);
            let nt = nutilde.w(l);
            let ok2a = |e: f64| geq(nt, 9.0 * nu.w(2.0 * e) * nl, tol);
            let mut eps = delta / 2.0;
            if !ok2a(eps) {
                let (mut lo, mut hi) = (0.0, eps);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if ok2a(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                eps = lo;
            }
            let mut cond2 = eps > 0.0;
            if cond2 && 2.0 * eps < l {
                let x = nu.w(l - eps);
                cond2 = geq(nt, 9.0 * x * x, tol);
            }
            let cond3 = if l > 4.0 * delta {
                match mchi(delta, mu.w(l - delta)) {
                    Ok(m) => {
                        let y = m * nu.w(l - delta);
                        Some(geq(nt, 3.0 * y * y, tol))
                    }
                    Err(e) => {
                        note = Some(e.to_string());
                        Some(false)
                    }
                }
            } else {
                None
            };
            ConvRow { l, cond1, eps, cond2, cond3, note }
        })
        .collect();
    ConvReport { rows, chi_version: CHI_TABLE_VERSION.to_string() }
}

/// Runs the convolution conditions on a certificate: (μ₀, μ₁, ν₁, κν₁), plus
/// the self-condition (μ₁, μ₁).
pub fn check_certificate(cert: &ConvCertificate, lgrid: &[f64]) -> (ConvReport, ConvReport) {
    let t = &cert.triple;
    let kn = cert.kappa_nu1();
    let main = check_conv_conditions(&t.mu0, &cert.mu1, &cert.nu1, &kn, t.delta, lgrid);
    let zero = MonotoneFn::zero();
    let selfmu = check_conv_conditions(&cert.mu1, &cert.mu1, &zero, &zero, t.delta, lgrid);
    (main, selfmu)
}

/// ρ^{0,ν}(F) = sup_{l>0} ν(l)^{-1} Σ_{v·ξ<l} |c|, exactly: on (l_i, l_{i+1}] the
/// numerator is constant, so the sup there is S_i / inf ν.
pub fn rho_norm_atomic<C: Coef>(f: &AtomicSpectrum<C>, direction: &[num_rational::BigRational], nu: &dyn Weight) -> Result<f64, WeightError> {
    let mut levels: Vec<(f64, f64)> = Vec::with_capacity(f.len());
    for (x, cs) in f.atoms() {
        let l = crate::spectral::level_f64(&x.dot(direction));
        if l <= 0.0 {
            return Err(WeightError::Boundary(l));
        }
        levels.push((l, cs.iter().map(Coef::size).sum()));
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = 0.0f64;
    let mut s = 0.0;
    let mut i = 0;
    while i < levels.len() {
        let l = levels[i].0;
        while i < levels.len() && levels[i].0 == l {
            s += levels[i].1;
            i += 1;
        }
        let next = if i < levels.len() { levels[i].0 } else { f64::INFINITY };
        let inf = nu.inf_on(l, next);
        let q = if s == 0.0 { 0.0 } else { s / inf };
        out = out.max(q);
    }
    Ok(out)
}

/// Random nonnegative atomic measure on (0, max_level] in one dimension.
pub fn random_atomic<R: Rng>(rng: &mut R, atoms: usize, max_level: f64) -> AtomicSpectrum<C64> {
    let mut f = AtomicSpectrum::scalar(1);
    for _ in 0..atoms {
        let l = rng.gen_range(1e-3..=1.0) * max_level;
        f.insert_scalar(FreqPoint(vec![f64_to_q(l)]), C64::new(rng.gen_range(0.0..1.0), 0.0));
    }
    f
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub triples: usize,
    pub condition_failures: usize,
    pub pairs: usize,
    pub inequality_failures: usize,
    pub construction_errors: Vec<String>,
    pub worst_ratio: f64,
    pub examples: Vec<Value>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.condition_failures == 0 && self.inequality_failures == 0 && self.construction_errors.is_empty()
    }
}

/// Randomized soundness suite: certificates pass the condition checker on an
/// l-grid and satisfy ρ(F*G; κν₁) ≤ ρ(F; ν₁)ρ(G; ν₁) on random pairs.
pub fn weight_suite(seed: u64, triples: usize, pairs: usize, grid_points: usize) -> SuiteReport {
    let per: Vec<SuiteReport> = (0..triples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut rep = SuiteReport { triples: 1, ..Default::default() };
            let t = WeightTriple::random(&mut rng);
            let horizon = 5.0 * t.delta;
            let cert = match cmap2(&t, &Cmap2Options::new(horizon)) {
                Ok(c) => c,
                Err(e) => {
                    rep.construction_errors.push(format!("triple {}: {}", i, e));
                    return rep;
                }
            };
            let grid = cert.lgrid(grid_points);
            let (main, selfmu) = check_certificate(&cert, &grid);
            if !main.all_pass() || !selfmu.all_pass() {
                rep.condition_failures += 1;
                rep.examples.push(json!({"triple": i, "failures": main.failures().len() + selfmu.failures().len()}));
            }
            let dir = crate::spectral::e1(1);
            let kn = cert.kappa_nu1();
            for _ in 0..pairs {
                let na = rng.gen_range(1..=6);
                let nb = rng.gen_range(1..=6);
                let f = random_atomic(&mut rng, na, horizon / 2.0);
                let g = random_atomic(&mut rng, nb, horizon / 2.0);
                let fg = convolve(&f, &g).unwrap();
                let lhs = rho_norm_atomic(&fg, &dir, &kn).unwrap();
                let rhs = rho_norm_atomic(&f, &dir, &cert.nu1).unwrap() * rho_norm_atomic(&g, &dir, &cert.nu1).unwrap();
                rep.pairs += 1;
                let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
                rep.worst_ratio = rep.worst_ratio.max(ratio);
                if !geq(rhs, lhs, DEFAULT_TOL) {
                    rep.inequality_failures += 1;
                }
            }
            rep
        })
        .collect();
    let mut out = SuiteReport::default();
    for r in per {
        out.triples += r.triples;
        out.condition_failures += r.condition_failures;
        out.pairs += r.pairs;
        out.inequality_failures += r.inequality_failures;
        out.construction_errors.extend(r.construction_errors);
        out.worst_ratio = out.worst_ratio.max(r.worst_ratio);
        out.examples.extend(r.examples);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub b: f64,
    pub horizon: f64,
    pub points: usize,
    /// min over the grid of cmap2(bν₀)/(b·cmap2(ν₀)) where the latter is positive
    pub min_ratio: f64,
    pub pass: bool,
}

/// Superlinearity of 𝔠²_δ under constant scaling b ≥ 1, compared on a shared
/// node set built with the step of the largest b. The horizon is shortened
/// while the largest-b construction overflows f64.
pub fn superlinearity_check(t: &WeightTriple, bs: &[f64], horizon: f64) -> Result<Vec<ScalingRow>, WeightError> {
    let bmax = bs.iter().copied().fold(1.0, f64::max);
    let top = t.scaled_nu(bmax);
    let mut horizon = horizon;
    let opts = loop {
        let step = default_step(&top, horizon)?;
        let opts = Cmap2Options { horizon, step: Some(step) };
        match cmap2(&top, &opts) {
            Err(WeightError::Overflow(x)) => horizon = (0.9 * x).min(0.9 * horizon),
            Err(e) => return Err(e),
            Ok(_) => break opts,
        }
    };
    let base = cmap2(t, &opts)?;
    let mut grid: Vec<f64> = base.nu1.breakpoints().iter().copied().filter(|&x| x <= horizon).collect();
    grid.extend(base.lgrid(200));
    let mut rows = Vec::new();
    for &b in bs {
        let sc = cmap2(&t.scaled_nu(b), &opts)?;
        let mut min_ratio = f64::INFINITY;
        let mut pass = true;
        for &l in &grid {
            let lo = b * base.nu1.at(l);
            let hi = sc.nu1.at(l);
            if lo > 0.0 {
                min_ratio = min_ratio.min(hi / lo);
            }
            pass &= geq(hi, lo, DEFAULT_TOL);
        }
        rows.push(ScalingRow { b, horizon, points: grid.len(), min_ratio, pass });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn lin(s: f64) -> MonotoneFn {
        MonotoneFn::linear(s)
    }

    #[test]
    fn cmap1_examples() {
        let d = 0.5;
        assert_eq!(cmap1(&MonotoneFn::zero(), d, 5.0).unwrap().at(3.0), 0.0);
        let mu0 = lin(1.0 / (4.0 * d));
        let mu1 = cmap1(&mu0, d, 5.0).unwrap();
        assert!((mu1.at(4.0 * d) - 2.0).abs() < 1e-12);
        for l in [0.1, 0.7, 1.5] {
            assert!((mu1.at(l) - mu0.at(l)).abs() < 1e-15);
        }
        for i in 0..400 {
            let l = 4.0 * d + i as f64 * 0.0077;
            assert!(2.0 * mu1.at(l - d) <= mu1.at(l) * (1.0 + 1e-12));
            assert!(mu1.at(l) >= 2f64.powf(l / d - 3.0) * mu0.at(l) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn hat_epsilon_examples() {
        assert_eq!(hat_epsilon_at(&MonotoneFn::zero(), 1.0, 1.0), 0.5);
        let e = hat_epsilon_at(&lin(1.0), 1.0, 1.0);
        assert!((e - 0.05).abs() < 1e-12);
        assert!(hat_epsilon_at(&lin(2.0), 1.0, 1.0) <= e);
    }

    #[test]
    fn zero_nu_gives_zero() {
        let t = WeightTriple::new(MonotoneFn::zero(), MonotoneFn::zero(), Kappa::constant(1.0).unwrap(), 1.0).unwrap();
        let c = cmap2(&t, &Cmap2Options::new(4.0)).unwrap();
        assert!(c.nu1.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l0_for_linear_nuhat() {
        // ν̂(l) = l, κ ≡ 1, δ = 1: ε̂ ≡ 1/20, so l₀ = 1/10
        let t = WeightTriple::new(MonotoneFn::zero(), lin(1.0), Kappa::constant(1.0).unwrap(), 1.0).unwrap();
        let c = cmap2(&t, &Cmap2Options::new(0.6)).unwrap();
        assert!((c.l0 - 0.1).abs() < 1e-3);
        for l in [0.02, 0.05, c.l0] {
            assert!((c.nu1.at(l) - l).abs() < 1e-12);
        }
        let (main, selfmu) = check_certificate(&c, &c.lgrid(200));
        assert!(main.all_pass(), "{:?}", main.failures());
        assert!(selfmu.all_pass());
    }

    #[test]
    fn constant_nu_fails_condition_two() {
        let nu = MonotoneFn::new(vec![0.0, 1e-9], vec![0.0, 1.0], 0.0).unwrap();
        let rep = check_conv_conditions(&MonotoneFn::zero(), &MonotoneFn::zero(), &nu, &nu, 1.0, &[5.0]);
        assert!(!rep.rows[0].cond2);
        let z = MonotoneFn::zero();
        let rep = check_conv_conditions(&z, &z, &lin(1.0), &lin(1e6), 1.0, &[0.3]);
        assert!(rep.rows[0].cond1);
    }

    #[test]
    fn rho_examples() {
        let dir = crate::spectral::e1(1);
        let mut f = AtomicSpectrum::<C64>::scalar(1);
        assert_eq!(rho_norm_atomic(&f, &dir, &lin(1.0)).unwrap(), 0.0);
        f.insert_scalar(FreqPoint(vec![q(1, 1)]), C64::new(1.0, 0.0));
        assert_eq!(rho_norm_atomic(&f, &dir, &lin(1.0)).unwrap(), 1.0);
        f.insert_scalar(FreqPoint(vec![q(2, 1)]), C64::new(1.0, 0.0));
        assert_eq!(rho_norm_atomic(&f, &dir, &lin(1.0)).unwrap(), 1.0);
        let mut g = AtomicSpectrum::<C64>::scalar(1);
        g.insert_scalar(FreqPoint(vec![q(0, 1)]), C64::new(1.0, 0.0));
        assert!(rho_norm_atomic(&g, &dir, &lin(1.0)).is_err());
    }

    #[test]
    fn random_triples_certify() {
        let rep = weight_suite(7, 4, 200, 200);
        assert!(rep.passed(), "{:?}", rep);
    }

    #[test]
    fn scaling_is_superlinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = WeightTriple::random(&mut rng);
        for row in superlinearity_check(&t, &[2.0, 5.0, 10.0], 5.0 * t.delta).unwrap() {
            assert!(row.pass, "{:?}", row);
        }
    }
}
