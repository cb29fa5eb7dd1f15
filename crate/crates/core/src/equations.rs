use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::monofun::MonotoneFn;
use crate::scalar::{c64_to_qc, parse_rational, q, qc, qc_real, QComplex, Scalar, C64};
use crate::spectral::{conv_maps, AtomicSpectrum, Coef, FreqPoint, SupportKind, SupportSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EqError {
    #[error("unknown equation {0}")]
    Unknown(String),
    #[error("bad parameter: {0}")]
    Param(String),
    #[error("symbol parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("symbol {0} is not exactly representable in the rational field")]
    NotExact(String),
    #[error("symbol evaluation failed at {xi}: {msg}")]
    Eval { xi: String, msg: String },
    #[error("atom at level {0} on or below the boundary")]
    Boundary(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("majorant radius {r} outside the convergence radius {radius}")]
    Radius { r: f64, radius: f64 },
    #[error("claim violated at {xi}: {msg}")]
    Claim { xi: String, msg: String },
}

/// Arithmetic expression over the frequency variable ξ.
#[derive(Clone, Debug, PartialEq)]
pub enum SymExpr {
    Const(QComplex),
    Xi(usize),
    /// |ξ|
    Norm,
    Add(Box<SymExpr>, Box<SymExpr>),
    Sub(Box<SymExpr>, Box<SymExpr>),
    Mul(Box<SymExpr>, Box<SymExpr>),
    Div(Box<SymExpr>, Box<SymExpr>),
    Neg(Box<SymExpr>),
    Pow(Box<SymExpr>, i32),
    PowF(Box<SymExpr>, f64),
    Sign(Box<SymExpr>),
    Abs(Box<SymExpr>),
    Sqrt(Box<SymExpr>),
    Exp(Box<SymExpr>),
    Conj(Box<SymExpr>),
}

pub fn c(re: i64) -> SymExpr {
    SymExpr::Const(qc_real(q(re, 1)))
}

pub fn cq(z: QComplex) -> SymExpr {
    SymExpr::Const(z)
}

pub fn xi(j: usize) -> SymExpr {
    SymExpr::Xi(j)
}

pub fn iu() -> SymExpr {
    SymExpr::Const(qc(BigRational::zero(), BigRational::one()))
}

impl std::ops::Add for SymExpr {
    type Output = SymExpr;
    fn add(self, o: SymExpr) -> SymExpr {
        SymExpr::Add(Box::new(self), Box::new(o))
    }
}
impl std::ops::Sub for SymExpr {
    type Output = SymExpr;
    fn sub(self, o: SymExpr) -> SymExpr {
        SymExpr::Sub(Box::new(self), Box::new(o))
    }
}
impl std::ops::Mul for SymExpr {
    type Output = SymExpr;
    fn mul(self, o: SymExpr) -> SymExpr {
        SymExpr::Mul(Box::new(self), Box::new(o))
    }
}
impl std::ops::Div for SymExpr {
    type Output = SymExpr;
    fn div(self, o: SymExpr) -> SymExpr {
        SymExpr::Div(Box::new(self), Box::new(o))
    }
}
impl std::ops::Neg for SymExpr {
    type Output = SymExpr;
    fn neg(self) -> SymExpr {
        SymExpr::Neg(Box::new(self))
    }
}

impl SymExpr {
    pub fn pow(self, k: i32) -> SymExpr {
        SymExpr::Pow(Box::new(self), k)
    }

    pub fn parse(s: &str) -> Result<SymExpr, EqError> {
        Parser::new(s).parse_all()
    }

    pub fn eval<T: Scalar>(&self, xi: &FreqPoint) -> Result<T, String> {
        use SymExpr::*;
        Ok(match self {
            Const(z) => T::from_q(z),
            Xi(j) => {
                let v = xi.0.get(*j).ok_or_else(|| format!("xi{} out of range", j + 1))?;
                T::from_q(&qc_real(v.clone()))
            }
            Norm => {
                let s = xi.0.iter().fold(BigRational::zero(), |a, x| a + x * x);
                T::from_q(&qc_real(s)).sqrt().ok_or("|xi| is irrational")?
            }
            Add(a, b) => a.eval::<T>(xi)? + b.eval::<T>(xi)?,
            Sub(a, b) => a.eval::<T>(xi)? - b.eval::<T>(xi)?,
            Mul(a, b) => a.eval::<T>(xi)? * b.eval::<T>(xi)?,
            Div(a, b) => {
                let d = b.eval::<T>(xi)?;
                if d.is_zero() {
                    return Err("division by zero".into());
                }
                a.eval::<T>(xi)? / d
            }
            Neg(a) => -a.eval::<T>(xi)?,
            Pow(a, k) => {
                let base = a.eval::<T>(xi)?;
                base.powf(*k as f64).ok_or("zero to a negative power")?
            }
            PowF(a, p) => a.eval::<T>(xi)?.powf(*p).ok_or("non-integer power is irrational")?,
            Sign(a) => {
                let x = a.eval::<T>(xi)?;
                if x.is_zero() {
                    T::zero()
                } else {
                    let m = (x.clone() * x.conj()).sqrt().ok_or("sign of a non-real value")?;
                    x / m
                }
            }
            Abs(a) => {
                let x = a.eval::<T>(xi)?;
                (x.clone() * x.conj()).sqrt().ok_or("modulus is irrational")?
            }
            Sqrt(a) => a.eval::<T>(xi)?.sqrt().ok_or("square root is irrational")?,
            Exp(a) => a.eval::<T>(xi)?.exp().ok_or("exponential is transcendental")?,
            Conj(a) => a.eval::<T>(xi)?.conj(),
        })
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SymExpr::*;
        match self {
            Const(z) => {
                if z.im.is_zero() {
                    write!(f, "{}", z.re)
                } else {
                    write!(f, "({}+{}*i)", z.re, z.im)
                }
            }
            Xi(j) => write!(f, "xi{}", j + 1),
            Norm => write!(f, "norm"),
            Add(a, b) => write!(f, "({} + {})", a, b),
            Sub(a, b) => write!(f, "({} - {})", a, b),
            Mul(a, b) => write!(f, "{}*{}", a, b),
            Div(a, b) => write!(f, "{}/{}", a, b),
            Neg(a) => write!(f, "-({})", a),
            Pow(a, k) => write!(f, "({})^{}", a, k),
            PowF(a, p) => write!(f, "({})^{}", a, p),
            Sign(a) => write!(f, "sign({})", a),
            Abs(a) => write!(f, "abs({})", a),
            Sqrt(a) => write!(f, "sqrt({})", a),
            Exp(a) => write!(f, "exp({})", a),
            Conj(a) => write!(f, "conj({})", a),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str) -> Self {
        Parser { src: s.as_bytes(), pos: 0 }
    }

    fn err<T>(&self, msg: &str) -> Result<T, EqError> {
        Err(EqError::Parse { pos: self.pos, msg: msg.to_string() })
    }

    fn ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.src.get(self.pos).copied()
    }

    fn parse_all(&mut self) -> Result<SymExpr, EqError> {
        let e = self.expr()?;
        if self.peek().is_some() {
            return self.err("trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<SymExpr, EqError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = lhs + self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<SymExpr, EqError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = lhs * self.unary()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<SymExpr, EqError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<SymExpr, EqError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let neg = if self.peek() == Some(b'-') {
                self.pos += 1;
                true
            } else {
                false
            };
            self.ws();
            let start = self.pos;
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                self.pos += 1;
            }
            let txt = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            if txt.is_empty() {
                return self.err("exponent must be a numeric literal");
            }
            let p: f64 = txt.parse().map_err(|_| EqError::Parse { pos: start, msg: "bad exponent".into() })?;
            let p = if neg { -p } else { p };
            if p.fract() == 0.0 {
                return Ok(base.pow(p as i32));
            }
            return Ok(SymExpr::PowF(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<SymExpr, EqError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(ch) if ch.is_ascii_digit() || ch == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let b = self.src[self.pos];
                    let exp_sign = (b == b'-' || b == b'+') && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let txt = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match parse_rational(txt) {
                    Some(r) => Ok(SymExpr::Const(qc_real(r))),
                    None => Err(EqError::Parse { pos: start, msg: format!("bad number {}", txt) }),
                }
            }
            Some(ch) if ch.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                match name.as_str() {
                    "i" => Ok(iu()),
                    "xi" => Ok(xi(0)),
                    "norm" => Ok(SymExpr::Norm),
                    "sign" | "abs" | "sqrt" | "exp" | "conj" => {
                        if self.peek() != Some(b'(') {
                            return self.err("expected '(' after function name");
                        }
                        let arg = Box::new(self.atom()?);
                        Ok(match name.as_str() {
                            "sign" => SymExpr::Sign(arg),
                            "abs" => SymExpr::Abs(arg),
                            "sqrt" => SymExpr::Sqrt(arg),
                            "exp" => SymExpr::Exp(arg),
                            _ => SymExpr::Conj(arg),
                        })
                    }
                    n if n.starts_with("xi") => match n[2..].parse::<usize>() {
                        Ok(k) if k >= 1 => Ok(xi(k - 1)),
                        _ => Err(EqError::Parse { pos: start, msg: format!("bad variable {}", n) }),
                    },
                    _ => Err(EqError::Parse { pos: start, msg: format!("unknown identifier {}", name) }),
                }
            }
            _ => self.err("unexpected token"),
        }
    }
}

/// Matrix of symbols, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<SymExpr>,
}

impl SymbolMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<SymExpr>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        SymbolMatrix { rows, cols, entries }
    }

    pub fn scalar(e: SymExpr) -> Self {
        SymbolMatrix::new(1, 1, vec![e])
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal((0..n).map(|_| c(1)).collect())
    }

    pub fn diagonal(d: Vec<SymExpr>) -> Self {
        let n = d.len();
        let mut e = vec![c(0); n * n];
        for (i, x) in d.into_iter().enumerate() {
            e[i * n + i] = x;
        }
        SymbolMatrix::new(n, n, e)
    }

    pub fn eval<T: Scalar>(&self, xi: &FreqPoint) -> Result<Vec<T>, EqError> {
        self.entries
            .iter()
            .map(|e| e.eval::<T>(xi).map_err(|msg| EqError::Eval { xi: xi.to_string(), msg }))
            .collect()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            (0..self.rows)
                .map(|r| {
                    Value::Array((0..self.cols).map(|c| Value::String(self.entries[r * self.cols + c].to_string())).collect())
                })
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Result<Self, EqError> {
        let rows = v.as_array().ok_or_else(|| EqError::Param("symbol matrix must be a list of rows".into()))?;
        let mut entries = Vec::new();
        let mut cols = None;
        for r in rows {
            let r = r.as_array().ok_or_else(|| EqError::Param("symbol row must be a list".into()))?;
            if *cols.get_or_insert(r.len()) != r.len() {
                return Err(EqError::Param("ragged symbol matrix".into()));
            }
            for e in r {
                let s = match e {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Err(EqError::Param("symbol entries must be strings".into())),
                };
                entries.push(SymExpr::parse(&s)?);
            }
        }
        Ok(SymbolMatrix::new(rows.len(), cols.unwrap_or(0), entries))
    }
}

/// Boundary-decay claim: σ_max(Re L̂) ≤ (1−c₀)𝔭 and ‖N̂‖,‖M̂‖ ≤ C₀⟨𝔭⟩, with 𝔭 a
/// function of the level v·ξ.
#[derive(Clone, Debug, PartialEq)]
pub struct Claims {
    pub c0: f64,
    pub cap_c0: f64,
    pub profile: MonotoneFn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolTable {
    pub name: String,
    pub dim: usize,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub l: SymbolMatrix,
    pub m: SymbolMatrix,
    pub n: SymbolMatrix,
    pub support: SupportSpec,
    /// user-asserted smoothing condition in the orthogonal directions
    pub semilinear_orthogonal: bool,
    pub claims: Option<Claims>,
}

impl SymbolTable {
    pub fn validate(&self) -> Result<(), EqError> {
        let shape = |m: &SymbolMatrix, r, c, what: &str| {
            if m.rows != r || m.cols != c {
                Err(EqError::Shape(format!("{} is {}x{}, expected {}x{}", what, m.rows, m.cols, r, c)))
            } else {
                Ok(())
            }
        };
        shape(&self.l, self.n1, self.n1, "L")?;
        shape(&self.m, self.n2, self.n1, "M")?;
        shape(&self.n, self.n1, self.n3, "N")?;
        if self.support.direction.len() != self.dim {
            return Err(EqError::Shape("support direction dimension".into()));
        }
        Ok(())
    }

    /// Spot-checks the boundary-decay claim on sample frequencies.
    pub fn check_claims(&self, samples: &[FreqPoint]) -> Result<(), EqError> {
        let Some(cl) = &self.claims else { return Ok(()) };
        for xi in samples {
            let level = crate::scalar::q_to_f64(&self.support.level(xi));
            let p = cl.profile.at(level.max(0.0));
            let l: Vec<C64> = self.l.eval(xi)?;
            let sym = herm_part_max_eig(&l, self.n1);
            if sym > (1.0 - cl.c0) * p + 1e-12 * (1.0 + p.abs()) {
                return Err(EqError::Claim { xi: xi.to_string(), msg: format!("sigma_max {} > (1-c0)p {}", sym, (1.0 - cl.c0) * p) });
            }
            let jp = (1.0 + p * p).sqrt();
            for (m, name) in [(&self.m, "M"), (&self.n, "N")] {
                let v: Vec<C64> = m.eval(xi)?;
                let nrm = spectral_norm(&v, m.rows, m.cols);
                if nrm > cl.cap_c0 * jp * (1.0 + 1e-12) {
                    return Err(EqError::Claim { xi: xi.to_string(), msg: format!("|{}| = {} > C0<p> = {}", name, nrm, cl.cap_c0 * jp) });
                }
            }
        }
        Ok(())
    }
}

fn herm_part_max_eig(l: &[C64], n: usize) -> f64 {
    let h = nalgebra::DMatrix::<C64>::from_fn(n, n, |i, j| (l[i * n + j] + l[j * n + i].conj()) * 0.5);
    let e = nalgebra::SymmetricEigen::new(h);
    e.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn spectral_norm(v: &[C64], r: usize, c: usize) -> f64 {
    let m = nalgebra::DMatrix::<C64>::from_fn(r, c, |i, j| v[i * c + j]);
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Sparse Taylor table of 𝓗: α ↦ (1/α!)∂^α𝓗(0) ∈ ℂ^{n₃}, optionally with a
/// lacunary tail Σ_{n ≥ start} c·u^{2^n} (single input and output).
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearSeries {
    pub n2: usize,
    pub n3: usize,
    pub k0: usize,
    pub table: BTreeMap<Vec<u32>, Vec<QComplex>>,
    pub lacunary: Option<(u32, QComplex)>,
    pub radius: f64,
}

impl NonlinearSeries {
    pub fn new(n2: usize, n3: usize, k0: usize) -> Self {
        NonlinearSeries { n2, n3, k0, table: BTreeMap::new(), lacunary: None, radius: f64::INFINITY }
    }

    pub fn zero(n2: usize, n3: usize) -> Self {
        Self::new(n2, n3, 1)
    }

    pub fn with_term(mut self, alpha: Vec<u32>, coeff: Vec<QComplex>) -> Result<Self, EqError> {
        self.add_term(alpha, coeff)?;
        Ok(self)
    }

    pub fn add_term(&mut self, alpha: Vec<u32>, coeff: Vec<QComplex>) -> Result<(), EqError> {
        if alpha.len() != self.n2 || coeff.len() != self.n3 {
            return Err(EqError::Shape("multi-index or coefficient length".into()));
        }
        let deg: u32 = alpha.iter().sum();
        if (deg as usize) <= self.k0 {
            return Err(EqError::Param(format!("term of degree {} not above order k0={}", deg, self.k0)));
        }
        let e = self.table.entry(alpha).or_insert_with(|| vec![QComplex::zero(); coeff.len()]);
        for (a, b) in e.iter_mut().zip(coeff) {
            *a = a.clone() + b;
        }
        Ok(())
    }

    /// All terms with |α| ≤ max_degree, including lacunary ones.
    pub fn terms_up_to(&self, max_degree: u64) -> Vec<(Vec<u32>, Vec<QComplex>)> {
        let mut out: Vec<(Vec<u32>, Vec<QComplex>)> = self
            .table
            .iter()
            .filter(|(a, _)| a.iter().map(|&x| x as u64).sum::<u64>() <= max_degree)
            .map(|(a, c)| (a.clone(), c.clone()))
            .collect();
        if let Some((start, coeff)) = &self.lacunary {
            let mut n = *start;
            while n < 63 && (1u64 << n) <= max_degree {
                out.push((vec![1u32 << n], vec![coeff.clone()]));
                n += 1;
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.table.values().all(|v| v.iter().all(|c| c.is_zero())) && self.lacunary.is_none()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "k0": self.k0,
            "n2": self.n2,
            "n3": self.n3,
            "terms": self.table.iter().map(|(a, c)| json!({
                "alpha": a,
                "coeff": c.iter().map(|z| z.to_json()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "lacunary": self.lacunary.as_ref().map(|(s, c)| json!({"start": s, "coeff": c.to_json()})),
        })
    }

    pub fn from_json(v: &Value, n2: usize, n3: usize) -> Result<Self, EqError> {
        let k0 = v.get("k0").and_then(Value::as_u64).unwrap_or(1) as usize;
        let mut h = NonlinearSeries::new(n2, n3, k0);
        for t in v.get("terms").and_then(Value::as_array).cloned().unwrap_or_default() {
            let alpha: Vec<u32> = t
                .get("alpha")
                .and_then(Value::as_array)
                .ok_or_else(|| EqError::Param("term needs alpha".into()))?
                .iter()
                .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(|| EqError::Param("alpha entries".into())))
                .collect::<Result<_, _>>()?;
            let coeff = match t.get("coeff") {
                Some(Value::Array(a)) if a.len() == n3 && !(n3 == 2 && a.iter().all(Value::is_number)) => a
                    .iter()
                    .map(|x| QComplex::from_json(x).ok_or_else(|| EqError::Param("coefficient".into())))
                    .collect::<Result<Vec<_>, _>>()?,
                Some(x) => vec![QComplex::from_json(x).ok_or_else(|| EqError::Param("coefficient".into()))?],
                None => return Err(EqError::Param("term needs coeff".into())),
            };
            h.add_term(alpha, coeff)?;
        }
        if let Some(r) = v.get("radius").and_then(Value::as_f64) {
            h.radius = r;
        }
        Ok(h)
    }
}

/// (H̃(r), H̃¹(r)) with a flag telling whether an infinite tail was truncated.
#[derive(Clone, Debug, PartialEq)]
pub struct Majorants {
    pub h: f64,
    pub h1: f64,
    pub truncated: bool,
}

pub fn majorants(h: &NonlinearSeries, r: f64) -> Result<Majorants, EqError> {
    if h.lacunary.is_some() && r >= h.radius {
        return Err(EqError::Radius { r, radius: h.radius });
    }
    let contrib = |alpha: &[u32], coeff: &[QComplex]| {
        let norm = coeff.iter().map(|z| z.to_c64().norm_sqr()).sum::<f64>().sqrt();
        let deg: u32 = alpha.iter().sum();
        let t = norm * r.powf(deg as f64 - 2.0);
        (t, deg as f64 * t)
    };
    let (mut total, mut total1) = (0.0, 0.0);
    for (a, cf) in &h.table {
        let (x, y) = contrib(a, cf);
        total += x;
        total1 += y;
    }
    let mut truncated = false;
    if let Some((start, cf)) = &h.lacunary {
        let mut n = *start;
        loop {
            let (x, y) = contrib(&[1u32 << n], std::slice::from_ref(cf));
            total += x;
            total1 += y;
            if x < 1e-17 * total.max(1e-300) || n >= 30 {
                truncated = n >= 30;
                break;
            }
            n += 1;
        }
    }
    Ok(Majorants { h: total, h1: total1, truncated })
}

/// Ĥ(v) = Σ_α coeff(α) v^{*α}, keeping only atoms with level ≤ Λ.
pub fn evaluate_nonlinearity<C: Coef>(
    h: &NonlinearSeries,
    v: &AtomicSpectrum<C>,
    direction: &[BigRational],
    lambda: &BigRational,
) -> Result<AtomicSpectrum<C>, EqError> {
    if v.components() != h.n2 {
        return Err(EqError::Shape(format!("input has {} components, H expects {}", v.components(), h.n2)));
    }
    let dim = v.dim();
    let mut out = AtomicSpectrum::new(dim, h.n3);
    let Some(min_level) = v.min_level(direction) else { return Ok(out) };
    if min_level <= BigRational::zero() {
        return Err(EqError::Boundary(min_level.to_string()));
    }
    let kmax = (lambda / &min_level).floor().to_integer();
    let kmax: u64 = num_traits::ToPrimitive::to_u64(&kmax).unwrap_or(0);
    let terms = h.terms_up_to(kmax);
    if terms.is_empty() {
        return Ok(out);
    }
    let cap = Some((direction, lambda));
    let comps: Vec<BTreeMap<FreqPoint, C>> = (0..h.n2)
        .map(|j| {
            v.atoms()
                .iter()
                .filter(|(_, c)| !c[j].is_zero_coef())
                .map(|(k, c)| (k.clone(), c[j].clone()))
                .collect()
        })
        .collect();
    // powers[j][k] = v_j^{*k}, computed on demand and capped at Λ
    let mut powers: Vec<Vec<BTreeMap<FreqPoint, C>>> = vec![Vec::new(); h.n2];
    for (alpha, coeff) in terms {
        let mut prod: Option<BTreeMap<FreqPoint, C>> = None;
        for (j, &a) in alpha.iter().enumerate() {
            if a == 0 {
                continue;
            }
            while powers[j].len() < a as usize {
                let next = match powers[j].last() {
                    None => comps[j].iter().filter(|(k, _)| &k.dot(direction) <= lambda).map(|(k, c)| (k.clone(), c.clone())).collect(),
                    Some(p) => conv_maps(p, &comps[j], cap),
                };
                powers[j].push(next);
            }
            let pj = &powers[j][a as usize - 1];
            prod = Some(match prod {
                None => pj.clone(),
                Some(p) => conv_maps(&p, pj, cap),
            });
        }
        let Some(prod) = prod else { continue };
        for (xi, c) in prod {
            let row: Vec<C> = coeff.iter().map(|z| c.mul_c(&C::from_qc(z))).collect();
            out.insert(xi, row);
        }
    }
    Ok(out)
}

fn param_f64(p: &Value, key: &str, default: Option<f64>) -> Result<f64, EqError> {
    match p.get(key) {
        Some(v) => v.as_f64().ok_or_else(|| EqError::Param(format!("{} must be a number", key))),
        None => default.ok_or_else(|| EqError::Param(format!("missing parameter {}", key))),
    }
}

fn param_q(p: &Value, key: &str, default: Option<QComplex>) -> Result<QComplex, EqError> {
    match p.get(key) {
        Some(v) => QComplex::from_json(v).ok_or_else(|| EqError::Param(format!("{} must be a number, \"p/q\" or [re, im]", key))),
        None => default.ok_or_else(|| EqError::Param(format!("missing parameter {}", key))),
    }
}

fn param_usize(p: &Value, key: &str, default: Option<usize>) -> Result<usize, EqError> {
    match p.get(key) {
        Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| EqError::Param(format!("{} must be a nonnegative integer", key))),
        None => default.ok_or_else(|| EqError::Param(format!("missing parameter {}", key))),
    }
}

fn one() -> QComplex {
    qc_real(q(1, 1))
}

fn simple_table(name: &str, dim: usize, l: SymExpr) -> SymbolTable {
    SymbolTable {
        name: name.to_string(),
        dim,
        n1: 1,
        n2: 1,
        n3: 1,
        l: SymbolMatrix::scalar(l),
        m: SymbolMatrix::identity(1),
        n: SymbolMatrix::identity(1),
        support: SupportSpec::halfspace(dim),
        semilinear_orthogonal: false,
        claims: None,
    }
}

fn laplacian(dim: usize, eps1: &QComplex, eps_perp: &QComplex) -> SymExpr {
    let mut e = -(cq(eps1.clone()) * xi(0).pow(2));
    for j in 1..dim {
        e = e - cq(eps_perp.clone()) * xi(j).pow(2);
    }
    e
}

/// The built-in catalogue. Symbols use the convention 𝓕(fg) = 𝓕f * 𝓕g, so ∂ₓ ↦ iξ.
pub fn builtin(name: &str, params: &Value) -> Result<(SymbolTable, NonlinearSeries), EqError> {
    let p = if params.is_null() { &json!({}) } else { params };
    match name {
        "ode_square" => {
            let d = param_usize(p, "d", Some(1))?;
            let t = simple_table(name, d, c(0));
            let h = NonlinearSeries::new(1, 1, 1).with_term(vec![2], vec![one()])?;
            Ok((t, h))
        }
        "burgers" => {
            // u_t = u_xx + ∂ₓ(u²)
            let mut t = simple_table(name, 1, -xi(0).pow(2));
            t.n = SymbolMatrix::scalar(iu() * xi(0));
            t.semilinear_orthogonal = true;
            let h = NonlinearSeries::new(1, 1, 1).with_term(vec![2], vec![one()])?;
            Ok((t, h))
        }
        "complex_heat" => {
            let eps = param_q(p, "eps", Some(one()))?;
            let k = param_usize(p, "k", Some(2))?;
            let d = param_usize(p, "d", Some(1))?;
            if k < 2 {
                return Err(EqError::Param("k must be at least 2".into()));
            }
            let mut t = simple_table(name, d, laplacian(d, &eps, &eps));
            t.semilinear_orthogonal = true;
            let mut alpha = vec![0u32; 1];
            alpha[0] = k as u32;
            let h = NonlinearSeries::new(1, 1, k - 1).with_term(alpha, vec![one()])?;
            if eps.im.is_zero() && eps.re > BigRational::zero() && d == 1 {
                // 𝔭(ξ) = ξ; Re L̂ = −εξ² ≤ 0 and ‖M̂‖ = ‖N̂‖ = 1
                t.claims = Some(Claims { c0: 0.5, cap_c0: 1.0, profile: MonotoneFn::linear(1.0) });
            }
            Ok((t, h))
        }
        "clm" => {
            // v_t = ε v_xx + v·𝓗v, 𝓗 with symbol i·sign ξ
            let eps = param_q(p, "eps", Some(one()))?;
            let mut t = simple_table(name, 1, -(cq(eps) * xi(0).pow(2)));
            t.n2 = 2;
            t.m = SymbolMatrix::new(2, 1, vec![c(1), iu() * SymExpr::Sign(Box::new(xi(0)))]);
            let h = NonlinearSeries::new(2, 1, 1).with_term(vec![1, 1], vec![one()])?;
            Ok((t, h))
        }
        "kdv" => {
            // u_t = −u_xxx + ∂ₓ(3u²)
            let mut t = simple_table(name, 1, iu() * xi(0).pow(3));
            t.n = SymbolMatrix::scalar(iu() * xi(0));
            let h = NonlinearSeries::new(1, 1, 1).with_term(vec![2], vec![qc_real(q(3, 1))])?;
            Ok((t, h))
        }
        "nls_star" => {
            // i u_t + u_xx = α u² v, v = u^⋆; conjugating gives
            // v_t = −i v_xx + i ᾱ v² u
            let alpha = param_q(p, "alpha", Some(one()))?;
            let i = qc(BigRational::zero(), BigRational::one());
            let t = SymbolTable {
                name: name.into(),
                dim: 1,
                n1: 2,
                n2: 2,
                n3: 2,
                l: SymbolMatrix::diagonal(vec![-(iu() * xi(0).pow(2)), iu() * xi(0).pow(2)]),
                m: SymbolMatrix::identity(2),
                n: SymbolMatrix::identity(2),
                support: SupportSpec::halfspace(1),
                semilinear_orthogonal: false,
                claims: None,
            };
            let zero = QComplex::zero();
            let mut h = NonlinearSeries::new(2, 2, 2);
            h.add_term(vec![2, 1], vec![-(i.clone() * alpha.clone()), zero.clone()])?;
            h.add_term(vec![1, 2], vec![zero, i * Scalar::conj(&alpha)])?;
            Ok((t, h))
        }
        "ns_incompressible" => {
            // u_t = L u − P div(u⊗u); channel (j,k) carries u_j u_k and
            // N̂_{i,(j,k)} = −i P_{ij}(ξ) ξ_k with P = I − ξξᵀ/|ξ|²
            let d = param_usize(p, "d", Some(2))?;
            if d < 2 {
                return Err(EqError::Param("ns_incompressible needs d >= 2".into()));
            }
            let e1 = param_q(p, "eps1", Some(one()))?;
            let ep = param_q(p, "eps_perp", Some(one()))?;
            let lap = laplacian(d, &e1, &ep);
            let norm2 = (1..d).fold(xi(0).pow(2), |a, j| a + xi(j).pow(2));
            let mut n_entries = Vec::with_capacity(d * d * d);
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let delta = if i == j { c(1) } else { c(0) };
                        let pij = delta - xi(i) * xi(j) / norm2.clone();
                        n_entries.push(-(iu() * pij * xi(k)));
                    }
                }
            }
            let t = SymbolTable {
                name: name.into(),
                dim: d,
                n1: d,
                n2: d,
                n3: d * d,
                l: SymbolMatrix::diagonal(vec![lap; d]),
                m: SymbolMatrix::identity(d),
                n: SymbolMatrix::new(d, d * d, n_entries),
                support: SupportSpec::halfspace(d),
                semilinear_orthogonal: true,
                claims: None,
            };
            let mut h = NonlinearSeries::new(d, d * d, 1);
            for j in 0..d {
                for k in 0..d {
                    let mut alpha = vec![0u32; d];
                    alpha[j] += 1;
                    alpha[k] += 1;
                    let mut coeff = vec![QComplex::zero(); d * d];
                    coeff[j * d + k] = one();
                    h.add_term(alpha, coeff)?;
                }
            }
            Ok((t, h))
        }
        "heat_cascade" => {
            let d = param_usize(p, "d", Some(1))?;
            let l = match p.get("L") {
                Some(Value::String(s)) => SymExpr::parse(s)?,
                None => laplacian(d, &one(), &one()),
                _ => return Err(EqError::Param("L must be a symbol expression".into())),
            };
            let t = simple_table(name, d, l);
            let h = NonlinearSeries::new(1, 1, 1).with_term(vec![2], vec![one()])?;
            Ok((t, h))
        }
        "lacunary" => {
            // Σ_{n≥0} u^{2^n}: the n = 0 term is linear and is folded into L̂
            let d = param_usize(p, "d", Some(1))?;
            let l = match p.get("L") {
                Some(Value::String(s)) => SymExpr::parse(s)? + c(1),
                _ => c(1),
            };
            let t = simple_table(name, d, l);
            let mut h = NonlinearSeries::new(1, 1, 1);
            h.lacunary = Some((1, one()));
            h.radius = 1.0;
            Ok((t, h))
        }
        "fractional_heat" => {
            // u_t = ε|ξ|^s û + 𝓗(∂^{α¹}u, …, ∂^{αᵐ}u); default 𝓗 = product of channels
            let d = param_usize(p, "d", Some(1))?;
            let eps = param_q(p, "eps", Some(qc_real(q(-1, 1))))?;
            let s = param_f64(p, "s", Some(1.5))?;
            let alphas: Vec<Vec<u32>> = match p.get("alphas") {
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| EqError::Param(format!("alphas: {}", e)))?,
                None => vec![vec![0; d], vec![1].into_iter().chain(std::iter::repeat_n(0, d - 1)).collect()],
            };
            if alphas.is_empty() || alphas.iter().any(|a| a.len() != d) {
                return Err(EqError::Param("alphas must be nonempty multi-indices of length d".into()));
            }
            let frac = if s.fract() == 0.0 && s as i64 % 2 == 0 {
                let half = (s as i32) / 2;
                let norm2 = (1..d).fold(xi(0).pow(2), |a, j| a + xi(j).pow(2));
                norm2.pow(half)
            } else {
                SymExpr::PowF(Box::new(SymExpr::Norm), s)
            };
            let mut t = simple_table(name, d, cq(eps) * frac);
            let m_entries: Vec<SymExpr> = alphas
                .iter()
                .map(|a| a.iter().enumerate().fold(c(1), |acc, (j, &k)| if k == 0 { acc } else { acc * (iu() * xi(j)).pow(k as i32) }))
                .collect();
            let m = alphas.len();
            t.n2 = m;
            t.m = SymbolMatrix::new(m, 1, m_entries);
            let h = match p.get("H") {
                Some(hv) => NonlinearSeries::from_json(hv, m, 1)?,
                None => {
                    let alpha = if m == 1 { vec![2] } else { vec![1; m] };
                    NonlinearSeries::new(m, 1, 1).with_term(alpha, vec![one()])?
                }
            };
            Ok((t, h))
        }
        "nlkg" => {
            // u_tt − Δu + m u = λ u^k as U = (u, u_t)
            let d = param_usize(p, "d", Some(1))?;
            let mass = param_q(p, "mass", Some(one()))?;
            let k = param_usize(p, "k", Some(2))?;
            let lam = param_q(p, "lambda", Some(one()))?;
            let norm2 = (1..d).fold(xi(0).pow(2), |a, j| a + xi(j).pow(2));
            let t = SymbolTable {
                name: name.into(),
                dim: d,
                n1: 2,
                n2: 1,
                n3: 1,
                l: SymbolMatrix::new(2, 2, vec![c(0), c(1), -(norm2 + cq(mass)), c(0)]),
                m: SymbolMatrix::new(1, 2, vec![c(1), c(0)]),
                n: SymbolMatrix::new(2, 1, vec![c(0), c(1)]),
                support: SupportSpec::halfspace(d),
                semilinear_orthogonal: false,
                claims: None,
            };
            let h = NonlinearSeries::new(1, 1, k - 1).with_term(vec![k as u32], vec![lam])?;
            Ok((t, h))
        }
        _ => Err(EqError::Unknown(name.to_string())),
    }
}

pub const CATALOGUE: &[&str] = &[
    "ode_square",
    "burgers",
    "complex_heat",
    "clm",
    "kdv",
    "nls_star",
    "ns_incompressible",
    "heat_cascade",
    "lacunary",
    "fractional_heat",
    "nlkg",
];

/// Equation config: `{"name": ..., "params": {...}}` or
/// `{"custom": {"dim", "L", "M", "N"}, "H": {...}}`, with optional `support`
/// and `claims` blocks.
pub fn equation_from_json(v: &Value) -> Result<(SymbolTable, NonlinearSeries), EqError> {
    let (mut t, h) = if let Some(name) = v.get("name").and_then(Value::as_str) {
        builtin(name, v.get("params").unwrap_or(&Value::Null))?
    } else if let Some(cu) = v.get("custom") {
        let dim = param_usize(cu, "dim", Some(1))?;
        let l = SymbolMatrix::from_json(cu.get("L").ok_or_else(|| EqError::Param("custom needs L".into()))?)?;
        let n1 = l.rows;
        let m = match cu.get("M") {
            Some(m) => SymbolMatrix::from_json(m)?,
            None => SymbolMatrix::identity(n1),
        };
        let n = match cu.get("N") {
            Some(n) => SymbolMatrix::from_json(n)?,
            None => SymbolMatrix::identity(n1),
        };
        let (n2, n3) = (m.rows, n.cols);
        let h = NonlinearSeries::from_json(v.get("H").ok_or_else(|| EqError::Param("custom needs H".into()))?, n2, n3)?;
        let t = SymbolTable {
            name: "custom".into(),
            dim,
            n1,
            n2,
            n3,
            l,
            m,
            n,
            support: SupportSpec::halfspace(dim),
            semilinear_orthogonal: cu.get("semilinear_orthogonal").and_then(Value::as_bool).unwrap_or(false),
            claims: None,
        };
        (t, h)
    } else {
        return Err(EqError::Param("equation config needs name or custom".into()));
    };
    if let Some(s) = v.get("support") {
        t.support = support_from_json(s, t.dim)?;
    }
    if let Some(cl) = v.get("claims") {
        let profile = match cl.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| EqError::Param(format!("profile: {}", e)))?,
            None => MonotoneFn::linear(1.0),
        };
        t.claims = Some(Claims { c0: param_f64(cl, "c0", None)?, cap_c0: param_f64(cl, "C0", None)?, profile });
    }
    t.validate()?;
    Ok((t, h))
}

pub fn support_from_json(v: &Value, dim: usize) -> Result<SupportSpec, EqError> {
    let direction = match v.get("direction") {
        Some(d) => FreqPoint::from_json(d).ok_or_else(|| EqError::Param("direction".into()))?.0,
        None => crate::spectral::e1(dim),
    };
    if direction.len() != dim {
        return Err(EqError::Shape("support direction dimension".into()));
    }
    let kind = match v.get("kind").and_then(Value::as_str).unwrap_or("halfspace") {
        "halfspace" => SupportKind::HalfSpace,
        "cone" => {
            let r: MonotoneFn = serde_json::from_value(v.get("R").cloned().unwrap_or(Value::Null))
                .map_err(|e| EqError::Param(format!("cone R: {}", e)))?;
            let grid = crate::monofun::uniform_grid(0.0, r.last_breakpoint().max(1.0) * 2.0, 200);
            if crate::monofun::is_superadditive(&r, &grid, crate::monofun::DEFAULT_TOL).is_err() {
                return Err(EqError::Param("cone profile R is not super-additive".into()));
            }
            SupportKind::Cone(r)
        }
        "lattice" => {
            let basis = v
                .get("basis")
                .and_then(Value::as_array)
                .ok_or_else(|| EqError::Param("lattice needs basis".into()))?
                .iter()
                .map(|b| FreqPoint::from_json(b).map(|f| f.0).ok_or_else(|| EqError::Param("basis vector".into())))
                .collect::<Result<Vec<_>, _>>()?;
            let min_level = match v.get("min_level") {
                Some(Value::String(s)) => parse_rational(s).ok_or_else(|| EqError::Param("min_level".into()))?,
                Some(x) => crate::scalar::f64_to_q(x.as_f64().ok_or_else(|| EqError::Param("min_level".into()))?),
                None => return Err(EqError::Param("lattice needs min_level".into())),
            };
            if min_level <= BigRational::zero() {
                return Err(EqError::Param("lattice min_level must be positive".into()));
            }
            SupportKind::Lattice { basis, min_level }
        }
        other => return Err(EqError::Param(format!("unknown support kind {}", other))),
    };
    Ok(SupportSpec { direction, kind })
}

/// Converts a floating complex into an exact constant for symbol building.
pub fn const_c64(z: C64) -> SymExpr {
    SymExpr::Const(c64_to_qc(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> QComplex {
        qc_real(q(n, 1))
    }

    #[test]
    fn parse_and_eval() {
        let e = SymExpr::parse("-0.5*xi^2 + i*xi2 - 3/4").unwrap();
        let x = FreqPoint::from_ints(&[2, 5]);
        let v: QComplex = e.eval(&x).unwrap();
        assert_eq!(v, qc(q(-11, 4), q(5, 1)));
        let s: QComplex = SymExpr::parse("i*sign(xi)").unwrap().eval(&FreqPoint::from_ints(&[-3])).unwrap();
        assert_eq!(s, qc(q(0, 1), q(-1, 1)));
        assert!(SymExpr::parse("xi^1.5").unwrap().eval::<QComplex>(&FreqPoint::from_ints(&[2])).is_err());
        let f: C64 = SymExpr::parse("xi^1.5").unwrap().eval(&FreqPoint::from_ints(&[4])).unwrap();
        assert!((f.re - 8.0).abs() < 1e-12);
        assert!(SymExpr::parse("xi +").is_err());
        assert!(SymExpr::parse("foo(xi)").is_err());
    }

    #[test]
    fn kdv_symbol() {
        let (t, h) = builtin("kdv", &Value::Null).unwrap();
        let l: Vec<QComplex> = t.l.eval(&FreqPoint::from_ints(&[2])).unwrap();
        assert_eq!(l[0], qc(q(0, 1), q(8, 1)));
        assert_eq!(h.table[&vec![2]], vec![r(3)]);
    }

    #[test]
    fn ode_square_table() {
        let (_, h) = builtin("ode_square", &Value::Null).unwrap();
        assert_eq!(h.table.len(), 1);
        assert_eq!(h.table[&vec![2]], vec![r(1)]);
    }

    #[test]
    fn nls_star_conjugate_coefficients() {
        let alpha = json!({"alpha": ["1/2", "3"]});
        let (_, h) = builtin("nls_star", &alpha).unwrap();
        let a = qc(q(1, 2), q(3, 1));
        let i = qc(q(0, 1), q(1, 1));
        assert_eq!(h.table[&vec![2, 1]][0], -(i.clone() * a.clone()));
        assert_eq!(h.table[&vec![1, 2]][1], i * Scalar::conj(&a));
    }

    #[test]
    fn ns_projection_is_divergence_free() {
        let (t, _) = builtin("ns_incompressible", &json!({"d": 3})).unwrap();
        let x = FreqPoint::from_ints(&[1, 2, -2]);
        let n: Vec<QComplex> = t.n.eval(&x).unwrap();
        // ξ·N̂ = 0 column by column
        for col in 0..9 {
            let s = (0..3).fold(QComplex::zero(), |a, i| a + n[i * 9 + col].clone() * r([1, 2, -2][i]));
            assert!(s.is_zero());
        }
    }

    #[test]
    fn majorant_examples() {
        let sq = NonlinearSeries::new(1, 1, 1).with_term(vec![2], vec![r(1)]).unwrap();
        assert_eq!(majorants(&sq, 0.3).unwrap(), Majorants { h: 1.0, h1: 2.0, truncated: false });
        let cube = NonlinearSeries::new(1, 1, 2).with_term(vec![3], vec![r(1)]).unwrap();
        assert!((majorants(&cube, 0.7).unwrap().h - 0.7).abs() < 1e-15);
        let z = NonlinearSeries::zero(1, 1);
        assert_eq!(majorants(&z, 5.0).unwrap().h, 0.0);
        let (_, lac) = builtin("lacunary", &Value::Null).unwrap();
        assert!(majorants(&lac, 1.0).is_err());
        assert!(majorants(&lac, 0.5).unwrap().h > 1.0);
    }

    #[test]
    fn low_order_terms_rejected() {
        assert!(NonlinearSeries::new(1, 1, 1).with_term(vec![1], vec![r(1)]).is_err());
    }

    #[test]
    fn square_of_single_atom() {
        let (_, h) = builtin("ode_square", &Value::Null).unwrap();
        let mut v = AtomicSpectrum::<QComplex>::scalar(1);
        v.insert_scalar(FreqPoint::from_ints(&[1]), r(3));
        let out = evaluate_nonlinearity(&h, &v, &crate::spectral::e1(1), &q(10, 1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.get(&FreqPoint::from_ints(&[2])).unwrap()[0], r(9));
    }

    #[test]
    fn lacunary_powers_up_to_level() {
        let (_, h) = builtin("lacunary", &Value::Null).unwrap();
        let mut v = AtomicSpectrum::<QComplex>::scalar(1);
        v.insert_scalar(FreqPoint::from_ints(&[1]), r(2));
        let out = evaluate_nonlinearity(&h, &v, &crate::spectral::e1(1), &q(20, 1)).unwrap();
        let levels: Vec<_> = out.atoms().keys().map(|k| k.0[0].clone()).collect();
        assert_eq!(levels, vec![q(2, 1), q(4, 1), q(8, 1), q(16, 1)]);
        assert_eq!(out.get(&FreqPoint::from_ints(&[8])).unwrap()[0], r(256));
    }

    #[test]
    fn boundary_input_rejected() {
        let (_, h) = builtin("ode_square", &Value::Null).unwrap();
        let mut v = AtomicSpectrum::<QComplex>::scalar(1);
        v.insert_scalar(FreqPoint::from_ints(&[0]), r(1));
        assert!(evaluate_nonlinearity(&h, &v, &crate::spectral::e1(1), &q(3, 1)).is_err());
    }

    #[test]
    fn custom_config() {
        let cfg = json!({
            "custom": {"dim": 1, "L": [["-xi^2"]], "N": [["i*xi"]]},
            "H": {"k0": 1, "terms": [{"alpha": [2], "coeff": 1}]},
            "claims": {"c0": 0.5, "C0": 1.0}
        });
        let (t, h) = equation_from_json(&cfg).unwrap();
        assert_eq!(t.n1, 1);
        assert_eq!(h.table.len(), 1);
        assert!(equation_from_json(&json!({"name": "nope"})).is_err());
    }

    #[test]
    fn complex_heat_claims_hold() {
        let (t, _) = builtin("complex_heat", &json!({"eps": 1, "k": 2})).unwrap();
        let samples: Vec<FreqPoint> = (1..50).map(|k| FreqPoint(vec![q(k, 7)])).collect();
        t.check_claims(&samples).unwrap();
    }
}
