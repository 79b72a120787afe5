//! Seeded stochastic processes on an interval.
//!
//! A process is sampled one path at a time. Path `i` under seed `s` draws its
//! random coefficients from ChaCha stream `i` keyed by `s`, so a path never
//! depends on how many other paths were drawn or in which order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::polynomial::Polynomial;
use crate::quadrature::{integrate_adaptive, QuadratureTol};
use crate::series::{parse_args, split_call};

pub const MAX_POLY_DEGREE: usize = 4;

/// Distribution of one random coefficient. All have finite second moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientDist {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl CoefficientDist {
    fn validate(&self) -> Result<()> {
        match *self {
            CoefficientDist::Constant(c) if c.is_finite() => Ok(()),
            CoefficientDist::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => {
                Ok(())
            }
            CoefficientDist::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd > 0.0 => {
                Ok(())
            }
            _ => Err(domain(format!("invalid coefficient distribution {self}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CoefficientDist::Constant(c) => c,
            CoefficientDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            CoefficientDist::Normal { mean, sd } => Normal::new(mean, sd)
                .expect("validated at construction")
                .sample(rng),
        }
    }

    /// Smallest value the distribution can produce (−∞ for Gaussians).
    pub fn infimum(&self) -> f64 {
        match *self {
            CoefficientDist::Constant(c) => c,
            CoefficientDist::Uniform { lo, .. } => lo,
            CoefficientDist::Normal { .. } => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for CoefficientDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientDist::Constant(c) => write!(f, "const({c})"),
            CoefficientDist::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            CoefficientDist::Normal { mean, sd } => write!(f, "normal({mean},{sd})"),
        }
    }
}

impl FromStr for CoefficientDist {
    type Err = Error;

    /// `uniform(lo,hi)`, `normal(mu,sd)`, `const(c)` or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(c) = s.parse::<f64>() {
            let d = CoefficientDist::Constant(c);
            d.validate()?;
            return Ok(d);
        }
        let (name, args) =
            split_call(s).ok_or_else(|| domain(format!("unrecognized distribution `{s}`")))?;
        let nums = parse_args(args).map_err(|e| domain(format!("distribution `{s}`: {e}")))?;
        let d = match (name, nums.as_slice()) {
            ("const", [c]) => CoefficientDist::Constant(*c),
            ("uniform", [lo, hi]) => CoefficientDist::Uniform { lo: *lo, hi: *hi },
            ("normal", [mean, sd]) => CoefficientDist::Normal { mean: *mean, sd: *sd },
            _ => return Err(domain(format!("unrecognized distribution `{s}`"))),
        };
        d.validate()?;
        Ok(d)
    }
}

/// How the strong-convexity modulus C(·) is drawn per path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusSpec {
    /// Independent positive random variable.
    Dist(CoefficientDist),
    /// `C = f * a2`, where a2 is the path's t² coefficient.
    QuadraticFraction(f64),
}

impl fmt::Display for ModulusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulusSpec::Dist(d) => d.fmt(f),
            ModulusSpec::QuadraticFraction(x) => write!(f, "fraction({x})"),
        }
    }
}

impl FromStr for ModulusSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(("fraction", args)) = split_call(s) {
            let nums = parse_args(args).map_err(|e| domain(format!("modulus `{s}`: {e}")))?;
            return match nums.as_slice() {
                [f] if *f > 0.0 => Ok(ModulusSpec::QuadraticFraction(*f)),
                _ => Err(domain(format!("modulus fraction must be one positive number: `{s}`"))),
            };
        }
        let d: CoefficientDist = s.parse()?;
        if !(d.infimum() > 0.0) {
            return Err(domain(format!(
                "modulus distribution `{s}` must be bounded below by a positive value"
            )));
        }
        Ok(ModulusSpec::Dist(d))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeterministicFn {
    Polynomial(Polynomial),
    /// `exp(rate t)`
    Exp { rate: f64 },
    /// `|t - center|`
    Abs { center: f64 },
}

/// Tabulated sample paths sharing one knot grid, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTable {
    knots: Arc<[f64]>,
    rows: Arc<[Vec<f64>]>,
}

impl PathTable {
    pub fn new(knots: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(domain("path table needs at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain("path table knots must be strictly increasing"));
        }
        if rows.is_empty() {
            return Err(domain("path table has no rows"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != knots.len()) {
            return Err(domain(format!(
                "path table row {i} has {} values for {} knots",
                rows[i].len(),
                knots.len()
            )));
        }
        Ok(PathTable {
            knots: knots.into(),
            rows: rows.into(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessFamily {
    /// Σ_j c_j t^j with c_j drawn per path, ascending order, degree ≤ 4.
    RandomPolynomial(Vec<CoefficientDist>),
    Deterministic(DeterministicFn),
    Table(PathTable),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityClass {
    #[default]
    None,
    JensenConvex,
    Convex,
    StronglyConvex,
}

impl FromStr for ConvexityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(ConvexityClass::None),
            "jensen_convex" | "jensen-convex" => Ok(ConvexityClass::JensenConvex),
            "convex" => Ok(ConvexityClass::Convex),
            "strongly_convex" | "strongly-convex" => Ok(ConvexityClass::StronglyConvex),
            other => Err(domain(format!("unknown convexity class `{other}`"))),
        }
    }
}

impl ConvexityClass {
    pub fn is_convex_like(self) -> bool {
        !matches!(self, ConvexityClass::None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticProcess {
    interval: (f64, f64),
    family: ProcessFamily,
    convexity: ConvexityClass,
    modulus: Option<ModulusSpec>,
}

impl StochasticProcess {
    pub fn new(a: f64, b: f64, family: ProcessFamily) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(domain(format!("process interval needs a < b, got [{a}, {b}]")));
        }
        match &family {
            ProcessFamily::RandomPolynomial(coeffs) => {
                if coeffs.is_empty() || coeffs.len() > MAX_POLY_DEGREE + 1 {
                    return Err(domain(format!(
                        "random polynomial needs 1..={} coefficients, got {}",
                        MAX_POLY_DEGREE + 1,
                        coeffs.len()
                    )));
                }
                for c in coeffs {
                    c.validate()?;
                }
            }
            ProcessFamily::Deterministic(DeterministicFn::Polynomial(p)) => {
                if p.degree() > MAX_POLY_DEGREE || p.coeffs().iter().any(|c| !c.is_finite()) {
                    return Err(domain("deterministic polynomial must be finite with degree ≤ 4"));
                }
            }
            ProcessFamily::Deterministic(DeterministicFn::Exp { rate }) if !rate.is_finite() => {
                return Err(domain("exp rate must be finite"));
            }
            ProcessFamily::Deterministic(DeterministicFn::Abs { center }) if !center.is_finite() => {
                return Err(domain("abs center must be finite"));
            }
            _ => {}
        }
        Ok(StochasticProcess {
            interval: (a, b),
            family,
            convexity: ConvexityClass::None,
            modulus: None,
        })
    }

    pub fn random_polynomial(a: f64, b: f64, coeffs: Vec<CoefficientDist>) -> Result<Self> {
        Self::new(a, b, ProcessFamily::RandomPolynomial(coeffs))
    }

    pub fn polynomial(a: f64, b: f64, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(
            a,
            b,
            ProcessFamily::Deterministic(DeterministicFn::Polynomial(Polynomial::new(coeffs))),
        )
    }

    pub fn with_convexity(mut self, class: ConvexityClass) -> Self {
        self.convexity = class;
        self
    }

    pub fn with_modulus(mut self, modulus: ModulusSpec) -> Result<Self> {
        match modulus {
            ModulusSpec::Dist(d) => {
                d.validate()?;
                if !(d.infimum() > 0.0) {
                    return Err(domain(format!("modulus {d} can be non-positive")));
                }
            }
            ModulusSpec::QuadraticFraction(f) => {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(domain(format!("modulus fraction must be positive, got {f}")));
                }
                let polynomial = matches!(
                    self.family,
                    ProcessFamily::RandomPolynomial(_)
                        | ProcessFamily::Deterministic(DeterministicFn::Polynomial(_))
                );
                if !polynomial {
                    return Err(Error::Config(
                        "fraction(..) modulus needs a polynomial family".into(),
                    ));
                }
            }
        }
        self.modulus = Some(modulus);
        Ok(self)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn family(&self) -> &ProcessFamily {
        &self.family
    }

    pub fn convexity(&self) -> ConvexityClass {
        self.convexity
    }

    pub fn modulus(&self) -> Option<&ModulusSpec> {
        self.modulus.as_ref()
    }

    /// Short description for reports.
    pub fn label(&self) -> String {
        match &self.family {
            ProcessFamily::RandomPolynomial(c) => format!(
                "rpoly:{}",
                c.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            ),
            ProcessFamily::Deterministic(DeterministicFn::Polynomial(p)) => format!(
                "poly:{}",
                p.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            ),
            ProcessFamily::Deterministic(DeterministicFn::Exp { rate }) => format!("exp:{rate}"),
            ProcessFamily::Deterministic(DeterministicFn::Abs { center }) => format!("abs:{center}"),
            ProcessFamily::Table(t) => format!("table:{}x{}", t.n_rows(), t.knots().len()),
        }
    }

    /// Parses the compact command-line form:
    /// `poly:<expr in t>`, `rpoly:<dist>,<dist>,...` (ascending),
    /// `exp[:rate]`, `abs[:center]` or `zero`.
    pub fn parse_spec(spec: &str, a: f64, b: f64) -> Result<Self> {
        let s = spec.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h.trim(), Some(r.trim())),
            None => (s, None),
        };
        let family = match (head, rest) {
            ("zero", None) => {
                ProcessFamily::Deterministic(DeterministicFn::Polynomial(Polynomial::zero()))
            }
            ("poly", Some(expr)) => {
                ProcessFamily::Deterministic(DeterministicFn::Polynomial(parse_poly_expr(expr)?))
            }
            ("rpoly", Some(list)) => ProcessFamily::RandomPolynomial(
                split_top_level(list)
                    .into_iter()
                    .map(str::parse)
                    .collect::<Result<Vec<_>>>()?,
            ),
            ("exp", r) => ProcessFamily::Deterministic(DeterministicFn::Exp {
                rate: parse_num(r.unwrap_or("1"))?,
            }),
            ("abs", r) => ProcessFamily::Deterministic(DeterministicFn::Abs {
                center: parse_num(r.unwrap_or("0"))?,
            }),
            _ => return Err(domain(format!("unrecognized process spec `{spec}`"))),
        };
        Self::new(a, b, family)
    }

    /// Draws path `path_index` under `seed`.
    pub fn sample_path(&self, seed: u64, path_index: u64) -> Result<Path> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        let (shape, quadratic) = match &self.family {
            ProcessFamily::RandomPolynomial(dists) => {
                let coeffs: Vec<f64> = dists.iter().map(|d| d.sample(&mut rng)).collect();
                let p = Polynomial::new(coeffs);
                let a2 = p.coeff(2);
                (PathShape::Polynomial(p), Some(a2))
            }
            ProcessFamily::Deterministic(DeterministicFn::Polynomial(p)) => {
                (PathShape::Polynomial(p.clone()), Some(p.coeff(2)))
            }
            ProcessFamily::Deterministic(DeterministicFn::Exp { rate }) => {
                (PathShape::Exp { rate: *rate }, None)
            }
            ProcessFamily::Deterministic(DeterministicFn::Abs { center }) => {
                (PathShape::Abs { center: *center }, None)
            }
            ProcessFamily::Table(table) => {
                let row = usize::try_from(path_index)
                    .ok()
                    .and_then(|i| table.rows.get(i))
                    .ok_or_else(|| {
                        domain(format!(
                            "path index {path_index} out of range for a table with {} rows",
                            table.n_rows()
                        ))
                    })?;
                (
                    PathShape::Table {
                        knots: table.knots.clone(),
                        values: row.clone(),
                    },
                    None,
                )
            }
        };
        let modulus = match &self.modulus {
            None => None,
            Some(ModulusSpec::Dist(d)) => Some(d.sample(&mut rng)),
            Some(ModulusSpec::QuadraticFraction(f)) => Some(
                f * quadratic.ok_or_else(|| {
                    Error::Config("fraction(..) modulus needs a polynomial family".into())
                })?,
            ),
        };
        Ok(Path {
            seed,
            path_index,
            shape,
            modulus,
        })
    }

    /// Paths `0..n_paths`, sampled in parallel and returned in index order.
    pub fn sample_paths(&self, seed: u64, n_paths: usize) -> Result<Vec<Path>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.sample_path(seed, i))
            .collect()
    }

    pub(crate) fn check_subinterval(&self, u: f64, v: f64) -> Result<()> {
        let (a, b) = self.interval;
        if !(u.is_finite() && v.is_finite() && u < v) {
            return Err(domain(format!("need u < v, got u={u}, v={v}")));
        }
        if u < a || v > b {
            return Err(domain(format!("[{u}, {v}] is not inside the process interval [{a}, {b}]")));
        }
        Ok(())
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| domain(format!("`{s}` is not a finite number")))
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

/// Parses sums of terms like `3t^2`, `-0.5*t`, `t^4`, `2`.
pub fn parse_poly_expr(expr: &str) -> Result<Polynomial> {
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(domain("empty polynomial expression"));
    }
    let mut terms = Vec::new();
    let mut start = 0;
    for (i, ch) in compact.char_indices() {
        let after_exp = i > 0 && matches!(compact.as_bytes()[i - 1], b'e' | b'E');
        if (ch == '+' || ch == '-') && i > start && !after_exp {
            terms.push(&compact[start..i]);
            start = i;
        }
    }
    terms.push(&compact[start..]);

    let mut coeffs = vec![0.0; MAX_POLY_DEGREE + 1];
    for term in terms {
        let bad = || domain(format!("cannot parse polynomial term `{term}` in `{expr}`"));
        let (sign, body) = match term.as_bytes().first() {
            Some(b'-') => (-1.0, &term[1..]),
            Some(b'+') => (1.0, &term[1..]),
            _ => (1.0, term),
        };
        let (coef, power) = match body.find('t') {
            None => (body.parse::<f64>().map_err(|_| bad())?, 0usize),
            Some(pos) => {
                let c = body[..pos].trim_end_matches('*');
                let c = if c.is_empty() {
                    1.0
                } else {
                    c.parse::<f64>().map_err(|_| bad())?
                };
                let p = match &body[pos + 1..] {
                    "" => 1,
                    rest => rest
                        .strip_prefix('^')
                        .and_then(|r| r.parse::<usize>().ok())
                        .ok_or_else(bad)?,
                };
                (c, p)
            }
        };
        if power > MAX_POLY_DEGREE {
            return Err(domain(format!("degree {power} exceeds the maximum of {MAX_POLY_DEGREE}")));
        }
        coeffs[power] += sign * coef;
    }
    let deg = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    coeffs.truncate(deg + 1);
    Ok(Polynomial::new(coeffs))
}

/// Concrete shape of one sample path.
#[derive(Clone, Debug, PartialEq)]
pub enum PathShape {
    Polynomial(Polynomial),
    Exp { rate: f64 },
    Abs { center: f64 },
    Table { knots: Arc<[f64]>, values: Vec<f64> },
    /// Base shape plus a polynomial correction.
    Sum(Box<PathShape>, Polynomial),
    Scaled(Box<PathShape>, f64),
}

impl PathShape {
    fn eval(&self, t: f64) -> f64 {
        match self {
            PathShape::Polynomial(p) => p.eval(t),
            PathShape::Exp { rate } => (rate * t).exp(),
            PathShape::Abs { center } => (t - center).abs(),
            PathShape::Table { knots, values } => interpolate(knots, values, t),
            PathShape::Sum(base, p) => base.eval(t) + p.eval(t),
            PathShape::Scaled(base, c) => c * base.eval(t),
        }
    }

    fn derivative(&self, t: f64) -> Option<f64> {
        match self {
            PathShape::Polynomial(p) => Some(p.derivative().eval(t)),
            PathShape::Exp { rate } => Some(rate * (rate * t).exp()),
            PathShape::Abs { .. } | PathShape::Table { .. } => None,
            PathShape::Sum(base, p) => Some(base.derivative(t)? + p.derivative().eval(t)),
            PathShape::Scaled(base, c) => Some(c * base.derivative(t)?),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            PathShape::Polynomial(_) => "polynomial",
            PathShape::Exp { .. } => "exp",
            PathShape::Abs { .. } => "abs",
            PathShape::Table { .. } => "table",
            PathShape::Sum(..) => "sum",
            PathShape::Scaled(..) => "scaled",
        }
    }
}

fn interpolate(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let n = knots.len();
    if t <= knots[0] {
        return values[0];
    }
    if t >= knots[n - 1] {
        return values[n - 1];
    }
    let i = knots.partition_point(|&k| k <= t) - 1;
    let w = (t - knots[i]) / (knots[i + 1] - knots[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// One realization t ↦ X(t, ω) together with its path-level random modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    seed: u64,
    path_index: u64,
    shape: PathShape,
    modulus: Option<f64>,
}

impl Path {
    /// A path built directly from a polynomial, outside any process.
    pub fn from_polynomial(p: Polynomial) -> Self {
        Path {
            seed: 0,
            path_index: 0,
            shape: PathShape::Polynomial(p),
            modulus: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn shape(&self) -> &PathShape {
        &self.shape
    }

    pub fn modulus(&self) -> Option<f64> {
        self.modulus
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.shape.eval(t)
    }

    pub fn derivative(&self, t: f64) -> Option<f64> {
        self.shape.derivative(t)
    }

    /// The path as a polynomial, when it is one.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        fn go(shape: &PathShape) -> Option<Polynomial> {
            match shape {
                PathShape::Polynomial(p) => Some(p.clone()),
                PathShape::Sum(base, p) => Some(go(base)?.add(p)),
                PathShape::Scaled(base, c) => Some(go(base)?.scaled(*c)),
                _ => None,
            }
        }
        go(&self.shape)
    }

    /// X(t) + p(t), keeping identity and modulus.
    pub fn plus_polynomial(&self, p: &Polynomial) -> Path {
        let shape = match &self.shape {
            PathShape::Polynomial(q) => PathShape::Polynomial(q.add(p)),
            PathShape::Sum(base, q) => PathShape::Sum(base.clone(), q.add(p)),
            other => PathShape::Sum(Box::new(other.clone()), p.clone()),
        };
        Path {
            shape,
            ..self.clone()
        }
    }

    /// c · X(t)
    pub fn scaled(&self, c: f64) -> Path {
        fn go(shape: &PathShape, c: f64) -> PathShape {
            match shape {
                PathShape::Polynomial(p) => PathShape::Polynomial(p.scaled(c)),
                PathShape::Table { knots, values } => PathShape::Table {
                    knots: knots.clone(),
                    values: values.iter().map(|v| v * c).collect(),
                },
                PathShape::Sum(base, p) => PathShape::Sum(Box::new(go(base, c)), p.scaled(c)),
                PathShape::Scaled(base, k) => PathShape::Scaled(base.clone(), k * c),
                other => PathShape::Scaled(Box::new(other.clone()), c),
            }
        }
        Path {
            shape: go(&self.shape, c),
            ..self.clone()
        }
    }

    /// ∫_u^v X(t) dt: antiderivative for polynomials, exact trapezoid for
    /// tables, adaptive quadrature otherwise.
    pub fn integral(&self, u: f64, v: f64) -> Result<(f64, EstimateMethod)> {
        if let Some(p) = self.as_polynomial() {
            return Ok((p.integrate(u, v), EstimateMethod::ExactClosedForm));
        }
        if let PathShape::Table { knots, values } = &self.shape {
            return table_integral(knots, values, u, v).map(|x| (x, EstimateMethod::ExactClosedForm));
        }
        if let PathShape::Sum(base, p) = &self.shape {
            if let PathShape::Table { knots, values } = base.as_ref() {
                let t = table_integral(knots, values, u, v)?;
                return Ok((t + p.integrate(u, v), EstimateMethod::ExactClosedForm));
            }
        }
        let tol = QuadratureTol {
            abs: 1e-13,
            rel: 1e-13,
            max_intervals: 4000,
        };
        let r = integrate_adaptive(|t| self.eval(t), u, v, tol)?;
        if !r.value.is_finite() {
            return Err(Error::Data(format!("path integral over [{u}, {v}] is not finite")));
        }
        Ok((r.value, EstimateMethod::Quadrature))
    }
}

fn table_integral(knots: &[f64], values: &[f64], u: f64, v: f64) -> Result<f64> {
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!("table value at knot {i} is not finite")));
    }
    let (k0, kn) = (knots[0], knots[knots.len() - 1]);
    if u < k0 || v > kn {
        return Err(Error::Data(format!(
            "table knots [{k0}, {kn}] do not cover the integration range [{u}, {v}]"
        )));
    }
    let mut pts = vec![u];
    pts.extend(knots.iter().copied().filter(|&k| k > u && k < v));
    pts.push(v);
    Ok(pts
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (interpolate(knots, values, w[0]) + interpolate(knots, values, w[1])))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    ExactClosedForm,
    Quadrature,
    RiemannOracle,
}

impl EstimateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMethod::ExactClosedForm => "exact_closed_form",
            EstimateMethod::Quadrature => "quadrature",
            EstimateMethod::RiemannOracle => "riemann_oracle",
        }
    }

    /// The weaker of two methods (quadrature dominates exact).
    pub fn combine(self, other: EstimateMethod) -> EstimateMethod {
        use EstimateMethod::*;
        match (self, other) {
            (RiemannOracle, _) | (_, RiemannOracle) => RiemannOracle,
            (Quadrature, _) | (_, Quadrature) => Quadrature,
            _ => ExactClosedForm,
        }
    }
}

/// Per-path values and their Monte Carlo summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub per_path_values: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance; zero for a single path.
    pub variance: f64,
    pub n_paths: usize,
    pub method: EstimateMethod,
}

impl IntegralEstimate {
    pub fn from_values(per_path_values: Vec<f64>, method: EstimateMethod) -> Self {
        let n = per_path_values.len();
        let (mean, variance) = mean_variance(&per_path_values);
        IntegralEstimate {
            per_path_values,
            mean,
            variance,
            n_paths: n,
            method,
        }
    }
}

/// Sample mean and unbiased variance, summed in index order.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, variance)
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        Err(domain("n_paths must be at least 1"))
    } else {
        Ok(())
    }
}

/// Per-path ∫_u^v X(t) dt over `n_paths` paths.
pub fn mean_square_integral(
    process: &StochasticProcess,
    u: f64,
    v: f64,
    n_paths: usize,
    seed: u64,
) -> Result<IntegralEstimate> {
    check_paths(n_paths)?;
    process.check_subinterval(u, v)?;
    let results: Vec<(f64, EstimateMethod)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| process.sample_path(seed, i)?.integral(u, v))
        .collect::<Result<_>>()?;
    let method = results
        .iter()
        .fold(EstimateMethod::ExactClosedForm, |m, r| m.combine(r.1));
    Ok(IntegralEstimate::from_values(
        results.into_iter().map(|r| r.0).collect(),
        method,
    ))
}

/// Tag point used inside each partition cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiemannRule {
    Left,
    Midpoint,
    Right,
}

/// Riemann sum of a path over a uniform `n`-cell partition of [u, v].
pub fn riemann_sum(path: &Path, u: f64, v: f64, n: usize, rule: RiemannRule) -> f64 {
    let h = (v - u) / n as f64;
    let offset = match rule {
        RiemannRule::Left => 0.0,
        RiemannRule::Midpoint => 0.5,
        RiemannRule::Right => 1.0,
    };
    (0..n)
        .map(|i| path.eval(u + (i as f64 + offset) * h))
        .sum::<f64>()
        * h
}

/// For each partition level n, the Monte Carlo estimate of
/// E[(S_n - ∫_u^v X)^2] where S_n is the Riemann sum on n uniform cells.
pub fn mean_square_convergence_diagnostic(
    process: &StochasticProcess,
    u: f64,
    v: f64,
    partition_levels: &[usize],
    rule: RiemannRule,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    check_paths(n_paths)?;
    process.check_subinterval(u, v)?;
    if partition_levels.is_empty()
        || partition_levels[0] == 0
        || partition_levels.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(domain("partition levels must be positive and strictly increasing"));
    }
    let paths = process.sample_paths(seed, n_paths)?;
    let exact: Vec<f64> = paths
        .par_iter()
        .map(|p| p.integral(u, v).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(partition_levels
        .iter()
        .map(|&n| {
            let sq: Vec<f64> = paths
                .par_iter()
                .zip(&exact)
                .map(|(p, &e)| (riemann_sum(p, u, v, n, rule) - e).powi(2))
                .collect();
            (n, sq.iter().sum::<f64>() / n_paths as f64)
        })
        .collect())
}

/// Affine minorant `slope (t - t0) + value` touching a path at t0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSupport {
    pub t0: f64,
    pub slope: f64,
    pub value: f64,
}

impl AffineSupport {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * (t - self.t0) + self.value
    }
}

/// Supporting line of a differentiable convex path at t0, with slope X'(t0).
pub fn support_of_path(path: &Path, t0: f64) -> Result<AffineSupport> {
    let slope = path.derivative(t0).ok_or_else(|| {
        Error::UnsupportedFamily(format!(
            "{} paths are not differentiable; no constructive support",
            path.shape().name()
        ))
    })?;
    Ok(AffineSupport {
        t0,
        slope,
        value: path.eval(t0),
    })
}

/// Constructive support of path `path_index` at an interior point t0.
pub fn supporting_process(
    process: &StochasticProcess,
    t0: f64,
    seed: u64,
    path_index: u64,
) -> Result<AffineSupport> {
    if !matches!(
        process.convexity(),
        ConvexityClass::Convex | ConvexityClass::StronglyConvex
    ) {
        return Err(domain("supporting process requires a convex or strongly convex process"));
    }
    let (a, b) = process.interval();
    if !(t0 > a && t0 < b) {
        return Err(domain(format!("t0 = {t0} is not interior to [{a}, {b}]")));
    }
    if let ProcessFamily::Table(_)
    | ProcessFamily::Deterministic(DeterministicFn::Abs { .. }) = process.family()
    {
        return Err(Error::UnsupportedFamily(
            "support construction needs a differentiable family".into(),
        ));
    }
    support_of_path(&process.sample_path(seed, path_index)?, t0)
}

/// Per path: λX(u) + (1-λ)X(v) - X(λu + (1-λ)v) - C λ(1-λ)(u-v)².
pub fn strong_convexity_gap(
    process: &StochasticProcess,
    u: f64,
    v: f64,
    lambda_mix: f64,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<f64>> {
    check_paths(n_paths)?;
    if process.modulus().is_none() {
        return Err(Error::Config("strong convexity gap needs a modulus C".into()));
    }
    if !(0.0..=1.0).contains(&lambda_mix) {
        return Err(domain(format!("mixing weight must lie in [0, 1], got {lambda_mix}")));
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = process.sample_path(seed, i)?;
            let c = p.modulus().expect("modulus configured");
            let l = lambda_mix;
            let mixed = if l == 0.0 {
                v
            } else if l == 1.0 {
                u
            } else {
                l * u + (1.0 - l) * v
            };
            Ok(l * p.eval(u) + (1.0 - l) * p.eval(v)
                - p.eval(mixed)
                - c * l * (1.0 - l) * (u - v).powi(2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_random() -> StochasticProcess {
        StochasticProcess::random_polynomial(
            0.0,
            2.0,
            vec![
                CoefficientDist::Normal { mean: 0.0, sd: 1.0 },
                CoefficientDist::Uniform { lo: -1.0, hi: 1.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_family_ignores_seed() {
        let p = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 0.0, 1.0]).unwrap();
        let a = p.sample_path(1, 0).unwrap();
        let b = p.sample_path(99, 7).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(a.eval(t), t * t);
            assert_eq!(b.eval(t), t * t);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = linear_random();
        assert_eq!(p.sample_path(5, 0).unwrap(), p.sample_path(5, 0).unwrap());
        // path i does not depend on how many paths are drawn
        let many = p.sample_paths(5, 10).unwrap();
        assert_eq!(many[7], p.sample_path(5, 7).unwrap());
    }

    #[test]
    fn distinct_indices_give_distinct_paths() {
        let p = linear_random();
        let mut collisions = 0;
        for i in 0..1000u64 {
            let a = p.sample_path(11, 2 * i).unwrap().as_polynomial().unwrap();
            let b = p.sample_path(11, 2 * i + 1).unwrap().as_polynomial().unwrap();
            if a.coeffs() == b.coeffs() {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn lemma_linear_integral() {
        // A = 1, B = 3 on [0, 2]
        let p = StochasticProcess::polynomial(0.0, 2.0, vec![3.0, 1.0]).unwrap();
        let est = mean_square_integral(&p, 0.0, 2.0, 1, 0).unwrap();
        assert_eq!(est.per_path_values, vec![8.0]);
        assert_eq!(est.method, EstimateMethod::ExactClosedForm);

        let p = linear_random();
        let est = mean_square_integral(&p, 0.5, 1.5, 50, 3).unwrap();
        for (i, &val) in est.per_path_values.iter().enumerate() {
            let c = p.sample_path(3, i as u64).unwrap().as_polynomial().unwrap();
            let (b, a) = (c.coeff(0), c.coeff(1));
            let lemma = a * (1.5f64.powi(2) - 0.25) / 2.0 + b * 1.0;
            assert!((val - lemma).abs() < 1e-14);
        }
    }

    #[test]
    fn integral_examples() {
        let sq = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 0.0, 1.0]).unwrap();
        let est = mean_square_integral(&sq, 0.0, 1.0, 3, 0).unwrap();
        assert!(est.per_path_values.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(est.variance, 0.0);
        let zero = StochasticProcess::parse_spec("zero", -1.0, 4.0).unwrap();
        assert_eq!(mean_square_integral(&zero, -0.5, 3.0, 2, 0).unwrap().mean, 0.0);
        let e = StochasticProcess::parse_spec("exp:1", 0.0, 1.0).unwrap();
        let est = mean_square_integral(&e, 0.0, 1.0, 1, 0).unwrap();
        assert!((est.mean - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert_eq!(est.method, EstimateMethod::Quadrature);
        assert!(mean_square_integral(&e, 0.0, 2.0, 1, 0).is_err());
        assert!(mean_square_integral(&e, 0.0, 1.0, 0, 0).is_err());
    }

    #[test]
    fn table_paths() {
        let table = PathTable::new(vec![0.0, 0.5, 1.0], vec![vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 3.0]])
            .unwrap();
        let p = StochasticProcess::new(0.0, 1.0, ProcessFamily::Table(table)).unwrap();
        let est = mean_square_integral(&p, 0.0, 1.0, 2, 0).unwrap();
        assert_eq!(est.per_path_values, vec![0.5, 1.5]);
        assert!(p.sample_path(0, 2).is_err());
        assert_eq!(p.sample_path(0, 1).unwrap().eval(0.75), 2.0);

        let bad = PathTable::new(vec![0.0, 1.0], vec![vec![0.0, f64::NAN]]).unwrap();
        let p = StochasticProcess::new(0.0, 1.0, ProcessFamily::Table(bad)).unwrap();
        assert!(matches!(mean_square_integral(&p, 0.0, 1.0, 1, 0), Err(Error::Data(_))));
        assert!(PathTable::new(vec![0.0, 0.0], vec![vec![1.0, 1.0]]).is_err());
        assert!(PathTable::new(vec![0.0, 1.0], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn convergence_diagnostic_examples() {
        let lin = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 1.0]).unwrap();
        let gaps =
            mean_square_convergence_diagnostic(&lin, 0.0, 1.0, &[1, 10, 100], RiemannRule::Midpoint, 4, 0)
                .unwrap();
        assert!(gaps.iter().all(|&(_, g)| g < 1e-30));

        let sq = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 0.0, 1.0]).unwrap();
        let gaps =
            mean_square_convergence_diagnostic(&sq, 0.0, 1.0, &[10, 100], RiemannRule::Left, 2, 0).unwrap();
        let left = |n: f64| (n - 1.0) * n * (2.0 * n - 1.0) / (6.0 * n.powi(3));
        assert!((gaps[0].1 - (1.0 / 3.0 - left(10.0)).powi(2)).abs() < 1e-15);
        assert!((gaps[1].1 - (1.0 / 3.0 - left(100.0)).powi(2)).abs() < 1e-15);
        let ratio = gaps[0].1 / gaps[1].1;
        assert!(ratio > 90.0 && ratio < 100.0, "{ratio}");

        let zero = StochasticProcess::parse_spec("zero", 0.0, 1.0).unwrap();
        let gaps =
            mean_square_convergence_diagnostic(&zero, 0.0, 1.0, &[3, 7], RiemannRule::Right, 3, 0).unwrap();
        assert!(gaps.iter().all(|&(_, g)| g == 0.0));
        assert!(mean_square_convergence_diagnostic(&zero, 0.0, 1.0, &[7, 3], RiemannRule::Right, 3, 0).is_err());
    }

    #[test]
    fn random_diagnostic_decreases() {
        let p = StochasticProcess::random_polynomial(
            -1.0,
            1.0,
            vec![
                CoefficientDist::Normal { mean: 0.0, sd: 1.0 },
                CoefficientDist::Normal { mean: 1.0, sd: 2.0 },
                CoefficientDist::Uniform { lo: 0.0, hi: 3.0 },
            ],
        )
        .unwrap();
        let gaps =
            mean_square_convergence_diagnostic(&p, -1.0, 1.0, &[4, 16, 64, 256], RiemannRule::Left, 200, 9)
                .unwrap();
        assert!(gaps.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn support_examples() {
        let sq = StochasticProcess::polynomial(0.0, 2.0, vec![0.0, 0.0, 1.0])
            .unwrap()
            .with_convexity(ConvexityClass::Convex);
        let s = supporting_process(&sq, 1.0, 0, 0).unwrap();
        assert_eq!((s.slope, s.eval(0.0)), (2.0, -1.0));

        let lin = StochasticProcess::polynomial(0.0, 1.0, vec![0.5, -2.0])
            .unwrap()
            .with_convexity(ConvexityClass::Convex);
        let s = supporting_process(&lin, 0.3, 0, 0).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert!((s.eval(t) - (0.5 - 2.0 * t)).abs() < 1e-15);
        }

        let p = StochasticProcess::parse_spec("poly:3t^2+t", 0.0, 1.0)
            .unwrap()
            .with_convexity(ConvexityClass::Convex);
        let s = supporting_process(&p, 0.5, 0, 0).unwrap();
        assert_eq!(s.slope, 4.0);
        assert!((s.eval(0.0) + 0.75).abs() < 1e-15);
        let path = p.sample_path(0, 0).unwrap();
        let min = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|t| path.eval(t) - s.eval(t))
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.0);

        let abs = StochasticProcess::parse_spec("abs:0.5", 0.0, 1.0)
            .unwrap()
            .with_convexity(ConvexityClass::Convex);
        assert!(matches!(supporting_process(&abs, 0.5, 0, 0), Err(Error::UnsupportedFamily(_))));
        let none = StochasticProcess::parse_spec("poly:t^2", 0.0, 1.0).unwrap();
        assert!(supporting_process(&none, 0.5, 0, 0).is_err());
        assert!(supporting_process(&sq, 0.0, 0, 0).is_err());
    }

    #[test]
    fn strong_convexity_gaps() {
        let p = StochasticProcess::random_polynomial(
            0.0,
            1.0,
            vec![
                CoefficientDist::Constant(0.0),
                CoefficientDist::Constant(0.0),
                CoefficientDist::Uniform { lo: 0.5, hi: 2.0 },
            ],
        )
        .unwrap()
        .with_convexity(ConvexityClass::StronglyConvex)
        .with_modulus(ModulusSpec::QuadraticFraction(1.0))
        .unwrap();
        let gaps = strong_convexity_gap(&p, 0.1, 0.9, 0.3, 4, 20).unwrap();
        assert!(gaps.iter().all(|g| g.abs() < 1e-14), "{gaps:?}");

        let p2 = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 0.0, 2.0])
            .unwrap()
            .with_modulus(ModulusSpec::Dist(CoefficientDist::Constant(1.0)))
            .unwrap();
        let g = strong_convexity_gap(&p2, 0.0, 1.0, 0.5, 0, 1).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
        for l in [0.0, 1.0] {
            assert_eq!(strong_convexity_gap(&p2, 0.2, 0.7, l, 0, 1).unwrap(), vec![0.0]);
        }
        let no_mod = StochasticProcess::polynomial(0.0, 1.0, vec![0.0, 0.0, 2.0]).unwrap();
        assert!(matches!(
            strong_convexity_gap(&no_mod, 0.0, 1.0, 0.5, 0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn parsing() {
        let p = parse_poly_expr("3t^2+t").unwrap();
        assert_eq!(p.coeffs(), &[0.0, 1.0, 3.0]);
        let p = parse_poly_expr("-t^2").unwrap();
        assert_eq!(p.coeffs(), &[0.0, 0.0, -1.0]);
        let p = parse_poly_expr("2*t^4 - 0.5*t + 1e-1").unwrap();
        assert_eq!(p.coeffs(), &[0.1, -0.5, 0.0, 0.0, 2.0]);
        assert!(parse_poly_expr("t^5").is_err());
        assert!(parse_poly_expr("x^2").is_err());
        let r = StochasticProcess::parse_spec("rpoly:uniform(0,1),normal(0,2),const(3)", 0.0, 1.0).unwrap();
        assert!(matches!(r.family(), ProcessFamily::RandomPolynomial(c) if c.len() == 3));
        assert!("normal(0,-1)".parse::<CoefficientDist>().is_err());
        assert!("normal(1,1)".parse::<ModulusSpec>().is_err());
        assert!("uniform(0,1)".parse::<ModulusSpec>().is_err());
        assert_eq!("fraction(0.5)".parse::<ModulusSpec>().unwrap(), ModulusSpec::QuadraticFraction(0.5));
        assert!(StochasticProcess::parse_spec("sin", 0.0, 1.0).is_err());
        assert!(StochasticProcess::random_polynomial(0.0, 1.0, vec![CoefficientDist::Constant(1.0); 6]).is_err());
    }
}
