//! Generalized fractional integrals
//!
//! ```text
//! J_{u+}[X](x) = ∫_u^x (x-t)^(λ-1) F^σ_{ρ,λ}[ω (x-t)^ρ] X(t) dt,   x > u
//! J_{v-}[X](x) = ∫_x^v (t-x)^(λ-1) F^σ_{ρ,λ}[ω (t-x)^ρ] X(t) dt,   x < v
//! ```
//!
//! Both reduce to `∫_0^L r^(λ-1) F[ω r^ρ] q(r) dr` with `q(r) = X(x ∓ r)`.
//! For polynomial paths, integrating the series term by term gives
//!
//! ```text
//! ∫_0^L r^(λ-1+j) F[ω r^ρ] dr = L^(λ+j) F^{σ_j}_{ρ,λ}[ω L^ρ],  σ_j(k) = σ(k)/(ρk+λ+j)
//! ```
//!
//! (with j = 0 equal to `L^λ F^σ_{ρ,λ+1}`), so each path costs one dot
//! product against precomputed moments. Other paths go through adaptive
//! quadrature, after the substitution `s = r^λ` when λ < 1.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::polynomial::Polynomial;
use crate::process::{EstimateMethod, IntegralEstimate, Path, StochasticProcess};
use crate::quadrature::{integrate_adaptive, GaussJacobi, QuadratureTol};
use crate::series::{eval_raina, CoefficientSequence, PreparedSeries, RainaKernel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// J_{u+}: integrates over [u, x].
    Left,
    /// J_{v-}: integrates over [x, v].
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Auto,
    TermwiseExact,
    Quadrature,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Method::Auto),
            "termwise_exact" | "termwise" | "exact" => Ok(Method::TermwiseExact),
            "quadrature" | "quad" => Ok(Method::Quadrature),
            other => Err(domain(format!("unknown method `{other}`"))),
        }
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::TermwiseExact => "termwise_exact",
            Method::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub series: f64,
    pub quad_abs: f64,
    pub quad_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            series: 1e-12,
            quad_abs: 1e-9,
            quad_rel: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("series", self.series),
            ("quad_abs", self.quad_abs),
            ("quad_rel", self.quad_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FracIntegralRequest {
    pub kernel: RainaKernel,
    pub side: Side,
    /// u for the left operator, v for the right one.
    pub base_point: f64,
    /// x
    pub eval_point: f64,
    pub method: Method,
    pub tol: Tolerances,
}

impl FracIntegralRequest {
    /// J_{u+}[·](x)
    pub fn left(kernel: RainaKernel, u: f64, x: f64) -> Self {
        FracIntegralRequest {
            kernel,
            side: Side::Left,
            base_point: u,
            eval_point: x,
            method: Method::Auto,
            tol: Tolerances::default(),
        }
    }

    /// J_{v-}[·](x)
    pub fn right(kernel: RainaKernel, v: f64, x: f64) -> Self {
        FracIntegralRequest {
            side: Side::Right,
            base_point: v,
            ..Self::left(kernel, 0.0, x)
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// Integration length L; errors if the points are on the wrong side.
    pub fn length(&self) -> Result<f64> {
        let (b, x) = (self.base_point, self.eval_point);
        if !(b.is_finite() && x.is_finite()) {
            return Err(domain("base and evaluation points must be finite"));
        }
        match self.side {
            Side::Left if x > b => Ok(x - b),
            Side::Right if x < b => Ok(b - x),
            Side::Left => Err(domain(format!("left integral needs x > u, got x={x}, u={b}"))),
            Side::Right => Err(domain(format!("right integral needs x < v, got x={x}, v={b}"))),
        }
    }

    /// Integration range [lo, hi] in t.
    pub fn range(&self) -> (f64, f64) {
        match self.side {
            Side::Left => (self.base_point, self.eval_point),
            Side::Right => (self.eval_point, self.base_point),
        }
    }
}

/// `∫_0^L r^(λ-1+j) F[ω r^ρ] dr` for one kernel and length.
pub fn weighted_moment(kernel: &RainaKernel, length: f64, j: u32, series_tol: f64) -> Result<f64> {
    let z = kernel.omega() * length.powf(kernel.rho());
    let scale = length.powf(kernel.lambda() + j as f64);
    let tol = (series_tol / scale.max(1.0)).max(1e-300);
    let (f, _) = if j == 0 {
        eval_raina(kernel, Some(kernel.lambda() + 1.0), 0, z, tol)?
    } else {
        eval_raina(kernel, None, j, z, tol)?
    };
    Ok(scale * f)
}

const EAGER_MOMENTS: u32 = 5;
const GJ_NODES: usize = 64;

/// A request prepared for evaluation over many paths.
pub struct FracIntegrator {
    req: FracIntegralRequest,
    length: f64,
    moments: Option<Vec<f64>>,
    moment_error: Option<Error>,
    series: OnceLock<std::result::Result<PreparedSeries, Error>>,
}

impl FracIntegrator {
    pub fn new(req: FracIntegralRequest) -> Result<Self> {
        req.tol.validate()?;
        let length = req.length()?;
        let (moments, moment_error) = if req.method == Method::Quadrature {
            (None, None)
        } else {
            match (0..EAGER_MOMENTS)
                .map(|j| weighted_moment(&req.kernel, length, j, req.tol.series))
                .collect::<Result<Vec<_>>>()
            {
                Ok(m) => (Some(m), None),
                Err(e) if req.method == Method::Auto => (None, Some(e)),
                Err(e) => return Err(e),
            }
        };
        Ok(FracIntegrator {
            req,
            length,
            moments,
            moment_error,
            series: OnceLock::new(),
        })
    }

    pub fn request(&self) -> &FracIntegralRequest {
        &self.req
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// q(r) = p(x ∓ r) as a polynomial in r.
    fn local_polynomial(&self, p: &Polynomial) -> Polynomial {
        let shifted = p.shifted(self.req.eval_point);
        match self.req.side {
            Side::Left => shifted.reflected(),
            Side::Right => shifted,
        }
    }

    fn moment(&self, j: usize) -> Result<f64> {
        match &self.moments {
            Some(m) if j < m.len() => Ok(m[j]),
            _ => weighted_moment(&self.req.kernel, self.length, j as u32, self.req.tol.series),
        }
    }

    /// Term-wise exact value for a polynomial path.
    pub fn termwise(&self, p: &Polynomial) -> Result<f64> {
        if let Some(e) = &self.moment_error {
            return Err(e.clone());
        }
        let q = self.local_polynomial(p);
        let mut acc = 0.0;
        for (j, &c) in q.coeffs().iter().enumerate() {
            if c != 0.0 {
                acc += c * self.moment(j)?;
            }
        }
        Ok(acc)
    }

    fn prepared_series(&self) -> Result<&PreparedSeries> {
        let k = &self.req.kernel;
        self.series
            .get_or_init(|| {
                let max_x = k.omega().abs() * self.length.powf(k.rho());
                PreparedSeries::new(k, None, 0, max_x, self.req.tol.series.min(1e-14))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Quadrature value for an arbitrary path evaluator.
    pub fn quadrature<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let series = self.prepared_series()?;
        let k = &self.req.kernel;
        let (omega, rho, lambda) = (k.omega(), k.rho(), k.lambda());
        let x = self.req.eval_point;
        let sign = match self.req.side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        };
        let len = self.length;
        let at = |r: f64| series.eval(omega * r.powf(rho)) * f(x + sign * r);
        let tol = QuadratureTol {
            abs: self.req.tol.quad_abs,
            rel: self.req.tol.quad_rel,
            max_intervals: 4000,
        };
        let adaptive = if lambda < 1.0 {
            let inv = 1.0 / lambda;
            integrate_adaptive(|s| at(s.powf(inv)), 0.0, len.powf(lambda), tol)
                .map(|r| r.value / lambda)
        } else {
            integrate_adaptive(|r| r.powf(lambda - 1.0) * at(r), 0.0, len, tol).map(|r| r.value)
        };
        match adaptive {
            Ok(v) => Ok(v),
            Err(Error::QuadratureNonConvergence { .. }) => self.gauss_jacobi(&at, tol),
            Err(e) => Err(e),
        }
    }

    /// Weighted-node fallback: ∫_0^L r^(λ-1) g(r) dr with Gauss–Jacobi
    /// nodes on weight (1+ξ)^(λ-1), accepted when two rule sizes agree.
    fn gauss_jacobi<G: Fn(f64) -> f64>(&self, g: &G, tol: QuadratureTol) -> Result<f64> {
        let lambda = self.req.kernel.lambda();
        let half = 0.5 * self.length;
        let rule = |n| -> Result<f64> {
            let gj = GaussJacobi::new(n, 0.0, lambda - 1.0)?;
            Ok(half.powf(lambda) * gj.apply(|xi| g(half * (1.0 + xi))))
        };
        let coarse = rule(GJ_NODES)?;
        let fine = rule(2 * GJ_NODES)?;
        let err = (fine - coarse).abs();
        let target = tol.abs.max(tol.rel * fine.abs());
        if err <= target {
            Ok(fine)
        } else {
            Err(Error::QuadratureNonConvergence {
                estimate: fine,
                error: err,
                tol: target,
            })
        }
    }

    /// Value for one path with the requested method.
    pub fn eval_path(&self, path: &Path) -> Result<(f64, EstimateMethod)> {
        let poly = path.as_polynomial();
        match (self.req.method, poly) {
            (Method::TermwiseExact, Some(p)) => {
                Ok((self.termwise(&p)?, EstimateMethod::ExactClosedForm))
            }
            (Method::TermwiseExact, None) => Err(Error::UnsupportedFamily(
                "termwise_exact needs a polynomial path".into(),
            )),
            (Method::Auto, Some(p)) if self.moment_error.is_none() => {
                Ok((self.termwise(&p)?, EstimateMethod::ExactClosedForm))
            }
            _ => Ok((self.quadrature(|t| path.eval(t))?, EstimateMethod::Quadrature)),
        }
    }

    pub fn eval_paths(&self, paths: &[Path]) -> Result<IntegralEstimate> {
        let results: Vec<(f64, EstimateMethod)> =
            paths.par_iter().map(|p| self.eval_path(p)).collect::<Result<_>>()?;
        let method = results
            .iter()
            .fold(EstimateMethod::ExactClosedForm, |m, r| m.combine(r.1));
        Ok(IntegralEstimate::from_values(
            results.into_iter().map(|r| r.0).collect(),
            method,
        ))
    }
}

fn frac_integral(
    req: FracIntegralRequest,
    process: &StochasticProcess,
    n_paths: usize,
    seed: u64,
) -> Result<IntegralEstimate> {
    if n_paths == 0 {
        return Err(domain("n_paths must be at least 1"));
    }
    let (lo, hi) = req.range();
    let (a, b) = process.interval();
    if lo < a || hi > b {
        return Err(domain(format!(
            "integration range [{lo}, {hi}] leaves the process interval [{a}, {b}]"
        )));
    }
    let integrator = FracIntegrator::new(req)?;
    let paths = process.sample_paths(seed, n_paths)?;
    integrator.eval_paths(&paths)
}

/// J_{u+}[X](x) per path.
pub fn frac_integral_left(
    req: FracIntegralRequest,
    process: &StochasticProcess,
    n_paths: usize,
    seed: u64,
) -> Result<IntegralEstimate> {
    if req.side != Side::Left {
        return Err(domain("frac_integral_left called with a right-sided request"));
    }
    frac_integral(req, process, n_paths, seed)
}

/// J_{v-}[X](x) per path.
pub fn frac_integral_right(
    req: FracIntegralRequest,
    process: &StochasticProcess,
    n_paths: usize,
    seed: u64,
) -> Result<IntegralEstimate> {
    if req.side != Side::Right {
        return Err(domain("frac_integral_right called with a left-sided request"));
    }
    frac_integral(req, process, n_paths, seed)
}

/// The Riemann–Liouville kernel: λ = α, ω = 0, σ(0) = 1, so the weight is
/// `(x-t)^(α-1) / Γ(α)`.
pub fn rl_special_case(alpha: f64) -> Result<RainaKernel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain(format!("alpha must be positive, got {alpha}")));
    }
    RainaKernel::new(1.0, alpha, 0.0, CoefficientSequence::from_prefix(vec![1.0])?)
}

/// Closed form of `∫_u^v t^p w(t) dt` for p ∈ {0, 1, 2}, where the weight is
/// the left operator's `(v-t)^(λ-1) F[ω(v-t)^ρ]` or the right operator's
/// `(t-u)^(λ-1) F[ω(t-u)^ρ]`. Expressed through F^σ_{ρ,λ+1}, F^{σ1}, F^{σ2}.
pub fn closed_form_moment(
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    p: u32,
    side: Side,
    series_tol: f64,
) -> Result<f64> {
    if !(u < v) {
        return Err(domain(format!("need u < v, got u={u}, v={v}")));
    }
    if p > 2 {
        return Err(domain(format!("moment degree must be 0, 1 or 2, got {p}")));
    }
    let len = v - u;
    let z = kernel.omega() * len.powf(kernel.rho());
    let lam = kernel.lambda();
    let f0 = eval_raina(kernel, Some(lam + 1.0), 0, z, series_tol)?.0;
    let base = len.powf(lam) * f0;
    if p == 0 {
        return Ok(base);
    }
    let f1 = eval_raina(kernel, None, 1, z, series_tol)?.0;
    let m1 = len.powf(lam + 1.0) * f1;
    // anchor: v for the left operator (t = v - r), u for the right (t = u + r)
    let (anchor, dir) = match side {
        Side::Left => (v, -1.0),
        Side::Right => (u, 1.0),
    };
    if p == 1 {
        return Ok(dir * m1 + anchor * base);
    }
    let f2 = eval_raina(kernel, None, 2, z, series_tol)?.0;
    let m2 = len.powf(lam + 2.0) * f2;
    Ok(m2 + 2.0 * dir * anchor * m1 + anchor * anchor * base)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub numeric_lhs: f64,
    pub closed_rhs: f64,
    pub passed: bool,
}

pub const DEFAULT_IDENTITY_TOL: f64 = 1e-7;

/// Compares the quadrature value of `∫_u^v t^p w(t) dt` against
/// [`closed_form_moment`]; passes when `|lhs - rhs| ≤ tol (1 + |rhs|)`.
pub fn moment_identity_check(
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    p: u32,
    side: Side,
    tol: f64,
    tolerances: Tolerances,
) -> Result<MomentCheck> {
    let rhs = closed_form_moment(kernel, u, v, p, side, tolerances.series)?;
    let req = match side {
        Side::Left => FracIntegralRequest::left(kernel.clone(), u, v),
        Side::Right => FracIntegralRequest::right(kernel.clone(), v, u),
    }
    .with_method(Method::Quadrature)
    .with_tolerances(tolerances);
    let integ = FracIntegrator::new(req)?;
    let lhs = integ.quadrature(|t| t.powi(p as i32))?;
    Ok(MomentCheck {
        numeric_lhs: lhs,
        closed_rhs: rhs,
        passed: (lhs - rhs).abs() <= tol * (1.0 + rhs.abs()),
    })
}
