//! Hermite–Hadamard chains for convex and strongly convex processes.
//!
//! Per path the chain reads
//!
//! ```text
//! X((u+v)/2) ≤ [J_{u+}[X](v) + J_{v-}[X](u)] / N ≤ (X(u) + X(v)) / 2
//! ```
//!
//! with `N = 2 (v-u)^λ F^σ_{ρ,λ+1}[ω (v-u)^ρ]`. The strongly convex variant
//! runs the chain on `Y = X - C t²` and adds the exact normalized moment of
//! `C t²` back to all three terms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frac_integral::{
    closed_form_moment, rl_special_case, FracIntegralRequest, FracIntegrator, Method, Side,
    Tolerances,
};
use crate::oracle::rl_hh_middle;
use crate::polynomial::Polynomial;
use crate::process::{EstimateMethod, Path, StochasticProcess};
use crate::series::{normalization_factor_with, PreparedSeries, RainaKernel, DEFAULT_NORMALIZATION_FLOOR};

pub const DEFAULT_TOL_ABS: f64 = 1e-12;
pub const DEFAULT_TOL_REL: f64 = 1e-8;
pub const WEIGHT_GRID_POINTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub method: Method,
    pub tolerances: Tolerances,
    pub normalization_floor: f64,
}

impl Default for HhOptions {
    fn default() -> Self {
        HhOptions {
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
            method: Method::Auto,
            tolerances: Tolerances::default(),
            normalization_floor: DEFAULT_NORMALIZATION_FLOOR,
        }
    }
}

impl HhOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_abs >= 0.0 && self.tol_rel >= 0.0) {
            return Err(domain("chain tolerances must be nonnegative"));
        }
        self.tolerances.validate()
    }
}

/// Parameters echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhParams {
    pub rho: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma: String,
    pub u: f64,
    pub v: f64,
    pub process: String,
    pub seed: u64,
}

/// Outer bounds after the strong-convexity shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub left_corr: Vec<f64>,
    pub right_corr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhReport {
    pub left: Vec<f64>,
    pub middle: Vec<f64>,
    pub right: Vec<f64>,
    pub corrections: Option<Corrections>,
    pub violations_lm: usize,
    pub violations_mr: usize,
    pub n_paths: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub normalization: f64,
    /// False when ω < 0 and the weight turned negative somewhere on (0, v-u].
    pub hypothesis_verified: bool,
    pub method: EstimateMethod,
    pub params: HhParams,
}

impl HhReport {
    /// Lower and upper bounds the violation counts were taken against.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        match &self.corrections {
            Some(c) => (&c.left_corr, &c.right_corr),
            None => (&self.left, &self.right),
        }
    }

    pub fn has_violations(&self) -> bool {
        self.violations_lm > 0 || self.violations_mr > 0
    }
}

/// Pretty JSON of a full report, newline-terminated.
pub fn report_json(report: &HhReport) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn exceeds(lo: f64, hi: f64, scale: f64, tol_abs: f64, tol_rel: f64) -> bool {
    !(lo <= hi + tol_abs + tol_rel * scale)
}

fn count_violations(
    lower: &[f64],
    middle: &[f64],
    upper: &[f64],
    tol_abs: f64,
    tol_rel: f64,
) -> (usize, usize) {
    let mut lm = 0;
    let mut mr = 0;
    for i in 0..middle.len() {
        let scale = lower[i].abs().max(middle[i].abs()).max(upper[i].abs());
        lm += exceeds(lower[i], middle[i], scale, tol_abs, tol_rel) as usize;
        mr += exceeds(middle[i], upper[i], scale, tol_abs, tol_rel) as usize;
    }
    (lm, mr)
}

/// Whether `F^σ_{ρ,λ}[ω r^ρ] ≥ 0` on a uniform grid of (0, len].
pub fn weight_nonnegative(kernel: &RainaKernel, len: f64, series_tol: f64) -> Result<bool> {
    if kernel.omega() >= 0.0 {
        return Ok(true);
    }
    let max_x = kernel.omega().abs() * len.powf(kernel.rho());
    let series = PreparedSeries::new(kernel, None, 0, max_x, series_tol)?;
    Ok((1..=WEIGHT_GRID_POINTS).all(|i| {
        let r = len * i as f64 / WEIGHT_GRID_POINTS as f64;
        series.eval(kernel.omega() * r.powf(kernel.rho())) >= 0.0
    }))
}

/// Shared setup: normalization, both integrators and the hypothesis check.
struct Chain {
    left: FracIntegrator,
    right: FracIntegrator,
    normalization: f64,
    hypothesis_verified: bool,
}

impl Chain {
    fn new(kernel: &RainaKernel, u: f64, v: f64, opts: &HhOptions) -> Result<Self> {
        opts.validate()?;
        let normalization =
            normalization_factor_with(kernel, u, v, opts.normalization_floor, opts.tolerances.series)?;
        let hypothesis_verified = weight_nonnegative(kernel, v - u, opts.tolerances.series)?;
        let make = |req: FracIntegralRequest| {
            FracIntegrator::new(req.with_method(opts.method).with_tolerances(opts.tolerances))
        };
        Ok(Chain {
            left: make(FracIntegralRequest::left(kernel.clone(), u, v))?,
            right: make(FracIntegralRequest::right(kernel.clone(), v, u))?,
            normalization,
            hypothesis_verified,
        })
    }

    fn middle(&self, path: &Path) -> Result<(f64, EstimateMethod)> {
        let (l, ml) = self.left.eval_path(path)?;
        let (r, mr) = self.right.eval_path(path)?;
        Ok(((l + r) / self.normalization, ml.combine(mr)))
    }
}

fn params(kernel: &RainaKernel, u: f64, v: f64, process: &StochasticProcess, seed: u64) -> HhParams {
    HhParams {
        rho: kernel.rho(),
        lambda: kernel.lambda(),
        omega: kernel.omega(),
        sigma: kernel.sigma().label(),
        u,
        v,
        process: process.label(),
        seed,
    }
}

fn check_inputs(process: &StochasticProcess, u: f64, v: f64, n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(domain("n_paths must be at least 1"));
    }
    if !process.convexity().is_convex_like() {
        return Err(domain(
            "HH chain needs a process classified jensen_convex, convex or strongly_convex",
        ));
    }
    process.check_subinterval(u, v)
}

struct Row {
    left: f64,
    middle: f64,
    right: f64,
    method: EstimateMethod,
}

fn chain_row(chain: &Chain, path: &Path, u: f64, v: f64) -> Result<Row> {
    let (middle, method) = chain.middle(path)?;
    Ok(Row {
        left: path.eval(0.5 * (u + v)),
        middle,
        right: 0.5 * (path.eval(u) + path.eval(v)),
        method,
    })
}

/// Convex chain per path.
pub fn hh_check_convex(
    process: &StochasticProcess,
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    n_paths: usize,
    seed: u64,
    opts: &HhOptions,
) -> Result<HhReport> {
    check_inputs(process, u, v, n_paths)?;
    let chain = Chain::new(kernel, u, v, opts)?;
    let paths = process.sample_paths(seed, n_paths)?;
    let rows: Vec<Row> = paths
        .par_iter()
        .map(|p| chain_row(&chain, p, u, v))
        .collect::<Result<_>>()?;
    let left: Vec<f64> = rows.iter().map(|r| r.left).collect();
    let middle: Vec<f64> = rows.iter().map(|r| r.middle).collect();
    let right: Vec<f64> = rows.iter().map(|r| r.right).collect();
    let (violations_lm, violations_mr) =
        count_violations(&left, &middle, &right, opts.tol_abs, opts.tol_rel);
    Ok(HhReport {
        violations_lm,
        violations_mr,
        n_paths,
        tol_abs: opts.tol_abs,
        tol_rel: opts.tol_rel,
        normalization: chain.normalization,
        hypothesis_verified: chain.hypothesis_verified,
        method: combined_method(&rows),
        params: params(kernel, u, v, process, seed),
        corrections: None,
        left,
        middle,
        right,
    })
}

fn combined_method(rows: &[Row]) -> EstimateMethod {
    rows.iter()
        .fold(EstimateMethod::ExactClosedForm, |m, r| m.combine(r.method))
}

/// Normalized fractional moment of t²:
/// `[J_{u+}[t²](v) + J_{v-}[t²](u)] / N`.
pub fn normalized_square_moment(
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    normalization: f64,
    series_tol: f64,
) -> Result<f64> {
    let l = closed_form_moment(kernel, u, v, 2, Side::Left, series_tol)?;
    let r = closed_form_moment(kernel, u, v, 2, Side::Right, series_tol)?;
    Ok((l + r) / normalization)
}

/// Strongly convex chain through the shift `Y = X - C t²`.
///
/// `left` and `right` keep the plain convex-chain outer terms of X; the corrected
/// bounds are `Y((u+v)/2) + Cμ` and `(Y(u)+Y(v))/2 + Cμ` with μ the
/// normalized moment of t², and `middle` is the Y-chain middle plus Cμ.
/// Violations are counted against the corrected bounds.
pub fn hh_check_strongly_convex(
    process: &StochasticProcess,
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    n_paths: usize,
    seed: u64,
    opts: &HhOptions,
) -> Result<HhReport> {
    if process.modulus().is_none() {
        return Err(Error::Config("strongly convex chain needs a modulus C".into()));
    }
    check_inputs(process, u, v, n_paths)?;
    let chain = Chain::new(kernel, u, v, opts)?;
    let mu = normalized_square_moment(kernel, u, v, chain.normalization, opts.tolerances.series)?;
    let paths = process.sample_paths(seed, n_paths)?;
    let rows: Vec<(Row, Row)> = paths
        .par_iter()
        .map(|p| {
            let c = p.modulus().expect("modulus configured");
            let y = p.plus_polynomial(&Polynomial::monomial(-c, 2));
            let yrow = chain_row(&chain, &y, u, v)?;
            let shift = c * mu;
            let xrow = Row {
                left: p.eval(0.5 * (u + v)),
                middle: yrow.middle + shift,
                right: 0.5 * (p.eval(u) + p.eval(v)),
                method: yrow.method,
            };
            let corr = Row {
                left: yrow.left + shift,
                middle: yrow.middle + shift,
                right: yrow.right + shift,
                method: yrow.method,
            };
            Ok((xrow, corr))
        })
        .collect::<Result<_>>()?;
    let left: Vec<f64> = rows.iter().map(|r| r.0.left).collect();
    let middle: Vec<f64> = rows.iter().map(|r| r.0.middle).collect();
    let right: Vec<f64> = rows.iter().map(|r| r.0.right).collect();
    let left_corr: Vec<f64> = rows.iter().map(|r| r.1.left).collect();
    let right_corr: Vec<f64> = rows.iter().map(|r| r.1.right).collect();
    let (violations_lm, violations_mr) =
        count_violations(&left_corr, &middle, &right_corr, opts.tol_abs, opts.tol_rel);
    let method = rows
        .iter()
        .fold(EstimateMethod::ExactClosedForm, |m, r| m.combine(r.0.method));
    Ok(HhReport {
        violations_lm,
        violations_mr,
        n_paths,
        tol_abs: opts.tol_abs,
        tol_rel: opts.tol_rel,
        normalization: chain.normalization,
        hypothesis_verified: chain.hypothesis_verified,
        method,
        params: params(kernel, u, v, process, seed),
        corrections: Some(Corrections {
            left_corr,
            right_corr,
        }),
        left,
        middle,
        right,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub alpha: f64,
    pub max_discrepancy: f64,
    pub middle: Vec<f64>,
    pub oracle_middle: Vec<f64>,
}

/// Compares the middle term under the Riemann–Liouville kernel of order α
/// with `Γ(α+1)/(2(v-u)^α) [I^α_{u+}[X](v) + I^α_{v-}[X](u)]` from the
/// oracle's monomial closed forms. Polynomial paths only.
pub fn reduction_equivalence(
    alpha: f64,
    process: &StochasticProcess,
    u: f64,
    v: f64,
    n_paths: usize,
    seed: u64,
    opts: &HhOptions,
) -> Result<ReductionReport> {
    let kernel = rl_special_case(alpha)?;
    let report = hh_check_convex(process, &kernel, u, v, n_paths, seed, opts)?;
    let paths = process.sample_paths(seed, n_paths)?;
    let oracle_middle: Vec<f64> = paths
        .iter()
        .map(|p| {
            p.as_polynomial()
                .map(|poly| rl_hh_middle(alpha, poly.coeffs(), u, v))
                .ok_or_else(|| {
                    Error::UnsupportedFamily("reduction check needs polynomial paths".into())
                })
        })
        .collect::<Result<_>>()?;
    let max_discrepancy = report
        .middle
        .iter()
        .zip(&oracle_middle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ReductionReport {
        alpha,
        max_discrepancy,
        middle: report.middle,
        oracle_middle,
    })
}
