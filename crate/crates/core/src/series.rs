//! Raina's function
//!
//! ```text
//! F^σ_{ρ,λ}(x) = Σ_{k≥0} σ(k) x^k / Γ(ρk + λ)
//! ```
//!
//! with a bounded positive coefficient sequence σ. Because σ is bounded and
//! ρ > 0 the series is entire, so any real argument is accepted; evaluation
//! is capped by a term budget instead of a radius.
//!
//! Truncation uses the majorant `M |x|^k / Γ(ρk + λ)`. Its consecutive
//! ratios `|x| Γ(ρk + λ) / Γ(ρk + ρ + λ)` decrease in `k` (log-convexity of
//! Γ), so once a ratio drops below one the remaining tail is bounded by a
//! geometric series. The returned [`TruncationReport`] carries that bound.

use std::fmt;
use std::path::Path as FsPath;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::special::{ln_gamma, recip_gamma};

pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const DEFAULT_TERM_BUDGET: usize = 10_000;
pub const DEFAULT_NORMALIZATION_FLOOR: f64 = f64::MIN_POSITIVE;

/// Closed-form rule supplying σ(k) beyond the stored prefix.
#[derive(Clone)]
pub enum SequenceRule {
    Constant(f64),
    /// `first * ratio^k`, with `0 < ratio <= 1`.
    Geometric { first: f64, ratio: f64 },
    Custom {
        label: String,
        rule: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    },
}

impl SequenceRule {
    fn value(&self, k: usize) -> f64 {
        match self {
            SequenceRule::Constant(c) => *c,
            SequenceRule::Geometric { first, ratio } => first * ratio.powi(k as i32),
            SequenceRule::Custom { rule, .. } => rule(k),
        }
    }
}

impl fmt::Debug for SequenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceRule::Constant(c) => write!(f, "Constant({c})"),
            SequenceRule::Geometric { first, ratio } => {
                write!(f, "Geometric {{ first: {first}, ratio: {ratio} }}")
            }
            SequenceRule::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// Bounded positive sequence σ(k): a finite prefix plus an optional rule.
#[derive(Clone, Debug)]
pub struct CoefficientSequence {
    prefix: Vec<f64>,
    rule: Option<SequenceRule>,
    bound: f64,
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{what} must be positive and finite, got {v}")))
    }
}

impl CoefficientSequence {
    pub fn new(prefix: Vec<f64>, rule: Option<SequenceRule>, bound: f64) -> Result<Self> {
        check_positive(bound, "sequence bound")?;
        for (k, &v) in prefix.iter().enumerate() {
            check_positive(v, &format!("sigma({k})"))?;
            if v > bound {
                return Err(domain(format!("sigma({k}) = {v} exceeds bound {bound}")));
            }
        }
        if prefix.is_empty() && rule.is_none() {
            return Err(domain("coefficient sequence needs a prefix or a rule"));
        }
        if let Some(SequenceRule::Geometric { first, ratio }) = &rule {
            check_positive(*first, "geometric first term")?;
            if !(*ratio > 0.0 && *ratio <= 1.0) {
                return Err(domain(format!(
                    "geometric ratio must lie in (0, 1] for a bounded sequence, got {ratio}"
                )));
            }
        }
        let seq = CoefficientSequence {
            prefix,
            rule,
            bound,
        };
        // Spot check the rule at the start of its range.
        if seq.rule.is_some() {
            for k in seq.prefix.len()..seq.prefix.len() + 8 {
                seq.value(k)?;
            }
        }
        Ok(seq)
    }

    /// σ ≡ 1, the Mittag-Leffler case.
    pub fn ones() -> Self {
        Self::constant(1.0).expect("1 is a valid constant")
    }

    pub fn constant(c: f64) -> Result<Self> {
        check_positive(c, "constant sequence value")?;
        Self::new(Vec::new(), Some(SequenceRule::Constant(c)), c)
    }

    pub fn geometric(first: f64, ratio: f64) -> Result<Self> {
        Self::new(Vec::new(), Some(SequenceRule::Geometric { first, ratio }), first)
    }

    /// A finite sequence with no rule; its bound is the prefix maximum.
    pub fn from_prefix(values: Vec<f64>) -> Result<Self> {
        let bound = values.iter().cloned().fold(0.0, f64::max);
        Self::new(values, None, bound)
    }

    pub fn custom(
        label: impl Into<String>,
        bound: f64,
        rule: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(
            Vec::new(),
            Some(SequenceRule::Custom {
                label: label.into(),
                rule: Arc::new(rule),
            }),
            bound,
        )
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn rule(&self) -> Option<&SequenceRule> {
        self.rule.as_ref()
    }

    /// σ(k), checked against positivity and the bound.
    pub fn value(&self, k: usize) -> Result<f64> {
        let v = match self.prefix.get(k) {
            Some(&v) => v,
            None => match &self.rule {
                Some(rule) => rule.value(k),
                None => {
                    return Err(Error::SequenceExhausted {
                        index: k,
                        len: self.prefix.len(),
                    })
                }
            },
        };
        let underflow = v == 0.0
            && k >= self.prefix.len()
            && matches!(self.rule, Some(SequenceRule::Geometric { .. }));
        if !(v.is_finite() && (v > 0.0 || underflow)) {
            return Err(domain(format!("sigma({k}) = {v} is not positive")));
        }
        if v > self.bound {
            return Err(domain(format!(
                "sigma({k}) = {v} exceeds declared bound {}",
                self.bound
            )));
        }
        Ok(v)
    }

    /// Short description used in reports, e.g. `const(1)`.
    pub fn label(&self) -> String {
        let rule = self.rule.as_ref().map(|r| match r {
            SequenceRule::Constant(c) => format!("const({c})"),
            SequenceRule::Geometric { first, ratio } => format!("geometric({first},{ratio})"),
            SequenceRule::Custom { label, .. } => format!("custom({label})"),
        });
        match (self.prefix.is_empty(), rule) {
            (true, Some(r)) => r,
            (false, rule) => {
                let list = self
                    .prefix
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                match rule {
                    Some(r) => format!("list({list})+{r}"),
                    None => format!("list({list})"),
                }
            }
            (true, None) => unreachable!("validated at construction"),
        }
    }

    /// Parses a sequence description:
    /// `const1`, `ones`, `const(c)`, `geometric(r)`, `geometric(a,r)`,
    /// `list(a,b,...)` or `file:<path>`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let s = spec.trim();
        if s == "const1" || s == "ones" {
            return Ok(Self::ones());
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Self::load(path.trim());
        }
        let (name, args) = split_call(s)
            .ok_or_else(|| domain(format!("unrecognized sigma spec `{spec}`")))?;
        let nums = parse_args(args).map_err(|e| domain(format!("sigma spec `{spec}`: {e}")))?;
        match (name, nums.as_slice()) {
            ("const", [c]) => Self::constant(*c),
            ("geometric", [r]) => Self::geometric(1.0, *r),
            ("geometric", [a, r]) => Self::geometric(*a, *r),
            ("list", values) if !values.is_empty() => Self::from_prefix(values.to_vec()),
            _ => Err(domain(format!("unrecognized sigma spec `{spec}`"))),
        }
    }

    /// Reads the line-oriented sequence format: an optional `bound_M=<value>`
    /// header, then one positive decimal per line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut bound = None;
        if let Some((_, first)) = lines.peek() {
            if let Some(rest) = first.trim().strip_prefix("bound_M=") {
                let v: f64 = rest.trim().parse().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("invalid bound_M value `{}`", rest.trim()),
                })?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("bound_M must be positive, got {v}"),
                    });
                }
                bound = Some(v);
                lines.next();
            }
        }
        let body: Vec<(usize, &str)> = lines.collect();
        let end = body
            .iter()
            .rposition(|(_, l)| !l.trim().is_empty())
            .map_or(0, |i| i + 1);
        let mut values = Vec::with_capacity(end);
        for &(idx, line) in &body[..end] {
            let t = line.trim();
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("expected a positive decimal, got `{t}`"),
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("coefficient must be positive, got {v}"),
                });
            }
            if let Some(b) = bound {
                if v > b {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("coefficient {v} exceeds bound_M={b}"),
                    });
                }
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "sequence file contains no coefficients".into(),
            });
        }
        match bound {
            Some(b) => Self::new(values, None, b),
            None => Self::from_prefix(values),
        }
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse_text(&text)
    }
}

pub(crate) fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    Some((s[..open].trim(), inner))
}

pub(crate) fn parse_args(args: &str) -> std::result::Result<Vec<f64>, String> {
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|a| {
            let a = a.trim();
            a.parse::<f64>()
                .map_err(|_| format!("`{a}` is not a number"))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("`{a}` is not finite"))
                    }
                })
        })
        .collect()
}

/// Parameter bundle (ρ, λ, ω, σ) of the weight `t^(λ-1) F^σ_{ρ,λ}[ω t^ρ]`.
#[derive(Clone, Debug)]
pub struct RainaKernel {
    rho: f64,
    lambda: f64,
    omega: f64,
    sigma: CoefficientSequence,
}

impl RainaKernel {
    pub fn new(rho: f64, lambda: f64, omega: f64, sigma: CoefficientSequence) -> Result<Self> {
        check_positive(rho, "rho")?;
        check_positive(lambda, "lambda")?;
        if !omega.is_finite() {
            return Err(domain(format!("omega must be finite, got {omega}")));
        }
        Ok(RainaKernel {
            rho,
            lambda,
            omega,
            sigma,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn sigma(&self) -> &CoefficientSequence {
        &self.sigma
    }

    /// F^σ_{ρ,λ}(x) at the default tolerance.
    pub fn eval(&self, x: f64) -> Result<f64> {
        eval_raina(self, None, 0, x, DEFAULT_SERIES_TOL).map(|(v, _)| v)
    }

    /// The integral weight `r^(λ-1) F^σ_{ρ,λ}[ω r^ρ]` for r > 0.
    pub fn weight(&self, r: f64) -> Result<f64> {
        Ok(r.powf(self.lambda - 1.0) * self.eval(self.omega * r.powf(self.rho))?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationReport {
    pub terms_used: usize,
    pub tail_bound: f64,
    pub requested_tol: f64,
}

/// One member of the family F^{σ_m}_{ρ,λ_eff}: which λ sits in the Gamma
/// argument and which shifted sequence supplies the coefficients.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SeriesTerms<'a> {
    kernel: &'a RainaKernel,
    lambda_eff: f64,
    /// Divisor offset for σ_m(k) = σ(k)/(ρk + λ + m); `None` means σ itself.
    shift: Option<f64>,
}

impl<'a> SeriesTerms<'a> {
    pub(crate) fn new(kernel: &'a RainaKernel, lambda_override: Option<f64>, shift: u32) -> Result<Self> {
        let lambda_eff = lambda_override.unwrap_or(kernel.lambda);
        check_positive(lambda_eff, "lambda override")?;
        Ok(SeriesTerms {
            kernel,
            lambda_eff,
            shift: (shift > 0).then(|| kernel.lambda + shift as f64),
        })
    }

    fn coefficient(&self, k: usize) -> Result<f64> {
        let s = self.kernel.sigma.value(k)?;
        Ok(match self.shift {
            Some(off) => s / (self.kernel.rho * k as f64 + off),
            None => s,
        })
    }

    fn bound(&self) -> f64 {
        match self.shift {
            Some(off) => self.kernel.sigma.bound / off,
            None => self.kernel.sigma.bound,
        }
    }

    fn gamma_arg(&self, k: usize) -> f64 {
        self.kernel.rho * k as f64 + self.lambda_eff
    }

    /// ln of the majorant term `M |x|^k / Γ(ρk + λ_eff)`.
    fn ln_majorant(&self, ln_bound: f64, ln_abs_x: f64, k: usize) -> f64 {
        ln_bound + k as f64 * ln_abs_x - ln_gamma(self.gamma_arg(k))
    }

    /// `coefficient(k) * scale^k / Γ(ρk + λ_eff)`.
    fn scaled_term(&self, k: usize, scale: f64, ln_scale: f64) -> Result<f64> {
        let c = self.coefficient(k)?;
        let arg = self.gamma_arg(k);
        let lp = if k == 0 { 0.0 } else { k as f64 * ln_scale };
        if arg < 170.0 && lp.abs() < 600.0 {
            Ok(c * scale.powi(k as i32) * recip_gamma(arg))
        } else {
            Ok(c * (lp - ln_gamma(arg)).exp())
        }
    }

    /// Scaled coefficients `c_k |x|^k` up to the first K with a proven tail
    /// bound below `tol` for every argument of magnitude at most `abs_x`.
    pub(crate) fn truncate(
        &self,
        abs_x: f64,
        tol: f64,
        budget: usize,
    ) -> Result<(Vec<f64>, TruncationReport)> {
        if !(tol > 0.0) {
            return Err(domain(format!("tolerance must be positive, got {tol}")));
        }
        if !abs_x.is_finite() {
            return Err(domain(format!("series argument must be finite, got {abs_x}")));
        }
        if abs_x == 0.0 {
            let c0 = self.scaled_term(0, 0.0, f64::NEG_INFINITY)?;
            return Ok((
                vec![c0],
                TruncationReport {
                    terms_used: 1,
                    tail_bound: 0.0,
                    requested_tol: tol,
                },
            ));
        }
        let ln_x = abs_x.ln();
        let ln_m = self.bound().ln();
        let mut coeffs = Vec::new();
        let mut tail = f64::INFINITY;
        for k in 0..budget {
            coeffs.push(self.scaled_term(k, abs_x, ln_x)?);
            let ln_b1 = self.ln_majorant(ln_m, ln_x, k + 1);
            let ln_b2 = self.ln_majorant(ln_m, ln_x, k + 2);
            let ratio = (ln_b2 - ln_b1).exp();
            if ratio < 1.0 {
                tail = ln_b1.exp() / (1.0 - ratio);
                if tail <= tol {
                    return Ok((
                        coeffs,
                        TruncationReport {
                            terms_used: k + 1,
                            tail_bound: tail,
                            requested_tol: tol,
                        },
                    ));
                }
            }
        }
        Err(Error::BudgetExceeded {
            budget,
            x: abs_x,
            tail_bound: tail,
            tol,
        })
    }
}

/// Horner evaluation of scaled coefficients at y = x/scale ∈ [-1, 1].
fn horner(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

/// Evaluates F^{σ_m}_{ρ,λ_eff}(x).
///
/// `lambda_override` replaces λ inside the Gamma argument (F^σ_{ρ,λ+1} and
/// friends); `shift = m ≥ 1` swaps σ for σ_m(k) = σ(k)/(ρk + λ + m) using the
/// kernel's own λ; `shift = 0` keeps σ.
pub fn eval_raina(
    kernel: &RainaKernel,
    lambda_override: Option<f64>,
    shift: u32,
    x: f64,
    tol: f64,
) -> Result<(f64, TruncationReport)> {
    eval_raina_with_budget(kernel, lambda_override, shift, x, tol, DEFAULT_TERM_BUDGET)
}

pub fn eval_raina_with_budget(
    kernel: &RainaKernel,
    lambda_override: Option<f64>,
    shift: u32,
    x: f64,
    tol: f64,
    budget: usize,
) -> Result<(f64, TruncationReport)> {
    let terms = SeriesTerms::new(kernel, lambda_override, shift)?;
    let (coeffs, report) = terms.truncate(x.abs(), tol, budget)?;
    let y = if x < 0.0 { -1.0 } else { 1.0 };
    Ok((horner(&coeffs, y), report))
}

/// A truncated series ready for repeated evaluation on |x| ≤ `max_abs_x`,
/// as needed inside quadrature loops.
#[derive(Clone, Debug)]
pub struct PreparedSeries {
    scale: f64,
    coeffs: Vec<f64>,
    report: TruncationReport,
}

impl PreparedSeries {
    pub fn new(
        kernel: &RainaKernel,
        lambda_override: Option<f64>,
        shift: u32,
        max_abs_x: f64,
        tol: f64,
    ) -> Result<Self> {
        let terms = SeriesTerms::new(kernel, lambda_override, shift)?;
        let (coeffs, report) = terms.truncate(max_abs_x, tol, DEFAULT_TERM_BUDGET)?;
        Ok(PreparedSeries {
            scale: max_abs_x,
            coeffs,
            report,
        })
    }

    pub fn report(&self) -> TruncationReport {
        self.report
    }

    pub fn max_abs_x(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        debug_assert!(x.abs() <= self.scale * (1.0 + 1e-12) || self.scale == 0.0);
        if self.scale == 0.0 {
            self.coeffs[0]
        } else {
            horner(&self.coeffs, x / self.scale)
        }
    }
}

/// `2 (v-u)^λ F^σ_{ρ,λ+1}[ω (v-u)^ρ]`, the normalizer of the HH middle term.
pub fn normalization_factor(kernel: &RainaKernel, u: f64, v: f64) -> Result<f64> {
    normalization_factor_with(kernel, u, v, DEFAULT_NORMALIZATION_FLOOR, DEFAULT_SERIES_TOL)
}

pub fn normalization_factor_with(
    kernel: &RainaKernel,
    u: f64,
    v: f64,
    floor: f64,
    tol: f64,
) -> Result<f64> {
    if !(u < v) || !u.is_finite() || !v.is_finite() {
        return Err(domain(format!("normalization needs u < v, got u={u}, v={v}")));
    }
    let len = v - u;
    let (f, _) = eval_raina(
        kernel,
        Some(kernel.lambda + 1.0),
        0,
        kernel.omega * len.powf(kernel.rho),
        tol,
    )?;
    let value = 2.0 * len.powf(kernel.lambda) * f;
    if !(value > floor) {
        return Err(Error::NormalizationDegenerate { value, floor });
    }
    Ok(value)
}
