//! Batch experiments: a TOML config describes a grid of kernels and
//! intervals, every cell runs an HH chain check, and the results go to a
//! CSV summary and an optional JSON detail file.
//!
//! Output bytes depend only on the config: cells run concurrently but are
//! written in grid order, and nothing time- or host-dependent is recorded.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac_integral::{Method, Side, Tolerances};
use crate::hh::{hh_check_convex, hh_check_strongly_convex, HhOptions, HhReport};
use crate::process::{
    mean_variance, ConvexityClass, EstimateMethod, IntegralEstimate, ModulusSpec,
    PathTable, ProcessFamily, StochasticProcess,
};
use crate::series::{CoefficientSequence, RainaKernel, DEFAULT_NORMALIZATION_FLOOR};

pub const SUMMARY_SCHEMA: &str = "stochfrac-summary v1";
pub const DETAIL_SCHEMA: &str = "stochfrac-detail v1";
pub const FRAC_INT_SCHEMA: &str = "stochfrac-frac-int v1";
pub const OUT_DIR_ENV: &str = "STOCHFRAC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_UNVERIFIED: i32 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    #[default]
    Convex,
    StronglyConvex,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Convex => "convex",
            CheckKind::StronglyConvex => "strongly_convex",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelGrid {
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub sigma: Vec<String>,
}

/// Either `spec = "poly:t^2"` or a structured family description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub spec: Option<String>,
    /// `random_polynomial`, `deterministic` or `table`.
    pub family: Option<String>,
    /// Ascending per-coefficient distributions for `random_polynomial`.
    pub coefficients: Option<Vec<String>>,
    pub degree: Option<usize>,
    /// Closed form for `deterministic`, in the `spec` syntax.
    pub function: Option<String>,
    /// CSV file for `table`: first row knots, one row per path after it.
    pub table: Option<String>,
    pub interval: Option<[f64; 2]>,
    pub convexity: ConvexityClass,
    pub modulus: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub series: f64,
    pub quad_abs: f64,
    pub quad_rel: f64,
    pub chain_abs: f64,
    pub chain_rel: f64,
    pub normalization_floor: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        let h = HhOptions::default();
        ToleranceConfig {
            series: t.series,
            quad_abs: t.quad_abs,
            quad_rel: t.quad_rel,
            chain_abs: h.tol_abs,
            chain_rel: h.tol_rel,
            normalization_floor: DEFAULT_NORMALIZATION_FLOOR,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory for relative output paths; falls back to `$STOCHFRAC_OUT_DIR`,
    /// then the working directory.
    pub dir: Option<String>,
    pub csv: Option<String>,
    pub json: Option<String>,
    /// Include per-path arrays in the JSON detail.
    pub per_path: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitPolicy {
    pub fail_on_violation: bool,
    pub fail_on_unverified: bool,
}

impl Default for ExitPolicy {
    fn default() -> Self {
        ExitPolicy {
            fail_on_violation: true,
            fail_on_unverified: true,
        }
    }
}

fn default_paths() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub check: CheckKind,
    pub kernel: KernelGrid,
    pub process: ProcessConfig,
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub exit: ExitPolicy,
    /// Directory that relative `file:` and table paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_config(e))))?;
        cfg.base_dir = path.parent().map(FsPath::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(field_err("n_paths", "must be at least 1"));
        }
        let k = &self.kernel;
        for (name, grid) in [("kernel.rho", &k.rho), ("kernel.lambda", &k.lambda)] {
            if grid.is_empty() {
                return Err(field_err(name, "grid must be nonempty"));
            }
            if let Some(x) = grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(field_err(name, format!("values must be positive, got {x}")));
            }
        }
        if k.omega.is_empty() {
            return Err(field_err("kernel.omega", "grid must be nonempty"));
        }
        if let Some(x) = k.omega.iter().find(|x| !x.is_finite()) {
            return Err(field_err("kernel.omega", format!("values must be finite, got {x}")));
        }
        if k.sigma.is_empty() {
            return Err(field_err("kernel.sigma", "grid must be nonempty"));
        }
        for (i, s) in k.sigma.iter().enumerate() {
            if !s.trim_start().starts_with("file:") {
                CoefficientSequence::parse_spec(s)
                    .map_err(|e| field_err(&format!("kernel.sigma[{i}]"), strip_domain(e)))?;
            }
        }
        if self.intervals.is_empty() {
            return Err(field_err("intervals", "list must be nonempty"));
        }
        for (i, [u, v]) in self.intervals.iter().enumerate() {
            if !(u.is_finite() && v.is_finite() && u < v) {
                return Err(field_err(&format!("intervals[{i}]"), format!("need u < v, got [{u}, {v}]")));
            }
        }
        let t = &self.tolerances;
        for (name, x) in [
            ("tolerances.series", t.series),
            ("tolerances.quad_abs", t.quad_abs),
            ("tolerances.quad_rel", t.quad_rel),
            ("tolerances.chain_abs", t.chain_abs),
            ("tolerances.chain_rel", t.chain_rel),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(field_err(name, format!("must be positive, got {x}")));
            }
        }
        if !(t.normalization_floor >= 0.0) {
            return Err(field_err("tolerances.normalization_floor", "must be nonnegative"));
        }
        self.process_shape_check()?;
        if self.check == CheckKind::StronglyConvex && self.process.modulus.is_none() {
            return Err(field_err("process.modulus", "required when check = \"strongly_convex\""));
        }
        Ok(())
    }

    fn process_shape_check(&self) -> Result<()> {
        let p = &self.process;
        match (p.spec.as_deref(), p.family.as_deref()) {
            (Some(_), Some(_)) => Err(field_err("process", "give either `spec` or `family`, not both")),
            (None, None) => Err(field_err("process", "missing `spec` or `family`")),
            (None, Some("random_polynomial")) => match &p.coefficients {
                None => Err(field_err("process.coefficients", "required for random_polynomial")),
                Some(c) => match p.degree {
                    Some(d) if d + 1 != c.len() => Err(field_err(
                        "process.degree",
                        format!("degree {d} does not match {} coefficients", c.len()),
                    )),
                    _ => Ok(()),
                },
            },
            (None, Some("deterministic")) if p.function.is_none() => {
                Err(field_err("process.function", "required for deterministic"))
            }
            (None, Some("table")) if p.table.is_none() => {
                Err(field_err("process.table", "required for table"))
            }
            (None, Some("deterministic" | "table")) | (Some(_), None) => Ok(()),
            (None, Some(other)) => Err(field_err(
                "process.family",
                format!("unknown family `{other}` (random_polynomial, deterministic, table)"),
            )),
        }
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = PathBuf::from(rel);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        }
    }

    fn sigma(&self, spec: &str) -> Result<CoefficientSequence> {
        match spec.trim().strip_prefix("file:") {
            Some(path) => CoefficientSequence::load(self.resolve(path.trim())),
            None => CoefficientSequence::parse_spec(spec),
        }
    }

    /// Builds the process over its configured interval, or the hull of the
    /// cell intervals when none is given.
    pub fn build_process(&self) -> Result<StochasticProcess> {
        let p = &self.process;
        let [a, b] = p.interval.unwrap_or_else(|| {
            let lo = self.intervals.iter().map(|i| i[0]).fold(f64::INFINITY, f64::min);
            let hi = self.intervals.iter().map(|i| i[1]).fold(f64::NEG_INFINITY, f64::max);
            [lo, hi]
        });
        let ctx = |field: &'static str| move |e: Error| field_err(field, strip_domain(e));
        let process = match (p.spec.as_deref(), p.family.as_deref()) {
            (Some(spec), _) => StochasticProcess::parse_spec(spec, a, b).map_err(ctx("process.spec"))?,
            (None, Some("random_polynomial")) => {
                let coeffs = p
                    .coefficients
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<_>>>()
                    .map_err(ctx("process.coefficients"))?;
                StochasticProcess::random_polynomial(a, b, coeffs).map_err(ctx("process.coefficients"))?
            }
            (None, Some("deterministic")) => {
                let f = p.function.as_deref().unwrap_or_default();
                let proc = StochasticProcess::parse_spec(f, a, b).map_err(ctx("process.function"))?;
                if !matches!(proc.family(), ProcessFamily::Deterministic(_)) {
                    return Err(field_err("process.function", "must be a deterministic closed form"));
                }
                proc
            }
            (None, Some("table")) => {
                let path = self.resolve(p.table.as_deref().unwrap_or_default());
                let table = load_table(&path).map_err(ctx("process.table"))?;
                StochasticProcess::new(a, b, ProcessFamily::Table(table)).map_err(ctx("process.table"))?
            }
            _ => return Err(field_err("process", "missing `spec` or `family`")),
        };
        let process = process.with_convexity(p.convexity);
        match &p.modulus {
            Some(m) => {
                let spec: ModulusSpec = m.parse().map_err(ctx("process.modulus"))?;
                process.with_modulus(spec).map_err(ctx("process.modulus"))
            }
            None => Ok(process),
        }
    }

    pub fn hh_options(&self) -> HhOptions {
        let t = &self.tolerances;
        HhOptions {
            tol_abs: t.chain_abs,
            tol_rel: t.chain_rel,
            method: self.method,
            tolerances: Tolerances {
                series: t.series,
                quad_abs: t.quad_abs,
                quad_rel: t.quad_rel,
            },
            normalization_floor: t.normalization_floor,
        }
    }

    /// Grid cells in output order: ρ, λ, ω, σ, then interval varies fastest.
    pub fn cells(&self) -> Vec<CellSpec> {
        let k = &self.kernel;
        let mut out = Vec::new();
        for &rho in &k.rho {
            for &lambda in &k.lambda {
                for &omega in &k.omega {
                    for sigma in &k.sigma {
                        for &[u, v] in &self.intervals {
                            out.push(CellSpec {
                                index: out.len(),
                                rho,
                                lambda,
                                omega,
                                sigma: sigma.clone(),
                                u,
                                v,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Output directory: `output.dir`, else `$STOCHFRAC_OUT_DIR`, else `.`.
    pub fn output_dir(&self) -> PathBuf {
        match &self.output.dir {
            Some(d) => self.resolve(d),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
        }
    }
}

fn strip_domain(e: Error) -> String {
    match e {
        Error::Domain(m) | Error::Config(m) | Error::Data(m) | Error::Io(m) => m,
        other => other.to_string(),
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Reads a path table: first record holds the knots, every later record one
/// path's values. Lines starting with `#` are skipped.
pub fn load_table(path: &FsPath) -> Result<PathTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(row);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{}: empty table", path.display())));
    }
    let knots = records.remove(0);
    PathTable::new(knots, records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub index: usize,
    pub rho: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma: String,
    pub u: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Violation,
    HypothesisUnverified,
    Error,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Pass => "pass",
            CellStatus::Violation => "violation",
            CellStatus::HypothesisUnverified => "hypothesis_unverified",
            CellStatus::Error => "error",
        }
    }
}

/// Path means of the chain terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub normalization: f64,
    pub left_mean: f64,
    pub middle_mean: f64,
    pub right_mean: f64,
    pub left_corr_mean: Option<f64>,
    pub right_corr_mean: Option<f64>,
    pub violations_lm: usize,
    pub violations_mr: usize,
    pub hypothesis_verified: bool,
    pub method: EstimateMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellSpec,
    pub status: CellStatus,
    pub error: Option<String>,
    pub summary: Option<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<HhReport>,
}

fn mean(xs: &[f64]) -> f64 {
    mean_variance(xs).0
}

fn summarize(report: &HhReport) -> CellSummary {
    CellSummary {
        normalization: report.normalization,
        left_mean: mean(&report.left),
        middle_mean: mean(&report.middle),
        right_mean: mean(&report.right),
        left_corr_mean: report.corrections.as_ref().map(|c| mean(&c.left_corr)),
        right_corr_mean: report.corrections.as_ref().map(|c| mean(&c.right_corr)),
        violations_lm: report.violations_lm,
        violations_mr: report.violations_mr,
        hypothesis_verified: report.hypothesis_verified,
        method: report.method,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub process_label: String,
    pub check: CheckKind,
    pub cells: Vec<CellResult>,
    pub exit_code: i32,
}

fn run_cell(
    cfg: &ExperimentConfig,
    process: &StochasticProcess,
    cell: &CellSpec,
    opts: &HhOptions,
) -> Result<HhReport> {
    let sigma = cfg.sigma(&cell.sigma)?;
    let kernel = RainaKernel::new(cell.rho, cell.lambda, cell.omega, sigma)?;
    match cfg.check {
        CheckKind::Convex => hh_check_convex(process, &kernel, cell.u, cell.v, cfg.n_paths, cfg.seed, opts),
        CheckKind::StronglyConvex => {
            hh_check_strongly_convex(process, &kernel, cell.u, cell.v, cfg.n_paths, cfg.seed, opts)
        }
    }
}

/// Runs every grid cell. Numeric failures are recorded per cell; only a
/// process that cannot be built aborts the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let process = cfg.build_process()?;
    let opts = cfg.hh_options();
    let cells: Vec<CellResult> = cfg
        .cells()
        .into_par_iter()
        .map(|cell| match run_cell(cfg, &process, &cell, &opts) {
            Ok(report) => {
                let status = if report.has_violations() {
                    CellStatus::Violation
                } else if !report.hypothesis_verified {
                    CellStatus::HypothesisUnverified
                } else {
                    CellStatus::Pass
                };
                CellResult {
                    summary: Some(summarize(&report)),
                    report: cfg.output.per_path.then_some(report),
                    cell,
                    status,
                    error: None,
                }
            }
            Err(e) => CellResult {
                cell,
                status: CellStatus::Error,
                error: Some(e.to_string()),
                summary: None,
                report: None,
            },
        })
        .collect();
    let exit_code = exit_code(&cells, cfg.exit);
    Ok(ExperimentOutcome {
        process_label: process.label(),
        check: cfg.check,
        cells,
        exit_code,
    })
}

/// 2 if any cell violated its chain, else 3 if any cell is unverified or
/// failed numerically, else 0; each class can be switched off.
pub fn exit_code(cells: &[CellResult], policy: ExitPolicy) -> i32 {
    let has = |s: CellStatus| cells.iter().any(|c| c.status == s);
    if policy.fail_on_violation && has(CellStatus::Violation) {
        EXIT_VIOLATIONS
    } else if policy.fail_on_unverified
        && (has(CellStatus::HypothesisUnverified) || has(CellStatus::Error))
    {
        EXIT_UNVERIFIED
    } else {
        EXIT_OK
    }
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

const SUMMARY_COLUMNS: [&str; 23] = [
    "cell", "rho", "lambda", "omega", "sigma", "u", "v", "process", "check", "n_paths", "seed",
    "method", "normalization", "left_mean", "middle_mean", "right_mean", "left_corr_mean",
    "right_corr_mean", "violations_lm", "violations_mr", "hypothesis_verified", "status", "error",
];

/// CSV summary: a `# stochfrac-summary v1` comment line, a header row and
/// one row per cell.
pub fn summary_csv(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<Vec<u8>> {
    let mut buf = format!("# {SUMMARY_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
        for c in &outcome.cells {
            let s = c.summary.as_ref();
            let cell = &c.cell;
            let row = [
                cell.index.to_string(),
                fmt_f64(cell.rho),
                fmt_f64(cell.lambda),
                fmt_f64(cell.omega),
                cell.sigma.clone(),
                fmt_f64(cell.u),
                fmt_f64(cell.v),
                outcome.process_label.clone(),
                outcome.check.as_str().to_string(),
                cfg.n_paths.to_string(),
                cfg.seed.to_string(),
                s.map(|s| s.method.as_str().to_string()).unwrap_or_default(),
                opt_f64(s.map(|s| s.normalization)),
                opt_f64(s.map(|s| s.left_mean)),
                opt_f64(s.map(|s| s.middle_mean)),
                opt_f64(s.map(|s| s.right_mean)),
                opt_f64(s.and_then(|s| s.left_corr_mean)),
                opt_f64(s.and_then(|s| s.right_corr_mean)),
                s.map(|s| s.violations_lm.to_string()).unwrap_or_default(),
                s.map(|s| s.violations_mr.to_string()).unwrap_or_default(),
                s.map(|s| s.hypothesis_verified.to_string()).unwrap_or_default(),
                c.status.as_str().to_string(),
                c.error.clone().unwrap_or_default(),
            ];
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Serialize)]
struct Detail<'a> {
    schema: &'static str,
    seed: u64,
    n_paths: usize,
    method: Method,
    check: CheckKind,
    process: &'a str,
    exit_code: i32,
    cells: &'a [CellResult],
}

/// JSON detail with per-cell summaries (and per-path arrays when enabled).
pub fn detail_json(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<Vec<u8>> {
    let detail = Detail {
        schema: DETAIL_SCHEMA,
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        method: cfg.method,
        check: outcome.check,
        process: &outcome.process_label,
        exit_code: outcome.exit_code,
        cells: &outcome.cells,
    };
    let mut out = serde_json::to_vec_pretty(&detail).map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn write_file(path: &FsPath, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes)?;
    Ok(())
}

/// Writes the configured outputs under `dir` and returns their paths.
/// Without any configured file name the summary goes to `summary.csv`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &FsPath,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let csv_name = match (&cfg.output.csv, &cfg.output.json) {
        (None, None) => Some("summary.csv".to_string()),
        (c, _) => c.clone(),
    };
    if let Some(name) = csv_name {
        let path = dir.join(name);
        write_file(&path, &summary_csv(cfg, outcome)?)?;
        written.push(path);
    }
    if let Some(name) = &cfg.output.json {
        let path = dir.join(name);
        write_file(&path, &detail_json(cfg, outcome)?)?;
        written.push(path);
    }
    Ok(written)
}

/// One fractional-integral evaluation for export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracIntRecord {
    pub rho: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma: String,
    pub side: Side,
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub method: EstimateMethod,
    pub seed: u64,
    #[serde(flatten)]
    pub estimate: IntegralEstimate,
}

impl FracIntRecord {
    pub fn new(
        kernel: &RainaKernel,
        sigma: &str,
        side: Side,
        (u, v): (f64, f64),
        x: f64,
        seed: u64,
        estimate: IntegralEstimate,
    ) -> Self {
        FracIntRecord {
            rho: kernel.rho(),
            lambda: kernel.lambda(),
            omega: kernel.omega(),
            sigma: sigma.to_string(),
            side,
            u,
            v,
            x,
            method: estimate.method,
            seed,
            estimate,
        }
    }

    /// Long-format CSV: one row per path, with the aggregate repeated.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = format!("# {FRAC_INT_SCHEMA}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record([
                "rho", "lambda", "omega", "sigma", "side", "u", "v", "x", "method", "seed",
                "path_index", "value", "mean", "variance", "n_paths",
            ])
            .map_err(csv_err)?;
            for (i, val) in self.estimate.per_path_values.iter().enumerate() {
                w.write_record([
                    fmt_f64(self.rho),
                    fmt_f64(self.lambda),
                    fmt_f64(self.omega),
                    self.sigma.clone(),
                    self.side.as_str().to_string(),
                    fmt_f64(self.u),
                    fmt_f64(self.v),
                    fmt_f64(self.x),
                    self.method.as_str().to_string(),
                    self.seed.to_string(),
                    i.to_string(),
                    fmt_f64(*val),
                    fmt_f64(self.estimate.mean),
                    fmt_f64(self.estimate.variance),
                    self.estimate.n_paths.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }
}

/// Writes `<stem>.csv` and `<stem>.json` for a record.
pub fn write_frac_int(record: &FracIntRecord, dir: &FsPath, stem: &str) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_file(&csv_path, &record.to_csv()?)?;
    write_file(&json_path, &record.to_json()?)?;
    Ok(vec![csv_path, json_path])
}

/// Builds a process from a `spec` string with a convexity label, as the
/// command line does.
pub fn process_from_spec(
    spec: &str,
    (a, b): (f64, f64),
    convexity: ConvexityClass,
    modulus: Option<&str>,
) -> Result<StochasticProcess> {
    let p = StochasticProcess::parse_spec(spec, a, b)?.with_convexity(convexity);
    match modulus {
        Some(m) => p.with_modulus(m.parse()?),
        None => Ok(p),
    }
}
