use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stochfrac::experiment::{
    fmt_f64, process_from_spec, run_experiment, write_frac_int, write_outputs, ExperimentConfig,
    FracIntRecord, EXIT_OK, EXIT_UNVERIFIED, EXIT_VIOLATIONS,
};
use stochfrac::frac_integral::{
    frac_integral_left, frac_integral_right, moment_identity_check, FracIntegralRequest, Method,
    Side, Tolerances,
};
use stochfrac::hh::{
    hh_check_convex, hh_check_strongly_convex, reduction_equivalence, report_json, HhOptions,
    HhReport,
};
use stochfrac::process::ConvexityClass;
use stochfrac::series::{eval_raina, CoefficientSequence, RainaKernel, DEFAULT_SERIES_TOL};
use stochfrac::Error;

/// Exit status for usage, configuration and I/O errors.
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(
    name = "stochfrac",
    version,
    about = "Generalized fractional integrals of stochastic processes and Hermite-Hadamard checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate F^σ_{ρ,λ}(x), optionally with a shifted λ or sequence.
    EvalRaina(EvalRainaArgs),
    /// Fractional integral of a process at one point.
    FracInt(FracIntArgs),
    /// Hermite-Hadamard chain for a convex or strongly convex process.
    HhCheck(HhCheckArgs),
    /// Quadrature vs closed form for ∫ t^p times the kernel weight.
    IdentityCheck(IdentityArgs),
    /// Middle term under the Riemann-Liouville kernel vs the monomial oracle.
    ReduceCheck(ReduceArgs),
    /// Run an experiment grid from a TOML config.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct KernelArgs {
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    omega: f64,
    /// Sequence spec: const1, const(c), geometric(r), list(..), file:PATH
    #[arg(long, default_value = "const1")]
    sigma: String,
}

impl KernelArgs {
    fn kernel(&self) -> Result<RainaKernel, Error> {
        RainaKernel::new(
            self.rho,
            self.lambda,
            self.omega,
            CoefficientSequence::parse_spec(&self.sigma)?,
        )
    }
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    /// Tolerance; its meaning depends on the subcommand.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Directory for CSV/JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    TermwiseExact,
    Quadrature,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Auto => Method::Auto,
            MethodArg::TermwiseExact => Method::TermwiseExact,
            MethodArg::Quadrature => Method::Quadrature,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvexityArg {
    None,
    JensenConvex,
    Convex,
    StronglyConvex,
}

impl From<ConvexityArg> for ConvexityClass {
    fn from(c: ConvexityArg) -> ConvexityClass {
        match c {
            ConvexityArg::None => ConvexityClass::None,
            ConvexityArg::JensenConvex => ConvexityClass::JensenConvex,
            ConvexityArg::Convex => ConvexityClass::Convex,
            ConvexityArg::StronglyConvex => ConvexityClass::StronglyConvex,
        }
    }
}

#[derive(Args)]
struct EvalRainaArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    /// Use σ_m(k) = σ(k)/(ρk+λ+m).
    #[arg(long, default_value_t = 0)]
    shift: u32,
    /// Replace λ in the Gamma argument.
    #[arg(long)]
    lambda_override: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SERIES_TOL)]
    tol: f64,
}

#[derive(Args)]
struct FracIntArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    side: SideArg,
    #[arg(long, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, allow_negative_numbers = true)]
    v: f64,
    /// Evaluation point; defaults to v for the left operator, u for the right.
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    /// Process spec: poly:<expr>, rpoly:<dist>,.., exp[:rate], abs[:center], zero
    #[arg(long)]
    process: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct HhCheckArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, allow_negative_numbers = true)]
    v: f64,
    #[arg(long)]
    process: String,
    #[arg(long, value_enum, default_value_t = ConvexityArg::Convex)]
    convexity: ConvexityArg,
    /// Strong-convexity modulus: const(c), uniform(lo,hi) or fraction(f).
    #[arg(long)]
    modulus: Option<String>,
    /// Check the strongly convex chain (needs --modulus).
    #[arg(long)]
    strong: bool,
    /// Include per-path arrays in the printed summary.
    #[arg(long)]
    per_path: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct IdentityArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    p: u32,
    #[arg(long, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, allow_negative_numbers = true)]
    v: f64,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    side: SideArg,
    /// Relative tolerance for |lhs - rhs| ≤ tol (1 + |rhs|).
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    process: String,
    #[arg(long, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, allow_negative_numbers = true)]
    v: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and STOCHFRAC_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn side(s: SideArg) -> Side {
    match s {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn eval_raina_cmd(a: EvalRainaArgs) -> Result<i32, Error> {
    let kernel = a.kernel.kernel()?;
    let (value, report) = eval_raina(&kernel, a.lambda_override, a.shift, a.x, a.tol)?;
    println!("value = {}", fmt_f64(value));
    println!("terms_used = {}", report.terms_used);
    println!("tail_bound = {}", fmt_f64(report.tail_bound));
    println!("requested_tol = {}", fmt_f64(report.requested_tol));
    Ok(EXIT_OK)
}

fn tolerances(tol: Option<f64>) -> Tolerances {
    match tol {
        Some(t) => Tolerances {
            quad_abs: t,
            quad_rel: t,
            ..Tolerances::default()
        },
        None => Tolerances::default(),
    }
}

fn frac_int_cmd(a: FracIntArgs) -> Result<i32, Error> {
    let kernel = a.kernel.kernel()?;
    let process = process_from_spec(&a.process, (a.u, a.v), ConvexityClass::None, None)?;
    let s = side(a.side);
    let (base, x) = match s {
        Side::Left => (a.u, a.x.unwrap_or(a.v)),
        Side::Right => (a.v, a.x.unwrap_or(a.u)),
    };
    let req = match s {
        Side::Left => FracIntegralRequest::left(kernel.clone(), base, x),
        Side::Right => FracIntegralRequest::right(kernel.clone(), base, x),
    }
    .with_method(a.common.method.into())
    .with_tolerances(tolerances(a.common.tol));
    let est = match s {
        Side::Left => frac_integral_left(req, &process, a.common.paths, a.common.seed)?,
        Side::Right => frac_integral_right(req, &process, a.common.paths, a.common.seed)?,
    };
    println!("side = {}", s.as_str());
    println!("x = {}", fmt_f64(x));
    println!("method = {}", est.method.as_str());
    println!("n_paths = {}", est.n_paths);
    println!("mean = {}", fmt_f64(est.mean));
    println!("variance = {}", fmt_f64(est.variance));
    if let Some(dir) = &a.common.out {
        let record = FracIntRecord::new(&kernel, &a.kernel.sigma, s, (a.u, a.v), x, a.common.seed, est);
        for p in write_frac_int(&record, dir, "frac_int")? {
            println!("wrote {}", p.display());
        }
    }
    Ok(EXIT_OK)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn print_report(r: &HhReport, per_path: bool) {
    println!("normalization = {}", fmt_f64(r.normalization));
    println!("left_mean = {}", fmt_f64(mean(&r.left)));
    println!("middle_mean = {}", fmt_f64(mean(&r.middle)));
    println!("right_mean = {}", fmt_f64(mean(&r.right)));
    if let Some(c) = &r.corrections {
        println!("left_corr_mean = {}", fmt_f64(mean(&c.left_corr)));
        println!("right_corr_mean = {}", fmt_f64(mean(&c.right_corr)));
    }
    println!("violations_lm = {}", r.violations_lm);
    println!("violations_mr = {}", r.violations_mr);
    println!("hypothesis_verified = {}", r.hypothesis_verified);
    println!("method = {}", r.method.as_str());
    if per_path {
        let (lo, hi) = r.bounds();
        for i in 0..r.n_paths {
            println!(
                "path {i}: {} {} {}",
                fmt_f64(lo[i]),
                fmt_f64(r.middle[i]),
                fmt_f64(hi[i])
            );
        }
    }
}

fn hh_check_cmd(a: HhCheckArgs) -> Result<i32, Error> {
    let kernel = a.kernel.kernel()?;
    let process = process_from_spec(
        &a.process,
        (a.u, a.v),
        a.convexity.into(),
        a.modulus.as_deref(),
    )?;
    let mut opts = HhOptions::default().with_method(a.common.method.into());
    if let Some(t) = a.common.tol {
        opts.tol_rel = t;
    }
    let (n, seed) = (a.common.paths, a.common.seed);
    let report = if a.strong {
        hh_check_strongly_convex(&process, &kernel, a.u, a.v, n, seed, &opts)?
    } else {
        hh_check_convex(&process, &kernel, a.u, a.v, n, seed, &opts)?
    };
    print_report(&report, a.per_path);
    if let Some(dir) = &a.common.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("hh_report.json");
        std::fs::write(&path, report_json(&report)?)?;
        println!("wrote {}", path.display());
    }
    let code = if report.has_violations() {
        EXIT_VIOLATIONS
    } else if !report.hypothesis_verified {
        EXIT_UNVERIFIED
    } else {
        EXIT_OK
    };
    println!("{}", verdict(code == EXIT_OK));
    Ok(code)
}

fn identity_cmd(a: IdentityArgs) -> Result<i32, Error> {
    let kernel = a.kernel.kernel()?;
    let check = moment_identity_check(
        &kernel,
        a.u,
        a.v,
        a.p,
        side(a.side),
        a.tol,
        Tolerances::default(),
    )?;
    println!("lhs = {}", fmt_f64(check.numeric_lhs));
    println!("rhs = {}", fmt_f64(check.closed_rhs));
    println!("{}", verdict(check.passed));
    Ok(if check.passed { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn reduce_cmd(a: ReduceArgs) -> Result<i32, Error> {
    let process = process_from_spec(&a.process, (a.u, a.v), ConvexityClass::Convex, None)?;
    let opts = HhOptions::default().with_method(a.common.method.into());
    let paths = if a.common.paths == 0 { 1 } else { a.common.paths };
    let r = reduction_equivalence(a.alpha, &process, a.u, a.v, paths, a.common.seed, &opts)?;
    let tol = a.common.tol.unwrap_or(1e-8);
    let ok = r.max_discrepancy <= tol;
    println!("middle_mean = {}", fmt_f64(mean(&r.middle)));
    println!("oracle_middle_mean = {}", fmt_f64(mean(&r.oracle_middle)));
    println!("discrepancy = {}", fmt_f64(r.max_discrepancy));
    println!("{}", verdict(ok));
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn run_cmd(a: RunArgs) -> Result<i32, Error> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let outcome = run_experiment(&cfg)?;
    let dir = a.out.unwrap_or_else(|| cfg.output_dir());
    for c in &outcome.cells {
        let s = &c.cell;
        print!(
            "cell {}: rho={} lambda={} omega={} sigma={} [{}, {}] {}",
            s.index,
            s.rho,
            s.lambda,
            s.omega,
            s.sigma,
            s.u,
            s.v,
            c.status.as_str()
        );
        match &c.error {
            Some(e) => println!(" ({e})"),
            None => println!(),
        }
    }
    for p in write_outputs(&cfg, &outcome, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::EvalRaina(a) => eval_raina_cmd(a),
        Command::FracInt(a) => frac_int_cmd(a),
        Command::HhCheck(a) => hh_check_cmd(a),
        Command::IdentityCheck(a) => identity_cmd(a),
        Command::ReduceCheck(a) => reduce_cmd(a),
        Command::Run(a) => run_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
