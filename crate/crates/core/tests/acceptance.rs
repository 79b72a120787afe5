//! Acceptance criteria, one line of output each. Runs as a plain binary
//! (`harness = false`) so the lines show up in `cargo test` output.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use stochfrac::experiment::{detail_json, run_experiment, summary_csv, ExperimentConfig};
use stochfrac::frac_integral::{
    moment_identity_check, rl_special_case, FracIntegralRequest, FracIntegrator, Method, Side,
    Tolerances,
};
use stochfrac::hh::{
    hh_check_convex, hh_check_strongly_convex, reduction_equivalence, HhOptions,
};
use stochfrac::oracle::{riemann_frac_integral, rl_monomial, OracleKernel};
use stochfrac::polynomial::Polynomial;
use stochfrac::process::{
    mean_square_integral, CoefficientDist, ConvexityClass, ModulusSpec, Path, StochasticProcess,
};
use stochfrac::series::{eval_raina, CoefficientSequence, RainaKernel};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn interval(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let a: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(-2.0..2.0);
        if (a - b).abs() > 0.05 {
            return (a.min(b), a.max(b));
        }
    }
}

fn sigma(rng: &mut ChaCha8Rng) -> CoefficientSequence {
    match rng.random_range(0..3) {
        0 => CoefficientSequence::ones(),
        1 => CoefficientSequence::geometric(rng.random_range(0.5..2.0), rng.random_range(0.2..0.9))
            .unwrap(),
        _ => CoefficientSequence::constant(rng.random_range(0.1..3.0)).unwrap(),
    }
}

fn random_kernel(rng: &mut ChaCha8Rng, omega_lo: f64) -> RainaKernel {
    RainaKernel::new(
        rng.random_range(0.2..3.0),
        rng.random_range(0.2..3.0),
        rng.random_range(omega_lo..1.0),
        sigma(rng),
    )
    .unwrap()
}

fn convex_quadratic(rng: &mut ChaCha8Rng, a: f64, b: f64) -> StochasticProcess {
    let hi: f64 = rng.random_range(0.1..3.0);
    StochasticProcess::random_polynomial(
        a,
        b,
        vec![
            CoefficientDist::Normal { mean: rng.random_range(-1.0..1.0), sd: 1.0 },
            CoefficientDist::Uniform { lo: -2.0, hi: 2.0 },
            CoefficientDist::Uniform { lo: 0.0, hi },
        ],
    )
    .unwrap()
    .with_convexity(ConvexityClass::Convex)
}

fn exact_opts() -> HhOptions {
    HhOptions::default().with_method(Method::TermwiseExact)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let kernel = rl_special_case(1.0).unwrap();
    let mut worst = 0.0f64;
    for case in 0..50 {
        let (u, v) = interval(&mut rng);
        let p = convex_quadratic(&mut rng, u, v);
        let seed = rng.random();
        let report = hh_check_convex(&p, &kernel, u, v, 20, seed, &exact_opts()).map_err(|e| e.to_string())?;
        let integrals = mean_square_integral(&p, u, v, 20, seed).map_err(|e| e.to_string())?;
        for (m, i) in report.middle.iter().zip(&integrals.per_path_values) {
            let d = (m - i / (v - u)).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, || format!("case {case}: middle {m} vs mean value {}", i / (v - u)))?;
        }
    }
    let t2 = StochasticProcess::parse_spec("poly:t^2", 0.0, 1.0)
        .unwrap()
        .with_convexity(ConvexityClass::Convex);
    let r = hh_check_convex(&t2, &kernel, 0.0, 1.0, 1, 0, &exact_opts()).map_err(|e| e.to_string())?;
    let chain = (r.left[0], r.middle[0], r.right[0]);
    ensure(
        chain.0 == 0.25 && (chain.1 - 1.0 / 3.0).abs() <= f64::EPSILON && chain.2 == 0.5,
        || format!("t² chain {chain:?}"),
    )?;
    Ok(format!("50 processes, max |middle - mean value| = {worst:.1e}; t² chain {chain:?}"))
}

fn random_poly_process(rng: &mut ChaCha8Rng, a: f64, b: f64, convex: bool) -> StochasticProcess {
    let degree = rng.random_range(0..=4);
    let coeffs = (0..=degree)
        .map(|_| CoefficientDist::Uniform { lo: -1.5, hi: 1.5 })
        .collect();
    let class = if convex { ConvexityClass::Convex } else { ConvexityClass::JensenConvex };
    StochasticProcess::random_polynomial(a, b, coeffs).unwrap().with_convexity(class)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_mid = 0.0f64;
    for _ in 0..20 {
        let alpha = rng.random_range(0.2..3.0);
        let (u, v) = interval(&mut rng);
        // The reduction compares middle terms only; convexity is not needed.
        let p = random_poly_process(&mut rng, u, v, true);
        let r = reduction_equivalence(alpha, &p, u, v, 10, rng.random(), &exact_opts())
            .map_err(|e| e.to_string())?;
        worst_mid = worst_mid.max(r.max_discrepancy);
        ensure(r.max_discrepancy <= 1e-8, || {
            format!("alpha {alpha}: discrepancy {:.3e}", r.max_discrepancy)
        })?;
    }
    let mut worst_mono = 0.0f64;
    for _ in 0..20 {
        let alpha = rng.random_range(0.2..3.0);
        let (u, x) = interval(&mut rng);
        let kernel = rl_special_case(alpha).unwrap();
        let integ = FracIntegrator::new(
            FracIntegralRequest::left(kernel, u, x).with_method(Method::TermwiseExact),
        )
        .map_err(|e| e.to_string())?;
        for m in 0..=4u32 {
            // (t - u)^m
            let p = Polynomial::monomial(1.0, m as usize).shifted(-u);
            let got = integ.termwise(&p).map_err(|e| e.to_string())?;
            let expect = rl_monomial(alpha, m, u, x);
            let d = (got - expect).abs();
            worst_mono = worst_mono.max(d);
            ensure(d <= 1e-9, || format!("alpha {alpha}, m {m}: {got} vs {expect}"))?;
        }
    }
    Ok(format!(
        "20 orders: max middle discrepancy {worst_mid:.1e}; monomials max error {worst_mono:.1e}"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let k = random_kernel(&mut rng, -1.0);
        let (u, v) = interval(&mut rng);
        for p in 0..=2u32 {
            for side in [Side::Left, Side::Right] {
                let c = moment_identity_check(&k, u, v, p, side, 1e-7, Tolerances::default())
                    .map_err(|e| format!("draw {draw}, p {p}: {e}"))?;
                let rel = (c.numeric_lhs - c.closed_rhs).abs() / (1.0 + c.closed_rhs.abs());
                worst = worst.max(rel);
                ensure(c.passed, || {
                    format!("draw {draw}, p {p}, {side:?}: {} vs {}", c.numeric_lhs, c.closed_rhs)
                })?;
            }
        }
    }
    Ok(format!("100 draws × p ∈ {{0,1,2}} × both sides, max relative gap {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    let mut worst_affine = 0.0f64;
    for config in 0..1000 {
        let k = random_kernel(&mut rng, 0.0);
        let (u, v) = interval(&mut rng);
        let affine = config % 10 == 0;
        let p = if affine {
            StochasticProcess::random_polynomial(
                u,
                v,
                vec![
                    CoefficientDist::Normal { mean: 0.0, sd: 2.0 },
                    CoefficientDist::Normal { mean: 0.0, sd: 2.0 },
                ],
            )
            .unwrap()
            .with_convexity(ConvexityClass::Convex)
        } else {
            convex_quadratic(&mut rng, u, v)
        };
        let r = hh_check_convex(&p, &k, u, v, 100, rng.random(), &exact_opts())
            .map_err(|e| format!("config {config}: {e}"))?;
        violations += r.violations_lm + r.violations_mr;
        if affine {
            for i in 0..r.n_paths {
                let d = (r.left[i] - r.middle[i]).abs().max((r.middle[i] - r.right[i]).abs());
                worst_affine = worst_affine.max(d);
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    ensure(worst_affine <= 1e-10, || format!("affine gap {worst_affine:.3e}"))?;
    Ok(format!("1000 configurations × 100 paths, 0 violations; affine max gap {worst_affine:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_eq = 0.0f64;
    for _ in 0..20 {
        let k = random_kernel(&mut rng, 0.0);
        let (u, v) = interval(&mut rng);
        let p = StochasticProcess::random_polynomial(
            u,
            v,
            vec![
                CoefficientDist::Constant(0.0),
                CoefficientDist::Constant(0.0),
                CoefficientDist::Uniform { lo: 0.1, hi: 3.0 },
            ],
        )
        .unwrap()
        .with_convexity(ConvexityClass::StronglyConvex)
        .with_modulus(ModulusSpec::QuadraticFraction(1.0))
        .unwrap();
        let r = hh_check_strongly_convex(&p, &k, u, v, 20, rng.random(), &exact_opts())
            .map_err(|e| e.to_string())?;
        let c = r.corrections.as_ref().unwrap();
        for i in 0..r.n_paths {
            let d = (c.left_corr[i] - r.middle[i])
                .abs()
                .max((r.middle[i] - c.right_corr[i]).abs());
            worst_eq = worst_eq.max(d);
        }
    }
    ensure(worst_eq <= 1e-10, || format!("C t² equality gap {worst_eq:.3e}"))?;

    let mut tighter = 0usize;
    for config in 0..100 {
        let k = random_kernel(&mut rng, 0.0);
        let (u, v) = interval(&mut rng);
        let modulus = if config % 2 == 0 {
            ModulusSpec::QuadraticFraction(rng.random_range(0.1..1.0))
        } else {
            ModulusSpec::Dist(CoefficientDist::Uniform { lo: 0.05, hi: 0.1 })
        };
        let p = StochasticProcess::random_polynomial(
            u,
            v,
            vec![
                CoefficientDist::Normal { mean: 0.0, sd: 1.0 },
                CoefficientDist::Uniform { lo: -2.0, hi: 2.0 },
                CoefficientDist::Uniform { lo: 0.2, hi: 2.0 },
            ],
        )
        .unwrap()
        .with_convexity(ConvexityClass::StronglyConvex)
        .with_modulus(modulus)
        .unwrap();
        let r = hh_check_strongly_convex(&p, &k, u, v, 50, rng.random(), &exact_opts())
            .map_err(|e| format!("config {config}: {e}"))?;
        ensure(!r.has_violations(), || format!("config {config}: corrected chain violated"))?;
        let c = r.corrections.as_ref().unwrap();
        for i in 0..r.n_paths {
            ensure(c.left_corr[i] >= r.left[i] && c.right_corr[i] <= r.right[i], || {
                format!(
                    "config {config}, path {i}: corrected [{}, {}] vs [{}, {}]",
                    c.left_corr[i], c.right_corr[i], r.left[i], r.right[i]
                )
            })?;
            tighter += 1;
        }
    }
    Ok(format!(
        "C t² equality gap {worst_eq:.1e}; corrected bounds at least as tight on {tighter} paths over 100 configurations"
    ))
}

/// Plain Σ_{k<n} σ(k) x^k / Γ(ρk+λ_eff) / (ρk+λ+m) for m ≥ 1.
fn reference_sum(
    rho: f64,
    lambda: f64,
    lambda_eff: f64,
    shift: u32,
    sigma: &dyn Fn(usize) -> f64,
    x: f64,
    n: usize,
) -> f64 {
    (0..n)
        .map(|k| {
            let kf = k as f64;
            let mut c = (sigma(k).ln() + kf * x.abs().ln() - ln_gamma(rho * kf + lambda_eff)).exp();
            if x < 0.0 && k % 2 == 1 {
                c = -c;
            }
            if shift > 0 {
                c /= rho * kf + lambda + shift as f64;
            }
            c
        })
        .sum()
}

fn criterion_6() -> Outcome {
    let ones = CoefficientSequence::ones();
    let golden = [
        (1.0, 1.0, 1.0, std::f64::consts::E, "e"),
        (2.0, 2.0, 1.0, 1f64.sinh(), "sinh(1)"),
        (2.0, 1.0, 1.0, 1f64.cosh(), "cosh(1)"),
        (2.0, 1.0, 4.0, 2f64.cosh(), "cosh(2)"),
        (2.0, 1.0, -4.0, 2f64.cos(), "cos(2)"),
        (1.0, 1.0, -3.0, (-3f64).exp(), "exp(-3)"),
        (1.0, 2.0, 1.0, std::f64::consts::E - 1.0, "e-1"),
    ];
    let mut worst = 0.0f64;
    for (rho, lambda, x, expect, name) in golden {
        let k = RainaKernel::new(rho, lambda, 1.0, ones.clone()).unwrap();
        let (v, _) = eval_raina(&k, None, 0, x, 1e-12).map_err(|e| e.to_string())?;
        worst = worst.max((v - expect).abs());
        ensure((v - expect).abs() <= 1e-12, || format!("{name}: {v} vs {expect}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checks = 0;
    let mut skipped = 0;
    while checks < 300 {
        let rho = rng.random_range(0.2..3.0);
        let lambda = rng.random_range(0.2..3.0);
        let r = rng.random_range(0.2..0.95);
        let seq = CoefficientSequence::geometric(1.0, r).unwrap();
        let sigma = move |k: usize| r.powi(k as i32);
        let k = RainaKernel::new(rho, lambda, 1.0, seq).unwrap();
        let x: f64 = rng.random_range(-5.0..5.0);
        let tol = [1e-6, 1e-9, 1e-12][rng.random_range(0..3)];
        let shift = rng.random_range(0..3u32);
        let lambda_eff = if rng.random_bool(0.3) { lambda + 1.0 } else { lambda };
        let override_ = (lambda_eff != lambda).then_some(lambda_eff);
        // Reports bound truncation only. Skip draws whose alternating sum
        // loses more than 1% of the tolerance to cancellation.
        let abs_sum = reference_sum(rho, lambda, lambda_eff, shift, &sigma, x.abs(), 4000);
        if !(abs_sum * f64::EPSILON <= 0.01 * tol) {
            skipped += 1;
            continue;
        }
        let (v, rep) = eval_raina(&k, override_, shift, x, tol).map_err(|e| e.to_string())?;
        ensure(rep.tail_bound <= rep.requested_tol, || format!("report {rep:?}"))?;
        let reference = reference_sum(rho, lambda, lambda_eff, shift, &sigma, x, 2 * rep.terms_used);
        ensure((v - reference).abs() <= tol, || {
            format!("rho {rho}, lambda {lambda}, x {x}, tol {tol}: {v} vs 2K-term {reference}")
        })?;
        checks += 1;
    }
    Ok(format!("golden values max error {worst:.1e}; {checks} truncation reports within tolerance ({skipped} ill-conditioned draws skipped)"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let k = random_kernel(&mut rng, -1.0);
        let (u, v) = interval(&mut rng);
        let degree = rng.random_range(0..=4);
        let poly = Polynomial::new((0..=degree).map(|_| rng.random_range(-1.5..1.5)).collect());
        let path = Path::from_polynomial(poly.clone());
        let sig = k.sigma().clone();
        let sigma_fn = move |i: usize| sig.value(i).unwrap();
        let ok = OracleKernel {
            rho: k.rho(),
            lambda: k.lambda(),
            omega: k.omega(),
            sigma: &sigma_fn,
        };
        let eval = |t: f64| poly.eval(t);
        for side in [Side::Left, Side::Right] {
            let (base, x) = match side {
                Side::Left => (u, v),
                Side::Right => (v, u),
            };
            let oracle = riemann_frac_integral(&ok, &eval, base, x, 1_000_000);
            for method in [Method::TermwiseExact, Method::Quadrature] {
                let req = match side {
                    Side::Left => FracIntegralRequest::left(k.clone(), base, x),
                    Side::Right => FracIntegralRequest::right(k.clone(), base, x),
                }
                .with_method(method);
                let got = FracIntegrator::new(req)
                    .and_then(|i| i.eval_path(&path))
                    .map_err(|e| format!("case {case}: {e}"))?
                    .0;
                let gap = (got - oracle).abs() / (1.0 + oracle.abs());
                worst = worst.max(gap);
                ensure(gap <= 1e-4, || {
                    format!("case {case} {side:?} {method:?}: {got} vs oracle {oracle}")
                })?;
            }
        }
    }
    Ok(format!("50 cases × 2 sides × 2 methods, max gap vs 10^6-node oracle {worst:.1e}"))
}

const DETERMINISM_CONFIG: &str = r#"
seed = 2024
n_paths = 64
method = "auto"
intervals = [[-1.0, 1.0], [0.0, 2.0]]

[kernel]
rho = [0.5, 1.5]
lambda = [0.4, 2.0]
omega = [0.0, 0.8]
sigma = ["const1", "geometric(1,0.5)"]

[process]
family = "random_polynomial"
coefficients = ["normal(0,1)", "uniform(-1,1)", "uniform(0.5,2)"]
interval = [-1.0, 2.0]
convexity = "strongly_convex"
modulus = "fraction(0.5)"

[output]
csv = "summary.csv"
json = "detail.json"
per_path = true
"#;

fn criterion_8() -> Outcome {
    let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let cfg = ExperimentConfig::parse(DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
        let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        stochfrac::experiment::write_outputs(&cfg, &out, dir.path()).map_err(|e| e.to_string())?;
        let csv = std::fs::read(dir.path().join("summary.csv")).map_err(|e| e.to_string())?;
        let json = std::fs::read(dir.path().join("detail.json")).map_err(|e| e.to_string())?;
        ensure(csv == summary_csv(&cfg, &out).unwrap(), || "csv bytes differ from writer".into())?;
        ensure(json == detail_json(&cfg, &out).unwrap(), || "json bytes differ from writer".into())?;
        Ok((csv, json))
    };
    let (c1, j1) = run()?;
    let (c2, j2) = run()?;
    ensure(c1 == c2, || "CSV differs between runs".into())?;
    ensure(j1 == j2, || "JSON differs between runs".into())?;
    Ok(format!("CSV {} bytes and JSON {} bytes identical across two runs", c1.len(), j1.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("reduction to the classical chain", criterion_1),
        ("reduction to the Riemann-Liouville chain", criterion_2),
        ("moment identities p = 0, 1, 2", criterion_3),
        ("convex chain over random configurations", criterion_4),
        ("strongly convex chain via the t² shift", criterion_5),
        ("series golden values and truncation reports", criterion_6),
        ("agreement with the brute-force oracle", criterion_7),
        ("byte-identical experiment reruns", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
