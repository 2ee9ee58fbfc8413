//! Acceptance gate: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use parabolica::backward::BackwardSolution;
use parabolica::bsde_full::backward_solve_2bsde;
use parabolica::bsde_semilinear::backward_solve_semilinear;
use parabolica::hjb::extract_control;
use parabolica::linear_fk::feynman_kac_estimate;
use parabolica::model::{catalog_get, ProblemSpec};
use parabolica::paths::{euler_simulate, gbm_strong_error, PathBatch, TimeGrid};
use parabolica::regress::BasisSpec;
use parabolica::verify::{estimate_rate, fd_solve_1d, twobsde_residuals, FdGrid};
use std::sync::Arc;

type Verdict = Result<String, String>;
type Check<T> = (&'static str, fn() -> T);

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn simulate(
    spec: &ProblemSpec,
    x0: f64,
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<PathBatch, String> {
    let grid = TimeGrid::new(0.0, spec.horizon(), steps).map_err(err)?;
    euler_simulate(spec, &grid, &[x0], paths, seed).map_err(err)
}

fn within_budget(elapsed: Duration, budget_secs: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() <= budget_secs {
        Ok(())
    } else {
        Err(format!(
            "took {:.1}s, budget {budget_secs}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn linear_feynman_kac() -> Verdict {
    let spec = catalog_get("heat").map_err(err)?;
    let start = Instant::now();
    let est = single_threaded(|| {
        let batch = simulate(&spec, 0.0, 64, 100_000, 1)?;
        feynman_kac_estimate(&spec, spec.linear().unwrap(), &batch).map_err(err)
    })?;
    let elapsed = start.elapsed();
    let gap = (est.value - 1.0).abs();
    let tol = 3.0 * est.stderr + 0.01;
    let detail = format!(
        "estimate {:.5} (stderr {:.1e}), |gap| {gap:.2e} <= {tol:.2e}, {:.2}s single-threaded",
        est.value,
        est.stderr,
        elapsed.as_secs_f64()
    );
    within_budget(elapsed, 10.0).map_err(|e| format!("{detail}; {e}"))?;
    if gap <= tol {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn euler_strong_order() -> Verdict {
    let spec = catalog_get("gbm_linear").map_err(err)?;
    let start = Instant::now();
    let mut pairs = Vec::new();
    for n in [16, 32, 64, 128] {
        let batch = simulate(&spec, 1.0, n, 100_000, 2)?;
        pairs.push((
            batch.grid.dt(),
            gbm_strong_error(&batch, 1.0, 0.05, 0.2).map_err(err)?,
        ));
    }
    let rate = estimate_rate(&pairs).map_err(err)?;
    let detail = format!(
        "slope {:.3} +/- {:.3} in [0.35, 0.65], {:.1}s",
        rate.slope,
        rate.half_width,
        start.elapsed().as_secs_f64()
    );
    within_budget(start.elapsed(), 30.0).map_err(|e| format!("{detail}; {e}"))?;
    if (0.35..=0.65).contains(&rate.slope) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn semilinear_scheme() -> Verdict {
    let spec = catalog_get("semilinear_exp").map_err(err)?;
    let target = std::f64::consts::E;
    let basis = BasisSpec::polynomial(2);
    let start = Instant::now();
    let solve = |n: usize, seed: u64| -> Result<(f64, f64), String> {
        let batch = simulate(&spec, 0.0, n, 100_000, seed)?;
        let sol = backward_solve_semilinear(&spec, &batch, &basis, 2).map_err(err)?;
        Ok((sol.root_value.value, sol.root_value.stderr))
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [32, 64, 128] {
        let (value, stderr) = solve(n, 0)?;
        let gap = (value - target).abs();
        let tol = 0.5 / (n as f64).sqrt() + 3.0 * stderr;
        ok &= gap <= tol;
        parts.push(format!("N={n}: |gap| {gap:.2e} <= {tol:.2e}"));
    }
    let scaled = |n: usize| -> Result<f64, String> {
        let mut total = 0.0;
        for seed in 0..5 {
            total += (n as f64).sqrt() * (solve(n, 100 + seed)?.0 - target).abs();
        }
        Ok(total / 5.0)
    };
    let (coarse, fine) = (scaled(32)?, scaled(128)?);
    ok &= fine <= 2.0 * coarse;
    parts.push(format!("sqrt(N)*err {coarse:.3e} -> {fine:.3e}"));
    let detail = format!(
        "{}, {:.1}s",
        parts.join("; "),
        start.elapsed().as_secs_f64()
    );
    within_budget(start.elapsed(), 120.0).map_err(|e| format!("{detail}; {e}"))?;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fully_nonlinear_scheme() -> Verdict {
    let spec = catalog_get("bsb_uncertain_vol").map_err(err)?;
    let target = 0.04f64.exp();
    let start = Instant::now();
    let batch = simulate(&spec, 1.0, 64, 200_000, 3)?;
    let sol = backward_solve_2bsde(&spec, &batch, &BasisSpec::polynomial(2), 2).map_err(err)?;
    drop(batch);
    let mc_rel = (sol.root_value.value - target).abs() / target;

    let grid = FdGrid::new(&spec, 0.0, 0.2, 5.0, 601, None).map_err(err)?;
    let fd = fd_solve_1d(&spec, &grid).map_err(err)?;
    let exact = spec.analytic().unwrap();
    let window_rel = fd
        .xs
        .iter()
        .zip(fd.row(0))
        .filter(|(x, _)| (0.5..=2.0).contains(*x))
        .map(|(x, v)| {
            let e = (exact.value)(0.0, &[*x]);
            (v - e).abs() / e
        })
        .fold(0.0, f64::max);
    let fd_rel = (fd.initial_value_at(1.0) - target).abs() / target;
    let detail = format!(
        "2BSDE Y0 {:.5} rel {mc_rel:.2e} <= 2e-2; FD v(0,1) rel {fd_rel:.2e}, max rel on [0.5, 2] {window_rel:.2e} <= 1e-2; {:.1}s",
        sol.root_value.value,
        start.elapsed().as_secs_f64()
    );
    within_budget(start.elapsed(), 300.0).map_err(|e| format!("{detail}; {e}"))?;
    if mc_rel <= 0.02 && fd_rel <= 0.01 && window_rel <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn midpoint_rms(spec: &ProblemSpec, sol: &BackwardSolution, batch: &PathBatch) -> f64 {
    let n = batch.steps() / 2;
    let t = batch.grid.node(n);
    let v = &spec.analytic().unwrap().value;
    let sq: f64 = (0..batch.paths)
        .map(|j| (sol.y(n, j) - v(t, batch.state(j, n))).powi(2))
        .sum();
    (sq / batch.paths as f64).sqrt()
}

/// Seeds averaged for the representation check: the midpoint error on heat
/// is pure sampling noise, so a single seed's doubling factor scatters
/// widely around its expected value of about 1.41.
const REPRESENTATION_SEEDS: u64 = 8;

fn representation_identity() -> Verdict {
    let spec = catalog_get("heat").map_err(err)?;
    let basis = BasisSpec::polynomial(2);
    let rms = |n: usize, paths: usize| -> Result<f64, String> {
        let mut mean_square = 0.0;
        for seed in 0..REPRESENTATION_SEEDS {
            let batch = simulate(&spec, 0.0, n, paths, 40 + seed)?;
            let sol = backward_solve_2bsde(&spec, &batch, &basis, 2).map_err(err)?;
            mean_square += midpoint_rms(&spec, &sol, &batch).powi(2);
        }
        Ok((mean_square / REPRESENTATION_SEEDS as f64).sqrt())
    };
    let coarse = rms(64, 100_000)?;
    let fine = rms(128, 200_000)?;
    let factor = coarse / fine;
    let detail = format!(
        "RMS {coarse:.3e} <= 5e-2, doubled {fine:.3e}, factor {factor:.2} >= 1.3 ({REPRESENTATION_SEEDS} seeds)"
    );
    if coarse <= 0.05 && factor >= 1.3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn residual_check() -> Verdict {
    let spec = catalog_get("heat").map_err(err)?;
    let mut rms = Vec::new();
    let mut gradient = 0.0f64;
    for n in [32, 64, 128, 256] {
        let batch = simulate(&spec, 0.0, n, 10_000, 5)?;
        let report = twobsde_residuals(&spec, &batch).map_err(err)?;
        rms.push(report.mean_rms_value);
        gradient = gradient.max(report.max_abs_gradient);
    }
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[0] / w[1]).collect();
    let detail = format!(
        "value residual ratios {} >= 1.8; gradient residual max {gradient:e}",
        ratios
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    if ratios.iter().all(|&r| r >= 1.8) && gradient == 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Share of interior nodes with `±Γ > 0.01` whose extracted control equals
/// `expected`, and the number of such nodes.
fn control_agreement(spec: &ProblemSpec, sign: f64, expected: f64) -> Result<(f64, usize), String> {
    let steps = 32;
    let batch = simulate(spec, 1.0, steps, 50_000, 6)?;
    let sol = backward_solve_2bsde(spec, &batch, &BasisSpec::polynomial(2), 2).map_err(err)?;
    let field = extract_control(spec.control().unwrap(), &sol, &batch).map_err(err)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for n in 1..steps {
        for j in 0..batch.paths {
            if sign * sol.gamma(n, j).unwrap()[0] > 0.01 {
                total += 1;
                if field.control(n, j)[0] == expected {
                    hits += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err("no samples pass the curvature filter".into());
    }
    Ok((hits as f64 / total as f64, total))
}

fn control_extraction() -> Verdict {
    let convex = catalog_get("hjb_uncertain_vol").map_err(err)?;
    let concave = convex
        .clone()
        .with_terminal(Arc::new(|x: &[f64]| -x[0] * x[0]));
    let (high, high_n) = control_agreement(&convex, 1.0, 0.2)?;
    let (low, low_n) = control_agreement(&concave, -1.0, 0.1)?;
    let detail = format!(
        "convex: u = 0.2 on {:.2}% of {high_n}; concave: u = 0.1 on {:.2}% of {low_n}",
        100.0 * high,
        100.0 * low
    );
    if high >= 0.95 && low >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn property_suites() -> Verdict {
    let checks: [Check<common::Outcome>; 6] = [
        ("regression oracle", || common::regression_oracle(3)),
        ("mean preservation", || {
            common::mean_preservation([0.5, -1.0, 0.3, 0.7], 3000, 10, 2)
        }),
        ("terminal pinning", || common::terminal_pinning(5)),
        ("thread counts 1/2/8", || {
            common::thread_reproducibility(&[1, 2, 8])
        }),
        ("FD comparison x10", || common::fd_comparison(10, 21)),
        ("monotonicity validator", common::monotonicity_validator),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Err(e) = check() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Ok(checks.map(|c| c.0).join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [Check<Verdict>; 8] = [
        ("linear Feynman-Kac on heat", linear_feynman_kac),
        ("Euler strong order on GBM", euler_strong_order),
        ("semi-linear backward scheme", semilinear_scheme),
        (
            "fully non-linear scheme on uncertain volatility",
            fully_nonlinear_scheme,
        ),
        ("representation of v along paths", representation_identity),
        ("Ito residual of the classical solution", residual_check),
        ("HJB control extraction", control_extraction),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        match check() {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
