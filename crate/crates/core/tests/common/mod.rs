#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parabolica::bsde_full::backward_solve_2bsde;
use parabolica::bsde_semilinear::backward_solve_semilinear;
use parabolica::hjb::extract_control;
use parabolica::linear_fk::feynman_kac_estimate;
use parabolica::model::{catalog_get, validate_assumptions, ProblemSpec, CATALOG};
use parabolica::paths::{euler_simulate, TimeGrid};
use parabolica::regress::{fit, BasisSpec};
use parabolica::verify::{fd_solve_1d, FdGrid};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<(), String>;

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Heat equation with zero drift and unit diffusion, so that `φ ≡ 0` and the
/// backward recursion reduces to repeated conditional expectations.
pub fn martingale_problem(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ProblemSpec {
    ProblemSpec::builder("martingale", 1)
        .generator(|a| -0.5 * a.gamma[0])
        .terminal(g)
        .build()
        .unwrap()
}

pub fn regression_oracle(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let rows = 150;
    let states: Vec<f64> = (0..2 * rows).map(|_| uniform(&mut r, -2.0, 2.0)).collect();
    let targets: Vec<f64> = (0..rows).map(|_| uniform(&mut r, -10.0, 10.0)).collect();
    let feats = |x: &[f64]| [1.0, x[0], x[1], x[0] * x[0], x[0] * x[1], x[1] * x[1]];
    let design = DMatrix::from_fn(rows, 6, |i, c| feats(&states[2 * i..2 * i + 2])[c]);
    let rhs = design.transpose() * DVector::from_column_slice(&targets);
    let coef = (design.transpose() * &design)
        .cholesky()
        .ok_or("gram matrix not positive definite")?
        .solve(&rhs);
    let want = design * coef;
    let got = fit(&states, 2, &targets, 1, &BasisSpec::polynomial(2))
        .and_then(|m| m.predict(&states))
        .map_err(|e| e.to_string())?;
    let worst = got
        .iter()
        .zip(want.iter())
        .map(|(g, w)| (g - w).abs() / (1.0 + w.abs()))
        .fold(0.0, f64::max);
    if worst <= 1e-8 {
        Ok(())
    } else {
        Err(format!("relative gap {worst:e}"))
    }
}

/// With `φ ≡ 0` the root value equals the sample mean of `g(X_T)`.
pub fn mean_preservation(coeffs: [f64; 4], paths: usize, steps: usize, seed: u64) -> Outcome {
    let [a, b, c, d] = coeffs;
    let spec = martingale_problem(move |x| a + b * x[0] + c * x[0] * x[0] + d * x[0].sin());
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    let batch = euler_simulate(&spec, &grid, &[0.3], paths, seed).map_err(|e| e.to_string())?;
    let terminal: Vec<f64> = (0..paths).map(|j| spec.g(batch.state(j, steps))).collect();
    let want = parabolica::numeric::mean(&terminal);
    let basis = BasisSpec::polynomial(2);
    for (label, sol) in [
        (
            "semilinear",
            backward_solve_semilinear(&spec, &batch, &basis, 2),
        ),
        ("2bsde", backward_solve_2bsde(&spec, &batch, &basis, 2)),
    ] {
        let got = sol.map_err(|e| e.to_string())?.root_value.value;
        if (got - want).abs() > 1e-10 * (1.0 + want.abs()) {
            return Err(format!("{label}: root {got} vs mean {want}"));
        }
    }
    Ok(())
}

/// `Y_N` equals `g(X_T)` bit for bit, for free and stopped paths alike.
pub fn terminal_pinning(seed: u64) -> Outcome {
    let basis = BasisSpec::polynomial(2);
    for name in ["heat", "bsb_uncertain_vol", "boundary_heat"] {
        let spec = catalog_get(name).unwrap();
        let x0 = if name == "bsb_uncertain_vol" {
            1.0
        } else {
            0.0
        };
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let batch = euler_simulate(&spec, &grid, &[x0], 2000, seed).map_err(|e| e.to_string())?;
        let sol = backward_solve_2bsde(&spec, &batch, &basis, 2).map_err(|e| e.to_string())?;
        for j in 0..batch.paths {
            let stop = batch.stop_index(j);
            let g = spec.g(batch.state(j, stop));
            for n in stop..=batch.steps() {
                if sol.y(n, j).to_bits() != g.to_bits() {
                    return Err(format!("{name}: path {j} node {n}"));
                }
            }
        }
    }
    Ok(())
}

/// Bit patterns of a representative slice of every solver's output.
pub fn fingerprint() -> Vec<u64> {
    let basis = BasisSpec::polynomial(2);
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let mut out = Vec::new();

    let heat = catalog_get("heat").unwrap();
    let batch = euler_simulate(&heat, &grid, &[0.0], 3000, 11).unwrap();
    out.push(batch.checksum());
    let fk = feynman_kac_estimate(&heat, heat.linear().unwrap(), &batch).unwrap();
    out.extend([fk.value.to_bits(), fk.stderr.to_bits()]);

    let semi = catalog_get("semilinear_exp").unwrap();
    let sol = backward_solve_semilinear(&semi, &batch, &basis, 2).unwrap();
    out.extend(sol.y_section(0).iter().map(|v| v.to_bits()));
    out.extend(sol.z_section(5).iter().map(|v| v.to_bits()));

    let hjb = catalog_get("hjb_uncertain_vol").unwrap();
    let batch = euler_simulate(&hjb, &grid, &[1.0], 3000, 12).unwrap();
    let sol = backward_solve_2bsde(&hjb, &batch, &basis, 2).unwrap();
    out.push(sol.root_value.value.to_bits());
    out.extend(sol.gamma_section(8).unwrap().iter().map(|v| v.to_bits()));
    let field = extract_control(hjb.control().unwrap(), &sol, &batch).unwrap();
    out.extend(field.values.iter().map(|v| v.to_bits()));

    let bsb = catalog_get("bsb_uncertain_vol").unwrap();
    let fd = fd_solve_1d(&bsb, &FdGrid::new(&bsb, 0.0, 0.2, 5.0, 101, None).unwrap()).unwrap();
    out.extend(fd.row(0).iter().map(|v| v.to_bits()));
    out
}

pub fn thread_reproducibility(threads: &[usize]) -> Outcome {
    let runs: Vec<Vec<u64>> = threads
        .iter()
        .map(|&n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(fingerprint)
        })
        .collect();
    for (n, run) in threads.iter().zip(&runs).skip(1) {
        if run != &runs[0] {
            return Err(format!("{n} threads differ from {}", threads[0]));
        }
    }
    Ok(())
}

/// Ordered terminal pairs `g₁ ≥ g₂` on the uncertain-volatility generator
/// give ordered finite-difference surfaces at every node.
pub fn fd_comparison(pairs: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let base = catalog_get("bsb_uncertain_vol").unwrap();
    for p in 0..pairs {
        let (a, b, c, k) = (
            uniform(&mut r, -1.0, 1.0),
            uniform(&mut r, -1.0, 1.0),
            uniform(&mut r, -0.5, 0.5),
            uniform(&mut r, 0.5, 4.0),
        );
        let gap = if p == 0 {
            0.0
        } else {
            uniform(&mut r, 0.0, 1.0)
        };
        let upper = move |x: &[f64]| a + b * x[0] + c * x[0] * x[0] + (k * x[0]).sin();
        let lower = move |x: &[f64]| upper(x) - gap * (1.0 + (k * x[0]).cos().powi(2));
        let s1 = base.clone().with_terminal(Arc::new(upper));
        let s2 = base.clone().with_terminal(Arc::new(lower));
        let grid = FdGrid::new(&s1, 0.0, 0.2, 5.0, 81, None).map_err(|e| e.to_string())?;
        let v1 = fd_solve_1d(&s1, &grid).map_err(|e| e.to_string())?;
        let v2 = fd_solve_1d(&s2, &grid).map_err(|e| e.to_string())?;
        for k in 0..v1.times.len() {
            if v1.row(k).iter().zip(v2.row(k)).any(|(h, l)| h < l) {
                return Err(format!("pair {p}: order violated in row {k}"));
            }
        }
    }
    Ok(())
}

/// The γ-monotonicity check holds on every catalog generator and fails once the heat
/// generator's sign is flipped.
pub fn monotonicity_validator() -> Outcome {
    for name in CATALOG {
        let spec = catalog_get(name).unwrap();
        let report =
            validate_assumptions(&spec, spec.growth(), 1000, 0).map_err(|e| e.to_string())?;
        if !report.check("a4_monotone_gamma").unwrap().pass {
            return Err(format!("{name} fails the monotonicity check"));
        }
    }
    let flipped = catalog_get("heat")
        .unwrap()
        .with_generator(Arc::new(|a| 0.5 * a.gamma[0]));
    let report =
        validate_assumptions(&flipped, flipped.growth(), 1000, 0).map_err(|e| e.to_string())?;
    if report.check("a4_monotone_gamma").unwrap().pass {
        return Err("sign-flipped heat generator passes".into());
    }
    Ok(())
}
