//! Monte Carlo Feynman–Kac estimator for linear equations
//! `-v_t - ½Tr[σσ'D²v] - μ'Dv - βv - α = 0`, `v(T, ·) = g`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SpaceTimeFn};
use crate::numeric;
use crate::paths::PathBatch;

/// Source `α(t, x)` and discount rate `β(t, x)`; drift, diffusion and the
/// terminal condition come from the accompanying [`ProblemSpec`].
#[derive(Clone)]
pub struct LinearCoefficients {
    pub alpha: SpaceTimeFn,
    pub beta: SpaceTimeFn,
}

impl fmt::Debug for LinearCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LinearCoefficients")
    }
}

impl LinearCoefficients {
    pub fn new(
        alpha: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LinearCoefficients {
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
        }
    }

    pub fn constant(alpha: f64, beta: f64) -> Self {
        Self::new(move |_, _| alpha, move |_, _| beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Sample standard deviation of the per-path functional over `√J`.
    pub stderr: f64,
    pub paths: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let (mean, std) = numeric::mean_std(samples);
        let n = samples.len();
        Estimate {
            value: mean,
            stderr: if n > 1 { std / (n as f64).sqrt() } else { 0.0 },
            paths: n,
        }
    }
}

/// Per-path values of `Σ_n B_n α(t_n, X_n) Δ + B_θ g(X_θ)`, with `B_n` the
/// exponential of the left Riemann sum of `β` up to `t_n` and `θ` the stop
/// index of the path.
pub fn path_functionals(
    spec: &ProblemSpec,
    coeffs: &LinearCoefficients,
    batch: &PathBatch,
) -> Result<Vec<f64>> {
    if batch.dim != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: batch.dim,
        });
    }
    let dt = batch.grid.dt();
    let values: Vec<f64> = (0..batch.paths)
        .into_par_iter()
        .map(|j| {
            let stop = batch.stop_index(j);
            let mut log_discount = 0.0f64;
            let mut running = 0.0;
            for n in 0..stop {
                let t = batch.grid.node(n);
                let x = batch.state(j, n);
                running += log_discount.exp() * (coeffs.alpha)(t, x) * dt;
                log_discount += (coeffs.beta)(t, x) * dt;
            }
            running + log_discount.exp() * spec.g(batch.state(j, stop))
        })
        .collect();
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("path functional of path {j}")));
    }
    Ok(values)
}

pub fn feynman_kac_estimate(
    spec: &ProblemSpec,
    coeffs: &LinearCoefficients,
    batch: &PathBatch,
) -> Result<Estimate> {
    Ok(Estimate::from_samples(&path_functionals(
        spec, coeffs, batch,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;
    use crate::paths::{euler_simulate, TimeGrid};

    fn flat(g: f64, horizon: f64, zero_sigma: bool) -> ProblemSpec {
        let mut b = ProblemSpec::builder("flat", 1)
            .horizon(horizon)
            .generator(|_| 0.0)
            .terminal(move |_| g);
        if zero_sigma {
            b = b.diffusion(|_, out| out[0] = 0.0);
        }
        b.build().unwrap()
    }

    #[test]
    fn constant_functional_has_zero_stderr() {
        let spec = flat(1.0, 1.0, false);
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let batch = euler_simulate(&spec, &grid, &[0.0], 100, 3).unwrap();
        let e =
            feynman_kac_estimate(&spec, &LinearCoefficients::constant(0.0, 0.0), &batch).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.paths, 100);
    }

    #[test]
    fn constant_discount_matches_exponential() {
        let spec = flat(1.0, 2.0, true);
        let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
        let batch = euler_simulate(&spec, &grid, &[0.0], 4, 3).unwrap();
        let e =
            feynman_kac_estimate(&spec, &LinearCoefficients::constant(0.0, -0.05), &batch).unwrap();
        assert!((e.value - (-0.1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn stopped_paths_truncate() {
        let spec = flat(2.0, 1.0, true)
            .with_domain(Domain::Box {
                lower: vec![0.0],
                upper: vec![1.0],
            })
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let batch = euler_simulate(&spec, &grid, &[5.0], 3, 3).unwrap();
        let e =
            feynman_kac_estimate(&spec, &LinearCoefficients::constant(1.0, -1.0), &batch).unwrap();
        assert_eq!(e.value, 2.0);
    }

    #[test]
    fn non_finite_source_is_an_error() {
        let spec = flat(1.0, 1.0, false);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let batch = euler_simulate(&spec, &grid, &[0.0], 5, 3).unwrap();
        let coeffs = LinearCoefficients::new(|_, _| f64::NAN, |_, _| 0.0);
        assert!(matches!(
            feynman_kac_estimate(&spec, &coeffs, &batch),
            Err(Error::NonFinite(_))
        ));
    }
}
