//! Independent checks: an explicit finite-difference solver in one space
//! dimension, residuals of the second-order backward dynamics along paths
//! for problems with a closed-form solution, and log-log rate fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{GenArgs, ProblemSpec};
use crate::numeric;
use crate::paths::PathBatch;

/// Uniform space-time grid on `[t0, T] × [x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdGrid {
    pub t0: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Number of space nodes, boundaries included.
    pub nodes: usize,
    pub steps: usize,
}

const GAMMA_PROBES: [f64; 6] = [-10.0, -1.0, -0.1, 0.1, 1.0, 10.0];

/// Largest `|∂f/∂γ|` seen on the space nodes at a few times and Hessian
/// values, by symmetric differences.
fn gamma_slope(spec: &ProblemSpec, t0: f64, xs: &[f64]) -> f64 {
    let horizon = spec.horizon();
    let times = [t0, 0.5 * (t0 + horizon), t0 + 0.999 * (horizon - t0)];
    let mut worst: f64 = 0.0;
    for &x in xs {
        let xv = [x];
        let y = spec.g(&xv);
        let mut z = [0.0];
        if !spec.dg(&xv, &mut z) {
            z[0] = 0.0;
        }
        for &t in &times {
            for &g in &GAMMA_PROBES {
                let h = 1e-4 * (1.0 + g.abs());
                let args = GenArgs {
                    t,
                    x: &xv,
                    y,
                    z: &z,
                    gamma: &[g + h],
                };
                let up = spec.f(&args);
                let down = spec.f(&GenArgs {
                    gamma: &[g - h],
                    ..args
                });
                worst = worst.max(((up - down) / (2.0 * h)).abs());
            }
        }
    }
    worst
}

impl FdGrid {
    /// A grid satisfying `Δt ≤ Δx² / (2·max|∂f/∂γ|)`; with `steps = None`
    /// the smallest such step count is chosen.
    pub fn new(
        spec: &ProblemSpec,
        t0: f64,
        x_lo: f64,
        x_hi: f64,
        nodes: usize,
        steps: Option<usize>,
    ) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: spec.dim(),
            });
        }
        if nodes < 3 || !(x_lo < x_hi) || !(t0 < spec.horizon()) {
            return Err(Error::InvalidSpec(
                "finite-difference grid needs >= 3 nodes, x_lo < x_hi and t0 < T".into(),
            ));
        }
        let dx = (x_hi - x_lo) / (nodes - 1) as f64;
        let xs: Vec<f64> = (0..nodes).map(|m| x_lo + m as f64 * dx).collect();
        let slope = gamma_slope(spec, t0, &xs);
        if !slope.is_finite() {
            return Err(Error::NonFinite("generator slope in gamma".into()));
        }
        let bound = if slope > 0.0 {
            dx * dx / (2.0 * slope)
        } else {
            f64::INFINITY
        };
        let span = spec.horizon() - t0;
        let steps = match steps {
            Some(0) => {
                return Err(Error::InvalidSpec(
                    "finite-difference steps must be >= 1".into(),
                ))
            }
            Some(n) => {
                let dt = span / n as f64;
                if dt > bound {
                    return Err(Error::CflViolation { dt, bound });
                }
                n
            }
            None if bound.is_finite() => ((span / bound).ceil() as usize).max(1),
            None => 1,
        };
        Ok(FdGrid {
            t0,
            x_lo,
            x_hi,
            nodes,
            steps,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.nodes - 1) as f64
    }

    pub fn x(&self, m: usize) -> f64 {
        if m + 1 == self.nodes {
            self.x_hi
        } else {
            self.x_lo + m as f64 * self.dx()
        }
    }
}

/// Value surface `v̂(t_k, x_m)`, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSolution {
    pub grid: FdGrid,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl FdSolution {
    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.grid.nodes;
        &self.values[k * m..(k + 1) * m]
    }

    /// Linear interpolation of the row at `t0`.
    pub fn initial_value_at(&self, x: f64) -> f64 {
        let row = self.row(0);
        let dx = self.grid.dx();
        let pos = ((x - self.grid.x_lo) / dx).clamp(0.0, (self.grid.nodes - 1) as f64);
        let m = (pos.floor() as usize).min(self.grid.nodes - 2);
        let w = pos - m as f64;
        row[m] * (1.0 - w) + row[m + 1] * w
    }
}

/// Explicit backward time stepping of `v_t = f(t, x, v, v_x, v_xx)` with
/// central differences; boundary nodes take the closed-form solution when
/// available and `g` otherwise.
pub fn fd_solve_1d(spec: &ProblemSpec, grid: &FdGrid) -> Result<FdSolution> {
    let checked = FdGrid::new(
        spec,
        grid.t0,
        grid.x_lo,
        grid.x_hi,
        grid.nodes,
        Some(grid.steps),
    )?;
    let m_count = checked.nodes;
    let steps = checked.steps;
    let dt = (spec.horizon() - checked.t0) / steps as f64;
    let dx = checked.dx();
    let xs: Vec<f64> = (0..m_count).map(|m| checked.x(m)).collect();
    let times: Vec<f64> = (0..=steps)
        .map(|k| {
            if k == steps {
                spec.horizon()
            } else {
                checked.t0 + k as f64 * dt
            }
        })
        .collect();
    let boundary = |t: f64, x: f64| match spec.analytic() {
        Some(v) => (v.value)(t, &[x]),
        None => spec.g(&[x]),
    };

    let mut values = vec![0.0; (steps + 1) * m_count];
    for (m, &x) in xs.iter().enumerate() {
        values[steps * m_count + m] = spec.g(&[x]);
    }
    for k in (0..steps).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * m_count);
        let next = &tail[..m_count];
        let row = &mut head[k * m_count..];
        let t_next = times[k + 1];
        for m in 1..m_count - 1 {
            let v = next[m];
            let vx = (next[m + 1] - next[m - 1]) / (2.0 * dx);
            let vxx = (next[m + 1] - 2.0 * v + next[m - 1]) / (dx * dx);
            let args = GenArgs {
                t: t_next,
                x: &xs[m..m + 1],
                y: v,
                z: &[vx],
                gamma: &[vxx],
            };
            row[m] = v - dt * spec.f(&args);
        }
        row[0] = boundary(times[k], xs[0]);
        row[m_count - 1] = boundary(times[k], xs[m_count - 1]);
        if let Some(m) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "finite-difference value at step {k}, node {m}"
            )));
        }
    }
    Ok(FdSolution {
        grid: checked,
        times,
        xs,
        values,
    })
}

/// Cross-sectional residual RMS for one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResidual {
    pub step: usize,
    pub rms_value: f64,
    pub rms_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub steps: Vec<StepResidual>,
    /// Mean over steps of the per-step RMS of the value-equation residual.
    pub mean_rms_value: f64,
    /// Largest absolute gradient-equation residual over all paths and steps.
    pub max_abs_gradient: f64,
    /// Largest `|v(T, X_T) - g(X_T)|`; the terminal value itself is pinned
    /// to `g`.
    pub terminal_gap: f64,
}

/// Along each path, sets `Y = v`, `Z = Dv`, `Γ = D²v` and
/// `A = (∂_t + ½Tr[σσ'D²]) Dv` from the closed-form solution and measures
///
/// ```text
/// ΔY − f Δ − Z'ΔX − ½Tr[Γσσ'] Δ      and      ΔZ − A Δ − Γ ΔX
/// ```
///
/// per step. `A` uses central differences of the supplied gradient and
/// Hessian.
pub fn twobsde_residuals(spec: &ProblemSpec, batch: &PathBatch) -> Result<ResidualReport> {
    let v = spec.analytic().ok_or(Error::MissingAnalyticV)?;
    let d = spec.dim();
    if batch.dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: batch.dim,
        });
    }
    let dd = d * d;
    let steps = batch.steps();
    let dt = batch.grid.dt();
    let big_t = batch.grid.horizon;

    struct PathResult {
        r1: Vec<f64>,
        r2: Vec<f64>,
        terminal_gap: f64,
    }

    let per_path: Vec<PathResult> = (0..batch.paths)
        .into_par_iter()
        .map(|j| {
            let mut r1 = vec![f64::NAN; steps];
            let mut r2 = vec![f64::NAN; steps];
            let mut sigma = vec![0.0; dd];
            let mut sst = vec![0.0; dd];
            let mut z = vec![0.0; d];
            let mut z_next = vec![0.0; d];
            let mut gamma = vec![0.0; dd];
            let mut a = vec![0.0; d];
            let mut buf_up = vec![0.0; dd];
            let mut buf_down = vec![0.0; dd];
            let mut probe = vec![0.0; d];
            let x_end = batch.state(j, steps);
            let terminal_gap = ((v.value)(big_t, x_end) - spec.g(x_end)).abs();
            for n in 0..steps {
                if !batch.active(j, n) {
                    continue;
                }
                let t = batch.grid.node(n);
                let t_next = batch.grid.node(n + 1);
                let x = batch.state(j, n);
                let x_next = batch.state(j, n + 1);
                let y = (v.value)(t, x);
                let y_next = if n + 1 == steps {
                    spec.g(x_next)
                } else {
                    (v.value)(t_next, x_next)
                };
                (v.gradient)(t, x, &mut z);
                (v.gradient)(t_next, x_next, &mut z_next);
                (v.hessian)(t, x, &mut gamma);
                spec.sigma(x, &mut sigma);
                numeric::outer_self(&sigma, d, &mut sst);

                // A = ∂_t Dv + ½ Σ_kl (σσ')_kl ∂_k ∂_l Dv
                let ht = 1e-5 * (1.0 + t.abs());
                (v.gradient)(t + ht, x, &mut buf_up[..d]);
                (v.gradient)(t - ht, x, &mut buf_down[..d]);
                for i in 0..d {
                    a[i] = (buf_up[i] - buf_down[i]) / (2.0 * ht);
                }
                probe.copy_from_slice(x);
                for k in 0..d {
                    let h = 1e-5 * (1.0 + x[k].abs());
                    probe[k] = x[k] + h;
                    (v.hessian)(t, &probe, &mut buf_up);
                    probe[k] = x[k] - h;
                    (v.hessian)(t, &probe, &mut buf_down);
                    probe[k] = x[k];
                    for i in 0..d {
                        for l in 0..d {
                            // ∂_k of (D²v)_{l i} = ∂_k ∂_l ∂_i v
                            let third = (buf_up[l * d + i] - buf_down[l * d + i]) / (2.0 * h);
                            a[i] += 0.5 * sst[k * d + l] * third;
                        }
                    }
                }

                let args = GenArgs {
                    t,
                    x,
                    y,
                    z: &z,
                    gamma: &gamma,
                };
                let f = spec.f(&args);
                let mut z_dx = 0.0;
                for i in 0..d {
                    z_dx += z[i] * (x_next[i] - x[i]);
                }
                r1[n] = (y_next - y)
                    - f * dt
                    - z_dx
                    - 0.5 * numeric::trace_product(&gamma, &sst, d) * dt;
                let mut worst: f64 = 0.0;
                for i in 0..d {
                    let g_dx: f64 = (0..d).map(|l| gamma[i * d + l] * (x_next[l] - x[l])).sum();
                    worst = worst.max((z_next[i] - z[i] - a[i] * dt - g_dx).abs());
                }
                r2[n] = worst;
            }
            PathResult {
                r1,
                r2,
                terminal_gap,
            }
        })
        .collect();

    let mut report_steps = Vec::with_capacity(steps);
    let mut max_abs_gradient: f64 = 0.0;
    let mut col1 = Vec::with_capacity(batch.paths);
    let mut col2 = Vec::with_capacity(batch.paths);
    for n in 0..steps {
        col1.clear();
        col2.clear();
        for p in &per_path {
            if p.r1[n].is_nan() {
                continue;
            }
            col1.push(p.r1[n]);
            col2.push(p.r2[n]);
        }
        if col1.is_empty() {
            continue;
        }
        if let Some(bad) = col1.iter().chain(&col2).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("residual {bad} at step {n}")));
        }
        max_abs_gradient = col2.iter().fold(max_abs_gradient, |m, v| m.max(*v));
        report_steps.push(StepResidual {
            step: n,
            rms_value: numeric::rms(&col1),
            rms_gradient: numeric::rms(&col2),
        });
    }
    let per_step: Vec<f64> = report_steps.iter().map(|s| s.rms_value).collect();
    let terminal_gap = per_path.iter().fold(0.0f64, |m, p| m.max(p.terminal_gap));
    Ok(ResidualReport {
        mean_rms_value: if per_step.is_empty() {
            0.0
        } else {
            numeric::mean(&per_step)
        },
        steps: report_steps,
        max_abs_gradient,
        terminal_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub half_width: f64,
}

/// Least-squares slope of `log e` against `log h`.
pub fn estimate_rate(pairs: &[(f64, f64)]) -> Result<RateEstimate> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateInput(
            "need at least 3 (h, e) pairs".into(),
        ));
    }
    if pairs
        .iter()
        .any(|&(h, e)| !(h > 0.0) || !(e > 0.0) || !h.is_finite() || !e.is_finite())
    {
        return Err(Error::DegenerateInput(
            "h and e must be positive and finite".into(),
        ));
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateInput("all h values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::DegenerateInput(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateEstimate {
        slope,
        intercept,
        half_width: t * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog_get;
    use crate::paths::{euler_simulate, TimeGrid};
    use std::sync::Arc;

    #[test]
    fn exact_power_laws() {
        let r = estimate_rate(&[(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)]).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert!(r.half_width < 1e-6);
        let r = estimate_rate(&[(1.0, 1.0), (0.5, 0.5f64.sqrt()), (0.25, 0.5)]).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert!(estimate_rate(&[(1.0, 1.0), (0.5, 0.5)]).is_err());
        assert!(estimate_rate(&[(1.0, 1.0), (0.5, 0.0), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn constant_terminal_with_zero_generator() {
        let spec = ProblemSpec::builder("c", 1)
            .generator(|_| 0.0)
            .terminal(|_| 2.5)
            .build()
            .unwrap();
        let grid = FdGrid::new(&spec, 0.0, -1.0, 1.0, 11, Some(5)).unwrap();
        let sol = fd_solve_1d(&spec, &grid).unwrap();
        assert!(sol.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn heat_on_wide_interval() {
        let spec = catalog_get("heat").unwrap();
        let grid = FdGrid::new(&spec, 0.0, -6.0, 6.0, 401, None).unwrap();
        let sol = fd_solve_1d(&spec, &grid).unwrap();
        let v = spec.analytic().unwrap();
        for k in 0..=grid.steps {
            for (m, &x) in sol.xs.iter().enumerate() {
                if x.abs() <= 3.0 {
                    let e = (sol.row(k)[m] - (v.value)(sol.times[k], &[x])).abs();
                    assert!(e <= 5e-3, "{e}");
                }
            }
        }
    }

    #[test]
    fn cfl_is_enforced() {
        let spec = catalog_get("heat").unwrap();
        assert!(matches!(
            FdGrid::new(&spec, 0.0, -1.0, 1.0, 101, Some(10)),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn frozen_paths_have_zero_residual() {
        let spec = catalog_get("heat").unwrap();
        let frozen = ProblemSpec::builder("frozen", 1)
            .diffusion(|_, out| out[0] = 0.0)
            .generator(|a| -0.5 * a.gamma[0])
            .terminal(|x| x[0] * x[0])
            .analytic(spec.analytic().unwrap().clone())
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let batch = euler_simulate(&frozen, &grid, &[0.8], 3, 1).unwrap();
        let r = twobsde_residuals(&frozen, &batch).unwrap();
        for s in &r.steps {
            assert!(s.rms_value < 1e-14, "{s:?}");
        }
    }

    #[test]
    fn heat_gradient_residual_vanishes() {
        let spec = catalog_get("heat").unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let batch = euler_simulate(&spec, &grid, &[0.0], 1000, 4).unwrap();
        let r = twobsde_residuals(&spec, &batch).unwrap();
        assert_eq!(r.max_abs_gradient, 0.0);
        assert_eq!(r.terminal_gap, 0.0);
        let expected = 2f64.sqrt() / 32.0;
        assert!((r.mean_rms_value / expected - 1.0).abs() < 0.1);
    }

    #[test]
    fn missing_closed_form() {
        let spec = catalog_get("heat")
            .unwrap()
            .with_terminal(Arc::new(|x: &[f64]| x[0]));
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let batch = euler_simulate(&spec, &grid, &[0.0], 3, 1).unwrap();
        assert_eq!(
            twobsde_residuals(&spec, &batch).unwrap_err(),
            Error::MissingAnalyticV
        );
    }
}
