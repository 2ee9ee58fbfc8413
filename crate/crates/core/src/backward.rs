//! Shared backward recursion for the regression-based BSDE schemes.
//!
//! Each step regresses `Y_n` (and `Z_n` for the full scheme) on the states
//! at `t_{n-1}`, then regresses the covariations `ΔW·Y_n` and `Z_n ⊗ ΔW`
//! with the fitted levels subtracted. `Z` and `Γ` follow through `σ^{-1}`,
//! and the implicit `Y` relation is solved by Picard iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde_full::{terminal_gradient, terminal_hessian};
use crate::error::{Error, Result};
use crate::linear_fk::Estimate;
use crate::model::{GenArgs, ProblemSpec};
use crate::numeric;
use crate::paths::{PathBatch, TimeGrid};
use crate::regress::{self, BasisSpec, FitDiagnostics};

pub const DEFAULT_PICARD_ITERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Index `n` of the node whose values this step produced.
    pub step: usize,
    pub active_paths: usize,
    /// Fit of the values carried back from the next node.
    pub fit: FitDiagnostics,
    /// Fit of their covariations with the Brownian increment.
    pub moment_fit: FitDiagnostics,
    /// Largest ratio of successive Picard increments, when at least two
    /// sweeps ran and the increments were non-zero.
    pub picard_ratio: Option<f64>,
}

/// Time-major `Y`, `Z` and optionally `Γ` along every path.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    gamma: Option<Vec<f64>>,
    pub root_value: Estimate,
    /// One entry per backward step, ordered by node index.
    pub steps: Vec<StepDiagnostics>,
    /// Paths whose terminal gradient came from finite differences across a
    /// kink of `g`.
    pub kinked_terminal: Vec<usize>,
}

impl BackwardSolution {
    pub fn has_gamma(&self) -> bool {
        self.gamma.is_some()
    }

    pub fn y(&self, step: usize, path: usize) -> f64 {
        self.y[step * self.paths + path]
    }

    pub fn z(&self, step: usize, path: usize) -> &[f64] {
        let d = self.dim;
        let at = (step * self.paths + path) * d;
        &self.z[at..at + d]
    }

    pub fn gamma(&self, step: usize, path: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.gamma.as_ref().map(|g| {
            let at = (step * self.paths + path) * dd;
            &g[at..at + dd]
        })
    }

    /// `Y` at node `step` for all paths.
    pub fn y_section(&self, step: usize) -> &[f64] {
        &self.y[step * self.paths..(step + 1) * self.paths]
    }

    /// `Z` at node `step`, `J×d` row-major.
    pub fn z_section(&self, step: usize) -> &[f64] {
        let w = self.paths * self.dim;
        &self.z[step * w..(step + 1) * w]
    }

    /// `Γ` at node `step`, `J×d×d` row-major.
    pub fn gamma_section(&self, step: usize) -> Option<&[f64]> {
        let w = self.paths * self.dim * self.dim;
        self.gamma.as_ref().map(|g| &g[step * w..(step + 1) * w])
    }
}

struct NodeValues {
    y: f64,
    z: Vec<f64>,
    gamma: Vec<f64>,
    picard_ratio: Option<f64>,
}

pub(crate) fn solve(
    spec: &ProblemSpec,
    batch: &PathBatch,
    basis: &BasisSpec,
    picard_iters: usize,
    full: bool,
) -> Result<BackwardSolution> {
    basis.validate()?;
    let d = spec.dim();
    if batch.dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: batch.dim,
        });
    }
    let jn = batch.paths;
    let steps = batch.steps();
    let dt = batch.grid.dt();
    let dd = d * d;

    // Values at each path's stopping node: the terminal time or its exit.
    let mut stop_states = vec![0.0; jn * d];
    for j in 0..jn {
        stop_states[j * d..(j + 1) * d].copy_from_slice(batch.state(j, batch.stop_index(j)));
    }
    let stop_y: Vec<f64> = (0..jn)
        .map(|j| spec.g(&stop_states[j * d..(j + 1) * d]))
        .collect();
    if let Some(j) = stop_y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("terminal value of path {j}")));
    }
    let grad = terminal_gradient(spec, &stop_states)?;
    let stop_gamma = if full {
        Some(terminal_hessian(spec, &stop_states)?)
    } else {
        None
    };

    let mut y = vec![0.0; (steps + 1) * jn];
    let mut z = vec![0.0; (steps + 1) * jn * d];
    let mut gamma = if full {
        Some(vec![0.0; (steps + 1) * jn * dd])
    } else {
        None
    };
    let fill_stopped =
        |n: usize, y_row: &mut [f64], z_row: &mut [f64], g_row: Option<&mut [f64]>| {
            for j in 0..jn {
                if n >= batch.stop_index(j) {
                    y_row[j] = stop_y[j];
                    z_row[j * d..(j + 1) * d].copy_from_slice(&grad.values[j * d..(j + 1) * d]);
                }
            }
            if let (Some(row), Some(sg)) = (g_row, stop_gamma.as_ref()) {
                for j in 0..jn {
                    if n >= batch.stop_index(j) {
                        row[j * dd..(j + 1) * dd].copy_from_slice(&sg[j * dd..(j + 1) * dd]);
                    }
                }
            }
        };
    {
        let g_row = gamma.as_mut().map(|g| &mut g[steps * jn * dd..]);
        fill_stopped(steps, &mut y[steps * jn..], &mut z[steps * jn * d..], g_row);
    }

    let k = 1 + d + if full { dd } else { 0 };
    let zero_gamma = vec![0.0; dd];
    let mut diagnostics = Vec::with_capacity(steps);

    for n in (1..=steps).rev() {
        let m = n - 1;
        let t = batch.grid.node(m);
        let active: Vec<usize> = (0..jn).filter(|&j| batch.active(j, m)).collect();

        let (done_y, next_y) = y.split_at_mut(n * jn);
        let (done_z, next_z) = z.split_at_mut(n * jn * d);
        let row_y = &mut done_y[m * jn..];
        let row_z = &mut done_z[m * jn * d..];
        let row_g = gamma.as_mut().map(|g| &mut g[m * jn * dd..n * jn * dd]);
        let next_y = &next_y[..jn];
        let next_z = &next_z[..jn * d];

        if active.is_empty() {
            fill_stopped(m, row_y, row_z, row_g);
            continue;
        }

        let rows = active.len();
        let mut states = vec![0.0; rows * d];
        let k1 = if full { 1 + d } else { 1 };
        let mut levels = vec![0.0; rows * k1];
        states
            .par_chunks_mut(d)
            .zip(levels.par_chunks_mut(k1))
            .zip(active.par_iter())
            .for_each(|((s, tg), &j)| {
                s.copy_from_slice(batch.state(j, m));
                tg[0] = next_y[j];
                if full {
                    tg[1..].copy_from_slice(&next_z[j * d..(j + 1) * d]);
                }
            });
        if let Some(r) = levels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "regression target of path {} at step {m}",
                active[r / k1]
            )));
        }
        let level_fit = regress::fit(&states, d, &levels, k1, basis)?;
        let level_pred = level_fit.predict(&states)?;

        // Covariations with the increment use centred targets: subtracting a
        // function of X_{n-1} leaves E[ΔW·Y | X_{n-1}] unchanged and removes
        // most of the variance.
        let k2 = k - 1;
        let mut moments = vec![0.0; rows * k2];
        moments.par_chunks_mut(k2).enumerate().for_each(|(r, tg)| {
            let j = active[r];
            let dw = batch.increment(j, m);
            let lv = &levels[r * k1..(r + 1) * k1];
            let lp = &level_pred[r * k1..(r + 1) * k1];
            let dy = lv[0] - lp[0];
            for i in 0..d {
                tg[i] = dw[i] * dy;
            }
            if full {
                for i in 0..d {
                    let dz = lv[1 + i] - lp[1 + i];
                    for l in 0..d {
                        tg[d + i * d + l] = dz * dw[l];
                    }
                }
            }
        });
        let moment_fit = regress::fit(&states, d, &moments, k2, basis)?;
        let moment_pred = moment_fit.predict(&states)?;
        let mut predicted = vec![0.0; rows * k];
        for r in 0..rows {
            predicted[r * k] = level_pred[r * k1];
            predicted[r * k + 1..(r + 1) * k].copy_from_slice(&moment_pred[r * k2..(r + 1) * k2]);
        }

        let cond_cap = spec.cond_cap();
        let nodes: Vec<Result<NodeValues>> = active
            .par_iter()
            .enumerate()
            .map(|(r, &j)| {
                let x = &states[r * d..(r + 1) * d];
                let p = &predicted[r * k..(r + 1) * k];
                let mut mu = vec![0.0; d];
                let mut sigma = vec![0.0; dd];
                let mut sst = vec![0.0; dd];
                let mut inv = vec![0.0; dd];
                spec.mu(x, &mut mu);
                spec.sigma(x, &mut sigma);
                numeric::outer_self(&sigma, d, &mut sst);
                numeric::invert(&sigma, d, cond_cap, &mut inv)
                    .ok_or(Error::SingularSigma { path: j, step: m })?;

                // Z = (σ')^{-1} E[ΔW Y] / Δ
                let mut zv = vec![0.0; d];
                for i in 0..d {
                    zv[i] = (0..d).map(|l| inv[l * d + i] * p[1 + l]).sum::<f64>() / dt;
                }
                let mut gv = vec![0.0; dd];
                if full {
                    // Γ = E[Z ΔW'] σ^{-1} / Δ, then symmetrized
                    let mut raw = vec![0.0; dd];
                    for i in 0..d {
                        for c in 0..d {
                            raw[i * d + c] = (0..d)
                                .map(|l| p[1 + d + i * d + l] * inv[l * d + c])
                                .sum::<f64>()
                                / dt;
                        }
                    }
                    for i in 0..d {
                        for c in 0..d {
                            gv[i * d + c] = 0.5 * (raw[i * d + c] + raw[c * d + i]);
                        }
                    }
                }
                let g_arg: &[f64] = if full { &gv } else { &zero_gamma };
                let expected = p[0];
                let mut yv = expected;
                let mut prev_change: Option<f64> = None;
                let mut ratio: Option<f64> = None;
                for _ in 0..picard_iters {
                    let args = GenArgs {
                        t,
                        x,
                        y: yv,
                        z: &zv,
                        gamma: g_arg,
                    };
                    let next = expected - spec.phi_with(&args, &mu, &sst) * dt;
                    let change = (next - yv).abs();
                    if let Some(pc) = prev_change {
                        if pc > 0.0 {
                            let q = change / pc;
                            ratio = Some(ratio.map_or(q, |r: f64| r.max(q)));
                        }
                    }
                    prev_change = Some(change);
                    yv = next;
                }
                if !yv.is_finite() || zv.iter().chain(&gv).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "solution of path {j} at step {m}"
                    )));
                }
                Ok(NodeValues {
                    y: yv,
                    z: zv,
                    gamma: gv,
                    picard_ratio: ratio,
                })
            })
            .collect();

        let mut picard_ratio: Option<f64> = None;
        let mut row_g = row_g;
        for (node, &j) in nodes.into_iter().zip(&active) {
            let node = node?;
            row_y[j] = node.y;
            row_z[j * d..(j + 1) * d].copy_from_slice(&node.z);
            if let Some(g) = row_g.as_deref_mut() {
                g[j * dd..(j + 1) * dd].copy_from_slice(&node.gamma);
            }
            if let Some(q) = node.picard_ratio {
                picard_ratio = Some(picard_ratio.map_or(q, |r| r.max(q)));
            }
        }
        fill_stopped(m, row_y, row_z, row_g);
        diagnostics.push(StepDiagnostics {
            step: m,
            active_paths: active.len(),
            fit: level_fit.diagnostics.clone(),
            moment_fit: moment_fit.diagnostics.clone(),
            picard_ratio,
        });
    }
    diagnostics.reverse();

    let root_y = &y[..jn];
    let value = numeric::mean(root_y);
    // At t0 every path sits at x0, so the spread of Y_0 carries no sampling
    // information; the error bar comes from the values one step later.
    let stderr = if jn > 1 {
        numeric::mean_std(&y[jn..2 * jn]).1 / (jn as f64).sqrt()
    } else {
        0.0
    };
    Ok(BackwardSolution {
        grid: batch.grid,
        paths: jn,
        dim: d,
        y,
        z,
        gamma,
        root_value: Estimate {
            value,
            stderr,
            paths: jn,
        },
        steps: diagnostics,
        kinked_terminal: grad.kinked,
    })
}
