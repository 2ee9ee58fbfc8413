//! Backward scheme for fully non-linear equations, producing `Y`, `Z` and
//! the Hessian process `Γ`.

use rayon::prelude::*;

use crate::backward::{self, BackwardSolution};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::paths::PathBatch;
use crate::regress::BasisSpec;

/// `Dg` at each row of `states` (`J×d`), with the rows where a finite
/// difference straddled a kink of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalGradient {
    pub values: Vec<f64>,
    pub kinked: Vec<usize>,
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// `Dg` from the supplied gradient, or central differences with step
/// `1e-5·(1+|x_i|)` per coordinate when none is supplied.
pub fn terminal_gradient(spec: &ProblemSpec, states: &[f64]) -> Result<TerminalGradient> {
    let d = spec.dim();
    if !states.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: states.len(),
        });
    }
    let mut values = vec![0.0; states.len()];
    let kinks: Vec<bool> = values
        .par_chunks_mut(d)
        .zip(states.par_chunks(d))
        .map(|(out, x)| {
            if spec.dg(x, out) {
                return false;
            }
            let mut probe = x.to_vec();
            let gx = spec.g(x);
            let mut kinked = false;
            for i in 0..d {
                let h = fd_step(x[i]);
                probe[i] = x[i] + h;
                let up = spec.g(&probe);
                probe[i] = x[i] - h;
                let down = spec.g(&probe);
                probe[i] = x[i];
                out[i] = (up - down) / (2.0 * h);
                let forward = (up - gx) / h;
                let backward = (gx - down) / h;
                if (forward - backward).abs() > 1e-3 * (1.0 + forward.abs() + backward.abs()) {
                    kinked = true;
                }
            }
            kinked
        })
        .collect();
    if let Some(r) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "terminal gradient of path {}",
            r / d
        )));
    }
    let kinked = kinks
        .iter()
        .enumerate()
        .filter_map(|(j, k)| k.then_some(j))
        .collect();
    Ok(TerminalGradient { values, kinked })
}

/// `D²g` by central differences of the gradient, symmetrized; `J×d×d`.
pub fn terminal_hessian(spec: &ProblemSpec, states: &[f64]) -> Result<Vec<f64>> {
    let d = spec.dim();
    let dd = d * d;
    let mut out = vec![0.0; states.len() / d * dd];
    out.par_chunks_mut(dd)
        .zip(states.par_chunks(d))
        .for_each(|(hess, x)| {
            let mut probe = x.to_vec();
            let mut up = vec![0.0; d];
            let mut down = vec![0.0; d];
            let gradient = |p: &[f64], out: &mut [f64]| {
                if !spec.dg(p, out) {
                    let mut q = p.to_vec();
                    for i in 0..d {
                        let h = fd_step(p[i]);
                        q[i] = p[i] + h;
                        let a = spec.g(&q);
                        q[i] = p[i] - h;
                        let b = spec.g(&q);
                        q[i] = p[i];
                        out[i] = (a - b) / (2.0 * h);
                    }
                }
            };
            for c in 0..d {
                // A wider step keeps the nested difference above rounding noise.
                let h = 1e-3 * (1.0 + x[c].abs());
                probe[c] = x[c] + h;
                gradient(&probe, &mut up);
                probe[c] = x[c] - h;
                gradient(&probe, &mut down);
                probe[c] = x[c];
                for r in 0..d {
                    hess[r * d + c] = (up[r] - down[r]) / (2.0 * h);
                }
            }
            for r in 0..d {
                for c in r + 1..d {
                    let s = 0.5 * (hess[r * d + c] + hess[c * d + r]);
                    hess[r * d + c] = s;
                    hess[c * d + r] = s;
                }
            }
        });
    if let Some(r) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "terminal Hessian of path {}",
            r / dd
        )));
    }
    Ok(out)
}

pub fn backward_solve_2bsde(
    spec: &ProblemSpec,
    batch: &PathBatch,
    basis: &BasisSpec,
    picard_iters: usize,
) -> Result<BackwardSolution> {
    backward::solve(spec, batch, basis, picard_iters, true)
}
