//! Hamilton–Jacobi–Bellman generators built from control-problem data, and
//! extraction of the feedback control from a `(Y, Z, Γ)` solution.
//!
//! For a control set `U ⊂ R^k` the Hamiltonian is
//!
//! ```text
//! H(t, x, y, z, γ; u) = α(t,x,u) + β(t,x,u)·y + b(t,x,u)'z − ½ Tr[a a'(t,x,u) γ]
//! ```
//!
//! and the generator is `f = sup_u H` ([`Sense::Sup`]) or `f = inf_u H`
//! ([`Sense::Inf`]), taken over a uniform grid of `U` that includes the box
//! corners. Ties go to the first grid point in lexicographic order.

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward::BackwardSolution;
use crate::error::{Error, Result};
use crate::model::{GenArgs, GeneratorFn};
use crate::numeric;
use crate::paths::{uniform_open, PathBatch};

pub type ControlScalarFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type ControlFieldFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Default grid resolution per control dimension.
pub const DEFAULT_RESOLUTION: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `f = sup_u H`.
    #[default]
    Sup,
    /// `f = inf_u H`; the generator of `v = sup_ν E[...]` written with the
    /// Hamiltonian sign convention above.
    Inf,
}

#[derive(Clone)]
pub struct ControlProblem {
    state_dim: usize,
    control_dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: usize,
    sense: Sense,
    alpha: ControlScalarFn,
    beta: ControlScalarFn,
    b: ControlFieldFn,
    a: ControlFieldFn,
    /// `K^k` points, `k` values each, lexicographic.
    grid: Vec<f64>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("resolution", &self.resolution)
            .field("sense", &self.sense)
            .finish()
    }
}

fn zero_scalar() -> ControlScalarFn {
    Arc::new(|_t: f64, _x: &[f64], _u: &[f64]| 0.0)
}

fn zero_field() -> ControlFieldFn {
    Arc::new(|_t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]| out.fill(0.0))
}

impl ControlProblem {
    /// A problem with `α = β = 0`, `b = 0` and `a = 0`; set the coefficients
    /// with the `with_*` methods.
    pub fn new(
        state_dim: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        resolution: usize,
    ) -> Result<Self> {
        let k = lower.len();
        if state_dim == 0 || k == 0 || upper.len() != k {
            return Err(Error::InvalidSpec(
                "control problem needs d >= 1 and matching bounds of length k >= 1".into(),
            ));
        }
        if resolution == 0 {
            return Err(Error::InvalidSpec(
                "control grid resolution must be >= 1".into(),
            ));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidSpec(
                    "control set must be a bounded box with lower <= upper".into(),
                ));
            }
        }
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(&upper)
            .map(|(&lo, &hi)| grid_axis(lo, hi, resolution))
            .collect();
        let count = resolution.pow(k as u32);
        let mut grid = Vec::with_capacity(count * k);
        for idx in 0..count {
            let mut rem = idx;
            let mut point = vec![0.0; k];
            for dim in (0..k).rev() {
                point[dim] = axes[dim][rem % resolution];
                rem /= resolution;
            }
            grid.extend_from_slice(&point);
        }
        Ok(ControlProblem {
            state_dim,
            control_dim: k,
            lower,
            upper,
            resolution,
            sense: Sense::Sup,
            alpha: zero_scalar(),
            beta: zero_scalar(),
            b: zero_field(),
            a: zero_field(),
            grid,
        })
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn with_alpha(
        mut self,
        alpha: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.alpha = Arc::new(alpha);
        self
    }

    pub fn with_beta(
        mut self,
        beta: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.beta = Arc::new(beta);
        self
    }

    /// Drift `b(t, x, u)`, length `d`.
    pub fn with_b(
        mut self,
        b: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.b = Arc::new(b);
        self
    }

    /// Volatility `a(t, x, u)`, row-major `d×d`.
    pub fn with_a(
        mut self,
        a: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.a = Arc::new(a);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len() / self.control_dim
    }

    pub fn grid_point(&self, index: usize) -> &[f64] {
        let k = self.control_dim;
        &self.grid[index * k..(index + 1) * k]
    }

    /// `H(t, x, y, z, γ; u)`.
    pub fn hamiltonian(&self, args: &GenArgs<'_>, u: &[f64]) -> f64 {
        let d = self.state_dim;
        let mut b = [0.0f64; 8];
        let mut a = [0.0f64; 64];
        let mut aat = [0.0f64; 64];
        if d <= 8 {
            self.hamiltonian_with(args, u, &mut b[..d], &mut a[..d * d], &mut aat[..d * d])
        } else {
            let mut b = vec![0.0; d];
            let mut a = vec![0.0; d * d];
            let mut aat = vec![0.0; d * d];
            self.hamiltonian_with(args, u, &mut b, &mut a, &mut aat)
        }
    }

    fn hamiltonian_with(
        &self,
        args: &GenArgs<'_>,
        u: &[f64],
        b: &mut [f64],
        a: &mut [f64],
        aat: &mut [f64],
    ) -> f64 {
        let d = self.state_dim;
        (self.b)(args.t, args.x, u, b);
        (self.a)(args.t, args.x, u, a);
        numeric::outer_self(a, d, aat);
        let bz: f64 = b.iter().zip(args.z).map(|(p, q)| p * q).sum();
        (self.alpha)(args.t, args.x, u) + (self.beta)(args.t, args.x, u) * args.y + bz
            - 0.5 * numeric::trace_product(aat, args.gamma, d)
    }

    /// Optimal value over the grid and the first grid index attaining it.
    pub fn optimize(&self, args: &GenArgs<'_>) -> (f64, usize) {
        let mut best = f64::NAN;
        let mut best_idx = 0;
        for idx in 0..self.grid_len() {
            let h = self.hamiltonian(args, self.grid_point(idx));
            let better = match self.sense {
                Sense::Sup => h > best,
                Sense::Inf => h < best,
            };
            if idx == 0 || better {
                best = h;
                best_idx = idx;
            }
        }
        (best, best_idx)
    }

    /// Largest sampled `β(t, x, u)` over random `(t, x)` in
    /// `[0, horizon) × [-half_width, half_width]^d` and every grid control.
    pub fn max_beta(&self, horizon: f64, half_width: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.state_dim];
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..samples {
            let t = uniform_open(rng.next_u64()) * horizon;
            for v in x.iter_mut() {
                *v = (2.0 * uniform_open(rng.next_u64()) - 1.0) * half_width;
            }
            for idx in 0..self.grid_len() {
                worst = worst.max((self.beta)(t, &x, self.grid_point(idx)));
            }
        }
        worst
    }

    /// Sampling check of `β <= 0`.
    pub fn check_beta_nonpositive(&self, horizon: f64, samples: usize, seed: u64) -> Result<()> {
        let worst = self.max_beta(horizon, 5.0, samples, seed);
        if worst > 0.0 {
            return Err(Error::InvalidSpec(format!(
                "beta must be <= 0 (sampled max {worst})"
            )));
        }
        Ok(())
    }
}

fn grid_axis(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![(lo + hi) / 2.0];
    }
    let span = hi - lo;
    let last = (resolution - 1) as f64;
    (0..resolution)
        .map(|m| {
            if m + 1 == resolution {
                hi
            } else {
                lo + span * m as f64 / last
            }
        })
        .collect()
}

/// The generator `f(t, x, y, z, γ)` obtained by optimizing the Hamiltonian
/// over the control grid.
pub fn hjb_generator(cp: Arc<ControlProblem>) -> GeneratorFn {
    Arc::new(move |args: &GenArgs<'_>| cp.optimize(args).0)
}

/// Feedback controls `û(t_n, X_n, Y_n, Z_n, Γ_n)` for every node and path.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    pub steps: usize,
    pub paths: usize,
    pub control_dim: usize,
    /// `[n][j][k]`, `n = 0..=N`.
    pub values: Vec<f64>,
}

impl ControlField {
    pub fn control(&self, step: usize, path: usize) -> &[f64] {
        let k = self.control_dim;
        let at = (step * self.paths + path) * k;
        &self.values[at..at + k]
    }
}

pub fn extract_control(
    cp: &ControlProblem,
    solution: &BackwardSolution,
    batch: &PathBatch,
) -> Result<ControlField> {
    if !solution.has_gamma() {
        return Err(Error::MissingGamma);
    }
    if batch.dim != cp.state_dim || solution.dim != cp.state_dim {
        return Err(Error::DimensionMismatch {
            expected: cp.state_dim,
            got: batch.dim,
        });
    }
    if batch.paths != solution.paths || batch.steps() != solution.grid.steps {
        return Err(Error::InvalidSpec(
            "solution and path batch do not match".into(),
        ));
    }
    let steps = batch.steps();
    let paths = batch.paths;
    let k = cp.control_dim;
    let mut values = vec![0.0; (steps + 1) * paths * k];
    values
        .par_chunks_mut(paths * k)
        .enumerate()
        .for_each(|(n, chunk)| {
            let t = batch.grid.node(n);
            for j in 0..paths {
                let args = GenArgs {
                    t,
                    x: batch.state(j, n),
                    y: solution.y(n, j),
                    z: solution.z(n, j),
                    gamma: solution.gamma(n, j).expect("gamma present"),
                };
                let (_, idx) = cp.optimize(&args);
                chunk[j * k..(j + 1) * k].copy_from_slice(cp.grid_point(idx));
            }
        });
    Ok(ControlField {
        steps,
        paths,
        control_dim: k,
        values,
    })
}
