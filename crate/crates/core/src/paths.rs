//! Brownian increments and Euler–Maruyama simulation of the forward SDE
//! `dX = μ(X) dt + σ(X) dW`, with optional stopping on leaving a box.
//!
//! Increments come from a counter-based stream: path `j` owns ChaCha8
//! stream `j` under the run seed, and the normal for `(step n, component i)`
//! is the inverse-CDF image of 64-bit word `n·d + i` of that stream. Any
//! increment can therefore be regenerated in isolation, and batches are
//! bit-identical for any thread count.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Domain, ProblemSpec};

/// Uniform on the open interval (0, 1) from the top 53 bits of `u`.
#[inline]
pub fn uniform_open(u: u64) -> f64 {
    ((u >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile.
#[inline]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Uniform grid `t_n = t0 + n (T - t0) / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSpec("number of steps must be >= 1".into()));
        }
        if !(horizon > t0) || !t0.is_finite() || !horizon.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "time grid needs t0 < T (got t0 = {t0}, T = {horizon})"
            )));
        }
        Ok(TimeGrid { t0, horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.steps as f64
    }

    pub fn node(&self, n: usize) -> f64 {
        self.t0 + n as f64 * (self.horizon - self.t0) / self.steps as f64
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// The single increment `ΔW` for `(path, step, component)`.
pub fn increment_at(
    seed: u64,
    path: usize,
    step: usize,
    component: usize,
    dim: usize,
    dt: f64,
) -> f64 {
    let mut rng = path_rng(seed, path);
    rng.set_word_pos(2 * (step * dim + component) as u128);
    dt.sqrt() * inverse_normal_cdf(uniform_open(rng.next_u64()))
}

fn fill_path_increments(seed: u64, path: usize, sqrt_dt: f64, out: &mut [f64]) {
    let mut rng = path_rng(seed, path);
    for v in out.iter_mut() {
        *v = sqrt_dt * inverse_normal_cdf(uniform_open(rng.next_u64()));
    }
}

/// Brownian increments laid out path-major: `[j][n][i]`, `J·N·d` values.
pub fn brownian_increments(grid: &TimeGrid, paths: usize, dim: usize, seed: u64) -> Vec<f64> {
    let per_path = grid.steps * dim;
    let mut dw = vec![0.0; paths * per_path];
    let sqrt_dt = grid.dt().sqrt();
    if per_path > 0 {
        dw.par_chunks_mut(per_path)
            .enumerate()
            .for_each(|(j, chunk)| fill_path_increments(seed, j, sqrt_dt, chunk));
    }
    dw
}

/// Simulated paths. Storage is path-major: `x[(j·(N+1) + n)·d + i]` and
/// `dw[(j·N + n)·d + i]`, where `dw` at step `n` spans `[t_n, t_{n+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub dw: Vec<f64>,
    pub x: Vec<f64>,
    /// First node outside the domain, if the path left it.
    pub exit_step: Vec<Option<usize>>,
}

impl PathBatch {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let d = self.dim;
        let at = (path * (self.grid.steps + 1) + step) * d;
        &self.x[at..at + d]
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let d = self.dim;
        let at = (path * self.grid.steps + step) * d;
        &self.dw[at..at + d]
    }

    /// Stop index of a path: its exit step, or `N` if it never left.
    pub fn stop_index(&self, path: usize) -> usize {
        self.exit_step[path].unwrap_or(self.grid.steps)
    }

    /// Whether the path is still inside the domain at `step`.
    pub fn active(&self, path: usize, step: usize) -> bool {
        self.exit_step[path].is_none_or(|e| step < e)
    }

    /// States at node `n` for all paths, `J×d` row-major.
    pub fn cross_section(&self, step: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths * self.dim);
        for j in 0..self.paths {
            out.extend_from_slice(self.state(j, step));
        }
        out
    }

    /// Increments over `[t_n, t_{n+1}]` for all paths, `J×d` row-major.
    pub fn increment_section(&self, step: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths * self.dim);
        for j in 0..self.paths {
            out.extend_from_slice(self.increment(j, step));
        }
        out
    }

    /// FNV-1a over every stored bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in self.dw.iter().chain(&self.x) {
            eat(v.to_bits().to_le_bytes());
        }
        for e in &self.exit_step {
            eat(e.map_or(u64::MAX, |s| s as u64).to_le_bytes());
        }
        h
    }

    const MAGIC: &'static [u8; 8] = b"PRBPATH1";

    /// Little-endian dump: magic, `{seed, J, N, d}` as u64, `{t0, T}` as
    /// f64, then `dw`, `x`, and one u64 exit step per path (`u64::MAX` for
    /// none).
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        for v in [
            self.seed,
            self.paths as u64,
            self.grid.steps as u64,
            self.dim as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.grid.t0.to_le_bytes())?;
        w.write_all(&self.grid.horizon.to_le_bytes())?;
        let mut buf = Vec::with_capacity((self.dw.len() + self.x.len() + self.paths) * 8);
        for v in self.dw.iter().chain(&self.x) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.exit_step {
            buf.extend_from_slice(&e.map_or(u64::MAX, |s| s as u64).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::InvalidConfig("not a path batch dump".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let paths = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let t0 = f64::from_le_bytes(next(&mut r)?);
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let grid = TimeGrid::new(t0, horizon, steps)?;
        let n_dw = paths * steps * dim;
        let n_x = paths * (steps + 1) * dim;
        let mut raw = vec![0u8; (n_dw + n_x + paths) * 8];
        r.read_exact(&mut raw)?;
        let mut words = raw.chunks_exact(8).map(|c| {
            let mut b = [0u8; 8];
            b.copy_from_slice(c);
            b
        });
        let dw = words.by_ref().take(n_dw).map(f64::from_le_bytes).collect();
        let x = words.by_ref().take(n_x).map(f64::from_le_bytes).collect();
        let exit_step = words
            .map(|b| match u64::from_le_bytes(b) {
                u64::MAX => None,
                s => Some(s as usize),
            })
            .collect();
        Ok(PathBatch {
            grid,
            paths,
            dim,
            seed,
            dw,
            x,
            exit_step,
        })
    }
}

/// Euler–Maruyama paths from `x0` on `grid`, stopped at the first node
/// outside the open box when the problem has a box domain.
pub fn euler_simulate(
    spec: &ProblemSpec,
    grid: &TimeGrid,
    x0: &[f64],
    paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    let d = spec.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    if paths == 0 {
        return Err(Error::InvalidSpec("number of paths must be >= 1".into()));
    }
    let steps = grid.steps;
    let dt = grid.dt();
    let dw = brownian_increments(grid, paths, d, seed);
    let mut x = vec![0.0; paths * (steps + 1) * d];
    let mut exit_step = vec![None; paths];
    let domain = spec.domain();

    let failures: Vec<Option<usize>> = x
        .par_chunks_mut((steps + 1) * d)
        .zip(dw.par_chunks(steps * d))
        .zip(exit_step.par_iter_mut())
        .map(|((xs, dws), exit)| {
            let mut mu = vec![0.0; d];
            let mut sigma = vec![0.0; d * d];
            xs[..d].copy_from_slice(x0);
            if !domain.contains(x0) {
                *exit = Some(0);
            }
            for n in 0..steps {
                let (done, rest) = xs.split_at_mut((n + 1) * d);
                let cur = &done[n * d..];
                let next = &mut rest[..d];
                if exit.is_some() {
                    next.copy_from_slice(cur);
                    continue;
                }
                spec.mu(cur, &mut mu);
                spec.sigma(cur, &mut sigma);
                let inc = &dws[n * d..(n + 1) * d];
                for i in 0..d {
                    let diffusion: f64 = (0..d).map(|k| sigma[i * d + k] * inc[k]).sum();
                    next[i] = cur[i] + mu[i] * dt + diffusion;
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Some(n + 1);
                }
                if !matches!(domain, Domain::WholeSpace) && !domain.contains(next) {
                    *exit = Some(n + 1);
                }
            }
            None
        })
        .collect();
    if let Some((j, step)) = failures
        .iter()
        .enumerate()
        .find_map(|(j, f)| f.map(|s| (j, s)))
    {
        return Err(Error::NonFinite(format!(
            "state of path {j} at step {step}"
        )));
    }
    Ok(PathBatch {
        grid: *grid,
        paths,
        dim: d,
        seed,
        dw,
        x,
        exit_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub fraction_stopped: f64,
    /// Mean of `min(θ, T)` over all paths.
    pub mean_stop_time: f64,
}

pub fn exit_time_stats(spec: &ProblemSpec, batch: &PathBatch) -> Result<ExitStats> {
    if matches!(spec.domain(), Domain::WholeSpace) {
        return Err(Error::DomainIsWholeSpace);
    }
    let stopped = batch.exit_step.iter().filter(|e| e.is_some()).count();
    let times: Vec<f64> = (0..batch.paths)
        .map(|j| batch.grid.node(batch.stop_index(j)))
        .collect();
    Ok(ExitStats {
        fraction_stopped: stopped as f64 / batch.paths as f64,
        mean_stop_time: crate::numeric::mean(&times),
    })
}

/// Mean of `|X_T - x0·exp((μ - σ²/2)T + σW_T)|` over a one-dimensional batch
/// simulated from `dX = μX dt + σX dW`, with `W_T` summed from the batch's
/// own increments.
pub fn gbm_strong_error(batch: &PathBatch, x0: f64, mu: f64, sigma: f64) -> Result<f64> {
    if batch.dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: batch.dim,
        });
    }
    let n = batch.steps();
    let elapsed = batch.grid.horizon - batch.grid.t0;
    let errors: Vec<f64> = (0..batch.paths)
        .into_par_iter()
        .map(|j| {
            let w: f64 = (0..n).map(|k| batch.increment(j, k)[0]).sum();
            let exact = x0 * ((mu - 0.5 * sigma * sigma) * elapsed + sigma * w).exp();
            (batch.state(j, n)[0] - exact).abs()
        })
        .collect();
    Ok(crate::numeric::mean(&errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_spec(mu: f64, sigma: f64) -> ProblemSpec {
        ProblemSpec::builder("const", 1)
            .drift(move |_x, out| out[0] = mu)
            .diffusion(move |_x, out| out[0] = sigma)
            .generator(|_| 0.0)
            .terminal(|_| 0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn increments_are_deterministic_and_addressable() {
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let a = brownian_increments(&grid, 3, 2, 42);
        let b = brownian_increments(&grid, 3, 2, 42);
        assert_eq!(a, b);
        for j in 0..3 {
            for n in 0..5 {
                for i in 0..2 {
                    let v = increment_at(42, j, n, i, 2, grid.dt());
                    assert_eq!(v.to_bits(), a[(j * 5 + n) * 2 + i].to_bits());
                }
            }
        }
        assert_ne!(a, brownian_increments(&grid, 3, 2, 43));
    }

    #[test]
    fn unit_variance_over_many_draws() {
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let dw = brownian_increments(&grid, 100_000, 1, 9);
        let (m, s) = crate::numeric::mean_std(&dw);
        assert!(m.abs() < 5.0 * (1.0f64 / 1e5).sqrt());
        let var = s * s;
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let spec = constant_spec(0.0, 0.0);
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let b = euler_simulate(&spec, &grid, &[7.0], 4, 1).unwrap();
        assert!(b.x.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn constant_drift_is_exact() {
        let spec = constant_spec(1.0, 0.0);
        for n in [1, 3, 16] {
            let grid = TimeGrid::new(0.0, 2.0, n).unwrap();
            let b = euler_simulate(&spec, &grid, &[0.5], 2, 1).unwrap();
            assert!((b.state(1, n)[0] - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn freezing_after_exit() {
        let spec = constant_spec(0.0, 1.0)
            .with_domain(Domain::Box {
                lower: vec![-0.5],
                upper: vec![0.5],
            })
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let b = euler_simulate(&spec, &grid, &[0.0], 200, 3).unwrap();
        let mut saw_exit = false;
        for j in 0..b.paths {
            if let Some(e) = b.exit_step[j] {
                saw_exit = true;
                assert!(!spec.domain().contains(b.state(j, e)));
                for n in e..=64 {
                    assert_eq!(b.state(j, n), b.state(j, e));
                }
            }
        }
        assert!(saw_exit);
    }

    #[test]
    fn exit_stats_edge_cases() {
        let grid = TimeGrid::new(0.25, 1.0, 16).unwrap();
        let wide = constant_spec(0.0, 1.0)
            .with_domain(Domain::Box {
                lower: vec![-1e12],
                upper: vec![1e12],
            })
            .unwrap();
        let b = euler_simulate(&wide, &grid, &[0.0], 100, 1).unwrap();
        let s = exit_time_stats(&wide, &b).unwrap();
        assert_eq!(s.fraction_stopped, 0.0);

        let outside = euler_simulate(&wide, &grid, &[2e12], 50, 1).unwrap();
        let s = exit_time_stats(&wide, &outside).unwrap();
        assert_eq!(s.fraction_stopped, 1.0);
        assert_eq!(s.mean_stop_time, 0.25);

        let free = constant_spec(0.0, 1.0);
        let b = euler_simulate(&free, &grid, &[0.0], 10, 1).unwrap();
        assert_eq!(exit_time_stats(&free, &b), Err(Error::DomainIsWholeSpace));
    }

    #[test]
    fn non_finite_state_aborts() {
        let spec = ProblemSpec::builder("blowup", 1)
            .drift(|x, out| out[0] = 1.0 / (x[0] - x[0]))
            .generator(|_| 0.0)
            .terminal(|_| 0.0)
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            euler_simulate(&spec, &grid, &[1.0], 3, 0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn binary_dump_round_trip() {
        let spec = constant_spec(0.1, 0.3);
        let grid = TimeGrid::new(0.0, 1.0, 6).unwrap();
        let b = euler_simulate(&spec, &grid, &[1.0], 5, 77).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 8 + (5 * 6 + 5 * 7 + 5) * 8);
        let back = PathBatch::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, b);
        assert!(PathBatch::read_from(&b"garbage!"[..]).is_err());
    }
}
