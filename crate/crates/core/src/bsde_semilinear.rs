//! Backward scheme for semilinear equations, where the driver
//! `φ = f + μ'z + ½Tr[σσ'γ]` does not depend on `γ`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::{self, BackwardSolution};
use crate::error::{Error, Result};
use crate::model::{GenArgs, ProblemSpec};
use crate::numeric;
use crate::paths::{uniform_open, PathBatch};
use crate::regress::BasisSpec;

/// Tolerance of the `γ`-independence check, relative to the magnitude of
/// the terms that must cancel.
pub const GAMMA_FREE_TOL: f64 = 1e-10;

const GAMMA_PROBES: usize = 64;

/// Largest normalized change of `φ` under random changes of `γ` at states
/// drawn from the batch.
pub fn gamma_dependence(spec: &ProblemSpec, batch: &PathBatch) -> f64 {
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_9a33a);
    let draw = |rng: &mut ChaCha8Rng| (2.0 * uniform_open(rng.next_u64()) - 1.0) * 5.0;
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut sst = vec![0.0; d * d];
    let mut z = vec![0.0; d];
    let mut g1 = vec![0.0; d * d];
    let mut g2 = vec![0.0; d * d];
    let mut worst: f64 = 0.0;
    for probe in 0..GAMMA_PROBES {
        let j = (rng.next_u64() % batch.paths as u64) as usize;
        let n = probe % (batch.steps() + 1);
        let x = batch.state(j, n);
        let t = batch.grid.node(n).min(spec.horizon());
        let y = draw(&mut rng);
        for v in z.iter_mut() {
            *v = draw(&mut rng);
        }
        for r in 0..d {
            for c in r..d {
                let (a, b) = (draw(&mut rng), draw(&mut rng));
                g1[r * d + c] = a;
                g1[c * d + r] = a;
                g2[r * d + c] = b;
                g2[c * d + r] = b;
            }
        }
        spec.mu(x, &mut mu);
        spec.sigma(x, &mut sigma);
        numeric::outer_self(&sigma, d, &mut sst);
        let args = GenArgs {
            t,
            x,
            y,
            z: &z,
            gamma: &g1,
        };
        let p1 = spec.phi_with(&args, &mu, &sst);
        let p2 = spec.phi_with(&GenArgs { gamma: &g2, ..args }, &mu, &sst);
        let scale = 1.0
            + p1.abs()
            + p2.abs()
            + 0.5 * numeric::trace_product(&sst, &g1, d).abs()
            + 0.5 * numeric::trace_product(&sst, &g2, d).abs();
        let gap = (p1 - p2).abs() / scale;
        worst = if gap.is_nan() {
            f64::INFINITY
        } else {
            worst.max(gap)
        };
    }
    worst
}

pub fn backward_solve_semilinear(
    spec: &ProblemSpec,
    batch: &PathBatch,
    basis: &BasisSpec,
    picard_iters: usize,
) -> Result<BackwardSolution> {
    if batch.dim != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: batch.dim,
        });
    }
    let gap = gamma_dependence(spec, batch);
    if !(gap <= GAMMA_FREE_TOL) {
        return Err(Error::GammaDependence { gap });
    }
    backward::solve(spec, batch, basis, picard_iters, false)
}
