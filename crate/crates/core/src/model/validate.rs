use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenArgs, GrowthParams, ProblemSpec};
use crate::error::{Error, Result};
use crate::numeric;
use crate::paths::{inverse_normal_cdf, uniform_open};

/// Sampling region for the spot checks: `x`, `y`, `z` and the entries of
/// `γ` are drawn uniformly from `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub half_width: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        SamplingBox { half_width: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub metric: f64,
    pub threshold: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub growth_exponent: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn uniform(&mut self, half_width: f64) -> f64 {
        (2.0 * uniform_open(self.rng.next_u64()) - 1.0) * half_width
    }

    fn normal(&mut self) -> f64 {
        inverse_normal_cdf(uniform_open(self.rng.next_u64()))
    }
}

pub fn validate_assumptions(
    spec: &ProblemSpec,
    params: &GrowthParams,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    validate_assumptions_with(spec, params, samples, seed, &SamplingBox::default())
}

/// Monte Carlo spot checks of the coefficient conditions at `samples`
/// deterministic pseudo-random points.
pub fn validate_assumptions_with(
    spec: &ProblemSpec,
    params: &GrowthParams,
    samples: usize,
    seed: u64,
    region: &SamplingBox,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidSpec("samples must be >= 1".into()));
    }
    params.validate()?;
    let d = spec.dim();
    let h = region.half_width;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut gamma = vec![0.0; d * d];
    let mut gamma_shift = vec![0.0; d * d];
    let mut m = vec![0.0; d * d];
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];

    let mut worst_cond: f64 = 1.0;
    let mut lhat: f64 = 0.0;
    let mut fhat: f64 = 0.0;
    let mut ghat: f64 = 0.0;
    let mut lip_y: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    let mut first_a4_failure: Option<usize> = None;

    let check = |v: f64, what: &str, i: usize| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("{what} at sample {i}")))
        }
    };

    for i in 0..samples {
        let t = uniform_open(s.rng.next_u64()) * spec.horizon();
        for v in x.iter_mut() {
            *v = s.uniform(h);
        }
        for v in z.iter_mut() {
            *v = s.uniform(h);
        }
        let y = s.uniform(h);
        let y2 = s.uniform(h);
        for r in 0..d {
            for c in r..d {
                let v = s.uniform(h);
                gamma[r * d + c] = v;
                gamma[c * d + r] = v;
            }
        }
        for v in m.iter_mut() {
            *v = s.normal();
        }
        // β = M·M' is positive semi-definite
        for r in 0..d {
            for c in 0..d {
                let beta: f64 = (0..d).map(|k| m[r * d + k] * m[c * d + k]).sum();
                gamma_shift[r * d + c] = gamma[r * d + c] + beta;
            }
        }

        spec.mu(&x, &mut mu);
        spec.sigma(&x, &mut sigma);
        numeric::ensure_finite(&mu, || format!("mu at sample {i}"))?;
        numeric::ensure_finite(&sigma, || format!("sigma at sample {i}"))?;
        let cond = if d == 1 {
            if sigma[0] == 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            numeric::condition_number(&nalgebra::DMatrix::from_row_slice(d, d, &sigma))
        };
        if !(cond < 1.0 / f64::EPSILON) {
            return Err(Error::SingularSigma { path: i, step: 0 });
        }
        worst_cond = worst_cond.max(cond);

        let xn = numeric::euclidean_norm(&x);
        let mu_sigma = numeric::euclidean_norm(&mu) + numeric::operator_norm(&sigma, d);
        lhat = lhat.max(mu_sigma / (1.0 + xn.powf(params.p1)));

        let args = GenArgs {
            t,
            x: &x,
            y,
            z: &z,
            gamma: &gamma,
        };
        let f0 = check(spec.f(&args), "f", i)?;
        let f_y2 = check(spec.f(&GenArgs { y: y2, ..args }), "f", i)?;
        let f_shift = check(
            spec.f(&GenArgs {
                gamma: &gamma_shift,
                ..args
            }),
            "f",
            i,
        )?;
        let gx = check(spec.g(&x), "g", i)?;

        if y != y2 {
            lip_y = lip_y.max((f0 - f_y2).abs() / (y - y2).abs());
        }

        let zn = numeric::euclidean_norm(&z);
        let gn = numeric::operator_norm(&gamma, d);
        let p2 = params.p2;
        let bound = 1.0 + xn.powf(p2) + y.abs() + zn.powf(p2) + gn.powf(p2);
        fhat = fhat.max(f0.abs() / bound);
        ghat = ghat.max(gx.abs() / (1.0 + xn.powf(params.p3)));

        let margin = (f0 - f_shift) / (1.0 + f0.abs() + f_shift.abs());
        if margin < -1e-12 && first_a4_failure.is_none() {
            first_a4_failure = Some(i);
        }
        min_margin = min_margin.min(margin);
    }

    let tol = 1.0 + 1e-12;
    let cap = spec.cond_cap();
    let checks = vec![
        AssumptionCheck {
            name: "sigma_invertible".into(),
            metric: worst_cond,
            threshold: Some(cap),
            pass: worst_cond <= cap,
            detail: "largest condition number of sigma(x)".into(),
        },
        AssumptionCheck {
            name: "growth_mu_sigma".into(),
            metric: lhat,
            threshold: Some(params.l),
            pass: lhat <= params.l * tol,
            detail: "max (|mu|+|sigma|)/(1+|x|^p1)".into(),
        },
        AssumptionCheck {
            name: "a1_y_lipschitz".into(),
            metric: lip_y,
            threshold: None,
            pass: lip_y.is_finite(),
            detail: "empirical y-Lipschitz constant of f on the sampling box".into(),
        },
        AssumptionCheck {
            name: "a2_generator_growth".into(),
            metric: fhat,
            threshold: Some(params.f),
            pass: fhat <= params.f * tol,
            detail: "max |f|/(1+|x|^p2+|y|+|z|^p2+|gamma|^p2)".into(),
        },
        AssumptionCheck {
            name: "a3_terminal_growth".into(),
            metric: ghat,
            threshold: Some(params.g),
            pass: ghat <= params.g * tol,
            detail: "max |g|/(1+|x|^p3)".into(),
        },
        AssumptionCheck {
            name: "a4_monotone_gamma".into(),
            metric: min_margin,
            threshold: Some(-1e-12),
            pass: first_a4_failure.is_none(),
            detail: match first_a4_failure {
                Some(i) => format!("f(gamma) < f(gamma+beta) first at sample {i}"),
                None => "min normalized f(gamma)-f(gamma+beta) over PSD beta".into(),
            },
        },
    ];
    Ok(ValidationReport {
        samples,
        seed,
        growth_exponent: params.exponent(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog_get;

    #[test]
    fn heat_passes_all_checks() {
        let spec = catalog_get("heat").unwrap();
        let r = validate_assumptions(&spec, spec.growth(), 2000, 7).unwrap();
        assert!(r.all_pass(), "{r:#?}");
        assert!(r.check("a4_monotone_gamma").unwrap().metric >= 0.0);
    }

    #[test]
    fn sign_flipped_heat_fails_a4_immediately() {
        let spec = catalog_get("heat")
            .unwrap()
            .with_generator(std::sync::Arc::new(|a: &GenArgs<'_>| 0.5 * a.gamma[0]));
        let r = validate_assumptions(&spec, spec.growth(), 100, 1).unwrap();
        let a4 = r.check("a4_monotone_gamma").unwrap();
        assert!(!a4.pass);
        assert!(a4.detail.contains("sample 0"), "{}", a4.detail);
    }

    #[test]
    fn uncertain_vol_passes_a4_on_many_samples() {
        let spec = catalog_get("bsb_uncertain_vol").unwrap();
        let r = validate_assumptions(&spec, spec.growth(), 10_000, 3).unwrap();
        assert!(r.check("a4_monotone_gamma").unwrap().pass);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = catalog_get("gbm_linear").unwrap();
        let a = validate_assumptions(&spec, spec.growth(), 500, 11).unwrap();
        let b = validate_assumptions(&spec, spec.growth(), 500, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_and_singular_are_errors() {
        let spec = catalog_get("heat")
            .unwrap()
            .with_generator(std::sync::Arc::new(|_: &GenArgs<'_>| f64::NAN));
        assert!(matches!(
            validate_assumptions(&spec, spec.growth(), 10, 0),
            Err(Error::NonFinite(_))
        ));
        let singular = ProblemSpec::builder("s", 2)
            .diffusion(|_x, out| out.copy_from_slice(&[1.0, 1.0, 1.0, 1.0]))
            .generator(|_| 0.0)
            .terminal(|_| 0.0)
            .build()
            .unwrap();
        assert!(matches!(
            validate_assumptions(&singular, singular.growth(), 10, 0),
            Err(Error::SingularSigma { .. })
        ));
        assert!(validate_assumptions(&singular, singular.growth(), 0, 0).is_err());
    }
}
