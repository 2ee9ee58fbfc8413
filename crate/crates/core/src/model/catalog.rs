use std::f64::consts::PI;
use std::sync::Arc;

use super::{AnalyticSolution, Domain, GrowthParams, ProblemSpec};
use crate::error::{Error, Result};
use crate::hjb::{hjb_generator, ControlProblem, Sense};
use crate::linear_fk::LinearCoefficients;

/// Names accepted by [`catalog_get`].
pub const CATALOG: [&str; 7] = [
    "heat",
    "discount_bond",
    "gbm_linear",
    "semilinear_exp",
    "bsb_uncertain_vol",
    "hjb_uncertain_vol",
    "boundary_heat",
];

const BOND_RATE: f64 = 0.05;
const GBM_RATE: f64 = 0.05;
const GBM_VOL: f64 = 0.2;
const VOL_LOW: f64 = 0.1;
const VOL_HIGH: f64 = 0.2;
const REFERENCE_VOL: f64 = 0.15;

/// Reference problem with horizon 1.
pub fn catalog_get(name: &str) -> Result<ProblemSpec> {
    catalog_get_with_horizon(name, 1.0)
}

pub fn catalog_get_with_horizon(name: &str, horizon: f64) -> Result<ProblemSpec> {
    let t_end = horizon;
    let builder = ProblemSpec::builder(name, 1).horizon(horizon);
    let spec = match name {
        "heat" => builder
            .generator(|a| -0.5 * a.gamma[0])
            .terminal(|x| x[0] * x[0])
            .terminal_gradient(|x, out| out[0] = 2.0 * x[0])
            .analytic(analytic(
                move |t, x| x * x + (t_end - t),
                |_t, x| 2.0 * x,
                |_t, _x| 2.0,
                |_t, _x| -1.0,
            ))
            .growth(GrowthParams {
                p1: 0.0,
                p2: 1.0,
                ..GrowthParams::default()
            })
            .linear(LinearCoefficients::constant(0.0, 0.0)),
        "discount_bond" => {
            let r = BOND_RATE;
            builder
                .generator(move |a| r * a.y)
                .terminal(|_| 1.0)
                .terminal_gradient(|_, out| out[0] = 0.0)
                .analytic(analytic(
                    move |t, _x| (-r * (t_end - t)).exp(),
                    |_t, _x| 0.0,
                    |_t, _x| 0.0,
                    move |t, _x| r * (-r * (t_end - t)).exp(),
                ))
                .linear(LinearCoefficients::constant(0.0, -r))
        }
        "gbm_linear" => {
            let (r, s) = (GBM_RATE, GBM_VOL);
            let c = r + s * s;
            builder
                .drift(move |x, out| out[0] = r * x[0])
                .diffusion(move |x, out| out[0] = s * x[0])
                .generator(move |a| {
                    let x = a.x[0];
                    r * a.y - r * x * a.z[0] - 0.5 * s * s * x * x * a.gamma[0]
                })
                .terminal(|x| x[0] * x[0])
                .terminal_gradient(|x, out| out[0] = 2.0 * x[0])
                .analytic(analytic(
                    move |t, x| x * x * (c * (t_end - t)).exp(),
                    move |t, x| 2.0 * x * (c * (t_end - t)).exp(),
                    move |t, _x| 2.0 * (c * (t_end - t)).exp(),
                    move |t, x| -c * x * x * (c * (t_end - t)).exp(),
                ))
                .linear(LinearCoefficients::constant(0.0, -r))
        }
        "semilinear_exp" => builder
            .generator(|a| -a.y - 0.5 * a.gamma[0])
            .terminal(|_| 1.0)
            .terminal_gradient(|_, out| out[0] = 0.0)
            .analytic(analytic(
                move |t, _x| (t_end - t).exp(),
                |_t, _x| 0.0,
                |_t, _x| 0.0,
                move |t, _x| -(t_end - t).exp(),
            ))
            .linear(LinearCoefficients::constant(0.0, 1.0)),
        "bsb_uncertain_vol" => uncertain_vol(builder, t_end).generator(|a| {
            let x2 = a.x[0] * a.x[0];
            let g = a.gamma[0];
            -0.5 * x2 * (VOL_HIGH * VOL_HIGH * g).max(VOL_LOW * VOL_LOW * g)
        }),
        "hjb_uncertain_vol" => {
            let cp = Arc::new(uncertain_vol_control()?);
            uncertain_vol(builder, t_end)
                .generator_arc(hjb_generator(cp.clone()))
                .control(cp)
        }
        "boundary_heat" => {
            let w = PI / 2.0;
            let decay = PI * PI / 8.0;
            builder
                .generator(|a| -0.5 * a.gamma[0])
                .terminal(move |x| (w * x[0]).cos())
                .terminal_gradient(move |x, out| out[0] = -w * (w * x[0]).sin())
                .analytic(analytic(
                    move |t, x| (w * x).cos() * (-decay * (t_end - t)).exp(),
                    move |t, x| -w * (w * x).sin() * (-decay * (t_end - t)).exp(),
                    move |t, x| -w * w * (w * x).cos() * (-decay * (t_end - t)).exp(),
                    move |t, x| decay * (w * x).cos() * (-decay * (t_end - t)).exp(),
                ))
                .domain(Domain::Box {
                    lower: vec![-1.0],
                    upper: vec![1.0],
                })
                .linear(LinearCoefficients::constant(0.0, 0.0))
        }
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    spec.build()
}

/// The uncertain-volatility control problem: `a(u) = u·x` with
/// `u ∈ [0.1, 0.2]`, minimizing the Hamiltonian so that the value is the
/// worst case over volatility scenarios.
pub(crate) fn uncertain_vol_control() -> Result<ControlProblem> {
    Ok(ControlProblem::new(
        1,
        vec![VOL_LOW],
        vec![VOL_HIGH],
        crate::hjb::DEFAULT_RESOLUTION,
    )?
    .with_a(|_t, x, u, out| out[0] = u[0] * x[0])
    .with_sense(Sense::Inf))
}

fn uncertain_vol(builder: super::ProblemBuilder, t_end: f64) -> super::ProblemBuilder {
    let c = VOL_HIGH * VOL_HIGH;
    builder
        .diffusion(|x, out| out[0] = REFERENCE_VOL * x[0])
        .terminal(|x| x[0] * x[0])
        .terminal_gradient(|x, out| out[0] = 2.0 * x[0])
        .analytic(analytic(
            move |t, x| x * x * (c * (t_end - t)).exp(),
            move |t, x| 2.0 * x * (c * (t_end - t)).exp(),
            move |t, _x| 2.0 * (c * (t_end - t)).exp(),
            move |t, x| -c * x * x * (c * (t_end - t)).exp(),
        ))
}

fn analytic(
    value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    gradient: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    hessian: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    time_derivative: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> AnalyticSolution {
    AnalyticSolution {
        value: Arc::new(move |t, x: &[f64]| value(t, x[0])),
        gradient: Arc::new(move |t, x: &[f64], out: &mut [f64]| out[0] = gradient(t, x[0])),
        hessian: Arc::new(move |t, x: &[f64], out: &mut [f64]| out[0] = hessian(t, x[0])),
        time_derivative: Arc::new(move |t, x: &[f64]| time_derivative(t, x[0])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_assumptions, GenArgs};

    #[test]
    fn unknown_name() {
        assert_eq!(
            catalog_get("nope").unwrap_err(),
            Error::UnknownProblem("nope".into())
        );
    }

    #[test]
    fn every_entry_solves_its_equation() {
        for name in CATALOG {
            let spec = catalog_get(name).unwrap();
            for i in 0..1000 {
                let t = (i as f64 * 0.618_033_988_7).fract() * spec.horizon();
                let x = [((i as f64 * 0.414_213_56).fract() - 0.5) * 1.98];
                let r = spec.pde_residual(t, &x).unwrap();
                assert!(r.abs() < 1e-8, "{name}: residual {r} at t={t} x={x:?}");
            }
        }
    }

    #[test]
    fn terminal_matches_analytic_at_horizon() {
        for name in CATALOG {
            let spec = catalog_get(name).unwrap();
            let v = spec.analytic().unwrap();
            for x in [-0.9, 0.0, 0.3, 0.99] {
                assert!(
                    ((v.value)(1.0, &[x]) - spec.g(&[x])).abs() < 1e-15,
                    "{name}"
                );
            }
        }
    }

    #[test]
    fn every_generator_is_degenerate_elliptic() {
        for name in CATALOG {
            let spec = catalog_get(name).unwrap();
            let r = validate_assumptions(&spec, spec.growth(), 2000, 17).unwrap();
            assert!(r.all_pass(), "{name}: {r:#?}");
        }
    }

    #[test]
    fn control_form_matches_closed_form_generator() {
        let bsb = catalog_get("bsb_uncertain_vol").unwrap();
        let hjb = catalog_get("hjb_uncertain_vol").unwrap();
        for i in 0..200 {
            let g = [(i as f64 * 0.37).sin() * 5.0];
            let x = [(i as f64 * 0.11).cos() * 3.0];
            let a = GenArgs {
                t: 0.0,
                x: &x,
                y: 1.0,
                z: &[0.3],
                gamma: &g,
            };
            let (p, q) = (bsb.f(&a), hjb.f(&a));
            assert!((p - q).abs() <= 1e-14 * (1.0 + p.abs()), "{p} {q}");
        }
    }
}
