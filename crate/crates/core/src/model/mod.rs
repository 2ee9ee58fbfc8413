//! Problem definitions: the coefficient quadruple `(μ, σ, f, g)`, the
//! reference catalog, JSON problem documents, and numeric spot checks of the
//! standing assumptions on the coefficients.

mod catalog;
mod document;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::ControlProblem;
use crate::linear_fk::LinearCoefficients;
use crate::numeric;

pub use catalog::{catalog_get, catalog_get_with_horizon, CATALOG};
pub use document::{AnalyticDocument, DomainDocument, LinearDocument, ProblemDocument};
pub use validate::{
    validate_assumptions, validate_assumptions_with, AssumptionCheck, SamplingBox, ValidationReport,
};

/// Default cap on the condition number of `σ(x)`.
pub const DEFAULT_COND_CAP: f64 = 1e8;

/// Arguments of the generator `f(t, x, y, z, γ)`; `gamma` is row-major `d×d`.
#[derive(Debug, Clone, Copy)]
pub struct GenArgs<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub gamma: &'a [f64],
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(&GenArgs<'_>) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type SpaceTimeFieldFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Closed-form solution `v` with its derivatives.
#[derive(Clone)]
pub struct AnalyticSolution {
    pub value: SpaceTimeFn,
    /// `Dv`, length `d`.
    pub gradient: SpaceTimeFieldFn,
    /// `D²v`, row-major `d×d`.
    pub hessian: SpaceTimeFieldFn,
    /// `∂v/∂t`.
    pub time_derivative: SpaceTimeFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    WholeSpace,
    /// Open box `{lower < x < upper}`; paths stop on leaving it.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::WholeSpace => true,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v > *lo && *v < *hi),
        }
    }
}

/// Constants of the growth and admissibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub m: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "G")]
    pub g: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            p1: 1.0,
            p2: 2.0,
            p3: 2.0,
            p4: 1.0,
            p5: 0.0,
            m: 1.0,
            l: 1.0,
            f: 1.0,
            g: 1.0,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::InvalidSpec(format!(
                "p1 = {} not in [0, 1]",
                self.p1
            )));
        }
        let named = [
            ("p2", self.p2),
            ("p3", self.p3),
            ("p4", self.p4),
            ("p5", self.p5),
            ("m", self.m),
            ("L", self.l),
            ("F", self.f),
            ("G", self.g),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Growth exponent of the solution: `max{p2, p3, p2·p4, p4 + 2·p1}`.
    pub fn exponent(&self) -> f64 {
        self.p2
            .max(self.p3)
            .max(self.p2 * self.p4)
            .max(self.p4 + 2.0 * self.p1)
    }
}

/// A fully specified terminal-value problem for the PDE
/// `-v_t + f(t, x, v, Dv, D²v) = 0`, `v(T, ·) = g`.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    dim: usize,
    horizon: f64,
    mu: FieldFn,
    sigma: FieldFn,
    f: GeneratorFn,
    g: ScalarFn,
    dg: Option<FieldFn>,
    analytic: Option<AnalyticSolution>,
    domain: Domain,
    growth: GrowthParams,
    linear: Option<LinearCoefficients>,
    control: Option<Arc<ControlProblem>>,
    cond_cap: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("analytic", &self.analytic.is_some())
            .field("linear", &self.linear.is_some())
            .field("control", &self.control.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn builder(name: impl Into<String>, dim: usize) -> ProblemBuilder {
        ProblemBuilder::new(name, dim)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn growth(&self) -> &GrowthParams {
        &self.growth
    }

    pub fn cond_cap(&self) -> f64 {
        self.cond_cap
    }

    pub fn analytic(&self) -> Option<&AnalyticSolution> {
        self.analytic.as_ref()
    }

    pub fn linear(&self) -> Option<&LinearCoefficients> {
        self.linear.as_ref()
    }

    pub fn control(&self) -> Option<&Arc<ControlProblem>> {
        self.control.as_ref()
    }

    pub fn has_terminal_gradient(&self) -> bool {
        self.dg.is_some()
    }

    pub fn mu(&self, x: &[f64], out: &mut [f64]) {
        (self.mu)(x, out)
    }

    /// `σ(x)` written row-major into `out` (length `d²`).
    pub fn sigma(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn f(&self, args: &GenArgs<'_>) -> f64 {
        (self.f)(args)
    }

    pub fn generator(&self) -> &GeneratorFn {
        &self.f
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    /// Supplied `Dg`, if any.
    pub fn dg(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.dg {
            Some(dg) => {
                dg(x, out);
                true
            }
            None => false,
        }
    }

    /// `φ = f + μ'z + ½Tr[σσ'γ]` given precomputed `μ(x)` and `σσ'(x)`.
    pub fn phi_with(&self, args: &GenArgs<'_>, mu: &[f64], sst: &[f64]) -> f64 {
        let drift: f64 = mu.iter().zip(args.z).map(|(m, z)| m * z).sum();
        self.f(args) + drift + 0.5 * numeric::trace_product(sst, args.gamma, self.dim)
    }

    /// `φ = f + μ'z + ½Tr[σσ'γ]`.
    pub fn phi(&self, args: &GenArgs<'_>) -> f64 {
        let d = self.dim;
        let mut mu = vec![0.0; d];
        let mut sigma = vec![0.0; d * d];
        let mut sst = vec![0.0; d * d];
        self.mu(args.x, &mut mu);
        self.sigma(args.x, &mut sigma);
        numeric::outer_self(&sigma, d, &mut sst);
        self.phi_with(args, &mu, &sst)
    }

    /// `-v_t + f(t, x, v, Dv, D²v)` for the analytic solution.
    pub fn pde_residual(&self, t: f64, x: &[f64]) -> Result<f64> {
        let v = self.analytic.as_ref().ok_or(Error::MissingAnalyticV)?;
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        (v.gradient)(t, x, &mut grad);
        (v.hessian)(t, x, &mut hess);
        let args = GenArgs {
            t,
            x,
            y: (v.value)(t, x),
            z: &grad,
            gamma: &hess,
        };
        Ok(-(v.time_derivative)(t, x) + self.f(&args))
    }

    /// Changes the horizon; the analytic solution is dropped because it is
    /// tied to the original horizon.
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidSpec(format!("horizon {horizon} must be > 0")));
        }
        if horizon != self.horizon {
            self.analytic = None;
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Replaces the terminal condition; drops `Dg` and the analytic solution,
    /// which no longer apply.
    pub fn with_terminal(mut self, g: ScalarFn) -> Self {
        self.g = g;
        self.dg = None;
        self.analytic = None;
        self
    }

    pub fn with_generator(mut self, f: GeneratorFn) -> Self {
        self.f = f;
        self.analytic = None;
        self.linear = None;
        self.control = None;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        check_domain(&domain, self.dim)?;
        self.domain = domain;
        Ok(self)
    }
}

fn check_domain(domain: &Domain, dim: usize) -> Result<()> {
    if let Domain::Box { lower, upper } = domain {
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidSpec("box bounds must have length d".into()));
        }
        if lower.iter().zip(upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidSpec("box requires lower < upper".into()));
        }
    }
    Ok(())
}

/// Builder for [`ProblemSpec`]. Drift defaults to zero and diffusion to the
/// identity; the generator and terminal condition are required.
pub struct ProblemBuilder {
    name: String,
    dim: usize,
    horizon: f64,
    mu: Option<FieldFn>,
    sigma: Option<FieldFn>,
    f: Option<GeneratorFn>,
    g: Option<ScalarFn>,
    dg: Option<FieldFn>,
    analytic: Option<AnalyticSolution>,
    domain: Domain,
    growth: GrowthParams,
    linear: Option<LinearCoefficients>,
    control: Option<Arc<ControlProblem>>,
    cond_cap: f64,
}

impl ProblemBuilder {
    fn new(name: impl Into<String>, dim: usize) -> Self {
        ProblemBuilder {
            name: name.into(),
            dim,
            horizon: 1.0,
            mu: None,
            sigma: None,
            f: None,
            g: None,
            dg: None,
            analytic: None,
            domain: Domain::WholeSpace,
            growth: GrowthParams::default(),
            linear: None,
            control: None,
            cond_cap: DEFAULT_COND_CAP,
        }
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn drift(mut self, mu: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.mu = Some(Arc::new(mu));
        self
    }

    pub fn diffusion(mut self, sigma: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Some(Arc::new(sigma));
        self
    }

    pub fn generator(mut self, f: impl Fn(&GenArgs<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn generator_arc(mut self, f: GeneratorFn) -> Self {
        self.f = Some(f);
        self
    }

    pub fn terminal(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn terminal_gradient(
        mut self,
        dg: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.dg = Some(Arc::new(dg));
        self
    }

    pub fn analytic(mut self, v: AnalyticSolution) -> Self {
        self.analytic = Some(v);
        self
    }

    pub fn domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn growth(mut self, growth: GrowthParams) -> Self {
        self.growth = growth;
        self
    }

    pub fn linear(mut self, linear: LinearCoefficients) -> Self {
        self.linear = Some(linear);
        self
    }

    pub fn control(mut self, control: Arc<ControlProblem>) -> Self {
        self.control = Some(control);
        self
    }

    pub fn cond_cap(mut self, cap: f64) -> Self {
        self.cond_cap = cap;
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "horizon {} must be > 0",
                self.horizon
            )));
        }
        if !(self.cond_cap > 1.0) {
            return Err(Error::InvalidSpec(
                "condition-number cap must exceed 1".into(),
            ));
        }
        check_domain(&self.domain, d)?;
        self.growth.validate()?;
        let f = self
            .f
            .ok_or_else(|| Error::InvalidSpec("generator f is required".into()))?;
        let g = self
            .g
            .ok_or_else(|| Error::InvalidSpec("terminal condition g is required".into()))?;
        let mu = self
            .mu
            .unwrap_or_else(|| Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)));
        let sigma = self.sigma.unwrap_or_else(|| {
            Arc::new(move |_x: &[f64], out: &mut [f64]| {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0;
                }
            })
        });
        Ok(ProblemSpec {
            name: self.name,
            dim: d,
            horizon: self.horizon,
            mu,
            sigma,
            f,
            g,
            dg: self.dg,
            analytic: self.analytic,
            domain: self.domain,
            growth: self.growth,
            linear: self.linear,
            control: self.control,
            cond_cap: self.cond_cap,
        })
    }
}
