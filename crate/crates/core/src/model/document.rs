use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AnalyticSolution, Domain, GrowthParams, ProblemSpec};
use crate::error::{Error, Result};
use crate::expr::{Dims, EvalContext, Expr};
use crate::hjb::{hjb_generator, ControlProblem, Sense, DEFAULT_RESOLUTION};
use crate::linear_fk::LinearCoefficients;

/// A problem written as JSON with expression-string coefficients.
///
/// `mu`, `sigma`, `g` and `dg` may use `x[i]`; `f` may also use `t`, `y`,
/// `z[i]`, `gamma[i][j]` and `trace(gamma)`. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<String>>>,
    /// Required unless `control` is given, in which case the generator is
    /// the optimized Hamiltonian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    pub g: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dg: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond_cap: Option<f64>,
}

fn default_name() -> String {
    "inline".into()
}

fn default_horizon() -> f64 {
    1.0
}

/// Closed-form solution in `t` and `x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticDocument {
    pub v: String,
    pub dv: Vec<String>,
    pub d2v: Vec<Vec<String>>,
    pub vt: String,
}

/// Open box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDocument {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Source and discount rate in `t` and `x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDocument {
    pub alpha: String,
    pub beta: String,
}

/// Control-problem coefficients in `t`, `x[i]` and `u[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDocument {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub sense: Sense,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn compile_vec(src: &[String], len: usize, dims: Dims, what: &str) -> Result<Vec<Expr>> {
    if src.len() != len {
        return Err(Error::InvalidSpec(format!(
            "{what} needs {len} entries, got {}",
            src.len()
        )));
    }
    src.iter().map(|s| Expr::compile(s, dims)).collect()
}

fn compile_matrix(src: &[Vec<String>], d: usize, dims: Dims, what: &str) -> Result<Vec<Expr>> {
    if src.len() != d || src.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidSpec(format!(
            "{what} must be a {d}x{d} matrix"
        )));
    }
    src.iter()
        .flatten()
        .map(|s| Expr::compile(s, dims))
        .collect()
}

/// Evaluates every expression once at a reference point so that unbound
/// variables are reported when the document is loaded.
fn probe(exprs: &[Expr], ctx: &EvalContext<'_>, what: &str) -> Result<()> {
    for e in exprs {
        e.eval(ctx).map_err(|err| match err {
            Error::MissingBinding(v) => {
                Error::InvalidSpec(format!("{what} may not use '{v}': {}", e.source()))
            }
            other => other,
        })?;
    }
    Ok(())
}

impl ProblemDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be >= 1".into()));
        }
        let k = self.control.as_ref().map_or(0, |c| c.lower.len());
        let dims = Dims::new(d, k);
        let origin = vec![0.0; d];
        let zeros_d = vec![0.0; d];
        let zeros_dd = vec![0.0; d * d];
        let zeros_k = vec![0.0; k];
        let space = EvalContext::new(0.0, &origin);
        let full = EvalContext::new(0.0, &origin)
            .with_y(0.0)
            .with_z(&zeros_d)
            .with_gamma(&zeros_dd);
        let controlled = EvalContext::new(0.0, &origin).with_u(&zeros_k);

        let mut builder = ProblemSpec::builder(self.name.clone(), d).horizon(self.horizon);

        if let Some(src) = &self.mu {
            let mu = compile_vec(src, d, dims, "mu")?;
            probe(&mu, &space, "mu")?;
            builder = builder.drift(move |x, out| {
                let ctx = EvalContext::new(0.0, x);
                for (o, e) in out.iter_mut().zip(&mu) {
                    *o = e.eval_unchecked(&ctx);
                }
            });
        }
        if let Some(src) = &self.sigma {
            let sigma = compile_matrix(src, d, dims, "sigma")?;
            probe(&sigma, &space, "sigma")?;
            builder = builder.diffusion(move |x, out| {
                let ctx = EvalContext::new(0.0, x);
                for (o, e) in out.iter_mut().zip(&sigma) {
                    *o = e.eval_unchecked(&ctx);
                }
            });
        }

        let g = Expr::compile(&self.g, dims)?;
        probe(std::slice::from_ref(&g), &space, "g")?;
        builder = builder.terminal(move |x| g.eval_unchecked(&EvalContext::new(0.0, x)));
        if let Some(src) = &self.dg {
            let dg = compile_vec(src, d, dims, "dg")?;
            probe(&dg, &space, "dg")?;
            builder = builder.terminal_gradient(move |x, out| {
                let ctx = EvalContext::new(0.0, x);
                for (o, e) in out.iter_mut().zip(&dg) {
                    *o = e.eval_unchecked(&ctx);
                }
            });
        }

        match (&self.f, &self.control) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidSpec(
                    "give either a generator f or a control problem, not both".into(),
                ))
            }
            (None, None) => return Err(Error::InvalidSpec("generator f is required".into())),
            (Some(src), None) => {
                let f = Expr::compile(src, dims)?;
                probe(std::slice::from_ref(&f), &full, "f")?;
                builder = builder.generator(move |a| {
                    let ctx = EvalContext::new(a.t, a.x)
                        .with_y(a.y)
                        .with_z(a.z)
                        .with_gamma(a.gamma);
                    f.eval_unchecked(&ctx)
                });
            }
            (None, Some(doc)) => {
                let cp = Arc::new(doc.to_control(d, dims, &controlled)?);
                builder = builder.generator_arc(hjb_generator(cp.clone())).control(cp);
            }
        }

        if let Some(a) = &self.analytic {
            let v = Expr::compile(&a.v, dims)?;
            let dv = compile_vec(&a.dv, d, dims, "analytic.dv")?;
            let d2v = compile_matrix(&a.d2v, d, dims, "analytic.d2v")?;
            let vt = Expr::compile(&a.vt, dims)?;
            probe(std::slice::from_ref(&v), &space, "analytic.v")?;
            probe(&dv, &space, "analytic.dv")?;
            probe(&d2v, &space, "analytic.d2v")?;
            probe(std::slice::from_ref(&vt), &space, "analytic.vt")?;
            builder = builder.analytic(AnalyticSolution {
                value: Arc::new(move |t, x| v.eval_unchecked(&EvalContext::new(t, x))),
                gradient: Arc::new(move |t, x, out| {
                    let ctx = EvalContext::new(t, x);
                    for (o, e) in out.iter_mut().zip(&dv) {
                        *o = e.eval_unchecked(&ctx);
                    }
                }),
                hessian: Arc::new(move |t, x, out| {
                    let ctx = EvalContext::new(t, x);
                    for (o, e) in out.iter_mut().zip(&d2v) {
                        *o = e.eval_unchecked(&ctx);
                    }
                }),
                time_derivative: Arc::new(move |t, x| vt.eval_unchecked(&EvalContext::new(t, x))),
            });
        }
        if let Some(l) = &self.linear {
            let alpha = Expr::compile(&l.alpha, dims)?;
            let beta = Expr::compile(&l.beta, dims)?;
            probe(std::slice::from_ref(&alpha), &space, "linear.alpha")?;
            probe(std::slice::from_ref(&beta), &space, "linear.beta")?;
            builder = builder.linear(LinearCoefficients::new(
                move |t, x| alpha.eval_unchecked(&EvalContext::new(t, x)),
                move |t, x| beta.eval_unchecked(&EvalContext::new(t, x)),
            ));
        }
        if let Some(dom) = &self.domain {
            builder = builder.domain(Domain::Box {
                lower: dom.lower.clone(),
                upper: dom.upper.clone(),
            });
        }
        if let Some(growth) = self.growth {
            builder = builder.growth(growth);
        }
        if let Some(cap) = self.cond_cap {
            builder = builder.cond_cap(cap);
        }
        builder.build()
    }
}

impl ControlDocument {
    fn to_control(&self, d: usize, dims: Dims, ctx: &EvalContext<'_>) -> Result<ControlProblem> {
        let mut cp =
            ControlProblem::new(d, self.lower.clone(), self.upper.clone(), self.resolution)?
                .with_sense(self.sense);
        let scalar = |src: &str, what: &str| -> Result<Expr> {
            let e = Expr::compile(src, dims)?;
            probe(std::slice::from_ref(&e), ctx, what)?;
            Ok(e)
        };
        if let Some(src) = &self.alpha {
            let e = scalar(src, "control.alpha")?;
            cp = cp.with_alpha(move |t, x, u| e.eval_unchecked(&EvalContext::new(t, x).with_u(u)));
        }
        if let Some(src) = &self.beta {
            let e = scalar(src, "control.beta")?;
            cp = cp.with_beta(move |t, x, u| e.eval_unchecked(&EvalContext::new(t, x).with_u(u)));
        }
        if let Some(src) = &self.b {
            let b = compile_vec(src, d, dims, "control.b")?;
            probe(&b, ctx, "control.b")?;
            cp = cp.with_b(move |t, x, u, out| {
                let c = EvalContext::new(t, x).with_u(u);
                for (o, e) in out.iter_mut().zip(&b) {
                    *o = e.eval_unchecked(&c);
                }
            });
        }
        if let Some(src) = &self.a {
            let a = compile_matrix(src, d, dims, "control.a")?;
            probe(&a, ctx, "control.a")?;
            cp = cp.with_a(move |t, x, u, out| {
                let c = EvalContext::new(t, x).with_u(u);
                for (o, e) in out.iter_mut().zip(&a) {
                    *o = e.eval_unchecked(&c);
                }
            });
        }
        Ok(cp)
    }
}
