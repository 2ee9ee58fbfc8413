//! Arithmetic expression language for coefficient functions.
//!
//! Expressions are written over the variables `t`, `x[i]`, `y`, `z[i]`,
//! `gamma[i][j]` and `u[k]`, and are parsed into an [`ExprAst`]. Hot loops
//! use [`Expr`], which pairs the tree with a compiled stack program.
//!
//! The grammar is documented in `docs/expr-grammar.md`.

mod parser;
mod program;

use std::fmt;

use crate::error::{Error, Result};

pub use parser::parse;
pub use program::Program;

/// Declared dimensions: state dimension `d` and control dimension `k`
/// (zero when the expression has no control argument).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(d: usize, k: usize) -> Self {
        Dims { d, k }
    }

    pub fn state(d: usize) -> Self {
        Dims { d, k: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X(usize),
    Y,
    Z(usize),
    Gamma(usize, usize),
    U(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<ExprAst>),
    Binary(BinaryOp, Box<ExprAst>, Box<ExprAst>),
    /// `trace(gamma)`
    Trace,
}

impl UnaryOp {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Abs => a.abs(),
        }
    }

    pub(crate) fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
            BinaryOp::Min => a.min(b),
            BinaryOp::Max => a.max(b),
        }
    }
}

/// Argument bindings for evaluation. Optional slots are only required when
/// the expression references them.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: Option<f64>,
    pub z: Option<&'a [f64]>,
    /// Row-major `d×d`.
    pub gamma: Option<&'a [f64]>,
    pub u: Option<&'a [f64]>,
}

impl<'a> EvalContext<'a> {
    pub fn new(t: f64, x: &'a [f64]) -> Self {
        EvalContext {
            t,
            x,
            y: None,
            z: None,
            gamma: None,
            u: None,
        }
    }

    pub fn with_y(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }

    pub fn with_z(mut self, z: &'a [f64]) -> Self {
        self.z = Some(z);
        self
    }

    pub fn with_gamma(mut self, gamma: &'a [f64]) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_u(mut self, u: &'a [f64]) -> Self {
        self.u = Some(u);
        self
    }

    pub(crate) fn var(&self, v: Var) -> Result<f64> {
        Ok(match v {
            Var::T => self.t,
            Var::X(i) => self.x[i],
            Var::Y => self.y.ok_or(Error::MissingBinding("y"))?,
            Var::Z(i) => self.z.ok_or(Error::MissingBinding("z"))?[i],
            Var::Gamma(i, j) => {
                let g = self.gamma.ok_or(Error::MissingBinding("gamma"))?;
                g[i * self.x.len() + j]
            }
            Var::U(k) => self.u.ok_or(Error::MissingBinding("u"))?[k],
        })
    }

    pub(crate) fn trace(&self) -> Result<f64> {
        let g = self.gamma.ok_or(Error::MissingBinding("gamma"))?;
        let d = self.x.len();
        Ok((0..d).map(|i| g[i * d + i]).sum())
    }
}

/// Evaluates the tree directly.
pub fn eval(ast: &ExprAst, ctx: &EvalContext<'_>) -> Result<f64> {
    Ok(match ast {
        ExprAst::Num(v) => *v,
        ExprAst::Var(v) => ctx.var(*v)?,
        ExprAst::Trace => ctx.trace()?,
        ExprAst::Unary(op, a) => op.apply(eval(a, ctx)?),
        ExprAst::Binary(op, a, b) => {
            let lhs = eval(a, ctx)?;
            op.apply(lhs, eval(b, ctx)?)
        }
    })
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x[{i}]"),
            Var::Y => write!(f, "y"),
            Var::Z(i) => write!(f, "z[{i}]"),
            Var::Gamma(i, j) => write!(f, "gamma[{i}][{j}]"),
            Var::U(k) => write!(f, "u[{k}]"),
        }
    }
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Num(v) => write!(f, "{v}"),
            ExprAst::Var(v) => write!(f, "{v}"),
            ExprAst::Trace => write!(f, "trace(gamma)"),
            ExprAst::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            ExprAst::Unary(op, a) => write!(f, "{}({a})", op.name()),
            ExprAst::Binary(op, a, b) => match op {
                BinaryOp::Min => write!(f, "min({a}, {b})"),
                BinaryOp::Max => write!(f, "max({a}, {b})"),
                _ => {
                    let sym = match op {
                        BinaryOp::Add => "+",
                        BinaryOp::Sub => "-",
                        BinaryOp::Mul => "*",
                        BinaryOp::Div => "/",
                        _ => "^",
                    };
                    write!(f, "({a} {sym} {b})")
                }
            },
        }
    }
}

/// A parsed and compiled expression together with its declared dimensions.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    ast: ExprAst,
    dims: Dims,
    program: Program,
}

impl Expr {
    pub fn compile(source: &str, dims: Dims) -> Result<Self> {
        let ast = parse(source, dims)?;
        let program = Program::compile(&ast);
        Ok(Expr {
            source: source.to_string(),
            ast,
            dims,
            program,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Evaluates with dimension checks against the declared dims.
    pub fn eval(&self, ctx: &EvalContext<'_>) -> Result<f64> {
        let d = self.dims.d;
        let mismatch = |got: usize| Error::DimensionMismatch { expected: d, got };
        if ctx.x.len() != d {
            return Err(mismatch(ctx.x.len()));
        }
        if let Some(z) = ctx.z {
            if z.len() != d {
                return Err(mismatch(z.len()));
            }
        }
        if let Some(g) = ctx.gamma {
            if g.len() != d * d {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    got: g.len(),
                });
            }
        }
        if let Some(u) = ctx.u {
            if u.len() != self.dims.k {
                return Err(Error::DimensionMismatch {
                    expected: self.dims.k,
                    got: u.len(),
                });
            }
        }
        self.program.run(ctx)
    }

    /// Evaluation for callers that already guarantee consistent bindings.
    pub(crate) fn eval_unchecked(&self, ctx: &EvalContext<'_>) -> f64 {
        self.program.run(ctx).unwrap_or(f64::NAN)
    }
}
