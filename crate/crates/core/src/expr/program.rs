use super::{BinaryOp, EvalContext, ExprAst, UnaryOp, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
enum Op {
    Push(f64),
    Load(Var),
    Trace,
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Postfix compilation of an [`ExprAst`], evaluated on a small value stack.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    max_stack: usize,
}

const INLINE_STACK: usize = 32;

impl Program {
    pub fn compile(ast: &ExprAst) -> Self {
        let mut ops = Vec::new();
        emit(ast, &mut ops);
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &ops {
            match op {
                Op::Push(_) | Op::Load(_) | Op::Trace => depth += 1,
                Op::Unary(_) => {}
                Op::Binary(_) => depth -= 1,
            }
            max_stack = max_stack.max(depth);
        }
        Program { ops, max_stack }
    }

    pub fn run(&self, ctx: &EvalContext<'_>) -> Result<f64> {
        if self.max_stack <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.exec(ctx, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.max_stack];
            self.exec(ctx, &mut stack)
        }
    }

    fn exec(&self, ctx: &EvalContext<'_>, stack: &mut [f64]) -> Result<f64> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Push(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Load(var) => {
                    stack[sp] = ctx.var(var)?;
                    sp += 1;
                }
                Op::Trace => {
                    stack[sp] = ctx.trace()?;
                    sp += 1;
                }
                Op::Unary(u) => stack[sp - 1] = u.apply(stack[sp - 1]),
                Op::Binary(b) => {
                    sp -= 1;
                    stack[sp - 1] = b.apply(stack[sp - 1], stack[sp]);
                }
            }
        }
        Ok(stack[0])
    }
}

fn emit(ast: &ExprAst, ops: &mut Vec<Op>) {
    match ast {
        ExprAst::Num(v) => ops.push(Op::Push(*v)),
        ExprAst::Var(v) => ops.push(Op::Load(*v)),
        ExprAst::Trace => ops.push(Op::Trace),
        ExprAst::Unary(op, a) => {
            emit(a, ops);
            ops.push(Op::Unary(*op));
        }
        ExprAst::Binary(op, a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Binary(*op));
        }
    }
}
