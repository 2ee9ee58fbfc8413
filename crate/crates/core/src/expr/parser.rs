use super::{BinaryOp, Dims, ExprAst, UnaryOp, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number '{text}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(syntax(
                    start,
                    format!(
                        "unexpected character '{}'",
                        src[start..].chars().next().unwrap()
                    ),
                ))
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dims: Dims,
}

/// Parses `source` into a tree, checking variable indices against `dims`.
pub fn parse(source: &str, dims: Dims) -> Result<ExprAst> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, dims };
    let ast = p.expr()?;
    match p.peek() {
        Tok::End => Ok(ast),
        t => Err(syntax(p.offset(), format!("unexpected token {t:?}"))),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(
                self.offset(),
                format!("expected {want:?}, found {:?}", self.peek()),
            ))
        }
    }

    fn expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<ExprAst> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(ExprAst::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<ExprAst> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(ExprAst::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn index(&mut self, variable: &str, bound: usize) -> Result<usize> {
        self.expect(Tok::LBracket)?;
        let at = self.offset();
        let idx = match self.bump() {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
            t => return Err(syntax(at, format!("expected index, found {t:?}"))),
        };
        self.expect(Tok::RBracket)?;
        if idx >= bound {
            return Err(Error::IndexOutOfRange {
                variable: variable.to_string(),
                index: idx,
            });
        }
        Ok(idx)
    }

    fn primary(&mut self) -> Result<ExprAst> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(ExprAst::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(&name, at),
            t => Err(syntax(at, format!("unexpected token {t:?}"))),
        }
    }

    fn identifier(&mut self, name: &str, at: usize) -> Result<ExprAst> {
        let d = self.dims.d;
        let unary = |op| Some(op);
        let func = match name {
            "t" => return Ok(ExprAst::Var(Var::T)),
            "y" => return Ok(ExprAst::Var(Var::Y)),
            "x" => return Ok(ExprAst::Var(Var::X(self.index("x", d)?))),
            "z" => return Ok(ExprAst::Var(Var::Z(self.index("z", d)?))),
            "u" => {
                let k = self.dims.k;
                return Ok(ExprAst::Var(Var::U(self.index("u", k)?)));
            }
            "gamma" => {
                let i = self.index("gamma", d)?;
                let j = self.index("gamma", d)?;
                return Ok(ExprAst::Var(Var::Gamma(i, j)));
            }
            "trace" => {
                self.expect(Tok::LParen)?;
                let arg_at = self.offset();
                match self.bump() {
                    Tok::Ident(s) if s == "gamma" => {}
                    _ => return Err(syntax(arg_at, "trace() takes only 'gamma'")),
                }
                self.expect(Tok::RParen)?;
                return Ok(ExprAst::Trace);
            }
            "sin" => unary(UnaryOp::Sin),
            "cos" => unary(UnaryOp::Cos),
            "exp" => unary(UnaryOp::Exp),
            "log" => unary(UnaryOp::Log),
            "sqrt" => unary(UnaryOp::Sqrt),
            "abs" => unary(UnaryOp::Abs),
            "min" | "max" => None,
            other => return Err(syntax(at, format!("unknown identifier '{other}'"))),
        };
        self.expect(Tok::LParen)?;
        let first = self.expr()?;
        let ast = match func {
            Some(op) => ExprAst::Unary(op, Box::new(first)),
            None => {
                self.expect(Tok::Comma)?;
                let second = self.expr()?;
                let op = if name == "min" {
                    BinaryOp::Min
                } else {
                    BinaryOp::Max
                };
                ExprAst::Binary(op, Box::new(first), Box::new(second))
            }
        };
        self.expect(Tok::RParen)?;
        Ok(ast)
    }
}
