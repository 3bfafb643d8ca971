//! A small closed expression language for user-declared model functions.
//!
//! Supported: numbers, named variables, `+ - * / ^`, parentheses, the
//! constant `pi`, and the functions `exp log sqrt abs sin cos min max pos`
//! plus two rational guards: `ratio(a, c, n)` (`a·c/n`, 0 at `n = 0`) and
//! `guard(a, b)` (`a/b`, 0 when `b ≤ 0`).

use std::fmt;

use crate::error::{Error, Result};
use crate::model::ratio_of_parts;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Min,
    Max,
    Pos,
    Ratio,
    Guard,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pos" => (Func::Pos, 1),
            "ratio" => (Func::Ratio, 3),
            "guard" => (Func::Guard, 2),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, b) => {
                let base = a.eval(vars);
                match **b {
                    Node::Const(e) if e.fract() == 0.0 && e.abs() <= 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Node::Call(f, args) => {
                let x = args[0].eval(vars);
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Min => x.min(args[1].eval(vars)),
                    Func::Max => x.max(args[1].eval(vars)),
                    Func::Pos => x.max(0.0),
                    Func::Ratio => ratio_of_parts(x, args[1].eval(vars), args[2].eval(vars)),
                    Func::Guard => {
                        let d = args[1].eval(vars);
                        if d > 0.0 {
                            x / d
                        } else {
                            0.0
                        }
                    }
                }
            }
        }
    }
}

/// A compiled expression over a fixed, ordered variable list.
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn compile(source: &str, variables: &[&str]) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0, variables };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected '{}' in `{source}`",
                parser.tokens[parser.pos]
            )));
        }
        Ok(Expr { source: source.trim().to_string(), root })
    }

    #[inline]
    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.root.eval(vars)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True if the expression is a literal number.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            Node::Neg(ref a) => match **a {
                Node::Const(c) => Some(-c),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => f.write_str(s),
            Token::Op(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number '{text}' in `{src}`")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    variables: &'a [&'a str],
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!(
                "expected '{op}' but found {}",
                self.tokens.get(self.pos).map_or("end of input".into(), |t| format!("'{t}'"))
            )))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                let inner = self.unary()?;
                Ok(match inner {
                    Node::Const(c) => Node::Const(-c),
                    other => Node::Neg(Box::new(other)),
                })
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Node::Const(v)),
            Token::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| Error::Expr(format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != arity {
                        return Err(Error::Expr(format!(
                            "function '{name}' takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    Ok(Node::Call(func, args))
                } else if let Some(idx) = self.variables.iter().position(|v| *v == name) {
                    Ok(Node::Var(idx))
                } else if name == "pi" {
                    Ok(Node::Const(std::f64::consts::PI))
                } else {
                    Err(Error::Expr(format!(
                        "unknown variable '{name}' (known: {})",
                        self.variables.join(", ")
                    )))
                }
            }
            Token::Op(c) => Err(Error::Expr(format!("unexpected '{c}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expr::compile(src, vars).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("-u^2", &["u"], &[3.0]), -9.0);
        assert_eq!(eval("2^3^2", &[], &[]), 512.0);
        assert_eq!(eval("(1 - 2) - 3", &[], &[]), -4.0);
        assert_eq!(eval("8 / 2 / 2", &[], &[]), 2.0);
        assert_eq!(eval("1.5e1 + 2E-1", &[], &[]), 15.2);
    }

    #[test]
    fn functions_and_guards() {
        let v = ["a", "b"];
        assert_eq!(eval("ratio(a, b, a + b)", &v, &[1.0, 3.0]), 0.75);
        assert_eq!(eval("ratio(a, b, a + b)", &v, &[0.0, 0.0]), 0.0);
        assert_eq!(eval("guard(a, b)", &v, &[1.0, 0.0]), 0.0);
        assert_eq!(eval("max(a, b) - min(a, b)", &v, &[1.0, 3.0]), 2.0);
        assert_eq!(eval("pos(a - b)", &v, &[1.0, 3.0]), 0.0);
        assert!((eval("exp(log(a))", &v, &[2.5, 0.0]) - 2.5).abs() < 1e-15);
        assert!((eval("cos(pi)", &[], &[]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors_are_reported() {
        assert!(Expr::compile("u +", &["u"]).is_err());
        assert!(Expr::compile("w", &["u"]).unwrap_err().to_string().contains("unknown variable"));
        assert!(Expr::compile("foo(u)", &["u"]).is_err());
        assert!(Expr::compile("min(u)", &["u"]).is_err());
        assert!(Expr::compile("(u", &["u"]).is_err());
        assert!(Expr::compile("u $ 2", &["u"]).is_err());
    }

    #[test]
    fn constant_detection() {
        assert_eq!(Expr::compile("-1", &[]).unwrap().as_constant(), Some(-1.0));
        assert_eq!(Expr::compile("u", &["u"]).unwrap().as_constant(), None);
    }
}
