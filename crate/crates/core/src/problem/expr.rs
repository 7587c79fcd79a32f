//! A small expression language for coefficient fields in configuration
//! files.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables: `t`, `x1`, `x2` (aliases `x`, `y`), `alpha`. Constants: `pi`,
//! `e`. Functions: `sin`, `cos`, `exp`, `log`, `sqrt`, `abs`, `pow(a, b)`,
//! `min(a, b)`, `max(a, b)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X1,
    X2,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `if lhs <= rhs { then } else { other }`; produced by differentiating
    /// `min`/`max`.
    IfLe {
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        then: Box<Expr>,
        other: Box<Expr>,
    },
}

/// Values bound to the expression variables.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub t: f64,
    pub x: Point,
    pub alpha: f64,
}

impl Env {
    pub fn new(alpha: f64, t: f64, x: Point) -> Self {
        Self { t, x, alpha }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in `{src}`"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match v {
                Var::T => env.t,
                Var::X1 => env.x[0],
                Var::X2 => env.x[1],
                Var::Alpha => env.alpha,
            },
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => {
                let base = a.eval(env);
                match b.as_ref() {
                    Expr::Const(c) if c.fract() == 0.0 && c.abs() < 64.0 => base.powi(*c as i32),
                    _ => base.powf(b.eval(env)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(env);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
            Expr::Min(a, b) => a.eval(env).min(b.eval(env)),
            Expr::Max(a, b) => a.eval(env).max(b.eval(env)),
            Expr::IfLe {
                lhs,
                rhs,
                then,
                other,
            } => {
                if lhs.eval(env) <= rhs.eval(env) {
                    then.eval(env)
                } else {
                    other.eval(env)
                }
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::IfLe {
                lhs,
                rhs,
                then,
                other,
            } => {
                lhs.depends_on(var)
                    || rhs.depends_on(var)
                    || then.depends_on(var)
                    || other.depends_on(var)
            }
        }
    }

    /// Symbolic partial derivative. `min`/`max`/`abs` are differentiated
    /// piecewise.
    pub fn diff(&self, var: Var) -> Expr {
        if !self.depends_on(var) {
            return Expr::Const(0.0);
        }
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), Expr::Const(2.0)),
            ),
            Expr::Pow(a, b) => {
                if !b.depends_on(var) {
                    // d(a^n) = n a^(n-1) a'
                    mul(
                        mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), Expr::Const(1.0)))),
                        a.diff(var),
                    )
                } else {
                    // d(a^b) = a^b (b' ln a + b a' / a)
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(var), Expr::Call(Func::Log, a.clone())),
                            div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let inner = a.diff(var);
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                    Func::Log => div(Expr::Const(1.0), (**a).clone()),
                    Func::Sqrt => div(Expr::Const(0.5), self.clone()),
                    Func::Abs => Expr::Call(Func::Sign, a.clone()),
                    Func::Sign => Expr::Const(0.0),
                };
                mul(outer, inner)
            }
            Expr::Min(a, b) => Expr::IfLe {
                lhs: a.clone(),
                rhs: b.clone(),
                then: Box::new(a.diff(var)),
                other: Box::new(b.diff(var)),
            },
            Expr::Max(a, b) => Expr::IfLe {
                lhs: a.clone(),
                rhs: b.clone(),
                then: Box::new(b.diff(var)),
                other: Box::new(a.diff(var)),
            },
            Expr::IfLe {
                lhs,
                rhs,
                then,
                other,
            } => Expr::IfLe {
                lhs: lhs.clone(),
                rhs: rhs.clone(),
                then: Box::new(then.diff(var)),
                other: Box::new(other.diff(var)),
            },
        }
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if is_const(&b, 0.0) => a,
        _ if is_const(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_const(&a, 0.0) => Expr::Const(0.0),
        _ if is_const(&b, 1.0) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 1.0) {
        a
    } else if is_const(&b, 0.0) {
        Expr::Const(1.0)
    } else {
        Expr::Pow(Box::new(a), Box::new(b))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(
                f,
                "{}",
                match v {
                    Var::T => "t",
                    Var::X1 => "x1",
                    Var::X2 => "x2",
                    Var::Alpha => "alpha",
                }
            ),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", format!("{func:?}").to_lowercase()),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::IfLe {
                lhs,
                rhs,
                then,
                other,
            } => write!(f, "if({lhs} <= {rhs}, {then}, {other})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
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
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
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
            Err(Error::Expression(format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek_op() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.peek_op() == Some(',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Op(c) => Err(Error::Expression(format!("unexpected `{c}`"))),
            Token::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let mut args = self.args()?;
                    let arity = |n: usize, args: &Vec<Expr>| -> Result<()> {
                        if args.len() == n {
                            Ok(())
                        } else {
                            Err(Error::Expression(format!(
                                "`{name}` takes {n} argument(s), got {}",
                                args.len()
                            )))
                        }
                    };
                    let unary = |f: Func, mut args: Vec<Expr>| -> Result<Expr> {
                        arity(1, &args)?;
                        Ok(Expr::Call(f, Box::new(args.remove(0))))
                    };
                    match name.as_str() {
                        "sin" => unary(Func::Sin, args),
                        "cos" => unary(Func::Cos, args),
                        "exp" => unary(Func::Exp, args),
                        "log" | "ln" => unary(Func::Log, args),
                        "sqrt" => unary(Func::Sqrt, args),
                        "abs" => unary(Func::Abs, args),
                        "pow" | "min" | "max" => {
                            arity(2, &args)?;
                            let b = Box::new(args.pop().unwrap());
                            let a = Box::new(args.pop().unwrap());
                            Ok(match name.as_str() {
                                "pow" => Expr::Pow(a, b),
                                "min" => Expr::Min(a, b),
                                _ => Expr::Max(a, b),
                            })
                        }
                        _ => Err(Error::Expression(format!("unknown function `{name}`"))),
                    }
                } else {
                    match name.as_str() {
                        "t" => Ok(Expr::Var(Var::T)),
                        "x" | "x1" => Ok(Expr::Var(Var::X1)),
                        "y" | "x2" => Ok(Expr::Var(Var::X2)),
                        "alpha" | "a" => Ok(Expr::Var(Var::Alpha)),
                        "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                        "e" => Ok(Expr::Const(std::f64::consts::E)),
                        _ => Err(Error::Expression(format!("unknown variable `{name}`"))),
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, env: Env) -> f64 {
        Expr::parse(src).unwrap().eval(&env)
    }

    #[test]
    fn precedence_and_associativity() {
        let env = Env::new(2.0, 0.5, [3.0, -1.0]);
        assert_eq!(ev("1 + 2 * 3", env), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", env), 512.0);
        assert_eq!(ev("-2 ^ 2", env), -4.0);
        assert_eq!(ev("(1 + 2) * 3 / 9", env), 1.0);
        assert_eq!(ev("x1 * x2 + alpha - t", env), -1.5);
        assert_eq!(ev("min(x, y) + max(x, y)", env), 2.0);
        assert_eq!(ev("pow(2, 0.5)", env), 2f64.sqrt());
        assert!((ev("sin(pi / 2) + exp(0) + cos(0)", env) - 3.0).abs() < 1e-15);
        assert_eq!(ev("1.5e-1 * 2", env), 0.3);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("z").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("1 # 2").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let srcs = [
            "x1 * (1 - x1) * exp(2 * t)",
            "sin(pi * x1) * cos(x2) / (1 + x1^2)",
            "pow(1 + x1, 1.5) + sqrt(2 + x2) - log(3 + t)",
            "x1 ^ x2 + abs(x1 - 0.3)",
            "max(x1, x2) * min(t, 0.2)",
        ];
        let env = Env::new(1.0, 0.37, [0.61, 0.44]);
        for src in srcs {
            let e = Expr::parse(src).unwrap();
            for var in [Var::T, Var::X1, Var::X2] {
                let d = e.diff(var).eval(&env);
                let h = 1e-6;
                let mut lo = env;
                let mut hi = env;
                match var {
                    Var::T => {
                        lo.t -= h;
                        hi.t += h
                    }
                    Var::X1 => {
                        lo.x[0] -= h;
                        hi.x[0] += h
                    }
                    Var::X2 => {
                        lo.x[1] -= h;
                        hi.x[1] += h
                    }
                    Var::Alpha => unreachable!(),
                }
                let fd = (e.eval(&hi) - e.eval(&lo)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{src} d/{var:?}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn second_derivative_of_barrier() {
        let e = Expr::parse("x1 * (1 - x1)").unwrap();
        let h = e.diff(Var::X1).diff(Var::X1);
        assert_eq!(h.eval(&Env::new(0.0, 0.0, [0.3, 0.0])), -2.0);
        assert_eq!(e.diff(Var::T), Expr::Const(0.0));
    }
}
