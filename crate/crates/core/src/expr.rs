//! Small arithmetic-expression language for user-supplied profiles.
//!
//! Supports `+ - * / ^`, unary minus, parentheses, the functions
//! `sin cos tan sec ln exp`, the constant `pi` and a caller-defined list of
//! variables (`x1`, `x2`). Expressions can be differentiated symbolically so
//! that derivative profiles are exact rather than finite-differenced.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sec,
    Ln,
    Exp,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sec" => Func::Sec,
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sec => "sec",
            Func::Ln => "ln",
            Func::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Sec => 1.0 / v.cos(),
            Func::Ln => v.ln(),
            Func::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

// Smart constructors doing light constant folding so derivative trees stay small.
fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
        (Node::Const(x), _) if *x == 0.0 => b,
        (_, Node::Const(y)) if *y == 0.0 => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
        (_, Node::Const(y)) if *y == 0.0 => a,
        (Node::Const(x), _) if *x == 0.0 => neg(b),
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
        (Node::Const(x), _) | (_, Node::Const(x)) if *x == 0.0 => Node::Const(0.0),
        (Node::Const(x), _) if *x == 1.0 => b,
        (_, Node::Const(y)) if *y == 1.0 => a,
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if *y != 0.0 => Node::Const(x / y),
        (Node::Const(x), _) if *x == 0.0 => Node::Const(0.0),
        (_, Node::Const(y)) if *y == 1.0 => a,
        _ => Node::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x.powf(*y)),
        (_, Node::Const(y)) if *y == 1.0 => a,
        (_, Node::Const(y)) if *y == 0.0 => Node::Const(1.0),
        _ => Node::Pow(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(x) => Node::Const(-x),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Node) -> Node {
    match a {
        Node::Const(x) => Node::Const(f.apply(x)),
        other => Node::Call(f, Box::new(other)),
    }
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
                    Node::Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(vars)),
        }
    }

    fn depends_on(&self, var: usize) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(i) => *i == var,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(var),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    fn diff(&self, var: usize) -> Node {
        if !self.depends_on(var) {
            return Node::Const(0.0);
        }
        match self {
            Node::Const(_) => Node::Const(0.0),
            Node::Var(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => neg(a.diff(var)),
            Node::Add(a, b) => add(a.diff(var), b.diff(var)),
            Node::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Node::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Node::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), Node::Const(2.0)),
            ),
            Node::Pow(a, b) => {
                if !b.depends_on(var) {
                    // d(u^c) = c u^(c-1) u'
                    mul(
                        mul(
                            (**b).clone(),
                            pow((**a).clone(), sub((**b).clone(), Node::Const(1.0))),
                        ),
                        a.diff(var),
                    )
                } else {
                    // d(u^v) = u^v (v' ln u + v u'/u)
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(var), call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Node::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => pow(call(Func::Sec, inner), Node::Const(2.0)),
                    Func::Sec => mul(call(Func::Sec, inner.clone()), call(Func::Tan, inner)),
                    Func::Ln => div(Node::Const(1.0), inner),
                    Func::Exp => call(Func::Exp, inner),
                };
                mul(outer, a.diff(var))
            }
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, vars: &[String]) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(i) => write!(f, "{}", vars[*i]),
            Node::Neg(a) => {
                write!(f, "(-")?;
                a.write(f, vars)?;
                write!(f, ")")
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, vars)?;
                write!(f, ")")
            }
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                let op = match self {
                    Node::Add(..) => "+",
                    Node::Sub(..) => "-",
                    Node::Mul(..) => "*",
                    Node::Div(..) => "/",
                    _ => "^",
                };
                write!(f, "(")?;
                a.write(f, vars)?;
                write!(f, " {op} ")?;
                b.write(f, vars)?;
                write!(f, ")")
            }
        }
    }
}

/// A parsed expression over a fixed list of named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Vec<String>,
}

impl Expression {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(Error::Expression {
                pos: tok.pos,
                msg: format!("unexpected token `{}`", tok.kind),
            });
        }
        Ok(Self {
            root,
            vars: vars.iter().map(|v| v.to_string()).collect(),
        })
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        debug_assert_eq!(vars.len(), self.vars.len());
        self.root.eval(vars)
    }

    /// Symbolic partial derivative with respect to the named variable.
    pub fn derivative(&self, var: &str) -> Result<Self> {
        let idx = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::Expression {
                pos: 0,
                msg: format!("unknown variable `{var}`"),
            })?;
        Ok(Self {
            root: self.root.diff(idx),
            vars: self.vars.clone(),
        })
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.vars
            .iter()
            .position(|v| v == var)
            .is_some_and(|i| self.root.depends_on(i))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, &self.vars)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(n) => write!(f, "{n}"),
            TokenKind::Ident(s) => write!(f, "{s}"),
            TokenKind::Op(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| Error::Expression {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(value),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                kind: TokenKind::Op(c),
                pos: i,
            });
            i += 1;
        } else {
            return Err(Error::Expression {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.pos + 1)
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            let pos = self.tokens.get(self.pos).map_or(self.end_pos(), |t| t.pos);
            Err(Error::Expression {
                pos,
                msg: format!("expected `{op}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                add(lhs, rhs)
            } else {
                sub(lhs, rhs)
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
                mul(lhs, rhs)
            } else {
                div(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(neg(self.unary()?))
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
            // right associative, binds tighter than unary minus on the left
            let exponent = self.unary()?;
            return Ok(pow(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(Error::Expression {
                pos: self.end_pos(),
                msg: "unexpected end of expression".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Const(v)),
            TokenKind::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(call(func, arg));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(Error::Expression {
                        pos: tok.pos,
                        msg: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            TokenKind::Op(c) => Err(Error::Expression {
                pos: tok.pos,
                msg: format!("unexpected `{c}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, x: f64) -> f64 {
        Expression::parse(src, &["x1"]).unwrap().eval(&[x])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval1("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval1("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(eval1("-2 ^ 2", 0.0), -4.0);
        assert_eq!(eval1("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(eval1("(1 - 3) * x1", 2.0), -4.0);
        assert!((eval1("2.5e-1 * 4", 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn functions_and_constants() {
        let x: f64 = 0.3;
        assert!((eval1("sec(x1)", x) - 1.0 / x.cos()).abs() < 1e-15);
        assert!((eval1("ln(exp(x1))", x) - x).abs() < 1e-15);
        assert!((eval1("sin(pi/2)", 0.0) - 1.0).abs() < 1e-15);
        assert!((eval1("tan(x1)", x) - x.tan()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "ln(sec(x1) + tan(x1))",
            "x1^3 - 2*x1",
            "exp(-x1^2) * cos(3*x1)",
            "1 / (2 + cos(x1))^2",
            "x1^x1",
            "sin(x1)/x1",
        ];
        for src in cases {
            let e = Expression::parse(src, &["x1"]).unwrap();
            let d = e.derivative("x1").unwrap();
            let dd = d.derivative("x1").unwrap();
            for &x in &[0.4, 0.9, 1.2] {
                let h = 1e-5;
                let fd = (e.eval(&[x + h]) - e.eval(&[x - h])) / (2.0 * h);
                let fd2 = (d.eval(&[x + h]) - d.eval(&[x - h])) / (2.0 * h);
                assert!(
                    (d.eval(&[x]) - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{src} at {x}"
                );
                assert!(
                    (dd.eval(&[x]) - fd2).abs() < 1e-5 * (1.0 + fd2.abs()),
                    "{src}'' at {x}"
                );
            }
        }
    }

    #[test]
    fn partial_derivatives_in_two_variables() {
        let e = Expression::parse("-2*cos(x2) - 3*cos(x1 + x2)", &["x1", "x2"]).unwrap();
        let d21 = e.derivative("x1").unwrap().derivative("x2").unwrap();
        let (a, b) = (0.7, -0.2);
        assert!((d21.eval(&[a, b]) - 3.0 * (a + b).cos()).abs() < 1e-14);
        assert!(!e.derivative("x1").unwrap().depends_on("x3"));
    }

    #[test]
    fn errors_carry_positions() {
        match Expression::parse("1 + foo", &["x1"]) {
            Err(Error::Expression { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        assert!(Expression::parse("sin(x1", &["x1"]).is_err());
        assert!(Expression::parse("1 $ 2", &["x1"]).is_err());
        assert!(Expression::parse("", &["x1"]).is_err());
        assert!(Expression::parse("1 2", &["x1"]).is_err());
    }

    #[test]
    fn display_reparses_to_same_values() {
        let e = Expression::parse("-(x1 - 2)^2 / sec(x1) + exp(-1.5)", &["x1"]).unwrap();
        let again = Expression::parse(&e.to_string(), &["x1"]).unwrap();
        for &x in &[-1.0, 0.0, 0.5] {
            assert!((e.eval(&[x]) - again.eval(&[x])).abs() < 1e-14);
        }
    }
}
