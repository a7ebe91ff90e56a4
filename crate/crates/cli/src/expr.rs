//! A small real-valued expression language for coefficient fields, paths and
//! sections.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" unary)?
//! primary := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-x1^2`
//! is `-(x1^2)` and `2^3^2` is `2^9`. Identifiers are variables, except the
//! constant `pi` and the functions `sin cos tan exp log sqrt abs atan2`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message} (expected {expected})")]
pub struct SyntaxError {
    /// 1-based character position.
    pub position: usize,
    pub message: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("power {0}^{1} is undefined")]
    PowDomain(f64, f64),
    #[error("non-finite result in {0}")]
    NonFinite(String),
    #[error("unbound variable {0}")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variable '{name}' (allowed: {allowed})")]
pub struct BindError {
    pub name: String,
    pub allowed: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // Optional exponent, only when followed by digits.
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| SyntaxError {
                position: pos,
                message: format!("malformed number '{text}'"),
                expected: "a decimal literal".into(),
            })?;
            out.push((Tok::Num(value), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(SyntaxError {
                    position: pos,
                    message: format!("unexpected character '{c}'"),
                    expected: "a number, identifier, operator or parenthesis".into(),
                })
            }
        };
        out.push((tok, pos));
        i += 1;
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

/// Nesting limit that keeps the recursive descent off the end of the stack.
pub const MAX_DEPTH: usize = 200;
/// Longest accepted input, in tokens.
pub const MAX_TOKENS: usize = 4096;

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.pos(),
            message: format!("unexpected {}", self.peek().describe()),
            expected: expected.into(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SyntaxError {
                position: self.pos(),
                message: format!("expression nested deeper than {MAX_DEPTH} levels"),
                expected: "a shallower expression".into(),
            });
        }
        let r = self.unary_inner();
        self.depth -= 1;
        r
    }

    fn unary_inner(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        const OPERAND: &str = "a number, variable, function call or '('";
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let start = self.pos();
                self.bump();
                let is_call = *self.peek() == Tok::LParen;
                if name == "atan2" {
                    if !is_call {
                        return self.fail("'(' after atan2");
                    }
                    self.bump();
                    let y = self.expr()?;
                    self.expect(Tok::Comma, "',' between the two arguments of atan2")?;
                    let x = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    return Ok(Expr::Atan2(Box::new(y), Box::new(x)));
                }
                if let Some(f) = Func::from_name(&name) {
                    if !is_call {
                        return self.fail(&format!("'(' after {name}"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() == Tok::Comma {
                        return self.fail(&format!("')' ({name} takes one argument)"));
                    }
                    self.expect(Tok::RParen, "')'")?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if is_call {
                    return Err(SyntaxError {
                        position: start,
                        message: format!("unknown function '{name}'"),
                        expected: "one of sin, cos, tan, exp, log, sqrt, abs, atan2".into(),
                    });
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                Ok(Expr::Var(name))
            }
            _ => self.fail(OPERAND),
        }
    }
}

/// Parse `src` into an expression tree.
pub fn parse_expression(src: &str) -> Result<Expr, SyntaxError> {
    let toks = lex(src)?;
    if toks.len() > MAX_TOKENS {
        return Err(SyntaxError {
            position: toks[MAX_TOKENS].1,
            message: format!("expression longer than {MAX_TOKENS} tokens"),
            expected: "a shorter expression".into(),
        });
    }
    let mut p = Parser { toks, at: 0, depth: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("an operator or end of input");
    }
    // Long operator chains nest without going through `unary`.
    if e.depth() > 2 * MAX_DEPTH {
        return Err(SyntaxError {
            position: 1,
            message: format!("expression tree deeper than {} levels", 2 * MAX_DEPTH),
            expected: "a shallower expression".into(),
        });
    }
    Ok(e)
}

fn finite(v: f64, what: &dyn fmt::Display) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(what.to_string()))
    }
}

fn apply_bin(op: BinOp, x: f64, y: f64) -> Result<f64, EvalError> {
    Ok(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            x / y
        }
        BinOp::Pow => {
            let r = x.powf(y);
            if r.is_nan() || (x == 0.0 && y < 0.0) {
                return Err(EvalError::PowDomain(x, y));
            }
            r
        }
    })
}

fn apply_func(f: Func, x: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(EvalError::LogDomain(x));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(EvalError::SqrtDomain(x));
            }
            x.sqrt()
        }
        Func::Abs => x.abs(),
    })
}

impl Expr {
    /// Evaluate with a variable lookup.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => lookup(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Neg(a) => -a.eval_with(lookup)?,
            Expr::Bin(op, a, b) => apply_bin(*op, a.eval_with(lookup)?, b.eval_with(lookup)?)?,
            Expr::Call(f, a) => apply_func(*f, a.eval_with(lookup)?)?,
            Expr::Atan2(y, x) => y.eval_with(lookup)?.atan2(x.eval_with(lookup)?),
        };
        finite(v, self)
    }

    /// Evaluate with named variables.
    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64, EvalError> {
        self.eval_with(&|name| vars.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
    }

    /// Height of the tree.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.depth(),
            Expr::Bin(_, a, b) | Expr::Atan2(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Variables referenced by the expression, in first-use order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) | Expr::Atan2(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Resolve variables against `names` for fast positional evaluation.
    pub fn bind(&self, names: &[&str]) -> Result<Compiled, BindError> {
        for v in self.variables() {
            if !names.contains(&v.as_str()) {
                return Err(BindError { name: v, allowed: names.join(", ") });
            }
        }
        Ok(Compiled { node: Node::build(self, names), arity: names.len() })
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn derivative(&self, var: &str) -> Expr {
        use Expr::*;
        let d = |e: &Expr| e.derivative(var);
        match self {
            Num(_) => Num(0.0),
            Var(n) => Num(if n == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(d(a)),
            Bin(BinOp::Add, a, b) => add(d(a), d(b)),
            Bin(BinOp::Sub, a, b) => sub(d(a), d(b)),
            Bin(BinOp::Mul, a, b) => add(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
            Bin(BinOp::Div, a, b) => div(
                sub(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
                pow((**b).clone(), Num(2.0)),
            ),
            Bin(BinOp::Pow, a, b) => {
                let (da, db) = (d(a), d(b));
                if is_zero(&db) {
                    // d(u^c) = c·u^(c−1)·u′
                    mul(mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), Num(1.0)))), da)
                } else {
                    // d(u^v) = u^v·(v′·log u + v·u′/u)
                    mul(
                        self.clone(),
                        add(mul(db, call(Func::Log, (**a).clone())), div(mul((**b).clone(), da), (**a).clone())),
                    )
                }
            }
            Call(f, a) => {
                let da = d(a);
                let u = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, u),
                    Func::Cos => neg(call(Func::Sin, u)),
                    Func::Tan => add(Num(1.0), pow(call(Func::Tan, u), Num(2.0))),
                    Func::Exp => call(Func::Exp, u),
                    Func::Log => div(Num(1.0), u),
                    Func::Sqrt => div(Num(1.0), mul(Num(2.0), call(Func::Sqrt, u))),
                    Func::Abs => div(u.clone(), call(Func::Abs, u)),
                };
                mul(outer, da)
            }
            Atan2(y, x) => {
                let (dy, dx) = (d(y), d(x));
                let (y, x) = ((**y).clone(), (**x).clone());
                div(
                    sub(mul(x.clone(), dy), mul(y.clone(), dx)),
                    add(pow(x, Num(2.0)), pow(y, Num(2.0))),
                )
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (a, b) if is_zero(&b) => a,
        (a, b) if is_zero(&a) => b,
        (a, b) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (a, b) if is_zero(&b) => a,
        (a, b) if is_zero(&a) => neg(b),
        (a, b) => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (a, b) if is_zero(&a) || is_zero(&b) => Expr::Num(0.0),
        (a, b) if is_one(&a) => b,
        (a, b) if is_one(&b) => a,
        (a, b) => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_zero(&a) && !is_zero(&b) => Expr::Num(0.0),
        (a, b) if is_one(&b) => a,
        (a, b) => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_one(&b) => a,
        (_, b) if is_zero(&b) => Expr::Num(1.0),
        (a, b) => Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Atan2(y, x) => write!(f, "atan2({y}, {x})"),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Atan2(Box<Node>, Box<Node>),
}

impl Node {
    fn build(e: &Expr, names: &[&str]) -> Node {
        match e {
            Expr::Num(v) => Node::Num(*v),
            Expr::Var(n) => Node::Var(names.iter().position(|m| m == n).expect("checked by bind")),
            Expr::Neg(a) => Node::Neg(Box::new(Node::build(a, names))),
            Expr::Bin(op, a, b) => Node::Bin(*op, Box::new(Node::build(a, names)), Box::new(Node::build(b, names))),
            Expr::Call(f, a) => Node::Call(*f, Box::new(Node::build(a, names))),
            Expr::Atan2(y, x) => Node::Atan2(Box::new(Node::build(y, names)), Box::new(Node::build(x, names))),
        }
    }

    fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Var(i) => args[*i],
            Node::Neg(a) => -a.eval(args)?,
            Node::Bin(op, a, b) => apply_bin(*op, a.eval(args)?, b.eval(args)?)?,
            Node::Call(f, a) => apply_func(*f, a.eval(args)?)?,
            Node::Atan2(y, x) => y.eval(args)?.atan2(x.eval(args)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            let names: Vec<String> = (0..args.len()).map(|i| format!("arg{}", i + 1)).collect();
            Err(EvalError::NonFinite(self.to_expr(&names).to_string()))
        }
    }

    fn to_expr(&self, names: &[String]) -> Expr {
        match self {
            Node::Num(v) => Expr::Num(*v),
            Node::Var(i) => Expr::Var(names[*i].clone()),
            Node::Neg(a) => Expr::Neg(Box::new(a.to_expr(names))),
            Node::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.to_expr(names)), Box::new(b.to_expr(names))),
            Node::Call(f, a) => Expr::Call(*f, Box::new(a.to_expr(names))),
            Node::Atan2(y, x) => Expr::Atan2(Box::new(y.to_expr(names)), Box::new(x.to_expr(names))),
        }
    }
}

/// An expression with variables resolved to argument positions.
#[derive(Debug, Clone)]
pub struct Compiled {
    node: Node,
    arity: usize,
}

impl Compiled {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.node, Node::Num(_))
    }

    /// Evaluate at `args` (one value per bound variable name).
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        if args.len() != self.arity {
            return Err(EvalError::Unbound(format!("expected {} arguments, got {}", self.arity, args.len())));
        }
        self.node.eval(args)
    }

    /// Symbolic derivative with respect to argument `k`.
    pub fn derivative(&self, k: usize) -> Compiled {
        let names: Vec<String> = (0..self.arity).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let d = self.node.to_expr(&names).derivative(&names[k]);
        d.bind(&refs).expect("derivative introduces no new variables")
    }
}
