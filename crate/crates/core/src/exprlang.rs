//! A small arithmetic expression language for the model nonlinearities.
//!
//! The heat source `h`, the phase forcing `g` and the boundary curves are all
//! given in the run configuration as strings such as `"12 + 6*cos(2*pi*t) - 0.5*v"`.
//! Expressions may reference the variables `t`, `u` and `v`, the constant `pi`,
//! and the functions `min`, `max`, `abs`, `tanh`, `sin`, `cos`, `exp_neg`
//! (`x ↦ e^{-x}`) and `clamp(x, lo, hi)`.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntaxError {
    #[error("unexpected end of input at offset {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("unexpected token `{found}` at offset {offset}")]
    UnexpectedToken { offset: usize, found: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` at offset {offset} takes {expected} argument(s), got {found}")]
    Arity {
        offset: usize,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unbalanced parenthesis at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("invalid number literal at offset {offset}")]
    BadNumber { offset: usize },
    #[error("expression nesting exceeds {MAX_DEPTH} levels at offset {offset}")]
    TooDeep { offset: usize },
    #[error("empty expression")]
    Empty,
}

impl SyntaxError {
    pub fn offset(&self) -> usize {
        match self {
            SyntaxError::UnexpectedEnd { offset }
            | SyntaxError::UnexpectedToken { offset, .. }
            | SyntaxError::UnknownIdentifier { offset, .. }
            | SyntaxError::Arity { offset, .. }
            | SyntaxError::Unbalanced { offset }
            | SyntaxError::BadNumber { offset }
            | SyntaxError::TooDeep { offset } => *offset,
            SyntaxError::Empty => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("clamp bounds out of order: lo = {lo}, hi = {hi}")]
    ClampBounds { lo: f64, hi: f64 },
    #[error("non-finite result in `{0}`")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    U,
    V,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::U => "u",
            Var::V => "v",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Tanh,
    Sin,
    Cos,
    ExpNeg,
    Clamp,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp_neg" => Func::ExpNeg,
            "clamp" => Func::Clamp,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::ExpNeg => "exp_neg",
            Func::Clamp => "clamp",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Clamp => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, SyntaxError> {
        Parser::new(src)?.parse_all()
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Num(c)
    }

    pub fn eval(&self, t: f64, u: f64, v: f64) -> Result<f64, EvalError> {
        let x = match self {
            Expr::Num(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::U) => u,
            Expr::Var(Var::V) => v,
            Expr::Neg(a) => -a.eval(t, u, v)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(t, u, v)?;
                let b = b.eval(t, u, v)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(t, u, v)?;
                match f {
                    Func::Min => x.min(args[1].eval(t, u, v)?),
                    Func::Max => x.max(args[1].eval(t, u, v)?),
                    Func::Abs => x.abs(),
                    Func::Tanh => x.tanh(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::ExpNeg => (-x).exp(),
                    Func::Clamp => {
                        let lo = args[1].eval(t, u, v)?;
                        let hi = args[2].eval(t, u, v)?;
                        if lo > hi {
                            return Err(EvalError::ClampBounds { lo, hi });
                        }
                        x.clamp(lo, hi)
                    }
                }
            }
        };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(EvalError::NonFinite(self.kind()))
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Expr::Num(_) => "literal",
            Expr::Pi => "pi",
            Expr::Var(v) => v.name(),
            Expr::Neg(_) => "negation",
            Expr::Bin(op, ..) => match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            },
            Expr::Call(f, _) => f.name(),
        }
    }

    /// Collapses every subtree that does not reference a variable into a literal.
    /// Subtrees whose evaluation fails are left as they are.
    pub fn fold_constants(&self) -> Expr {
        let folded = match self {
            Expr::Neg(a) => Expr::Neg(Box::new(a.fold_constants())),
            Expr::Bin(op, a, b) => {
                Expr::Bin(*op, Box::new(a.fold_constants()), Box::new(b.fold_constants()))
            }
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(Expr::fold_constants).collect()),
            other => other.clone(),
        };
        if !folded.uses_any_var() && !matches!(folded, Expr::Num(_)) {
            if let Ok(c) = folded.eval(0.0, 0.0, 0.0) {
                return Expr::Num(c);
            }
        }
        folded
    }

    pub fn uses_var(&self, var: Var) -> bool {
        match self {
            Expr::Var(v) => *v == var,
            Expr::Num(_) | Expr::Pi => false,
            Expr::Neg(a) => a.uses_var(var),
            Expr::Bin(_, a, b) => a.uses_var(var) || b.uses_var(var),
            Expr::Call(_, args) => args.iter().any(|a| a.uses_var(var)),
        }
    }

    fn uses_any_var(&self) -> bool {
        self.uses_var(Var::T) || self.uses_var(Var::U) || self.uses_var(Var::V)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Var(_) => 1,
            Expr::Neg(a) => 1 + a.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Pi => f.write_str("pi"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => {
                // unary minus binds tighter than every binary operator
                f.write_str("-")?;
                a.write_prec(f, 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let paren = p < min_prec;
                if paren {
                    f.write_str("(")?;
                }
                a.write_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                // left associativity: an equal-precedence right operand needs parentheses
                b.write_prec(f, p + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.write_prec(f, 0)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical printer; `Expr::parse(&e.to_string())` rebuilds the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl std::str::FromStr for Expr {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let value: f64 = src[start..i]
                    .parse()
                    .map_err(|_| SyntaxError::BadNumber { offset: start })?;
                if !value.is_finite() {
                    return Err(SyntaxError::BadNumber { offset: start });
                }
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(SyntaxError::UnexpectedToken {
                    offset: start,
                    found: ch.to_string(),
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    depth: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, SyntaxError> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(SyntaxError::Empty);
        }
        Ok(Parser {
            toks,
            pos: 0,
            end: src.len(),
            depth: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn unexpected(&self) -> SyntaxError {
        match self.toks.get(self.pos) {
            None => SyntaxError::UnexpectedEnd { offset: self.end },
            Some((offset, Tok::RParen)) => SyntaxError::Unbalanced { offset: *offset },
            Some((offset, tok)) => SyntaxError::UnexpectedToken {
                offset: *offset,
                found: describe(tok),
            },
        }
    }

    fn parse_all(mut self) -> Result<Expr, SyntaxError> {
        let e = self.expr()?;
        if self.pos < self.toks.len() {
            return Err(self.unexpected());
        }
        Ok(e)
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SyntaxError::TooDeep {
                offset: self.offset(),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Some(op) = match self.peek() {
            Some(Tok::Plus) => Some(BinOp::Add),
            Some(Tok::Minus) => Some(BinOp::Sub),
            _ => None,
        } {
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        check_depth(lhs, self.offset())
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = match self.peek() {
            Some(Tok::Star) => Some(BinOp::Mul),
            Some(Tok::Slash) => Some(BinOp::Div),
            _ => None,
        } {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                self.enter()?;
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(Expr::Neg(Box::new(inner)))
            }
            Some(Tok::Plus) => {
                self.bump();
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let offset = self.offset();
        match self.bump() {
            Some((_, Tok::Num(c))) => Ok(Expr::Num(c)),
            Some((_, Tok::LParen)) => {
                let e = self.expr()?;
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(e),
                    None => Err(SyntaxError::Unbalanced { offset: self.end }),
                    Some(_) => {
                        self.pos -= 1;
                        Err(self.unexpected())
                    }
                }
            }
            Some((_, Tok::Ident(name))) => self.ident(name, offset),
            Some(_) => {
                self.pos -= 1;
                Err(self.unexpected())
            }
            None => Err(SyntaxError::UnexpectedEnd { offset: self.end }),
        }
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<Expr, SyntaxError> {
        match name.as_str() {
            "t" => return Ok(Expr::Var(Var::T)),
            "u" => return Ok(Expr::Var(Var::U)),
            "v" => return Ok(Expr::Var(Var::V)),
            "pi" => return Ok(Expr::Pi),
            _ => {}
        }
        let Some(func) = Func::lookup(&name) else {
            return Err(SyntaxError::UnknownIdentifier { offset, name });
        };
        if self.peek() != Some(&Tok::LParen) {
            return Err(self.unexpected());
        }
        self.bump();
        self.enter()?;
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.bump();
        } else {
            loop {
                args.push(self.expr()?);
                match self.bump() {
                    Some((_, Tok::Comma)) => continue,
                    Some((_, Tok::RParen)) => break,
                    None => return Err(SyntaxError::UnexpectedEnd { offset: self.end }),
                    Some(_) => {
                        self.pos -= 1;
                        return Err(self.unexpected());
                    }
                }
            }
        }
        self.depth -= 1;
        if args.len() != func.arity() {
            return Err(SyntaxError::Arity {
                offset,
                name,
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

fn check_depth(e: Expr, offset: usize) -> Result<Expr, SyntaxError> {
    if e.depth() > MAX_DEPTH {
        Err(SyntaxError::TooDeep { offset })
    } else {
        Ok(e)
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(c) => format!("{c}"),
        Tok::Ident(s) => s.clone(),
        Tok::Plus => "+".into(),
        Tok::Minus => "-".into(),
        Tok::Star => "*".into(),
        Tok::Slash => "/".into(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Comma => ",".into(),
    }
}

/// Settings for [`estimate_lipschitz`].
#[derive(Debug, Clone)]
pub struct LipschitzProbe {
    pub var: Var,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub t_range: (f64, f64),
    pub samples: usize,
    pub seed: u64,
}

pub const LIPSCHITZ_SAFETY: f64 = 1.05;

/// Largest sampled difference quotient in `probe.var`, times [`LIPSCHITZ_SAFETY`].
///
/// Half of the pairs are drawn independently over the box, the other half as
/// log-uniformly small perturbations of a random base point, so that steep but
/// narrow features are seen. The result is an estimate, not a bound.
/// Pairs on which evaluation fails are skipped.
pub fn estimate_lipschitz(e: &Expr, probe: &LipschitzProbe) -> f64 {
    assert!(probe.samples >= 1000, "at least 10^3 samples are required");
    if !e.uses_var(probe.var) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let range = match probe.var {
        Var::T => probe.t_range,
        Var::U => probe.u_range,
        Var::V => probe.v_range,
    };
    let width = (range.1 - range.0).max(f64::MIN_POSITIVE);
    let mut best: f64 = 0.0;
    for k in 0..probe.samples {
        let mut p = [
            draw(&mut rng, probe.t_range),
            draw(&mut rng, probe.u_range),
            draw(&mut rng, probe.v_range),
        ];
        let idx = match probe.var {
            Var::T => 0,
            Var::U => 1,
            Var::V => 2,
        };
        let x0 = p[idx];
        let x1 = if k % 2 == 0 {
            draw(&mut rng, range)
        } else {
            let scale = width * 10f64.powf(rng.gen_range(-6.0..0.0));
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (x0 + sign * scale).clamp(range.0, range.1)
        };
        if x1 == x0 {
            continue;
        }
        let Ok(f0) = e.eval(p[0], p[1], p[2]) else {
            continue;
        };
        p[idx] = x1;
        let Ok(f1) = e.eval(p[0], p[1], p[2]) else {
            continue;
        };
        best = best.max((f1 - f0).abs() / (x1 - x0).abs());
    }
    best * LIPSCHITZ_SAFETY
}
