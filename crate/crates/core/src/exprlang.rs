//! Scalar expressions in the single variable `t`.
//!
//! Every time-varying quantity in a system description (matrix entries,
//! delayed arguments, forcing, initial functions) is an [`Expr`]. The
//! grammar is small and closed:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 't' | func '(' expr ')' | 'pow' '(' expr ',' expr ')' | '(' expr ')'
//! func    := 'abs' | 'sin' | 'cos' | 'exp' | 'sqrt'
//! ```
//!
//! Unary minus binds looser than `^`, so `-2^2` is `-(2^2) = -4`, while
//! `2^-1` is `0.5`. Exponentiation is right associative. The only free
//! variable is `t`; any other identifier is rejected unless the caller
//! supplies it as a named constant through [`parse_with`].

use std::fmt;
use std::ops;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Abs => "abs",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => UnaryOp::Abs,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Expression tree. Immutable once built; evaluation never mutates it.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// The time variable `t`.
    Var,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at position {position}")]
pub struct ParseError {
    /// Character offset into the source, zero based.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at t = {t}")]
    DivisionByZero { t: f64 },
    #[error("square root of negative value {value} at t = {t}")]
    NegativeSqrt { value: f64, t: f64 },
    #[error("pow({base}, {exponent}) is undefined at t = {t}")]
    Pow { base: f64, exponent: f64, t: f64 },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var() -> Self {
        Expr::Var
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn pow(self, exponent: Expr) -> Self {
        Expr::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn sin(self) -> Self {
        Expr::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Self {
        Expr::unary(UnaryOp::Cos, self)
    }

    pub fn abs(self) -> Self {
        Expr::unary(UnaryOp::Abs, self)
    }

    pub fn exp(self) -> Self {
        Expr::unary(UnaryOp::Exp, self)
    }

    pub fn sqrt(self) -> Self {
        Expr::unary(UnaryOp::Sqrt, self)
    }

    /// Evaluate at time `t`.
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var => Ok(t),
            Expr::Unary(op, arg) => {
                let v = arg.eval(t)?;
                match op {
                    UnaryOp::Neg => Ok(-v),
                    UnaryOp::Abs => Ok(v.abs()),
                    UnaryOp::Sin => Ok(v.sin()),
                    UnaryOp::Cos => Ok(v.cos()),
                    UnaryOp::Exp => Ok(v.exp()),
                    UnaryOp::Sqrt if v < 0.0 => Err(EvalError::NegativeSqrt { value: v, t }),
                    UnaryOp::Sqrt => Ok(v.sqrt()),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(t)?;
                let b = rhs.eval(t)?;
                match op {
                    BinaryOp::Add => Ok(a + b),
                    BinaryOp::Sub => Ok(a - b),
                    BinaryOp::Mul => Ok(a * b),
                    BinaryOp::Div if b == 0.0 => Err(EvalError::DivisionByZero { t }),
                    BinaryOp::Div => Ok(a / b),
                    BinaryOp::Pow => {
                        // 0^negative is a hidden division by zero; a negative base
                        // with a fractional exponent has no real value.
                        let v = powf(a, b);
                        if (a == 0.0 && b < 0.0) || (v.is_nan() && !a.is_nan() && !b.is_nan()) {
                            Err(EvalError::Pow {
                                base: a,
                                exponent: b,
                                t,
                            })
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
        }
    }

    /// True when the expression does not mention `t`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var => false,
            Expr::Unary(_, a) => a.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Value of a `t`-free expression, `None` if it depends on `t` or fails
    /// to evaluate.
    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            self.eval(0.0).ok()
        } else {
            None
        }
    }

    /// True for a `t`-free expression that evaluates to zero.
    pub fn is_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Canonical fully parenthesized source text; parsing it back yields an
    /// expression that evaluates identically.
    pub fn unparse(&self) -> String {
        self.to_string()
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }
}

// Integer exponents go through powi so that e.g. cos(t)^3 matches repeated
// multiplication closely and negative bases stay defined.
fn powf(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => f.write_str("t"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinaryOp::Add);
impl_binop!(Sub, sub, BinaryOp::Sub);
impl_binop!(Mul, mul, BinaryOp::Mul);
impl_binop!(Div, div, BinaryOp::Div);

/// Parse an expression in which `t` is the only identifier.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    parse_with(source, &|_| None)
}

/// Parse with extra named constants. `lookup` is consulted for every
/// identifier other than `t` and the function names; identifiers it
/// resolves become literal constants in the tree.
pub fn parse_with(source: &str, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.chars().count(),
        lookup,
    };
    if parser.tokens.is_empty() {
        return Err(ParseError {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let expr = parser.expr()?;
    match parser.peek() {
        None => Ok(expr),
        Some(tok) => Err(parser.error_at(tok.position, format!("unexpected {}", tok.kind.describe()))),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier '{s}'"),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Minus => "'-'".into(),
            TokenKind::Star => "'*'".into(),
            TokenKind::Slash => "'/'".into(),
            TokenKind::Caret => "'^'".into(),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::Comma => "','".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => TokenKind::Plus,
            '-' => TokenKind::Minus,
            '*' => TokenKind::Star,
            '/' => TokenKind::Slash,
            '^' => TokenKind::Caret,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            ',' => TokenKind::Comma,
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
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
                let value: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number '{text}'"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError {
                        position: start,
                        message: format!("number '{text}' out of range"),
                    });
                }
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    position: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(chars[start..i].iter().collect()),
                    position: start,
                });
                continue;
            }
            other => {
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character '{other}'"),
                })
            }
        };
        tokens.push(Token { kind, position: start });
        i += 1;
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    lookup: &'a dyn Fn(&str) -> Option<f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn advance(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn error_at(&self, position: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            position,
            message: message.into(),
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        match self.peek() {
            Some(tok) if tok.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(self.error_at(
                tok.position,
                format!("expected {} but found {}", kind.describe(), tok.kind.describe()),
            )),
            None => Err(self.error_at(self.end, format!("expected {} at end of input", kind.describe()))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Plus) => BinaryOp::Add,
                Some(TokenKind::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Minus) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(TokenKind::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek_kind() == Some(&TokenKind::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(base.pow(exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let position = self.here();
        let Some(tok) = self.advance() else {
            return Err(self.error_at(position, "expected operand at end of input"));
        };
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)
                    .map_err(|e| self.error_at(e.position, format!("unbalanced parenthesis opened at {position}: {}", e.message)))?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(name, position),
            other => Err(self.error_at(position, format!("expected operand but found {}", other.describe()))),
        }
    }

    fn identifier(&mut self, name: String, position: usize) -> Result<Expr, ParseError> {
        let is_call = self.peek_kind() == Some(&TokenKind::LParen);
        if is_call {
            if name == "pow" {
                self.pos += 1;
                let base = self.expr()?;
                self.expect(TokenKind::Comma)?;
                let exponent = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(base.pow(exponent));
            }
            if let Some(op) = UnaryOp::from_name(&name) {
                self.pos += 1;
                let arg = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(Expr::unary(op, arg));
            }
            return Err(self.error_at(position, format!("unknown function '{name}'")));
        }
        if name == "t" {
            return Ok(Expr::Var);
        }
        if name == "pow" || UnaryOp::from_name(&name).is_some() {
            return Err(self.error_at(position, format!("function '{name}' requires an argument list")));
        }
        match (self.lookup)(&name) {
            Some(v) if v.is_finite() => Ok(Expr::Const(v)),
            Some(v) => Err(self.error_at(position, format!("constant '{name}' is not finite ({v})"))),
            None => Err(self.error_at(position, format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ev(src: &str, t: f64) -> f64 {
        parse(src).unwrap().eval(t).unwrap()
    }

    #[test]
    fn basic_examples() {
        assert_eq!(ev("sin(t)", 0.0), 0.0);
        assert_eq!(ev("-(1-3*cos(t))", 0.0), 2.0);
        assert_eq!(ev("t - 0.1*abs(sin(t))", 0.0), 0.0);
        assert!((ev("cos(2*t)", FRAC_PI_2) + 1.0).abs() < 1e-15);
        assert!((ev("0.1*sin(t)", FRAC_PI_2) - 0.1).abs() < 1e-15);
        // e^{0.006}, reference value from an independent calculator
        assert!((ev("exp(0.06*0.1)", 123.0) - 1.006_018_036_054_065).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4", 0.0), 14.0);
        assert_eq!(ev("-2^2", 0.0), -4.0);
        assert_eq!(ev("2*-3", 0.0), -6.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("10-4-3", 0.0), 3.0);
        assert_eq!(ev("pow(2, 10)", 0.0), 1024.0);
        assert_eq!(ev("  ( 1 +\t2 ) * t ", 2.0), 6.0);
        assert_eq!(ev("1.5e-1 + .5", 0.0), 0.65);
        assert_eq!(ev("cos(t)^2", PI), 1.0);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("(1+2").unwrap_err();
        assert!(err.message.contains("unbalanced"), "{err}");
        assert_eq!(err.position, 4);

        let err = parse("1+2)").unwrap_err();
        assert_eq!(err.position, 3);

        let err = parse("1+").unwrap_err();
        assert_eq!(err.position, 2);

        let err = parse("x + 1").unwrap_err();
        assert!(err.message.contains("unknown identifier 'x'"));
        assert_eq!(err.position, 0);

        assert!(parse("").is_err());
        assert!(parse("   ").is_err());
        assert!(parse("sin t").is_err());
        assert!(parse("foo(t)").is_err());
        assert!(parse("2 $ 3").is_err());
        assert!(parse("1e999").is_err());
        assert!(parse("3 4").is_err());
    }

    #[test]
    fn domain_errors() {
        assert_eq!(parse("1/(t-1)").unwrap().eval(1.0), Err(EvalError::DivisionByZero { t: 1.0 }));
        assert!(matches!(parse("sqrt(t)").unwrap().eval(-1.0), Err(EvalError::NegativeSqrt { .. })));
        assert!(matches!(parse("t^0.5").unwrap().eval(-4.0), Err(EvalError::Pow { .. })));
        assert!(matches!(parse("t^-1").unwrap().eval(0.0), Err(EvalError::Pow { .. })));
        assert_eq!(ev("t^3", -2.0), -8.0);
    }

    #[test]
    fn named_constants() {
        let lookup = |name: &str| (name == "nu").then_some(0.5);
        let e = parse_with("nu*t", &lookup).unwrap();
        assert_eq!(e.eval(4.0).unwrap(), 2.0);
        assert!(e.eval(1.0).is_ok());
        assert!(parse_with("nux*t", &lookup).is_err());
        // t and function names are never looked up
        let shadow = |_: &str| Some(9.0);
        assert_eq!(parse_with("t", &shadow).unwrap(), Expr::Var);
        assert!(parse_with("sin", &shadow).is_err());
    }

    #[test]
    fn constant_detection() {
        assert!(parse("2*3").unwrap().is_constant());
        assert!(!parse("2*t").unwrap().is_constant());
        assert!(parse("0*1").unwrap().is_zero());
        assert!(!parse("0*t").unwrap().is_zero());
        assert_eq!(parse("exp(0)").unwrap().constant_value(), Some(1.0));
    }

    #[test]
    fn unparse_round_trip_fixtures() {
        for src in ["-2^2", "2*-3", "(-0.5)^2", "t - 0.1*abs(sin(t))", "pow(-t, 3) / 7", "-(-t)"] {
            let e = parse(src).unwrap();
            let back = parse(&e.unparse()).unwrap();
            for t in [-3.0, -0.5, 0.0, 1.25, 4.0] {
                assert_eq!(e.eval(t), back.eval(t), "{src} at {t}");
            }
        }
        let neg_zero = Expr::Const(-0.0);
        let back = parse(&neg_zero.unparse()).unwrap().eval(0.0).unwrap();
        assert!(back == 0.0 && back.is_sign_negative());
    }

    #[test]
    fn operator_builders() {
        let e = 0.1 * Expr::var().sin();
        assert!((e.eval(FRAC_PI_2).unwrap() - 0.1).abs() < 1e-15);
        let e = (Expr::var() - 1.0) / 2.0 + Expr::constant(3.0);
        assert_eq!(e.eval(5.0).unwrap(), 5.0);
    }
}
