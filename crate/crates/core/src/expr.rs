//! A small arithmetic-expression language for coefficient and nonlinearity
//! formulas over the variables `x`, `t` and `u`.
//!
//! Grammar (recursive descent, LL(1), no implicit multiplication):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          -- right associative, binds tightest
//! atom   := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Numbers are IEEE-754 doubles in decimal or scientific notation. The
//! recognised functions are `exp`, `sin`, `cos`, `sqrt`, `abs` (one
//! argument) and `min`, `max`, `pow` (two arguments).

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// The three variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    X,
    T,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::T => "t",
            Var::U => "u",
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
    Pow,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sin | Func::Cos | Func::Sqrt | Func::Abs => 1,
            Func::Min | Func::Max | Func::Pow => 2,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a coefficient expression. Values are immutable
/// after parsing and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Bindings supplied to [`Expr::eval`]. `u` is optional; referencing `u`
/// without a binding is an error.
#[derive(Debug, Clone, Copy)]
pub struct Bindings {
    pub x: f64,
    pub t: f64,
    pub u: Option<f64>,
}

impl Bindings {
    pub fn xt(x: f64, t: f64) -> Self {
        Bindings { x, t, u: None }
    }

    pub fn xtu(x: f64, t: f64, u: f64) -> Self {
        Bindings { x, t, u: Some(u) }
    }
}

impl Expr {
    /// Parse `source` into an expression tree.
    pub fn parse(source: &str) -> Result<Expr> {
        Parser::new(source)?.parse()
    }

    /// Evaluate the tree in IEEE-754 double precision. Division by zero,
    /// the square root of a negative number and a negative base raised to
    /// a non-integer power are domain errors rather than NaN results.
    pub fn eval(&self, b: Bindings) -> Result<f64> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::X) => Ok(b.x),
            Expr::Var(Var::T) => Ok(b.t),
            Expr::Var(Var::U) => b.u.ok_or(Error::UnboundVariable("u")),
            Expr::Neg(e) => Ok(-e.eval(b)?),
            Expr::Bin(op, l, r) => {
                let lv = l.eval(b)?;
                let rv = r.eval(b)?;
                match op {
                    BinOp::Add => Ok(lv + rv),
                    BinOp::Sub => Ok(lv - rv),
                    BinOp::Mul => Ok(lv * rv),
                    BinOp::Div => {
                        if rv == 0.0 {
                            Err(Error::Domain {
                                op: "division",
                                detail: format!("{lv} / 0"),
                            })
                        } else {
                            Ok(lv / rv)
                        }
                    }
                    BinOp::Pow => checked_pow(lv, rv),
                }
            }
            Expr::Call(f, args) => {
                let a0 = args[0].eval(b)?;
                match f {
                    Func::Exp => Ok(a0.exp()),
                    Func::Sin => Ok(a0.sin()),
                    Func::Cos => Ok(a0.cos()),
                    Func::Abs => Ok(a0.abs()),
                    Func::Sqrt => {
                        if a0 < 0.0 {
                            Err(Error::Domain {
                                op: "sqrt",
                                detail: format!("sqrt({a0})"),
                            })
                        } else {
                            Ok(a0.sqrt())
                        }
                    }
                    Func::Min => Ok(a0.min(args[1].eval(b)?)),
                    Func::Max => Ok(a0.max(args[1].eval(b)?)),
                    Func::Pow => checked_pow(a0, args[1].eval(b)?),
                }
            }
        }
    }

    /// The exact set of variables occurring in the tree.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set
    }

    fn collect_vars(&self, set: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                set.insert(*v);
            }
            Expr::Neg(e) => e.collect_vars(set),
            Expr::Bin(_, l, r) => {
                l.collect_vars(set);
                r.collect_vars(set);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.collect_vars(set);
                }
            }
        }
    }

    pub fn references(&self, v: Var) -> bool {
        self.free_vars().contains(&v)
    }

    /// A constant zero expression, used as the default for omitted
    /// coefficients.
    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn checked_pow(base: f64, exponent: f64) -> Result<f64> {
    // Degeneracy profiles write |x - x0|^rho explicitly, so a negative base
    // with a fractional exponent never arises in a valid configuration.
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(Error::Domain {
            op: "power",
            detail: format!("negative base {base} with non-integer exponent {exponent}"),
        });
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(Error::Domain {
            op: "power",
            detail: format!("0 raised to negative exponent {exponent}"),
        });
    }
    Ok(base.powf(exponent))
}

// Precedence-aware printing: emits the minimal parentheses under which
// re-parsing reproduces the tree node for node.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, 3)
            }
            Expr::Bin(op, l, r) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    // base := atom, exponent := unary
                    write_child(f, l, 5)?;
                    write!(f, "{sym}")?;
                    write_child(f, r, 3)
                } else {
                    // left associative: the right child needs parentheses at
                    // equal precedence
                    write_child(f, l, prec)?;
                    write!(f, "{sym}")?;
                    write_child(f, r, prec + 1)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, min_prec: u8) -> fmt::Result {
    if child.precedence() < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
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
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn new(source: &str) -> Result<Parser> {
        if source.trim().is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                expected: "an expression".into(),
                found: "empty input".into(),
            });
        }
        Ok(Parser {
            tokens: lex(source)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &(usize, Tok) {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<()> {
        let (offset, tok) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(Error::Syntax {
                offset,
                expected: expected.into(),
                found: tok.describe(),
            })
        }
    }

    fn parse(&mut self) -> Result<Expr> {
        let e = self.parse_expr()?;
        let (offset, tok) = self.peek().clone();
        if tok != Tok::Eof {
            return Err(Error::Syntax {
                offset,
                expected: "an operator or end of input".into(),
                found: tok.describe(),
            });
        }
        Ok(e)
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek().1 {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek().1 {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if self.peek().1 == Tok::Minus {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if self.peek().1 == Tok::Caret {
            self.bump();
            let exponent = self.parse_unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let (offset, tok) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "t" => Ok(Expr::Var(Var::T)),
                "u" => Ok(Expr::Var(Var::U)),
                _ => {
                    let func = Func::from_name(&name).ok_or_else(|| Error::UnknownIdentifier {
                        name: name.clone(),
                        offset,
                    })?;
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.parse_expr()?];
                    while self.peek().1 == Tok::Comma {
                        self.bump();
                        args.push(self.parse_expr()?);
                    }
                    let (close_offset, close) = self.bump();
                    if close != Tok::RParen {
                        return Err(Error::Syntax {
                            offset: close_offset,
                            expected: "`,` or `)`".into(),
                            found: close.describe(),
                        });
                    }
                    if args.len() != func.arity() {
                        return Err(Error::Syntax {
                            offset,
                            expected: format!("{} argument(s) to {}", func.arity(), func.name()),
                            found: format!("{} argument(s)", args.len()),
                        });
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            other => Err(Error::Syntax {
                offset,
                expected: "a number, variable, function call or `(`".into(),
                found: other.describe(),
            }),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                tokens.push((i, Tok::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Tok::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Tok::Star));
                i += 1;
            }
            b'/' => {
                tokens.push((i, Tok::Slash));
                i += 1;
            }
            b'^' => {
                tokens.push((i, Tok::Caret));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Tok::RParen));
                i += 1;
            }
            b',' => {
                tokens.push((i, Tok::Comma));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
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
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    expected: "a numeric literal".into(),
                    found: format!("`{text}`"),
                })?;
                tokens.push((start, Tok::Num(value)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((start, Tok::Ident(source[start..i].to_string())));
            }
            other => {
                return Err(Error::Syntax {
                    offset: i,
                    expected: "a token".into(),
                    found: format!("byte `{}`", other as char),
                });
            }
        }
    }
    tokens.push((source.len(), Tok::Eof));
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn num(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    fn var(v: Var) -> Box<Expr> {
        Box::new(Expr::Var(v))
    }

    #[test]
    fn parses_polynomial_coefficient() {
        // x*(1-x)
        let expected = Expr::Bin(
            BinOp::Mul,
            var(Var::X),
            Box::new(Expr::Bin(BinOp::Sub, num(1.0), var(Var::X))),
        );
        assert_eq!(parse("x*(1-x)"), expected);
    }

    #[test]
    fn parses_exponential_times_power() {
        // exp(-t)*x^2
        let expected = Expr::Bin(
            BinOp::Mul,
            Box::new(Expr::Call(Func::Exp, vec![Expr::Neg(var(Var::T))])),
            Box::new(Expr::Bin(BinOp::Pow, var(Var::X), num(2.0))),
        );
        assert_eq!(parse("exp(-t)*x^2"), expected);
    }

    #[test]
    fn parses_degeneracy_profile() {
        // abs(x-0.5)^1.5
        let expected = Expr::Bin(
            BinOp::Pow,
            Box::new(Expr::Call(
                Func::Abs,
                vec![Expr::Bin(BinOp::Sub, var(Var::X), num(0.5))],
            )),
            num(1.5),
        );
        assert_eq!(parse("abs(x-0.5)^1.5"), expected);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("2+3*4");
        assert_eq!(e.eval(Bindings::xt(0.0, 0.0)).unwrap(), 14.0);
        let e = parse("2^3^2");
        assert_eq!(e.eval(Bindings::xt(0.0, 0.0)).unwrap(), 512.0);
        // unary minus binds below ^
        let e = parse("-2^2");
        assert_eq!(e.eval(Bindings::xt(0.0, 0.0)).unwrap(), -4.0);
    }

    #[test]
    fn eval_examples() {
        let e = parse("x*(1-x)");
        assert_eq!(e.eval(Bindings::xt(0.5, 0.0)).unwrap(), 0.25);
        let e = parse("exp(-t)");
        let v = e.eval(Bindings::xt(0.0, 1.0)).unwrap();
        assert!((v - 0.3678794).abs() < 1e-7, "got {v}");
        let e = parse("u^3");
        assert_eq!(e.eval(Bindings::xtu(0.0, 0.0, 2.0)).unwrap(), 8.0);
    }

    #[test]
    fn free_vars_examples() {
        assert_eq!(
            parse("x*(1-x)").free_vars().into_iter().collect::<Vec<_>>(),
            vec![Var::X]
        );
        assert!(parse("3.0").free_vars().is_empty());
        assert_eq!(
            parse("exp(t)*u")
                .free_vars()
                .into_iter()
                .collect::<Vec<_>>(),
            vec![Var::T, Var::U]
        );
    }

    #[test]
    fn unbound_u_is_an_error() {
        let e = parse("u+1");
        assert!(matches!(
            e.eval(Bindings::xt(0.0, 0.0)),
            Err(Error::UnboundVariable("u"))
        ));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            parse("sqrt(-1)").eval(Bindings::xt(0.0, 0.0)),
            Err(Error::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(
            parse("1/x").eval(Bindings::xt(0.0, 0.0)),
            Err(Error::Domain { op: "division", .. })
        ));
        assert!(matches!(
            parse("(-2)^0.5").eval(Bindings::xt(0.0, 0.0)),
            Err(Error::Domain { op: "power", .. })
        ));
        // integer exponent of a negative base is fine
        assert_eq!(parse("(-2)^2").eval(Bindings::xt(0.0, 0.0)).unwrap(), 4.0);
    }

    #[test]
    fn syntax_error_carries_offset() {
        // the second `+` at byte 4 cannot start an operand
        match Expr::parse("x + + 2") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        // no implicit multiplication
        assert!(matches!(
            Expr::parse("2x"),
            Err(Error::Syntax { offset: 1, .. })
        ));
    }

    #[test]
    fn unknown_identifier_named() {
        match Expr::parse("foo(x)") {
            Err(Error::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
        match Expr::parse("x + y") {
            Err(Error::UnknownIdentifier { name, .. }) => assert_eq!(name, "y"),
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn arity_checked() {
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("exp(1,2)").is_err());
        assert!(Expr::parse("pow(2,3)").is_ok());
    }

    #[test]
    fn expressions_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Expr>();
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1e-4").eval(Bindings::xt(0.0, 0.0)).unwrap(), 1e-4);
        assert_eq!(parse("2.5E+2").eval(Bindings::xt(0.0, 0.0)).unwrap(), 250.0);
    }

    #[test]
    fn print_parse_round_trip_hand_cases() {
        for src in [
            "x*(1-x)",
            "exp(-t)*x^2",
            "abs(x-0.5)^1.5",
            "x-t-1",
            "x-(t-1)",
            "x/(t/2)",
            "(x^2)^3",
            "2^-3",
            "-(x+t)",
            "min(x,max(t,1))",
            "pow(x,2)+1e-9",
        ] {
            let tree = parse(src);
            let printed = tree.to_string();
            let reparsed = parse(&printed);
            assert_eq!(
                tree, reparsed,
                "round trip failed for `{src}` -> `{printed}`"
            );
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // Trees restricted to what the parser itself can produce: literals
        // are non-negative and finite.
        fn arb_expr() -> impl Strategy<Value = Expr> {
            let leaf = prop_oneof![
                (0.0..1e3f64).prop_map(Expr::Num),
                Just(Expr::Var(Var::X)),
                Just(Expr::Var(Var::T)),
                Just(Expr::Var(Var::U)),
            ];
            leaf.prop_recursive(5, 64, 3, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                    (
                        prop_oneof![
                            Just(BinOp::Add),
                            Just(BinOp::Sub),
                            Just(BinOp::Mul),
                            Just(BinOp::Div),
                            Just(BinOp::Pow)
                        ],
                        inner.clone(),
                        inner.clone()
                    )
                        .prop_map(|(op, l, r)| Expr::Bin(
                            op,
                            Box::new(l),
                            Box::new(r)
                        )),
                    (
                        prop_oneof![
                            Just(Func::Exp),
                            Just(Func::Sin),
                            Just(Func::Cos),
                            Just(Func::Sqrt),
                            Just(Func::Abs)
                        ],
                        inner.clone()
                    )
                        .prop_map(|(f, a)| Expr::Call(f, vec![a])),
                    (
                        prop_oneof![Just(Func::Min), Just(Func::Max), Just(Func::Pow)],
                        inner.clone(),
                        inner
                    )
                        .prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
                ]
            })
        }

        proptest! {
            #[test]
            fn print_parse_round_trip(e in arb_expr()) {
                let printed = e.to_string();
                let reparsed = Expr::parse(&printed).expect("printed form must parse");
                prop_assert_eq!(&e, &reparsed, "printed: {}", printed);
            }

            #[test]
            fn round_trip_preserves_eval(e in arb_expr(), x in -2.0..2.0f64, t in 0.0..2.0f64, u in -2.0..2.0f64) {
                let reparsed = Expr::parse(&e.to_string()).unwrap();
                let b = Bindings::xtu(x, t, u);
                // identical trees run the identical operation sequence, so
                // results (including errors) must agree exactly
                match (e.eval(b), reparsed.eval(b)) {
                    (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "diverged: {a:?} vs {b:?}"),
                }
            }

            #[test]
            fn free_vars_subset(e in arb_expr()) {
                for v in e.free_vars() {
                    prop_assert!(matches!(v, Var::X | Var::T | Var::U));
                }
            }
        }
    }
}
