//! Scalar expressions in the single variable `t`, with exact symbolic
//! derivatives, and rectangular grids of them ([`MatrixFunction`]).
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary { "^" exponent } ;
//! exponent = [ "-" ] integer | "(" [ "-" ] integer ")" ;
//! primary  = number | "t" | func "(" expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "exp" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! Precedence from tightest to loosest: `^`, unary `-`, `* /`, `+ -`. All
//! binary levels associate to the left, so `t^2^3` is `(t^2)^3` and `-t^2`
//! is `-(t^2)`.

mod matrix;
mod parser;

use std::fmt;

use thiserror::Error;

pub use matrix::{MatrixError, MatrixFunction};
pub use parser::parse_expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("exponent at byte {offset} must be an integer literal")]
    NonIntegerExponent { offset: usize },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

impl ParseError {
    /// Byte offset into the source text where the problem was detected.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::NonIntegerExponent { offset }
            | ParseError::UnknownIdentifier { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at t = {t}")]
    DivisionByZero { t: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree over the variable `t`.
///
/// Trees are immutable once built; `Expr` is `Send + Sync` and can be
/// evaluated concurrently.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn pow(base: Expr, exponent: i32) -> Expr {
        Expr::Pow(Box::new(base), exponent)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let v = self.eval_raw(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { t })
        }
    }

    fn eval_raw(&self, t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => t,
            Expr::Unary(op, a) => {
                let a = a.eval_raw(t)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_raw(t)?;
                let b = b.eval_raw(t)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { t });
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(a, k) => {
                let a = a.eval_raw(t)?;
                if *k < 0 && a == 0.0 {
                    return Err(EvalError::DivisionByZero { t });
                }
                a.powi(*k)
            }
        })
    }

    /// Exact derivative with respect to `t`.
    ///
    /// Rules are applied literally with no simplification, so the result can
    /// carry redundant `0` and `1` factors.
    pub fn differentiate(&self) -> Expr {
        use BinaryOp::*;
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var => Expr::Const(1.0),
            Expr::Unary(op, u) => {
                let du = u.differentiate();
                let u = (**u).clone();
                match op {
                    UnaryOp::Neg => Expr::unary(UnaryOp::Neg, du),
                    UnaryOp::Sin => Expr::binary(Mul, Expr::unary(UnaryOp::Cos, u), du),
                    UnaryOp::Cos => Expr::unary(
                        UnaryOp::Neg,
                        Expr::binary(Mul, Expr::unary(UnaryOp::Sin, u), du),
                    ),
                    UnaryOp::Exp => Expr::binary(Mul, Expr::unary(UnaryOp::Exp, u), du),
                }
            }
            Expr::Binary(op, u, v) => {
                let du = u.differentiate();
                let dv = v.differentiate();
                let u = (**u).clone();
                let v = (**v).clone();
                match op {
                    Add => Expr::binary(Add, du, dv),
                    Sub => Expr::binary(Sub, du, dv),
                    Mul => Expr::binary(
                        Add,
                        Expr::binary(Mul, du, v),
                        Expr::binary(Mul, u, dv),
                    ),
                    Div => Expr::binary(
                        Div,
                        Expr::binary(
                            Sub,
                            Expr::binary(Mul, du, v.clone()),
                            Expr::binary(Mul, u, dv),
                        ),
                        Expr::pow(v, 2),
                    ),
                }
            }
            Expr::Pow(u, k) => {
                if *k == 0 {
                    return Expr::Const(0.0);
                }
                Expr::binary(
                    Mul,
                    Expr::binary(Mul, Expr::Const(*k as f64), Expr::pow((**u).clone(), k - 1)),
                    u.differentiate(),
                )
            }
        }
    }

    // Folding constructors used when assembling expressions programmatically
    // (symbolic matrix products). They drop exact zeros and unit factors and
    // fold constant-constant arithmetic; they never rewrite anything else.

    pub fn sum(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::binary(BinaryOp::Add, a, b),
        }
    }

    pub fn difference(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(0.0), _) => Expr::negation(b),
            (_, Some(0.0)) => a,
            _ => Expr::binary(BinaryOp::Sub, a, b),
        }
    }

    pub fn product(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(0.0), _) => Expr::Const(0.0),
            (_, Some(0.0)) => Expr::Const(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            (Some(-1.0), _) => Expr::negation(b),
            (_, Some(-1.0)) => Expr::negation(a),
            _ => Expr::binary(BinaryOp::Mul, a, b),
        }
    }

    pub fn quotient(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(0.0), _) => Expr::Const(0.0),
            (_, Some(1.0)) => a,
            _ => Expr::binary(BinaryOp::Div, a, b),
        }
    }

    /// Rebuilds the tree bottom-up through the folding constructors.
    pub fn folded(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var => self.clone(),
            Expr::Unary(UnaryOp::Neg, a) => Expr::negation(a.folded()),
            Expr::Unary(op, a) => Expr::unary(*op, a.folded()),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.folded(), b.folded());
                match op {
                    BinaryOp::Add => Expr::sum(a, b),
                    BinaryOp::Sub => Expr::difference(a, b),
                    BinaryOp::Mul => Expr::product(a, b),
                    BinaryOp::Div => Expr::quotient(a, b),
                }
            }
            Expr::Pow(a, 1) => a.folded(),
            Expr::Pow(a, k) => Expr::pow(a.folded(), *k),
        }
    }

    pub fn negation(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            Expr::Unary(UnaryOp::Neg, inner) => *inner,
            other => Expr::unary(UnaryOp::Neg, other),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Prints in the grammar accepted by [`parse_expr`]; re-parsing yields a tree
/// with the same shape and values.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                // `{:?}` keeps a fractional part or exponent and round-trips
                // exactly; the sign is emitted as a unary minus.
                if c.is_sign_negative() {
                    write!(f, "-{:?}", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var => f.write_str("t"),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) => {
                let (p, sym) = match op {
                    BinaryOp::Add => (1, " + "),
                    BinaryOp::Sub => (1, " - "),
                    BinaryOp::Mul => (2, "*"),
                    BinaryOp::Div => (2, "/"),
                };
                write_child(f, a, a.precedence() < p)?;
                f.write_str(sym)?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, k) => {
                write_child(f, a, a.precedence() < 4)?;
                write!(f, "^{k}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_fd(e: &Expr, t: f64, h: f64) -> Result<f64, EvalError> {
        Ok((e.eval(t + h)? - e.eval(t - h)?) / (2.0 * h))
    }

    // Independent evaluator used as an oracle: walks the printed string with
    // a shunting-yard pass instead of the recursive-descent parser.
    fn reference_eval(src: &str, t: f64) -> f64 {
        #[derive(Clone, Copy, PartialEq, Debug)]
        enum Tok {
            Num(f64),
            Op(char),
            Neg,
            LParen,
            RParen,
            Func(char),
        }
        let bytes = src.as_bytes();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_digit()
                        || bytes[i] == b'.'
                        || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'-' || bytes[i] == b'+') && matches!(bytes[i - 1], b'e' | b'E')))
                {
                    i += 1;
                }
                toks.push(Tok::Num(src[start..i].parse().unwrap()));
            } else if src[i..].starts_with("sin") || src[i..].starts_with("cos") || src[i..].starts_with("exp") {
                toks.push(Tok::Func(c));
                i += 3;
            } else if c == 't' {
                toks.push(Tok::Num(t));
                i += 1;
            } else if c == '(' {
                toks.push(Tok::LParen);
                i += 1;
            } else if c == ')' {
                toks.push(Tok::RParen);
                i += 1;
            } else if c == '-' {
                let unary = matches!(toks.last(), None | Some(Tok::Op(_)) | Some(Tok::Neg) | Some(Tok::LParen));
                toks.push(if unary { Tok::Neg } else { Tok::Op('-') });
                i += 1;
            } else {
                toks.push(Tok::Op(c));
                i += 1;
            }
        }
        // Exponents directly after '^' may carry a unary minus; fold them.
        let mut folded = Vec::new();
        let mut j = 0;
        while j < toks.len() {
            if toks[j] == Tok::Op('^') && toks.get(j + 1) == Some(&Tok::Neg) {
                if let Some(Tok::Num(v)) = toks.get(j + 2) {
                    folded.push(Tok::Op('^'));
                    folded.push(Tok::Num(-v));
                    j += 3;
                    continue;
                }
            }
            folded.push(toks[j]);
            j += 1;
        }
        fn prec(t: &Tok) -> u8 {
            match t {
                Tok::Op('+') | Tok::Op('-') => 1,
                Tok::Op('*') | Tok::Op('/') => 2,
                Tok::Neg => 3,
                Tok::Op('^') => 4,
                _ => 0,
            }
        }
        fn apply(out: &mut Vec<f64>, t: Tok) {
            match t {
                Tok::Neg => {
                    let a = out.pop().unwrap();
                    out.push(-a)
                }
                Tok::Func(c) => {
                    let a = out.pop().unwrap();
                    out.push(match c {
                        's' => a.sin(),
                        'c' => a.cos(),
                        _ => a.exp(),
                    })
                }
                Tok::Op(c) => {
                    let b = out.pop().unwrap();
                    let a = out.pop().unwrap();
                    out.push(match c {
                        '+' => a + b,
                        '-' => a - b,
                        '*' => a * b,
                        '/' => a / b,
                        _ => a.powi(b as i32),
                    })
                }
                _ => unreachable!(),
            }
        }
        let mut out = Vec::new();
        let mut ops: Vec<Tok> = Vec::new();
        for tok in folded {
            match tok {
                Tok::Num(v) => out.push(v),
                Tok::Func(_) | Tok::LParen | Tok::Neg => ops.push(tok),
                Tok::RParen => {
                    while let Some(top) = ops.pop() {
                        if top == Tok::LParen {
                            break;
                        }
                        apply(&mut out, top);
                    }
                    if let Some(Tok::Func(_)) = ops.last() {
                        let f = ops.pop().unwrap();
                        apply(&mut out, f);
                    }
                }
                Tok::Op(_) => {
                    let p = prec(&tok);
                    while let Some(top) = ops.last() {
                        // unary minus binds looser than '^' but tighter than '*'
                        if *top != Tok::LParen && !matches!(top, Tok::Func(_)) && prec(top) >= p {
                            let top = ops.pop().unwrap();
                            apply(&mut out, top);
                        } else {
                            break;
                        }
                    }
                    ops.push(tok);
                }
            }
        }
        while let Some(top) = ops.pop() {
            apply(&mut out, top);
        }
        out[0]
    }

    #[test]
    fn folding_drops_derivative_debris() {
        let d = parse_expr("0.3 + 0.05*t").unwrap().differentiate();
        assert_eq!(d.folded(), Expr::Const(0.05));
        assert_eq!(parse_expr("(t + 0)^1*1").unwrap().folded(), Expr::Var);
    }

    #[test]
    fn zero_literal() {
        assert_eq!(parse_expr("0").unwrap(), Expr::Const(0.0));
    }

    #[test]
    fn pythagorean_identity() {
        let e = parse_expr("cos(t)*cos(t) + sin(t)*sin(t)").unwrap();
        assert!((e.eval(0.7).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn cubic_matches_hand_value_and_reference_evaluator() {
        let src = "2*t^3 - t";
        let e = parse_expr(src).unwrap();
        assert_eq!(e.eval(2.0).unwrap(), 14.0);
        assert_eq!(reference_eval(src, 2.0), 14.0);
        let mut x = 0.123_f64;
        for _ in 0..100 {
            // deterministic pseudo-random points in [-3, 3]
            x = (x * 9301.0 + 49297.0) % 233280.0;
            let t = x / 233280.0 * 6.0 - 3.0;
            assert!((e.eval(t).unwrap() - reference_eval(src, t)).abs() <= 1e-12);
        }
    }

    #[test]
    fn precedence_rules() {
        let cases = [
            ("-t^2", 2.0, -4.0),
            ("2*-t", 3.0, -6.0),
            ("8/2/2", 0.0, 2.0),
            ("1 - 2 - 3", 0.0, -4.0),
            ("t^2^3", 2.0, 64.0),
            ("(t+1)^-2", 1.0, 0.25),
            ("t^(-1)", 4.0, 0.25),
            ("--t", 5.0, 5.0),
            ("1.5e1 + 2E-1", 0.0, 15.2),
        ];
        for (src, t, want) in cases {
            let got = parse_expr(src).unwrap().eval(t).unwrap();
            assert!((got - want).abs() < 1e-14, "{src}: {got} vs {want}");
            assert!((reference_eval(src, t) - want).abs() < 1e-14, "oracle {src}");
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let err = parse_expr("sin(").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 4, .. }), "{err:?}");
        let err = parse_expr("t^2.5").unwrap_err();
        assert_eq!(err, ParseError::NonIntegerExponent { offset: 2 });
        let err = parse_expr("t^t").unwrap_err();
        assert_eq!(err, ParseError::NonIntegerExponent { offset: 2 });
        let err = parse_expr("1 + tan(t)").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier { name: "tan".into(), offset: 4 }
        );
        assert!(matches!(parse_expr("1 +"), Err(ParseError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_expr("(t"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("t t"), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse_expr(""), Err(ParseError::Syntax { offset: 0, .. })));
        assert!(matches!(parse_expr("1e999"), Err(ParseError::Syntax { offset: 0, .. })));
        assert!(matches!(parse_expr("t # 2"), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = parse_expr("1/t").unwrap();
        assert_eq!(e.eval(0.0), Err(EvalError::DivisionByZero { t: 0.0 }));
        let e = parse_expr("t^-2").unwrap();
        assert_eq!(e.eval(0.0), Err(EvalError::DivisionByZero { t: 0.0 }));
        assert!(matches!(parse_expr("exp(exp(t))").unwrap().eval(10.0), Err(EvalError::NonFinite { .. })));
    }

    #[test]
    fn derivative_of_constant_and_sine() {
        let d = parse_expr("5").unwrap().differentiate();
        assert_eq!(d, Expr::Const(0.0));
        let d = parse_expr("sin(t)").unwrap().differentiate();
        for t in [0.0, 1.0, 2.5] {
            assert!((d.eval(t).unwrap() - t.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_of_t3_exp_matches_finite_difference() {
        let e = parse_expr("t^3 * exp(t)").unwrap();
        let d = e.differentiate().eval(1.0).unwrap();
        let fd = central_fd(&e, 1.0, 1e-5).unwrap();
        assert!((d - 4.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((d - fd).abs() < 1e-8, "{d} vs {fd}");
    }

    #[test]
    fn quotient_and_power_rules() {
        let e = parse_expr("sin(t)/(2 + cos(t)) + (t - 1)^-3").unwrap();
        let d = e.differentiate();
        for t in [-2.0, 0.3, 2.9] {
            let fd = central_fd(&e, t, 1e-5).unwrap();
            let got = d.eval(t).unwrap();
            assert!((got - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "t={t}: {got} vs {fd}");
        }
    }

    #[test]
    fn folding_constructors() {
        let t = Expr::Var;
        assert_eq!(Expr::product(Expr::Const(0.0), t.clone()), Expr::Const(0.0));
        assert_eq!(Expr::product(Expr::Const(1.0), t.clone()), t);
        assert_eq!(Expr::sum(Expr::Const(0.0), t.clone()), t);
        assert_eq!(Expr::difference(t.clone(), Expr::Const(0.0)), t);
        assert_eq!(Expr::negation(Expr::negation(t.clone())), t);
        assert_eq!(Expr::sum(Expr::Const(2.0), Expr::Const(3.0)), Expr::Const(5.0));
    }

    #[test]
    fn printing_negative_constants_round_trips() {
        let e = Expr::pow(Expr::Const(-2.0), 3);
        let s = e.to_string();
        assert_eq!(s, "(-2.0)^3");
        assert_eq!(parse_expr(&s).unwrap().eval(0.0).unwrap(), -8.0);
        let e = Expr::binary(BinaryOp::Sub, Expr::Var, Expr::Const(-1e-7));
        assert_eq!(parse_expr(&e.to_string()).unwrap().eval(1.0).unwrap(), 1.0 + 1e-7);
    }

    // Random trees of bounded depth. Denominators are kept pole-free by
    // construction; exponents stay small.
    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(|c| Expr::Const((c * 1000.0).round() / 1000.0)),
            Just(Expr::Var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), 0..4usize).prop_map(|(a, k)| {
                    let op = [UnaryOp::Neg, UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp][k];
                    if op == UnaryOp::Exp {
                        // keep the exponent argument bounded
                        Expr::unary(op, Expr::unary(UnaryOp::Sin, a))
                    } else {
                        Expr::unary(op, a)
                    }
                }),
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, k)| {
                    match k {
                        0 => Expr::binary(BinaryOp::Add, a, b),
                        1 => Expr::binary(BinaryOp::Sub, a, b),
                        2 => Expr::binary(BinaryOp::Mul, a, b),
                        _ => Expr::binary(
                            BinaryOp::Div,
                            a,
                            Expr::binary(BinaryOp::Add, Expr::Const(2.5), Expr::unary(UnaryOp::Sin, b)),
                        ),
                    }
                }),
                (inner, 0..4i32).prop_map(|(a, k)| Expr::pow(a, k)),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derivative_matches_central_difference(e in arb_expr(), t in -3.0f64..3.0) {
            let fd = central_fd(&e, t, 1e-5);
            prop_assume!(fd.is_ok());
            let fd = fd.unwrap();
            prop_assume!(e.eval(t).map(|v| v.abs() < 1e3).unwrap_or(false));
            // skip points where the difference quotient itself has not converged
            let coarse = central_fd(&e, t, 2e-5).unwrap();
            prop_assume!((coarse - fd).abs() <= 1e-7 * (1.0 + fd.abs()));
            let d = e.differentiate().eval(t).unwrap();
            prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{} at {}: {} vs {}", e, t, d, fd);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn print_parse_round_trip(e in arb_expr(), ts in prop::collection::vec(-3.0f64..3.0, 100)) {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            for t in ts {
                match (e.eval(t), reparsed.eval(t)) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()), "{}", printed),
                    (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
                }
            }
        }

        #[test]
        fn folding_preserves_values(e in arb_expr(), ts in prop::collection::vec(-3.0f64..3.0, 20)) {
            let f = e.differentiate().folded();
            prop_assert!(f.size() <= e.differentiate().size());
            for t in ts {
                if let (Ok(a), Ok(b)) = (e.differentiate().eval(t), f.eval(t)) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", e.differentiate(), f);
                }
            }
        }
    }
}
