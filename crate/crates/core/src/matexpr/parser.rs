use super::{BinaryOp, Expr, ParseError, UnaryOp};

/// Parses an expression in `t`. See the module docs for the grammar.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { offset: self.pos, message: message.into() }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => Err(self.syntax(format!("expected `{}`, found `{}`", c as char, found as char))),
                None => Err(self.syntax(format!("expected `{}`, found end of input", c as char))),
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
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
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while self.eat(b'^') {
            let k = self.exponent()?;
            base = Expr::pow(base, k);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let parenthesized = self.eat(b'(');
        let negative = self.eat(b'-');
        self.skip_ws();
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits_end = self.pos;
        let next = self.src.get(self.pos).copied();
        let fractional = matches!(next, Some(b'.' | b'e' | b'E'));
        if digits_start == digits_end || fractional {
            return Err(ParseError::NonIntegerExponent { offset: start });
        }
        let text = std::str::from_utf8(&self.src[digits_start..digits_end]).expect("ascii digits");
        let magnitude: i32 = text
            .parse()
            .map_err(|_| ParseError::Syntax { offset: digits_start, message: "exponent out of range".into() })?;
        if parenthesized {
            self.expect(b')')?;
        }
        Ok(if negative { -magnitude } else { magnitude })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(c) = self.peek() else {
            return Err(self.syntax("unexpected end of input"));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
            let op = match name {
                "t" => return Ok(Expr::Var),
                "sin" => UnaryOp::Sin,
                "cos" => UnaryOp::Cos,
                "exp" => UnaryOp::Exp,
                _ => return Err(ParseError::UnknownIdentifier { name: name.to_string(), offset: start }),
            };
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::unary(op, arg));
        }
        if self.eat(b'(') {
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        Err(self.syntax(format!("unexpected `{}`", c as char)))
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError::Syntax { offset: start, message: "malformed number".into() });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(ParseError::Syntax { offset: mark, message: "malformed exponent in number".into() });
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::Syntax { offset: start, message: "malformed number".into() })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax { offset: start, message: "number out of range".into() });
        }
        Ok(Expr::Const(value))
    }
}
