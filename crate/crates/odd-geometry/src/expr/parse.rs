//! Recursive-descent parser for the expression grammar
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' integer)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `sqrt` and `abs` are the only function identifiers; every other
//! identifier must name a chart coordinate passed in by the caller.

use super::Expr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {what}")]
    Syntax { offset: usize, what: String },
    #[error("unknown identifier {name:?} at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

/// Parse `src` against the coordinate names `coords` (index in the slice
/// becomes the variable index).
pub fn parse(src: &str, coords: &[&str]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        coords,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    coords: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn err(&self, what: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            what: what.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = Expr::add(acc, self.term()?);
            } else if self.eat(b'-') {
                acc = Expr::sub(acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(b'*') {
                acc = Expr::mul(acc, self.factor()?);
            } else if self.eat(b'/') {
                let den = self.factor()?;
                if den.is_const(0.0) {
                    return Err(self.err("division by the literal constant 0"));
                }
                acc = Expr::div(acc, den);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            // Unary minus folds into constants, otherwise multiplies by -1.
            let inner = self.factor()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => other.neg(),
            });
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let n = self.integer()?;
            return Ok(base.powi(n));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            _ => Err(self.err("expected a number, identifier, or '('")),
        }
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        let neg = self.eat(b'-');
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected an integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let n: i32 = digits
            .parse()
            .map_err(|_| self.err("exponent out of range"))?;
        self.skip_ws();
        Ok(if neg { -n } else { n })
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all (e.g. the ident boundary in "2e")
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            what: format!("bad number literal {text:?}"),
        })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax {
                offset: start,
                what: format!("number literal {text:?} overflows"),
            });
        }
        self.skip_ws();
        Ok(Expr::Const(value))
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();
        match name.as_str() {
            "sqrt" | "abs" => {
                if !self.eat(b'(') {
                    return Err(self.err(&format!("expected '(' after {name}")));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(if name == "sqrt" { arg.sqrt() } else { arg.abs() })
            }
            _ => {
                if let Some(i) = self.coords.iter().position(|c| *c == name) {
                    Ok(Expr::var(i))
                } else {
                    Err(ParseError::UnknownIdentifier {
                        name,
                        offset: start,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EvalResult;

    #[test]
    fn precedence_and_shape() {
        let e = parse("sqrt(abs(x))", &["x"]).unwrap();
        assert!(matches!(e, Expr::Sqrt(_)));
        assert_eq!(e.eval(&[-9.0]), EvalResult::Finite(3.0));

        // ^ binds tighter than unary minus
        let e = parse("-x^2", &["x"]).unwrap();
        assert_eq!(e.eval(&[3.0]), EvalResult::Finite(-9.0));

        let e = parse("2*x^2 - x/4 + 1", &["x"]).unwrap();
        assert_eq!(e.eval(&[2.0]), EvalResult::Finite(8.5));
    }

    #[test]
    fn negative_exponents_and_scientific_literals() {
        let e = parse("x^-2", &["x"]).unwrap();
        assert_eq!(e.eval(&[2.0]), EvalResult::Finite(0.25));
        let e = parse("1.5e-3 + x", &["x"]).unwrap();
        assert_eq!(e.eval(&[0.0]), EvalResult::Finite(0.0015));
    }

    #[test]
    fn dangling_operator_is_a_syntax_error() {
        match parse("x +", &["x"]) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_reports_name_and_offset() {
        match parse("x + y", &["x"]) {
            Err(ParseError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "y");
                assert_eq!(offset, 4);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn literal_zero_denominator_is_rejected() {
        assert!(parse("1/0", &["x"]).is_err());
        // a vanishing but non-literal denominator is allowed
        assert!(parse("1/(x-x)", &["x"]).is_ok());
    }

    #[test]
    fn unary_minus_folds_constants_only() {
        assert_eq!(parse("-2", &["x"]).unwrap(), Expr::Const(-2.0));
        let e = parse("-x", &["x"]).unwrap();
        assert_eq!(e, Expr::var(0).neg());
    }
}
