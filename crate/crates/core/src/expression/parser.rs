//! Recursive-descent parser for scalar expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ['^' ['-'] integer]
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x0^2` is `-(x0^2)`. Negative
//! exponents become divisions; fractional exponents are rejected.

use std::sync::Arc;

use super::{add, call, div, konst, mul, neg, pow, sub, Node, Primitive, ScalarExpr};
use crate::error::{Error, Result};

pub fn parse_expr(text: &str, arity: usize) -> Result<ScalarExpr> {
    let mut parser = Parser { src: text, pos: 0, arity };
    let root = parser.expr()?;
    parser.skip_ws();
    if parser.pos < text.len() {
        return Err(parser.error(format!("unexpected `{}`", parser.rest_char())));
    }
    Ok(ScalarExpr::from_node(arity, root))
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    arity: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax { offset: self.pos, message: message.into() }
    }

    fn rest_char(&self) -> char {
        self.src[self.pos..].chars().next().unwrap_or(' ')
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Arc<Node>> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = add(&lhs, &self.term()?);
            } else if self.eat('-') {
                lhs = sub(&lhs, &self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Node>> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                lhs = mul(&lhs, &self.factor()?);
            } else if self.eat('/') {
                lhs = div(&lhs, &self.factor()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Arc<Node>> {
        if self.eat('-') {
            return Ok(neg(&self.factor()?));
        }
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let negative = self.eat('-');
        self.skip_ws();
        let start = self.pos;
        let digits = self.src[start..].bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(self.error("expected an integer exponent"));
        }
        self.pos += digits;
        if matches!(self.src[self.pos..].bytes().next(), Some(b'.' | b'e' | b'E')) {
            return Err(Error::Syntax { offset: start, message: "fractional powers are not supported".into() });
        }
        let exp: u32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| Error::Syntax { offset: start, message: "exponent out of range".into() })?;
        let powered = pow(&base, exp);
        Ok(if negative { div(&konst(1.0), &powered) } else { powered })
    }

    fn atom(&mut self) -> Result<Arc<Node>> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.identifier(),
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Arc<Node>> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut e = end + 1;
            if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                e += 1;
            }
            let exp_digits = bytes[e..].iter().take_while(|b| b.is_ascii_digit()).count();
            if exp_digits > 0 {
                end = e + exp_digits;
            }
        }
        let value: f64 = self.src[start..end]
            .parse()
            .map_err(|_| Error::Syntax { offset: start, message: format!("malformed number `{}`", &self.src[start..end]) })?;
        self.pos = end;
        Ok(konst(value))
    }

    fn identifier(&mut self) -> Result<Arc<Node>> {
        let start = self.pos;
        let len = self.src[start..]
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        let name = &self.src[start..start + len];
        self.pos += len;

        if let Some(p) = Primitive::from_name(name) {
            if !self.eat('(') {
                return Err(self.error(format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(call(p, &arg));
        }

        let index = name
            .strip_prefix('x')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse::<usize>().ok());
        match index {
            Some(index) if index < self.arity => Ok(Arc::new(Node::Var(index))),
            Some(index) => Err(Error::Arity { index, arity: self.arity }),
            None => Err(Error::UnknownIdentifier { name: name.to_string(), offset: start }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize) -> Arc<Node> {
        Arc::new(Node::Var(i))
    }

    #[test]
    fn sum_of_power_and_variable() {
        let e = parse_expr("x0^2 + x1", 2).unwrap();
        assert_eq!(*e.node(), Node::Add(Arc::new(Node::Pow(var(0), 2)), var(1)));
    }

    #[test]
    fn product_of_calls() {
        let e = parse_expr("sin(x0)*exp(x1)", 2).unwrap();
        assert_eq!(
            *e.node(),
            Node::Mul(Arc::new(Node::Call(Primitive::Sin, var(0))), Arc::new(Node::Call(Primitive::Exp, var(1))))
        );
    }

    #[test]
    fn out_of_range_variable() {
        assert_eq!(parse_expr("x2", 2).unwrap_err(), Error::Arity { index: 2, arity: 2 });
    }

    #[test]
    fn precedence() {
        let e = parse_expr("-x0^2", 1).unwrap();
        assert_eq!(*e.node(), Node::Neg(Arc::new(Node::Pow(var(0), 2))));
        let e = parse_expr("x0 - x0*x0/x0", 1).unwrap();
        assert!(matches!(e.node(), Node::Sub(_, rhs) if matches!(**rhs, Node::Div(..))));
        assert_eq!(parse_expr("2^3^1", 1).unwrap_err().to_string().contains("unexpected"), true);
    }

    #[test]
    fn negative_exponent_is_division() {
        let e = parse_expr("x0^-2", 1).unwrap();
        assert_eq!(*e.node(), Node::Div(konst(1.0), Arc::new(Node::Pow(var(0), 2))));
    }

    #[test]
    fn errors_carry_offsets() {
        assert!(matches!(parse_expr("x0^0.5", 1), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_expr("x0 + ", 1), Err(Error::Syntax { offset: 5, .. })));
        assert!(matches!(parse_expr("(x0", 1), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_expr("x0 x0", 1), Err(Error::Syntax { offset: 3, .. })));
        assert_eq!(
            parse_expr("2*y", 1).unwrap_err(),
            Error::UnknownIdentifier { name: "y".into(), offset: 2 }
        );
        assert!(matches!(parse_expr("sin x0", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("1..2", 1), Err(Error::Syntax { offset: 0, .. })));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_expr("1.5e2", 1).unwrap().as_constant(), Some(150.0));
        assert_eq!(parse_expr(".25", 1).unwrap().as_constant(), Some(0.25));
        assert_eq!(parse_expr("  -(3) ", 1).unwrap().as_constant(), Some(-3.0));
    }
}
