//! Tiny expression grammar for configuration-supplied fields.
//!
//! Grammar (validated before any numeric work):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 'x' | 'y' | 'phi' | 'z' | 'pi'
//!         | 'sin' '(' expr ')' | 'cos' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables map to chart coordinates: `x`/`phi` to coordinate 0, `y`/`z`
//! to coordinate 1.

use crate::error::{Error, Result};
use crate::scalar::{Real, V2};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Chart coordinate index (0 or 1).
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn eval<S: Real>(&self, q: V2<S>) -> S {
        match self {
            Expr::Const(c) => S::of(*c),
            Expr::Coord(i) => q[*i],
            Expr::Neg(a) => -a.eval(q),
            Expr::Add(a, b) => a.eval(q) + b.eval(q),
            Expr::Sub(a, b) => a.eval(q) - b.eval(q),
            Expr::Mul(a, b) => a.eval(q) * b.eval(q),
            Expr::Pow(a, n) => {
                let base: S = a.eval(q);
                let mut out = S::one();
                for _ in 0..*n {
                    out = out * base;
                }
                out
            }
            Expr::Sin(a) => a.eval(q).sin(),
            Expr::Cos(a) => a.eval(q).cos(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.eat(b'*') {
            let rhs = self.unary()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return self.err("expected integer exponent after '^'");
            }
            let n: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| Error::Parse {
                    pos: start,
                    msg: "exponent out of range".into(),
                })?;
            Ok(Expr::Pow(Box::new(base), n))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || ((self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
                    && self.pos + 1 < self.src.len()
                    && (self.src[self.pos + 1].is_ascii_digit()
                        || self.src[self.pos + 1] == b'-'
                        || self.src[self.pos + 1] == b'+'))
                || ((self.src[self.pos] == b'-' || self.src[self.pos] == b'+')
                    && self.pos > start
                    && (self.src[self.pos - 1] == b'e' || self.src[self.pos - 1] == b'E')))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Const(v)),
            Err(_) => Err(Error::Parse {
                pos: start,
                msg: format!("invalid number '{text}'"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "x" | "phi" => Ok(Expr::Coord(0)),
            "y" | "z" => Ok(Expr::Coord(1)),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "sin" | "cos" => {
                self.expect(b'(')?;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(if name == "sin" {
                    Expr::Sin(Box::new(inner))
                } else {
                    Expr::Cos(Box::new(inner))
                })
            }
            _ => Err(Error::Parse {
                pos: start,
                msg: format!("unknown identifier '{name}'"),
            }),
        }
    }
}

/// Parse one expression; the whole input must be consumed.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input after expression");
    }
    Ok(e)
}
