//! A tiny arithmetic language over the variables `x` and `y`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp'
//! ```
//!
//! `^` binds tighter than unary minus and is right associative, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^9`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(Var::X) => p.x,
            Expr::Var(Var::Y) => p.y,
            Expr::Neg(e) => -e.eval(p),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(p), b.eval(p));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(p);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
        }
    }

    /// Whether the expression mentions `x` or `y`.
    pub fn depends_on_position(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(_) => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on_position(),
            Expr::Bin(_, a, b) => a.depends_on_position() || b.depends_on_position(),
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized, so that printing and re-parsing is the identity.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let op = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({a} {op} {b})")
            }
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_expr(s)
    }
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: src.len(),
    };
    let e = parser.expr()?;
    match parser.peek() {
        None => Ok(e),
        Some((pos, tok)) => Err(Error::Syntax {
            pos,
            msg: format!("unexpected {tok:?} after complete expression"),
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Token::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Token::RParen));
            i += 1;
        } else {
            return Err(Error::Syntax {
                pos: i,
                msg: format!("unexpected character `{}`", src[i..].chars().next().unwrap()),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(p, t)| (*p, t))
    }

    fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_op(&mut self, ops: &str) -> Option<char> {
        match self.peek() {
            Some((_, Token::Op(c))) if ops.contains(*c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op("+-") {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op("*/") {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.eat_op("+-") {
            Some('-') => Ok(Expr::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat_op("^").is_some() {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self, open_pos: usize) -> Result<()> {
        match self.next() {
            Some((_, Token::RParen)) => Ok(()),
            Some((pos, tok)) => Err(Error::Syntax {
                pos,
                msg: format!("expected `)` to close `(` at {open_pos}, found {tok:?}"),
            }),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: format!("unclosed `(` at {open_pos}"),
            }),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some((pos, tok)) = self.next() else {
            return Err(Error::Syntax {
                pos: self.end,
                msg: "unexpected end of input".into(),
            });
        };
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let e = self.expr()?;
                self.expect_rparen(pos)?;
                Ok(e)
            }
            Token::Ident(name) => {
                let func = match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "pi" => return Ok(Expr::Pi),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    _ => return Err(Error::UnknownIdentifier(name)),
                };
                match self.next() {
                    Some((open, Token::LParen)) => {
                        let arg = self.expr()?;
                        self.expect_rparen(open)?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                    other => Err(Error::Syntax {
                        pos: other.map_or(self.end, |(p, _)| p),
                        msg: format!("expected `(` after `{name}`"),
                    }),
                }
            }
            Token::Op(c) => Err(Error::Syntax {
                pos,
                msg: format!("unexpected operator `{c}`"),
            }),
            Token::RParen => Err(Error::Syntax {
                pos,
                msg: "unexpected `)`".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn at(src: &str, x: f64, y: f64) -> f64 {
        parse_expr(src).unwrap().eval(Point::new(x, y))
    }

    #[test]
    fn basic_examples() {
        assert_eq!(at("1+x", 0.5, 0.25), 1.5);
        assert_eq!(at("x*y", 0.5, 0.25), 0.125);
        // exp(0.125) from a calculator
        assert!((at("exp(x*y)", 0.5, 0.25) - 1.133_148_453_066_826_3).abs() < 1e-15);
    }

    #[test]
    fn table_of_hand_evaluations() {
        let (x, y) = (0.5, 0.25);
        let table: [(&str, f64); 20] = [
            ("2+3*4", 14.0),
            ("(2+3)*4", 20.0),
            ("2^3^2", 512.0),
            ("-2^2", -4.0),
            ("(-2)^2", 4.0),
            ("2^-1", 0.5),
            ("8/4/2", 1.0),
            ("10-4-3", 3.0),
            ("--x", 0.5),
            ("+y", 0.25),
            ("x^2+y^2", 0.3125),
            ("sin(pi*x)", 1.0),
            ("cos(pi)", -1.0),
            ("exp(0)", 1.0),
            ("1e-3*1000", 1.0),
            ("2.5E1", 25.0),
            ("x*y^2", 0.03125),
            ("-x*y", -0.125),
            ("sin(pi*x)*sin(pi*y)", (PI / 4.0).sin()),
            ("(1+x)*(1+y) - x*x*y*y", 1.875 - 0.015625),
        ];
        for (src, want) in table {
            let got = at(src, x, y);
            assert!((got - want).abs() < 1e-14, "{src}: {got} != {want}");
        }
    }

    #[test]
    fn print_then_parse_is_identity() {
        for src in ["1+x*y", "-x^2", "2^3^2", "exp(-x*y)/(1+y)", "sin(pi*x)-cos(y)^2", "0.1+1e-20"] {
            let e = parse_expr(src).unwrap();
            let printed = e.to_string();
            let again = parse_expr(&printed).unwrap();
            assert_eq!(e, again, "{src} -> {printed}");
            assert_eq!(printed, again.to_string());
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_expr("1 + * 2") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("(1 + 2") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("1 2"), Err(Error::Syntax { pos: 2, .. })));
        assert!(matches!(parse_expr("3 $ 4"), Err(Error::Syntax { pos: 2, .. })));
        assert!(matches!(parse_expr(""), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(parse_expr("tan(x)"), Err(Error::UnknownIdentifier(n)) if n == "tan"));
        assert!(matches!(parse_expr("z+1"), Err(Error::UnknownIdentifier(_))));
    }
}
