use super::Expr;
use crate::error::{Error, Result};

/// Largest accepted integer exponent.
pub const MAX_POWER: u32 = 12;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let done = tok == Tok::Eof;
            out.push((tok, at));
            if done {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, start));
        };
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        Err(Error::Parse {
            position: start,
            message: format!("unexpected character '{c}'"),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
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
        self.pos = i;
        let text = &self.src[start..i];
        let value: f64 = text.parse().map_err(|_| Error::Parse {
            position: start,
            message: format!("malformed number '{text}'"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                position: start,
                message: format!("number '{text}' is not finite"),
            });
        }
        Ok((Tok::Num(value), start))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

pub(crate) fn parse_expr(text: &str) -> Result<Expr> {
    let toks = Lexer::tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::Eof => Ok(e),
        t => Err(p.error(format!("unexpected token {t:?} after expression"))),
    }
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
        if t != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn error(&self, message: String) -> Error {
        Error::Parse {
            position: self.pos(),
            message,
        }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {want:?}, found {:?}", self.peek())))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let at = self.pos();
            let k = match self.bump() {
                Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => v,
                t => {
                    return Err(Error::Parse {
                        position: at,
                        message: format!("exponent must be a nonnegative integer, found {t:?}"),
                    })
                }
            };
            if k > MAX_POWER as f64 {
                return Err(Error::Parse {
                    position: at,
                    message: format!("exponent {k} exceeds the maximum of {MAX_POWER}"),
                });
            }
            return Ok(Expr::Pow(Box::new(base), k as u32));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "min" | "max" => {
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(if name == "min" {
                        Expr::Min(Box::new(a), Box::new(b))
                    } else {
                        Expr::Max(Box::new(a), Box::new(b))
                    })
                }
                "abs" => {
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Abs(Box::new(a)))
                }
                _ => variable_index(&name).map(Expr::Var).ok_or(Error::Parse {
                    position: at,
                    message: format!("unknown identifier '{name}'"),
                }),
            },
            t => Err(Error::Parse {
                position: at,
                message: format!("unexpected token {t:?}"),
            }),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reports_positions() {
        match parse_expr("x1 + * 2") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 5),
            other => panic!("{other:?}"),
        }
        match parse_expr("x1 + y") {
            Err(Error::Parse { position, message }) => {
                assert_eq!(position, 5);
                assert!(message.contains("unknown identifier"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("max(x1 0)").is_err());
        assert!(parse_expr("x0").is_err());
        assert!(parse_expr("(x1").is_err());
        assert!(parse_expr("").is_err());
    }

    #[test]
    fn rejects_large_exponents() {
        assert!(parse_expr("x1^12").is_ok());
        assert!(matches!(parse_expr("x1^13"), Err(Error::Parse { position: 3, .. })));
        assert!(parse_expr("x1^1.5").is_err());
        assert!(parse_expr("x1^x2").is_err());
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(parse_expr("-3^2").unwrap().eval(&[]), -9.0);
        assert_eq!(parse_expr("(-3)^2").unwrap().eval(&[]), 9.0);
        assert_eq!(parse_expr("2 - -3").unwrap().eval(&[]), 5.0);
        assert_eq!(parse_expr("1e-3*x1").unwrap().eval(&[2.0]), 2e-3);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50.0f64..50.0).prop_map(Expr::Const),
            (0usize..4).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 0u32..=MAX_POWER).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
                inner.prop_map(|a| Expr::Abs(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity_on_canonical_form(e in arb_expr()) {
            let canon = e.canonical();
            let printed = canon.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(reparsed, canon);
        }
    }
}
