//! Expression parser shared by the canonical series rendering and the
//! system-spec right-hand sides.
//!
//! Grammar (juxtaposition multiplies):
//!
//! ```text
//! expr    := [+|-] term { (+|-) term }
//! term    := factor { [*|/] factor }
//! factor  := primary [ ^ int ]
//! primary := number | ident | phi[k] | Z[rate]{ expr } | ( expr )
//! ```

use crate::noise::{conv, NoisePoly};
use crate::rational::{parse_q, Q};
use crate::series::{Ctx, Series, SeriesError};
use num_bigint::BigInt;
use num_traits::Zero;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Sym(char),
}

fn err(col: usize, msg: impl Into<String>) -> SeriesError {
    SeriesError::Parse {
        col,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, SeriesError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Num(s.parse().unwrap()), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()[]{}".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(err(col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

/// Resolves identifiers to series; `None` means unknown.
pub type Resolver<'a> = dyn Fn(&str) -> Option<Series> + 'a;

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
    ctx: Arc<Ctx>,
    resolve: &'a Resolver<'a>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SeriesError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(err(self.col(), format!("expected `{c}`")))
        }
    }

    fn int(&mut self) -> Result<BigInt, SeriesError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => Err(err(self.col(), "expected an integer")),
        }
    }

    fn expr(&mut self) -> Result<Series, SeriesError> {
        let mut acc = if self.eat('-') {
            self.term()?.neg()
        } else {
            self.eat('+');
            self.term()?
        };
        loop {
            if self.eat('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn starts_primary(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Ident(_)) | Some(Tok::Sym('(')) | Some(Tok::Num(_))
        )
    }

    fn term(&mut self) -> Result<Series, SeriesError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat('*') {
                acc = acc.mul(&self.factor()?);
            } else if self.peek() == Some(&Tok::Sym('/')) {
                let col = self.col();
                self.pos += 1;
                let d = self.factor()?;
                let k = constant_of(&d).ok_or_else(|| err(col, "division by a non-constant"))?;
                if k.is_zero() {
                    return Err(err(col, "division by zero"));
                }
                acc = acc.scale(&(Q::from_integer(1.into()) / k));
            } else if self.starts_primary() && !matches!(self.peek(), Some(Tok::Num(_))) {
                acc = acc.mul(&self.factor()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Series, SeriesError> {
        let base = self.primary()?;
        if self.eat('^') {
            let col = self.col();
            let n = self.int()?;
            let n: u32 = n.try_into().map_err(|_| err(col, "exponent too large"))?;
            Ok(base.pow(n))
        } else {
            Ok(base)
        }
    }

    fn rate(&mut self) -> Result<Q, SeriesError> {
        let col = self.col();
        let mut s = String::new();
        if self.eat('-') {
            s.push('-');
        } else {
            self.eat('+');
        }
        s.push_str(&self.int()?.to_string());
        if self.eat('/') {
            s.push('/');
            s.push_str(&self.int()?.to_string());
        }
        parse_q(&s).ok_or_else(|| err(col, "bad rate"))
    }

    fn primary(&mut self) -> Result<Series, SeriesError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Series::constant(&self.ctx, Q::from_integer(n)))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "phi" && self.eat('[') {
                    let k = self.int()?;
                    self.expect(']')?;
                    let k: u32 = k.try_into().map_err(|_| err(col, "noise index too large"))?;
                    return Ok(Series::noise(&self.ctx, &NoisePoly::bare(k)));
                }
                if name == "Z" && self.eat('[') {
                    let rate = self.rate()?;
                    if rate.is_zero() {
                        return Err(err(col, "convolution rate must be nonzero"));
                    }
                    self.expect(']')?;
                    self.expect('{')?;
                    let inner_col = self.col();
                    let child = self.expr()?;
                    self.expect('}')?;
                    let p = pure_noise(&child)
                        .ok_or_else(|| err(inner_col, "convolution argument must be pure noise"))?;
                    let c = conv(&rate, &p).map_err(SeriesError::Noise)?;
                    return Ok(Series::noise(&self.ctx, &c));
                }
                (self.resolve)(&name).ok_or_else(|| err(col, format!("unknown name `{name}`")))
            }
            Some(Tok::Sym(c)) => Err(err(col, format!("unexpected `{c}`"))),
            None => Err(err(col, "unexpected end of input")),
        }
    }
}

fn constant_of(s: &Series) -> Option<Q> {
    if s.is_zero() {
        return Some(Q::zero());
    }
    let mut it = s.iter();
    let (k, c) = it.next()?;
    if it.next().is_none() && k.exps.iter().all(|&e| e == 0) && k.noise.is_one() {
        Some(c.clone())
    } else {
        None
    }
}

fn pure_noise(s: &Series) -> Option<NoisePoly> {
    let mut p = NoisePoly::zero();
    for (k, c) in s.iter() {
        if k.exps.iter().any(|&e| e > 0) {
            return None;
        }
        p.add_term(k.noise.clone(), c.clone());
    }
    Some(p)
}

/// Parses `text` into a series of `ctx`, resolving identifiers by `resolve`.
pub fn parse_expr(ctx: &Arc<Ctx>, text: &str, resolve: &Resolver<'_>) -> Result<Series, SeriesError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
        ctx: ctx.clone(),
        resolve,
    };
    let s = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(err(p.col(), "trailing input"));
    }
    Ok(s)
}

/// Parses canonical series text, where identifiers are the context's names.
pub fn parse_series(ctx: &Arc<Ctx>, text: &str) -> Result<Series, SeriesError> {
    let c = ctx.clone();
    let resolve = move |name: &str| c.index_of(name).map(|i| Series::var(&c, i));
    parse_expr(ctx, text, &resolve)
}

/// Parses a pure noise combination such as `phi[0]*Z[-1]{ phi[0] } + 1/2`.
pub fn parse_noise(text: &str) -> Result<NoisePoly, SeriesError> {
    let ctx = Ctx::new(
        crate::series::Dims {
            slow: 0,
            fast: 0,
            params: 0,
        },
        vec![],
        crate::series::Truncation::uniform(0, 0),
    );
    let s = parse_series(&ctx, text)?;
    Ok(pure_noise(&s).expect("no variables in an empty context"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::build::*;
    use crate::rational::{q, qi};

    #[test]
    fn noise_round_trip() {
        let zm = z(-1, &phi(0));
        let nested = z(-1, &prod(&[&zm, &zm]));
        let zp = z(1, &prod(&[&phi(0), &zm]));
        let mut p = NoisePoly::zero();
        p.add_term(prod(&[&phi(0), &nested]), q(3, 2));
        p.add_term(prod(&[&zp, &zm]), qi(-4));
        p.add_term(crate::noise::NoiseExpr::one(), q(1, 2));
        let text = p.to_string();
        assert_eq!(parse_noise(&text).unwrap(), p);
    }

    #[test]
    fn composition_on_parse() {
        let p = parse_noise("Z[+1]{ Z[-1]{ phi[0] } }").unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn error_columns() {
        match parse_noise("phi[0] * ?") {
            Err(SeriesError::Parse { col, .. }) => assert_eq!(col, 10),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_noise("Z[0]{ phi[0] }"), Err(SeriesError::Parse { .. })));
    }
}
