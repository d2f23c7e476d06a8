//! Exact rational scalars used for every symbolic coefficient and rate.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::str::FromStr;

pub type Q = BigRational;

/// `n/d` as an exact rational. Panics on a zero denominator.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn sgn(x: &Q) -> i32 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn is_one(x: &Q) -> bool {
    x.is_one()
}

pub fn is_zero(x: &Q) -> bool {
    x.is_zero()
}

/// Renders `p` or `p/q` with an explicit leading sign when `signed` is set.
pub fn fmt_q(x: &Q, signed: bool) -> String {
    let body = if x.denom().is_one() {
        x.numer().abs().to_string()
    } else {
        format!("{}/{}", x.numer().abs(), x.denom())
    };
    match (x.is_negative(), signed) {
        (true, _) => format!("-{body}"),
        (false, true) => format!("+{body}"),
        (false, false) => body,
    }
}

/// Parses `p`, `-p`, `+p`, `p/q`.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    let s = s.strip_prefix('+').unwrap_or(s);
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).ok()?;
            let d = BigInt::from_str(d.trim()).ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Q::new(n, d))
            }
        }
        None => BigInt::from_str(s).ok().map(Q::from_integer),
    }
}
