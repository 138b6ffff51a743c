//! Exact rational helpers: parsing, JSON encoding, and small numeric utilities.
//!
//! Rationals travel through JSON as `{"num": int, "den": int}`. Integers that
//! do not fit in an `i64` are written as decimal strings; both encodings are
//! accepted on input.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::str::FromStr;

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{input}` as a rational: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

/// Parses `"3"`, `"-1/3"`, `"0.125"` or `"9/19"` into an exact rational.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = |reason| ParseRationalError {
        input: input.to_string(),
        reason,
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err("empty input"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| err("bad numerator"))?;
        let den = BigInt::from_str(den.trim()).map_err(|_| err("bad denominator"))?;
        if den.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(num, den));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err("expected decimal digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    let num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits })
        .map_err(|_| err("bad digits"))?;
    let den = num_traits::pow(BigInt::from(10u8), frac_part.len());
    let value = Rational::new(num, den);
    Ok(if negative { -value } else { value })
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Lossy conversion for diagnostics and transcendental evaluation.
pub fn to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() && (v != 0.0 || r.is_zero()) {
            return v;
        }
    }
    // Fall back to a log-domain estimate for values outside the f64 range.
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let ln = ln_abs_bigint(r.numer()) - ln_abs_bigint(r.denom());
    sign * ln.exp()
}

fn ln_abs_bigint(v: &BigInt) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.abs().to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (v.abs() >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + (shift as f64) * std::f64::consts::LN_2
}

/// Exact `base^exp` for a non-negative integer exponent.
pub fn pow(base: &Rational, exp: usize) -> Rational {
    num_traits::pow(base.clone(), exp)
}

pub fn ceil_to_u64(r: &Rational) -> Option<u64> {
    r.ceil().to_integer().to_u64()
}

/// Least common multiple of all denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonInt {
    Small(i64),
    Big(String),
}

impl JsonInt {
    fn encode(v: &BigInt) -> Self {
        match v.to_i64() {
            Some(small) => JsonInt::Small(small),
            None => JsonInt::Big(v.to_string()),
        }
    }

    fn decode(self) -> Result<BigInt, String> {
        match self {
            JsonInt::Small(v) => Ok(BigInt::from(v)),
            JsonInt::Big(s) => BigInt::from_str(&s).map_err(|_| format!("invalid integer `{s}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RatioRepr {
    num: JsonInt,
    den: JsonInt,
}

impl RatioRepr {
    fn encode(r: &Rational) -> Self {
        RatioRepr {
            num: JsonInt::encode(r.numer()),
            den: JsonInt::encode(r.denom()),
        }
    }

    fn decode(self) -> Result<Rational, String> {
        let num = self.num.decode()?;
        let den = self.den.decode()?;
        if den.is_zero() {
            return Err("zero denominator".to_string());
        }
        Ok(Rational::new(num, den))
    }
}

/// `#[serde(with = "crate::rational::json")]` for a single rational field.
pub mod json {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        RatioRepr::encode(r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        RatioRepr::deserialize(d)?
            .decode()
            .map_err(serde::de::Error::custom)
    }
}

/// Same encoding for `Vec<Rational>`.
pub mod json_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(RatioRepr::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<RatioRepr>::deserialize(d)?
            .into_iter()
            .map(|r| r.decode().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Standalone serializable rational, for report structs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exact(#[serde(with = "json")] pub Rational);

impl From<Rational> for Exact {
    fn from(r: Rational) -> Self {
        Exact(r)
    }
}

impl std::fmt::Display for Exact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
