//! Exact rational helpers: float conversion at the float boundary, dyadic
//! snapping, and the JSON integer-pair encoding shared by every file format.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Nearest float. Panics never; huge values saturate to ±inf.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact value of a finite float.
pub fn from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

/// Rounds `x` to the nearest multiple of `2^-bits`.
pub fn snap(x: f64, bits: u32) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let scale = BigInt::one() << bits;
    let scaled = from_f64(x)? * BigRational::from_integer(scale.clone());
    Some(BigRational::new(scaled.round().to_integer(), scale))
}

/// Parameters for turning geometric floats into exact squared distances.
///
/// Values are rounded to denominators `2^denom_bits`; when the exact
/// configuration fails re-certification the bit budget doubles, at most
/// `max_retries` times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapPolicy {
    pub denom_bits: u32,
    pub max_retries: u32,
}

impl Default for SnapPolicy {
    fn default() -> Self {
        Self {
            denom_bits: 32,
            max_retries: 3,
        }
    }
}

impl SnapPolicy {
    pub fn with_bits(denom_bits: u32) -> Self {
        Self {
            denom_bits,
            ..Self::default()
        }
    }

    /// Bit budgets tried in order: b, 2b, 4b, ...
    pub fn schedule(&self) -> impl Iterator<Item = u32> {
        let base = self.denom_bits.max(1);
        (0..=self.max_retries).map(move |i| base.saturating_mul(1 << i.min(16)))
    }
}

/// JSON integer: a number when it fits in `i64`, a decimal string otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonInt {
    Small(i64),
    Big(String),
}

impl JsonInt {
    pub fn encode(v: &BigInt) -> Self {
        match v.to_i64() {
            Some(s) => JsonInt::Small(s),
            None => JsonInt::Big(v.to_string()),
        }
    }

    pub fn decode(&self) -> Result<BigInt> {
        match self {
            JsonInt::Small(v) => Ok(BigInt::from(*v)),
            JsonInt::Big(s) => s
                .trim()
                .parse::<BigInt>()
                .map_err(|e| Error::Malformed(format!("bad integer {s:?}: {e}"))),
        }
    }
}

/// `[numerator, denominator]`, always in lowest terms with a positive denominator.
pub type JsonRational = [JsonInt; 2];

pub fn encode_rational(r: &BigRational) -> JsonRational {
    [JsonInt::encode(r.numer()), JsonInt::encode(r.denom())]
}

pub fn decode_rational(pair: &JsonRational) -> Result<BigRational> {
    let numer = pair[0].decode()?;
    let denom = pair[1].decode()?;
    if denom.is_zero() {
        return Err(Error::Malformed("zero denominator".into()));
    }
    Ok(BigRational::new(numer, denom))
}

/// Serde adapter storing a `BigRational` as a [`JsonRational`] pair.
pub mod serde_rational {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{decode_rational, encode_rational, JsonRational};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        encode_rational(r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let pair = JsonRational::deserialize(d)?;
        decode_rational(&pair).map_err(serde::de::Error::custom)
    }
}
