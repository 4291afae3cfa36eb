//! Pallas base field helpers: signed integer embedding and hex encoding.

use ff::{Field, PrimeField};
pub use pasta_curves::Fp;

use crate::error::{Error, Result};

pub fn fe_i64(v: i64) -> Fp {
    if v < 0 {
        -Fp::from(v.unsigned_abs())
    } else {
        Fp::from(v as u64)
    }
}

pub fn fe_i128(v: i128) -> Fp {
    let mag = Fp::from_u128(v.unsigned_abs());
    if v < 0 {
        -mag
    } else {
        mag
    }
}

pub fn fe_u64(v: u64) -> Fp {
    Fp::from(v)
}

/// Reads a field element as a signed integer if it lies within `2^126` of zero.
pub fn fe_to_i128(x: Fp) -> Option<i128> {
    let small = |y: Fp| -> Option<i128> {
        let repr = y.to_repr();
        if repr[16..].iter().any(|&b| b != 0) {
            return None;
        }
        let v = u128::from_le_bytes(repr[..16].try_into().unwrap());
        (v < (1u128 << 126)).then_some(v as i128)
    };
    small(x).or_else(|| small(-x).map(|v| -v))
}

/// Big-endian hex of the canonical representation.
pub fn fe_hex(x: &Fp) -> String {
    let mut bytes = x.to_repr();
    bytes.reverse();
    hex::encode(bytes)
}

pub fn fe_from_hex(s: &str) -> Result<Fp> {
    let mut bytes: [u8; 32] = hex::decode(s)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Invalid(format!("`{s}` is not a 32-byte hex field element")))?;
    bytes.reverse();
    Option::from(Fp::from_repr(bytes)).ok_or_else(|| Error::Invalid(format!("`{s}` is not a canonical field element")))
}

pub fn fe_is_zero(x: &Fp) -> bool {
    bool::from(x.is_zero())
}
