use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_FRAC_BITS: u32 = 40;

/// Signed fixed-point vector: value `i` is `ints[i] * 2^-frac_bits`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedVector {
    pub ints: Vec<i64>,
    pub frac_bits: u32,
    /// Magnitude bound in real units, stored as its bit pattern so the type stays `Eq`.
    bound_bits: u64,
}

impl FixedVector {
    /// Wraps already-quantized integers, checking them against the bound.
    pub fn from_ints(ints: Vec<i64>, frac_bits: u32, bound: f64) -> Result<Self> {
        let limit = int_limit(frac_bits, bound)?;
        if let Some(i) = ints.iter().position(|v| v.unsigned_abs() as f64 > limit) {
            return Err(Error::Range {
                index: i,
                value: ints[i] as f64 * (-(frac_bits as f64)).exp2(),
                bound,
            });
        }
        Ok(FixedVector { ints, frac_bits, bound_bits: bound.to_bits() })
    }

    pub fn bound(&self) -> f64 {
        f64::from_bits(self.bound_bits)
    }

    pub fn len(&self) -> usize {
        self.ints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ints.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let scale = (-(self.frac_bits as f64)).exp2();
        self.ints.iter().map(|&v| v as f64 * scale).collect()
    }
}

fn int_limit(frac_bits: u32, bound: f64) -> Result<f64> {
    if frac_bits > MAX_FRAC_BITS + 20 {
        return Err(Error::Invalid(format!("{frac_bits} fractional bits is too many")));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::Invalid(format!("magnitude bound must be positive and finite, got {bound}")));
    }
    let limit = bound * (frac_bits as f64).exp2();
    if limit >= 2f64.powi(62) {
        return Err(Error::Invalid(format!(
            "bound {bound} with {frac_bits} fractional bits does not fit 62-bit integers"
        )));
    }
    Ok(limit)
}

/// Rounds `x * 2^f` to the nearest integer, ties to even.
pub fn quantize_scalar(x: f64, frac_bits: u32) -> i64 {
    (x * (frac_bits as f64).exp2()).round_ties_even() as i64
}

pub fn quantize(xs: &[f64], frac_bits: u32, bound: f64) -> Result<FixedVector> {
    if frac_bits > MAX_FRAC_BITS {
        return Err(Error::Invalid(format!(
            "at most {MAX_FRAC_BITS} fractional bits are supported, got {frac_bits}"
        )));
    }
    int_limit(frac_bits, bound)?;
    if let Some(i) = xs.iter().position(|x| !(x.abs() <= bound)) {
        return Err(Error::Range { index: i, value: xs[i], bound });
    }
    let ints = xs.iter().map(|&x| quantize_scalar(x, frac_bits)).collect();
    Ok(FixedVector { ints, frac_bits, bound_bits: bound.to_bits() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_vector_quantizes_to_zero() {
        let q = quantize(&[0.0; 7], 13, 1.0).unwrap();
        assert!(q.ints.iter().all(|&v| v == 0));
    }

    #[test]
    fn dyadic_value_is_exact() {
        let q = quantize(&[1.0], 4, 2.0).unwrap();
        assert_eq!(q.ints, vec![16]);
        assert_eq!(q.dequantize(), vec![1.0]);
    }

    #[test]
    fn ties_round_to_even() {
        // 2.5 and 3.5 ulps at f = 0
        let q = quantize(&[2.5, 3.5, -2.5], 0, 10.0).unwrap();
        assert_eq!(q.ints, vec![2, 4, -2]);
    }

    #[test]
    fn out_of_range_names_index() {
        let err = quantize(&[0.1, -3.0, 0.2], 8, 2.0).unwrap_err();
        assert!(matches!(err, Error::Range { index: 1, .. }), "{err}");
        assert!(quantize(&[f64::NAN], 8, 2.0).is_err());
    }

    #[test]
    fn uniform_round_trip_within_half_ulp() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let b = 64.0;
        let f = 24;
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-b..=b)).collect();
        let back = quantize(&xs, f, b).unwrap().dequantize();
        let worst = xs.iter().zip(&back).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 2f64.powi(-25), "worst {worst:e}");
    }

    proptest! {
        #[test]
        fn round_trip_error_at_most_half_ulp(x in -1000.0f64..1000.0, f in 0u32..=40) {
            let q = quantize(&[x], f, 1000.0).unwrap();
            let back = q.dequantize()[0];
            prop_assert!((x - back).abs() <= (-(f as f64) - 1.0).exp2());
        }
    }
}
