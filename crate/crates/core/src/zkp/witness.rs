use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curvature::BlockFisher;
use crate::error::{Error, Result};
use crate::masking::MaskArtifact;
use crate::numkit::{quantize, BlockLayout, FixedVector, ParamVector};

/// Fractional bits and magnitude bounds of the fixed-point encoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub f_w: u32,
    pub f_c: u32,
    pub b_w: f64,
    pub b_c: f64,
    pub b_lambda: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams { f_w: 24, f_c: 24, b_w: 64.0, b_c: 1024.0, b_lambda: 64.0 }
    }
}

impl FixedParams {
    pub fn with_frac_bits(frac_bits: u32) -> Self {
        FixedParams { f_w: frac_bits, f_c: frac_bits, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_w + self.f_c > 60 {
            return Err(Error::Invalid(format!(
                "f_w + f_c = {} exceeds 60 fractional bits",
                self.f_w + self.f_c
            )));
        }
        for (name, b) in [("B_w", self.b_w), ("B_c", self.b_c), ("B_lambda", self.b_lambda)] {
            if !(b.is_finite() && b >= 1.0) || b.log2().fract() != 0.0 {
                return Err(Error::Invalid(format!("{name} must be a power of two >= 1, got {b}")));
            }
        }
        Ok(())
    }

    /// One unit of the stationarity residual, in real terms.
    pub fn residual_unit(&self) -> f64 {
        (-((self.f_w + self.f_c) as f64)).exp2()
    }
}

/// Tolerance for stationarity rows outside the mask, in `2^-(f_w+f_c)` units:
/// the smallest power of two at least `4 (d_b + 1)(B_c + B_w) 2^max(f_w, f_c)`.
pub fn default_t_int(max_block: usize, p: &FixedParams) -> u128 {
    let raw = 4.0 * (max_block as f64 + 1.0) * (p.b_c + p.b_w) * (p.f_w.max(p.f_c) as f64).exp2();
    let bits = raw.log2().ceil() as u32;
    1u128 << bits
}

/// Tolerance for masked stationarity rows: one multiplier unit.
pub fn masked_row_tolerance(p: &FixedParams) -> u128 {
    1u128 << p.f_c
}

/// Worst-case honest residual on a row outside the mask in integer units,
/// given the real-valued residual `real_residual` of the float solve.
pub fn worst_case_residual_bound(max_block: usize, p: &FixedParams, real_residual: f64) -> f64 {
    let d = max_block as f64;
    let (sw, sc) = ((p.f_w as f64).exp2(), (p.f_c as f64).exp2());
    real_residual * sw * sc + d * (0.5 * sc * p.b_w + 0.5 * sw * p.b_c + 0.25)
}

/// Quantized certificate witness.
///
/// `c_upper` holds the upper triangle of each damped curvature block,
/// row-major within a block, blocks in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedWitness {
    pub params: FixedParams,
    pub layout: Arc<BlockLayout>,
    pub support: Vec<usize>,
    pub theta_p: FixedVector,
    pub theta_u: FixedVector,
    pub delta_w: FixedVector,
    pub lambda_m: FixedVector,
    pub c_upper: FixedVector,
    /// Largest gap between the re-derived and the supplied multipliers, real units.
    pub lambda_shift: f64,
}

pub fn upper_len(layout: &BlockLayout) -> usize {
    layout.blocks().iter().map(|b| b.size * (b.size + 1) / 2).sum()
}

/// Position of `(i, j)` inside an `n`-sized upper triangle stored row-major.
pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Integer matvec `C~ dw~` for one block, in `2^-(f_w+f_c)` units.
pub fn block_products(c_upper: &[i64], dw: &[i64]) -> Vec<i128> {
    let n = dw.len();
    (0..n)
        .map(|i| (0..n).map(|j| c_upper[upper_index(n, i, j)] as i128 * dw[j] as i128).sum())
        .collect()
}

/// Quantizes an honest solution into a witness on which assembly and
/// feasibility hold exactly.
///
/// `theta_p` and the unmasked part of `delta_w` are rounded; the masked
/// part of the update and `theta_u` are then defined from them. The
/// multipliers are re-derived from the quantized products so each masked
/// stationarity row is within half a multiplier unit of zero;
/// `lambda_shift` records how far that moved them from `lambda_m`.
pub fn encode_fixed_witness(
    theta_p: &ParamVector,
    theta_u: &ParamVector,
    delta_w: &ParamVector,
    lambda_m: &[f64],
    c_p: &BlockFisher,
    mask: &MaskArtifact,
    params: &FixedParams,
) -> Result<FixedWitness> {
    params.validate()?;
    let d = theta_p.len();
    let layout = c_p.layout().clone();
    for (what, n) in [
        ("unlearned parameters", theta_u.len()),
        ("update", delta_w.len()),
        ("curvature", layout.dim()),
        ("mask", mask.d()),
    ] {
        if n != d {
            return Err(Error::Dimension { what, expected: d, got: n });
        }
    }
    let support = mask.support().as_slice().to_vec();
    if lambda_m.len() != support.len() {
        return Err(Error::Dimension { what: "multipliers", expected: support.len(), got: lambda_m.len() });
    }

    let tp = quantize(theta_p.values(), params.f_w, params.b_w)?;
    let mut dw = quantize(delta_w.values(), params.f_w, params.b_w)?.ints;
    for &i in &support {
        dw[i] = -tp.ints[i];
    }
    let tu: Vec<i64> = tp.ints.iter().zip(&dw).map(|(a, b)| a + b).collect();
    let tu = FixedVector::from_ints(tu, params.f_w, params.b_w)?;
    let scale = (-(params.f_w as f64)).exp2();
    let slack = 2.0 * scale + 1e-9 * (1.0 + theta_u.norm_inf());
    if let Some(i) = (0..d).find(|&i| (tu.ints[i] as f64 * scale - theta_u.values()[i]).abs() > slack) {
        return Err(Error::Invalid(format!(
            "unlearned parameter {i} is not the sum of the pretrained value and the update"
        )));
    }
    let dw = FixedVector::from_ints(dw, params.f_w, params.b_w)?;

    let damped = c_p.damped();
    let mut c_upper = Vec::with_capacity(upper_len(&layout));
    for (b, blk) in damped.blocks().iter().enumerate() {
        let n = layout.block(b).size;
        for i in 0..n {
            for j in i..n {
                c_upper.push(0.5 * (blk[(i, j)] + blk[(j, i)]));
            }
        }
    }
    let c_upper = quantize(&c_upper, params.f_c, params.b_c)?;

    let mut lambda_ints = Vec::with_capacity(support.len());
    let mut offset = 0;
    let mut cursor = 0;
    for blk in layout.blocks() {
        let n = blk.size;
        let len = n * (n + 1) / 2;
        let local: Vec<usize> = support[cursor..]
            .iter()
            .take_while(|&&i| i < blk.offset + n)
            .map(|&i| i - blk.offset)
            .collect();
        cursor += local.len();
        if !local.is_empty() {
            let y = block_products(&c_upper.ints[offset..offset + len], &dw.ints[blk.range()]);
            let unit = 1i128 << params.f_c;
            for &i in &local {
                lambda_ints.push(div_round_even(-y[i], unit) as i64);
            }
        }
        offset += len;
    }
    let lambda = FixedVector::from_ints(lambda_ints, params.f_w, params.b_lambda)?;
    let lambda_shift = lambda
        .dequantize()
        .iter()
        .zip(lambda_m)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));

    // the circuit windows are half-open, [-B 2^f, B 2^f)
    for (v, b) in [(&tp, params.b_w), (&tu, params.b_w), (&dw, params.b_w), (&lambda, params.b_lambda), (&c_upper, params.b_c)] {
        let top = (b as i64) << v.frac_bits;
        if let Some(i) = v.ints.iter().position(|&x| x >= top) {
            return Err(Error::Range { index: i, value: v.dequantize()[i], bound: b });
        }
    }

    Ok(FixedWitness {
        params: *params,
        layout,
        support,
        theta_p: tp,
        theta_u: tu,
        delta_w: dw,
        lambda_m: lambda,
        c_upper,
        lambda_shift,
    })
}

/// `num / den` rounded to nearest, ties to even; `den > 0`.
fn div_round_even(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Integer stationarity residual `C~ dw~ + 2^f_c E lambda~` per coordinate.
pub fn integer_residual(w: &FixedWitness) -> Vec<i128> {
    let mut out = Vec::with_capacity(w.layout.dim());
    let mut offset = 0;
    for blk in w.layout.blocks() {
        let len = blk.size * (blk.size + 1) / 2;
        out.extend(block_products(&w.c_upper.ints[offset..offset + len], &w.delta_w.ints[blk.range()]));
        offset += len;
    }
    for (j, &i) in w.support.iter().enumerate() {
        out[i] += (w.lambda_m.ints[j] as i128) << w.params.f_c;
    }
    out
}

/// Largest absolute residual on rows outside and inside the mask.
pub fn residual_extremes(w: &FixedWitness) -> (u128, u128) {
    let r = integer_residual(w);
    let mut inside = vec![false; r.len()];
    for &i in &w.support {
        inside[i] = true;
    }
    r.iter().zip(&inside).fold((0, 0), |(o, m), (v, &ins)| {
        if ins {
            (o, m.max(v.unsigned_abs()))
        } else {
            (o.max(v.unsigned_abs()), m)
        }
    })
}

/// Dequantized `||C dw + E lambda||_inf` of the witness.
pub fn dequantized_residual(w: &FixedWitness) -> f64 {
    let unit = w.params.residual_unit();
    integer_residual(w).iter().fold(0.0_f64, |m, &v| m.max(v.unsigned_abs() as f64 * unit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::IndexSet;
    use crate::numkit::{quantize_scalar, BlockDiagMatrix};
    use crate::obs::{apply_unlearn, group_obs_solve, SchurSolver};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn fisher(layout: Arc<BlockLayout>, blocks: Vec<DMatrix<f64>>) -> BlockFisher {
        let f = BlockDiagMatrix::new(blocks, layout).unwrap();
        BlockFisher::new(f, 1e-3, 1, String::new()).unwrap()
    }

    fn random_instance(seed: u64, sizes: &[usize], k: usize) -> (ParamVector, BlockFisher, MaskArtifact) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = Arc::new(
            BlockLayout::from_sizes(sizes.iter().enumerate().map(|(i, &n)| (format!("b{i}"), n))).unwrap(),
        );
        let blocks = sizes
            .iter()
            .map(|&n| {
                let g = DMatrix::from_fn(n + 3, n, |_, _| rng.gen_range(-1.0..1.0));
                g.transpose() * g / (n as f64 + 3.0)
            })
            .collect();
        let c = fisher(layout.clone(), blocks);
        let d = layout.dim();
        let theta = ParamVector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(), layout).unwrap();
        let mut idx: Vec<usize> = (0..d).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        idx.truncate(k);
        let m = MaskArtifact::new(d, IndexSet::all(d), IndexSet::new(idx)).unwrap();
        (theta, c, m)
    }

    fn honest(theta: &ParamVector, c: &BlockFisher, m: &MaskArtifact, p: &FixedParams) -> FixedWitness {
        let comp = group_obs_solve(c, theta, m, &SchurSolver).unwrap();
        let u = apply_unlearn(theta, &comp, m).unwrap();
        encode_fixed_witness(theta, &u.theta_u, &comp.delta_w, &comp.lambda_m, c, m, p).unwrap()
    }

    #[test]
    fn upper_index_enumerates_row_major() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(upper_index(n, i, j), k);
                assert_eq!(upper_index(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn rounding_division_ties_to_even() {
        assert_eq!(div_round_even(5, 2), 2);
        assert_eq!(div_round_even(7, 2), 4);
        assert_eq!(div_round_even(-5, 2), -2);
        assert_eq!(div_round_even(-7, 2), -4);
        assert_eq!(div_round_even(-8, 3), -3);
        assert_eq!(div_round_even(8, 3), 3);
    }

    #[test]
    fn zero_inputs_give_zero_witness() {
        let layout = Arc::new(BlockLayout::single(3, "w").unwrap());
        let c = fisher(layout.clone(), vec![DMatrix::zeros(3, 3)]);
        let z = ParamVector::zeros(layout);
        let m = MaskArtifact::new(3, IndexSet::all(3), IndexSet::new(vec![1])).unwrap();
        let p = FixedParams::default();
        let w = encode_fixed_witness(&z, &z, &z, &[0.0], &c, &m, &p).unwrap();
        assert!(w.theta_p.ints.iter().chain(&w.theta_u.ints).chain(&w.delta_w.ints).all(|&v| v == 0));
        assert_eq!(w.lambda_m.ints, vec![0]);
        // damping survives on the diagonal only
        let diag = quantize_scalar(1e-3, p.f_c);
        assert_eq!(w.c_upper.ints, vec![diag, 0, 0, diag, 0, diag]);
    }

    #[test]
    fn masked_unit_weight_is_cancelled_exactly() {
        let layout = Arc::new(BlockLayout::single(1, "w").unwrap());
        let c = fisher(layout.clone(), vec![DMatrix::from_element(1, 1, 1.0)]);
        let theta = ParamVector::new(vec![1.0], layout.clone()).unwrap();
        let m = MaskArtifact::new(1, IndexSet::all(1), IndexSet::new(vec![0])).unwrap();
        let w = honest(&theta, &c, &m, &FixedParams::default());
        assert_eq!(w.delta_w.ints, vec![-(1i64 << 24)]);
        assert_eq!(w.theta_u.ints, vec![0]);
    }

    #[test]
    fn assembly_and_feasibility_hold_exactly() {
        let p = FixedParams::default();
        for seed in 0..10 {
            let (theta, c, m) = random_instance(seed, &[6, 9, 4], 5);
            let w = honest(&theta, &c, &m, &p);
            for i in 0..theta.len() {
                assert_eq!(w.theta_u.ints[i], w.theta_p.ints[i] + w.delta_w.ints[i]);
            }
            for &i in &w.support {
                assert_eq!(w.delta_w.ints[i] + w.theta_p.ints[i], 0);
            }
        }
    }

    #[test]
    fn honest_residual_within_quantization_bound() {
        // oracle: |r_i| <= 2^(fw+fc)|y_i| + sum_j (|c_ij| 2^fc + |w_j| 2^fw)/2 + d_b/4,
        // with masked rows additionally allowed half a multiplier unit
        let p = FixedParams::default();
        for seed in 0..20 {
            let (theta, c, m) = random_instance(100 + seed, &[7, 12], 4);
            let comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
            let u = apply_unlearn(&theta, &comp, &m).unwrap();
            let w = encode_fixed_witness(&theta, &u.theta_u, &comp.delta_w, &comp.lambda_m, &c, &m, &p).unwrap();
            let r = integer_residual(&w);
            let dense = c.damped().to_dense();
            let (sw, sc) = (2f64.powi(24), 2f64.powi(24));
            for blk in w.layout.blocks() {
                for i in blk.range() {
                    let mut bound = comp.kkt_residual_inf * sw * sc + 0.25 * blk.size as f64 + 1.0;
                    for j in blk.range() {
                        bound += 0.5 * (dense[(i, j)].abs() * sc + comp.delta_w.values()[j].abs() * sw);
                    }
                    if m.support().contains(i) {
                        bound = bound.min(0.5 * sc);
                    }
                    assert!((r[i].unsigned_abs() as f64) <= bound, "row {i}: {} > {bound}", r[i]);
                }
            }
            let real_bound = (13.0) * (p.b_c + p.b_w + 2f64.powi(-24)) * 2f64.powi(-24);
            assert!(dequantized_residual(&w) <= real_bound);
            assert!(w.lambda_shift < 1e-5);
        }
    }

    #[test]
    fn tolerance_separates_honest_from_multiplier_tamper() {
        let p = FixedParams::default();
        for max_block in [8, 64, 256, 512] {
            let t = default_t_int(max_block, &p);
            assert!(t.is_power_of_two());
            assert!(t as f64 >= worst_case_residual_bound(max_block, &p, 1e-9));
            assert!(((t / 2) as f64) < 4.0 * (max_block as f64 + 1.0) * (p.b_c + p.b_w) * 2f64.powi(24));
        }
        // a tamper of 2^4 multiplier units lands 2^(4+f_c) on its row
        let tamper = 1u128 << (4 + p.f_c);
        assert!(masked_row_tolerance(&p) < tamper);
    }

    #[test]
    fn out_of_range_weights_are_rejected() {
        let layout = Arc::new(BlockLayout::single(2, "w").unwrap());
        let c = fisher(layout.clone(), vec![DMatrix::identity(2, 2)]);
        let theta = ParamVector::new(vec![100.0, 0.0], layout).unwrap();
        let m = MaskArtifact::new(2, IndexSet::all(2), IndexSet::default()).unwrap();
        let err = encode_fixed_witness(&theta, &theta, &ParamVector::zeros(theta.layout().clone()), &[], &c, &m, &FixedParams::default());
        assert!(matches!(err, Err(Error::Range { index: 0, .. })));
    }

    #[test]
    fn inconsistent_output_is_rejected() {
        let (theta, c, m) = random_instance(3, &[5], 2);
        let comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
        let u = apply_unlearn(&theta, &comp, &m).unwrap();
        let mut bad = u.theta_u.values().to_vec();
        bad[0] += 1e-3;
        let bad = ParamVector::new(bad, theta.layout().clone()).unwrap();
        let p = FixedParams::default();
        assert!(encode_fixed_witness(&theta, &bad, &comp.delta_w, &comp.lambda_m, &c, &m, &p).is_err());
    }
}
