use ff::{Field, PrimeField};
use rayon::prelude::*;
use serde::Serialize;

use super::circuit::{CertificateCircuit, Family, Gate, GateKind, LIMB_BITS};
use super::commit::commit_fields;
use super::field::{fe_hex, fe_to_i128, Fp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub family: Family,
    pub gate: usize,
    pub row: usize,
    pub what: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail(Violation),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(v) => Some(v),
        }
    }
}

fn show(x: Fp) -> String {
    fe_to_i128(x).map_or_else(|| format!("0x{}", fe_hex(&x)), |v| v.to_string())
}

/// Evaluates one gate; `None` when satisfied.
pub fn check_gate(c: &CertificateCircuit, g: &Gate) -> Option<String> {
    let val = |v| c.value(v);
    match &g.kind {
        GateKind::MulAdd { a, b, acc, out } => {
            let want = acc.map_or(Fp::ZERO, val) + val(*a) * val(*b);
            (want != val(*out)).then(|| format!("product chain gives {} but wire holds {}", show(want), show(val(*out))))
        }
        GateKind::Linear { terms } => {
            let s: Fp = terms.iter().map(|(k, v)| *k * val(*v)).sum();
            (!bool::from(s.is_zero())).then(|| format!("linear combination is {}", show(s)))
        }
        GateKind::Range { value, offset, bits, limbs } => {
            let top = bits - LIMB_BITS * (limbs.len() as u32 - 1);
            let mut acc = Fp::ZERO;
            let mut scale = Fp::ONE;
            let step = Fp::from_u128(1 << LIMB_BITS);
            for (j, l) in limbs.iter().enumerate() {
                let limit = if j + 1 == limbs.len() { top } else { LIMB_BITS };
                let lv = val(*l);
                let repr = lv.to_repr();
                let small = repr[8..].iter().all(|&b| b == 0) && u64::from_le_bytes(repr[..8].try_into().unwrap()) < 1 << limit;
                if !small {
                    return Some(format!("limb {j} = {} is outside its {limit}-bit table", show(lv)));
                }
                acc += lv * scale;
                scale *= step;
            }
            let shifted = val(*value) + offset;
            (acc != shifted).then(|| {
                format!("value {} is outside [-{}, 2^{bits} - {})", show(val(*value)), show(*offset), show(*offset))
            })
        }
        GateKind::Commit { target, inputs, blindings } => {
            let xs: Vec<Fp> = inputs.iter().map(|&v| val(v)).collect();
            let rs: Vec<Fp> = blindings.iter().map(|&v| val(v)).collect();
            let got = commit_fields(&xs, &rs);
            let want = c.digests.get(*target);
            (got != want).then(|| format!("recomputed digest {} differs from public {}", fe_hex(&got), fe_hex(&want)))
        }
    }
}

/// Checks every constraint over the field and reports the first violated
/// one in family order. Commitments are only recomputed once all cheaper
/// families pass.
pub fn mock_prove(c: &CertificateCircuit) -> Verdict {
    let split = c.gates.iter().position(|g| g.family == Family::Commitment).unwrap_or(c.gates.len());
    let first = |range: std::ops::Range<usize>| {
        c.gates[range.clone()]
            .par_iter()
            .enumerate()
            .filter_map(|(i, g)| check_gate(c, g).map(|msg| (range.start + i, msg)))
            .min_by_key(|(i, _)| *i)
    };
    match first(0..split).or_else(|| first(split..c.gates.len())) {
        None => Verdict::Pass,
        Some((i, detail)) => {
            let g = &c.gates[i];
            Verdict::Fail(Violation { family: g.family, gate: i, row: g.row, what: g.what, detail })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::BlockFisher;
    use crate::masking::{IndexSet, MaskArtifact};
    use crate::numkit::{BlockDiagMatrix, BlockLayout, ParamVector};
    use crate::obs::{apply_unlearn, group_obs_solve, SchurSolver};
    use crate::zkp::circuit::{witness_digests, Blindings};
    use crate::zkp::commit::CommitRandomness;
    use crate::zkp::witness::{default_t_int, encode_fixed_witness, upper_len, FixedParams, FixedWitness};
    use nalgebra::DMatrix;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    struct Honest {
        w: FixedWitness,
        blind: Blindings,
        mask: MaskArtifact,
        t_int: u128,
    }

    fn honest(seed: u64, sizes: &[usize], k: usize) -> Honest {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = Arc::new(
            BlockLayout::from_sizes(sizes.iter().enumerate().map(|(i, &n)| (format!("b{i}"), n))).unwrap(),
        );
        let blocks = sizes
            .iter()
            .map(|&n| {
                let g = DMatrix::from_fn(n + 4, n, |_, _| rng.gen_range(-1.0..1.0));
                g.transpose() * g / (n as f64 + 4.0)
            })
            .collect();
        let c = BlockFisher::new(BlockDiagMatrix::new(blocks, layout.clone()).unwrap(), 1e-3, 1, String::new()).unwrap();
        let d = layout.dim();
        let theta = ParamVector::new((0..d).map(|_| rng.gen_range(-1.5..1.5)).collect(), layout.clone()).unwrap();
        let mut idx: Vec<usize> = (0..d).collect();
        idx.shuffle(&mut rng);
        idx.truncate(k);
        let mask = MaskArtifact::new(d, IndexSet::all(d), IndexSet::new(idx)).unwrap();
        let comp = group_obs_solve(&c, &theta, &mask, &SchurSolver).unwrap();
        let u = apply_unlearn(&theta, &comp, &mask).unwrap();
        let p = FixedParams::default();
        let w = encode_fixed_witness(&theta, &u.theta_u, &comp.delta_w, &comp.lambda_m, &c, &mask, &p).unwrap();
        let blind = Blindings::expand(&CommitRandomness::from_seed(seed), d, upper_len(&layout));
        Honest { w, blind, mask, t_int: default_t_int(layout.max_block_size(), &p) }
    }

    /// Digests are taken from the untampered witness, as a verifier would hold them.
    fn prove_with(h: &Honest, w: &FixedWitness) -> Verdict {
        let digests = witness_digests(&h.w, &h.blind);
        let c = CertificateCircuit::synthesize(w, &h.blind, &h.mask, h.t_int, digests).unwrap();
        mock_prove(&c)
    }

    #[test]
    fn honest_witness_passes() {
        for seed in 0..5 {
            let h = honest(seed, &[6, 10, 3], 4);
            assert_eq!(prove_with(&h, &h.w), Verdict::Pass);
        }
    }

    #[test]
    fn empty_mask_zero_update_passes() {
        let h = honest(1, &[5], 0);
        assert!(h.w.delta_w.ints.iter().all(|&v| v == 0));
        assert!(prove_with(&h, &h.w).is_pass());
    }

    #[test]
    fn low_bit_flip_in_output_fails_assembly_there() {
        let h = honest(2, &[6, 6], 3);
        let mut w = h.w.clone();
        w.theta_u.ints[7] ^= 1;
        let v = prove_with(&h, &w);
        let bad = v.violation().unwrap();
        assert_eq!((bad.family, bad.row), (Family::Assembly, 7));
    }

    #[test]
    fn doubled_multipliers_fail_stationarity_window() {
        let h = honest(3, &[8], 3);
        assert!(h.w.lambda_m.ints.iter().any(|&l| l.unsigned_abs() > 1 << 8));
        let mut w = h.w.clone();
        for l in &mut w.lambda_m.ints {
            *l *= 2;
        }
        let bad = prove_with(&h, &w).violation().cloned().unwrap();
        assert_eq!((bad.family, bad.what), (Family::Range, "residual"));
        assert!(h.w.support.contains(&bad.row));
    }

    #[test]
    fn small_multiplier_tamper_is_caught() {
        // 2^4 units of 2^-f_w in one coordinate
        for seed in 0..10 {
            let h = honest(10 + seed, &[7, 5], 4);
            let mut w = h.w.clone();
            w.lambda_m.ints[(seed % 4) as usize] += 16;
            let bad = prove_with(&h, &w).violation().cloned().unwrap();
            assert_eq!((bad.family, bad.what), (Family::Range, "residual"));
        }
    }

    #[test]
    fn update_tamper_breaks_assembly() {
        let h = honest(4, &[9], 2);
        let mut w = h.w.clone();
        w.delta_w.ints[3] += 1 << 10;
        assert_eq!(prove_with(&h, &w).violation().unwrap().family, Family::Assembly);
    }

    #[test]
    fn consistent_update_and_output_tamper_breaks_commitment() {
        let h = honest(5, &[9], 2);
        let i = (0..9).find(|i| !h.w.support.contains(i)).unwrap();
        let mut w = h.w.clone();
        w.delta_w.ints[i] += 1;
        w.theta_u.ints[i] += 1;
        let bad = prove_with(&h, &w).violation().cloned().unwrap();
        assert_eq!((bad.family, bad.what), (Family::Commitment, "theta_u"));
    }

    #[test]
    fn curvature_tamper_breaks_commitment() {
        let h = honest(6, &[5, 4], 2);
        let mut w = h.w.clone();
        w.c_upper.ints[3] += 1;
        let bad = prove_with(&h, &w).violation().cloned().unwrap();
        assert_eq!(bad.family, Family::Commitment);
        assert_eq!(bad.what, "c_p");
    }

    #[test]
    fn out_of_window_value_fails_range_even_if_linear_ok() {
        let h = honest(7, &[4], 1);
        let mut w = h.w.clone();
        let i = (0..4).find(|i| !h.w.support.contains(i)).unwrap();
        // consistent but beyond B_w * 2^f_w
        w.theta_p.ints[i] = 1 << 31;
        w.theta_u.ints[i] = (1 << 31) + w.delta_w.ints[i];
        let bad = prove_with(&h, &w).violation().cloned().unwrap();
        assert_eq!((bad.family, bad.row), (Family::Range, i));
    }

    #[test]
    fn gate_evaluation_order_does_not_matter() {
        let h = honest(8, &[5, 6, 4], 3);
        let mut w = h.w.clone();
        w.theta_u.ints[2] += 3;
        w.lambda_m.ints[1] += 1 << 12;
        let digests = witness_digests(&h.w, &h.blind);
        let c = CertificateCircuit::synthesize(&w, &h.blind, &h.mask, h.t_int, digests).unwrap();
        let failing = |order: &[usize]| {
            let mut f: Vec<usize> = order.iter().copied().filter(|&i| check_gate(&c, &c.gates[i]).is_some()).collect();
            f.sort();
            f
        };
        let natural: Vec<usize> = (0..c.gates.len()).collect();
        let mut shuffled = natural.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        assert_eq!(failing(&natural), failing(&shuffled));
        assert!(!failing(&natural).is_empty());
    }
}
