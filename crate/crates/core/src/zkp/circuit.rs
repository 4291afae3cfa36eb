use std::sync::Arc;

use ff::{Field, PrimeField};
use serde::{Deserialize, Serialize};

use super::commit::{commit_fields, leaf_blindings, leaf_count, layout_digest, CommitRandomness};
use super::field::{fe_hex, fe_i64, fe_u64, Fp};
use super::hash::{sponge, TAG_CIRCUIT};
use super::witness::{upper_index, upper_len, FixedParams, FixedWitness};
use crate::error::{Error, Result};
use crate::masking::{IndexSet, MaskArtifact};
use crate::numkit::{BlockLayout, FixedVector};

pub const LIMB_BITS: u32 = 16;

/// Constraint families, in the order the mock prover checks them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Assembly,
    Feasibility,
    Stationarity,
    Range,
    CurvatureRange,
    Matvec,
    Commitment,
}

pub const FAMILIES: [Family; 7] = [
    Family::Assembly,
    Family::Feasibility,
    Family::Stationarity,
    Family::Range,
    Family::CurvatureRange,
    Family::Matvec,
    Family::Commitment,
];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Assembly => "assembly",
            Family::Feasibility => "feasibility",
            Family::Stationarity => "stationarity",
            Family::Range => "range",
            Family::CurvatureRange => "curvature_range",
            Family::Matvec => "matvec",
            Family::Commitment => "commitment",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitTarget {
    ThetaP,
    ThetaU,
    CurvatureP,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    /// `out = acc + a * b`, with `acc = 0` when absent.
    MulAdd { a: Var, b: Var, acc: Option<Var>, out: Var },
    /// `sum coeff * var = 0`.
    Linear { terms: Vec<(Fp, Var)> },
    /// `value + offset` equals the little-endian recomposition of `limbs`,
    /// each limb in the 16-bit table and the top one within `bits`.
    Range { value: Var, offset: Fp, bits: u32, limbs: Vec<Var> },
    /// The blinded Merkle commitment of `inputs` equals the public digest.
    Commit { target: CommitTarget, inputs: Vec<Var>, blindings: Vec<Var> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub family: Family,
    /// Coordinate (or curvature entry) the gate is about.
    pub row: usize,
    pub what: &'static str,
    pub kind: GateKind,
}

/// Public digests the commitment gates are checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicDigests {
    pub theta_p: Fp,
    pub theta_u: Fp,
    pub c_p: Fp,
}

impl PublicDigests {
    pub fn get(&self, t: CommitTarget) -> Fp {
        match t {
            CommitTarget::ThetaP => self.theta_p,
            CommitTarget::ThetaU => self.theta_u,
            CommitTarget::CurvatureP => self.c_p,
        }
    }
}

/// Leaf blindings of the three committed vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blindings {
    pub theta_p: Vec<Fp>,
    pub theta_u: Vec<Fp>,
    pub c_p: Vec<Fp>,
}

impl Blindings {
    pub fn expand(r: &CommitRandomness, d: usize, upper: usize) -> Self {
        Blindings {
            theta_p: leaf_blindings(&r.theta_p, d),
            theta_u: leaf_blindings(&r.theta_u, d),
            c_p: leaf_blindings(&r.c_p, upper),
        }
    }

    fn zeros(d: usize, upper: usize) -> Self {
        Blindings {
            theta_p: vec![Fp::ZERO; leaf_count(d)],
            theta_u: vec![Fp::ZERO; leaf_count(d)],
            c_p: vec![Fp::ZERO; leaf_count(upper)],
        }
    }
}

/// Digests of the witness's committed vectors under the given blindings.
pub fn witness_digests(w: &FixedWitness, b: &Blindings) -> PublicDigests {
    let f = |v: &FixedVector| v.ints.iter().map(|&x| fe_i64(x)).collect::<Vec<_>>();
    PublicDigests {
        theta_p: commit_fields(&f(&w.theta_p), &b.theta_p),
        theta_u: commit_fields(&f(&w.theta_u), &b.theta_u),
        c_p: commit_fields(&f(&w.c_upper), &b.c_p),
    }
}

/// Synthesized certificate constraint system with its assignment.
#[derive(Clone, Debug)]
pub struct CertificateCircuit {
    pub layout: Arc<BlockLayout>,
    pub mask: MaskArtifact,
    pub params: FixedParams,
    /// Residual window outside the mask, `2^-(f_w+f_c)` units.
    pub t_int: u128,
    /// Residual window on masked rows.
    pub t_mask: u128,
    pub digests: PublicDigests,
    pub gates: Vec<Gate>,
    pub assignment: Vec<Fp>,
    pub witness: FixedWitness,
    pub blindings: Blindings,
}

struct Builder {
    values: Vec<Fp>,
    buckets: Vec<Vec<Gate>>,
}

impl Builder {
    fn alloc(&mut self, v: Fp) -> Var {
        self.values.push(v);
        Var((self.values.len() - 1) as u32)
    }

    fn push(&mut self, family: Family, row: usize, what: &'static str, kind: GateKind) {
        let slot = FAMILIES.iter().position(|&f| f == family).unwrap();
        self.buckets[slot].push(Gate { family, row, what, kind });
    }

    /// Constrains `value` to `[-offset, 2^bits - offset)`.
    fn range(&mut self, family: Family, row: usize, what: &'static str, value: Var, offset: u128, bits: u32) {
        let offset = Fp::from_u128(offset);
        let shifted = (self.values[value.0 as usize] + offset).to_repr();
        let limbs = (0..bits.div_ceil(LIMB_BITS) as usize)
            .map(|j| {
                let limb = u16::from_le_bytes([shifted[2 * j], shifted[2 * j + 1]]);
                self.alloc(fe_u64(limb as u64))
            })
            .collect();
        self.push(family, row, what, GateKind::Range { value, offset, bits, limbs });
    }
}

/// Offset and bit width for the window `[-bound, bound)`, `bound` a power of two.
fn window(bound: u128) -> (u128, u32) {
    (bound, 1 + bound.trailing_zeros())
}

fn scaled_bound(b: f64, frac_bits: u32) -> u128 {
    (b as u128) << frac_bits
}

impl CertificateCircuit {
    /// Builds the constraint system for `w` and assigns every wire.
    pub fn synthesize(
        w: &FixedWitness,
        blindings: &Blindings,
        mask: &MaskArtifact,
        t_int: u128,
        digests: PublicDigests,
    ) -> Result<Self> {
        let layout = w.layout.clone();
        let d = layout.dim();
        let k = w.support.len();
        let upper = upper_len(&layout);
        for (what, expected, got) in [
            ("pretrained parameters", d, w.theta_p.len()),
            ("unlearned parameters", d, w.theta_u.len()),
            ("update", d, w.delta_w.len()),
            ("multipliers", k, w.lambda_m.len()),
            ("curvature entries", upper, w.c_upper.len()),
            ("pretrained blindings", leaf_count(d), blindings.theta_p.len()),
            ("unlearned blindings", leaf_count(d), blindings.theta_u.len()),
            ("curvature blindings", leaf_count(upper), blindings.c_p.len()),
        ] {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if mask.d() != d || mask.support().as_slice() != w.support.as_slice() {
            return Err(Error::Invalid("witness support differs from the mask".into()));
        }
        let p = w.params;
        p.validate()?;
        let t_mask = 1u128 << p.f_c;
        if t_int == 0 || !t_int.is_power_of_two() || t_int >= 1 << 100 {
            return Err(Error::Invalid(format!("residual tolerance {t_int} must be a power of two below 2^100")));
        }

        let mut bld = Builder { values: Vec::new(), buckets: vec![Vec::new(); FAMILIES.len()] };
        let alloc_all = |bld: &mut Builder, ints: &[i64]| -> Vec<Var> { ints.iter().map(|&v| bld.alloc(fe_i64(v))).collect() };
        let tp = alloc_all(&mut bld, &w.theta_p.ints);
        let tu = alloc_all(&mut bld, &w.theta_u.ints);
        let dw = alloc_all(&mut bld, &w.delta_w.ints);
        let lam = alloc_all(&mut bld, &w.lambda_m.ints);
        let cv = alloc_all(&mut bld, &w.c_upper.ints);
        let blind = |bld: &mut Builder, b: &[Fp]| -> Vec<Var> { b.iter().map(|&x| bld.alloc(x)).collect() };
        let b_tp = blind(&mut bld, &blindings.theta_p);
        let b_tu = blind(&mut bld, &blindings.theta_u);
        let b_c = blind(&mut bld, &blindings.c_p);

        let one = Fp::ONE;
        for i in 0..d {
            bld.push(
                Family::Assembly,
                i,
                "theta_u",
                GateKind::Linear { terms: vec![(one, tu[i]), (-one, tp[i]), (-one, dw[i])] },
            );
        }
        for &i in &w.support {
            bld.push(Family::Feasibility, i, "delta_w", GateKind::Linear { terms: vec![(one, dw[i]), (one, tp[i])] });
        }

        // per block: y = C dw through chained multiply-adds
        let mut y = Vec::with_capacity(d);
        let mut c_off = 0;
        for blk in layout.blocks() {
            let n = blk.size;
            for i in 0..n {
                let mut acc: Option<Var> = None;
                for j in 0..n {
                    let a = cv[c_off + upper_index(n, i, j)];
                    let b = dw[blk.offset + j];
                    let prev = acc.map_or(Fp::ZERO, |v| bld.values[v.0 as usize]);
                    let val = prev + bld.values[a.0 as usize] * bld.values[b.0 as usize];
                    let out = bld.alloc(val);
                    bld.push(Family::Matvec, blk.offset + i, "c_p", GateKind::MulAdd { a, b, acc, out });
                    acc = Some(out);
                }
                y.push(acc.expect("blocks are non-empty"));
            }
            c_off += n * (n + 1) / 2;
        }

        let mut masked = vec![None; d];
        for (j, &i) in w.support.iter().enumerate() {
            masked[i] = Some(j);
        }
        let lift = Fp::from_u128(1u128 << p.f_c);
        let mut r = Vec::with_capacity(d);
        for i in 0..d {
            let lam_term = masked[i].map(|j| lam[j]);
            let val = bld.values[y[i].0 as usize] + lam_term.map_or(Fp::ZERO, |v| lift * bld.values[v.0 as usize]);
            let ri = bld.alloc(val);
            let mut terms = vec![(one, ri), (-one, y[i])];
            if let Some(l) = lam_term {
                terms.push((-lift, l));
            }
            bld.push(Family::Stationarity, i, "residual", GateKind::Linear { terms });
            r.push(ri);
        }

        let (w_off, w_bits) = window(scaled_bound(p.b_w, p.f_w));
        let (l_off, l_bits) = window(scaled_bound(p.b_lambda, p.f_w));
        let (c_off, c_bits) = window(scaled_bound(p.b_c, p.f_c));
        for (vars, what) in [(&tp, "theta_p"), (&tu, "theta_u"), (&dw, "delta_w")] {
            for (i, &v) in vars.iter().enumerate() {
                bld.range(Family::Range, i, what, v, w_off, w_bits);
            }
        }
        for (j, &v) in lam.iter().enumerate() {
            bld.range(Family::Range, w.support[j], "lambda", v, l_off, l_bits);
        }
        for i in 0..d {
            // r + T in [0, 2T)
            let t = if masked[i].is_some() { t_mask } else { t_int };
            bld.range(Family::Range, i, "residual", r[i], t, 1 + t.trailing_zeros());
        }
        for (e, &v) in cv.iter().enumerate() {
            bld.range(Family::CurvatureRange, e, "c_p", v, c_off, c_bits);
        }

        bld.push(Family::Commitment, 0, "theta_p", GateKind::Commit { target: CommitTarget::ThetaP, inputs: tp, blindings: b_tp });
        bld.push(Family::Commitment, 1, "theta_u", GateKind::Commit { target: CommitTarget::ThetaU, inputs: tu, blindings: b_tu });
        bld.push(Family::Commitment, 2, "c_p", GateKind::Commit { target: CommitTarget::CurvatureP, inputs: cv, blindings: b_c });

        Ok(CertificateCircuit {
            layout,
            mask: mask.clone(),
            params: p,
            t_int,
            t_mask,
            digests,
            gates: bld.buckets.into_iter().flatten().collect(),
            assignment: bld.values,
            witness: w.clone(),
            blindings: blindings.clone(),
        })
    }

    /// Synthesizes the gate structure alone, over an all-zero assignment.
    pub fn shape_only(layout: Arc<BlockLayout>, support: &[usize], params: FixedParams, t_int: u128) -> Result<Self> {
        let d = layout.dim();
        let upper = upper_len(&layout);
        let mask = MaskArtifact::new(d, IndexSet::all(d), IndexSet::try_from(support.to_vec())?)?;
        let zeros = |n: usize, f: u32, b: f64| FixedVector::from_ints(vec![0; n], f, b);
        let w = FixedWitness {
            params,
            layout,
            support: support.to_vec(),
            theta_p: zeros(d, params.f_w, params.b_w)?,
            theta_u: zeros(d, params.f_w, params.b_w)?,
            delta_w: zeros(d, params.f_w, params.b_w)?,
            lambda_m: zeros(support.len(), params.f_w, params.b_lambda)?,
            c_upper: zeros(upper, params.f_c, params.b_c)?,
            lambda_shift: 0.0,
        };
        let zero = PublicDigests { theta_p: Fp::ZERO, theta_u: Fp::ZERO, c_p: Fp::ZERO };
        Self::synthesize(&w, &Blindings::zeros(d, upper), &mask, t_int, zero)
    }

    pub fn value(&self, v: Var) -> Fp {
        self.assignment[v.0 as usize]
    }

    pub fn layout_digest(&self) -> Fp {
        layout_digest(&self.layout)
    }

    /// Digest of everything that fixes the gate structure.
    pub fn circuit_hash(&self) -> Fp {
        circuit_hash(&self.layout, self.mask.digest(), self.t_int, &self.params)
    }
}

pub fn circuit_hash(layout: &BlockLayout, mask_digest: Fp, t_int: u128, p: &FixedParams) -> Fp {
    sponge(
        TAG_CIRCUIT,
        &[
            layout_digest(layout),
            mask_digest,
            Fp::from_u128(t_int),
            fe_u64(p.f_w as u64),
            fe_u64(p.f_c as u64),
            fe_u64(p.b_w as u64),
            fe_u64(p.b_c as u64),
            fe_u64(p.b_lambda as u64),
        ],
    )
}

/// Per-family constraint counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub d: usize,
    pub k: usize,
    pub block_sizes: Vec<usize>,
    pub assembly: usize,
    pub feasibility: usize,
    pub stationarity: usize,
    pub range: usize,
    pub curvature_range: usize,
    pub matvec: usize,
    pub commitment: usize,
    pub total: usize,
    /// Sum of squared block sizes.
    pub dense_entries: usize,
    /// `4d + k`: three weight vectors, the residual and the multipliers.
    pub range_budget: usize,
    pub lookup_limbs: usize,
    pub circuit_hash: String,
}

pub fn constraint_report(c: &CertificateCircuit) -> ConstraintReport {
    let mut counts = [0usize; FAMILIES.len()];
    let mut limbs = 0;
    for g in &c.gates {
        counts[FAMILIES.iter().position(|&f| f == g.family).unwrap()] += 1;
        if let GateKind::Range { limbs: l, .. } = &g.kind {
            limbs += l.len();
        }
    }
    let d = c.layout.dim();
    let k = c.mask.k();
    ConstraintReport {
        d,
        k,
        block_sizes: c.layout.blocks().iter().map(|b| b.size).collect(),
        assembly: counts[0],
        feasibility: counts[1],
        stationarity: counts[2],
        range: counts[3],
        curvature_range: counts[4],
        matvec: counts[5],
        commitment: counts[6],
        total: counts.iter().sum(),
        dense_entries: c.layout.blocks().iter().map(|b| b.size * b.size).sum(),
        range_budget: 4 * d + k,
        lookup_limbs: limbs,
        circuit_hash: fe_hex(&c.circuit_hash()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(sizes: &[usize], support: &[usize]) -> CertificateCircuit {
        let layout = Arc::new(BlockLayout::from_sizes(sizes.iter().enumerate().map(|(i, &n)| (format!("b{i}"), n))).unwrap());
        CertificateCircuit::shape_only(layout, support, FixedParams::default(), 1 << 40).unwrap()
    }

    #[test]
    fn eight_by_eight_hand_count() {
        let r = constraint_report(&shape(&[8], &[2, 5]));
        assert_eq!((r.matvec, r.assembly, r.feasibility), (64, 8, 2));
        assert_eq!(r.stationarity, 8);
        assert_eq!(r.range, 4 * 8 + 2);
        assert_eq!(r.range, r.range_budget);
        assert_eq!(r.curvature_range, 36);
        assert_eq!(r.commitment, 3);
        assert_eq!(r.total, 64 + 8 + 2 + 8 + 34 + 36 + 3);
    }

    #[test]
    fn matvec_scales_with_block_square() {
        let a = constraint_report(&shape(&[64], &[0, 1, 2]));
        let b = constraint_report(&shape(&[128], &[0, 1, 2]));
        assert_eq!(b.matvec, 4 * a.matvec);
        assert_eq!(a.matvec, a.dense_entries);
    }

    #[test]
    fn multi_block_matvec_is_sum_of_squares() {
        let r = constraint_report(&shape(&[3, 5, 2], &[0, 4, 9]));
        assert_eq!(r.matvec, 9 + 25 + 4);
        assert_eq!(r.assembly, 10);
        assert_eq!(r.feasibility, 3);
    }

    #[test]
    fn gates_are_ordered_by_family() {
        let c = shape(&[4, 3], &[1]);
        let order: Vec<usize> = c.gates.iter().map(|g| FAMILIES.iter().position(|&f| f == g.family).unwrap()).collect();
        assert!(order.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn window_widths() {
        assert_eq!(window(1 << 30), (1 << 30, 31));
        assert_eq!(window(1), (1, 1));
    }

    #[test]
    fn unsorted_support_is_rejected() {
        let layout = Arc::new(BlockLayout::single(4, "w").unwrap());
        assert!(CertificateCircuit::shape_only(layout.clone(), &[2, 1], FixedParams::default(), 1 << 40).is_err());
        assert!(CertificateCircuit::shape_only(layout, &[4], FixedParams::default(), 1 << 40).is_err());
    }
}
