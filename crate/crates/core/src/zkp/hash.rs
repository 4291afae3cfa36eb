//! Poseidon sponge (width 3, rate 2, x^5 S-box, 8 full + 56 partial rounds)
//! and a binary Merkle tree built from it.
//!
//! The capacity word starts at `len * 2^64 + tag`, so inputs of different
//! length or purpose never share a permutation chain.

use std::sync::OnceLock;

use ff::{Field, PrimeField};
use halo2_poseidon::{Mds, P128Pow5T3, Spec};

use super::field::{fe_u64, Fp};

pub const TAG_PLAIN: u64 = 0;
pub const TAG_MASK: u64 = 1;
pub const TAG_LEAF: u64 = 2;
pub const TAG_NODE: u64 = 3;
pub const TAG_LAYOUT: u64 = 4;
pub const TAG_CIRCUIT: u64 = 5;
pub const TAG_ROOT: u64 = 6;

const FULL_ROUNDS: usize = 8;
const PARTIAL_ROUNDS: usize = 56;

struct Params {
    round_constants: Vec<[Fp; 3]>,
    mds: Mds<Fp, 3>,
}

fn params() -> &'static Params {
    static P: OnceLock<Params> = OnceLock::new();
    P.get_or_init(|| {
        let (round_constants, mds, _) = <P128Pow5T3 as Spec<Fp, 3, 2>>::constants();
        Params { round_constants, mds }
    })
}

fn sbox(x: Fp) -> Fp {
    let x2 = x.square();
    x2.square() * x
}

pub fn permute(state: &mut [Fp; 3]) {
    let p = params();
    let mix = |s: &mut [Fp; 3]| {
        let old = *s;
        for (i, row) in p.mds.iter().enumerate() {
            s[i] = row[0] * old[0] + row[1] * old[1] + row[2] * old[2];
        }
    };
    let half = FULL_ROUNDS / 2;
    for (r, rc) in p.round_constants.iter().enumerate() {
        for (w, c) in state.iter_mut().zip(rc) {
            *w += c;
        }
        if r < half || r >= half + PARTIAL_ROUNDS {
            for w in state.iter_mut() {
                *w = sbox(*w);
            }
        } else {
            state[0] = sbox(state[0]);
        }
        mix(state);
    }
}

/// Hashes a sequence of field elements under a domain tag.
pub fn sponge(tag: u64, inputs: &[Fp]) -> Fp {
    let cap = Fp::from_u128(((inputs.len() as u128) << 64) | tag as u128);
    let mut state = [Fp::ZERO, Fp::ZERO, cap];
    for pair in inputs.chunks(2) {
        state[0] += pair[0];
        if let Some(b) = pair.get(1) {
            state[1] += b;
        }
        permute(&mut state);
    }
    if inputs.is_empty() {
        permute(&mut state);
    }
    state[0]
}

/// Root of a binary tree over `leaves`, padding the last level with zeros.
pub fn merkle_root(leaves: &[Fp]) -> Fp {
    if leaves.is_empty() {
        return sponge(TAG_NODE, &[]);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| sponge(TAG_NODE, &[p[0], p.get(1).copied().unwrap_or(Fp::ZERO)]))
            .collect();
    }
    level[0]
}

pub fn hash_u64s(tag: u64, values: impl IntoIterator<Item = u64>) -> Fp {
    let fs: Vec<Fp> = values.into_iter().map(fe_u64).collect();
    sponge(tag, &fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use halo2_poseidon::{ConstantLength, Hash};

    #[test]
    fn matches_reference_two_element_hash() {
        for (a, b) in [(6u64, 42u64), (0, 0), (1, u64::MAX)] {
            let msg = [Fp::from(a), Fp::from(b)];
            let reference = Hash::<Fp, P128Pow5T3, ConstantLength<2>, 3, 2>::init().hash(msg);
            assert_eq!(sponge(TAG_PLAIN, &msg), reference);
        }
    }

    #[test]
    fn tag_and_length_separate_domains() {
        let x = [Fp::from(1), Fp::from(2)];
        assert_ne!(sponge(TAG_PLAIN, &x), sponge(TAG_MASK, &x));
        assert_ne!(sponge(TAG_PLAIN, &x), sponge(TAG_PLAIN, &[Fp::from(1), Fp::from(2), Fp::ZERO]));
    }

    #[test]
    fn merkle_root_changes_with_any_leaf() {
        let leaves: Vec<Fp> = (0..5u64).map(Fp::from).collect();
        let root = merkle_root(&leaves);
        for i in 0..5 {
            let mut l = leaves.clone();
            l[i] += Fp::ONE;
            assert_ne!(merkle_root(&l), root);
        }
        assert_eq!(merkle_root(&leaves[..1]), leaves[0]);
    }
}
