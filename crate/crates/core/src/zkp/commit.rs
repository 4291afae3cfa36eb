use ff::Field;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::field::{fe_i64, fe_u64, Fp};
use super::hash::{hash_u64s, merkle_root, sponge, TAG_LAYOUT, TAG_LEAF, TAG_ROOT};
use crate::numkit::{stream_key, BlockLayout, FixedVector};

/// Field elements per Merkle leaf.
pub const CHUNK_LEN: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub digest: Fp,
    pub opening: Opening,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening {
    pub ints: Vec<i64>,
    pub randomness: [u8; 32],
}

pub fn leaf_count(n: usize) -> usize {
    n.div_ceil(CHUNK_LEN).max(1)
}

/// Per-leaf blinding factors expanded from the commitment randomness.
pub fn leaf_blindings(randomness: &[u8; 32], n: usize) -> Vec<Fp> {
    let mut rng = ChaCha20Rng::from_seed(*randomness);
    (0..leaf_count(n)).map(|_| Fp::random(&mut rng)).collect()
}

/// Merkle root over blinded chunks, bound to the vector length.
pub fn commit_fields(values: &[Fp], blindings: &[Fp]) -> Fp {
    assert_eq!(blindings.len(), leaf_count(values.len()), "one blinding per leaf");
    let mut leaves = Vec::with_capacity(blindings.len());
    let mut buf = Vec::with_capacity(CHUNK_LEN + 1);
    for (j, r) in blindings.iter().enumerate() {
        buf.clear();
        buf.push(*r);
        let lo = (j * CHUNK_LEN).min(values.len());
        let hi = ((j + 1) * CHUNK_LEN).min(values.len());
        buf.extend_from_slice(&values[lo..hi]);
        leaves.push(sponge(TAG_LEAF, &buf));
    }
    sponge(TAG_ROOT, &[merkle_root(&leaves), fe_u64(values.len() as u64)])
}

pub fn commit_ints(ints: &[i64], randomness: &[u8; 32]) -> Fp {
    let values: Vec<Fp> = ints.iter().map(|&v| fe_i64(v)).collect();
    commit_fields(&values, &leaf_blindings(randomness, ints.len()))
}

pub fn commit_vector(v: &FixedVector, randomness: [u8; 32]) -> Commitment {
    Commitment {
        digest: commit_ints(&v.ints, &randomness),
        opening: Opening { ints: v.ints.clone(), randomness },
    }
}

pub fn verify_commit(digest: &Fp, v: &FixedVector, randomness: &[u8; 32]) -> bool {
    commit_ints(&v.ints, randomness) == *digest
}

/// Randomness for the three certificate commitments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitRandomness {
    pub theta_p: [u8; 32],
    pub theta_u: [u8; 32],
    pub c_p: [u8; 32],
}

impl CommitRandomness {
    /// Deterministic randomness for reproducible runs. Not hiding against
    /// anyone who knows the seed.
    pub fn from_seed(seed: u64) -> Self {
        CommitRandomness {
            theta_p: stream_key(seed, "commit/theta_p"),
            theta_u: stream_key(seed, "commit/theta_u"),
            c_p: stream_key(seed, "commit/c_p"),
        }
    }
}

/// Digest of the block structure: `(#blocks, offset_1, size_1, ...)`.
pub fn layout_digest(layout: &BlockLayout) -> Fp {
    let mut words = vec![layout.len() as u64];
    for b in layout.blocks() {
        words.extend([b.offset as u64, b.size as u64]);
    }
    hash_u64s(TAG_LAYOUT, words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn fv(ints: Vec<i64>) -> FixedVector {
        FixedVector::from_ints(ints, 24, 64.0).unwrap()
    }

    #[test]
    fn deterministic_given_randomness() {
        let v = fv(vec![3, -7, 0, 1 << 30]);
        let r = [9u8; 32];
        let a = commit_vector(&v, r);
        let b = commit_vector(&v, r);
        assert_eq!(a.digest, b.digest);
        assert!(verify_commit(&a.digest, &v, &r));
    }

    #[test]
    fn single_int_flip_changes_digest() {
        let mut ints: Vec<i64> = (0..3000).map(|i| i * 17 - 999).collect();
        let r = [1u8; 32];
        let before = commit_ints(&ints, &r);
        for pos in [0, 1023, 1024, 2999] {
            ints[pos] ^= 1;
            assert_ne!(commit_ints(&ints, &r), before, "flip at {pos}");
            ints[pos] ^= 1;
        }
        assert_eq!(commit_ints(&ints, &r), before);
    }

    #[test]
    fn binding_rejects_other_openings() {
        let v = fv(vec![1, 2, 3]);
        let r = [4u8; 32];
        let c = commit_vector(&v, r);
        assert!(!verify_commit(&c.digest, &fv(vec![1, 2, 4]), &r));
        assert!(!verify_commit(&c.digest, &v, &[5u8; 32]));
        assert!(!verify_commit(&c.digest, &fv(vec![1, 2, 3, 0]), &r));
    }

    #[test]
    fn fresh_randomness_changes_digest() {
        let v = fv(vec![0; 5]);
        assert_ne!(commit_ints(&v.ints, &[0u8; 32]), commit_ints(&v.ints, &[1u8; 32]));
    }

    #[test]
    fn distinct_vectors_do_not_collide() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let r = [2u8; 32];
        let mut inputs = HashSet::new();
        let mut digests = HashSet::new();
        while inputs.len() < 100_000 {
            let v: Vec<i64> = (0..2).map(|_| rng.gen_range(-(1i64 << 30)..(1i64 << 30))).collect();
            if inputs.insert(v.clone()) {
                digests.insert(ff::PrimeField::to_repr(&commit_ints(&v, &r)));
            }
        }
        assert_eq!(digests.len(), inputs.len());
    }

    #[test]
    fn layout_digest_tracks_block_sizes() {
        let a = BlockLayout::from_sizes([("x", 3), ("y", 4)]).unwrap();
        let b = BlockLayout::from_sizes([("x", 4), ("y", 3)]).unwrap();
        let c = BlockLayout::from_sizes([("p", 3), ("q", 4)]).unwrap();
        assert_ne!(layout_digest(&a), layout_digest(&b));
        assert_eq!(layout_digest(&a), layout_digest(&c));
    }
}
