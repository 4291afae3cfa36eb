//! Fixed-point arithmetic circuit for the unlearning certificate, with
//! Poseidon commitments, a constraint-level mock prover and pluggable proof
//! backends.

pub mod backend;
pub mod circuit;
pub mod commit;
pub mod field;
pub mod hash;
pub mod prover;
pub mod witness;

pub use backend::{proof_backends, Proof, ProofBackend, PublicInputs, TransparentBackend, HASH_METADATA};
pub use circuit::{
    circuit_hash, constraint_report, witness_digests, Blindings, CertificateCircuit, ConstraintReport, Family,
    PublicDigests,
};
pub use commit::{commit_vector, layout_digest, verify_commit, CommitRandomness, Commitment};
pub use field::Fp;
pub use prover::{check_gate, mock_prove, Verdict, Violation};
pub use witness::{
    default_t_int, dequantized_residual, encode_fixed_witness, integer_residual, masked_row_tolerance,
    residual_extremes, worst_case_residual_bound, FixedParams, FixedWitness,
};
