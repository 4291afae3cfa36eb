use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::circuit::{circuit_hash, Blindings, CertificateCircuit, PublicDigests};
use super::commit::layout_digest;
use super::field::{fe_from_hex, fe_hex, Fp};
use super::prover::{mock_prove, Verdict};
use super::witness::{FixedParams, FixedWitness};
use crate::error::{Error, Result};
use crate::masking::{IndexSet, MaskArtifact};
use crate::numkit::{Block, BlockLayout, FixedVector};
use crate::registry::Registry;

pub const HASH_METADATA: &str = "poseidon-p128pow5t3-pallas/sponge-w3r2/merkle-arity2/chunk1024";

mod hex_fe {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Fp, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fe_hex(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Fp, D::Error> {
        let s = String::deserialize(d)?;
        fe_from_hex(&s).map_err(serde::de::Error::custom)
    }
}

mod hex_fe_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Fp], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(fe_hex))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Fp>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| fe_from_hex(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// Public statement of a certificate proof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicInputs {
    #[serde(with = "hex_fe")]
    pub mask_digest: Fp,
    #[serde(with = "hex_fe")]
    pub layout_digest: Fp,
    #[serde(with = "hex_fe")]
    pub com_theta_p: Fp,
    #[serde(with = "hex_fe")]
    pub com_theta_u: Fp,
    #[serde(with = "hex_fe")]
    pub com_c_p: Fp,
    pub t_int: u128,
    pub f_w: u32,
    pub f_c: u32,
    pub b_w: f64,
    pub b_c: f64,
    pub b_lambda: f64,
    pub hash: String,
}

impl PublicInputs {
    pub fn for_circuit(c: &CertificateCircuit) -> Self {
        PublicInputs {
            mask_digest: c.mask.digest(),
            layout_digest: c.layout_digest(),
            com_theta_p: c.digests.theta_p,
            com_theta_u: c.digests.theta_u,
            com_c_p: c.digests.c_p,
            t_int: c.t_int,
            f_w: c.params.f_w,
            f_c: c.params.f_c,
            b_w: c.params.b_w,
            b_c: c.params.b_c,
            b_lambda: c.params.b_lambda,
            hash: HASH_METADATA.to_string(),
        }
    }

    pub fn params(&self) -> FixedParams {
        FixedParams { f_w: self.f_w, f_c: self.f_c, b_w: self.b_w, b_c: self.b_c, b_lambda: self.b_lambda }
    }

    pub fn digests(&self) -> PublicDigests {
        PublicDigests { theta_p: self.com_theta_p, theta_u: self.com_theta_u, c_p: self.com_c_p }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub backend: String,
    pub circuit_hash: Fp,
    pub bytes: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct ProofHeader {
    backend: String,
    circuit_hash: String,
}

impl Proof {
    /// A JSON header line followed by the backend's opaque bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ProofHeader { backend: self.backend.clone(), circuit_hash: fe_hex(&self.circuit_hash) };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Format { path: "<proof>".into(), reason: reason.to_string() };
        let nl = raw.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header: ProofHeader = serde_json::from_slice(&raw[..nl]).map_err(|e| bad(&e.to_string()))?;
        Ok(Proof {
            backend: header.backend,
            circuit_hash: fe_from_hex(&header.circuit_hash).map_err(|e| bad(&e.to_string()))?,
            bytes: raw[nl + 1..].to_vec(),
        })
    }
}

/// Proving system behind the certificate circuit.
pub trait ProofBackend: Send + Sync {
    fn name(&self) -> &'static str;
    /// Fails if the circuit is unsatisfied or disagrees with `public`.
    fn prove(&self, circuit: &CertificateCircuit, public: &PublicInputs) -> Result<Proof>;
    /// Never panics; malformed proofs verify as false.
    fn verify(&self, proof: &Proof, public: &PublicInputs) -> bool;
}

pub fn proof_backends() -> Registry<dyn ProofBackend> {
    Registry::new("proof backend").with("transparent", || Box::new(TransparentBackend) as Box<dyn ProofBackend>)
}

/// Reference backend: the proof carries the full witness and verification
/// re-runs the mock prover against the public digests. Sound and complete
/// but reveals the witness, so it is not zero-knowledge.
pub struct TransparentBackend;

#[derive(Serialize, Deserialize)]
struct TransparentPayload {
    blocks: Vec<[usize; 2]>,
    d: usize,
    eligible: Vec<[usize; 2]>,
    support: Vec<usize>,
    theta_p: Vec<i64>,
    theta_u: Vec<i64>,
    delta_w: Vec<i64>,
    lambda_m: Vec<i64>,
    c_upper: Vec<i64>,
    #[serde(with = "hex_fe_vec")]
    blind_theta_p: Vec<Fp>,
    #[serde(with = "hex_fe_vec")]
    blind_theta_u: Vec<Fp>,
    #[serde(with = "hex_fe_vec")]
    blind_c_p: Vec<Fp>,
}

fn check_statement(c: &CertificateCircuit, public: &PublicInputs) -> Result<()> {
    let mine = PublicInputs::for_circuit(c);
    if mine.hash != public.hash {
        return Err(Error::Invalid(format!("unsupported hash `{}`", public.hash)));
    }
    let mismatch = |what: &str, a: &Fp, b: &Fp| Error::DigestMismatch { what: what.into(), expected: fe_hex(b), found: fe_hex(a) };
    for (what, a, b) in [
        ("mask", &mine.mask_digest, &public.mask_digest),
        ("layout", &mine.layout_digest, &public.layout_digest),
        ("pretrained commitment", &mine.com_theta_p, &public.com_theta_p),
        ("unlearned commitment", &mine.com_theta_u, &public.com_theta_u),
        ("curvature commitment", &mine.com_c_p, &public.com_c_p),
    ] {
        if a != b {
            return Err(mismatch(what, a, b));
        }
    }
    if mine.t_int != public.t_int || mine.params() != public.params() {
        return Err(Error::Invalid("public tolerance or fixed-point parameters differ from the circuit".into()));
    }
    Ok(())
}

impl TransparentBackend {
    fn rebuild(payload: TransparentPayload, public: &PublicInputs) -> Result<CertificateCircuit> {
        let blocks = payload
            .blocks
            .iter()
            .enumerate()
            .map(|(i, &[offset, size])| Block { offset, size, label: format!("block{i}") })
            .collect();
        let layout = Arc::new(BlockLayout::new(blocks)?);
        if layout_digest(&layout) != public.layout_digest {
            return Err(Error::Invalid("layout does not match the public digest".into()));
        }
        if payload.d != layout.dim() || payload.eligible.iter().any(|r| r[0] > r[1] || r[1] > payload.d) {
            return Err(Error::Invalid("eligible ranges do not fit the layout".into()));
        }
        let eligible: Vec<Range<usize>> = payload.eligible.iter().map(|r| r[0]..r[1]).collect();
        let support = IndexSet::try_from(payload.support.clone())?;
        let mask = MaskArtifact::new(payload.d, IndexSet::from_ranges(&eligible), support)?;
        if mask.digest() != public.mask_digest {
            return Err(Error::Invalid("mask does not match the public digest".into()));
        }
        let p = public.params();
        p.validate()?;
        let w = FixedWitness {
            params: p,
            layout,
            support: payload.support,
            theta_p: FixedVector::from_ints(payload.theta_p, p.f_w, p.b_w)?,
            theta_u: FixedVector::from_ints(payload.theta_u, p.f_w, p.b_w)?,
            delta_w: FixedVector::from_ints(payload.delta_w, p.f_w, p.b_w)?,
            lambda_m: FixedVector::from_ints(payload.lambda_m, p.f_w, p.b_lambda)?,
            c_upper: FixedVector::from_ints(payload.c_upper, p.f_c, p.b_c)?,
            lambda_shift: 0.0,
        };
        let blind = Blindings { theta_p: payload.blind_theta_p, theta_u: payload.blind_theta_u, c_p: payload.blind_c_p };
        CertificateCircuit::synthesize(&w, &blind, &mask, public.t_int, public.digests())
    }
}

impl ProofBackend for TransparentBackend {
    fn name(&self) -> &'static str {
        "transparent"
    }

    fn prove(&self, c: &CertificateCircuit, public: &PublicInputs) -> Result<Proof> {
        check_statement(c, public)?;
        if let Verdict::Fail(v) = mock_prove(c) {
            return Err(Error::Unsatisfied(format!(
                "{} constraint on {} at {} ({})",
                v.family.name(),
                v.what,
                v.row,
                v.detail
            )));
        }
        let w = &c.witness;
        let payload = TransparentPayload {
            blocks: c.layout.blocks().iter().map(|b| [b.offset, b.size]).collect(),
            d: c.mask.d(),
            eligible: c.mask.eligible().to_ranges().into_iter().map(|r| [r.start, r.end]).collect(),
            support: w.support.clone(),
            theta_p: w.theta_p.ints.clone(),
            theta_u: w.theta_u.ints.clone(),
            delta_w: w.delta_w.ints.clone(),
            lambda_m: w.lambda_m.ints.clone(),
            c_upper: w.c_upper.ints.clone(),
            blind_theta_p: c.blindings.theta_p.clone(),
            blind_theta_u: c.blindings.theta_u.clone(),
            blind_c_p: c.blindings.c_p.clone(),
        };
        Ok(Proof { backend: self.name().to_string(), circuit_hash: c.circuit_hash(), bytes: serde_json::to_vec(&payload)? })
    }

    fn verify(&self, proof: &Proof, public: &PublicInputs) -> bool {
        if proof.backend != self.name() {
            return false;
        }
        if public.hash != HASH_METADATA {
            return false;
        }
        let Ok(payload) = serde_json::from_slice::<TransparentPayload>(&proof.bytes) else {
            return false;
        };
        let check = || {
            let Ok(c) = Self::rebuild(payload, public) else {
                return false;
            };
            circuit_hash(&c.layout, public.mask_digest, public.t_int, &public.params()) == proof.circuit_hash
                && mock_prove(&c).is_pass()
        };
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or(false)
    }
}
