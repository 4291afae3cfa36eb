//! Provider-side saliency scores, top-k mask selection and the published mask artifact.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::curvature::DiagCurvature;
use crate::error::{Error, Result};
use crate::numkit::{BlockLayout, ParamVector};
use crate::zkp::field::{fe_hex, Fp};
use crate::zkp::hash::{hash_u64s, TAG_MASK};

pub const DEFAULT_MASK_FRACTION: f64 = 0.04;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Pretrained,
    Personalized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyScores {
    pub scores: Vec<f64>,
    pub anchor: Anchor,
}

/// Sorted set of distinct coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("index set must be strictly increasing".into()));
        }
        Ok(IndexSet(v))
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl IndexSet {
    pub fn new(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    pub fn all(d: usize) -> Self {
        IndexSet((0..d).collect())
    }

    pub fn from_ranges(ranges: &[Range<usize>]) -> Self {
        Self::new(ranges.iter().flat_map(|r| r.clone()).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    /// Maximal half-open runs of consecutive indices.
    pub fn to_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for &i in &self.0 {
            match out.last_mut() {
                Some(r) if r.end == i => r.end += 1,
                _ => out.push(i..i + 1),
            }
        }
        out
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        self.0.iter().filter(|&&i| other.contains(i)).count()
    }
}

/// Coordinates of every hidden-layer weight matrix (`mlp.{l}.w` except the output layer).
pub fn hidden_weight_coords(layout: &BlockLayout) -> IndexSet {
    let layers = layout.blocks().iter().filter(|b| b.label.ends_with(".w")).count();
    let ranges: Vec<Range<usize>> = (0..layers.saturating_sub(1))
        .filter_map(|l| layout.find(&format!("mlp.{l}.w")).map(|b| b.range()))
        .collect();
    IndexSet::from_ranges(&ranges)
}

/// `round(fraction * n)`, at least one when `n > 0`.
pub fn default_budget(eligible: usize, fraction: f64) -> usize {
    if eligible == 0 {
        return 0;
    }
    ((fraction * eligible as f64).round() as usize).clamp(1, eligible)
}

/// `S_i = -g_i theta_i + c_i theta_i^2 / 2`: predicted change of the forget loss from zeroing coordinate `i`,
/// negated so that larger means more forgetting.
pub fn saliency_scores(theta: &ParamVector, g_f: &ParamVector, c_f: &DiagCurvature, anchor: Anchor) -> Result<SaliencyScores> {
    let d = theta.len();
    for (what, n) in [("forget gradient", g_f.len()), ("curvature diagonal", c_f.diag.len())] {
        if n != d {
            return Err(Error::Dimension { what, expected: d, got: n });
        }
    }
    let scores = theta
        .values()
        .iter()
        .zip(g_f.values())
        .zip(c_f.diag.values())
        .map(|((t, g), c)| -g * t + 0.5 * c * t * t)
        .collect();
    Ok(SaliencyScores { scores, anchor })
}

/// The `k` eligible coordinates with the largest scores; ties go to the smaller index.
pub fn top_k(scores: &[f64], k: usize, eligible: &IndexSet) -> Result<IndexSet> {
    if k > eligible.len() {
        return Err(Error::Invalid(format!("budget {k} exceeds the {} eligible coordinates", eligible.len())));
    }
    if let Some(&i) = eligible.as_slice().iter().find(|&&i| i >= scores.len()) {
        return Err(Error::Invalid(format!("eligible index {i} outside [0, {})", scores.len())));
    }
    let mut order = eligible.as_slice().to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(IndexSet::new(order))
}

pub fn select_topk(s: &SaliencyScores, k: usize, eligible: &IndexSet) -> Result<MaskArtifact> {
    let support = top_k(&s.scores, k, eligible)?;
    MaskArtifact::new(s.scores.len(), eligible.clone(), support)
}

/// Public mask artifact binding the support, budget, dimension and eligible set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskArtifact {
    d: usize,
    eligible: IndexSet,
    support: IndexSet,
    digest: Fp,
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    d: usize,
    k: usize,
    eligible_ranges: Vec<[usize; 2]>,
    support: Vec<u32>,
    digest: String,
}

impl MaskArtifact {
    pub fn new(d: usize, eligible: IndexSet, support: IndexSet) -> Result<Self> {
        if eligible.as_slice().last().is_some_and(|&i| i >= d) {
            return Err(Error::Invalid(format!("eligible set exceeds dimension {d}")));
        }
        if !support.is_subset(&eligible) {
            return Err(Error::Invalid("mask support leaves the eligible set".into()));
        }
        if d > u32::MAX as usize {
            return Err(Error::Invalid("dimension does not fit 32-bit indices".into()));
        }
        let digest = mask_digest(d, &eligible, &support);
        Ok(MaskArtifact { d, eligible, support, digest })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn eligible(&self) -> &IndexSet {
        &self.eligible
    }

    pub fn digest(&self) -> Fp {
        self.digest
    }

    pub fn digest_hex(&self) -> String {
        fe_hex(&self.digest)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MaskFile {
            d: self.d,
            k: self.k(),
            eligible_ranges: self.eligible.to_ranges().into_iter().map(|r| [r.start, r.end]).collect(),
            support: self.support.as_slice().iter().map(|&i| i as u32).collect(),
            digest: self.digest_hex(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a serialized artifact, rejecting it unless the stored digest matches the contents.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MaskFile = serde_json::from_str(text)?;
        let ranges: Vec<Range<usize>> = file.eligible_ranges.iter().map(|r| r[0]..r[1]).collect();
        let support = IndexSet::try_from(file.support.iter().map(|&i| i as usize).collect::<Vec<_>>())?;
        if support.len() != file.k {
            return Err(Error::Invalid(format!("mask lists {} indices but k = {}", support.len(), file.k)));
        }
        let mask = MaskArtifact::new(file.d, IndexSet::from_ranges(&ranges), support)?;
        if mask.digest_hex() != file.digest {
            return Err(Error::DigestMismatch { what: "mask".into(), expected: file.digest, found: mask.digest_hex() });
        }
        Ok(mask)
    }
}

/// Poseidon digest over `(d, k, #ranges, lo_1, hi_1, ..., support...)`.
pub fn mask_digest(d: usize, eligible: &IndexSet, support: &IndexSet) -> Fp {
    let ranges = eligible.to_ranges();
    let mut words = vec![d as u64, support.len() as u64, ranges.len() as u64];
    for r in &ranges {
        words.extend([r.start as u64, r.end as u64]);
    }
    words.extend(support.as_slice().iter().map(|&i| i as u64));
    hash_u64s(TAG_MASK, words)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `|M(S0, k) ∩ M(Sp, k)| / k`, 1 when `k = 0`.
    pub overlap: f64,
    pub max_score_diff: f64,
    pub param_drift: f64,
}

/// Compares masks selected at the pretrained and personalized anchors.
pub fn saliency_drift_report(
    s0: &SaliencyScores,
    sp: &SaliencyScores,
    k: usize,
    eligible: &IndexSet,
    param_drift: f64,
) -> Result<DriftReport> {
    if s0.scores.len() != sp.scores.len() {
        return Err(Error::Dimension { what: "saliency scores", expected: s0.scores.len(), got: sp.scores.len() });
    }
    let m0 = top_k(&s0.scores, k, eligible)?;
    let mp = top_k(&sp.scores, k, eligible)?;
    let overlap = if k == 0 { 1.0 } else { m0.intersection_len(&mp) as f64 / k as f64 };
    let max_score_diff = s0.scores.iter().zip(&sp.scores).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(DriftReport { overlap, max_score_diff, param_drift })
}
