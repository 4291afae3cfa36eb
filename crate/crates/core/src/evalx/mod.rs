//! Unlearning quality: accuracies, forward-KL alignment to the retrained
//! reference, the reference itself, and a loss-threshold membership AUC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::tree_sum;
use crate::toymodel::{personalize, train_sgd, Dataset, MlpModel, TrainConfig};

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// `KL(p || q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = (a.max(PROB_FLOOR), b.max(PROB_FLOOR));
            a * (a.ln() - b.ln())
        })
        .sum()
}

/// Mean over `data` of `KL(p(.|x; a) || p(.|x; b))`.
pub fn forward_kl_alignment(a: &MlpModel, b: &MlpModel, data: &Dataset) -> Result<f64> {
    if a.layer_dims() != b.layer_dims() {
        return Err(Error::Invalid(format!(
            "architectures differ: {:?} vs {:?}",
            a.layer_dims(),
            b.layer_dims()
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset("alignment data"));
    }
    let terms: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(kl_divergence(&a.predictive_dist(data.x(i))?, &b.predictive_dist(data.x(i))?)))
        .collect::<Result<_>>()?;
    Ok(tree_sum(&terms) / data.len() as f64)
}

/// Top-1 accuracy; ties go to the lowest class index.
pub fn evaluate_accuracy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("accuracy data"));
    }
    model.accuracy(data)
}

/// Retrains from `init` on the retain set, then personalizes on `personal`.
pub fn gold_standard(
    init: &MlpModel,
    retain: &Dataset,
    personal: &Dataset,
    cfg_r: &TrainConfig,
    cfg_p: &TrainConfig,
) -> Result<MlpModel> {
    if retain.is_empty() {
        return Err(Error::EmptyDataset("retain set"));
    }
    let base = train_sgd(init, retain, cfg_r)?.model;
    Ok(personalize(&base, personal, cfg_p)?.model)
}

/// Rank AUC of `pos` scoring above `neg`, ties counted half via midranks.
pub fn auc_from_scores(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Loss-threshold membership attack: members are expected to have lower loss.
pub fn mia_auc(model: &MlpModel, members: &Dataset, nonmembers: &Dataset) -> Result<f64> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::EmptyDataset("membership sets"));
    }
    let score = |d: &Dataset| -> Result<Vec<f64>> { Ok(model.per_example_losses(d)?.into_iter().map(|l| -l).collect()) };
    Ok(auc_from_scores(&score(members)?, &score(nonmembers)?))
}

/// Datasets a model is scored on.
#[derive(Clone, Copy)]
pub struct EvalSets<'a> {
    /// Forgotten training examples (membership positives, forget alignment).
    pub forget: &'a Dataset,
    /// Client training data (personal alignment).
    pub personal: &'a Dataset,
    /// Held-out client data (personal accuracy).
    pub personal_test: &'a Dataset,
    /// Fresh forget-class draws (membership negatives).
    pub forget_holdout: &'a Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub forget_acc: f64,
    pub personal_acc: f64,
    pub forget_loss: f64,
    /// Alignment to the reference on the personal data, nats.
    pub a_p: f64,
    /// Alignment to the reference on the forget data, nats.
    pub a_f: f64,
    pub mia_auc: f64,
    pub seeds: Vec<u64>,
}

pub fn evaluate(label: &str, model: &MlpModel, gold: &MlpModel, sets: EvalSets<'_>, seed: u64) -> Result<EvalReport> {
    Ok(EvalReport {
        label: label.to_string(),
        forget_acc: evaluate_accuracy(model, sets.forget)?,
        personal_acc: evaluate_accuracy(model, sets.personal_test)?,
        forget_loss: model.mean_loss(sets.forget)?,
        a_p: forward_kl_alignment(model, gold, sets.personal)?,
        a_f: forward_kl_alignment(model, gold, sets.forget)?,
        mia_auc: mia_auc(model, sets.forget, sets.forget_holdout)?,
        seeds: vec![seed],
    })
}

/// Median of finite values; the upper-lower mean for even counts.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Field-wise median over per-seed reports sharing a label.
pub fn median_report(label: &str, rows: &[EvalReport]) -> EvalReport {
    let m = |f: fn(&EvalReport) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    EvalReport {
        label: label.to_string(),
        forget_acc: m(|r| r.forget_acc),
        personal_acc: m(|r| r.personal_acc),
        forget_loss: m(|r| r.forget_loss),
        a_p: m(|r| r.a_p),
        a_f: m(|r| r.a_f),
        mia_auc: m(|r| r.mia_auc),
        seeds: rows.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
    }
}

pub const CSV_HEADER: &str = "label,seed,forget_acc,personal_acc,forget_loss,a_p,a_f,mia_auc";

pub fn csv_rows(rows: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        for s in &r.seeds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label, s, r.forget_acc, r.personal_acc, r.forget_loss, r.a_p, r.a_f, r.mia_auc
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::gaussian_blobs;
    use proptest::prelude::*;

    #[test]
    fn hand_kl_value() {
        let kl = kl_divergence(&[0.75, 0.25], &[0.5, 0.5]);
        let want = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((kl - want).abs() < 1e-15);
        assert!((kl - 0.1308).abs() < 1e-4);
    }

    #[test]
    fn self_alignment_is_exactly_zero() {
        let m = MlpModel::init(&[3, 5, 4], 11).unwrap();
        let data = gaussian_blobs(&[vec![0.0; 3], vec![1.0; 3], vec![-1.0; 3], vec![2.0; 3]], 10, 1.0, 1, "x").unwrap();
        assert_eq!(forward_kl_alignment(&m, &m, &data).unwrap(), 0.0);
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let a = MlpModel::init(&[3, 5, 2], 1).unwrap();
        let b = MlpModel::init(&[3, 4, 2], 1).unwrap();
        let data = gaussian_blobs(&[vec![0.0; 3], vec![1.0; 3]], 3, 1.0, 1, "x").unwrap();
        assert!(forward_kl_alignment(&a, &b, &data).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(p in prop::collection::vec(0.0f64..1.0, 2..6), q in prop::collection::vec(0.0f64..1.0, 6)) {
            let n = p.len();
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect::<Vec<_>>() };
            let (p, q) = (norm(&p), norm(&q[..n]));
            prop_assert!(kl_divergence(&p, &q) >= -1e-12);
        }

        #[test]
        fn models_align_nonnegatively(s1 in 0u64..50, s2 in 50u64..100) {
            let a = MlpModel::init(&[2, 3, 3], s1).unwrap();
            let b = MlpModel::init(&[2, 3, 3], s2).unwrap();
            let data = gaussian_blobs(&[vec![0.0; 2], vec![2.0; 2], vec![-2.0, 1.0]], 5, 1.0, s1, "x").unwrap();
            prop_assert!(forward_kl_alignment(&a, &b, &data).unwrap() >= 0.0);
        }
    }

    #[test]
    fn auc_of_identical_sets_is_half() {
        let m = MlpModel::init(&[2, 4, 2], 5).unwrap();
        let d = gaussian_blobs(&[vec![0.0; 2], vec![1.0; 2]], 20, 1.0, 2, "x").unwrap();
        assert_eq!(mia_auc(&m, &d, &d).unwrap(), 0.5);
    }

    #[test]
    fn auc_extremes_and_ties() {
        assert_eq!(auc_from_scores(&[3.0, 4.0], &[1.0, 2.0]), 1.0);
        assert_eq!(auc_from_scores(&[1.0, 2.0], &[3.0, 4.0]), 0.0);
        assert_eq!(auc_from_scores(&[1.0], &[1.0]), 0.5);
        // brute-force pair counting oracle
        let pos = [0.3, 0.5, 0.5, 0.9, 0.1];
        let neg = [0.5, 0.2, 0.9, 0.0];
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        assert!((auc_from_scores(&pos, &neg) - wins / 20.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_model_accuracy_near_chance() {
        let m = MlpModel::zeros(&[2, 3, 4]).unwrap();
        let means = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0], vec![3.0, 3.0]];
        let d = gaussian_blobs(&means, 50, 0.5, 3, "x").unwrap();
        // zero weights predict class 0 everywhere
        assert_eq!(evaluate_accuracy(&m, &d).unwrap(), 0.25);
    }

    #[test]
    fn gold_with_empty_forget_set_reproduces_pipeline() {
        let means = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]];
        let train = gaussian_blobs(&means, 20, 0.7, 4, "train").unwrap();
        let personal = gaussian_blobs(&means, 10, 0.7, 4, "personal").unwrap();
        let init = MlpModel::init(&[2, 6, 3], 9).unwrap();
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let theta_0 = train_sgd(&init, &train, &cfg).unwrap().model;
        let theta_p = personalize(&theta_0, &personal, &cfg).unwrap().model;
        let gold = gold_standard(&init, &train, &personal, &cfg, &cfg).unwrap();
        assert_eq!(gold.params().values(), theta_p.params().values());
    }

    #[test]
    fn median_and_csv() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let r = EvalReport {
            label: "u".into(),
            forget_acc: 0.1,
            personal_acc: 0.9,
            forget_loss: 2.0,
            a_p: 0.01,
            a_f: 0.2,
            mia_auc: 0.5,
            seeds: vec![7],
        };
        let csv = csv_rows(std::slice::from_ref(&r));
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("u,7,"));
        assert_eq!(median_report("m", &[r.clone(), r]).seeds, vec![7, 7]);
    }
}
