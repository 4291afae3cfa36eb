use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use unlearn_core::certify::{check_kkt, KktCertificate, DEFAULT_Q_DAMPING, DEFAULT_REAL_TOL};
use unlearn_core::curvature::{
    curvature_proxies, empirical_fisher_blockwise, BlockFisher, DEFAULT_DAMPING, DEFAULT_MAX_SAMPLES,
};
use unlearn_core::evalx::{evaluate, gold_standard, EvalReport, EvalSets};
use unlearn_core::masking::{default_budget, hidden_weight_coords, saliency_scores, select_topk, Anchor, MaskArtifact, DEFAULT_MASK_FRACTION};
use unlearn_core::numkit::{derive_seed, BlockLayout};
use unlearn_core::obs::{apply_unlearn, compensation_solvers, group_obs_solve, mask_only, CompensationResult};
use unlearn_core::toymodel::{personalize, train_sgd, Dataset, MlpModel, SynthConfig, SynthTask, TrainConfig};
use unlearn_core::zkp::FixedParams;
use unlearn_core::{Error, Result};

/// Every knob of a run; flags on the command line override these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    pub personalize: TrainConfig,
    /// Retraining for the reference model; `None` reuses `pretrain`.
    pub retrain: Option<TrainConfig>,
    /// Mask budget; `None` takes `mask_fraction` of the eligible weights.
    pub k: Option<usize>,
    pub mask_fraction: f64,
    pub fisher_lambda: f64,
    pub block_cap: Option<usize>,
    pub max_samples: usize,
    pub frac_bits: u32,
    pub solver: String,
    pub curvature_proxy: String,
    pub hessian: String,
    pub backend: String,
    pub q_damping: f64,
    pub kkt_tol: f64,
    /// Residual window outside the mask; `None` derives it from the quantization bound.
    pub t_int: Option<u128>,
    /// Where the run happens, not what it computes; left out of recorded configs.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            synth: SynthConfig::default(),
            hidden: vec![32],
            pretrain: TrainConfig::default(),
            personalize: TrainConfig { epochs: 20, ..TrainConfig::default() },
            retrain: None,
            k: None,
            mask_fraction: DEFAULT_MASK_FRACTION,
            fisher_lambda: DEFAULT_DAMPING,
            block_cap: None,
            max_samples: DEFAULT_MAX_SAMPLES,
            frac_bits: 24,
            solver: "auto".into(),
            curvature_proxy: "fisher-diag".into(),
            hessian: "exact-fd".into(),
            backend: "transparent".into(),
            q_damping: DEFAULT_Q_DAMPING,
            kkt_tol: DEFAULT_REAL_TOL,
            t_int: None,
            out_dir: PathBuf::from("artifacts"),
        }
    }
}

impl PipelineConfig {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.synth.dim];
        dims.extend(&self.hidden);
        dims.push(self.synth.classes);
        dims
    }

    /// Training configs with their seeds fanned out from the master seed.
    pub fn stage(&self, name: &str) -> TrainConfig {
        let base = match name {
            "pretrain" => &self.pretrain,
            "personalize" => &self.personalize,
            _ => self.retrain.as_ref().unwrap_or(&self.pretrain),
        };
        // retraining shares the pretraining stream so an empty forget set reproduces it
        let stream = if name == "retrain" { "pretrain" } else { name };
        TrainConfig { seed: derive_seed(self.seed, stream), ..base.clone() }
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init")
    }

    pub fn fisher_seed(&self) -> u64 {
        derive_seed(self.seed, "fisher-subsample")
    }

    pub fn mask_seed(&self) -> u64 {
        derive_seed(self.seed, "mask-curvature")
    }

    pub fn commit_seed(&self) -> u64 {
        derive_seed(self.seed, "commit")
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, "eval")
    }

    pub fn fixed_params(&self) -> FixedParams {
        FixedParams::with_frac_bits(self.frac_bits)
    }

    pub fn fisher_layout(&self, model: &MlpModel) -> Result<Arc<BlockLayout>> {
        Ok(match self.block_cap {
            Some(cap) => Arc::new(model.layout().split_capped(cap)?),
            None => model.layout().clone(),
        })
    }
}

/// Provider step: saliency at the pretrained model over the forget set.
pub fn provider_mask(cfg: &PipelineConfig, theta_0: &MlpModel, forget: &Dataset) -> Result<MaskArtifact> {
    let g = theta_0.mean_grad(forget, None)?;
    let proxy = curvature_proxies().get(&cfg.curvature_proxy)?;
    let c = proxy.diagonal(theta_0, forget, cfg.max_samples, cfg.mask_seed())?;
    let s = saliency_scores(theta_0.params(), &g, &c, Anchor::Pretrained)?;
    let eligible = hidden_weight_coords(theta_0.layout());
    let k = cfg.k.unwrap_or_else(|| default_budget(eligible.len(), cfg.mask_fraction));
    if k > eligible.len() {
        return Err(Error::Invalid(format!("mask budget k = {k} exceeds the {} eligible weights", eligible.len())));
    }
    select_topk(&s, k, &eligible)
}

pub fn client_fisher(cfg: &PipelineConfig, theta_p: &MlpModel, personal: &Dataset) -> Result<BlockFisher> {
    empirical_fisher_blockwise(
        theta_p,
        personal,
        cfg.fisher_layout(theta_p)?,
        cfg.fisher_lambda,
        cfg.max_samples,
        cfg.fisher_seed(),
    )
}

/// Everything one seed of the synthetic experiment produces.
pub struct Experiment {
    pub task: SynthTask,
    pub init: MlpModel,
    pub theta_0: MlpModel,
    pub theta_p: MlpModel,
    pub mask: MaskArtifact,
    pub fisher: BlockFisher,
    pub comp: CompensationResult,
    pub theta_u: MlpModel,
    pub mask_only: MlpModel,
    pub certificate: KktCertificate,
    pub gold: MlpModel,
}

impl Experiment {
    pub fn run(cfg: &PipelineConfig) -> Result<Self> {
        Self::run_on(cfg, SynthTask::generate(&cfg.synth, cfg.seed)?)
    }

    pub fn run_on(cfg: &PipelineConfig, task: SynthTask) -> Result<Self> {
        let init = MlpModel::init(&cfg.layer_dims(), cfg.init_seed())?;
        let theta_0 = train_sgd(&init, &task.train, &cfg.stage("pretrain"))?.model;
        let theta_p = personalize(&theta_0, &task.personal, &cfg.stage("personalize"))?.model;
        let mask = provider_mask(cfg, &theta_0, &task.forget)?;
        let fisher = client_fisher(cfg, &theta_p, &task.personal)?;
        let solver = compensation_solvers().get(&cfg.solver)?;
        let comp = group_obs_solve(&fisher, theta_p.params(), &mask, solver.as_ref())?;
        let out = apply_unlearn(theta_p.params(), &comp, &mask)?;
        let certificate = check_kkt(theta_p.params(), &out.theta_u, &comp, &fisher, &mask, cfg.kkt_tol)?;
        let theta_u = theta_p.with_params(out.theta_u)?;
        let mask_only = theta_p.with_params(mask_only(theta_p.params(), &mask)?)?;
        let gold = gold_standard(&init, &task.retain, &task.personal, &cfg.stage("retrain"), &cfg.stage("personalize"))?;
        Ok(Experiment { task, init, theta_0, theta_p, mask, fisher, comp, theta_u, mask_only, certificate, gold })
    }

    pub fn sets(&self) -> EvalSets<'_> {
        EvalSets {
            forget: &self.task.forget,
            personal: &self.task.personal,
            personal_test: &self.task.personal_test,
            forget_holdout: &self.task.forget_holdout,
        }
    }

    /// Reports for the personalized, unlearned, mask-only and reference models.
    pub fn reports(&self, seed: u64) -> Result<Vec<EvalReport>> {
        [("personalized", &self.theta_p), ("unlearned", &self.theta_u), ("mask-only", &self.mask_only), ("reference", &self.gold)]
            .into_iter()
            .map(|(label, m)| evaluate(label, m, &self.gold, self.sets(), seed))
            .collect()
    }
}
