use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{stream_rng, ParamVector};

use super::data::Dataset;
use super::mlp::MlpModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.05, epochs: 30, batch_size: 32, seed: 0, momentum: 0.9 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: MlpModel,
    /// Mean training loss before the first epoch and after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD with heavy-ball momentum on the mean cross-entropy.
///
/// Epoch `e` visits the data in the order drawn from stream `shuffle/epoch-e`.
pub fn train_sgd(init: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.dim() != init.input_dim() || data.classes() > init.classes() {
        return Err(Error::Invalid(format!(
            "dataset `{}` ({} features, {} classes) does not fit model {:?}",
            data.name,
            data.dim(),
            data.classes(),
            init.layer_dims()
        )));
    }
    if cfg.epochs == 0 {
        return Ok(Trained { model: init.clone(), loss_trace: vec![init.mean_loss(data)?] });
    }
    let layout = init.layout().clone();
    let mut theta = init.params().values().to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut model = init.clone();
    let mut trace = vec![model.mean_loss(data)?];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, &format!("shuffle/epoch-{epoch}"));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let g = model.mean_grad(data, Some(batch)).map_err(|e| match e {
                Error::Invalid(_) => Error::Divergence { epoch, loss: f64::NAN },
                e => e,
            })?;
            for ((t, v), gi) in theta.iter_mut().zip(velocity.iter_mut()).zip(g.values()) {
                *v = cfg.momentum * *v + gi;
                *t -= cfg.learning_rate * *v;
            }
            if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
                return Err(Error::Divergence { epoch, loss: *bad });
            }
            model = model.with_params(ParamVector::new(theta.clone(), layout.clone())?)?;
        }
        let loss = model.mean_loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        trace.push(loss);
    }
    Ok(Trained { model, loss_trace: trace })
}

#[derive(Clone, Debug)]
pub struct Personalized {
    pub model: MlpModel,
    pub loss_trace: Vec<f64>,
    /// Euclidean distance travelled from the starting parameters.
    pub drift: f64,
}

/// Short-horizon fine-tuning of all parameters on the personal data.
pub fn personalize(base: &MlpModel, d_p: &Dataset, cfg: &TrainConfig) -> Result<Personalized> {
    let Trained { model, loss_trace } = train_sgd(base, d_p, cfg)?;
    let drift = model.params().sub(base.params())?.norm2();
    Ok(Personalized { model, loss_trace, drift })
}
