use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::stream_rng;

use super::data::Dataset;

/// Isotropic Gaussian samples around each mean, `per_class` rows per class, classes interleaved.
pub fn gaussian_blobs(means: &[Vec<f64>], per_class: usize, std: f64, seed: u64, stream: &str) -> Result<Dataset> {
    let classes = means.len();
    let dim = means.first().map(Vec::len).unwrap_or(0);
    if means.iter().any(|m| m.len() != dim) {
        return Err(Error::Invalid("class means differ in dimension".into()));
    }
    let noise = Normal::new(0.0, std).map_err(|e| Error::Invalid(format!("noise scale {std}: {e}")))?;
    let mut rng = stream_rng(seed, stream);
    let mut features = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (c, mean) in means.iter().enumerate() {
            features.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
            labels.push(c as u32);
        }
    }
    Dataset::new(stream, features, labels, dim, classes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    /// Standard deviation of the class means around the origin.
    pub separation: f64,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub personal_per_class: usize,
    /// Norm of the mean shift applied to the personal distribution.
    pub shift: f64,
    pub forget_class: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            dim: 8,
            separation: 1.5,
            noise: 1.0,
            train_per_class: 200,
            test_per_class: 100,
            personal_per_class: 60,
            shift: 1.5,
            forget_class: 0,
        }
    }
}

/// Class-unlearning scenario built from one Gaussian mixture.
#[derive(Clone, Debug)]
pub struct SynthTask {
    pub config: SynthConfig,
    pub means: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    /// Pretraining set `D`.
    pub train: Dataset,
    /// Every training example of the forget class.
    pub forget: Dataset,
    pub retain: Dataset,
    /// Client data: retained classes under the shifted means.
    pub personal: Dataset,
    pub personal_test: Dataset,
    pub test: Dataset,
    /// Fresh forget-class draws never seen in training.
    pub forget_holdout: Dataset,
}

impl SynthTask {
    pub fn generate(config: &SynthConfig, seed: u64) -> Result<Self> {
        let SynthConfig { classes, dim, .. } = *config;
        if classes < 2 || dim == 0 {
            return Err(Error::Invalid("synthetic task needs at least two classes and one feature".into()));
        }
        if config.forget_class as usize >= classes {
            return Err(Error::Invalid(format!("forget class {} outside [0, {classes})", config.forget_class)));
        }
        let mut rng = stream_rng(seed, "synth/means");
        let unit = Normal::new(0.0, 1.0).unwrap();
        let means: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| config.separation * unit.sample(&mut rng)).collect())
            .collect();
        let dir: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shift: Vec<f64> = dir.iter().map(|v| config.shift * v / norm).collect();
        let shifted: Vec<Vec<f64>> =
            means.iter().map(|m| m.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect();

        let fc = config.forget_class;
        let train = gaussian_blobs(&means, config.train_per_class, config.noise, seed, "train")?;
        let test = gaussian_blobs(&means, config.test_per_class, config.noise, seed, "test")?;
        let forget = train.filter("forget", |_, y| y == fc).ok_or(Error::EmptyDataset("forget set"))?;
        let retain = train.filter("retain", |_, y| y != fc).ok_or(Error::EmptyDataset("retain set"))?;
        let personal = gaussian_blobs(&shifted, config.personal_per_class, config.noise, seed, "personal")?
            .filter("personal", |_, y| y != fc)
            .ok_or(Error::EmptyDataset("personal set"))?;
        let personal_test = gaussian_blobs(&shifted, config.test_per_class, config.noise, seed, "personal-test")?
            .filter("personal-test", |_, y| y != fc)
            .ok_or(Error::EmptyDataset("personal test set"))?;
        let forget_holdout = gaussian_blobs(&means, config.train_per_class, config.noise, seed, "forget-holdout")?
            .filter("forget-holdout", |_, y| y == fc)
            .ok_or(Error::EmptyDataset("forget holdout"))?;
        Ok(SynthTask {
            config: config.clone(),
            means,
            shift,
            train,
            forget,
            retain,
            personal,
            personal_test,
            test,
            forget_holdout,
        })
    }
}
