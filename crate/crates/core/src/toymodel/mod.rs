//! Small tanh MLP classifier, training loops and the synthetic unlearning task.

mod data;
mod mlp;
mod synth;
mod train;

pub use data::Dataset;
pub use mlp::{log_sum_exp, softmax, Activation, Architecture, MlpModel};
pub use synth::{gaussian_blobs, SynthConfig, SynthTask};
pub use train::{personalize, train_sgd, Personalized, TrainConfig, Trained};
