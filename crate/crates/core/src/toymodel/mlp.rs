use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{stream_rng, tree_mean_vectors, tree_sum, BlockLayout, ParamVector};

use super::data::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Architecture descriptor stored next to serialized parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

/// Fully connected classifier: tanh hidden layers, linear output, softmax cross-entropy.
///
/// Layer `l` owns the blocks `mlp.{l}.w` (row-major `out x in`) and `mlp.{l}.b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    params: ParamVector,
}

struct Trace {
    /// Layer inputs: `acts[0] = x`, `acts[l]` = post-activation of hidden layer `l - 1`.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl MlpModel {
    pub fn layout_for(layer_dims: &[usize]) -> Result<BlockLayout> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Invalid(format!("layer dims {layer_dims:?} need at least two positive entries")));
        }
        let mut blocks = Vec::new();
        for (l, w) in layer_dims.windows(2).enumerate() {
            blocks.push((format!("mlp.{l}.w"), w[0] * w[1]));
            blocks.push((format!("mlp.{l}.b"), w[1]));
        }
        BlockLayout::from_sizes(blocks)
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        let layout = Arc::new(Self::layout_for(layer_dims)?);
        Ok(MlpModel { layer_dims: layer_dims.to_vec(), params: ParamVector::zeros(layout) })
    }

    /// Xavier-uniform weights from the `init` stream of `seed`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = stream_rng(seed, "init");
        let mut values = model.params.values().to_vec();
        for (l, w) in layer_dims.windows(2).enumerate() {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            let block = model.params.layout().block(2 * l).range();
            for v in &mut values[block] {
                *v = dist.sample(&mut rng);
            }
        }
        model.params = ParamVector::new(values, model.params.layout().clone())?;
        Ok(model)
    }

    pub fn from_params(layer_dims: &[usize], params: ParamVector) -> Result<Self> {
        let layout = Self::layout_for(layer_dims)?;
        if params.layout().as_ref() != &layout {
            return Err(Error::Layout(format!("parameters do not match architecture {layer_dims:?}")));
        }
        Ok(MlpModel { layer_dims: layer_dims.to_vec(), params })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { layer_dims: self.layer_dims.clone(), activation: Activation::Tanh }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        self.params.layout()
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension { what: "model parameters", expected: self.params.len(), got: params.len() });
        }
        let params = params.relayout(self.params.layout().clone())?;
        Ok(MlpModel { layer_dims: self.layer_dims.clone(), params })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { what: "input features", expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_label(&self, y: u32) -> Result<()> {
        if y as usize >= self.classes() {
            return Err(Error::Invalid(format!("label {y} outside [0, {})", self.classes())));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let p = self.params.values();
        let layers = self.layer_dims.len() - 1;
        let mut acts = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &p[self.params.layout().block(2 * l).range()];
            let b = &p[self.params.layout().block(2 * l + 1).range()];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(std::mem::replace(&mut cur, z));
        }
        Trace { acts, logits: cur }
    }

    /// Reverse pass for an upstream gradient on the logits.
    fn backward(&self, trace: &Trace, dlogits: Vec<f64>) -> Vec<f64> {
        let p = self.params.values();
        let layout = self.params.layout();
        let mut grad = vec![0.0; p.len()];
        let mut delta = dlogits;
        for l in (0..self.layer_dims.len() - 1).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let a = &trace.acts[l];
            let wr = layout.block(2 * l).range();
            let br = layout.block(2 * l + 1).range();
            for o in 0..n_out {
                let row = &mut grad[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                for (g, ai) in row.iter_mut().zip(a) {
                    *g = delta[o] * ai;
                }
            }
            grad[br].copy_from_slice(&delta);
            if l > 0 {
                let w = &p[wr];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                        back * (1.0 - a[i] * a[i])
                    })
                    .collect();
            }
        }
        grad
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).logits)
    }

    pub fn predictive_dist(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Arg-max class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        let z = self.logits(x)?;
        let mut best = 0;
        for (c, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = c;
            }
        }
        Ok(best as u32)
    }

    pub fn loss(&self, x: &[f64], y: u32) -> Result<f64> {
        self.check_label(y)?;
        let z = self.logits(x)?;
        Ok(log_sum_exp(&z) - z[y as usize])
    }

    pub fn per_example_grad(&self, x: &[f64], y: u32) -> Result<ParamVector> {
        ParamVector::new(self.grad_values(x, y)?, self.params.layout().clone())
    }

    pub(crate) fn grad_values(&self, x: &[f64], y: u32) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(y)?;
        let trace = self.forward(x);
        let mut d = softmax(&trace.logits);
        d[y as usize] -= 1.0;
        Ok(self.backward(&trace, d))
    }

    /// Rows are `d logit_c / d theta`, one per class.
    pub fn logit_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let trace = self.forward(x);
        let c = self.classes();
        Ok((0..c)
            .map(|k| {
                let mut e = vec![0.0; c];
                e[k] = 1.0;
                self.backward(&trace, e)
            })
            .collect())
    }

    pub fn per_example_losses(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_input(data.x(0))?;
        (0..data.len()).into_par_iter().map(|i| self.loss(data.x(i), data.y(i))).collect()
    }

    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        Ok(tree_sum(&self.per_example_losses(data)?) / data.len() as f64)
    }

    /// Gradient of the mean loss over `indices` of `data` (all rows if `None`).
    pub fn mean_grad(&self, data: &Dataset, indices: Option<&[usize]>) -> Result<ParamVector> {
        let all: Vec<usize>;
        let idx = match indices {
            Some(i) => i,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        let grads: Vec<Vec<f64>> =
            idx.par_iter().map(|&i| self.grad_values(data.x(i), data.y(i))).collect::<Result<_>>()?;
        let mean = tree_mean_vectors(grads).ok_or(Error::EmptyDataset("gradient over no examples"))?;
        ParamVector::new(mean, self.params.layout().clone())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check_input(data.x(0))?;
        let hits: Vec<f64> = (0..data.len())
            .into_par_iter()
            .map(|i| Ok(if self.predict(data.x(i))? == data.y(i) { 1.0 } else { 0.0 }))
            .collect::<Result<_>>()?;
        Ok(tree_sum(&hits) / data.len() as f64)
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_names_and_sizes() {
        let l = MlpModel::layout_for(&[8, 32, 4]).unwrap();
        assert_eq!(l.dim(), 8 * 32 + 32 + 32 * 4 + 4);
        let labels: Vec<&str> = l.blocks().iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["mlp.0.w", "mlp.0.b", "mlp.1.w", "mlp.1.b"]);
    }

    #[test]
    fn zero_params_give_uniform_distribution() {
        let m = MlpModel::zeros(&[3, 5, 4]).unwrap();
        let p = m.predictive_dist(&[0.3, -1.0, 2.0]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_softmax_two_class_linear() {
        let layout = Arc::new(MlpModel::layout_for(&[2, 2]).unwrap());
        // class 0 reads x[0], class 1 has zero weights
        let params = ParamVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], layout).unwrap();
        let m = MlpModel::from_params(&[2, 2], params).unwrap();
        let p = m.predictive_dist(&[3f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15, "{p:?}");
    }

    #[test]
    fn probabilities_are_normalized() {
        let m = MlpModel::init(&[6, 10, 5], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let p = m.predictive_dist(&x).unwrap();
            assert!(p.iter().all(|v| *v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_class_has_zero_gradient() {
        let m = MlpModel::init(&[3, 4, 1], 2).unwrap();
        let g = m.per_example_grad(&[1.0, 2.0, -1.0], 0).unwrap();
        assert_eq!(g.norm_inf(), 0.0);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let m = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(matches!(m.predictive_dist(&[1.0]), Err(Error::Dimension { .. })));
    }

    fn fd_check(dims: &[usize], seed: u64) {
        let m = MlpModel::init(dims, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y = rng.gen_range(0..*dims.last().unwrap()) as u32;
        let g = m.per_example_grad(&x, y).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let i = rng.gen_range(0..g.len());
            let shifted = |s: f64| {
                let mut v = m.params().values().to_vec();
                v[i] += s;
                m.with_params(ParamVector::new(v, m.layout().clone()).unwrap()).unwrap().loss(&x, y).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let rel = (fd - g.values()[i]).abs() / g.values()[i].abs().max(1e-6);
            assert!(rel <= 1e-5, "coord {i}: analytic {} fd {fd} rel {rel:e}", g.values()[i]);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            fd_check(&[2, 8, 2], seed);
        }
        fd_check(&[4, 6, 5, 3], 9);
    }

    #[test]
    fn mean_gradient_is_mean_of_per_example() {
        let m = MlpModel::init(&[3, 7, 3], 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 9;
        let feats: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
        let d = Dataset::new("b", feats, labels, 3, 3).unwrap();
        let mean = m.mean_grad(&d, None).unwrap();
        let mut acc = vec![0.0; mean.len()];
        for (x, y) in d.iter() {
            for (a, g) in acc.iter_mut().zip(m.per_example_grad(x, y).unwrap().values()) {
                *a += g / n as f64;
            }
        }
        let diff = acc.iter().zip(mean.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "diff {diff:e}");
    }

    #[test]
    fn jacobian_contracts_to_gradient() {
        let m = MlpModel::init(&[3, 5, 4], 1).unwrap();
        let x = [0.2, -0.7, 1.1];
        let jac = m.logit_jacobian(&x).unwrap();
        let mut r = m.predictive_dist(&x).unwrap();
        r[2] -= 1.0;
        let g = m.per_example_grad(&x, 2).unwrap();
        for (i, gi) in g.values().iter().enumerate() {
            let via: f64 = (0..4).map(|c| r[c] * jac[c][i]).sum();
            assert!((via - gi).abs() < 1e-13);
        }
    }
}
