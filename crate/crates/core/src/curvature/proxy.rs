use crate::error::{Error, Result};
use crate::numkit::ParamVector;
use crate::registry::Registry;
use crate::toymodel::{Dataset, MlpModel};

use super::fisher::subsample_gradients;
use super::hessian::{FiniteDifferenceHessian, HessianEstimator};

/// Nonnegative per-coordinate curvature of the forget loss.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagCurvature {
    pub diag: ParamVector,
}

impl DiagCurvature {
    pub fn new(diag: ParamVector) -> Result<Self> {
        if let Some(i) = diag.values().iter().position(|v| *v < 0.0) {
            return Err(Error::Invalid(format!("curvature entry {i} is negative ({})", diag.values()[i])));
        }
        Ok(DiagCurvature { diag })
    }
}

pub trait CurvatureProxy: Send + Sync {
    fn name(&self) -> &'static str;
    fn diagonal(&self, model: &MlpModel, data: &Dataset, max_samples: usize, seed: u64) -> Result<DiagCurvature>;
}

/// Mean squared per-coordinate gradient.
pub struct FisherDiagonal;

/// Diagonal of the finite-difference Hessian, negative entries clamped to zero.
pub struct HessianDiagonal;

pub fn curvature_proxies() -> Registry<dyn CurvatureProxy> {
    Registry::new("curvature proxy")
        .with("fisher-diag", || Box::new(FisherDiagonal) as Box<dyn CurvatureProxy>)
        .with("hessian-diag", || Box::new(HessianDiagonal) as Box<dyn CurvatureProxy>)
}

impl CurvatureProxy for FisherDiagonal {
    fn name(&self) -> &'static str {
        "fisher-diag"
    }

    fn diagonal(&self, model: &MlpModel, data: &Dataset, max_samples: usize, seed: u64) -> Result<DiagCurvature> {
        let (_, grads) = subsample_gradients(model, data, max_samples, seed)?;
        let n = grads.len() as f64;
        let mut acc = vec![0.0; model.params().len()];
        for g in &grads {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v * v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        DiagCurvature::new(ParamVector::new(acc, model.layout().clone())?)
    }
}

impl CurvatureProxy for HessianDiagonal {
    fn name(&self) -> &'static str {
        "hessian-diag"
    }

    fn diagonal(&self, model: &MlpModel, data: &Dataset, max_samples: usize, seed: u64) -> Result<DiagCurvature> {
        let rows = super::fisher::subsample_order(data, max_samples, seed);
        let sub = data.subset(data.name.clone(), &rows).ok_or(Error::EmptyDataset("curvature data"))?;
        let h = FiniteDifferenceHessian.hessian(model, &sub)?;
        let diag = (0..h.nrows()).map(|i| h[(i, i)].max(0.0)).collect();
        DiagCurvature::new(ParamVector::new(diag, model.layout().clone())?)
    }
}

/// Diagonal empirical Fisher on `data`.
pub fn diag_curvature(model: &MlpModel, data: &Dataset, max_samples: usize, seed: u64) -> Result<DiagCurvature> {
    FisherDiagonal.diagonal(model, data, max_samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::empirical_fisher_blockwise;
    use crate::toymodel::gaussian_blobs;

    fn toy() -> (MlpModel, Dataset) {
        let model = MlpModel::init(&[3, 4, 3], 2).unwrap();
        let data = gaussian_blobs(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], 12, 0.8, 2, "c")
            .unwrap();
        (model, data)
    }

    #[test]
    fn one_example_gives_squared_gradient() {
        let (model, data) = toy();
        let one = data.subset("one", &[5]).unwrap();
        let c = diag_curvature(&model, &one, 10, 0).unwrap();
        let g = model.per_example_grad(one.x(0), one.y(0)).unwrap();
        for (a, b) in c.diag.values().iter().zip(g.values()) {
            assert_eq!(*a, b * b);
        }
    }

    #[test]
    fn agrees_with_fisher_diagonal() {
        let (model, data) = toy();
        let c = diag_curvature(&model, &data, 20, 3).unwrap();
        let f = empirical_fisher_blockwise(&model, &data, model.layout().clone(), 1e-3, 20, 3).unwrap();
        let dense = f.fisher.to_dense();
        for (i, v) in c.diag.values().iter().enumerate() {
            assert!((v - dense[(i, i)]).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_model_on_single_class_is_zero() {
        let model = MlpModel::zeros(&[2, 1]).unwrap();
        let data = Dataset::new("z", vec![1.0, 2.0], vec![0], 2, 1).unwrap();
        assert_eq!(diag_curvature(&model, &data, 4, 0).unwrap().diag.norm_inf(), 0.0);
    }

    #[test]
    fn hessian_proxy_is_nonnegative() {
        let (model, data) = toy();
        let c = curvature_proxies().get("hessian-diag").unwrap().diagonal(&model, &data, 16, 1).unwrap();
        assert!(c.diag.values().iter().all(|v| *v >= 0.0));
        assert!(curvature_proxies().get("nope").is_err());
    }
}
