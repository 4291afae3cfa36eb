use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::{tree_reduce, ParamVector};
use crate::registry::Registry;
use crate::toymodel::{softmax, Dataset, MlpModel};

/// Dense `d x d` second-order model of the mean loss over a dataset.
pub trait HessianEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn hessian(&self, model: &MlpModel, data: &Dataset) -> Result<DMatrix<f64>>;
}

/// Central differences of the analytic gradient, step `1e-4 (1 + |theta_i|)`, symmetrized.
pub struct FiniteDifferenceHessian;

/// `(1/n) sum J^T (diag p - p p^T) J` with `J` the logit Jacobian; PSD by construction.
pub struct GaussNewtonHessian;

pub fn hessian_estimators() -> Registry<dyn HessianEstimator> {
    Registry::new("Hessian estimator")
        .with("exact-fd", || Box::new(FiniteDifferenceHessian) as Box<dyn HessianEstimator>)
        .with("gauss-newton", || Box::new(GaussNewtonHessian) as Box<dyn HessianEstimator>)
}

impl HessianEstimator for FiniteDifferenceHessian {
    fn name(&self) -> &'static str {
        "exact-fd"
    }

    fn hessian(&self, model: &MlpModel, data: &Dataset) -> Result<DMatrix<f64>> {
        let theta = model.params().values();
        let d = theta.len();
        let layout = model.layout().clone();
        let at = |i: usize, s: f64| -> Result<Vec<f64>> {
            let mut v = theta.to_vec();
            v[i] += s;
            let m = model.with_params(ParamVector::new(v, layout.clone())?)?;
            Ok(m.mean_grad(data, None)?.into_values())
        };
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|i| {
                let h = 1e-4 * (1.0 + theta[i].abs());
                let plus = at(i, h)?;
                let minus = at(i, -h)?;
                Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
            })
            .collect::<Result<_>>()?;
        let h = DMatrix::from_fn(d, d, |r, c| cols[c][r]);
        Ok((&h + h.transpose()) * 0.5)
    }
}

impl HessianEstimator for GaussNewtonHessian {
    fn name(&self) -> &'static str {
        "gauss-newton"
    }

    fn hessian(&self, model: &MlpModel, data: &Dataset) -> Result<DMatrix<f64>> {
        let d = model.params().len();
        let c = model.classes();
        let terms: Vec<DMatrix<f64>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let x = data.x(i);
                let rows = model.logit_jacobian(x)?;
                let j = DMatrix::from_fn(c, d, |r, k| rows[r][k]);
                let p = softmax(&model.logits(x)?);
                let a = DMatrix::from_fn(c, c, |r, k| if r == k { p[r] } else { 0.0 } - p[r] * p[k]);
                Ok(j.transpose() * a * j)
            })
            .collect::<Result<_>>()?;
        let n = terms.len() as f64;
        let sum = tree_reduce(terms, |a, b| a + b).ok_or(Error::EmptyDataset("Hessian over no examples"))?;
        let h = sum / n;
        Ok((&h + h.transpose()) * 0.5)
    }
}
