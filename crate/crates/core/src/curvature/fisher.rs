use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::{BlockDiagMatrix, BlockLayout, ParamVector};
use crate::toymodel::{Dataset, MlpModel};

pub const DEFAULT_DAMPING: f64 = 1e-3;
pub const DEFAULT_MAX_SAMPLES: usize = 1024;

/// Empirical Fisher blocks with damping kept separate until use.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockFisher {
    pub fisher: BlockDiagMatrix,
    pub lambda: f64,
    pub n: usize,
    pub source_digest: String,
}

/// Sidecar metadata written next to the serialized Fisher blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMeta {
    pub lambda: f64,
    pub n: usize,
    pub source_digest: String,
}

impl BlockFisher {
    pub fn new(fisher: BlockDiagMatrix, lambda: f64, n: usize, source_digest: String) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("damping must be positive, got {lambda}")));
        }
        Ok(BlockFisher { fisher, lambda, n, source_digest })
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        self.fisher.layout()
    }

    pub fn meta(&self) -> FisherMeta {
        FisherMeta { lambda: self.lambda, n: self.n, source_digest: self.source_digest.clone() }
    }

    /// `F + lambda I`.
    pub fn damped(&self) -> BlockDiagMatrix {
        self.fisher.add_diagonal(self.lambda)
    }

    pub fn damped_block(&self, b: usize) -> DMatrix<f64> {
        let mut m = self.fisher.block(b).clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.lambda;
        }
        m
    }

    /// `(F + lambda I) x` without materializing the damped matrix.
    pub fn matvec(&self, x: &ParamVector) -> Result<ParamVector> {
        let fx = self.fisher.matvec(x)?;
        let values = fx.values().iter().zip(x.values()).map(|(f, v)| f + self.lambda * v).collect();
        ParamVector::new(values, self.layout().clone())
    }
}

/// Indices of the rows used for curvature estimates: the first `max_samples`
/// rows after sorting by a seeded hash of each row's content.
///
/// The order depends on row contents only, so permuting the dataset leaves
/// the selection and its summation order unchanged.
pub fn subsample_order(data: &Dataset, max_samples: usize, seed: u64) -> Vec<usize> {
    let mut keyed: Vec<([u8; 32], usize)> = (0..data.len()).map(|i| (data.row_key(i, seed), i)).collect();
    keyed.sort();
    keyed.into_iter().take(max_samples).map(|(_, i)| i).collect()
}

fn subsample_digest(data: &Dataset, rows: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update((data.dim() as u64).to_le_bytes());
    for &i in rows {
        for v in data.x(i) {
            h.update(v.to_le_bytes());
        }
        h.update(data.y(i).to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub(crate) fn subsample_gradients(
    model: &MlpModel,
    data: &Dataset,
    max_samples: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    if max_samples == 0 {
        return Err(Error::Invalid("max_samples must be at least 1".into()));
    }
    let rows = subsample_order(data, max_samples, seed);
    let grads = rows
        .par_iter()
        .map(|&i| model.per_example_grad(data.x(i), data.y(i)).map(ParamVector::into_values))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, grads))
}

/// Block-wise empirical Fisher `(1/n) sum g g^T` of the loss gradients at the true labels.
///
/// `layout` may refine the model's own layout (for example after capping
/// block sizes) but must cover the same number of parameters.
pub fn empirical_fisher_blockwise(
    model: &MlpModel,
    data: &Dataset,
    layout: Arc<BlockLayout>,
    lambda: f64,
    max_samples: usize,
    seed: u64,
) -> Result<BlockFisher> {
    if layout.dim() != model.params().len() {
        return Err(Error::Dimension { what: "Fisher layout", expected: model.params().len(), got: layout.dim() });
    }
    let (rows, grads) = subsample_gradients(model, data, max_samples, seed)?;
    let n = rows.len();
    let blocks: Vec<DMatrix<f64>> = layout
        .blocks()
        .par_iter()
        .map(|blk| {
            let g = DMatrix::from_fn(n, blk.size, |r, c| grads[r][blk.offset + c]);
            let f = g.transpose() * &g / n as f64;
            (&f + f.transpose()) * 0.5
        })
        .collect();
    let fisher = BlockDiagMatrix::new(blocks, layout)?;
    BlockFisher::new(fisher, lambda, n, subsample_digest(data, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::gaussian_blobs;

    fn toy() -> (MlpModel, Dataset) {
        let model = MlpModel::init(&[3, 4, 2], 6).unwrap();
        let data = gaussian_blobs(&[vec![1.0, 0.0, -1.0], vec![-1.0, 0.5, 0.0]], 30, 1.0, 6, "fisher").unwrap();
        (model, data)
    }

    #[test]
    fn single_example_is_outer_product() {
        let (model, data) = toy();
        let one = data.subset("one", &[3]).unwrap();
        let f = empirical_fisher_blockwise(&model, &one, model.layout().clone(), 1e-3, 10, 0).unwrap();
        let g = model.per_example_grad(one.x(0), one.y(0)).unwrap();
        let dense = f.fisher.to_dense();
        for blk in model.layout().blocks() {
            for i in blk.range() {
                for j in blk.range() {
                    let want = g.values()[i] * g.values()[j];
                    assert!((dense[(i, j)] - want).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn two_examples_average_outer_products() {
        let layout = MlpModel::layout_for(&[1, 2]).unwrap();
        assert_eq!(layout.dim(), 4);
        let model = MlpModel::init(&[1, 2], 3).unwrap();
        let data = Dataset::new("two", vec![0.7, -1.3], vec![0, 1], 1, 2).unwrap();
        let f = empirical_fisher_blockwise(&model, &data, Arc::new(BlockLayout::single(4, "all").unwrap()), 1e-3, 8, 1)
            .unwrap();
        let g1 = model.per_example_grad(data.x(0), 0).unwrap().into_values();
        let g2 = model.per_example_grad(data.x(1), 1).unwrap().into_values();
        for i in 0..4 {
            for j in 0..4 {
                let want = 0.5 * (g1[i] * g1[j] + g2[i] * g2[j]);
                assert!((f.fisher.block(0)[(i, j)] - want).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn damped_blocks_are_positive_definite() {
        let (model, data) = toy();
        let f = empirical_fisher_blockwise(&model, &data, model.layout().clone(), 1e-3, 1024, 2).unwrap();
        for e in f.fisher.min_eigenvalues() {
            assert!(e >= -1e-10);
        }
        for e in f.damped().min_eigenvalues() {
            assert!(e >= 1e-3 - 1e-10);
        }
    }

    #[test]
    fn permuting_the_dataset_changes_nothing() {
        let (model, data) = toy();
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.reverse();
        idx.swap(3, 17);
        let shuffled = data.subset("perm", &idx).unwrap();
        let a = empirical_fisher_blockwise(&model, &data, model.layout().clone(), 1e-3, 40, 9).unwrap();
        let b = empirical_fisher_blockwise(&model, &shuffled, model.layout().clone(), 1e-3, 40, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lazy_damping_matches_materialized() {
        let (model, data) = toy();
        let f = empirical_fisher_blockwise(&model, &data, model.layout().clone(), 0.25, 64, 0).unwrap();
        let x = model.params().clone();
        let a = f.matvec(&x).unwrap();
        let b = f.damped().matvec(&x).unwrap();
        assert!(a.sub(&b).unwrap().norm_inf() <= 1e-14);
    }
}
