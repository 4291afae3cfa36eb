use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::layout::BlockLayout;
use super::vector::ParamVector;

/// Block-diagonal symmetric matrix, one dense block per layout block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMatrix {
    blocks: Vec<DMatrix<f64>>,
    layout: Arc<BlockLayout>,
}

impl BlockDiagMatrix {
    pub fn new(blocks: Vec<DMatrix<f64>>, layout: Arc<BlockLayout>) -> Result<Self> {
        if blocks.len() != layout.len() {
            return Err(Error::Dimension { what: "block count", expected: layout.len(), got: blocks.len() });
        }
        for (m, blk) in blocks.iter().zip(layout.blocks()) {
            if m.nrows() != blk.size || m.ncols() != blk.size {
                return Err(Error::Layout(format!(
                    "block `{}` is {}x{}, layout expects {}x{}",
                    blk.label,
                    m.nrows(),
                    m.ncols(),
                    blk.size,
                    blk.size
                )));
            }
            let scale = m.amax();
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * scale {
                return Err(Error::Invalid(format!(
                    "block `{}` is not symmetric (max |A - A^T| = {asym:e})",
                    blk.label
                )));
            }
        }
        Ok(BlockDiagMatrix { blocks, layout })
    }

    pub fn identity(layout: Arc<BlockLayout>) -> Self {
        Self::scaled_identity(layout, 1.0)
    }

    pub fn scaled_identity(layout: Arc<BlockLayout>, s: f64) -> Self {
        let blocks = layout.blocks().iter().map(|b| DMatrix::identity(b.size, b.size) * s).collect();
        BlockDiagMatrix { blocks, layout }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &DMatrix<f64> {
        &self.blocks[b]
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    /// Returns `A + s I`.
    pub fn add_diagonal(&self, s: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|m| {
                let mut m = m.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += s;
                }
                m
            })
            .collect();
        BlockDiagMatrix { blocks, layout: self.layout.clone() }
    }

    fn check_layout(&self, x: &ParamVector) -> Result<()> {
        if x.layout().as_ref() != self.layout.as_ref() {
            return Err(Error::Layout("vector layout differs from matrix layout".into()));
        }
        Ok(())
    }

    pub fn matvec(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_layout(x)?;
        let parts: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(b, m)| {
                let xb = DVector::from_column_slice(x.block(b));
                (m * xb).as_slice().to_vec()
            })
            .collect();
        ParamVector::new(parts.concat(), self.layout.clone())
    }

    /// Solves `A x = y` block by block with Cholesky factorizations.
    pub fn solve(&self, y: &ParamVector) -> Result<ParamVector> {
        self.check_layout(y)?;
        let parts: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(b, m)| {
                let chol = m.clone().cholesky().ok_or_else(|| Error::NotSpd {
                    label: self.layout.block(b).label.clone(),
                })?;
                let yb = DVector::from_column_slice(y.block(b));
                Ok(chol.solve(&yb).as_slice().to_vec())
            })
            .collect::<Result<_>>()?;
        ParamVector::new(parts.concat(), self.layout.clone())
    }

    /// Materializes the full `d x d` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (m, blk) in self.blocks.iter().zip(self.layout.blocks()) {
            out.view_mut((blk.offset, blk.offset), (blk.size, blk.size)).copy_from(m);
        }
        out
    }

    /// Smallest eigenvalue of each block.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|m| m.clone().symmetric_eigenvalues().min())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64 * 0.1)
    }

    fn layout(sizes: &[usize]) -> Arc<BlockLayout> {
        Arc::new(BlockLayout::from_sizes(sizes.iter().enumerate().map(|(i, s)| (format!("b{i}"), *s))).unwrap())
    }

    #[test]
    fn identity_matvec_returns_input() {
        let l = layout(&[2, 3]);
        let x = ParamVector::new(vec![1.0, -2.0, 3.5, 0.0, 7.0], l.clone()).unwrap();
        assert_eq!(BlockDiagMatrix::identity(l).matvec(&x).unwrap(), x);
    }

    #[test]
    fn two_by_two_matvec_by_hand() {
        let l = layout(&[2]);
        let a = BlockDiagMatrix::new(vec![DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])], l.clone()).unwrap();
        let x = ParamVector::new(vec![1.0, 1.0], l).unwrap();
        assert_eq!(a.matvec(&x).unwrap().values(), &[3.0, 3.0]);
    }

    #[test]
    fn matvec_matches_dense_materialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = layout(&[10, 6, 8]);
        let blocks = l.blocks().iter().map(|b| random_spd(&mut rng, b.size)).collect();
        let a = BlockDiagMatrix::new(blocks, l.clone()).unwrap();
        let x = ParamVector::new((0..24).map(|_| rng.gen_range(-2.0..2.0)).collect(), l).unwrap();
        let y = a.matvec(&x).unwrap();
        let dense = a.to_dense() * DVector::from_column_slice(x.values());
        let diff = y.values().iter().zip(dense.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn solve_two_by_two_inverse() {
        let l = layout(&[2]);
        let a = BlockDiagMatrix::new(vec![DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])], l.clone()).unwrap();
        let y = ParamVector::new(vec![1.0, 0.0], l).unwrap();
        let x = a.solve(&y).unwrap();
        // inverse of [[2,1],[1,2]] is [[2,-1],[-1,2]]/3
        assert!((x.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x.values()[1] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn solve_then_matvec_recovers_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = layout(&[12, 20]);
        let blocks = l.blocks().iter().map(|b| random_spd(&mut rng, b.size)).collect();
        let a = BlockDiagMatrix::new(blocks, l.clone()).unwrap();
        let y = ParamVector::new((0..32).map(|_| rng.gen_range(-5.0..5.0)).collect(), l).unwrap();
        let x = a.solve(&y).unwrap();
        let r = a.matvec(&x).unwrap().sub(&y).unwrap().norm_inf();
        assert!(r <= 1e-9 * (1.0 + y.norm_inf()), "residual {r}");
    }

    #[test]
    fn solve_names_non_spd_block() {
        let l = layout(&[1, 2]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let a = BlockDiagMatrix::new(vec![DMatrix::identity(1, 1), bad], l.clone()).unwrap();
        let err = a.solve(&ParamVector::zeros(l)).unwrap_err();
        assert!(matches!(err, Error::NotSpd { ref label } if label == "b1"), "{err}");
    }

    #[test]
    fn layout_mismatch_is_structural_error() {
        let a = BlockDiagMatrix::identity(layout(&[2, 2]));
        let x = ParamVector::zeros(layout(&[4]));
        assert!(matches!(a.matvec(&x), Err(Error::Layout(_))));
    }
}
