use nalgebra::{DMatrix, DVector};

use crate::curvature::{cg_dense, DEFAULT_CG_TOL};
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Largest block solved by dense Cholesky under the `auto` strategy.
pub const AUTO_DIRECT_MAX: usize = 512;

/// Per-block compensation: given the damped curvature block `C`, the local
/// masked positions and their current weights `w`, returns
/// `(dw, lambda)` with `dw = -X S^{-1} w`, `lambda = S^{-1} w`,
/// `X = C^{-1} E`, `S = E^T X`.
pub trait CompensationSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve_block(&self, c: &DMatrix<f64>, masked: &[usize], w: &DVector<f64>, label: &str) -> Result<BlockSolution>;
}

#[derive(Clone, Debug)]
pub struct BlockSolution {
    pub delta: DVector<f64>,
    pub lambda: DVector<f64>,
    pub method: &'static str,
}

pub struct SchurSolver;

pub struct CgSolver {
    pub tol: f64,
}

/// Direct solves up to [`AUTO_DIRECT_MAX`], conjugate gradients beyond.
pub struct AutoSolver;

pub fn compensation_solvers() -> Registry<dyn CompensationSolver> {
    Registry::new("compensation solver")
        .with("schur", || Box::new(SchurSolver) as Box<dyn CompensationSolver>)
        .with("cg", || Box::new(CgSolver { tol: DEFAULT_CG_TOL }) as Box<dyn CompensationSolver>)
        .with("auto", || Box::new(AutoSolver) as Box<dyn CompensationSolver>)
}

fn selector(n: usize, masked: &[usize]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, masked.len());
    for (j, &i) in masked.iter().enumerate() {
        e[(i, j)] = 1.0;
    }
    e
}

fn finish(x: DMatrix<f64>, masked: &[usize], w: &DVector<f64>, label: &str, method: &'static str) -> Result<BlockSolution> {
    let s = DMatrix::from_fn(masked.len(), masked.len(), |r, c| x[(masked[r], c)]);
    let s = (&s + s.transpose()) * 0.5;
    let lambda = s
        .cholesky()
        .map(|ch| ch.solve(w))
        .ok_or_else(|| Error::Numeric(format!("Schur complement of block `{label}` is singular")))?;
    let delta = -(&x * &lambda);
    Ok(BlockSolution { delta, lambda, method })
}

impl CompensationSolver for SchurSolver {
    fn name(&self) -> &'static str {
        "schur"
    }

    fn solve_block(&self, c: &DMatrix<f64>, masked: &[usize], w: &DVector<f64>, label: &str) -> Result<BlockSolution> {
        let chol = c.clone().cholesky().ok_or_else(|| Error::NotSpd { label: label.to_string() })?;
        let x = chol.solve(&selector(c.nrows(), masked));
        finish(x, masked, w, label, "schur")
    }
}

impl CompensationSolver for CgSolver {
    fn name(&self) -> &'static str {
        "cg"
    }

    fn solve_block(&self, c: &DMatrix<f64>, masked: &[usize], w: &DVector<f64>, label: &str) -> Result<BlockSolution> {
        let n = c.nrows();
        let mut x = DMatrix::zeros(n, masked.len());
        for (j, &i) in masked.iter().enumerate() {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let (col, _) = cg_dense(c, &e, self.tol, 10 * n + 100, label)?;
            x.set_column(j, &col);
        }
        finish(x, masked, w, label, "cg")
    }
}

impl CompensationSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve_block(&self, c: &DMatrix<f64>, masked: &[usize], w: &DVector<f64>, label: &str) -> Result<BlockSolution> {
        if c.nrows() <= AUTO_DIRECT_MAX {
            SchurSolver.solve_block(c, masked, w, label)
        } else {
            CgSolver { tol: DEFAULT_CG_TOL }.solve_block(c, masked, w, label)
        }
    }
}
