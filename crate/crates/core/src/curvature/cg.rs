use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::ParamVector;

use super::fisher::BlockFisher;

pub const DEFAULT_CG_TOL: f64 = 1e-8;

/// Conjugate gradients on one SPD system, stopping at `||A x - b|| <= tol ||b||`.
/// Returns the solution and the iteration count.
pub fn cg_dense(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize, label: &str) -> Result<(DVector<f64>, usize)> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("CG tolerance must be positive, got {tol}")));
    }
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = tol * bnorm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 1..=max_iter {
        let ap = a * &p;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::NotSpd { label: label.to_string() });
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            // confirm with the true residual; the recurrence drifts
            let true_r = (b - a * &x).norm();
            if true_r <= target {
                return Ok((x, it));
            }
            r = b - a * &x;
            p = r.clone();
            rr = r.dot(&r);
            continue;
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    let residual = (b - a * &x).norm() / bnorm;
    Err(Error::Convergence { label: label.to_string(), iterations: max_iter, residual })
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: ParamVector,
    pub iterations: Vec<usize>,
}

/// Solves `(F + lambda I) x = y` block by block with conjugate gradients.
pub fn cg_solve(c: &BlockFisher, y: &ParamVector, tol: f64, max_iter: usize) -> Result<CgSolution> {
    let layout = c.layout();
    if y.layout().as_ref() != layout.as_ref() {
        return Err(Error::Layout("right-hand side layout differs from the Fisher layout".into()));
    }
    let parts: Vec<(Vec<f64>, usize)> = (0..layout.len())
        .into_par_iter()
        .map(|b| {
            let a = c.damped_block(b);
            let rhs = DVector::from_column_slice(y.block(b));
            let (x, it) = cg_dense(&a, &rhs, tol, max_iter, &layout.block(b).label)?;
            Ok((x.as_slice().to_vec(), it))
        })
        .collect::<Result<_>>()?;
    let iterations = parts.iter().map(|p| p.1).collect();
    let values = parts.into_iter().flat_map(|p| p.0).collect();
    Ok(CgSolution { x: ParamVector::new(values, layout.clone())?, iterations })
}
