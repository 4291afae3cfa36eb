//! Block-wise damped empirical Fisher, diagonal curvature proxies, dense
//! Hessian estimates and conjugate-gradient solves.

mod cg;
mod fisher;
mod hessian;
mod proxy;

pub use cg::{cg_dense, cg_solve, CgSolution, DEFAULT_CG_TOL};
pub use fisher::{
    empirical_fisher_blockwise, subsample_order, BlockFisher, FisherMeta, DEFAULT_DAMPING, DEFAULT_MAX_SAMPLES,
};
pub use hessian::{hessian_estimators, FiniteDifferenceHessian, GaussNewtonHessian, HessianEstimator};
pub use proxy::{curvature_proxies, diag_curvature, CurvatureProxy, DiagCurvature, FisherDiagonal, HessianDiagonal};
