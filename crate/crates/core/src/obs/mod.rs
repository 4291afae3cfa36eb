//! Group-OBS compensation: the minimum-curvature update that zeroes the
//! masked coordinates, its multipliers, and assembly of the unlearned model.

mod solver;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::BlockFisher;
use crate::error::{Error, Result};
use crate::masking::MaskArtifact;
use crate::numkit::ParamVector;

pub use solver::{compensation_solvers, AutoSolver, BlockSolution, CgSolver, CompensationSolver, SchurSolver, AUTO_DIRECT_MAX};

/// Largest masked-coordinate residue that assembly will round to zero.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationResult {
    /// Full update; equals `-theta_p` on the mask.
    pub delta_w: ParamVector,
    /// One multiplier per masked coordinate, in increasing coordinate order.
    pub lambda_m: Vec<f64>,
    pub method: String,
    /// `||C_p dw + E_M lambda||_inf`.
    pub kkt_residual_inf: f64,
}

/// JSON sidecar fields of a serialized compensation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationMeta {
    pub lambda_m: Vec<f64>,
    pub method: String,
    pub kkt_residual_inf: f64,
}

impl CompensationResult {
    pub fn meta(&self) -> CompensationMeta {
        CompensationMeta {
            lambda_m: self.lambda_m.clone(),
            method: self.method.clone(),
            kkt_residual_inf: self.kkt_residual_inf,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnOutput {
    pub theta_u: ParamVector,
    pub mask_digest: String,
}

fn check_dims(c_p: &BlockFisher, theta_p: &ParamVector, mask: &MaskArtifact) -> Result<()> {
    if mask.d() != theta_p.len() {
        return Err(Error::Dimension { what: "mask dimension", expected: theta_p.len(), got: mask.d() });
    }
    if c_p.layout().dim() != theta_p.len() {
        return Err(Error::Dimension { what: "curvature dimension", expected: theta_p.len(), got: c_p.layout().dim() });
    }
    Ok(())
}

/// `C_p dw + E_M lambda`, the stationarity residual.
pub fn stationarity_residual(c_p: &BlockFisher, delta_w: &ParamVector, mask: &MaskArtifact, lambda_m: &[f64]) -> Result<Vec<f64>> {
    let dw = delta_w.relayout(c_p.layout().clone())?;
    let mut r = c_p.matvec(&dw)?.into_values();
    if lambda_m.len() != mask.k() {
        return Err(Error::Dimension { what: "multipliers", expected: mask.k(), got: lambda_m.len() });
    }
    for (&i, l) in mask.support().as_slice().iter().zip(lambda_m) {
        r[i] += l;
    }
    Ok(r)
}

/// Solves `min 1/2 dw^T C_p dw  s.t.  E_M^T dw + w_M = 0` block by block.
pub fn group_obs_solve(
    c_p: &BlockFisher,
    theta_p: &ParamVector,
    mask: &MaskArtifact,
    solver: &dyn CompensationSolver,
) -> Result<CompensationResult> {
    check_dims(c_p, theta_p, mask)?;
    let layout = c_p.layout().clone();
    let support = mask.support().as_slice();
    let tasks: Vec<(usize, Vec<usize>)> = layout
        .blocks()
        .iter()
        .enumerate()
        .filter_map(|(b, blk)| {
            let local: Vec<usize> =
                support.iter().filter(|&&i| blk.range().contains(&i)).map(|&i| i - blk.offset).collect();
            (!local.is_empty()).then_some((b, local))
        })
        .collect();
    let solved: Vec<BlockSolution> = tasks
        .par_iter()
        .map(|(b, local)| {
            let blk = layout.block(*b);
            let w = DVector::from_iterator(local.len(), local.iter().map(|&i| theta_p.values()[blk.offset + i]));
            solver.solve_block(&c_p.damped_block(*b), local, &w, &blk.label)
        })
        .collect::<Result<_>>()?;

    let mut delta = vec![0.0; theta_p.len()];
    let mut lambda_m = Vec::with_capacity(mask.k());
    let mut methods: Vec<&str> = Vec::new();
    for ((b, local), sol) in tasks.iter().zip(&solved) {
        let off = layout.block(*b).offset;
        delta[off..off + layout.block(*b).size].copy_from_slice(sol.delta.as_slice());
        lambda_m.extend(sol.lambda.iter());
        for &i in local {
            let w = theta_p.values()[off + i];
            let residue = (delta[off + i] + w).abs();
            if residue > FEASIBILITY_TOL * (1.0 + w.abs()) {
                return Err(Error::Feasibility { index: off + i, residue });
            }
            // the constraint holds analytically; remove rounding residue
            delta[off + i] = -w;
        }
        if !methods.contains(&sol.method) {
            methods.push(sol.method);
        }
    }
    let method = match methods.as_slice() {
        [] => solver.name().to_string(),
        [m] => m.to_string(),
        _ => methods.join("+"),
    };
    let delta_w = ParamVector::new(delta, theta_p.layout().clone())?;
    let r = stationarity_residual(c_p, &delta_w, mask, &lambda_m)?;
    let kkt_residual_inf = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(CompensationResult { delta_w, lambda_m, method, kkt_residual_inf })
}

/// `theta_u = theta_p + dw` with masked coordinates set to exactly zero.
pub fn apply_unlearn(theta_p: &ParamVector, comp: &CompensationResult, mask: &MaskArtifact) -> Result<UnlearnOutput> {
    if comp.delta_w.len() != theta_p.len() || mask.d() != theta_p.len() {
        return Err(Error::Dimension { what: "update length", expected: theta_p.len(), got: comp.delta_w.len() });
    }
    let mut theta = theta_p.add(&comp.delta_w)?.into_values();
    for &i in mask.support().as_slice() {
        if theta[i].abs() > FEASIBILITY_TOL {
            return Err(Error::Feasibility { index: i, residue: theta[i].abs() });
        }
        theta[i] = 0.0;
    }
    Ok(UnlearnOutput { theta_u: ParamVector::new(theta, theta_p.layout().clone())?, mask_digest: mask.digest_hex() })
}

/// Baseline that zeroes the masked weights without compensation.
pub fn mask_only(theta_p: &ParamVector, mask: &MaskArtifact) -> Result<ParamVector> {
    let mut v = theta_p.values().to_vec();
    for &i in mask.support().as_slice() {
        v[i] = 0.0;
    }
    ParamVector::new(v, theta_p.layout().clone())
}

/// `1/2 dw^T C_p dw`.
pub fn quadratic_cost(c_p: &BlockFisher, dw: &ParamVector) -> Result<f64> {
    let dw = dw.relayout(c_p.layout().clone())?;
    let cd = c_p.matvec(&dw)?;
    Ok(0.5 * dw.values().iter().zip(cd.values()).map(|(a, b)| a * b).sum::<f64>())
}
