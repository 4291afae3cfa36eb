use serde::{Deserialize, Serialize};

use crate::curvature::BlockFisher;
use crate::error::{Error, Result};
use crate::masking::MaskArtifact;
use crate::numkit::ParamVector;
use crate::obs::{stationarity_residual, CompensationResult};

pub const DEFAULT_REAL_TOL: f64 = 1e-6;

/// Residuals of the three linear equalities that certify an unlearning update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// `theta_u - theta_p - dw`
    #[serde(skip)]
    pub r_assembly: Vec<f64>,
    /// `E_M^T dw + w_M`
    #[serde(skip)]
    pub r_feasibility: Vec<f64>,
    /// `C_p dw + E_M lambda`
    #[serde(skip)]
    pub r_stationarity: Vec<f64>,
    pub assembly_inf: f64,
    pub feasibility_inf: f64,
    pub stationarity_inf: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    // NaN propagates as a failure
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

pub fn check_kkt(
    theta_p: &ParamVector,
    theta_u: &ParamVector,
    comp: &CompensationResult,
    c_p: &BlockFisher,
    mask: &MaskArtifact,
    tol: f64,
) -> Result<KktCertificate> {
    let d = theta_p.len();
    for (what, n) in [
        ("unlearned parameters", theta_u.len()),
        ("update", comp.delta_w.len()),
        ("curvature", c_p.layout().dim()),
        ("mask", mask.d()),
    ] {
        if n != d {
            return Err(Error::Dimension { what, expected: d, got: n });
        }
    }
    let (tp, tu, dw) = (theta_p.values(), theta_u.values(), comp.delta_w.values());
    let r_assembly: Vec<f64> = (0..d).map(|i| tu[i] - tp[i] - dw[i]).collect();
    let r_feasibility: Vec<f64> = mask.support().as_slice().iter().map(|&i| dw[i] + tp[i]).collect();
    let r_stationarity = stationarity_residual(c_p, &comp.delta_w, mask, &comp.lambda_m)?;
    let (a, f, s) = (inf_norm(&r_assembly), inf_norm(&r_feasibility), inf_norm(&r_stationarity));
    let pass = a <= tol && f <= tol && s <= tol;
    Ok(KktCertificate {
        r_assembly,
        r_feasibility,
        r_stationarity,
        assembly_inf: a,
        feasibility_inf: f,
        stationarity_inf: s,
        tolerance: tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::IndexSet;
    use crate::numkit::{BlockDiagMatrix, BlockLayout};
    use crate::obs::{apply_unlearn, group_obs_solve, SchurSolver};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn setup() -> (BlockFisher, ParamVector, MaskArtifact) {
        let layout = Arc::new(BlockLayout::from_sizes([("a", 3), ("b", 2)]).unwrap());
        let f = BlockDiagMatrix::new(
            vec![
                DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 1.5]),
                DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 0.7]),
            ],
            layout.clone(),
        )
        .unwrap();
        let c = BlockFisher::new(f, 1e-3, 1, String::new()).unwrap();
        let theta = ParamVector::new(vec![0.3, -0.8, 1.2, 0.5, -0.1], layout).unwrap();
        let m = MaskArtifact::new(5, IndexSet::all(5), IndexSet::new(vec![1, 3])).unwrap();
        (c, theta, m)
    }

    #[test]
    fn honest_update_passes_tightly() {
        let (c, theta, m) = setup();
        let comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
        let u = apply_unlearn(&theta, &comp, &m).unwrap();
        let cert = check_kkt(&theta, &u.theta_u, &comp, &c, &m, DEFAULT_REAL_TOL).unwrap();
        assert!(cert.pass);
        assert!(cert.assembly_inf <= 1e-9 && cert.feasibility_inf <= 1e-9 && cert.stationarity_inf <= 1e-9);
    }

    #[test]
    fn perturbed_output_fails_assembly() {
        let (c, theta, m) = setup();
        let comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
        let u = apply_unlearn(&theta, &comp, &m).unwrap();
        let mut v = u.theta_u.values().to_vec();
        v[4] += 1e-3;
        let bad = ParamVector::new(v, theta.layout().clone()).unwrap();
        let cert = check_kkt(&theta, &bad, &comp, &c, &m, DEFAULT_REAL_TOL).unwrap();
        assert!(!cert.pass);
        assert!(cert.assembly_inf >= 1e-3 - 1e-12);
    }

    #[test]
    fn perturbed_multiplier_fails_stationarity() {
        let (c, theta, m) = setup();
        let mut comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
        let u = apply_unlearn(&theta, &comp, &m).unwrap();
        comp.lambda_m[1] += 1e-3;
        let cert = check_kkt(&theta, &u.theta_u, &comp, &c, &m, DEFAULT_REAL_TOL).unwrap();
        assert!(!cert.pass && cert.stationarity_inf >= 1e-3 - 1e-12);
    }

    #[test]
    fn empty_mask_gives_exact_zeros() {
        let (c, theta, _) = setup();
        let m = MaskArtifact::new(5, IndexSet::all(5), IndexSet::default()).unwrap();
        let comp = group_obs_solve(&c, &theta, &m, &SchurSolver).unwrap();
        let cert = check_kkt(&theta, &theta, &comp, &c, &m, DEFAULT_REAL_TOL).unwrap();
        assert!(cert.pass);
        assert_eq!((cert.assembly_inf, cert.feasibility_inf, cert.stationarity_inf), (0.0, 0.0, 0.0));
    }
}
