//! Second-order accounting of the forget-loss change caused by masking plus compensation.
//!
//! With `g`, `H` the forget-loss gradient and Hessian at `theta_p`, `a_M` the
//! masked weights and `C` the complement:
//!
//! * mask-only term `S_mask = -g_M . a_M + 1/2 a_M^T H_MM a_M`
//! * `b = g_C - H_CM a_M`, `Q = H_CC + lambda_Q I`
//! * compensation term `f(x) = b . x + 1/2 x^T Q x`
//! * `u = Q^{-1/2} b`, `v = -Q^{1/2} x_obs`, so that `f(x_obs) = 1/2 |v - u|^2 - 1/2 |u|^2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curvature::HessianEstimator;
use crate::error::{Error, Result};
use crate::masking::MaskArtifact;
use crate::obs::CompensationResult;
use crate::toymodel::{Dataset, MlpModel};

pub const DEFAULT_Q_DAMPING: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgetBudget {
    pub s_mask: f64,
    /// `f(x_obs)` evaluated directly from `b` and `Q`.
    pub f_direct: f64,
    /// `f(x_obs)` evaluated as `1/2 |v - u|^2 - 1/2 |u|^2`.
    pub f_obs: f64,
    /// `-1/2 |u|^2`, the smallest value any compensation can reach.
    pub worst_case: f64,
    pub u_norm_sq: f64,
    /// `|b|^2 / mu_min(Q)`.
    pub rayleigh_bound: f64,
    /// `(|g_C| + |H_CM| |a_M|)^2 / mu_min(Q)`.
    pub spectral_bound: f64,
    /// `1/2 |v|^2 + |u| |v|`.
    pub upper_bound: f64,
    /// `|v| >= 2 |u|`, which forces `f_obs >= 0`.
    pub guarantee: bool,
    pub u_norm: f64,
    pub v_norm: f64,
    pub mu_min: f64,
    pub lambda_q: f64,
    /// `S_mask + f_obs`.
    pub predicted_delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_delta: Option<f64>,
    /// `|actual - predicted|`, the observed higher-order remainder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder_gap: Option<f64>,
    pub hessian: String,
    #[serde(skip)]
    pub b: Vec<f64>,
    #[serde(skip)]
    pub q: DMatrix<f64>,
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

/// `x . b + 1/2 x^T Q x`.
pub fn quadratic_f(b: &DVector<f64>, q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    b.dot(x) + 0.5 * x.dot(&(q * x))
}

/// Right-hand side of the completion-of-square identity:
/// `1/2 |Q^{1/2}(y + Q^{-1} x)|^2 - 1/2 |Q^{-1/2} x|^2`.
pub fn completed_square(q: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let eig = spd_eigen(q)?;
    let qinv_x = apply_power(&eig, x, -1.0);
    let shifted = y + qinv_x;
    let a = apply_power(&eig, &shifted, 0.5).norm_squared();
    let c = apply_power(&eig, x, -0.5).norm_squared();
    Ok(0.5 * a - 0.5 * c)
}

fn spd_eigen(q: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = q.clone().symmetric_eigen();
    let mu = eig.eigenvalues.min();
    if !(mu > 0.0) {
        return Err(Error::Numeric(format!(
            "damped forget Hessian on the complement is not positive definite (smallest eigenvalue {mu:e}); increase the damping"
        )));
    }
    Ok(eig)
}

/// `Q^p x` through the eigendecomposition.
fn apply_power(eig: &SymmetricEigen<f64, nalgebra::Dyn>, x: &DVector<f64>, p: f64) -> DVector<f64> {
    let coeffs = eig.eigenvectors.transpose() * x;
    let scaled = DVector::from_iterator(coeffs.len(), coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, m)| c * m.powf(p)));
    &eig.eigenvectors * scaled
}

/// Evaluates every budget quantity from an explicit gradient and Hessian.
///
/// `support` lists the masked coordinates, `a_m` their weights, and `x_obs`
/// the compensation restricted to the complement (complement order).
pub fn forget_budget(g: &[f64], h: &DMatrix<f64>, support: &[usize], a_m: &[f64], x_obs: &[f64], lambda_q: f64) -> Result<ForgetBudget> {
    let d = g.len();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::Dimension { what: "Hessian", expected: d, got: h.nrows() });
    }
    if a_m.len() != support.len() {
        return Err(Error::Dimension { what: "masked weights", expected: support.len(), got: a_m.len() });
    }
    let mut in_mask = vec![false; d];
    for &i in support {
        in_mask[i] = true;
    }
    let comp: Vec<usize> = (0..d).filter(|&i| !in_mask[i]).collect();
    if x_obs.len() != comp.len() {
        return Err(Error::Dimension { what: "complement update", expected: comp.len(), got: x_obs.len() });
    }
    let a = DVector::from_column_slice(a_m);
    let g_m = DVector::from_iterator(support.len(), support.iter().map(|&i| g[i]));
    let g_c = DVector::from_iterator(comp.len(), comp.iter().map(|&i| g[i]));
    let h_mm = DMatrix::from_fn(support.len(), support.len(), |r, c| h[(support[r], support[c])]);
    let h_cm = DMatrix::from_fn(comp.len(), support.len(), |r, c| h[(comp[r], support[c])]);
    let mut q = DMatrix::from_fn(comp.len(), comp.len(), |r, c| h[(comp[r], comp[c])]);
    for i in 0..comp.len() {
        q[(i, i)] += lambda_q;
    }

    let s_mask = -g_m.dot(&a) + 0.5 * a.dot(&(&h_mm * &a));
    let b = &g_c - &h_cm * &a;
    let x = DVector::from_column_slice(x_obs);
    let f_direct = quadratic_f(&b, &q, &x);

    let (u, v, mu_min) = if comp.is_empty() {
        (DVector::zeros(0), DVector::zeros(0), f64::INFINITY)
    } else {
        let eig = spd_eigen(&q)?;
        let u = apply_power(&eig, &b, -0.5);
        let v = -apply_power(&eig, &x, 0.5);
        (u, v, eig.eigenvalues.min())
    };
    let (un, vn) = (u.norm(), v.norm());
    let f_obs = 0.5 * (&v - &u).norm_squared() - 0.5 * u.norm_squared();
    let h_cm_norm = if h_cm.is_empty() { 0.0 } else { h_cm.clone().svd(false, false).singular_values.max() };
    let spectral = (g_c.norm() + h_cm_norm * a.norm()).powi(2) / mu_min;
    Ok(ForgetBudget {
        s_mask,
        f_direct,
        f_obs,
        worst_case: -0.5 * un * un,
        u_norm_sq: un * un,
        rayleigh_bound: b.norm_squared() / mu_min,
        spectral_bound: spectral,
        upper_bound: 0.5 * vn * vn + un * vn,
        guarantee: vn >= 2.0 * un,
        u_norm: un,
        v_norm: vn,
        mu_min,
        lambda_q,
        predicted_delta: s_mask + f_obs,
        actual_delta: None,
        remainder_gap: None,
        hessian: String::new(),
        b: b.as_slice().to_vec(),
        q,
        u: u.as_slice().to_vec(),
        v: v.as_slice().to_vec(),
    })
}

/// Budget for an actual unlearning run: derivatives of the forget loss at `theta_p`,
/// compared against the realized loss change at `theta_u`.
pub fn forget_gain_report(
    model_p: &MlpModel,
    theta_u: &MlpModel,
    mask: &MaskArtifact,
    comp: &CompensationResult,
    forget: &Dataset,
    lambda_q: f64,
    hessian: &dyn HessianEstimator,
) -> Result<ForgetBudget> {
    let d = model_p.params().len();
    if d > 2000 {
        return Err(Error::Invalid(format!("dense Hessians are limited to 2000 parameters, model has {d}")));
    }
    let g = model_p.mean_grad(forget, None)?.into_values();
    let h = hessian.hessian(model_p, forget)?;
    let support = mask.support().as_slice();
    let theta = model_p.params().values();
    let a_m: Vec<f64> = support.iter().map(|&i| theta[i]).collect();
    let x_obs: Vec<f64> = (0..d).filter(|i| !mask.support().contains(*i)).map(|i| comp.delta_w.values()[i]).collect();
    let mut budget = forget_budget(&g, &h, support, &a_m, &x_obs, lambda_q)?;
    let actual = theta_u.mean_loss(forget)? - model_p.mean_loss(forget)?;
    budget.actual_delta = Some(actual);
    budget.remainder_gap = Some((actual - budget.predicted_delta).abs());
    budget.hessian = hessian.name().to_string();
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5 + DMatrix::identity(n, n) * shift
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn completion_of_square_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 3, 10, 40] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let q = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let lhs = quadratic_f(&x, &q, &y);
            let rhs = completed_square(&q, &x, &y).unwrap();
            assert!(rel(lhs, rhs) <= 1e-10, "n={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn minimizer_attains_worst_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 12;
        let h = random_sym(&mut rng, n, 6.0);
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let support = vec![2, 7];
        let a_m = vec![0.4, -0.9];
        let comp: Vec<usize> = (0..n).filter(|i| !support.contains(i)).collect();
        let probe = forget_budget(&g, &h, &support, &a_m, &vec![0.0; comp.len()], 1e-3).unwrap();
        let b = DVector::from_column_slice(&probe.b);
        let x_star = -probe.q.clone().cholesky().unwrap().solve(&b);
        let at_min = forget_budget(&g, &h, &support, &a_m, x_star.as_slice(), 1e-3).unwrap();
        assert!(rel(at_min.f_direct, at_min.worst_case) <= 1e-8);
        assert!(rel(at_min.f_obs, at_min.worst_case) <= 1e-8);
    }

    #[test]
    fn no_complement_gradient_means_no_gain() {
        // with H_CM = 0 and g_C = 0, b vanishes
        let n = 6;
        let mut h = DMatrix::identity(n, n) * 2.0;
        h[(0, 0)] = 3.0;
        let g = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let x = vec![0.1, -0.2, 0.3, 0.0, 0.05];
        let r = forget_budget(&g, &h, &[0], &[1.0], &x, 1e-3).unwrap();
        assert_eq!(r.worst_case, 0.0);
        assert!((r.f_obs - 0.5 * r.v_norm * r.v_norm).abs() < 1e-14 && r.f_obs >= 0.0);
        assert!((r.s_mask - (-0.5 + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn bounds_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.gen_range(3..30);
            let h = random_sym(&mut rng, n, 0.5 * n as f64);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = rng.gen_range(1..n);
            let support: Vec<usize> = (0..k).map(|i| i * n / k).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let a_m: Vec<f64> = support.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = n - support.len();
            let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = forget_budget(&g, &h, &support, &a_m, &x, 1e-3).unwrap();
            assert!(rel(r.f_direct, r.f_obs) <= 1e-8);
            assert!(r.worst_case <= r.f_obs + 1e-12 && r.f_obs <= r.upper_bound + 1e-12);
            assert!(r.u_norm_sq <= r.rayleigh_bound * (1.0 + 1e-10));
            assert!(r.rayleigh_bound <= r.spectral_bound * (1.0 + 1e-10));
            if r.guarantee {
                assert!(r.f_obs >= -1e-12);
            }
            let b = DVector::from_column_slice(&r.b);
            for _ in 0..50 {
                let y = DVector::from_fn(c, |_, _| rng.gen_range(-3.0..3.0));
                assert!(quadratic_f(&b, &r.q, &y) >= r.worst_case - 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_q_is_reported() {
        let h = -DMatrix::identity(3, 3);
        let err = forget_budget(&[0.0; 3], &h, &[0], &[1.0], &[0.0, 0.0], 1e-3).unwrap_err();
        assert!(err.to_string().contains("increase the damping"), "{err}");
    }
}
