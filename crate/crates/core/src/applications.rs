//! Two uses of the optimal-Gaussian machinery: covariance design for a
//! two-receiver broadcast channel with a private message, and the
//! LMMSE-based lower bound on mutual information.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{EeiError, Result};
use crate::gaussmat::{
    check_dims, eigh, gaussian_conditional_cov, log_det_spd, markov_residual, min_eigenvalue,
    project_psd, spd_inverse, symmetrize, CovMatrix, MarkovTriple,
};
use crate::verify_oracle::{convolve_density, entropy_quadrature, GridDensity};

/// Receiver noises `Y_k = X + Z_k`, the MSE threshold `R` (only its trace
/// binds), and the ray `t·Σ₀` along which `Σ_X` is searched.
#[derive(Debug, Clone, Serialize)]
pub struct BroadcastInstance {
    pub s_z1: CovMatrix,
    pub s_z2: CovMatrix,
    pub r: CovMatrix,
    pub direction: CovMatrix,
}

impl BroadcastInstance {
    /// `direction` defaults to `r`.
    pub fn new(
        s_z1: CovMatrix,
        s_z2: CovMatrix,
        r: CovMatrix,
        direction: Option<CovMatrix>,
    ) -> Result<Self> {
        check_dims(&s_z1, &s_z2)?;
        check_dims(&s_z1, &r)?;
        s_z1.require_pd("Σ_Z1")?;
        s_z2.require_pd("Σ_Z2")?;
        if r.trace() <= 0.0 {
            return Err(EeiError::InvalidInput("Tr R must be positive".into()));
        }
        let direction = direction.unwrap_or_else(|| r.clone());
        check_dims(&s_z1, &direction)?;
        if direction.trace() <= 0.0 {
            return Err(EeiError::InvalidInput("search direction is zero".into()));
        }
        Ok(BroadcastInstance {
            s_z1,
            s_z2,
            r,
            direction,
        })
    }
}

/// Designed input covariance with receiver MSE traces and the certificate
/// that the receiver-1 posterior is unchanged by the noise split.
#[derive(Debug, Clone, Serialize)]
pub struct BroadcastDesign {
    pub s_x_star: CovMatrix,
    pub t_star: f64,
    pub trace_mse_rx1: f64,
    pub trace_mse_rx2: f64,
    /// Scale constant of the construction, realized as `t_star`.
    pub alpha: f64,
    pub multiplier: CovMatrix,
    pub s_z1_tilde: CovMatrix,
    /// Markov residual of `(Σ_X*; Σ_X*+Σ_Z̃1; Σ_X*+Σ_Z1)`.
    pub markov_residual: f64,
    /// `λ_min(Σ_Z2 − Σ_Z̃1)`; nonnegative when receiver 2 is degraded.
    pub order_residual: f64,
    pub bisection_iterations: usize,
}

fn trace_mse(s_x: &DMatrix<f64>, s_z: &CovMatrix) -> Result<f64> {
    let sx = CovMatrix::from_projection(s_x)?;
    Ok(gaussian_conditional_cov(&sx, s_z)?.trace())
}

/// Solves `Tr Σ_{X|Y2}(t) = Tr R` along `Σ(t) = t·Σ₀` by bisection.
///
/// The receiver-2 MSE trace is increasing in `t` and bounded by `Tr Σ_Z2`,
/// so the threshold must lie below that bound. Receiver 1 must then meet the
/// threshold too, which holds automatically when `Σ_Z1 ⪯ Σ_Z2` and is
/// checked otherwise.
pub fn design_private_message(inst: &BroadcastInstance) -> Result<BroadcastDesign> {
    let target = inst.r.trace();
    let limit = inst.s_z2.trace();
    if target >= limit {
        return Err(EeiError::ThresholdUnreachable {
            threshold: target,
            limit,
        });
    }
    let dir = inst.direction.matrix();
    let g = |t: f64| trace_mse(&(dir * t), &inst.s_z2);

    let mut hi = 1.0;
    while g(hi)? < target {
        hi *= 2.0;
        if hi > 1e15 {
            // a singular direction saturates below Tr Σ_Z2
            return Err(EeiError::ThresholdUnreachable {
                threshold: target,
                limit: g(hi)?,
            });
        }
    }
    let mut lo = 0.0;
    let mut iterations = 0;
    while iterations < 200 && hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let t_star = 0.5 * (lo + hi);
    let x_star = dir * t_star;
    let rx2 = g(t_star)?;
    let rx1 = trace_mse(&x_star, &inst.s_z1)?;
    if rx1 > target + 1e-9 {
        return Err(EeiError::SeparationFailed {
            rx1,
            threshold: target,
        });
    }

    // K = [P_N (Σ_Z2⁻¹ − Σ_Z1⁻¹) P_N]₊ on the null space N of Σ_X*
    let n = x_star.nrows();
    let (vals, vecs) = eigh(&x_star);
    let cut = 1e-12 * vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if vals[i] <= cut {
            let v = vecs.column(i);
            p += v * v.transpose();
        }
    }
    let z1_inv = spd_inverse(inst.s_z1.matrix())
        .ok_or_else(|| EeiError::SingularCovariance("Σ_Z1".into()))?;
    let z2_inv = spd_inverse(inst.s_z2.matrix())
        .ok_or_else(|| EeiError::SingularCovariance("Σ_Z2".into()))?;
    let k = project_psd(&symmetrize(&(&p * (z2_inv - &z1_inv) * &p)));
    let z1_tilde = spd_inverse(&(z1_inv + &k))
        .ok_or_else(|| EeiError::SingularCovariance("Σ_Z1⁻¹ + K".into()))?;
    let s_x_star = CovMatrix::from_projection(&x_star)?;
    let triple = MarkovTriple::new(
        s_x_star.clone(),
        CovMatrix::from_projection(&(&x_star + &z1_tilde))?,
        CovMatrix::from_projection(&(&x_star + inst.s_z1.matrix()))?,
    )?;
    let markov = markov_residual(&triple)?;
    let order = min_eigenvalue(&(inst.s_z2.matrix() - &z1_tilde));

    Ok(BroadcastDesign {
        s_x_star,
        t_star,
        trace_mse_rx1: rx1,
        trace_mse_rx2: rx2,
        alpha: t_star,
        multiplier: CovMatrix::from_projection(&k)?,
        s_z1_tilde: CovMatrix::from_projection(&z1_tilde)?,
        markov_residual: markov,
        order_residual: order,
        bisection_iterations: iterations,
    })
}

/// LMMSE error covariance `Σ_X − Σ_X(Σ_X+Σ_Z)⁻¹Σ_X`.
pub fn lmmse_matrix(s_x: &CovMatrix, s_z: &CovMatrix) -> Result<CovMatrix> {
    gaussian_conditional_cov(s_x, s_z)
}

/// `½ ln det Σ_X − ½ ln det(LMMSE)` for noise covariance `r`.
///
/// Since `det LMMSE = det Σ_X det r / det(Σ_X + r)`, this is the Gaussian
/// channel mutual information `½ ln(det(Σ_X + r)/det r)`, and by the
/// worst-noise property a lower bound for any noise of covariance `r`.
pub fn mi_lower_bound(s_x: &CovMatrix, r: &CovMatrix) -> Result<f64> {
    check_dims(s_x, r)?;
    r.require_pd("r")?;
    let e = lmmse_matrix(s_x, r)?;
    let ld_e = log_det_spd(e.matrix()).ok_or_else(|| {
        EeiError::SingularCovariance("the LMMSE matrix is singular (Σ_X singular?)".into())
    })?;
    let ld_x = log_det_spd(s_x.matrix())
        .ok_or_else(|| EeiError::SingularCovariance("Σ_X must be positive definite".into()))?;
    Ok(0.5 * (ld_x - ld_e))
}

/// `I(X_G; X_G + Z) = h(X_G + Z) − h(Z)` for scalar Gaussian input of
/// variance `s2_x` and gridded noise density `noise`.
pub fn quadrature_mi_gaussian_input(noise: &GridDensity, s2_x: f64) -> Result<f64> {
    let out = convolve_density(noise, s2_x)?;
    Ok(entropy_quadrature(&out)?.value - entropy_quadrature(noise)?.value)
}
