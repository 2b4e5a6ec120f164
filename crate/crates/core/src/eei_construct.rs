//! Optimal Gaussian covariances for the extremal entropy inequality and the
//! multiplier constructions that certify them.
//!
//! Two objectives appear throughout, both over Gaussian `X` with `Σ_X ⪯ R`:
//!
//! - `F3(Σ) = h(Σ) − μ h(Σ + Σ_W)`
//! - `F4(Σ) = h(Σ + Σ_W) − μ h(Σ + Σ_V)`
//!
//! [`construct_l`] builds the multiplier `L` that shrinks a given `Σ_X` to a
//! dominating `Σ_X* ⪯ Σ_X`; [`construct_k`] builds `K` for a noise split
//! `Σ_V = Σ_W̃ + Σ_Ṽ + Σ_V′`. Each returns a [`ConstructionCertificate`]
//! whose residuals are computed from the assembled matrices rather than
//! assumed.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{EeiError, Result};
use crate::gaussmat::{
    check_dims, eigh, gaussian_entropy, log_det_spd, map_spectrum, markov_residual, min_eigenvalue,
    project_psd, simdiag, spd_inverse, spectral_scale, symmetrize, CovMatrix, MarkovTriple,
};

/// Absolute slack on the `d_W` threshold comparisons; the zero branch wins
/// at the boundary, where both branch formulas agree.
const THRESHOLD_TOL: f64 = 1e-12;

/// Problem data: `μ > 1`, noise `Σ_W ≻ 0`, optional second noise `Σ_V ≻ 0`,
/// and the constraint `R ≻ 0`.
#[derive(Debug, Clone, Serialize)]
pub struct EEIInstance {
    pub mu: f64,
    pub s_w: CovMatrix,
    pub s_v: Option<CovMatrix>,
    pub r: CovMatrix,
}

impl EEIInstance {
    pub fn new(mu: f64, s_w: CovMatrix, s_v: Option<CovMatrix>, r: CovMatrix) -> Result<Self> {
        check_mu(mu)?;
        check_dims(&s_w, &r)?;
        s_w.require_pd("Σ_W")?;
        r.require_pd("R")?;
        if let Some(v) = &s_v {
            check_dims(&s_w, v)?;
            v.require_pd("Σ_V")?;
        }
        Ok(EEIInstance { mu, s_w, s_v, r })
    }

    pub fn dim(&self) -> usize {
        self.s_w.dim()
    }

    /// Objective of this instance at a Gaussian input: `F4` when `Σ_V` is
    /// present, `F3` otherwise.
    pub fn objective(&self, s: &CovMatrix) -> Result<f64> {
        match &self.s_v {
            Some(v) => f4(s, &self.s_w, v, self.mu),
            None => f3(s, &self.s_w, self.mu),
        }
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 1.0 {
        Ok(())
    } else {
        Err(EeiError::BadMu(mu))
    }
}

/// Multiplier, split, and residuals produced by [`construct_l`] or
/// [`construct_k`].
#[derive(Debug, Clone, Serialize)]
pub struct ConstructionCertificate {
    /// `L` or `K`.
    pub multiplier: CovMatrix,
    pub s_w_tilde: CovMatrix,
    pub s_x_star: CovMatrix,
    /// `Σ_X′ = Σ_X − Σ_X*` for `L`, `Σ_Ṽ` for `K`.
    pub s_complement: CovMatrix,
    pub zero_product_residual: f64,
    /// Most negative eigenvalue over the claimed PSD gaps.
    pub order_residual: f64,
    pub markov_residual: f64,
    /// Reference magnitude for the relative tolerances.
    pub scale: f64,
}

impl ConstructionCertificate {
    pub fn passes(&self, tol: f64) -> bool {
        let t = tol * self.scale;
        self.zero_product_residual <= t && self.order_residual >= -t && self.markov_residual <= t
    }
}

/// `F3(Σ) = h(Σ) − μ h(Σ + Σ_W)`.
pub fn f3(s: &CovMatrix, s_w: &CovMatrix, mu: f64) -> Result<f64> {
    check_dims(s, s_w)?;
    let sum = CovMatrix::new(s.matrix() + s_w.matrix())?;
    Ok(gaussian_entropy(s)? - mu * gaussian_entropy(&sum)?)
}

/// `F4(Σ) = h(Σ + Σ_W) − μ h(Σ + Σ_V)`.
pub fn f4(s: &CovMatrix, s_w: &CovMatrix, s_v: &CovMatrix, mu: f64) -> Result<f64> {
    check_dims(s, s_w)?;
    check_dims(s, s_v)?;
    let sw = CovMatrix::new(s.matrix() + s_w.matrix())?;
    let sv = CovMatrix::new(s.matrix() + s_v.matrix())?;
    Ok(gaussian_entropy(&sw)? - mu * gaussian_entropy(&sv)?)
}

/// The `α > 0` with `h(N(0, αΣ_W)) = h_x`.
pub fn matched_alpha(h_x: f64, s_w: &CovMatrix) -> Result<f64> {
    s_w.require_pd("Σ_W")?;
    let n = s_w.dim() as f64;
    let ld = log_det_spd(s_w.matrix()).ok_or_else(|| EeiError::SingularCovariance("Σ_W".into()))?;
    Ok((2.0 * h_x / n - (2.0 * PI * E).ln() - ld / n).exp())
}

/// `f(α) = h(αΣ_W) − μ h((α+1)Σ_W)`.
pub fn f_alpha(alpha: f64, instance: &EEIInstance) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(EeiError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let n = instance.dim() as f64;
    let ld = log_det_spd(instance.s_w.matrix())
        .ok_or_else(|| EeiError::SingularCovariance("Σ_W".into()))?;
    let c = n * (2.0 * PI * E).ln();
    let h_alpha = 0.5 * (c + n * alpha.ln() + ld);
    let h_alpha1 = 0.5 * (c + n * alpha.ln_1p() + ld);
    Ok(h_alpha - instance.mu * h_alpha1)
}

/// Maximizer `(μ − 1)⁻¹` of [`f_alpha`].
pub fn f_alpha_argmax(instance: &EEIInstance) -> Result<f64> {
    check_mu(instance.mu)?;
    Ok(1.0 / (instance.mu - 1.0))
}

fn require_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(m).ok_or_else(|| EeiError::SingularCovariance(what.to_string()))
}

/// Builds `L`, `Σ_W̃`, `Σ_X*`, `Σ_X′` from `Σ_X` and `Σ_W`.
///
/// With `Qᵀ Σ_X Q = I`, `Qᵀ Σ_W Q = diag(d_W)`, the diagonal of `D_L` is
/// zero where `d_W ≤ μ−1` and `(d_W − (μ−1)) / (μ(1+d_W))` elsewhere;
/// `L = Q D_L Qᵀ` and `Σ_W̃ = ((Σ_X+Σ_W)⁻¹ + L)⁻¹ − Σ_X`.
pub fn construct_l(s_x: &CovMatrix, s_w: &CovMatrix, mu: f64) -> Result<ConstructionCertificate> {
    check_mu(mu)?;
    check_dims(s_x, s_w)?;
    s_x.require_pd("Σ_X")?;
    s_w.require_pd("Σ_W")?;

    let sd = simdiag(s_x, s_w)?;
    let thr = mu - 1.0;
    let d_l = sd.d.map(|d| {
        if d <= thr + THRESHOLD_TOL {
            0.0
        } else {
            (d - thr) / (mu * (1.0 + d))
        }
    });
    let l = symmetrize(&(&sd.q * DMatrix::from_diagonal(&d_l) * sd.q.transpose()));

    let x = s_x.matrix();
    let w = s_w.matrix();
    let xw_inv = require_inverse(&(x + w), "Σ_X + Σ_W")?;
    let w_tilde = symmetrize(&(require_inverse(&(xw_inv + &l), "(Σ_X+Σ_W)⁻¹ + L")? - x));
    let x_star = &w_tilde / thr;
    let x_prime = x - &x_star;

    let zero_product = (&l * &x_prime).norm().max((&x_prime * &l).norm());
    let order = min_eigenvalue(&x_prime).min(min_eigenvalue(&(w - &w_tilde)));
    let scale = spectral_scale(x).max(spectral_scale(w));

    let x_prime_c = CovMatrix::from_projection(&x_prime)?;
    let triple = MarkovTriple::new(
        x_prime_c.clone(),
        CovMatrix::from_projection(&(x + &w_tilde))?,
        CovMatrix::new(x + w)?,
    )?;
    let markov = markov_residual(&triple)?;

    Ok(ConstructionCertificate {
        multiplier: CovMatrix::from_projection(&l)?,
        s_w_tilde: CovMatrix::from_projection(&w_tilde)?,
        s_x_star: CovMatrix::from_projection(&x_star)?,
        s_complement: x_prime_c,
        zero_product_residual: zero_product,
        order_residual: order,
        markov_residual: markov,
        scale,
    })
}

/// `Σ_X*` dominating `Σ_X` for `F3`, with the objective at both points.
#[derive(Debug, Clone, Serialize)]
pub struct Thm3Result {
    pub s_x_star: CovMatrix,
    pub certificate: ConstructionCertificate,
    pub objective_input: f64,
    pub objective_star: f64,
}

/// Runs [`construct_l`] and confirms `F3(Σ_X*) ≥ F3(Σ_X)`.
pub fn dominating_gaussian_thm3(s_x: &CovMatrix, s_w: &CovMatrix, mu: f64) -> Result<Thm3Result> {
    let cert = construct_l(s_x, s_w, mu)?;
    let base = f3(s_x, s_w, mu)?;
    let star = f3(&cert.s_x_star, s_w, mu)?;
    if star < base - 1e-8 * base.abs().max(1.0) {
        return Err(EeiError::DominationFailed { star, base });
    }
    Ok(Thm3Result {
        s_x_star: cert.s_x_star.clone(),
        certificate: cert,
        objective_input: base,
        objective_star: star,
    })
}

/// Gaussian maximizer of `F3` over `Σ ⪯ R`: the construction evaluated at
/// `Σ_X = R`.
pub fn eei_optimum_thm3(s_w: &CovMatrix, r: &CovMatrix, mu: f64) -> Result<Thm3Result> {
    dominating_gaussian_thm3(r, s_w, mu)
}

/// `K` and `Σ_W̃ = (Σ_W⁻¹ + K)⁻¹` for a given `Σ_Ṽ`.
fn k_split(
    s_w: &CovMatrix,
    s_v_tilde: &CovMatrix,
    mu: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sd = simdiag(s_v_tilde, s_w)?;
    let thr = 1.0 / (mu - 1.0);
    let d_k = sd.d.map(|d| {
        if d <= thr + THRESHOLD_TOL {
            0.0
        } else {
            mu - 1.0 - 1.0 / d
        }
    });
    let k = symmetrize(&(&sd.q * DMatrix::from_diagonal(&d_k) * sd.q.transpose()));
    let w_inv = require_inverse(s_w.matrix(), "Σ_W")?;
    let w_tilde = require_inverse(&(w_inv + &k), "Σ_W⁻¹ + K")?;
    Ok((k, w_tilde))
}

/// Builds `K`, `Σ_W̃`, `Σ_X*` from `Σ_W` and `Σ_Ṽ`.
///
/// With `Qᵀ Σ_Ṽ Q = I`, `Qᵀ Σ_W Q = diag(d_W)`, the diagonal of `D_K` is
/// zero where `d_W ≤ (μ−1)⁻¹` and `μ − 1 − 1/d_W` elsewhere;
/// `Σ_X* = (μ−1)⁻¹ Σ_Ṽ − Σ_W̃`.
pub fn construct_k(
    s_w: &CovMatrix,
    s_v_tilde: &CovMatrix,
    mu: f64,
) -> Result<ConstructionCertificate> {
    check_mu(mu)?;
    check_dims(s_w, s_v_tilde)?;
    s_w.require_pd("Σ_W")?;
    s_v_tilde.require_pd("Σ_Ṽ")?;
    let (k, w_tilde) = k_split(s_w, s_v_tilde, mu)?;
    let x_star = s_v_tilde.matrix() / (mu - 1.0) - &w_tilde;
    certificate_from_k(k, w_tilde, x_star, s_v_tilde.clone(), s_w)
}

fn certificate_from_k(
    k: DMatrix<f64>,
    w_tilde: DMatrix<f64>,
    x_star: DMatrix<f64>,
    s_v_tilde: CovMatrix,
    s_w: &CovMatrix,
) -> Result<ConstructionCertificate> {
    let w = s_w.matrix();
    let zero_product = (&k * &x_star).norm().max((&x_star * &k).norm());
    // Σ_W̃ ⪯ Σ_W and Σ_W̃ ⪯ Σ_Ṽ/(μ−1), the latter being Σ_X* ⪰ 0
    let order = min_eigenvalue(&(w - &w_tilde)).min(min_eigenvalue(&x_star));
    let scale = spectral_scale(w).max(s_v_tilde.scale());
    let x_star_c = CovMatrix::from_projection(&x_star)?;
    let triple = MarkovTriple::new(
        x_star_c.clone(),
        CovMatrix::from_projection(&(&x_star + &w_tilde))?,
        CovMatrix::from_projection(&(&x_star + w))?,
    )?;
    let markov = markov_residual(&triple)?;
    Ok(ConstructionCertificate {
        multiplier: CovMatrix::from_projection(&k)?,
        s_w_tilde: CovMatrix::from_projection(&w_tilde)?,
        s_x_star: x_star_c,
        s_complement: s_v_tilde,
        zero_product_residual: zero_product,
        order_residual: order,
        markov_residual: markov,
        scale,
    })
}

/// Maximizer of `F4` over `0 ⪯ Σ ⪯ R` with its certificate and solver
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Thm4Result {
    pub s_x_star: CovMatrix,
    pub objective: f64,
    pub certificate: ConstructionCertificate,
    /// Smallest eigenvalue of `Σ_V − Σ_W̃`. Nonnegative whenever the
    /// constraint is inactive; may be negative when `R` binds.
    pub split_residual: f64,
    pub fixed_point_iterations: usize,
    pub fixed_point_converged: bool,
    /// Whether the fixed-point covariance already satisfied `Σ ⪯ R`.
    pub fixed_point_feasible: bool,
    pub ascent_iterations: usize,
    pub projected_gradient_norm: f64,
}

const FP_MAX_ITER: usize = 200;
const FP_TOL: f64 = 1e-10;
const PGA_MAX_ITER: usize = 20_000;
const PGA_TOL: f64 = 1e-9;
const PGA_STALL_TOL: f64 = 1e-6;

/// Gaussian maximizer of `F4` under `0 ⪯ Σ ⪯ R`.
///
/// Stage one solves the split `Σ_Ṽ = Σ_V − Σ_W̃(Σ_Ṽ)` by the damped
/// iteration `Σ_Ṽ ← Σ_Ṽ/μ + (1 − 1/μ)(Σ_V − Σ_W̃(Σ_Ṽ))`. Since
/// `Σ_W̃ ⪯ Σ_Ṽ/(μ−1)` the iterate never drops below `(1 − 1/μ)Σ_V`, so it
/// stays positive definite. Its fixed point is the unconstrained Gaussian
/// optimum. Stage two runs projected gradient ascent in `R`-whitened
/// coordinates, where the feasible set is `{0 ⪯ S ⪯ I}` and projection is
/// eigenvalue clipping, from the projected fixed point and a few fixed
/// starts; the best end point wins.
///
/// The certificate uses `K = [P_N (μ(Σ*+Σ_V)⁻¹ − (Σ*+Σ_W)⁻¹) P_N]₊` with
/// `P_N` the projector onto the null space of `Σ*`. At an unconstrained
/// optimum this is exactly the multiplier of [`construct_k`] for the fixed
/// point split.
pub fn eei_optimum_thm4(instance: &EEIInstance) -> Result<Thm4Result> {
    let s_v = instance
        .s_v
        .as_ref()
        .ok_or_else(|| EeiError::InvalidInput("the two-noise problem needs Σ_V".into()))?;
    let mu = instance.mu;
    let n = instance.dim();
    let w = instance.s_w.matrix();
    let v = s_v.matrix();
    let r = instance.r.matrix();

    // stage one: damped split iteration
    let mut vt = v.clone();
    let mut fp_iter = 0;
    let mut fp_converged = false;
    let fp_scale = spectral_scale(v);
    while fp_iter < FP_MAX_ITER {
        fp_iter += 1;
        let (_, w_tilde) = k_split(&instance.s_w, &CovMatrix::new(vt.clone())?, mu)?;
        let next = symmetrize(&(&vt / mu + (v - &w_tilde) * ((mu - 1.0) / mu)));
        let change = (&next - &vt).norm();
        vt = next;
        if change <= FP_TOL * fp_scale {
            fp_converged = true;
            break;
        }
    }
    let (_, w_tilde_fp) = k_split(&instance.s_w, &CovMatrix::new(vt.clone())?, mu)?;
    let x_fp = project_psd(&(&vt / (mu - 1.0) - w_tilde_fp));

    // stage two: projected ascent in whitened coordinates
    let r_half = map_spectrum(r, f64::sqrt);
    let r_ihalf = map_spectrum(r, |x| 1.0 / x.sqrt());
    let whiten = |m: &DMatrix<f64>| symmetrize(&(&r_ihalf * m * &r_ihalf));
    let unwhiten = |m: &DMatrix<f64>| symmetrize(&(&r_half * m * &r_half));
    let problem = WhitenedF4 {
        w: whiten(w),
        v: whiten(v),
        mu,
    };
    let s_fp = whiten(&x_fp);
    let fp_feasible = min_eigenvalue(&(DMatrix::identity(n, n) - &s_fp)) >= -1e-10;

    let starts = [
        clip_unit(&s_fp),
        DMatrix::identity(n, n),
        DMatrix::identity(n, n) * 0.5,
        DMatrix::zeros(n, n),
    ];
    let mut best: Option<AscentResult> = None;
    let mut stalled: Vec<f64> = Vec::new();
    for s0 in starts.iter() {
        let res = problem.ascend(s0);
        if res.pg_norm > PGA_STALL_TOL {
            stalled.push(res.pg_norm);
            continue;
        }
        best = Some(match best {
            None => res,
            Some(b) => pick_better(b, res),
        });
    }
    let best = best.ok_or_else(|| {
        EeiError::NoConvergence(format!(
            "projected ascent stalled from every start (projected gradient norms {stalled:?})"
        ))
    })?;

    let sigma = CovMatrix::from_projection(&unwhiten(&best.s))?;
    let objective = f4(&sigma, &instance.s_w, s_v, mu)?;

    // certificate for the final point
    let sig = sigma.matrix();
    let (vals, vecs) = eigh(sig);
    let null_tol = 1e-9 * spectral_scale(sig);
    let cols: Vec<usize> = (0..n).filter(|&i| vals[i] <= null_tol).collect();
    let mut p_n = DMatrix::zeros(n, n);
    for &i in &cols {
        let c = vecs.column(i);
        p_n += c * c.transpose();
    }
    let g = require_inverse(&(sig + v), "Σ + Σ_V")? * mu - require_inverse(&(sig + w), "Σ + Σ_W")?;
    let k = project_psd(&(&p_n * g * &p_n));
    let w_inv = require_inverse(w, "Σ_W")?;
    let w_tilde = require_inverse(&(w_inv + &k), "Σ_W⁻¹ + K")?;
    let split_residual = min_eigenvalue(&(v - &w_tilde));
    // Without an active constraint Σ_V = Σ_W̃ + Σ_Ṽ, so both gaps must close.
    // When R binds and Σ* has full rank K vanishes, Σ_W̃ = Σ_W, and Σ_W ⪯ Σ_V
    // need not hold; the gap is then reported, not enforced.
    let tol = 1e-6 * spectral_scale(w).max(spectral_scale(v));
    let w_gap = min_eigenvalue(&(w - &w_tilde));
    if w_gap < -tol || (fp_feasible && split_residual < -tol) {
        return Err(EeiError::SplitInfeasible(format!(
            "Σ_W̃ exceeds Σ_W or Σ_V (gaps {w_gap:.3e}, {split_residual:.3e})"
        )));
    }
    let v_tilde = CovMatrix::from_projection(&((sig + &w_tilde) * (mu - 1.0)))?;
    let certificate = certificate_from_k(k, w_tilde, sig.clone(), v_tilde, &instance.s_w)?;

    Ok(Thm4Result {
        s_x_star: sigma,
        objective,
        certificate,
        split_residual,
        fixed_point_iterations: fp_iter,
        fixed_point_converged: fp_converged,
        fixed_point_feasible: fp_feasible,
        ascent_iterations: best.iterations,
        projected_gradient_norm: best.pg_norm,
    })
}

fn clip_unit(s: &DMatrix<f64>) -> DMatrix<f64> {
    map_spectrum(s, |x| x.clamp(0.0, 1.0))
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// `F4` up to an additive constant, in coordinates where `R = I`.
struct WhitenedF4 {
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    mu: f64,
}

struct AscentResult {
    s: DMatrix<f64>,
    value: f64,
    iterations: usize,
    pg_norm: f64,
}

fn pick_better(a: AscentResult, b: AscentResult) -> AscentResult {
    let tie = 1e-12 * a.value.abs().max(1.0);
    if b.value > a.value + tie {
        b
    } else if a.value > b.value + tie {
        a
    } else {
        // lexicographic on the vectorized matrix for a reproducible choice
        let ord =
            a.s.iter()
                .zip(b.s.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal);
        if ord.is_le() {
            a
        } else {
            b
        }
    }
}

impl WhitenedF4 {
    fn value(&self, s: &DMatrix<f64>) -> f64 {
        let a = log_det_spd(&(s + &self.w)).unwrap_or(f64::NEG_INFINITY);
        let b = log_det_spd(&(s + &self.v)).unwrap_or(f64::INFINITY);
        0.5 * a - 0.5 * self.mu * b
    }

    fn grad(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let a = spd_inverse(&(s + &self.w)).expect("Σ + Σ_W is positive definite");
        let b = spd_inverse(&(s + &self.v)).expect("Σ + Σ_V is positive definite");
        symmetrize(&((a - b * self.mu) * 0.5))
    }

    /// Projected gradient ascent with Barzilai-Borwein steps and Armijo
    /// backtracking.
    fn ascend(&self, s0: &DMatrix<f64>) -> AscentResult {
        let mut s = clip_unit(s0);
        let mut f = self.value(&s);
        let mut g = self.grad(&s);
        let mut step = 1.0;
        let mut pg_norm = (clip_unit(&(&s + &g)) - &s).norm();
        let mut it = 0;
        while it < PGA_MAX_ITER && pg_norm > PGA_TOL {
            it += 1;
            let slack = 1e-15 * f.abs().max(1.0);
            let mut t = step;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = clip_unit(&(&s + &g * t));
                let fc = self.value(&cand);
                if fc >= f + 1e-4 * inner(&g, &(&cand - &s)) - slack {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let Some((s_new, f_new)) = accepted else {
                break;
            };
            let g_new = self.grad(&s_new);
            let ds = &s_new - &s;
            let dg = &g_new - &g;
            let sy = -inner(&ds, &dg);
            step = if sy > 0.0 {
                (inner(&ds, &ds) / sy).clamp(1e-10, 1e10)
            } else {
                (t * 2.0).min(1e10)
            };
            s = s_new;
            f = f_new;
            g = g_new;
            pg_norm = (clip_unit(&(&s + &g)) - &s).norm();
        }
        AscentResult {
            s,
            value: f,
            iterations: it,
            pg_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sc(x: f64) -> CovMatrix {
        CovMatrix::scalar(x).unwrap()
    }

    fn entry(c: &CovMatrix) -> f64 {
        c.matrix()[(0, 0)]
    }

    fn inst(mu: f64, w: f64, v: Option<f64>, r: f64) -> EEIInstance {
        EEIInstance::new(mu, sc(w), v.map(sc), sc(r)).unwrap()
    }

    #[test]
    fn matched_alpha_examples() {
        let h1 = 0.5 * (2.0 * PI * E).ln();
        assert_abs_diff_eq!(matched_alpha(h1, &sc(1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(matched_alpha(h1, &sc(4.0)).unwrap(), 0.25, epsilon = 1e-12);
        let h2 = (2.0 * PI * E).ln() + 0.5 * 4f64.ln();
        assert_abs_diff_eq!(
            matched_alpha(h2, &CovMatrix::identity(2)).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn f_alpha_at_one() {
        // ½ln(2πe) − 2·½ln(2πe·2) = ½ln(2πe) − ln(4πe)
        let v = f_alpha(1.0, &inst(2.0, 1.0, None, 1.0)).unwrap();
        let expected = 0.5 * (2.0 * PI * E).ln() - (4.0 * PI * E).ln();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(v, -2.112085, epsilon = 1e-6);
        assert!(f_alpha(0.0, &inst(2.0, 1.0, None, 1.0)).is_err());
    }

    #[test]
    fn f_alpha_unimodal_probe() {
        let i = inst(2.0, 1.0, None, 1.0);
        let top = f_alpha(f_alpha_argmax(&i).unwrap(), &i).unwrap();
        assert!(f_alpha(0.1, &i).unwrap() < top);
        assert!(f_alpha(10.0, &i).unwrap() < top);
        // derivative changes sign across the argmax
        let a = f_alpha_argmax(&i).unwrap();
        let h = 1e-4;
        assert!(f_alpha(a - h, &i).unwrap() < top);
        assert!(f_alpha(a + h, &i).unwrap() < top);
    }

    #[test]
    fn f_alpha_argmax_values() {
        for (mu, a) in [(2.0, 1.0), (3.0, 0.5), (1.5, 2.0)] {
            assert_abs_diff_eq!(
                f_alpha_argmax(&inst(mu, 1.0, None, 1.0)).unwrap(),
                a,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn bad_mu_is_rejected() {
        assert!(matches!(
            EEIInstance::new(1.0, sc(1.0), None, sc(1.0)),
            Err(EeiError::BadMu(_))
        ));
        assert!(matches!(
            construct_l(&sc(1.0), &sc(1.0), 0.5),
            Err(EeiError::BadMu(_))
        ));
        assert!(matches!(
            construct_k(&sc(1.0), &sc(1.0), f64::NAN),
            Err(EeiError::BadMu(_))
        ));
    }

    #[test]
    fn construct_l_scalar_examples() {
        let c = construct_l(&sc(1.0), &sc(0.5), 2.0).unwrap();
        assert_abs_diff_eq!(entry(&c.multiplier), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(entry(&c.s_w_tilde), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_x_star), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_complement), 0.5, epsilon = 1e-12);
        assert!(c.passes(1e-8));

        let c = construct_l(&sc(1.0), &sc(3.0), 2.0).unwrap();
        assert_abs_diff_eq!(entry(&c.multiplier), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_w_tilde), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_x_star), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_complement), 0.0, epsilon = 1e-12);
        assert!(c.passes(1e-8));

        let c = construct_l(&sc(1.0), &sc(1.0), 2.0).unwrap();
        assert_eq!(entry(&c.multiplier), 0.0);
        assert_abs_diff_eq!(entry(&c.s_x_star), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn construct_l_rejects_singular_inputs() {
        assert!(matches!(
            construct_l(&CovMatrix::zeros(1), &sc(1.0), 2.0),
            Err(EeiError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            construct_l(&sc(1.0), &CovMatrix::zeros(1), 2.0),
            Err(EeiError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn thm3_domination_examples() {
        let r = dominating_gaussian_thm3(&sc(1.0), &sc(3.0), 2.0).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.objective_star, r.objective_input, epsilon = 1e-12);

        let r = dominating_gaussian_thm3(&sc(1.0), &sc(0.5), 2.0).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 0.5, epsilon = 1e-12);
        let gap = 0.5 * 0.5f64.ln() + 1.5f64.ln();
        assert_abs_diff_eq!(r.objective_star - r.objective_input, gap, epsilon = 1e-12);
        assert_abs_diff_eq!(gap, 0.058891, epsilon = 1e-6);

        // Σ_X = Σ_W/(μ−1) is a fixed point
        let r = dominating_gaussian_thm3(&sc(0.4), &sc(1.2), 4.0).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn construct_k_scalar_examples() {
        let c = construct_k(&sc(0.2), &sc(1.0), 2.0).unwrap();
        assert_eq!(entry(&c.multiplier), 0.0);
        assert_abs_diff_eq!(entry(&c.s_w_tilde), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_x_star), 0.8, epsilon = 1e-12);
        assert!(c.passes(1e-8));

        let c = construct_k(&sc(3.0), &sc(1.0), 2.0).unwrap();
        assert_abs_diff_eq!(entry(&c.multiplier), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_w_tilde), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entry(&c.s_x_star), 0.0, epsilon = 1e-12);
        assert!(c.passes(1e-8));

        let c = construct_k(&sc(0.5), &sc(1.0), 3.0).unwrap();
        assert_eq!(entry(&c.multiplier), 0.0);
        assert_abs_diff_eq!(entry(&c.s_x_star), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn thm4_scalar_boundary_optimum() {
        let r = eei_optimum_thm4(&inst(2.0, 1.0, Some(2.0), 10.0)).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 0.0, epsilon = 1e-8);
        let expected = 0.5 * (2.0 * PI * E).ln() - (4.0 * PI * E).ln();
        assert_abs_diff_eq!(r.objective, expected, epsilon = 1e-9);
        assert!(r.certificate.markov_residual <= 1e-6);
    }

    #[test]
    fn thm4_scalar_interior_optimum() {
        // ½/(σ+1) = 1/(σ+4) at σ = 2
        let r = eei_optimum_thm4(&inst(2.0, 1.0, Some(4.0), 10.0)).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 2.0, epsilon = 1e-8);
        assert!(r.fixed_point_feasible);
        assert!(r.certificate.passes(1e-6));
    }

    #[test]
    fn thm4_scalar_active_constraint() {
        let r = eei_optimum_thm4(&inst(2.0, 1.0, Some(4.0), 1.5)).unwrap();
        assert_abs_diff_eq!(entry(&r.s_x_star), 1.5, epsilon = 1e-8);
        assert!(!r.fixed_point_feasible);
    }

    #[test]
    fn thm4_equal_noises_gives_zero() {
        let w = CovMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let i = EEIInstance::new(1.7, w.clone(), Some(w), CovMatrix::identity(2)).unwrap();
        let r = eei_optimum_thm4(&i).unwrap();
        assert!(r.s_x_star.matrix().amax() < 1e-8);
    }

    #[test]
    fn thm4_needs_second_noise() {
        assert!(eei_optimum_thm4(&inst(2.0, 1.0, None, 1.0)).is_err());
    }
}
