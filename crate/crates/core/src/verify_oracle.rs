//! Independent numerical checks: grid quadrature entropies for 1-D
//! non-Gaussian densities, the EPI / worst-noise / EEI inequalities evaluated
//! on those densities, a seeded random search over feasible Gaussian
//! covariances, and residuals of the variational optimality conditions.
//!
//! Densities live on uniform grids and every integral is a trapezoid sum.
//! Values below `1e-300` are treated as zero inside logarithms.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::eei_construct::{eei_optimum_thm3, eei_optimum_thm4, EEIInstance};
use crate::error::{EeiError, Result};
use crate::gaussmat::{log_det_spd, map_spectrum, CovMatrix};

const LOG_FLOOR: f64 = 1e-300;
const NORMALIZATION_TOL: f64 = 1e-6;

/// Density tabulated on `points` equally spaced nodes spanning `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

fn trapz_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

impl GridDensity {
    /// Validates nonnegativity and unit mass (within `1e-6`).
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let d = Self::unchecked(lo, hi, values)?;
        let mass = d.integral();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(EeiError::UnnormalizedDensity(mass));
        }
        Ok(d)
    }

    fn unchecked(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(EeiError::InvalidInput(
                "a grid needs at least 3 nodes".into(),
            ));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(EeiError::InvalidInput(format!(
                "bad grid support [{lo}, {hi}]"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EeiError::InvalidInput(
                "density values must be finite and nonnegative".into(),
            ));
        }
        Ok(GridDensity { lo, hi, values })
    }

    /// Rescales `values` to unit trapezoid mass.
    pub fn normalized(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::unchecked(lo, hi, values)?;
        let mass = d.integral();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(EeiError::UnnormalizedDensity(mass));
        }
        d.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    /// Samples `f` on the grid and normalizes.
    pub fn from_fn(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 3 {
            return Err(EeiError::InvalidInput(
                "a grid needs at least 3 nodes".into(),
            ));
        }
        let dx = (hi - lo) / (points - 1) as f64;
        let values = (0..points).map(|i| f(lo + i as f64 * dx)).collect();
        Self::normalized(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points()).map(|i| self.x(i)).collect()
    }

    fn trapz(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.points();
        let dx = self.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| trapz_weight(i, n) * g(self.x(i), v))
            .sum::<f64>()
            * dx
    }

    pub fn integral(&self) -> f64 {
        self.trapz(|_, v| v)
    }

    pub fn mean(&self) -> f64 {
        self.trapz(|x, v| x * v)
    }

    /// Central second moment.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.trapz(|x, v| (x - m) * (x - m) * v)
    }

    /// Linear interpolation, zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let t = (x - self.lo) / self.dx();
        let i = (t.floor() as usize).min(self.points() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Node indices `j` of a grid (`lo`, `dx`, `n` nodes) where `t_j − shift`
/// can fall inside the support of `kernel`, padded by one node.
fn kernel_window(
    kernel: &GridDensity,
    lo: f64,
    dx: f64,
    n: usize,
    shift: f64,
) -> std::ops::Range<usize> {
    let a = ((kernel.lo() + shift - lo) / dx).floor() - 1.0;
    let b = ((kernel.hi() + shift - lo) / dx).ceil() + 1.0;
    let a = a.max(0.0) as usize;
    let b = (b.max(-1.0) + 1.0).min(n as f64) as usize;
    a.min(b)..b
}

/// Trapezoid estimate with a Richardson error estimate `|I_h − I_2h| / 3`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn neg_f_ln_f(v: f64) -> f64 {
    if v <= LOG_FLOOR {
        0.0
    } else {
        -v * v.ln()
    }
}

/// Differential entropy `−∫ f ln f` in nats.
pub fn entropy_quadrature(d: &GridDensity) -> Result<Quadrature> {
    let mass = d.integral();
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(EeiError::UnnormalizedDensity(mass));
    }
    let dx = d.dx();
    let vals = d.values();
    // an odd node count so the coarse grid uses every other node exactly
    let n = if vals.len() % 2 == 1 {
        vals.len()
    } else {
        vals.len() - 1
    };
    let fine: f64 = (0..n)
        .map(|i| trapz_weight(i, n) * neg_f_ln_f(vals[i]))
        .sum::<f64>()
        * dx;
    let m = n.div_ceil(2);
    let coarse: f64 = (0..m)
        .map(|k| trapz_weight(k, m) * neg_f_ln_f(vals[2 * k]))
        .sum::<f64>()
        * 2.0
        * dx;
    let value = if n == vals.len() {
        fine
    } else {
        (0..vals.len())
            .map(|i| trapz_weight(i, vals.len()) * neg_f_ln_f(vals[i]))
            .sum::<f64>()
            * dx
    };
    Ok(Quadrature {
        value,
        error: (fine - coarse).abs() / 3.0,
    })
}

/// Density of `X + N(0, σ²)` on the grid widened by `8σ` on each side.
pub fn convolve_density(d: &GridDensity, sigma2: f64) -> Result<GridDensity> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(EeiError::InvalidInput(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let sigma = sigma2.sqrt();
    let dx = d.dx();
    if dx > sigma / 4.0 {
        return Err(EeiError::GridTooCoarse {
            spacing: dx,
            limit: sigma / 4.0,
        });
    }
    let n = d.points();
    let m = (8.0 * sigma / dx).ceil() as usize;
    let n_out = n + 2 * m;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    // kernel[q + n - 1] = φ((q − m)Δ) for q = j − k
    let kernel: Vec<f64> = (0..n + n_out - 1)
        .map(|idx| {
            let q = idx as f64 - (n - 1) as f64;
            let t = (q - m as f64) * dx;
            norm * (-0.5 * t * t / sigma2).exp()
        })
        .collect();
    let weighted: Vec<f64> = d
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * trapz_weight(k, n) * dx)
        .collect();
    let out: Vec<f64> = (0..n_out)
        .map(|j| {
            weighted
                .iter()
                .enumerate()
                .map(|(k, w)| w * kernel[j + n - 1 - k])
                .sum()
        })
        .collect();
    let lo = d.lo() - m as f64 * dx;
    let hi = d.hi() + m as f64 * dx;
    GridDensity::new(lo, hi, out)
}

/// Density of `X1 + X2` for independent grid densities with equal spacing.
///
/// Discrete convolution with trapezoid end weights on both factors; the
/// result is renormalized to absorb the `O(Δ²)` mass defect.
pub fn convolve_densities(d1: &GridDensity, d2: &GridDensity) -> Result<GridDensity> {
    let dx = d1.dx();
    if (d2.dx() - dx).abs() > 1e-9 * dx {
        return Err(EeiError::InvalidInput(format!(
            "grid spacings differ ({} vs {})",
            dx,
            d2.dx()
        )));
    }
    let (n1, n2) = (d1.points(), d2.points());
    let a: Vec<f64> = (0..n1)
        .map(|i| d1.values()[i] * trapz_weight(i, n1))
        .collect();
    let b: Vec<f64> = (0..n2)
        .map(|i| d2.values()[i] * trapz_weight(i, n2))
        .collect();
    let n_out = n1 + n2 - 1;
    let out: Vec<f64> = (0..n_out)
        .map(|j| {
            let k_lo = j.saturating_sub(n2 - 1);
            let k_hi = j.min(n1 - 1);
            (k_lo..=k_hi).map(|k| a[k] * b[j - k]).sum::<f64>() * dx
        })
        .collect();
    let lo = d1.lo() + d2.lo();
    GridDensity::normalized(lo, lo + (n_out - 1) as f64 * dx, out)
}

/// Built-in 1-D densities. Mixture widths are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NamedDensity {
    Gaussian {
        mean: f64,
        var: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Mixture {
        w: f64,
        m1: f64,
        s1: f64,
        m2: f64,
        s2: f64,
    },
}

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

impl NamedDensity {
    /// Uniform on `[−√(3v), √(3v)]`, the centred uniform of variance `v`.
    pub fn uniform_with_variance(v: f64) -> Self {
        let h = (3.0 * v).sqrt();
        NamedDensity::Uniform { a: -h, b: h }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NamedDensity::Gaussian { mean, var } => {
                mean.is_finite() && var > 0.0 && var.is_finite()
            }
            NamedDensity::Uniform { a, b } => a.is_finite() && b.is_finite() && b > a,
            NamedDensity::Mixture { w, m1, s1, m2, s2 } => {
                (0.0..=1.0).contains(&w)
                    && m1.is_finite()
                    && m2.is_finite()
                    && s1 > 0.0
                    && s2 > 0.0
                    && s1.is_finite()
                    && s2.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(EeiError::InvalidInput(format!(
                "bad density parameters {self:?}"
            )))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            NamedDensity::Gaussian { mean, var } => normal_pdf(x, mean, var.sqrt()),
            NamedDensity::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            NamedDensity::Mixture { w, m1, s1, m2, s2 } => {
                w * normal_pdf(x, m1, s1) + (1.0 - w) * normal_pdf(x, m2, s2)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NamedDensity::Gaussian { mean, .. } => mean,
            NamedDensity::Uniform { a, b } => 0.5 * (a + b),
            NamedDensity::Mixture { w, m1, m2, .. } => w * m1 + (1.0 - w) * m2,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NamedDensity::Gaussian { var, .. } => var,
            NamedDensity::Uniform { a, b } => (b - a).powi(2) / 12.0,
            NamedDensity::Mixture { w, m1, s1, m2, s2 } => {
                let m = self.mean();
                w * (s1 * s1 + m1 * m1) + (1.0 - w) * (s2 * s2 + m2 * m2) - m * m
            }
        }
    }

    /// Grid support: the exact interval for a uniform, `±8` standard
    /// deviations around each Gaussian component otherwise.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            NamedDensity::Gaussian { mean, var } => {
                let s = var.sqrt();
                (mean - 8.0 * s, mean + 8.0 * s)
            }
            NamedDensity::Uniform { a, b } => (a, b),
            NamedDensity::Mixture { m1, s1, m2, s2, .. } => (
                (m1 - 8.0 * s1).min(m2 - 8.0 * s2),
                (m1 + 8.0 * s1).max(m2 + 8.0 * s2),
            ),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, NamedDensity::Uniform { .. })
    }

    pub fn grid(&self, points: usize) -> Result<GridDensity> {
        self.validate()?;
        let (lo, hi) = self.support();
        GridDensity::from_fn(lo, hi, points, |x| self.pdf(x))
    }

    /// Grid with node spacing exactly `dx`. A uniform's width must be a
    /// whole number of steps so its edges stay on nodes.
    pub fn grid_with_spacing(&self, dx: f64) -> Result<GridDensity> {
        self.validate()?;
        let (lo, hi) = self.support();
        let steps = (hi - lo) / dx;
        let k = if self.is_uniform() {
            let k = steps.round();
            if (steps - k).abs() > 1e-6 {
                return Err(EeiError::InvalidInput(format!(
                    "uniform width {} is not a multiple of the grid spacing {dx}",
                    hi - lo
                )));
            }
            k as usize
        } else {
            steps.ceil() as usize
        };
        let k = k.max(2);
        GridDensity::from_fn(lo, lo + k as f64 * dx, k + 1, |x| self.pdf(x))
    }
}

/// Grids for two densities sharing one spacing so they can be convolved.
/// The spacing comes from a uniform if one is present, otherwise from the
/// wider support.
pub fn paired_grids(
    a: &NamedDensity,
    b: &NamedDensity,
    points: usize,
) -> Result<(GridDensity, GridDensity)> {
    if points < 3 {
        return Err(EeiError::InvalidInput(
            "a grid needs at least 3 nodes".into(),
        ));
    }
    let width = |d: &NamedDensity| {
        let (lo, hi) = d.support();
        hi - lo
    };
    let dx = if a.is_uniform() {
        width(a) / (points - 1) as f64
    } else if b.is_uniform() {
        width(b) / (points - 1) as f64
    } else {
        width(a).max(width(b)) / (points - 1) as f64
    };
    Ok((a.grid_with_spacing(dx)?, b.grid_with_spacing(dx)?))
}

/// Outcome of one inequality check.
///
/// `margin` is the slack of the claimed inequality, positive when it holds
/// strictly; `passed` is `margin ≥ −tol`.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub instance: Value,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub passed: bool,
    /// Combined Richardson error estimate of the quadratures involved.
    pub quadrature_error: f64,
    pub trials: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl VerificationReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        check: &str,
        instance: Value,
        lhs: f64,
        rhs: f64,
        margin: f64,
        tol: f64,
        quadrature_error: f64,
        trials: u64,
        seed: u64,
        start: Instant,
    ) -> Self {
        VerificationReport {
            check: check.to_string(),
            instance,
            lhs,
            rhs,
            margin,
            tol,
            passed: margin >= -tol,
            quadrature_error,
            trials,
            seed,
            elapsed_ms: Some(start.elapsed().as_secs_f64() * 1e3),
        }
    }
}

fn grid_summary(d: &GridDensity) -> Value {
    json!({"lo": d.lo(), "hi": d.hi(), "points": d.points()})
}

/// Entropy power inequality `h(X1+X2) ≥ ½ ln(e^{2h(X1)} + e^{2h(X2)})`.
pub fn check_epi(d1: &GridDensity, d2: &GridDensity, tol: f64) -> Result<VerificationReport> {
    let start = Instant::now();
    let h1 = entropy_quadrature(d1)?;
    let h2 = entropy_quadrature(d2)?;
    let sum = entropy_quadrature(&convolve_densities(d1, d2)?)?;
    // ½ln(a + b) with a = e^{2h1}, b = e^{2h2}, evaluated without overflow
    let (big, small) = if h1.value >= h2.value {
        (h1.value, h2.value)
    } else {
        (h2.value, h1.value)
    };
    let rhs = big + 0.5 * (2.0 * (small - big)).exp().ln_1p();
    let lhs = sum.value;
    Ok(VerificationReport::build(
        "epi",
        json!({"d1": grid_summary(d1), "d2": grid_summary(d2), "h1": h1.value, "h2": h2.value}),
        lhs,
        rhs,
        lhs - rhs,
        tol,
        h1.error + h2.error + sum.error,
        1,
        0,
        start,
    ))
}

/// Worst additive noise: `I(X+W̃+W′; W′) ≥ I(X_G+W̃+W′; W′)` for a Gaussian
/// `X_G` with the variance of `X`.
pub fn check_worst_noise(
    d_x: &GridDensity,
    s2_wt: f64,
    s2_wp: f64,
    tol: f64,
) -> Result<VerificationReport> {
    let start = Instant::now();
    if !(s2_wt > 0.0 && s2_wp > 0.0) {
        return Err(EeiError::InvalidInput(
            "noise variances must be positive".into(),
        ));
    }
    let a = entropy_quadrature(&convolve_density(d_x, s2_wt)?)?;
    let b = entropy_quadrature(&convolve_density(d_x, s2_wt + s2_wp)?)?;
    let v = d_x.variance();
    let lhs = b.value - a.value;
    let rhs = 0.5 * ((v + s2_wt + s2_wp) / (v + s2_wt)).ln();
    Ok(VerificationReport::build(
        "worst-noise",
        json!({"density": grid_summary(d_x), "variance": v, "s2_wt": s2_wt, "s2_wp": s2_wp}),
        lhs,
        rhs,
        lhs - rhs,
        tol,
        a.error + b.error,
        1,
        0,
        start,
    ))
}

/// Scalar problem data for [`check_eei`]; without `s2_v` the one-noise
/// objective `h(X) − μ h(X+W)` is checked.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalarEEI {
    pub mu: f64,
    pub s2_w: f64,
    pub s2_v: Option<f64>,
    pub r: f64,
}

/// Compares the quadrature objective of `d_x` with the constructed Gaussian
/// optimum; `margin = rhs − lhs`.
pub fn check_eei(d_x: &GridDensity, p: &ScalarEEI, tol: f64) -> Result<VerificationReport> {
    let start = Instant::now();
    let var = d_x.variance();
    if var > p.r + tol {
        return Err(EeiError::Infeasible(format!(
            "density variance {var} exceeds the constraint {}",
            p.r
        )));
    }
    let w = CovMatrix::scalar(p.s2_w)?;
    let r = CovMatrix::scalar(p.r)?;
    let (lhs, rhs, err, star) = match p.s2_v {
        None => {
            let hx = entropy_quadrature(d_x)?;
            let hxw = entropy_quadrature(&convolve_density(d_x, p.s2_w)?)?;
            let lhs = hx.value - p.mu * hxw.value;
            let sx = CovMatrix::scalar(var.min(p.r))?;
            let opt = crate::eei_construct::dominating_gaussian_thm3(&sx, &w, p.mu)?;
            let star = opt.s_x_star.matrix()[(0, 0)];
            (lhs, opt.objective_star, hx.error + p.mu * hxw.error, star)
        }
        Some(v) => {
            let hxw = entropy_quadrature(&convolve_density(d_x, p.s2_w)?)?;
            let hxv = entropy_quadrature(&convolve_density(d_x, v)?)?;
            let lhs = hxw.value - p.mu * hxv.value;
            let inst = EEIInstance::new(p.mu, w, Some(CovMatrix::scalar(v)?), r)?;
            let opt = eei_optimum_thm4(&inst)?;
            let star = opt.s_x_star.matrix()[(0, 0)];
            (lhs, opt.objective, hxw.error + p.mu * hxv.error, star)
        }
    };
    Ok(VerificationReport::build(
        "eei",
        json!({"problem": p, "density": grid_summary(d_x), "variance": var, "s_x_star": star}),
        lhs,
        rhs,
        rhs - lhs,
        tol,
        err,
        1,
        0,
        start,
    ))
}

/// Samples `trials` feasible covariances and compares the best objective
/// with the constructed optimum; `margin = constructed − best sampled`.
///
/// Trial `t` draws from a ChaCha stream keyed by `(seed, t)`: `A = GGᵀ`
/// with `G` an `n×k` standard normal matrix (`k` uniform in `1..=n`, full
/// rank for the one-noise objective, which needs `Σ ≻ 0`), scaled by
/// `u / λ_max(R^{-1/2} A R^{-1/2})` with `u = min(1, 1.25·U(0,1))`, so about
/// a fifth of the samples sit on the boundary `Σ ⪯ R`.
pub fn gaussian_search(
    instance: &EEIInstance,
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<VerificationReport> {
    let start = Instant::now();
    if trials == 0 {
        return Err(EeiError::InvalidInput("trials must be at least 1".into()));
    }
    let constructed = match &instance.s_v {
        Some(_) => eei_optimum_thm4(instance)?.objective,
        None => eei_optimum_thm3(&instance.s_w, &instance.r, instance.mu)?.objective_star,
    };
    let n = instance.dim();
    let r = instance.r.matrix();
    let r_ihalf = map_spectrum(r, |x| 1.0 / x.sqrt());
    let one_noise = instance.s_v.is_none();

    let best = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let k = if one_noise {
                n
            } else {
                rng.random_range(1..=n)
            };
            let g: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
            let a = &g * g.transpose();
            let lam = crate::gaussmat::eigh(&(&r_ihalf * &a * &r_ihalf)).0[n - 1];
            let u = (1.25 * rng.random::<f64>()).min(1.0);
            let s = if lam > 0.0 { a * (u / lam) } else { a };
            let value = objective_raw(instance, &s);
            (value, t)
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |x, y| {
                // max value, ties to the smaller trial index
                if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            },
        );

    Ok(VerificationReport::build(
        "search",
        json!({
            "instance": instance,
            "best_trial": best.1,
        }),
        best.0,
        constructed,
        constructed - best.0,
        tol,
        0.0,
        trials,
        seed,
        start,
    ))
}

/// Objective without PSD re-validation; `−∞` where it is undefined.
fn objective_raw(instance: &EEIInstance, s: &DMatrix<f64>) -> f64 {
    let n = s.nrows() as f64;
    let c = n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let h = |m: &DMatrix<f64>| log_det_spd(m).map(|ld| 0.5 * (c + ld));
    let w = instance.s_w.matrix();
    let value = match &instance.s_v {
        Some(v) => h(&(s + w))
            .zip(h(&(s + v.matrix())))
            .map(|(a, b)| a - instance.mu * b),
        None => h(s).zip(h(&(s + w))).map(|(a, b)| a - instance.mu * b),
    };
    value.unwrap_or(f64::NEG_INFINITY)
}

/// Fitted first-variation condition.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityFit {
    /// Weighted RMS residual of the stationarity equation.
    pub residual: f64,
    /// `(c, a, b)` in `μ T(x) − c ln f_X̂(x) + a + b x² = 0`, where
    /// `c = 1 + α₁` and `a`, `b` collect `α₀`, `γ`, `θ`, `φ`, `λ`.
    pub coefficients: [f64; 3],
    /// `h(X̂)`, the entropy constraint level of the candidate.
    pub entropy: f64,
}

/// Fits the stationarity equation of the variational problem and returns
/// the fit.
///
/// Varying `f_X̂` at `x` and integrating out `y` gives
/// `μ T(x) − (1+α₁) ln f_X̂(x) + a + b x² = 0` on the support of `f_X̂`,
/// with `T(x) = ∫ f_V̂(y − x) ln f_Y(y) dy`; varying `f_Y` forces
/// `λ(y) = −μ`, and every multiplier term that is polynomial in `x`
/// collapses into `a + b x²`. The three coefficients are fitted by weighted
/// least squares with weight `f_X̂(x)`, the `x`-marginal of the measure
/// `f_X̂(x) f_V̂(y − x)`.
pub fn fit_stationarity(
    fx: &GridDensity,
    fy: &GridDensity,
    fv: &GridDensity,
    mu: f64,
) -> Result<StationarityFit> {
    crate::eei_construct::check_mu(mu)?;
    let xs = fx.nodes();
    let ys = fy.nodes();
    let (nx, ny) = (xs.len(), ys.len());
    let (dx, dy) = (fx.dx(), fy.dx());

    // fy must match fx ⊛ fv on its nodes
    let fy_max = fy.values().iter().cloned().fold(0.0, f64::max);
    let mismatch = ys
        .par_iter()
        .zip(fy.values().par_iter())
        .map(|(&y, &f)| {
            // y − x ∈ supp f_V̂  ⇔  x ∈ y − supp f_V̂
            let lo_i = (((y - fv.hi()) - fx.lo()) / dx).floor().max(0.0) as usize;
            let hi_i =
                ((((y - fv.lo()) - fx.lo()) / dx).ceil() + 1.0).clamp(0.0, nx as f64) as usize;
            let conv: f64 = (lo_i.min(hi_i)..hi_i)
                .map(|i| trapz_weight(i, nx) * fx.values()[i] * fv.eval(y - xs[i]))
                .sum::<f64>()
                * dx;
            (conv - f).abs()
        })
        .reduce(|| 0.0, f64::max);
    if mismatch > 1e-4 * fy_max {
        return Err(EeiError::InconsistentDensity(format!(
            "f_Y differs from f_X ⊛ f_V by {mismatch:.3e}"
        )));
    }

    let ln_fy: Vec<f64> = fy.values().iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
    let t: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            kernel_window(fv, fy.lo(), dy, ny, x)
                .map(|j| trapz_weight(j, ny) * fv.eval(ys[j] - x) * ln_fy[j])
                .sum::<f64>()
                * dy
        })
        .collect();

    let rows: Vec<usize> = (0..nx).filter(|&i| fx.values()[i] > LOG_FLOOR).collect();
    let m = rows.len();
    let mut a = DMatrix::zeros(m, 3);
    let mut b = DVector::zeros(m);
    let mut wsum = 0.0;
    for (r, &i) in rows.iter().enumerate() {
        let w = fx.values()[i] * trapz_weight(i, nx) * dx;
        wsum += w;
        let sw = w.sqrt();
        a[(r, 0)] = -sw * fx.values()[i].ln();
        a[(r, 1)] = sw;
        a[(r, 2)] = sw * xs[i] * xs[i];
        b[r] = -sw * mu * t[i];
    }
    // equilibrate columns, then drop directions that are collinear to
    // rounding (ln f_X̂ is itself quadratic for a Gaussian, constant for a uniform)
    let norms: Vec<f64> = (0..3)
        .map(|c| a.column(c).norm().max(f64::MIN_POSITIVE))
        .collect();
    let mut a_eq = a.clone();
    for (c, nrm) in norms.iter().enumerate() {
        a_eq.column_mut(c).scale_mut(1.0 / nrm);
    }
    // reduce to a 3×3 triangle first; the tall SVD is not reliable here
    let qr = a_eq.qr();
    let qtb = qr.q().transpose() * &b;
    let svd = qr.r().svd(true, true);
    let smax = svd.singular_values.max();
    let z = svd
        .solve(&qtb, 1e-8 * smax)
        .map_err(|e| EeiError::NoConvergence(format!("least squares failed: {e}")))?;
    let coef = DVector::from_iterator(3, (0..3).map(|c| z[c] / norms[c]));
    let resid = &a * &coef - &b;
    let residual = (resid.norm_squared() / wsum).sqrt();
    Ok(StationarityFit {
        residual,
        coefficients: [coef[0], coef[1], coef[2]],
        entropy: entropy_quadrature(fx)?.value,
    })
}

/// Weighted RMS residual of the first-variation condition; near zero for
/// Gaussian pairs.
pub fn variational_first_residual(
    fx: &GridDensity,
    fy: &GridDensity,
    fv: &GridDensity,
    mu: f64,
) -> Result<f64> {
    Ok(fit_stationarity(fx, fy, fv, mu)?.residual)
}

/// Second variation
/// `∬ [−(1−α₁) f_V̂/f_X̂ h_X̂² + 2μ f_V̂/f_Y h_X̂ h_Y − μ f_X̂ f_V̂/f_Y² h_Y²]`
/// over the product grid of `fx` and `fy`.
///
/// The pointwise form in `(h_X̂, h_Y)` is negative semidefinite exactly
/// when `α₁ ≤ 1 − μ`; at `α₁ = 1 − μ` it equals
/// `−μ f_V̂/f_X̂ (h_X̂ − f_X̂ h_Y / f_Y)²`. Inputs with `α₁ < 1 − μ` are
/// rejected, so in the accepted range only the boundary value is
/// guaranteed to give a nonpositive result.
#[allow(clippy::too_many_arguments)]
pub fn variational_second_form(
    fx: &GridDensity,
    fy: &GridDensity,
    fv: &GridDensity,
    mu: f64,
    hx: &[f64],
    hy: &[f64],
    alpha1: f64,
) -> Result<f64> {
    crate::eei_construct::check_mu(mu)?;
    if alpha1 < 1.0 - mu {
        return Err(EeiError::InvalidInput(format!(
            "alpha1 = {alpha1} is below 1 - mu = {}",
            1.0 - mu
        )));
    }
    if hx.len() != fx.points() || hy.len() != fy.points() {
        return Err(EeiError::DimensionMismatch {
            expected: fx.points(),
            got: hx.len(),
        });
    }
    let xs = fx.nodes();
    let ys = fy.nodes();
    let (nx, ny) = (xs.len(), ys.len());
    let (dx, dy) = (fx.dx(), fy.dx());
    let total: f64 = (0..nx)
        .into_par_iter()
        .map(|i| {
            let fxi = fx.values()[i].max(LOG_FLOOR);
            let wi = trapz_weight(i, nx);
            kernel_window(fv, fy.lo(), dy, ny, xs[i])
                .map(|j| {
                    let fvij = fv.eval(ys[j] - xs[i]);
                    if fvij == 0.0 {
                        return 0.0;
                    }
                    let fyj = fy.values()[j].max(LOG_FLOOR);
                    let term = -(1.0 - alpha1) * fvij / fxi * hx[i] * hx[i]
                        + 2.0 * mu * fvij / fyj * hx[i] * hy[j]
                        - mu * fxi * fvij / (fyj * fyj) * hy[j] * hy[j];
                    wi * trapz_weight(j, ny) * term
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total * dx * dy)
}
