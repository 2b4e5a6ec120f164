//! Dense symmetric-matrix primitives and Gaussian information quantities.
//!
//! [`CovMatrix`] is the currency of the crate: a symmetric positive
//! semidefinite matrix that remembers the relative eigenvalue tolerance it
//! was validated with. The PSD test is spectral rather than Cholesky-based
//! so that boundary-of-cone matrices (exact zero eigenvalues produced by the
//! constructions in [`crate::eei_construct`]) are accepted.

use std::f64::consts::{E, PI};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{EeiError, Result};

/// Default relative eigenvalue tolerance for the PSD test.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

/// Largest tolerated relative asymmetry before an input is rejected instead
/// of silently symmetrized.
const ASYMMETRY_TOL: f64 = 1e-9;

/// Symmetric positive semidefinite matrix with its PSD tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct CovMatrix {
    m: DMatrix<f64>,
    psd_tol: f64,
}

/// On-disk layout: `{"dim": n, "rows": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixJson> for CovMatrix {
    type Error = EeiError;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.rows.len() != j.dim {
            return Err(EeiError::DimensionMismatch {
                expected: j.dim,
                got: j.rows.len(),
            });
        }
        CovMatrix::from_rows(&j.rows)
    }
}

impl From<CovMatrix> for MatrixJson {
    fn from(c: CovMatrix) -> Self {
        let n = c.dim();
        MatrixJson {
            dim: n,
            rows: (0..n)
                .map(|i| (0..n).map(|j| c.m[(i, j)]).collect())
                .collect(),
        }
    }
}

impl CovMatrix {
    /// Validates and symmetrizes `m` with the default tolerance.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tol(m, DEFAULT_PSD_TOL)
    }

    pub fn with_tol(m: DMatrix<f64>, psd_tol: f64) -> Result<Self> {
        if !(psd_tol >= 0.0 && psd_tol.is_finite()) {
            return Err(EeiError::InvalidInput(format!(
                "psd_tol must be a nonnegative finite number, got {psd_tol}"
            )));
        }
        let (r, c) = m.shape();
        if r == 0 || r != c {
            return Err(EeiError::InvalidInput(format!(
                "covariance must be a nonempty square matrix, got {r}x{c}"
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(EeiError::InvalidInput(
                "covariance has non-finite entries".into(),
            ));
        }
        let mag = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > ASYMMETRY_TOL * mag {
            return Err(EeiError::InvalidInput(format!(
                "matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let m = symmetrize(&m);
        let min_eig = min_eigenvalue(&m);
        if min_eig < -psd_tol * spectral_scale(&m) {
            return Err(EeiError::NotPositiveSemidefinite {
                what: "covariance".into(),
                min_eig,
            });
        }
        Ok(CovMatrix { m, psd_tol })
    }

    /// Nearest PSD matrix in Frobenius norm, for computed quantities whose
    /// rounding may leave tiny negative eigenvalues.
    pub fn from_projection(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(project_psd(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(EeiError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, x))
    }

    pub fn identity(n: usize) -> Self {
        CovMatrix {
            m: DMatrix::identity(n, n),
            psd_tol: DEFAULT_PSD_TOL,
        }
    }

    pub fn zeros(n: usize) -> Self {
        CovMatrix {
            m: DMatrix::zeros(n, n),
            psd_tol: DEFAULT_PSD_TOL,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn psd_tol(&self) -> f64 {
        self.psd_tol
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }

    /// `max(1, largest |eigenvalue|)`, the reference magnitude for relative
    /// tolerances.
    pub fn scale(&self) -> f64 {
        spectral_scale(&self.m)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > self.psd_tol * self.scale()
    }

    /// Errors with `NotPositiveDefinite` unless the matrix is strictly PD.
    pub fn require_pd(&self, what: &str) -> Result<()> {
        let min_eig = self.min_eigenvalue();
        if min_eig > self.psd_tol * self.scale() {
            Ok(())
        } else {
            Err(EeiError::NotPositiveDefinite {
                what: what.to_string(),
                min_eig,
            })
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::with_tol(&self.m * s, self.psd_tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| EeiError::Parse(e.to_string()))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| EeiError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| EeiError::Parse(format!("{}: {e}", path.display())))
    }
}

/// Result of simultaneously diagonalizing `a ≻ 0` and `b ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SimDiagResult {
    /// Invertible with `qᵀ a q = I`.
    pub q: DMatrix<f64>,
    /// Diagonal of `qᵀ b q`, sorted descending.
    pub d: DVector<f64>,
}

/// Covariances of a candidate chain `Y1 -> Y2 -> Y3` built by independent
/// summation.
#[derive(Debug, Clone)]
pub struct MarkovTriple {
    pub s_y1: CovMatrix,
    pub s_y2: CovMatrix,
    pub s_y3: CovMatrix,
}

impl MarkovTriple {
    pub fn new(s_y1: CovMatrix, s_y2: CovMatrix, s_y3: CovMatrix) -> Result<Self> {
        check_dims(&s_y1, &s_y2)?;
        check_dims(&s_y1, &s_y3)?;
        Ok(MarkovTriple { s_y1, s_y2, s_y3 })
    }
}

pub(crate) fn check_dims(a: &CovMatrix, b: &CovMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(EeiError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending and
/// the eigenvector columns permuted to match.
pub fn eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `max(1, largest |eigenvalue|)`.
pub fn spectral_scale(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .amax()
        .max(1.0)
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn map_spectrum(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = eigh(m);
    let fd = DMatrix::from_diagonal(&vals.map(f));
    symmetrize(&(&vecs * fd * vecs.transpose()))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    map_spectrum(m, |x| x.max(0.0))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    symmetrize(m).cholesky().map(|c| symmetrize(&c.inverse()))
}

/// `ln det m` for symmetric positive definite `m`.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let c = symmetrize(m).cholesky()?;
    let ld = 2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    ld.is_finite().then_some(ld)
}

/// `a ⪯ b` in the PSD order, relative to `max(1, |eig(b − a)|)`.
pub fn psd_leq(a: &CovMatrix, b: &CovMatrix, tol: f64) -> Result<bool> {
    check_dims(a, b)?;
    let diff = b.matrix() - a.matrix();
    Ok(min_eigenvalue(&diff) >= -tol * spectral_scale(&diff))
}

/// Finds `Q` with `Qᵀ a Q = I` and `Qᵀ b Q = diag(d)`.
///
/// Whitens by the symmetric inverse square root of `a`, then diagonalizes
/// the whitened `b` orthogonally. Entries of `d` are sorted descending and
/// each column of the orthogonal factor has its first nonzero component
/// made positive, so the output is reproducible.
pub fn simdiag(a: &CovMatrix, b: &CovMatrix) -> Result<SimDiagResult> {
    check_dims(a, b)?;
    a.require_pd("simdiag first argument")?;
    let a_is = map_spectrum(a.matrix(), |x| 1.0 / x.sqrt());
    let c = symmetrize(&(&a_is * b.matrix() * &a_is));
    let (vals, vecs) = eigh(&c);
    let n = vals.len();
    let mut u = DMatrix::zeros(n, n);
    let mut d = DVector::zeros(n);
    // eigh is ascending; walk it backwards for descending order, keeping the
    // solver's order among ties
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    for (k, &i) in order.iter().enumerate() {
        let mut col = vecs.column(i).into_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-10) {
            if *first < 0.0 {
                col = -col;
            }
        }
        u.set_column(k, &col);
        d[k] = vals[i].max(0.0);
    }
    Ok(SimDiagResult { q: a_is * u, d })
}

/// `½ ln((2πe)ⁿ det s)` in nats.
pub fn gaussian_entropy(s: &CovMatrix) -> Result<f64> {
    let n = s.dim() as f64;
    let ld = log_det_spd(s.matrix()).ok_or_else(|| {
        EeiError::SingularCovariance("entropy needs a positive definite covariance".into())
    })?;
    Ok(0.5 * (n * (2.0 * PI * E).ln() + ld))
}

/// Posterior covariance `Σ_X − Σ_X(Σ_X+Σ_Z)⁻¹Σ_X` of `X` given `X + Z`.
///
/// Evaluated in the Joseph form `(I−G)Σ_X(I−G)ᵀ + GΣ_ZGᵀ` with
/// `G = Σ_X(Σ_X+Σ_Z)⁻¹`, which stays PSD under rounding.
pub fn gaussian_conditional_cov(s_x: &CovMatrix, s_z: &CovMatrix) -> Result<CovMatrix> {
    check_dims(s_x, s_z)?;
    let sum = s_x.matrix() + s_z.matrix();
    let chol = symmetrize(&sum)
        .cholesky()
        .ok_or_else(|| EeiError::SingularCovariance("Σ_X + Σ_Z must be invertible".into()))?;
    // G = Σ_X S⁻¹ = (S⁻¹ Σ_X)ᵀ
    let g = chol.solve(s_x.matrix()).transpose();
    let n = s_x.dim();
    let i_g = DMatrix::identity(n, n) - &g;
    let post = &i_g * s_x.matrix() * i_g.transpose() + &g * s_z.matrix() * g.transpose();
    CovMatrix::with_tol(symmetrize(&post), s_x.psd_tol())
}

/// Frobenius norm of `M = 2Σ₁ − Σ₂Σ₃⁻¹Σ₁ − Σ₁Σ₃⁻¹Σ₂`.
///
/// Zero certifies that the quadratic form in the moment generating function
/// factorization vanishes for every argument, so `Y1` and `Y2` are
/// conditionally independent given `Y3`.
pub fn markov_residual(t: &MarkovTriple) -> Result<f64> {
    let chol = t
        .s_y3
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| EeiError::SingularCovariance("Σ_Y3 must be positive definite".into()))?;
    let p = t.s_y2.matrix() * chol.solve(t.s_y1.matrix());
    let m = t.s_y1.matrix() * 2.0 - &p - p.transpose();
    Ok(m.norm())
}
