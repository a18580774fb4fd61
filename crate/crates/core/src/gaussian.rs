//! Dense Gaussian helpers shared by the generator and the classifier.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Builds a square matrix from nested rows, checking it is `dim × dim`.
pub fn matrix_from_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidConfig(format!("{what} must be {dim}x{dim}")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Symmetry is checked to a relative tolerance because nalgebra only reads
/// the lower triangle.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    let symmetric = (0..m.nrows())
        .all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-10 * scale));
    if !symmetric || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { what: what.into() });
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite { what: what.into() })
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky_lower(m, "").is_ok()
}

/// Log-determinant from a lower Cholesky factor.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// A multivariate normal with its inverse Cholesky factor cached, so that
/// `log_pdf` runs without allocating.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    dim: usize,
    mean: Vec<f64>,
    /// Row-major lower-triangular `L^{-1}` where `Σ = L Lᵀ`.
    inv_chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: cov.nrows(),
            });
        }
        let l = cholesky_lower(cov, "covariance")?;
        let inv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: "covariance".into(),
            })?;
        let mut inv_chol = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                inv_chol[i * dim + j] = inv[(i, j)];
            }
        }
        let log_norm = -0.5 * (dim as f64 * LN_2PI + log_det_from_cholesky(&l));
        Ok(Self {
            dim,
            mean: mean.iter().copied().collect(),
            inv_chol,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Squared Mahalanobis distance `(x-μ)ᵀ Σ⁻¹ (x-μ)`.
    #[inline]
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.inv_chol[i * d..i * d + i + 1];
            let mut z = 0.0;
            for (j, w) in row.iter().enumerate() {
                z += w * (x[j] - self.mean[j]);
            }
            acc += z * z;
        }
        acc
    }

    #[inline]
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }
}

/// `log Σ exp(v_i)`, stable for large magnitudes. Returns `-inf` for an
/// all `-inf` input.
#[inline]
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Serializes a `DVector` as a plain JSON array.
pub(crate) mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serializes a square `DMatrix` as an array of rows.
pub(crate) mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows, rows.len(), "matrix").map_err(D::Error::custom)
    }
}
