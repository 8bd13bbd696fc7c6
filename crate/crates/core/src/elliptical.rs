//! Regular elliptically contoured laws for the cluster-level random components.
//!
//! A law is `|Λ|^{-1/2} h(bᵀΛ⁻¹b)` with a Gaussian or Student-t generator `h`
//! and zero location.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::stream_rng;

/// Symmetry tolerance accepted for scatter and covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum EllipticalFamily {
    Gaussian,
    #[serde(rename = "t")]
    StudentT { nu: f64 },
}

impl EllipticalFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EllipticalFamily::Gaussian => Ok(()),
            EllipticalFamily::StudentT { nu } if nu.is_finite() && nu > 4.0 => Ok(()),
            EllipticalFamily::StudentT { nu } => Err(Error::InvalidParameter(format!(
                "Student-t degrees of freedom must exceed 4 (fourth moments), got {nu}"
            ))),
        }
    }

    /// Ratio between covariance and scatter, `Σ = ratio · Λ`.
    pub fn covariance_ratio(&self) -> f64 {
        match *self {
            EllipticalFamily::Gaussian => 1.0,
            EllipticalFamily::StudentT { nu } => nu / (nu - 2.0),
        }
    }

    /// Kurtosis parameter κ with `E[(XᵀΣ⁻¹X)²] = (1+κ) d(d+2)`.
    pub fn kappa(&self) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            EllipticalFamily::Gaussian => 0.0,
            EllipticalFamily::StudentT { nu } => 2.0 / (nu - 4.0),
        })
    }
}

/// Symmetric positive definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct ScatterMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for ScatterMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl ScatterMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        linalg::check_square(&matrix)?;
        let asym = linalg::max_asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let matrix = linalg::symmetrize(&matrix);
        let chol = linalg::cholesky(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Lower Cholesky factor.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|p| p.ln()).sum::<f64>()
    }

    /// `bᵀΛ⁻¹b`.
    pub fn mahalanobis(&self, b: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has positive pivots");
        z.norm_squared()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        linalg::symmetrize(&self.chol.inverse())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.matrix)
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// How a user-supplied matrix is interpreted for a Student-t law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixRole {
    /// The matrix is the scatter Λ itself.
    #[default]
    Scatter,
    /// The matrix is the covariance Σ; the scatter becomes `Σ (ν-2)/ν`.
    Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipticalSpecJson", into = "EllipticalSpecJson")]
pub struct EllipticalSpec {
    pub family: EllipticalFamily,
    pub scatter: ScatterMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EllipticalSpecJson {
    #[serde(flatten)]
    family: EllipticalFamily,
    scatter: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_scatter_role")]
    matrix_role: MatrixRole,
}

fn is_scatter_role(r: &MatrixRole) -> bool {
    *r == MatrixRole::Scatter
}

impl TryFrom<EllipticalSpecJson> for EllipticalSpec {
    type Error = Error;

    fn try_from(raw: EllipticalSpecJson) -> Result<Self> {
        let m = matrix_from_rows(&raw.scatter)?;
        match raw.matrix_role {
            MatrixRole::Scatter => EllipticalSpec::new(raw.family, m),
            MatrixRole::Covariance => EllipticalSpec::from_covariance(raw.family, m),
        }
    }
}

impl From<EllipticalSpec> for EllipticalSpecJson {
    fn from(spec: EllipticalSpec) -> Self {
        EllipticalSpecJson {
            family: spec.family,
            scatter: spec.scatter.to_rows(),
            matrix_role: MatrixRole::Scatter,
        }
    }
}

impl EllipticalSpec {
    pub fn new(family: EllipticalFamily, scatter: DMatrix<f64>) -> Result<Self> {
        family.validate()?;
        Ok(Self {
            family,
            scatter: ScatterMatrix::new(scatter)?,
        })
    }

    pub fn gaussian(scatter: DMatrix<f64>) -> Result<Self> {
        Self::new(EllipticalFamily::Gaussian, scatter)
    }

    pub fn student_t(nu: f64, scatter: DMatrix<f64>) -> Result<Self> {
        Self::new(EllipticalFamily::StudentT { nu }, scatter)
    }

    /// Builds the law whose covariance (not scatter) equals `covariance`.
    pub fn from_covariance(family: EllipticalFamily, covariance: DMatrix<f64>) -> Result<Self> {
        family.validate()?;
        Self::new(family, covariance / family.covariance_ratio())
    }

    pub fn dim(&self) -> usize {
        self.scatter.dim()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.scatter.matrix() * self.family.covariance_ratio()
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        let d = self.dim();
        if point.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: point.len(),
            });
        }
        let m = self.scatter.mahalanobis(&DVector::from_column_slice(point));
        Ok(log_generator(self.family, d, m) - 0.5 * self.scatter.log_det())
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, q: usize, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let l = self.scatter.cholesky_factor();
        let chi = match self.family {
            EllipticalFamily::StudentT { nu } => {
                Some((nu, ChiSquared::new(nu).expect("nu validated positive")))
            }
            EllipticalFamily::Gaussian => None,
        };
        let mut out = DMatrix::zeros(q, d);
        let mut z = DVector::zeros(d);
        for row in 0..q {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let mut x = &l * &z;
            if let Some((nu, chi)) = &chi {
                let w: f64 = chi.sample(rng);
                x /= (w / nu).sqrt();
            }
            out.set_row(row, &x.transpose());
        }
        out
    }
}

/// `log h(m)` for the normalized generator in dimension `d`.
pub fn log_generator(family: EllipticalFamily, d: usize, m: f64) -> f64 {
    let d = d as f64;
    match family {
        EllipticalFamily::Gaussian => -0.5 * d * (2.0 * PI).ln() - 0.5 * m,
        EllipticalFamily::StudentT { nu } => {
            ln_gamma(0.5 * (nu + d)) - ln_gamma(0.5 * nu) - 0.5 * d * (nu * PI).ln()
                - 0.5 * (nu + d) * (m / nu).ln_1p()
        }
    }
}

/// `q` independent rows drawn from `spec`, reproducible from `seed`.
pub fn sample_elliptical(spec: &EllipticalSpec, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(spec.sample_with(q, &mut rng))
}

pub fn density_elliptical(spec: &EllipticalSpec, point: &[f64]) -> Result<f64> {
    Ok(spec.log_density(point)?.exp())
}

pub fn theoretical_kappa(spec: &EllipticalSpec) -> Result<f64> {
    spec.family.kappa()
}
