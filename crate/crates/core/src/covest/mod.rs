//! Covariance and scatter estimation for the random components.
//!
//! Covers sample covariances with either divisor, the conditional scatter
//! (Schur complement of a conditioning block), cluster-level prediction of the
//! random components and approximate maximum likelihood from those predictions.

mod approx_ml;
mod predict;
mod quadrature;

pub use approx_ml::{
    elliptical_approx_ml, elliptical_loglik, gaussian_approx_ml, gaussian_loglik, MlFit,
    MlOptions,
};
pub use predict::{
    covariance_from_predictions, predict_random_components, predict_random_components_with,
    MarginShape, PredictionFit, PredictionSet, PredictorConfig,
};
pub use quadrature::{gauss_hermite_rule, GaussHermite};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divisor {
    #[serde(rename = "q-1")]
    QMinus1,
    #[serde(rename = "q")]
    Q,
}

/// A covariance matrix together with how it was estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub divisor: Divisor,
    pub q: usize,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Centered outer-product average of the rows of `data` (q × d).
pub fn sample_covariance(data: &DMatrix<f64>, divisor: Divisor) -> Result<CovarianceEstimate> {
    let q = data.nrows();
    if q < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample covariance needs at least 2 rows, got {q}"
        )));
    }
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let denom = match divisor {
        Divisor::QMinus1 => (q - 1) as f64,
        Divisor::Q => q as f64,
    };
    let matrix = linalg::symmetrize(&(centered.transpose() * &centered / denom));
    Ok(CovarianceEstimate { matrix, divisor, q })
}

/// Group sizes `(d_1, ..., d_{k-1})` of the tested blocks plus the size `d_k`
/// of the conditioning block, which always comes last.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPartition {
    pub sizes: Vec<usize>,
    pub cond_size: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>, cond_size: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "block sizes must be positive and non-empty".into(),
            ));
        }
        Ok(Self { sizes, cond_size })
    }

    pub fn tested_dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn total_dim(&self) -> usize {
        self.tested_dim() + self.cond_size
    }

    /// Number of leading coordinates before block `i` (0-based), `d̄` in the
    /// usual notation.
    pub fn preceding(&self, i: usize) -> usize {
        self.sizes[..i].iter().sum()
    }

    /// Partition of the tested part only (after conditioning).
    pub fn conditioned(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            cond_size: 0,
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                got: d,
            });
        }
        Ok(())
    }

    pub(crate) fn require_test(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::InvalidParameter(
                "a test needs at least two tested blocks".into(),
            ));
        }
        Ok(())
    }
}

/// Which conditioning set to use when selecting coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    /// All coordinates not in a tested block.
    Rest,
    None,
    Indices(Vec<usize>),
}

/// Coordinate selection for a test: tested blocks and a conditioning set, all
/// as 0-based coordinate indices of the full vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypothesis {
    pub blocks: Vec<Vec<usize>>,
    pub condition: Vec<usize>,
}

impl Hypothesis {
    pub fn new(blocks: Vec<Vec<usize>>, condition: Condition, dim: usize) -> Result<Self> {
        let tested: Vec<usize> = blocks.iter().flatten().copied().collect();
        let condition = match condition {
            Condition::Rest => (0..dim).filter(|i| !tested.contains(i)).collect(),
            Condition::None => Vec::new(),
            Condition::Indices(v) => v,
        };
        let h = Self { blocks, condition };
        h.validate(dim)?;
        Ok(h)
    }

    /// Consecutive blocks of the given sizes starting at coordinate 0.
    pub fn leading(sizes: &[usize], condition: Condition, dim: usize) -> Result<Self> {
        let mut start = 0;
        let blocks = sizes
            .iter()
            .map(|&s| {
                let b: Vec<usize> = (start..start + s).collect();
                start += s;
                b
            })
            .collect();
        Self::new(blocks, condition, dim)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let order = self.order();
        let mut seen = vec![false; dim];
        for &i in &order {
            if i >= dim {
                return Err(Error::InvalidParameter(format!(
                    "coordinate {} out of range for dimension {dim}",
                    i + 1
                )));
            }
            if seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "coordinate {} used twice",
                    i + 1
                )));
            }
            seen[i] = true;
        }
        if self.blocks.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("empty tested block".into()));
        }
        Ok(())
    }

    /// Coordinates in test order: tested blocks, then the conditioning set.
    pub fn order(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .flatten()
            .chain(self.condition.iter())
            .copied()
            .collect()
    }

    pub fn partition(&self) -> BlockPartition {
        BlockPartition {
            sizes: self.blocks.iter().map(Vec::len).collect(),
            cond_size: self.condition.len(),
        }
    }

    /// Permutes a covariance matrix into test order.
    pub fn arrange(&self, m: &DMatrix<f64>) -> (DMatrix<f64>, BlockPartition) {
        (linalg::principal(m, &self.order()), self.partition())
    }

    /// Selects and reorders the columns of a data matrix.
    pub fn arrange_columns(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let order = self.order();
        DMatrix::from_fn(data.nrows(), order.len(), |r, c| data[(r, order[c])])
    }
}

/// Scatter of the tested coordinates given the conditioning block:
/// `Λ̃ - Λ̃_{·k} Λ_kk⁻¹ Λ̃_{k·}`. With no conditioning block the input is
/// returned unchanged.
pub fn conditional_scatter(scatter: &DMatrix<f64>, part: &BlockPartition) -> Result<DMatrix<f64>> {
    let d = linalg::check_square(scatter)?;
    part.check_dim(d)?;
    if part.cond_size == 0 {
        return Ok(scatter.clone());
    }
    let t = part.tested_dim();
    let k = part.cond_size;
    let a11 = scatter.view((0, 0), (t, t));
    let a12 = scatter.view((0, t), (t, k)).into_owned();
    let a22 = scatter.view((t, t), (k, k)).into_owned();
    let chol = linalg::cholesky(&a22)?;
    let solved = chol.solve(&a12.transpose());
    Ok(linalg::symmetrize(&(a11 - a12 * solved)))
}

/// Residuals of the tested coordinates after regressing on the conditioning
/// block with the sample regression coefficients. Rows are returned centered.
pub fn conditional_residuals(data: &DMatrix<f64>, part: &BlockPartition) -> Result<DMatrix<f64>> {
    part.check_dim(data.ncols())?;
    let mut centered = data.clone();
    let mean = data.row_mean();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let t = part.tested_dim();
    let tested = centered.columns(0, t).into_owned();
    if part.cond_size == 0 {
        return Ok(tested);
    }
    let cond = centered.columns(t, part.cond_size).into_owned();
    let gram = cond.transpose() * &cond;
    let chol = linalg::cholesky(&gram)?;
    let coef = chol.solve(&(cond.transpose() * &tested));
    Ok(tested - cond * coef)
}
