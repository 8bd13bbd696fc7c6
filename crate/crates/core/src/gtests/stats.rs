use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::beta_product::{beta_product_params, BetaProductParams, Engine, ExactNull};
use crate::covest::{
    conditional_residuals, conditional_scatter, sample_covariance, BlockPartition, Divisor,
    Hypothesis,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Elliptical,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "gaussian" => Ok(Method::Exact),
            "elliptical" => Ok(Method::Elliptical),
            other => Err(Error::InvalidParameter(format!("unknown test method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub pvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_params: Option<BetaProductParams>,
    pub partition: BlockPartition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

fn check_tested(a_cond: &DMatrix<f64>, part: &BlockPartition) -> Result<()> {
    part.require_test()?;
    let d = linalg::check_square(a_cond)?;
    if d != part.tested_dim() {
        return Err(Error::DimensionMismatch {
            expected: part.tested_dim(),
            got: d,
        });
    }
    Ok(())
}

/// `det A / Π det A_ii` over the tested blocks of an already conditioned scatter.
pub fn v_statistic(a_cond: &DMatrix<f64>, part: &BlockPartition) -> Result<f64> {
    check_tested(a_cond, part)?;
    let mut log_v = linalg::log_det_spd(a_cond)?;
    let mut start = 0;
    for &s in &part.sizes {
        log_v -= linalg::log_det_spd(&a_cond.view((start, start), (s, s)).into_owned())?;
        start += s;
    }
    Ok(log_v.exp().min(1.0))
}

/// Exact test on a full scatter estimate in test order (tested blocks, then
/// the conditioning block) from `q` clusters.
pub fn gaussian_exact_test(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    q: usize,
    engine: Engine,
) -> Result<TestResult> {
    let params = beta_product_params(q, part)?;
    let null = ExactNull::new(&params, engine, Execution::default())?;
    gaussian_exact_test_with_null(sigma, part, &params, &null, engine)
}

/// As [`gaussian_exact_test`] with a prepared null law, for repeated use.
pub fn gaussian_exact_test_with_null(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    params: &BetaProductParams,
    null: &ExactNull,
    engine: Engine,
) -> Result<TestResult> {
    let a_cond = conditional_scatter(sigma, part)?;
    let v = v_statistic(&a_cond, &part.conditioned())?;
    Ok(TestResult {
        method: Method::Exact,
        statistic: v,
        pvalue: null.pvalue(v)?,
        f: None,
        kappa: None,
        null_params: Some(params.clone()),
        partition: part.clone(),
        engine: Some(engine.tag().to_string()),
        diagnostics: Vec::new(),
    })
}

/// Plug-in kurtosis estimate from centered rows of the tested sub-vector and
/// their scatter: `E[(xᵀA⁻¹x)²] / (p(p+2)) - 1`.
pub fn estimate_kappa(rows: &DMatrix<f64>, a_cond: &DMatrix<f64>) -> Result<f64> {
    let p = linalg::check_square(a_cond)?;
    if rows.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: rows.ncols(),
        });
    }
    if rows.nrows() == 0 {
        return Err(Error::InvalidParameter("no rows for kurtosis estimate".into()));
    }
    let chol = linalg::cholesky(a_cond)?;
    let l = chol.l();
    let mut acc = 0.0;
    for r in rows.row_iter() {
        let z = l
            .solve_lower_triangular(&r.transpose())
            .ok_or(Error::NotPositiveDefinite)?;
        acc += z.norm_squared().powi(2);
    }
    let pf = p as f64;
    Ok(acc / rows.nrows() as f64 / (pf * (pf + 2.0)) - 1.0)
}

/// Asymptotic test: `-q Σ log V_i` against `(1+κ)χ²_f`.
pub fn elliptical_test(
    a_cond: &DMatrix<f64>,
    part: &BlockPartition,
    q: usize,
    kappa: f64,
) -> Result<TestResult> {
    check_tested(a_cond, part)?;
    if !(kappa > -1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kurtosis must exceed -1, got {kappa}")));
    }
    let qf = q as f64;
    let mut statistic = 0.0;
    let mut f = 0;
    for i in 1..part.sizes.len() {
        let pre = part.preceding(i);
        let di = part.sizes[i];
        let a_pre = a_cond.view((0, 0), (pre, pre)).into_owned();
        let a_cross = a_cond.view((pre, 0), (di, pre)).into_owned();
        let a_ii = a_cond.view((pre, pre), (di, di)).into_owned();
        let chol = linalg::cholesky(&a_pre)?;
        let h = (qf - 1.0) * &a_cross * chol.solve(&a_cross.transpose());
        let g = (qf - 1.0) * &a_ii - &h;
        let log_g = linalg::log_det_spd(&linalg::symmetrize(&g))
            .map_err(|_| Error::DegenerateRegressionBlock)?;
        let log_gh = linalg::log_det_spd(&linalg::symmetrize(&(&g + &h)))?;
        statistic -= qf * (log_g - log_gh);
        f += pre * di;
    }
    let statistic = statistic.max(0.0);
    let chi = ChiSquared::new(f as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let pvalue = chi.sf(statistic / (1.0 + kappa)).clamp(0.0, 1.0);
    Ok(TestResult {
        method: Method::Elliptical,
        statistic,
        pvalue,
        f: Some(f),
        kappa: Some(kappa),
        null_params: None,
        partition: part.clone(),
        engine: None,
        diagnostics: Vec::new(),
    })
}

/// Everything needed to run either test on raw `q × d` data.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTest {
    pub sigma: DMatrix<f64>,
    pub a_cond: DMatrix<f64>,
    pub kappa: f64,
    pub part: BlockPartition,
    pub q: usize,
}

impl DataTest {
    /// Sample covariance (divisor `q-1`) in test order, the conditional scatter,
    /// and κ̂ on the conditional residual rows.
    pub fn prepare(data: &DMatrix<f64>, hyp: &Hypothesis) -> Result<Self> {
        let arranged = hyp.arrange_columns(data);
        let part = hyp.partition();
        let est = sample_covariance(&arranged, Divisor::QMinus1)?;
        let a_cond = conditional_scatter(&est.matrix, &part)?;
        let resid = conditional_residuals(&arranged, &part)?;
        let kappa = estimate_kappa(&resid, &a_cond)?;
        Ok(Self {
            sigma: est.matrix,
            a_cond,
            kappa,
            part,
            q: data.nrows(),
        })
    }

    pub fn run(&self, method: Method, engine: Engine) -> Result<TestResult> {
        match method {
            Method::Exact => gaussian_exact_test(&self.sigma, &self.part, self.q, engine),
            Method::Elliptical => {
                elliptical_test(&self.a_cond, &self.part.conditioned(), self.q, self.kappa)
            }
        }
    }
}

pub fn test_data(
    data: &DMatrix<f64>,
    hyp: &Hypothesis,
    method: Method,
    engine: Engine,
) -> Result<TestResult> {
    DataTest::prepare(data, hyp)?.run(method, engine)
}
