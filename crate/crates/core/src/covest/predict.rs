//! Margin-wise prediction of the cluster random components.
//!
//! Each margin is handled on its own: fixed effects by a GLM fit that ignores
//! the random effects, the prior variance by moments of per-cluster score
//! residuals (refined twice), and each `b̂` as the mode of the penalized cluster
//! log-likelihood with the Laplace curvature as its conditional variance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sample_covariance, CovarianceEstimate, Divisor};
use crate::dispersion::{Family, Link, LongDataset, MarginSpec, MglmmSpec, Observation};
use crate::error::{Error, Result};
use crate::exec::Execution;

const MAX_NEWTON: usize = 100;
const MIN_PRIOR_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginShape {
    #[serde(flatten)]
    pub family: Family,
    pub link: Link,
    /// Known dispersion; when absent it is 1 for Poisson and binomial margins
    /// and estimated from within-cluster residuals otherwise.
    #[serde(default)]
    pub dispersion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub margins: Vec<MarginShape>,
    /// Fixed prior variances of the random components, one per margin.
    pub prior_variance: Option<Vec<f64>>,
    pub execution: Execution,
}

impl PredictorConfig {
    pub fn new(margins: Vec<MarginShape>) -> Self {
        Self {
            margins,
            prior_variance: None,
            execution: Execution::default(),
        }
    }

    /// Families and links of a simulation spec; dispersions are treated as
    /// unknown for Gamma and Gaussian margins.
    pub fn from_spec(spec: &MglmmSpec) -> Self {
        Self::new(
            spec.margins
                .iter()
                .map(|m| MarginShape {
                    family: m.family,
                    link: m.link,
                    dispersion: match m.family {
                        Family::Poisson | Family::Binomial { .. } => Some(1.0),
                        _ => None,
                    },
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Predicted random components, q × d.
    pub bhat: DMatrix<f64>,
    /// Conditional variances of the predictions, q × d.
    pub cond_var: DMatrix<f64>,
}

impl PredictionSet {
    pub fn new(bhat: DMatrix<f64>, cond_var: DMatrix<f64>) -> Result<Self> {
        if bhat.shape() != cond_var.shape() {
            return Err(Error::DimensionMismatch {
                expected: bhat.len(),
                got: cond_var.len(),
            });
        }
        if cond_var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "conditional variances must be finite and positive".into(),
            ));
        }
        Ok(Self { bhat, cond_var })
    }

    pub fn q(&self) -> usize {
        self.bhat.nrows()
    }

    pub fn dim(&self) -> usize {
        self.bhat.ncols()
    }
}

/// Sample covariance of the predictions with the `1/(q-1)` divisor.
pub fn covariance_from_predictions(preds: &PredictionSet) -> Result<CovarianceEstimate> {
    sample_covariance(&preds.bhat, Divisor::QMinus1)
}

pub fn predict_random_components(
    data: &LongDataset,
    config: &PredictorConfig,
) -> Result<PredictionSet> {
    predict_random_components_with(data, config).map(|p| p.predictions)
}

/// Prediction output plus the fitted nuisance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFit {
    pub predictions: PredictionSet,
    pub beta: Vec<Vec<f64>>,
    pub dispersion: Vec<f64>,
    pub prior_variance: Vec<f64>,
}

pub fn predict_random_components_with(
    data: &LongDataset,
    config: &PredictorConfig,
) -> Result<PredictionFit> {
    data.validate()?;
    let d = data.n_margins;
    let q = data.n_clusters;
    if config.margins.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: config.margins.len(),
        });
    }
    if let Some(pv) = &config.prior_variance {
        if pv.len() != d || pv.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(
                "prior variances must be positive, one per margin".into(),
            ));
        }
    }
    let groups = data.groups();
    let exec = config.execution;

    let mut bhat = DMatrix::zeros(q, d);
    let mut cond_var = DMatrix::zeros(q, d);
    let mut betas = Vec::with_capacity(d);
    let mut dispersions = Vec::with_capacity(d);
    let mut priors = Vec::with_capacity(d);

    for (j, shape) in config.margins.iter().enumerate() {
        let rows: Vec<&Observation> = data.margin_rows(j).collect();
        let beta = fit_glm(shape, &rows)?;
        let clusters: Vec<Vec<&Observation>> = (0..q)
            .map(|c| groups[j * q + c].iter().map(|&i| &data.rows[i]).collect())
            .collect();

        let mut margin = MarginSpec {
            family: shape.family,
            link: shape.link,
            beta: beta.clone(),
            dispersion: 1.0,
        };
        margin.dispersion = match (shape.dispersion, shape.family) {
            (Some(l), _) => l,
            (None, Family::Poisson | Family::Binomial { .. }) => 1.0,
            (None, _) => estimate_dispersion(&margin, &clusters, exec, j)?,
        };
        margin.validate()?;

        let sigma2 = match &config.prior_variance {
            Some(pv) => pv[j],
            None => estimate_prior_variance(&margin, &clusters, exec, j)?,
        };

        let modes = exec.try_map(q, |c| cluster_mode(&margin, &clusters[c], Some(sigma2), j, c))?;
        for (c, (b, v)) in modes.into_iter().enumerate() {
            bhat[(c, j)] = b;
            cond_var[(c, j)] = v;
        }
        betas.push(beta);
        dispersions.push(margin.dispersion);
        priors.push(sigma2);
    }

    Ok(PredictionFit {
        predictions: PredictionSet::new(bhat, cond_var)?,
        beta: betas,
        dispersion: dispersions,
        prior_variance: priors,
    })
}

/// Starting mean for a GLM fit, kept inside the family's domain.
fn start_mean(family: Family, y: f64) -> f64 {
    match family {
        Family::Poisson => y + 0.1,
        Family::Gamma | Family::Gaussian => y,
        Family::Binomial { trials } => {
            let m = trials as f64;
            m * (y + 0.5) / (m + 1.0)
        }
    }
}

fn link_fn(link: Link, family: Family, mu: f64) -> f64 {
    let p = match family {
        Family::Binomial { trials } => mu / trials as f64,
        _ => mu,
    };
    match link {
        Link::Log => p.ln(),
        Link::Logit => (p / (1.0 - p)).ln(),
        Link::Identity => p,
    }
}

/// Fisher scoring for the fixed effects of one margin, random effects ignored.
fn fit_glm(shape: &MarginShape, rows: &[&Observation]) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, |r| r.x.len());
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, k| rows[i].x[k]);
    let mut eta: Vec<f64> = rows
        .iter()
        .map(|r| link_fn(shape.link, shape.family, start_mean(shape.family, r.y)))
        .collect();
    let margin = MarginSpec {
        family: shape.family,
        link: shape.link,
        beta: vec![0.0; p],
        dispersion: 1.0,
    };
    let mut beta = DVector::zeros(p);
    let mut last_dev = f64::INFINITY;
    for _ in 0..100 {
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let (mu, d1, _) = margin.mean_derivatives(eta[i]);
            let (v, _) = shape.family.variance_and_slope(mu);
            w[i] = d1 * d1 / v;
            z[i] = eta[i] + (rows[i].y - mu) / d1;
        }
        let xtw = DMatrix::from_fn(p, n, |k, i| x[(i, k)] * w[i]);
        let lhs = &xtw * &x;
        let rhs = &xtw * &z;
        beta = lhs
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("singular fixed-effect design".into()))?
            .solve(&rhs);
        let new_eta = &x * &beta;
        let mut dev = 0.0;
        for i in 0..n {
            let mu = margin.mean(new_eta[i]);
            if !shape.family.mean_in_domain(mu) {
                return Err(Error::Domain(format!(
                    "fixed-effect fit left the {} mean domain",
                    shape.family.name()
                )));
            }
            dev += shape.family.deviance_raw(rows[i].y, mu);
        }
        eta = new_eta.iter().copied().collect();
        if (last_dev - dev).abs() <= 1e-12 * (1.0 + dev.abs()) {
            break;
        }
        last_dev = dev;
    }
    Ok(beta.iter().copied().collect())
}

/// Pearson estimate of the dispersion from residuals around each cluster's
/// unpenalized fitted mean.
fn estimate_dispersion(
    margin: &MarginSpec,
    clusters: &[Vec<&Observation>],
    exec: Execution,
    j: usize,
) -> Result<f64> {
    let n: usize = clusters.iter().map(Vec::len).sum();
    let df = n as isize - clusters.len() as isize - margin.beta.len() as isize;
    if df <= 0 {
        return Err(Error::InvalidParameter(format!(
            "margin {}: too few replicates to estimate the dispersion; supply it",
            j + 1
        )));
    }
    let unit = MarginSpec {
        dispersion: 1.0,
        ..margin.clone()
    };
    let pearson = exec.try_map(clusters.len(), |c| {
        let (b, _) = cluster_mode(&unit, &clusters[c], None, j, c)?;
        Ok::<f64, Error>(
            clusters[c]
                .iter()
                .map(|o| {
                    let mu = unit.mean(unit.linear_predictor(&o.x, b));
                    let (v, _) = unit.family.variance_and_slope(mu);
                    (o.y - mu).powi(2) / v
                })
                .sum(),
        )
    })?;
    Ok(pearson.iter().sum::<f64>() / df as f64)
}

fn estimate_prior_variance(
    margin: &MarginSpec,
    clusters: &[Vec<&Observation>],
    exec: Execution,
    j: usize,
) -> Result<f64> {
    let q = clusters.len() as f64;
    // score residuals at b = 0: u = S(0) / I(0), Var(u) ≈ σ² + 1/I(0)
    let (u, inv_info): (Vec<f64>, Vec<f64>) = clusters
        .iter()
        .map(|obs| {
            let (s, _, e) = cluster_derivatives(margin, obs, 0.0);
            (s / e, 1.0 / e)
        })
        .unzip();
    let mean_u = u.iter().sum::<f64>() / q;
    let var_u = u.iter().map(|v| (v - mean_u).powi(2)).sum::<f64>() / q;
    let mut sigma2 = (var_u - inv_info.iter().sum::<f64>() / q).max(MIN_PRIOR_VARIANCE);
    for _ in 0..2 {
        let modes = exec.try_map(clusters.len(), |c| {
            cluster_mode(margin, &clusters[c], Some(sigma2), j, c)
        })?;
        let mean_b = modes.iter().map(|m| m.0).sum::<f64>() / q;
        sigma2 = (modes
            .iter()
            .map(|(b, v)| (b - mean_b).powi(2) + v)
            .sum::<f64>()
            / q)
            .max(MIN_PRIOR_VARIANCE);
    }
    Ok(sigma2)
}

/// Cluster log-likelihood in `b` up to a constant, `-Σ d(y, μ)/(2λ)`.
fn cluster_loglik(margin: &MarginSpec, obs: &[&Observation], b: f64) -> f64 {
    let mut total = 0.0;
    for o in obs {
        let mu = margin.mean(margin.linear_predictor(&o.x, b));
        if !margin.family.mean_in_domain(mu) {
            return f64::NEG_INFINITY;
        }
        total -= margin.family.deviance_raw(o.y, mu) / (2.0 * margin.dispersion);
    }
    total
}

/// Score, observed second derivative and expected information in `b`.
fn cluster_derivatives(margin: &MarginSpec, obs: &[&Observation], b: f64) -> (f64, f64, f64) {
    let lambda = margin.dispersion;
    let (mut s, mut h, mut e) = (0.0, 0.0, 0.0);
    for o in obs {
        let (mu, d1, d2) = margin.mean_derivatives(margin.linear_predictor(&o.x, b));
        let (v, dv) = margin.family.variance_and_slope(mu);
        let r = o.y - mu;
        s += r * d1 / (lambda * v);
        h += -d1 * d1 / (lambda * v) - r * dv * d1 * d1 / (lambda * v * v) + r * d2 / (lambda * v);
        e += d1 * d1 / (lambda * v);
    }
    (s, h, e)
}

/// Safeguarded Newton for the mode of the (optionally penalized) cluster
/// log-likelihood. Returns `(mode, 1 / curvature)`.
fn cluster_mode(
    margin: &MarginSpec,
    obs: &[&Observation],
    sigma2: Option<f64>,
    margin_index: usize,
    cluster: usize,
) -> Result<(f64, f64)> {
    let penalty = sigma2.map_or(0.0, |s| 1.0 / s);
    let objective = |b: f64| cluster_loglik(margin, obs, b) - 0.5 * penalty * b * b;
    let fail = || Error::NewtonNonConvergence {
        margin: margin_index + 1,
        cluster: cluster + 1,
    };
    let mut b = 0.0;
    let mut f = objective(b);
    if !f.is_finite() {
        return Err(Error::Domain(format!(
            "margin {}, cluster {}: starting point outside the mean domain",
            margin_index + 1,
            cluster + 1
        )));
    }
    for _ in 0..MAX_NEWTON {
        let (s, h, e) = cluster_derivatives(margin, obs, b);
        let score = s - penalty * b;
        let observed = -h + penalty;
        let curvature = if observed > 0.0 { observed } else { e + penalty };
        if !(curvature > 0.0) {
            return Err(fail());
        }
        let mut step = (score / curvature).clamp(-2.0, 2.0);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = objective(b + step);
            if cand.is_finite() && cand >= f - 1e-12 * f.abs().max(1.0) {
                b += step;
                f = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(fail());
        }
        if step.abs() <= 1e-10 * (1.0 + b.abs()) || score.abs() <= 1e-13 {
            let (_, h, e) = cluster_derivatives(margin, obs, b);
            let observed = -h + penalty;
            let curvature = if observed > 0.0 { observed } else { e + penalty };
            return Ok((b, 1.0 / curvature));
        }
    }
    Err(fail())
}
