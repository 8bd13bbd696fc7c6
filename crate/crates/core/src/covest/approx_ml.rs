//! Approximate maximum likelihood for Σ from predicted random components.
//!
//! Given `b̂_j | b_j ~ N(b_j, V̂_j)` with diagonal `V̂_j`, the marginal likelihood
//! of `b̂_j` is `∫ φ(b; Σ) N(b̂_j; b, V̂_j) db`. In the Gaussian case this is
//! `N(b̂_j; 0, Σ + V̂_j)` in closed form; for a general elliptical generator the
//! integral is approximated on a tensor Gauss–Hermite grid. Predictions are
//! centered first since the intercepts absorb their mean.

use nalgebra::{DMatrix, DVector};

use super::quadrature::{gauss_hermite_rule, GaussHermite};
use super::{sample_covariance, Divisor, PredictionSet};
use crate::elliptical::{log_generator, EllipticalFamily, ScatterMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Largest tensor grid accepted by [`elliptical_approx_ml`].
pub const MAX_GRID_POINTS: usize = 1_000_000;
pub const MAX_GRID_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MlOptions {
    /// Evaluation budget per simplex run.
    pub max_evaluations: usize,
    /// Relative spread of simplex values at which a run stops.
    pub tolerance: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 200_000,
            tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub sigma: DMatrix<f64>,
    pub loglik: f64,
    pub init_loglik: f64,
    pub evaluations: usize,
}

fn centered(preds: &PredictionSet) -> PredictionSet {
    let mean = preds.bhat.row_mean();
    let mut bhat = preds.bhat.clone();
    for mut row in bhat.row_iter_mut() {
        row -= &mean;
    }
    PredictionSet {
        bhat,
        cond_var: preds.cond_var.clone(),
    }
}

/// `Σ_j log N(b̂_j; 0, Σ + V̂_j)` on the predictions as given.
pub fn gaussian_loglik(preds: &PredictionSet, sigma: &DMatrix<f64>) -> Result<f64> {
    let d = preds.dim();
    if sigma.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for j in 0..preds.q() {
        let mut m = sigma.clone();
        for k in 0..d {
            m[(k, k)] += preds.cond_var[(j, k)];
        }
        let chol = linalg::cholesky(&m)?;
        let b = preds.bhat.row(j).transpose();
        let z = chol
            .l_dirty()
            .solve_lower_triangular(&b)
            .ok_or(Error::NotPositiveDefinite)?;
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|p| p.ln()).sum::<f64>();
        total += -0.5 * (d as f64 * ln2pi + logdet + z.norm_squared());
    }
    Ok(total)
}

struct Grid {
    points: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
}

fn tensor_grid(rule: &GaussHermite, d: usize) -> Grid {
    let l = rule.nodes.len();
    let n = l.pow(d as u32);
    let mut points = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for flat in 0..n {
        let mut rest = flat;
        let mut x = Vec::with_capacity(d);
        let mut lw = 0.0;
        for _ in 0..d {
            let k = rest % l;
            rest /= l;
            x.push(rule.nodes[k]);
            lw += rule.weights[k].ln();
        }
        points.push(x);
        log_weights.push(lw);
    }
    Grid {
        points,
        log_weights,
    }
}

fn check_grid(d: usize, l: usize) -> Result<()> {
    if l < 5 {
        return Err(Error::InvalidParameter(format!(
            "at least 5 quadrature nodes are required, got {l}"
        )));
    }
    let points = (l as f64).powi(d as i32);
    if d > MAX_GRID_DIM || points >= MAX_GRID_POINTS as f64 {
        return Err(Error::GridTooLarge {
            points: points.min(usize::MAX as f64) as usize,
        });
    }
    Ok(())
}

fn quadrature_loglik(
    preds: &PredictionSet,
    family: EllipticalFamily,
    grid: &Grid,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let d = preds.dim();
    let scatter = ScatterMatrix::new(linalg::symmetrize(sigma))?;
    let half_logdet = 0.5 * scatter.log_det();
    let l = scatter.cholesky_factor();
    let log_norm = -0.5 * d as f64 * std::f64::consts::PI.ln();
    let mut total = 0.0;
    let mut point = DVector::zeros(d);
    let mut terms = vec![0.0; grid.points.len()];
    for j in 0..preds.q() {
        let scale: Vec<f64> = (0..d)
            .map(|k| (2.0 * preds.cond_var[(j, k)]).sqrt())
            .collect();
        for (t, (x, lw)) in terms.iter_mut().zip(grid.points.iter().zip(&grid.log_weights)) {
            for k in 0..d {
                point[k] = preds.bhat[(j, k)] + scale[k] * x[k];
            }
            let z = l
                .solve_lower_triangular(&point)
                .ok_or(Error::NotPositiveDefinite)?;
            *t = lw + log_generator(family, d, z.norm_squared()) - half_logdet;
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        total += log_norm + max + sum.ln();
    }
    Ok(total)
}

/// Quadrature-approximated log-likelihood with `l` nodes per axis, on the
/// predictions as given. `sigma` plays the role of the scatter matrix.
pub fn elliptical_loglik(
    preds: &PredictionSet,
    family: EllipticalFamily,
    l: usize,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    check_grid(preds.dim(), l)?;
    family.validate()?;
    let grid = tensor_grid(&gauss_hermite_rule(l)?, preds.dim());
    quadrature_loglik(preds, family, &grid, sigma)
}

fn unbounded_guard(preds: &PredictionSet) -> Result<()> {
    if preds.q() <= preds.dim() {
        return Err(Error::UnboundedLikelihood);
    }
    let cov = sample_covariance(&preds.bhat, Divisor::Q)?.matrix;
    let scale = cov.diagonal().iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::UnboundedLikelihood);
    }
    let chol = linalg::cholesky(&cov).map_err(|_| Error::UnboundedLikelihood)?;
    let min_pivot = chol.l_dirty().diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot <= 1e-12 * scale {
        return Err(Error::UnboundedLikelihood);
    }
    Ok(())
}

/// Lower-triangular square-root parameters, log-diagonal.
fn to_params(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = linalg::cholesky(sigma)?.l();
    let d = l.nrows();
    let mut theta = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            theta.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
        }
    }
    Ok(theta)
}

fn from_params(theta: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut it = theta.iter();
    for i in 0..d {
        for j in 0..=i {
            let v = *it.next().expect("parameter length matches dimension");
            l[(i, j)] = if i == j { v.exp() } else { v };
        }
    }
    linalg::symmetrize(&(&l * l.transpose()))
}

fn maximize<F>(init: &DMatrix<f64>, d: usize, opts: &MlOptions, loglik: F) -> Result<MlFit>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
{
    let theta0 = to_params(init)?;
    let init_loglik = loglik(init)?;
    let objective = |theta: &[f64]| match loglik(&from_params(theta, d)) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let first = nelder_mead(&objective, &theta0, opts);
    let second = nelder_mead(&objective, &first.best, opts);
    let evaluations = first.evaluations + second.evaluations;
    if !second.converged {
        return Err(Error::OptimizerStagnation {
            evaluations,
            loglik: -second.value,
            best: second.best,
        });
    }
    Ok(MlFit {
        sigma: from_params(&second.best, d),
        loglik: -second.value,
        init_loglik,
        evaluations,
    })
}

/// Maximizer of the closed-form Gaussian approximate likelihood over PD Σ.
pub fn gaussian_approx_ml(preds: &PredictionSet, init: &DMatrix<f64>, opts: &MlOptions) -> Result<MlFit> {
    let preds = centered(preds);
    unbounded_guard(&preds)?;
    let d = preds.dim();
    if init.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.nrows(),
        });
    }
    maximize(init, d, opts, |s| gaussian_loglik(&preds, s))
}

/// Maximizer of the Gauss–Hermite approximated likelihood for an elliptical
/// generator, `l` nodes per axis on the full tensor grid.
pub fn elliptical_approx_ml(
    preds: &PredictionSet,
    family: EllipticalFamily,
    l: usize,
    init: &DMatrix<f64>,
    opts: &MlOptions,
) -> Result<MlFit> {
    let d = preds.dim();
    check_grid(d, l)?;
    family.validate()?;
    let preds = centered(preds);
    unbounded_guard(&preds)?;
    if init.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.nrows(),
        });
    }
    let grid = tensor_grid(&gauss_hermite_rule(l)?, d);
    maximize(init, d, opts, |s| quadrature_loglik(&preds, family, &grid, s))
}

struct SimplexResult {
    best: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Plain Nelder–Mead minimization.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], opts: &MlOptions) -> SimplexResult {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1e-3 { 0.1 * v[i].abs().max(0.25) } else { 0.1 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = n + 1;
    let mut converged = false;

    while evaluations < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if values[0].is_finite()
            && spread <= opts.tolerance * (values[0].abs() + 1e-10)
            && size <= 1e-7
        {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            evaluations += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            evaluations += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
                evaluations += n;
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is non-empty");
    SimplexResult {
        best: simplex[best].clone(),
        value: values[best],
        evaluations,
        converged,
    }
}
