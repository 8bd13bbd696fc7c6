//! Dispersion-model response families and MGLMM simulation.
//!
//! Each margin has density `a(y;λ) exp[-d(y;μ)/(2λ)]` with unit deviance `d`,
//! and mean `μ = g⁻¹(βᵀx + b)` where `b` is the cluster's random component.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use nalgebra::DMatrix;

use crate::elliptical::EllipticalSpec;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Gamma,
    Binomial { trials: u32 },
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Log,
    Logit,
    Identity,
}

/// `x log(x/m)` with the `0 log 0 = 0` convention.
fn xlogx_over(x: f64, m: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / m).ln()
    }
}

fn is_count(y: f64) -> bool {
    y >= 0.0 && y.fract() == 0.0 && y.is_finite()
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
            Family::Binomial { .. } => "binomial",
            Family::Gaussian => "gaussian",
        }
    }

    pub fn in_support(&self, y: f64) -> bool {
        match *self {
            Family::Poisson => is_count(y),
            Family::Gamma => y > 0.0 && y.is_finite(),
            Family::Binomial { trials } => is_count(y) && y <= trials as f64,
            Family::Gaussian => y.is_finite(),
        }
    }

    pub fn mean_in_domain(&self, mu: f64) -> bool {
        match *self {
            Family::Poisson | Family::Gamma => mu > 0.0 && mu.is_finite(),
            Family::Binomial { trials } => mu > 0.0 && mu < trials as f64,
            Family::Gaussian => mu.is_finite(),
        }
    }

    fn check(&self, y: f64, mu: f64) -> Result<()> {
        if !self.mean_in_domain(mu) {
            return Err(Error::Domain(format!("mean {mu} outside the {} domain", self.name())));
        }
        if !self.in_support(y) {
            return Err(Error::Domain(format!("response {y} outside the {} support", self.name())));
        }
        Ok(())
    }

    /// Unchecked unit deviance; callers guarantee `(y, μ)` is admissible.
    pub(crate) fn deviance_raw(&self, y: f64, mu: f64) -> f64 {
        match *self {
            Family::Poisson => 2.0 * (xlogx_over(y, mu) - y + mu),
            Family::Gamma => 2.0 * ((y - mu) / mu - (y / mu).ln()),
            Family::Binomial { trials } => {
                let m = trials as f64;
                2.0 * (xlogx_over(y, mu) + xlogx_over(m - y, m - mu))
            }
            Family::Gaussian => (y - mu) * (y - mu),
        }
    }

    /// `V(μ)` and `V'(μ)`.
    pub(crate) fn variance_and_slope(&self, mu: f64) -> (f64, f64) {
        match *self {
            Family::Poisson => (mu, 1.0),
            Family::Gamma => (mu * mu, 2.0 * mu),
            Family::Binomial { trials } => {
                let m = trials as f64;
                (mu * (1.0 - mu / m), 1.0 - 2.0 * mu / m)
            }
            Family::Gaussian => (1.0, 0.0),
        }
    }

    fn requires_unit_dispersion(&self) -> bool {
        matches!(self, Family::Poisson | Family::Binomial { .. })
    }
}

pub fn unit_deviance(family: Family, y: f64, mu: f64) -> Result<f64> {
    family.check(y, mu)?;
    Ok(family.deviance_raw(y, mu).max(0.0))
}

pub fn variance_function(family: Family, mu: f64) -> Result<f64> {
    if !family.mean_in_domain(mu) {
        return Err(Error::Domain(format!("mean {mu} outside the {} domain", family.name())));
    }
    Ok(family.variance_and_slope(mu).0)
}

/// Inverse link on the probability/mean scale (no binomial trial scaling).
pub fn apply_inverse_link(link: Link, eta: f64) -> f64 {
    match link {
        Link::Log => eta.exp(),
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        Link::Identity => eta,
    }
}

impl Link {
    /// `(g⁻¹(η), dμ/dη, d²μ/dη²)` on the unscaled mean.
    fn inverse_with_derivatives(&self, eta: f64) -> (f64, f64, f64) {
        match self {
            Link::Log => {
                let mu = eta.exp();
                (mu, mu, mu)
            }
            Link::Logit => {
                let p = apply_inverse_link(Link::Logit, eta);
                let d1 = p * (1.0 - p);
                (p, d1, d1 * (1.0 - 2.0 * p))
            }
            Link::Identity => (eta, 1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    #[serde(flatten)]
    pub family: Family,
    pub link: Link,
    pub beta: Vec<f64>,
    #[serde(default = "unit")]
    pub dispersion: f64,
}

fn unit() -> f64 {
    1.0
}

impl MarginSpec {
    pub fn new(family: Family, link: Link, beta: Vec<f64>, dispersion: f64) -> Result<Self> {
        let m = Self {
            family,
            link,
            beta,
            dispersion,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dispersion must be positive, got {}",
                self.dispersion
            )));
        }
        if self.family.requires_unit_dispersion() && self.dispersion != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "{} margins have dispersion fixed at 1",
                self.family.name()
            )));
        }
        if matches!(self.family, Family::Binomial { trials: 0 }) {
            return Err(Error::InvalidParameter("binomial needs at least one trial".into()));
        }
        if matches!(self.family, Family::Binomial { .. }) && self.link == Link::Identity {
            return Err(Error::InvalidParameter(
                "binomial margins need a logit or log link".into(),
            ));
        }
        Ok(())
    }

    fn trials_scale(&self) -> f64 {
        match self.family {
            Family::Binomial { trials } => trials as f64,
            _ => 1.0,
        }
    }

    /// Conditional mean for linear predictor `eta`.
    pub fn mean(&self, eta: f64) -> f64 {
        self.trials_scale() * apply_inverse_link(self.link, eta)
    }

    /// `(μ, dμ/dη, d²μ/dη²)`, including the binomial trial scaling.
    pub(crate) fn mean_derivatives(&self, eta: f64) -> (f64, f64, f64) {
        let s = self.trials_scale();
        let (m, d1, d2) = self.link.inverse_with_derivatives(eta);
        (s * m, s * d1, s * d2)
    }

    pub fn linear_predictor(&self, x: &[f64], b: f64) -> f64 {
        self.beta.iter().zip(x).map(|(bj, xj)| bj * xj).sum::<f64>() + b
    }

    pub fn log_density(&self, y: f64, mu: f64) -> Result<f64> {
        self.family.check(y, mu)?;
        let lambda = self.dispersion;
        Ok(match self.family {
            Family::Poisson => {
                let ymu = if y == 0.0 { 0.0 } else { y * mu.ln() };
                ymu - mu - ln_gamma(y + 1.0)
            }
            Family::Gamma => {
                let shape = 1.0 / lambda;
                let scale = lambda * mu;
                (shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()
            }
            Family::Binomial { trials } => {
                let m = trials as f64;
                let p = mu / m;
                let ln_choose = ln_gamma(m + 1.0) - ln_gamma(y + 1.0) - ln_gamma(m - y + 1.0);
                let a = if y == 0.0 { 0.0 } else { y * p.ln() };
                let b = if y == m { 0.0 } else { (m - y) * (-p).ln_1p() };
                ln_choose + a + b
            }
            Family::Gaussian => {
                -0.5 * (2.0 * std::f64::consts::PI * lambda).ln() - 0.5 * (y - mu).powi(2) / lambda
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<f64> {
        if !self.family.mean_in_domain(mu) {
            return Err(Error::Domain(format!(
                "mean {mu} outside the {} domain",
                self.family.name()
            )));
        }
        let bad = |e: &dyn std::fmt::Display| Error::Domain(e.to_string());
        Ok(match self.family {
            Family::Poisson => Poisson::new(mu).map_err(|e| bad(&e))?.sample(rng),
            Family::Gamma => {
                let shape = 1.0 / self.dispersion;
                Gamma::new(shape, self.dispersion * mu)
                    .map_err(|e| bad(&e))?
                    .sample(rng)
            }
            Family::Binomial { trials } => {
                let p = mu / trials as f64;
                Binomial::new(trials as u64, p).map_err(|e| bad(&e))?.sample(rng) as f64
            }
            Family::Gaussian => Normal::new(mu, self.dispersion.sqrt())
                .map_err(|e| bad(&e))?
                .sample(rng),
        })
    }
}

/// Classical density of `y` given mean `μ`; Poisson and binomial need `λ = 1`.
pub fn conditional_density(margin: &MarginSpec, y: f64, mu: f64) -> Result<f64> {
    if margin.family.requires_unit_dispersion() && margin.dispersion != 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{} conditional density requires dispersion 1",
            margin.family.name()
        )));
    }
    Ok(margin.log_density(y, mu)?.exp())
}

/// Fixed-effect design shared by every margin.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// A single constant covariate.
    #[default]
    Intercept,
    /// One covariate row per `(cluster, replicate)`, row index `cluster * replicates + replicate`.
    Table(Vec<Vec<f64>>),
}

impl Design {
    pub fn width(&self) -> usize {
        match self {
            Design::Intercept => 1,
            Design::Table(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    fn row(&self, index: usize) -> &[f64] {
        match self {
            Design::Intercept => &[1.0],
            Design::Table(rows) => &rows[index],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MglmmSpec {
    pub margins: Vec<MarginSpec>,
    pub q: usize,
    pub replicates: usize,
    pub random_components: EllipticalSpec,
    #[serde(default)]
    pub design: Design,
}

impl MglmmSpec {
    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.random_components.dim() != self.margins.len() {
            return Err(Error::DimensionMismatch {
                expected: self.margins.len(),
                got: self.random_components.dim(),
            });
        }
        if self.margins.is_empty() {
            return Err(Error::InvalidParameter("at least one margin is required".into()));
        }
        if self.q < 2 {
            return Err(Error::InvalidParameter(format!("q must be at least 2, got {}", self.q)));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        let p = self.design.width();
        if let Design::Table(rows) = &self.design {
            if rows.len() != self.q * self.replicates {
                return Err(Error::DimensionMismatch {
                    expected: self.q * self.replicates,
                    got: rows.len(),
                });
            }
            if rows.iter().any(|r| r.len() != p) {
                return Err(Error::InvalidParameter("ragged covariate table".into()));
            }
        }
        for m in &self.margins {
            m.validate()?;
            if m.beta.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: m.beta.len(),
                });
            }
        }
        Ok(())
    }
}

/// One observed response. Indices are 0-based internally; CSV files are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub margin: usize,
    pub cluster: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongDataset {
    pub n_margins: usize,
    pub n_clusters: usize,
    pub rows: Vec<Observation>,
}

impl LongDataset {
    /// Builds a dataset, inferring the margin and cluster counts.
    pub fn from_rows(rows: Vec<Observation>) -> Result<Self> {
        let n_margins = rows.iter().map(|r| r.margin + 1).max().unwrap_or(0);
        let n_clusters = rows.iter().map(|r| r.cluster + 1).max().unwrap_or(0);
        let ds = Self {
            n_margins,
            n_clusters,
            rows,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn covariate_width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidParameter("empty dataset".into()));
        }
        let p = self.covariate_width();
        if self.rows.iter().any(|r| r.x.len() != p) {
            return Err(Error::InvalidParameter("ragged covariate columns".into()));
        }
        let groups = self.groups();
        for j in 0..self.n_margins {
            for c in 0..self.n_clusters {
                if groups[j * self.n_clusters + c].is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "cluster {} has no observations in margin {}",
                        c + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Row indices per `(margin, cluster)`, flattened margin-major.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.n_margins * self.n_clusters];
        for (i, r) in self.rows.iter().enumerate() {
            g[r.margin * self.n_clusters + r.cluster].push(i);
        }
        g
    }

    pub fn margin_rows(&self, margin: usize) -> impl Iterator<Item = &Observation> {
        self.rows.iter().filter(move |r| r.margin == margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: LongDataset,
    /// Latent random components, one row per cluster.
    pub truth: DMatrix<f64>,
}

pub fn simulate_mglmm(spec: &MglmmSpec, seed: u64) -> Result<Simulation> {
    simulate_mglmm_with(spec, seed, Execution::default())
}

/// Simulation with explicit execution mode. Cluster `c` draws its responses
/// from stream `c + 1`, so output does not depend on the mode.
pub fn simulate_mglmm_with(spec: &MglmmSpec, seed: u64, exec: Execution) -> Result<Simulation> {
    spec.validate()?;
    let d = spec.dim();
    let truth = spec
        .random_components
        .sample_with(spec.q, &mut stream_rng(seed, 0));
    let per_cluster: Vec<Vec<Observation>> = exec.try_map(spec.q, |c| {
        let mut rng = stream_rng(seed, c as u64 + 1);
        let mut out = Vec::with_capacity(d * spec.replicates);
        for (j, margin) in spec.margins.iter().enumerate() {
            for r in 0..spec.replicates {
                let x = spec.design.row(c * spec.replicates + r).to_vec();
                let mu = margin.mean(margin.linear_predictor(&x, truth[(c, j)]));
                let y = margin.sample(mu, &mut rng)?;
                out.push(Observation {
                    margin: j,
                    cluster: c,
                    y,
                    x,
                });
            }
        }
        Ok::<_, Error>(out)
    })?;
    let mut rows = Vec::with_capacity(d * spec.q * spec.replicates);
    for j in 0..d {
        for cluster_rows in &per_cluster {
            rows.extend(cluster_rows.iter().filter(|o| o.margin == j).cloned());
        }
    }
    Ok(Simulation {
        data: LongDataset {
            n_margins: d,
            n_clusters: spec.q,
            rows,
        },
        truth,
    })
}
