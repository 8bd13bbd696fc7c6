//! Null law of the exact Gaussian test statistic: a product of independent
//! Beta variables. Supports Monte Carlo sampling and a hypergeometric-type
//! series for the density.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::covest::BlockPartition;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quad;
use crate::rng::stream_rng;

/// `(α, β)` of each Beta factor `Z_ij`, flattened block by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BetaProductParams {
    pub pairs: Vec<(f64, f64)>,
}

impl BetaProductParams {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `E[V] = Π α/(α+β)`.
    pub fn mean(&self) -> f64 {
        self.pairs.iter().map(|(a, b)| a / (a + b)).product()
    }
}

/// Factor parameters for `q` observations: for tested block `i ≥ 2` with `d̄_i`
/// preceding coordinates and `j = 1..d_i`, `Z_ij ~ Beta(½(q - d_k - d̄_i - j), ½ d̄_i)`.
/// The conditioning block of size `d_k` uses up `d_k` degrees of freedom; with
/// no conditioning block this is the unconditional law.
pub fn beta_product_params(q: usize, part: &BlockPartition) -> Result<BetaProductParams> {
    part.require_test()?;
    let needed = part.total_dim();
    if q <= needed {
        return Err(Error::InsufficientClusters { q, needed });
    }
    let effective = (q - part.cond_size) as f64;
    let mut pairs = Vec::new();
    for i in 1..part.sizes.len() {
        let dbar = part.preceding(i) as f64;
        for j in 1..=part.sizes[i] {
            pairs.push((0.5 * (effective - dbar - j as f64), 0.5 * dbar));
        }
    }
    Ok(BetaProductParams { pairs })
}

pub const DEFAULT_MC_DRAWS: usize = 200_000;
pub const DEFAULT_MC_SEED: u64 = 0x5EED;
const MC_CHUNK: usize = 8192;

/// Sorted Monte Carlo sample of the product law.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaProductSample {
    sorted: Vec<f64>,
}

impl BetaProductSample {
    /// Draws are generated in fixed-size chunks, chunk `c` from stream `c`, so
    /// the sample is identical for any execution mode.
    pub fn draw(params: &BetaProductParams, n: usize, seed: u64, exec: Execution) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one Monte Carlo draw".into()));
        }
        let factors: Vec<Beta<f64>> = params
            .pairs
            .iter()
            .map(|&(a, b)| {
                Beta::new(a, b).map_err(|e| Error::InvalidParameter(format!("Beta({a}, {b}): {e}")))
            })
            .collect::<Result<_>>()?;
        let chunks = n.div_ceil(MC_CHUNK);
        let parts = exec.map(chunks, |c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = stream_rng(seed, c as u64);
            (0..len)
                .map(|_| factors.iter().map(|f| f.sample(&mut rng)).product::<f64>())
                .collect::<Vec<f64>>()
        });
        let mut sorted: Vec<f64> = parts.into_iter().flatten().collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of draws `≤ v`.
    pub fn cdf(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= v) as f64 / self.sorted.len() as f64
    }
}

/// Coefficient in the σ-recursion of the series density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeriesCoefficient {
    /// `(c_j - b_{j-1})_s / s!` with the rising factorial.
    #[default]
    Pochhammer,
    /// `(c_j - b_{j-1}) / s!`, the plain-factor variant.
    Printed,
}

pub const DEFAULT_SERIES_TOL: f64 = 1e-14;
/// Densities below this are accepted from a truncated series when integrating.
const NEGLIGIBLE_DENSITY: f64 = 1e-8;
pub const DEFAULT_SERIES_TERMS: usize = 4000;

/// Series representation of the product density,
/// `f(v) = K v^{b_d-1} (1-v)^{h_d-1} Σ_r σ_r (1-v)^r`, with the σ coefficients
/// precomputed up to `max_terms`.
#[derive(Debug, Clone)]
pub struct TangSeries {
    log_k: f64,
    b_last: f64,
    h_last: f64,
    sigma: Vec<f64>,
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    pub converged: bool,
}

impl TangSeries {
    pub fn new(
        params: &BetaProductParams,
        coefficient: SeriesCoefficient,
        tol: f64,
        max_terms: usize,
    ) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidParameter("empty Beta product".into()));
        }
        if let Some(&(a, b)) = params.pairs.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
            return Err(Error::InvalidParameter(format!("Beta({a}, {b}) is not a valid factor")));
        }
        let b: Vec<f64> = params.pairs.iter().map(|p| p.0).collect();
        let c: Vec<f64> = params.pairs.iter().map(|p| p.0 + p.1).collect();
        let mut h = Vec::with_capacity(b.len());
        let mut acc = 0.0;
        for (cj, bj) in c.iter().zip(&b) {
            acc += cj - bj;
            h.push(acc);
        }
        let log_k: f64 = c.iter().zip(&b).map(|(cj, bj)| ln_gamma(*cj) - ln_gamma(*bj)).sum();
        let r_max = max_terms.max(1);

        let mut level = vec![0.0; r_max];
        level[0] = (-ln_gamma(h[0])).exp();
        for j in 1..b.len() {
            let a = c[j] - b[j - 1];
            let coef: Vec<f64> = match coefficient {
                SeriesCoefficient::Pochhammer => {
                    let mut v = Vec::with_capacity(r_max);
                    let mut cur = 1.0;
                    for s in 0..r_max {
                        if s > 0 {
                            cur *= (a + s as f64 - 1.0) / s as f64;
                        }
                        v.push(cur);
                    }
                    v
                }
                SeriesCoefficient::Printed => {
                    let mut v = Vec::with_capacity(r_max);
                    let mut inv_fact = 1.0;
                    for s in 0..r_max {
                        if s > 0 {
                            inv_fact /= s as f64;
                        }
                        v.push(a * inv_fact);
                    }
                    v
                }
            };
            let mut next = vec![0.0; r_max];
            for (r, out) in next.iter_mut().enumerate() {
                let conv: f64 = (0..=r).map(|s| coef[s] * level[r - s]).sum();
                let ratio = (ln_gamma(h[j - 1] + r as f64) - ln_gamma(h[j] + r as f64)).exp();
                *out = ratio * conv;
            }
            level = next;
        }
        Ok(Self {
            log_k,
            b_last: *b.last().expect("non-empty"),
            h_last: *h.last().expect("non-empty"),
            sigma: level,
            tol,
        })
    }

    /// Σ_r σ_r w^r, truncated once two consecutive terms fall below `tol`
    /// relative to the partial sum.
    fn tail_sum(&self, w: f64) -> SeriesValue {
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut small = 0;
        for (r, s) in self.sigma.iter().enumerate() {
            let term = s * pow;
            sum += term;
            if term.abs() <= self.tol * sum.abs() {
                small += 1;
                if small >= 2 {
                    return SeriesValue {
                        value: sum,
                        terms: r + 1,
                        converged: true,
                    };
                }
            } else {
                small = 0;
            }
            pow *= w;
            if pow == 0.0 {
                return SeriesValue {
                    value: sum,
                    terms: r + 1,
                    converged: true,
                };
            }
        }
        SeriesValue {
            value: sum,
            terms: self.sigma.len(),
            converged: false,
        }
    }

    pub fn density_value(&self, v: f64) -> SeriesValue {
        if !(v > 0.0 && v < 1.0) {
            return SeriesValue {
                value: 0.0,
                terms: 0,
                converged: true,
            };
        }
        let s = self.tail_sum(1.0 - v);
        let log_pre = self.log_k + (self.b_last - 1.0) * v.ln() + (self.h_last - 1.0) * (-v).ln_1p();
        SeriesValue {
            value: log_pre.exp() * s.value,
            ..s
        }
    }

    pub fn density(&self, v: f64) -> Result<f64> {
        let s = self.density_value(v);
        if s.converged {
            Ok(s.value)
        } else {
            Err(Error::SeriesNotConverged {
                terms: s.terms,
                partial: s.value,
            })
        }
    }

    /// `∫_a^b f_V`, tolerating truncated sums where the density is negligible.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        quad::integrate(
            |x| {
                let s = self.density_value(x);
                if s.converged || s.value.abs() < NEGLIGIBLE_DENSITY {
                    Ok(s.value)
                } else {
                    Err(Error::SeriesNotConverged {
                        terms: s.terms,
                        partial: s.value,
                    })
                }
            },
            a,
            b,
            1e-12,
        )
    }

    /// `P(V > v)` via the substitution `u = (1-v)^h`, which removes the
    /// endpoint singularity at `v = 1`.
    fn upper_tail(&self, v: f64) -> Result<f64> {
        let h = self.h_last;
        let u_max = (1.0 - v).powf(h);
        let integrand = |u: f64| -> Result<f64> {
            let w = u.powf(1.0 / h);
            let x = 1.0 - w;
            if x <= 0.0 {
                return Ok(0.0);
            }
            let s = self.tail_sum(w);
            if !s.converged {
                return Err(Error::SeriesNotConverged {
                    terms: s.terms,
                    partial: s.value,
                });
            }
            Ok((self.log_k + (self.b_last - 1.0) * x.ln()).exp() * s.value / h)
        };
        quad::integrate(integrand, 0.0, u_max, 1e-12)
    }

    /// `P(V ≤ v)` integrated from whichever end is closer in probability.
    /// Unconverged evaluations far in the left tail are accepted only when the
    /// partial sum is negligible there; otherwise the left tail falls back to
    /// the complement of the upper tail, which needs the series only on `[v, 1]`.
    pub fn cdf(&self, v: f64, split: f64) -> Result<f64> {
        if v <= 0.0 {
            return Ok(0.0);
        }
        if v >= 1.0 {
            return Ok(1.0);
        }
        let p = if v >= split {
            1.0 - self.upper_tail(v)?
        } else {
            match self.integrate(0.0, v) {
                Err(Error::SeriesNotConverged { .. }) => 1.0 - self.upper_tail(v)?,
                other => other?,
            }
        };
        Ok(p.clamp(0.0, 1.0))
    }
}

pub fn v_density_tang(
    v: f64,
    params: &BetaProductParams,
    tol: f64,
    max_terms: usize,
) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!("density argument must lie in (0, 1), got {v}")));
    }
    TangSeries::new(params, SeriesCoefficient::Pochhammer, tol, max_terms)?.density(v)
}

/// How the exact null p-value is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "engine")]
pub enum Engine {
    #[serde(rename = "mc")]
    MonteCarlo { draws: usize, seed: u64 },
    Series {
        coefficient: SeriesCoefficient,
        tol: f64,
        max_terms: usize,
    },
}

impl Default for Engine {
    fn default() -> Self {
        Engine::MonteCarlo {
            draws: DEFAULT_MC_DRAWS,
            seed: DEFAULT_MC_SEED,
        }
    }
}

impl Engine {
    pub fn series() -> Self {
        Engine::Series {
            coefficient: SeriesCoefficient::Pochhammer,
            tol: DEFAULT_SERIES_TOL,
            max_terms: DEFAULT_SERIES_TERMS,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Engine::MonteCarlo { .. } => "mc",
            Engine::Series { .. } => "series",
        }
    }
}

/// A prepared null distribution, reusable across many observed statistics.
#[derive(Debug, Clone)]
pub enum ExactNull {
    MonteCarlo(BetaProductSample),
    Series { series: TangSeries, split: f64 },
}

impl ExactNull {
    pub fn new(params: &BetaProductParams, engine: Engine, exec: Execution) -> Result<Self> {
        Ok(match engine {
            Engine::MonteCarlo { draws, seed } => {
                ExactNull::MonteCarlo(BetaProductSample::draw(params, draws, seed, exec)?)
            }
            Engine::Series {
                coefficient,
                tol,
                max_terms,
            } => ExactNull::Series {
                series: TangSeries::new(params, coefficient, tol, max_terms)?,
                split: params.mean(),
            },
        })
    }

    /// `P(V ≤ v_obs)`; small values of V are evidence against independence.
    pub fn pvalue(&self, v_obs: f64) -> Result<f64> {
        if !(v_obs > 0.0 && v_obs <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "V statistic must lie in (0, 1], got {v_obs}"
            )));
        }
        if v_obs >= 1.0 {
            return Ok(1.0);
        }
        match self {
            ExactNull::MonteCarlo(sample) => Ok(sample.cdf(v_obs)),
            ExactNull::Series { series, split } => series.cdf(v_obs, *split),
        }
    }
}

pub fn v_pvalue_exact(v_obs: f64, params: &BetaProductParams, engine: Engine) -> Result<f64> {
    ExactNull::new(params, engine, Execution::default())?.pvalue(v_obs)
}
