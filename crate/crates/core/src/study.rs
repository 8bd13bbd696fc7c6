//! Simulation studies of test size and power over a grid of off-diagonal
//! values and a schedule of cluster counts.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covest::{predict_random_components, BlockPartition, Condition, Hypothesis, PredictorConfig};
use crate::dispersion::{simulate_mglmm_with, MglmmSpec};
use crate::elliptical::{sample_elliptical, EllipticalSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gtests::{
    beta_product_params, ks_uniform_test, v_statistic, DataTest, Engine, ExactNull, Method,
};
use crate::linalg;
use crate::rng::stream_id;

/// What one replicate simulates: raw elliptical vectors, or a full MGLMM whose
/// random components are predicted before testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StudyModel {
    Elliptical { spec: EllipticalSpec },
    Mglmm { spec: MglmmSpec },
}

impl StudyModel {
    fn scatter(&self) -> &DMatrix<f64> {
        match self {
            StudyModel::Elliptical { spec } => spec.scatter.matrix(),
            StudyModel::Mglmm { spec } => spec.random_components.scatter.matrix(),
        }
    }

    pub fn dim(&self) -> usize {
        self.scatter().nrows()
    }

    /// Copy with the scatter entry `(i, j)` and its mirror set to `value`.
    fn with_entry(&self, (i, j): (usize, usize), value: f64) -> Result<Self> {
        let mut m = self.scatter().clone();
        m[(i, j)] = value;
        m[(j, i)] = value;
        let rebuild = |spec: &EllipticalSpec| EllipticalSpec::new(spec.family, m.clone());
        Ok(match self {
            StudyModel::Elliptical { spec } => StudyModel::Elliptical {
                spec: rebuild(spec)?,
            },
            StudyModel::Mglmm { spec } => {
                let mut s = spec.clone();
                s.random_components = rebuild(&spec.random_components)?;
                StudyModel::Mglmm { spec: s }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    #[serde(flatten)]
    pub model: StudyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", untagged)]
pub enum ConditionConfig {
    Named(String),
    Indices(Vec<usize>),
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig::Named("rest".into())
    }
}

impl ConditionConfig {
    /// Converts 1-based indices into a [`Condition`].
    pub fn to_condition(&self) -> Result<Condition> {
        match self {
            ConditionConfig::Named(s) if s == "rest" => Ok(Condition::Rest),
            ConditionConfig::Named(s) if s == "none" => Ok(Condition::None),
            ConditionConfig::Named(s) => {
                Err(Error::InvalidParameter(format!("unknown condition '{s}'")))
            }
            ConditionConfig::Indices(v) => Ok(Condition::Indices(one_based(v)?)),
        }
    }
}

pub fn one_based(v: &[usize]) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::InvalidParameter("coordinates are 1-based".into()))
        })
        .collect()
}

/// Tested blocks and conditioning set, with 1-based coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub blocks: Vec<Vec<usize>>,
    #[serde(default)]
    pub condition: ConditionConfig,
}

impl HypothesisConfig {
    pub fn resolve(&self, dim: usize) -> Result<Hypothesis> {
        let blocks = self.blocks.iter().map(|b| one_based(b)).collect::<Result<_>>()?;
        Hypothesis::new(blocks, self.condition.to_condition()?, dim)
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_methods() -> Vec<Method> {
    vec![Method::Exact, Method::Elliptical]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub models: Vec<NamedModel>,
    pub hypothesis: HypothesisConfig,
    /// Values placed at `grid_entry`; empty means the models as given.
    #[serde(default)]
    pub grid: Vec<f64>,
    /// 1-based scatter entry varied along the grid.
    #[serde(default)]
    pub grid_entry: Option<[usize; 2]>,
    /// Cluster counts; empty means each model's own `q`.
    #[serde(default)]
    pub q_schedule: Vec<usize>,
    pub n_sims: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub engine: Engine,
    /// Reuse replicate seeds across grid values (common random numbers), so
    /// differences along the grid are not swamped by simulation noise.
    #[serde(default = "default_paired")]
    pub paired_grid: bool,
}

fn default_paired() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
struct Point {
    model: usize,
    grid_index: usize,
    grid_value: Option<f64>,
    q_index: usize,
    q: usize,
    instance: StudyModel,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::InvalidParameter("n_sims must be at least 1".into()));
        }
        if self.models.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter("need at least one model and one method".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !self.grid.is_empty() && self.grid_entry.is_none() {
            return Err(Error::InvalidParameter("a grid needs grid_entry".into()));
        }
        self.points().map(|_| ())
    }

    fn entry(&self, dim: usize) -> Result<Option<(usize, usize)>> {
        match self.grid_entry {
            None => Ok(None),
            Some([i, j]) => {
                if i == 0 || j == 0 || i > dim || j > dim || i == j {
                    return Err(Error::InvalidParameter(format!(
                        "grid entry ({i}, {j}) must be an off-diagonal entry of a {dim}-dimensional scatter"
                    )));
                }
                Ok(Some((i - 1, j - 1)))
            }
        }
    }

    /// Every (model, grid value, q) combination; non-PD grid points are
    /// rejected here, before any simulation.
    fn points(&self) -> Result<Vec<Point>> {
        let mut out = Vec::new();
        for (m, named) in self.models.iter().enumerate() {
            let dim = named.model.dim();
            self.hypothesis.resolve(dim)?;
            if let StudyModel::Mglmm { spec } = &named.model {
                spec.validate()?;
            }
            let entry = self.entry(dim)?;
            let grid: Vec<Option<f64>> = if self.grid.is_empty() {
                vec![None]
            } else {
                self.grid.iter().copied().map(Some).collect()
            };
            let own_q = match &named.model {
                StudyModel::Mglmm { spec } => spec.q,
                StudyModel::Elliptical { .. } => 0,
            };
            let schedule = if self.q_schedule.is_empty() {
                if own_q == 0 {
                    return Err(Error::InvalidParameter(
                        "elliptical models need a q_schedule".into(),
                    ));
                }
                vec![own_q]
            } else {
                self.q_schedule.clone()
            };
            for (g, value) in grid.iter().enumerate() {
                let instance = match (value, entry) {
                    (Some(v), Some(e)) => named.model.with_entry(e, *v).map_err(|err| {
                        Error::InvalidParameter(format!(
                            "model '{}' at grid value {v}: {err}",
                            named.name
                        ))
                    })?,
                    _ => named.model.clone(),
                };
                for (qi, &q) in schedule.iter().enumerate() {
                    out.push(Point {
                        model: m,
                        grid_index: g,
                        grid_value: *value,
                        q_index: qi,
                        q,
                        instance: instance.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Rejection rate of one method at one study point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub model: String,
    pub grid_value: Option<f64>,
    pub q: usize,
    pub method: Method,
    pub n_sims: usize,
    /// Replicates that produced a p-value; the rest failed numerically.
    pub n_ok: usize,
    pub rejections: usize,
    pub rate: f64,
    /// KS uniformity p-value of the replicate p-values (needs 5 or more).
    pub ks_pvalue: Option<f64>,
    #[serde(skip)]
    pub pvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub rows: Vec<PowerRow>,
    pub failures: Vec<String>,
}

/// Seed of one replicate, fixed by its position in the study.
pub fn replicate_seed(seed: u64, point: &[u64], replicate: u64) -> u64 {
    let mut parts = vec![seed];
    parts.extend_from_slice(point);
    parts.push(replicate);
    stream_id(&parts)
}

fn replicate_data(instance: &StudyModel, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    match instance {
        StudyModel::Elliptical { spec } => sample_elliptical(spec, q, seed),
        StudyModel::Mglmm { spec } => {
            let mut s = spec.clone();
            if q != s.q {
                s.q = q;
                if !matches!(s.design, crate::dispersion::Design::Intercept) {
                    return Err(Error::InvalidParameter(
                        "q_schedule needs an intercept-only design".into(),
                    ));
                }
            }
            let sim = simulate_mglmm_with(&s, seed, Execution::Sequential)?;
            let mut config = PredictorConfig::from_spec(&s);
            config.execution = Execution::Sequential;
            Ok(predict_random_components(&sim.data, &config)?.bhat)
        }
    }
}

/// Runs the study; replicates run under `exec` and results do not depend on it.
pub fn run_study(config: &StudyConfig, exec: Execution) -> Result<StudyOutcome> {
    config.validate()?;
    let points = config.points()?;
    let mut nulls: HashMap<(usize, BlockPartition), ExactNull> = HashMap::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for point in &points {
        let hyp = config.hypothesis.resolve(point.instance.dim())?;
        let part = hyp.partition();
        let needs_exact = config.methods.contains(&Method::Exact);
        if needs_exact && !nulls.contains_key(&(point.q, part.clone())) {
            let params = beta_product_params(point.q, &part)?;
            nulls.insert((point.q, part.clone()), ExactNull::new(&params, config.engine, exec)?);
        }
        let null = nulls.get(&(point.q, part.clone()));
        let grid_key = if config.paired_grid { 0 } else { point.grid_index as u64 + 1 };
        let key = [point.model as u64, grid_key, point.q_index as u64];
        let results: Vec<std::result::Result<Vec<f64>, String>> = exec.map(config.n_sims, |r| {
            let seed = replicate_seed(config.seed, &key, r as u64);
            let run = || -> Result<Vec<f64>> {
                let data = replicate_data(&point.instance, point.q, seed)?;
                let prepared = DataTest::prepare(&data, &hyp)?;
                config
                    .methods
                    .iter()
                    .map(|m| match (m, null) {
                        (Method::Exact, Some(null)) => {
                            null.pvalue(v_statistic(&prepared.a_cond, &part.conditioned())?)
                        }
                        _ => prepared.run(*m, config.engine).map(|t| t.pvalue),
                    })
                    .collect()
            };
            run().map_err(|e| format!("replicate {r}: {e}"))
        });
        let name = &config.models[point.model].name;
        for (k, &method) in config.methods.iter().enumerate() {
            let pvalues: Vec<f64> = results
                .iter()
                .filter_map(|r| r.as_ref().ok().map(|p| p[k]))
                .collect();
            let rejections = pvalues.iter().filter(|&&p| p < config.alpha).count();
            let n_ok = pvalues.len();
            rows.push(PowerRow {
                model: name.clone(),
                grid_value: point.grid_value,
                q: point.q,
                method,
                n_sims: config.n_sims,
                n_ok,
                rejections,
                rate: if n_ok == 0 { f64::NAN } else { rejections as f64 / n_ok as f64 },
                ks_pvalue: ks_uniform_test(&pvalues).ok().map(|k| k.pvalue),
                pvalues,
            });
        }
        for e in results.into_iter().filter_map(|r| r.err()) {
            failures.push(format!("{name} q={}: {e}", point.q));
        }
    }
    Ok(StudyOutcome { rows, failures })
}

/// Checks that every matrix along a grid stays positive definite.
pub fn grid_is_pd(base: &DMatrix<f64>, entry: (usize, usize), grid: &[f64]) -> bool {
    grid.iter().all(|&v| {
        let mut m = base.clone();
        m[entry] = v;
        m[(entry.1, entry.0)] = v;
        linalg::cholesky(&m).is_ok()
    })
}
