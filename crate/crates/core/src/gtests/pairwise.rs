use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::beta_product::{beta_product_params, Engine, ExactNull};
use super::stats::{elliptical_test, gaussian_exact_test_with_null, Method};
use crate::covest::{conditional_scatter, BlockPartition, Condition, Hypothesis};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    #[default]
    Holm,
    Bonferroni,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Correction::None),
            "holm" => Ok(Correction::Holm),
            "bonferroni" => Ok(Correction::Bonferroni),
            other => Err(Error::InvalidParameter(format!("unknown correction '{other}'"))),
        }
    }
}

/// Family-wise adjusted p-values, in input order.
pub fn adjust_pvalues(p: &[f64], correction: Correction) -> Vec<f64> {
    let m = p.len() as f64;
    match correction {
        Correction::None => p.to_vec(),
        Correction::Bonferroni => p.iter().map(|x| (x * m).min(1.0)).collect(),
        Correction::Holm => {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            let mut out = vec![0.0; p.len()];
            let mut running: f64 = 0.0;
            for (rank, &i) in idx.iter().enumerate() {
                running = running.max(((m - rank as f64) * p[i]).min(1.0));
                out[i] = running;
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTests {
    pub raw: DMatrix<f64>,
    /// Corrected p-values; the diagonal is 1.
    pub adjusted: DMatrix<f64>,
    pub adjacency: DMatrix<bool>,
}

impl EdgeTests {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.adjacency.nrows();
        let mut e = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.adjacency[(i, j)] {
                    e.push((i, j));
                }
            }
        }
        e
    }
}

/// Tests every pair `{i, j}` given the remaining coordinates and joins the pair
/// when the corrected p-value falls below `alpha`. The elliptical method uses
/// one kurtosis estimate `kappa` for all pairs.
pub fn pairwise_edge_tests(
    sigma: &DMatrix<f64>,
    q: usize,
    method: Method,
    alpha: f64,
    correction: Correction,
    kappa: f64,
    engine: Engine,
) -> Result<EdgeTests> {
    let d = linalg::check_square(sigma)?;
    if d < 2 {
        return Err(Error::InvalidParameter("need at least two coordinates".into()));
    }
    let part = BlockPartition::new(vec![1, 1], d - 2)?;
    let exact = match method {
        Method::Exact => {
            let params = beta_product_params(q, &part)?;
            let null = ExactNull::new(&params, engine, Execution::default())?;
            Some((params, null))
        }
        Method::Elliptical => None,
    };
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .collect();
    let mut raw_list = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let hyp = Hypothesis::new(vec![vec![i], vec![j]], Condition::Rest, d)?;
        let (arranged, part) = hyp.arrange(sigma);
        let res = match &exact {
            Some((params, null)) => {
                gaussian_exact_test_with_null(&arranged, &part, params, null, engine)?
            }
            None => {
                let a_cond = conditional_scatter(&arranged, &part)?;
                elliptical_test(&a_cond, &part.conditioned(), q, kappa)?
            }
        };
        raw_list.push(res.pvalue);
    }
    let adj_list = adjust_pvalues(&raw_list, correction);
    let mut raw = DMatrix::from_element(d, d, 1.0);
    let mut adjusted = DMatrix::from_element(d, d, 1.0);
    let mut adjacency = DMatrix::from_element(d, d, false);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        raw[(i, j)] = raw_list[k];
        raw[(j, i)] = raw_list[k];
        adjusted[(i, j)] = adj_list[k];
        adjusted[(j, i)] = adj_list[k];
        let edge = adj_list[k] < alpha;
        adjacency[(i, j)] = edge;
        adjacency[(j, i)] = edge;
    }
    Ok(EdgeTests {
        raw,
        adjusted,
        adjacency,
    })
}
