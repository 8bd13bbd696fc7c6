use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Physicists' Gauss–Hermite rule: `∫ e^{-x²} p(x) dx = Σ w_k p(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const MAX_NODES: usize = 100;

/// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix of the Hermite
/// recurrence, weights are `√π` times squared first eigenvector components.
pub fn gauss_hermite_rule(l: usize) -> Result<GaussHermite> {
    if !(1..=MAX_NODES).contains(&l) {
        return Err(Error::InvalidParameter(format!(
            "Gauss-Hermite node count must be in 1..={MAX_NODES}, got {l}"
        )));
    }
    let mut jacobi = DMatrix::<f64>::zeros(l, l);
    for k in 1..l {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..l)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], sqrt_pi * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce exact symmetry of the rule
    for i in 0..l / 2 {
        let j = l - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if l % 2 == 1 {
        pairs[l / 2].0 = 0.0;
    }
    Ok(GaussHermite {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}
