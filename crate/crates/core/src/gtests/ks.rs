use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1) with the
/// asymptotic Kolmogorov tail `2 Σ (-1)^{j-1} exp(-2 j² t²)`,
/// `t = D (√n + 0.12 + 0.11/√n)`.
pub fn ks_uniform_test(pvalues: &[f64]) -> Result<KsResult> {
    let n = pvalues.len();
    if n < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 values, got {n}")));
    }
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("value {bad} outside [0, 1]")));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
        .fold(0.0, f64::max);
    let sn = nf.sqrt();
    let t = d * (sn + 0.12 + 0.11 / sn);
    Ok(KsResult {
        statistic: d,
        pvalue: kolmogorov_tail(t),
        n,
    })
}

fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * t * t).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_statistic() {
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let r = ks_uniform_test(&grid).unwrap();
        assert!((r.statistic - 0.1).abs() < 1e-12);
        assert!(r.pvalue > 0.9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ks_uniform_test(&[0.1, 0.2]).is_err());
        assert!(ks_uniform_test(&[0.1, 0.2, 0.3, 0.4, 1.5]).is_err());
    }

    #[test]
    fn tail_reference_values() {
        // Q_KS(1.0) and Q_KS(1.36) from standard tables
        assert!((kolmogorov_tail(1.0) - 0.269_999_671_677_355_1).abs() < 1e-9);
        assert!((kolmogorov_tail(1.358) - 0.050).abs() < 5e-4);
    }
}
