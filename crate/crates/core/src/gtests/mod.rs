//! Tests of (conditional) block un-correlation: the exact Gaussian test with a
//! Beta-product null and the asymptotic elliptical test.

mod beta_product;
mod ks;
mod pairwise;
mod stats;

pub use beta_product::{
    beta_product_params, v_density_tang, v_pvalue_exact, BetaProductParams, BetaProductSample,
    Engine, ExactNull, SeriesCoefficient, SeriesValue, TangSeries, DEFAULT_MC_DRAWS,
    DEFAULT_MC_SEED, DEFAULT_SERIES_TERMS, DEFAULT_SERIES_TOL,
};
pub use ks::{ks_uniform_test, KsResult};
pub use pairwise::{adjust_pvalues, pairwise_edge_tests, Correction, EdgeTests};
pub use stats::{
    elliptical_test, estimate_kappa, gaussian_exact_test, gaussian_exact_test_with_null,
    test_data, v_statistic, DataTest, Method, TestResult,
};
