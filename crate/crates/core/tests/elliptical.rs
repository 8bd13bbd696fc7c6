use latentgraph::covest::{sample_covariance, Divisor};
use latentgraph::elliptical::*;
use latentgraph::quad::integrate;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn max_entry_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn gaussian_identity_sample_covariance() {
    let spec = EllipticalSpec::gaussian(DMatrix::identity(2, 2)).unwrap();
    assert_eq!(sample_elliptical(&spec, 3, 1).unwrap().shape(), (3, 2));
    let x = sample_elliptical(&spec, 1_000_000, 1).unwrap();
    let s = sample_covariance(&x, Divisor::QMinus1).unwrap().matrix;
    assert!(max_entry_error(&s, &DMatrix::identity(2, 2)) < 0.01);
}

#[test]
fn student_t_covariance_is_inflated_scatter() {
    let spec = EllipticalSpec::student_t(5.0, DMatrix::identity(2, 2)).unwrap();
    let x = sample_elliptical(&spec, 1_000_000, 2).unwrap();
    let s = sample_covariance(&x, Divisor::QMinus1).unwrap().matrix;
    let want = DMatrix::identity(2, 2) * (5.0 / 3.0);
    assert!(max_entry_error(&s, &want) < 0.05, "{s}");
    assert!(max_entry_error(&spec.covariance(), &want) < 1e-15);
}

#[test]
fn gaussian_covariance_within_sampling_bound() {
    let lambda = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 0.7]);
    let spec = EllipticalSpec::gaussian(lambda.clone()).unwrap();
    let q = 100_000;
    let s = sample_covariance(&sample_elliptical(&spec, q, 3).unwrap(), Divisor::QMinus1).unwrap().matrix;
    let bound = 5.0 * (2.0f64.powi(2) / q as f64).sqrt();
    assert!(max_entry_error(&s, &lambda) < bound);
}

/// Monte Carlo `E[(XᵀΣ⁻¹X)²] / (d(d+2)) − 1` with Σ the covariance.
fn kurtosis_oracle(nu: f64, seed: u64) -> f64 {
    let d = 2;
    let spec = EllipticalSpec::student_t(nu, DMatrix::identity(d, d)).unwrap();
    let ratio = spec.family.covariance_ratio();
    let mut acc = 0.0;
    let chunks: u64 = 10;
    let per = 1_000_000;
    for c in 0..chunks {
        let x = sample_elliptical(&spec, per, seed * 100 + c).unwrap();
        acc += x.row_iter().map(|r| (r.norm_squared() / ratio).powi(2)).sum::<f64>();
    }
    acc / (chunks as usize * per) as f64 / (d * (d + 2)) as f64 - 1.0
}

#[test]
fn kappa_matches_monte_carlo_fourth_moment() {
    let t7 = EllipticalSpec::student_t(7.0, DMatrix::identity(2, 2)).unwrap();
    let t11 = EllipticalSpec::student_t(11.0, DMatrix::identity(2, 2)).unwrap();
    assert!((theoretical_kappa(&t7).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((theoretical_kappa(&t11).unwrap() - 2.0 / 7.0).abs() < 1e-15);
    let g = EllipticalSpec::gaussian(DMatrix::identity(3, 3) * 4.0).unwrap();
    assert_eq!(theoretical_kappa(&g).unwrap(), 0.0);
    let mc7 = kurtosis_oracle(7.0, 1);
    assert!((mc7 - 2.0 / 3.0).abs() < 0.02, "{mc7}");
    let mc11 = kurtosis_oracle(11.0, 2);
    assert!((mc11 - 2.0 / 7.0).abs() < 0.02, "{mc11}");
}

#[test]
fn density_values() {
    let g1 = EllipticalSpec::gaussian(DMatrix::identity(1, 1)).unwrap();
    let mode = (2.0 * std::f64::consts::PI).sqrt().recip();
    assert!((density_elliptical(&g1, &[0.0]).unwrap() - mode).abs() < 1e-15);
    let g4 = EllipticalSpec::gaussian(DMatrix::from_element(1, 1, 4.0)).unwrap();
    assert!((density_elliptical(&g4, &[0.0]).unwrap() - 0.5 * mode).abs() < 1e-15);
    assert!(density_elliptical(&g4, &[0.0, 1.0]).is_err());
}

fn mass_2d(spec: &EllipticalSpec, half_width: f64) -> f64 {
    integrate(
        |x| {
            integrate(|y| density_elliptical(spec, &[x, y]), -half_width, half_width, 1e-11)
        },
        -half_width,
        half_width,
        1e-10,
    )
    .unwrap()
}

#[test]
fn densities_integrate_to_one() {
    let t5 = EllipticalSpec::student_t(5.0, DMatrix::identity(2, 2)).unwrap();
    // the t(5) tail beyond the box carries about 1e-6 of the mass
    assert!((mass_2d(&t5, 30.0) - 1.0).abs() < 1e-4);
    let g = EllipticalSpec::gaussian(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0])).unwrap();
    assert!((mass_2d(&g, 12.0) - 1.0).abs() < 1e-6);
    let t9 = EllipticalSpec::student_t(9.0, DMatrix::from_element(1, 1, 0.5)).unwrap();
    let m1 = integrate(|x| density_elliptical(&t9, &[x]), -200.0, 200.0, 1e-12).unwrap();
    assert!((m1 - 1.0).abs() < 1e-6);
}

#[test]
fn rejects_bad_specs() {
    assert!(EllipticalSpec::student_t(4.0, DMatrix::identity(2, 2)).is_err());
    assert!(EllipticalSpec::gaussian(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    assert!(EllipticalSpec::gaussian(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_same_sample(seed in any::<u64>(), q in 1usize..50, nu in 4.5f64..30.0) {
        let spec = EllipticalSpec::student_t(nu, DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap();
        prop_assert_eq!(sample_elliptical(&spec, q, seed).unwrap(), sample_elliptical(&spec, q, seed).unwrap());
    }

    #[test]
    fn density_is_symmetric_and_peaks_at_zero(x in -5.0f64..5.0, y in -5.0f64..5.0, nu in 4.5f64..30.0) {
        let spec = EllipticalSpec::student_t(nu, DMatrix::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 0.8])).unwrap();
        let f = density_elliptical(&spec, &[x, y]).unwrap();
        let g = density_elliptical(&spec, &[-x, -y]).unwrap();
        prop_assert!((f - g).abs() <= 1e-14 * f.max(1e-300));
        prop_assert!(f <= density_elliptical(&spec, &[0.0, 0.0]).unwrap());
    }
}
