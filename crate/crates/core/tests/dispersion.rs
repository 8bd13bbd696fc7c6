use latentgraph::dispersion::*;
use latentgraph::exec::Execution;
use proptest::prelude::*;

fn spec_json(body: serde_json::Value) -> MglmmSpec {
    serde_json::from_value(body).unwrap()
}

fn gamma_poisson(q: usize, replicates: usize) -> MglmmSpec {
    spec_json(serde_json::json!({
        "margins": [
            {"family": "gamma", "link": "log", "beta": [0.6], "dispersion": 0.5},
            {"family": "poisson", "link": "log", "beta": [0.6]}
        ],
        "q": q,
        "replicates": replicates,
        "random_components": {"family": "gaussian", "scatter": [[0.8166, 0.0], [0.0, 0.91302]]}
    }))
}

#[test]
fn full_design_row_count() {
    let sim = simulate_mglmm(&gamma_poisson(800, 40), 1).unwrap();
    assert_eq!(sim.data.rows.len(), 64_000);
    assert_eq!(sim.data.margin_rows(0).count(), 32_000);
    assert_eq!(sim.truth.shape(), (800, 2));
    sim.data.validate().unwrap();
}

#[test]
fn vanishing_noise_recovers_latent_values() {
    let spec = spec_json(serde_json::json!({
        "margins": [{"family": "gaussian", "link": "identity", "beta": [0.0], "dispersion": 1e-12}],
        "q": 30,
        "replicates": 1,
        "random_components": {"family": "gaussian", "scatter": [[1.5]]}
    }));
    let sim = simulate_mglmm(&spec, 5).unwrap();
    for o in &sim.data.rows {
        assert!((o.y - sim.truth[(o.cluster, 0)]).abs() < 1e-5);
    }
}

#[test]
fn simulation_is_deterministic_across_modes() {
    let spec = gamma_poisson(60, 5);
    let a = simulate_mglmm_with(&spec, 9, Execution::Sequential).unwrap();
    let b = simulate_mglmm_with(&spec, 9, Execution::Parallel).unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.truth, b.truth);
    let c = simulate_mglmm_with(&spec, 10, Execution::Sequential).unwrap();
    assert_ne!(a.truth, c.truth);
}

#[test]
fn cluster_means_match_inverse_link() {
    let sim = simulate_mglmm(&gamma_poisson(50, 2000), 3).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        for c in 0..50 {
            let ys: Vec<f64> = sim
                .data
                .rows
                .iter()
                .filter(|o| o.margin == j && o.cluster == c)
                .map(|o| o.y)
                .collect();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let want = (0.6 + sim.truth[(c, j)]).exp();
            let t = (mean - want) / (var / n).sqrt();
            worst = worst.max(t.abs());
        }
    }
    assert!(worst < 3.0, "{worst}");
}

#[test]
fn variance_function_is_curvature_of_deviance() {
    // integer responses keep y in the count supports; the mean moves instead
    for (family, mu) in [(Family::Gamma, 2.0), (Family::Poisson, 3.0), (Family::Binomial { trials: 5 }, 2.0)] {
        let h = 1e-4;
        let d = |m: f64| unit_deviance(family, mu, m).unwrap();
        let second = (d(mu + h) - 2.0 * d(mu) + d(mu - h)) / (h * h);
        assert!((2.0 / second - variance_function(family, mu).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn density_examples() {
    let pois = MarginSpec::new(Family::Poisson, Link::Log, vec![0.0], 1.0).unwrap();
    assert!((conditional_density(&pois, 0.0, 2.0).unwrap() - (-2f64).exp()).abs() < 1e-15);
    let gam = MarginSpec::new(Family::Gamma, Link::Log, vec![0.0], 0.5).unwrap();
    assert!((conditional_density(&gam, 1.0, 1.0).unwrap() - 4.0 * (-2f64).exp()).abs() < 1e-12);
    assert!(MarginSpec::new(Family::Poisson, Link::Log, vec![0.0], 2.0).is_err());
    assert!((apply_inverse_link(Link::Log, 0.6) - 1.822_118_800_390_509).abs() < 1e-12);
    assert_eq!(apply_inverse_link(Link::Logit, 0.0), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_responses_lie_in_the_support(seed in any::<u64>(), beta in -1.0f64..1.0) {
        let spec = spec_json(serde_json::json!({
            "margins": [
                {"family": "gamma", "link": "log", "beta": [beta], "dispersion": 0.7},
                {"family": "poisson", "link": "log", "beta": [beta]},
                {"family": "binomial", "trials": 4, "link": "logit", "beta": [beta]}
            ],
            "q": 10,
            "replicates": 3,
            "random_components": {"family": "t", "nu": 6, "scatter": [[1.0, 0.2, 0.0], [0.2, 1.0, 0.1], [0.0, 0.1, 1.0]]}
        }));
        let sim = simulate_mglmm(&spec, seed).unwrap();
        for o in &sim.data.rows {
            prop_assert!(spec.margins[o.margin].family.in_support(o.y));
        }
    }
}
