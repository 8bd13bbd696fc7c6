use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latentgraph::covest::{predict_random_components, BlockPartition, PredictorConfig};
use latentgraph::dispersion::{simulate_mglmm_with, MglmmSpec};
use latentgraph::exec::Execution;
use latentgraph::gtests::{beta_product_params, BetaProductSample};
use latentgraph::study::{run_study, StudyConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn spec() -> MglmmSpec {
    serde_json::from_value(serde_json::json!({
        "margins": [
            {"family": "gamma", "link": "log", "beta": [0.6], "dispersion": 0.5},
            {"family": "poisson", "link": "log", "beta": [0.6]}
        ],
        "q": 400,
        "replicates": 20,
        "random_components": {"family": "gaussian", "scatter": [[0.8166, 0.0], [0.0, 0.91302]]}
    }))
    .unwrap()
}

fn simulation(c: &mut Criterion) {
    let spec = spec();
    let mut group = c.benchmark_group("simulate_mglmm");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_mglmm_with(&spec, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let spec = spec();
    let data = simulate_mglmm_with(&spec, 1, Execution::Sequential).unwrap().data;
    let mut group = c.benchmark_group("predict_random_components");
    for (name, exec) in MODES {
        let mut config = PredictorConfig::from_spec(&spec);
        config.execution = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| predict_random_components(&data, &config).unwrap())
        });
    }
    group.finish();
}

fn exact_null(c: &mut Criterion) {
    let params = beta_product_params(200, &BlockPartition::new(vec![1, 1, 2], 0).unwrap()).unwrap();
    let mut group = c.benchmark_group("beta_product_sample");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| BetaProductSample::draw(&params, 200_000, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn study(c: &mut Criterion) {
    let config: StudyConfig = serde_json::from_value(serde_json::json!({
        "models": [{"name": "t6", "type": "elliptical", "spec": {"family": "t", "nu": 6, "scatter": [
            [0.4083, 0.0, 0.0, 0.0],
            [0.0, 0.456510, -0.451965, 0.265170],
            [0.0, -0.451965, 0.837030, -0.491090],
            [0.0, 0.265170, -0.491090, 0.524365]]}}],
        "hypothesis": {"blocks": [[1], [3]], "condition": "rest"},
        "q_schedule": [100, 400],
        "n_sims": 200,
        "engine": {"engine": "mc", "draws": 20000, "seed": 1}
    }))
    .unwrap();
    let mut group = c.benchmark_group("run_study");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_study(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulation, prediction, exact_null, study);
criterion_main!(benches);
