//! Command implementations for the `latentgraph` binary.

pub mod args;
pub mod error;
pub mod io;
pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use latentgraph::covest::{
    conditional_scatter, elliptical_approx_ml, gaussian_approx_ml, predict_random_components,
    sample_covariance, Condition, Divisor, Hypothesis, MarginShape, MlOptions, PredictionSet,
    PredictorConfig,
};
use latentgraph::dispersion::{simulate_mglmm_with, MglmmSpec};
use latentgraph::elliptical::EllipticalFamily;
use latentgraph::exec::Execution;
use latentgraph::graphs::{build_bcg, build_ug, export_dot, figure2_fixture, moralize, MixedGraph};
use latentgraph::gtests::{
    elliptical_test, estimate_kappa, gaussian_exact_test, ks_uniform_test, pairwise_edge_tests,
    Correction, DataTest, Engine, Method,
};
use latentgraph::study::{run_study, StudyConfig};
use nalgebra::DMatrix;
use serde::Serialize;

use args::*;
use error::{CliError, CliResult};
use io::CovarianceJson;

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let exec = execution(cli.threads)?;
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => simulate(&a, seed.unwrap_or(0), exec),
        Command::Predict(a) => predict(&a, exec),
        Command::EstimateCov(a) => estimate_cov(&a, exec),
        Command::Test(a) => test(&a),
        Command::Graph(a) => graph(&a),
        Command::PowerStudy(a) => power_study(&a, seed, exec),
        Command::Uniformity(a) => uniformity(&a),
    }
}

#[cfg(feature = "parallel")]
fn execution(threads: Option<usize>) -> CliResult<Execution> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            // a pool may already exist when commands run in-process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

#[cfg(not(feature = "parallel"))]
fn execution(threads: Option<usize>) -> CliResult<Execution> {
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    Ok(Execution::Sequential)
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn simulate(a: &SimulateArgs, seed: u64, exec: Execution) -> CliResult<()> {
    let spec: MglmmSpec = io::read_json(&a.spec)?;
    let sim = simulate_mglmm_with(&spec, seed, exec)?;
    io::write_long(&a.out, &sim.data)?;
    io::write_cluster_matrix(&truth_path(&a.out), &[("b", &sim.truth)])
}

fn read_margins(path: &Path) -> CliResult<Vec<MarginShape>> {
    let value: serde_json::Value = io::read_json(path)?;
    let list = match value {
        serde_json::Value::Object(mut map) => map
            .remove("margins")
            .ok_or_else(|| CliError::usage(format!("{}: no 'margins' entry", path.display())))?,
        other => other,
    };
    Ok(serde_json::from_value(list)?)
}

fn predictions_from_data(data: &Path, margins: &Path, exec: Execution) -> CliResult<PredictionSet> {
    let long = io::read_long(data)?;
    let mut config = PredictorConfig::new(read_margins(margins)?);
    config.execution = exec;
    Ok(predict_random_components(&long, &config)?)
}

fn predict(a: &PredictArgs, exec: Execution) -> CliResult<()> {
    let preds = predictions_from_data(&a.data, &a.margins, exec)?;
    io::write_predictions(&a.out, &preds)
}

fn estimate_cov(a: &EstimateArgs, exec: Execution) -> CliResult<()> {
    let head = io::headers(&a.input)?;
    let preds = if head.first().map(String::as_str) == Some("margin") {
        let margins = a
            .margins
            .as_ref()
            .ok_or_else(|| CliError::usage("a long dataset needs --margins"))?;
        predictions_from_data(&a.input, margins, exec)?
    } else {
        io::read_predictions(&a.input)?
    };
    let q = preds.q();
    let divisor = match a.divisor {
        DivisorArg::QMinus1 => Divisor::QMinus1,
        DivisorArg::Q => Divisor::Q,
    };
    let sample = sample_covariance(&preds.bhat, divisor)?;
    let json = match a.method {
        CovMethod::Sample => {
            let mut j = CovarianceJson::new(&sample.matrix, q, divisor);
            j.method = Some("sample".into());
            j
        }
        CovMethod::MlGaussian | CovMethod::MlElliptical => {
            let init = ml_start(&preds.bhat)?;
            let opts = MlOptions::default();
            let (fit, name) = if a.method == CovMethod::MlGaussian {
                (gaussian_approx_ml(&preds, &init, &opts)?, "ml-gaussian")
            } else {
                let family = match (a.family.as_str(), a.nu) {
                    ("gaussian", _) => EllipticalFamily::Gaussian,
                    ("t", Some(nu)) => EllipticalFamily::StudentT { nu },
                    ("t", None) => return Err(CliError::usage("--family t needs --nu")),
                    (other, _) => {
                        return Err(CliError::usage(format!("unknown family '{other}'")))
                    }
                };
                (elliptical_approx_ml(&preds, family, a.nodes, &init, &opts)?, "ml-elliptical")
            };
            let mut j = CovarianceJson::new(&fit.sigma, q, Divisor::Q);
            j.method = Some(name.into());
            j.loglik = Some(fit.loglik);
            j
        }
    };
    io::write_text(a.out.as_deref(), &io::to_json(&json)?)
}

/// Sample covariance of the predictions with a small ridge when it is singular.
fn ml_start(bhat: &DMatrix<f64>) -> CliResult<DMatrix<f64>> {
    let s = sample_covariance(bhat, Divisor::Q)?.matrix;
    if latentgraph::linalg::cholesky(&s).is_ok() {
        return Ok(s);
    }
    let scale = s.diagonal().max().max(1e-6);
    Ok(&s + DMatrix::identity(s.nrows(), s.nrows()) * (1e-3 * scale))
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("{what}: '{t}' is not a positive integer")))
        })
        .collect()
}

fn one_based(v: Vec<usize>, what: &str) -> CliResult<Vec<usize>> {
    v.into_iter()
        .map(|i| {
            i.checked_sub(1)
                .ok_or_else(|| CliError::usage(format!("{what}: coordinates are 1-based")))
        })
        .collect()
}

fn hypothesis(blocks: &str, coords: Option<&str>, condition: &str, dim: usize) -> CliResult<Hypothesis> {
    let sizes = parse_list(blocks, "--blocks")?;
    let total: usize = sizes.iter().sum();
    let coords = match coords {
        Some(c) => one_based(parse_list(c, "--coords")?, "--coords")?,
        None => (0..total).collect(),
    };
    if coords.len() != total {
        return Err(CliError::usage(format!(
            "--coords lists {} coordinates but --blocks needs {total}",
            coords.len()
        )));
    }
    let mut start = 0;
    let groups = sizes
        .iter()
        .map(|&s| {
            let g = coords[start..start + s].to_vec();
            start += s;
            g
        })
        .collect();
    let cond = match condition {
        "rest" => Condition::Rest,
        "none" => Condition::None,
        list => Condition::Indices(one_based(parse_list(list, "--condition")?, "--condition")?),
    };
    Ok(Hypothesis::new(groups, cond, dim)?)
}

fn engine(e: EngineArg) -> Engine {
    match e {
        EngineArg::Mc => Engine::default(),
        EngineArg::Series => Engine::series(),
    }
}

fn test(a: &TestArgs) -> CliResult<()> {
    let cov: CovarianceJson = io::read_json(&a.cov)?;
    let sigma = cov.matrix()?;
    let q = a.q.unwrap_or(cov.q);
    let hyp = hypothesis(&a.blocks, a.coords.as_deref(), &a.condition, sigma.nrows())?;
    let (arranged, part) = hyp.arrange(&sigma);
    let result = match a.method {
        MethodArg::Gaussian => gaussian_exact_test(&arranged, &part, q, engine(a.engine))?,
        MethodArg::Elliptical => {
            let kappa = match (&a.kappa.kappa, &a.kappa.data) {
                (Some(k), _) => *k,
                (None, Some(path)) => DataTest::prepare(&io::read_data_matrix(path)?, &hyp)?.kappa,
                (None, None) => {
                    return Err(CliError::usage(
                        "the elliptical test needs --kappa or --data for the kurtosis",
                    ))
                }
            };
            let a_cond = conditional_scatter(&arranged, &part)?;
            elliptical_test(&a_cond, &part.conditioned(), q, kappa)?
        }
    };
    io::write_text(a.out.as_deref(), &io::to_json(&result)?)
}

#[derive(Serialize)]
struct GraphOutput {
    graph: latentgraph::graphs::GraphJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pvalues: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adjusted: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    latentgraph::elliptical::matrix_to_rows(m)
}

fn full_kappa(data: &DMatrix<f64>) -> CliResult<f64> {
    let s = sample_covariance(data, Divisor::QMinus1)?.matrix;
    let mut centered = data.clone();
    let mean = data.row_mean();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    Ok(estimate_kappa(&centered, &s)?)
}

fn graph(a: &GraphArgs) -> CliResult<()> {
    let correction = match a.correction {
        CorrectionArg::None => Correction::None,
        CorrectionArg::Holm => Correction::Holm,
        CorrectionArg::Bonferroni => Correction::Bonferroni,
    };
    let (g, output): (MixedGraph, GraphOutput) = match (&a.cov, a.fixture) {
        (None, Some(Fixture::Figure2)) => {
            let g = figure2_fixture();
            let g = if a.moral { moralize(&g) } else { g };
            let graph = g.to_json();
            (
                g,
                GraphOutput {
                    graph,
                    pvalues: None,
                    adjusted: None,
                    kappa: None,
                },
            )
        }
        (Some(path), None) => {
            let cov: CovarianceJson = io::read_json(path)?;
            let sigma = cov.matrix()?;
            let q = a.q.unwrap_or(cov.q);
            let (method, kappa) = match a.method {
                MethodArg::Gaussian => (Method::Exact, None),
                MethodArg::Elliptical => {
                    let k = match (&a.kappa.kappa, &a.kappa.data) {
                        (Some(k), _) => *k,
                        (None, Some(p)) => full_kappa(&io::read_data_matrix(p)?)?,
                        (None, None) => {
                            return Err(CliError::usage(
                                "the elliptical method needs --kappa or --data for the kurtosis",
                            ))
                        }
                    };
                    (Method::Elliptical, Some(k))
                }
            };
            let tests = pairwise_edge_tests(
                &sigma,
                q,
                method,
                a.alpha,
                correction,
                kappa.unwrap_or(0.0),
                engine(a.engine),
            )?;
            let ug = build_ug(&tests.raw, a.alpha, correction)?;
            let g = if a.bcg || a.moral {
                let bcg = build_bcg(&[ug], sigma.nrows())?;
                if a.moral {
                    moralize(&bcg)
                } else {
                    bcg
                }
            } else {
                ug
            };
            let graph = g.to_json();
            (
                g,
                GraphOutput {
                    graph,
                    pvalues: Some(rows(&tests.raw)),
                    adjusted: Some(rows(&tests.adjusted)),
                    kappa,
                },
            )
        }
        _ => return Err(CliError::usage("give exactly one of --cov or --fixture")),
    };
    let dot = export_dot(&g);
    match (&a.dot, &a.out) {
        (None, None) => io::write_text(None, &dot),
        (dot_path, out) => {
            if let Some(p) = dot_path {
                io::write_text(Some(p), &dot)?;
            }
            if let Some(p) = out {
                io::write_text(Some(p), &io::to_json(&output)?)?;
            }
            Ok(())
        }
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Exact => "gaussian",
        Method::Elliptical => "elliptical",
    }
}

fn power_study(a: &StudyArgs, seed: Option<u64>, exec: Execution) -> CliResult<()> {
    let mut config: StudyConfig = io::read_json(&a.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(alpha) = a.alpha {
        config.alpha = alpha;
    }
    let outcome = run_study(&config, exec)?;
    for f in &outcome.failures {
        eprintln!("warning: {f}");
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record([
        "model", "grid_value", "q", "method", "n_sims", "n_ok", "rejections", "rate", "ks_pvalue",
    ])?;
    for r in &outcome.rows {
        w.write_record([
            r.model.clone(),
            opt_num(r.grid_value),
            r.q.to_string(),
            method_name(r.method).to_string(),
            r.n_sims.to_string(),
            r.n_ok.to_string(),
            r.rejections.to_string(),
            format!("{}", r.rate),
            opt_num(r.ks_pvalue),
        ])?;
    }
    w.flush()?;
    if let Some(path) = &a.pvalues {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "grid_value", "q", "method", "index", "pvalue"])?;
        for r in &outcome.rows {
            for (i, p) in r.pvalues.iter().enumerate() {
                w.write_record([
                    r.model.clone(),
                    opt_num(r.grid_value),
                    r.q.to_string(),
                    method_name(r.method).to_string(),
                    (i + 1).to_string(),
                    format!("{p}"),
                ])?;
            }
        }
        w.flush()?;
    }
    if let Some(path) = &a.svg {
        io::write_text(Some(path), &power_svg(&config, &outcome.rows))?;
    }
    Ok(())
}

fn power_svg(config: &StudyConfig, rows: &[latentgraph::study::PowerRow]) -> String {
    let by_grid = !config.grid.is_empty();
    let mut series: Vec<plot::Series> = Vec::new();
    for r in rows {
        let mut name = format!("{} / {}", r.model, method_name(r.method));
        if by_grid && config.q_schedule.len() > 1 {
            let _ = write!(name, " / q={}", r.q);
        }
        let x = if by_grid { r.grid_value.unwrap_or(0.0) } else { r.q as f64 };
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, r.rate)),
            None => series.push(plot::Series {
                name,
                points: vec![(x, r.rate)],
            }),
        }
    }
    let xlabel = if by_grid { "off-diagonal value" } else { "clusters q" };
    plot::line_chart("Rejection rate", xlabel, "rejection rate", &series)
}

fn uniformity(a: &UniformityArgs) -> CliResult<()> {
    let filters = a
        .filters
        .iter()
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CliError::usage(format!("--filter '{f}' is not column=value")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let values = io::read_pvalues(&a.input, &filters)?;
    let ks = ks_uniform_test(&values)?;
    io::write_text(a.out.as_deref(), &io::to_json(&ks)?)?;
    if let Some(path) = &a.svg {
        io::write_text(Some(path), &plot::qq_plot("QQ plot of p-values", &values))?;
    }
    Ok(())
}
