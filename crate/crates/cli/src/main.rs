//! Command-line front end: simulate synthetic instances, fit the model,
//! forecast one step ahead, run the root-cause diagnostic, and drive
//! benchmark campaigns. Configuration comes from an optional TOML or JSON
//! file; individual flags override file values, and every subcommand is
//! deterministic given `--seed`.

mod csvio;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tvsem::eval::{extend_reference, run_benchmark};
use tvsem::forecast::forecast_one_step;
use tvsem::graph::{determine_graph, enforce_acyclicity};
use tvsem::model::Scenario;
use tvsem::oracle::{detect_root, root_noise_variance};
use tvsem::saem::{saem_fit, FitDiagnostics};
use tvsem::smoother::{cpf_as_sweep, ParticleSystem};
use tvsem::{
    BenchmarkConfig64, CausalGraph64, FitConfig64, GeneratorConfig64, LatentTrajectory64,
    SemParameters64,
};

#[derive(Parser)]
#[command(name = "tvsem", version, about = "Time-varying causal model estimation")]
struct Cli {
    /// Size of the global thread pool used by parallel library routines.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (and its ground truth) from a
    /// generator configuration.
    Simulate(SimulateArgs),
    /// Fit the model to a CSV dataset and emit a self-describing result
    /// document.
    Fit(FitArgs),
    /// One-step-ahead forecasts from a fitted model over the rows of an
    /// extended dataset.
    Forecast(ForecastArgs),
    /// Root-cause detection from cross-time kurtosis profiles.
    OracleRoot(OracleRootArgs),
    /// Run a full generate/fit/forecast benchmark campaign.
    Benchmark(BenchmarkArgs),
}

/// On-disk configuration covering every subcommand; all sections and
/// fields are optional and default sensibly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    generator: GeneratorConfig64,
    fit: FitConfig64,
    benchmark: BenchmarkSection,
    /// Graph-determination threshold.
    threshold: f64,
    mh_samples: usize,
    /// Maximum kurtosis-profile lag for root detection.
    p_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BenchmarkSection {
    replications: usize,
    sample_sizes: Vec<usize>,
    forecast_horizon: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection { replications: 10, sample_sizes: vec![500, 1000, 1500, 2000], forecast_horizon: 10 }
    }
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            generator: GeneratorConfig64::default(),
            fit: FitConfig64::default(),
            benchmark: BenchmarkSection::default(),
            threshold: 0.05,
            mh_samples: 2000,
            p_max: 5,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let parsed = if path.extension().is_some_and(|ext| ext == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| format!("cannot parse config {}: {e}", path.display()))
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse::<Scenario>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML or JSON configuration file (section `generator`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path for the simulated series.
    #[arg(long)]
    out: PathBuf,
    /// Optional output path for the ground truth (graph + parameters).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of variables.
    #[arg(long)]
    variables: Option<usize>,
    /// Series length.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
}

/// Ground-truth document written next to a simulated dataset.
#[derive(Serialize, Deserialize)]
struct TruthDocument {
    version: String,
    seed: u64,
    config: GeneratorConfig64,
    graph: CausalGraph64,
    parameters: SemParameters64,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), String> {
    let mut config = load_config(args.config.as_deref())?.generator;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(m) = args.variables {
        config.m = m;
    }
    if let Some(t) = args.length {
        config.t_len = t;
    }
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (data, graph, theta, _latents) =
        tvsem::model::generate_benchmark_instance(&config, &mut rng)
            .map_err(|e| e.to_string())?;
    csvio::save_csv(&args.out, &data).map_err(|e| e.to_string())?;
    if let Some(truth_path) = &args.truth {
        let doc = TruthDocument {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config,
            graph,
            parameters: theta,
        };
        write_json(truth_path, &doc)?;
    }
    Ok(())
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output JSON document.
    #[arg(long)]
    out: PathBuf,
    /// TOML or JSON configuration file (section `fit`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Particle count per conditional sweep.
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Graph-determination threshold on posterior mean/variance.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// SCAD sparsity penalty strength (0 disables).
    #[arg(long)]
    scad_lambda: Option<f64>,
}

/// Posterior mean/variance time series of one retained edge.
#[derive(Serialize, Deserialize)]
struct EdgeSummary {
    from: usize,
    to: usize,
    /// 0 for an instantaneous edge, otherwise the time lag.
    lag: usize,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

/// Self-describing fit result; carries everything the `forecast`
/// subcommand needs.
#[derive(Serialize, Deserialize)]
struct FitDocument {
    version: String,
    seed: u64,
    config: FitConfig64,
    threshold: f64,
    t_fit: usize,
    variable_names: Vec<String>,
    parameters: SemParameters64,
    graph: CausalGraph64,
    /// Instantaneous edges dropped to restore acyclicity.
    removed_edges: Vec<(usize, usize)>,
    latent_summaries: Vec<EdgeSummary>,
    diagnostics: FitDiagnostics<f64>,
    posterior_mean: LatentTrajectory64,
    posterior_sq: LatentTrajectory64,
    particles: ParticleSystem<f64>,
}

fn edge_summaries(
    graph: &CausalGraph64,
    mean: &LatentTrajectory64,
    sq: &LatentTrajectory64,
) -> Vec<EdgeSummary> {
    let m = graph.m();
    let t_len = mean.len();
    let mut out = Vec::new();
    let mut push = |from: usize, to: usize, lag: usize| {
        let series = |t: usize| match lag {
            0 => (mean.b[t][(to, from)], sq.b[t][(to, from)]),
            s => (mean.c[s - 1][t][(to, from)], sq.c[s - 1][t][(to, from)]),
        };
        let mut mu = Vec::with_capacity(t_len);
        let mut var = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (m_t, sq_t) = series(t);
            mu.push(m_t);
            var.push((sq_t - m_t * m_t).max(0.0));
        }
        out.push(EdgeSummary { from, to, lag, mean: mu, variance: var });
    };
    for from in 0..m {
        for to in 0..m {
            if graph.instantaneous[(from, to)] != 0 {
                push(from, to, 0);
            }
            for (s, lagged) in graph.lagged.iter().enumerate() {
                if lagged[(from, to)] != 0 {
                    push(from, to, s + 1);
                }
            }
        }
    }
    out
}

fn cmd_fit(args: &FitArgs) -> Result<(), String> {
    let file = load_config(args.config.as_deref())?;
    let mut config = file.fit;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(p) = args.particles {
        config.m_particles = p;
    }
    if let Some(k) = args.iterations {
        config.iterations = k.max(1);
        config.burn_in = config.burn_in.min(config.iterations / 2);
    }
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    if let Some(l) = args.scad_lambda {
        config.scad_lambda = l;
    }
    let threshold = args.threshold.unwrap_or(file.threshold);

    let data = csvio::load_csv(&args.data).map_err(|e| e.to_string())?;
    let fit = saem_fit(&data, &config).map_err(|e| e.to_string())?;
    let mut graph = determine_graph(&fit.posterior_mean, threshold).map_err(|e| e.to_string())?;
    let removed_edges = enforce_acyclicity(&mut graph);
    let latent_summaries = edge_summaries(&graph, &fit.posterior_mean, &fit.posterior_sq);

    let doc = FitDocument {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config,
        threshold,
        t_fit: data.t_len(),
        variable_names: data.names.clone(),
        parameters: fit.theta,
        graph,
        removed_edges,
        latent_summaries,
        diagnostics: fit.diagnostics,
        posterior_mean: fit.posterior_mean,
        posterior_sq: fit.posterior_sq,
        particles: fit.particles,
    };
    write_json(&args.out, &doc)
}

#[derive(Args)]
struct ForecastArgs {
    /// Fit document produced by `tvsem fit`.
    #[arg(long)]
    model: PathBuf,
    /// CSV dataset extending the fitted one by at least one row.
    #[arg(long)]
    data: PathBuf,
    /// Target variable: a column name or zero-based index.
    #[arg(long)]
    target: String,
    /// Output JSON document.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metropolis-Hastings chain length per forecast.
    #[arg(long)]
    mh_samples: Option<usize>,
    /// TOML or JSON configuration file (for `mh_samples`).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct ForecastStep {
    /// Time index of the forecast row in the extended dataset.
    t: usize,
    point: f64,
    actual: f64,
}

#[derive(Serialize, Deserialize)]
struct ForecastDocument {
    version: String,
    seed: u64,
    target: String,
    target_index: usize,
    mh_samples: usize,
    steps: Vec<ForecastStep>,
}

fn resolve_target(names: &[String], target: &str) -> Result<usize, String> {
    if let Some(idx) = names.iter().position(|n| n == target) {
        return Ok(idx);
    }
    match target.parse::<usize>() {
        Ok(idx) if idx < names.len() => Ok(idx),
        _ => Err(format!(
            "unknown target {target:?}; expected one of {names:?} or an index below {}",
            names.len()
        )),
    }
}

fn cmd_forecast(args: &ForecastArgs) -> Result<(), String> {
    let file = load_config(args.config.as_deref())?;
    let mh_samples = args.mh_samples.unwrap_or(file.mh_samples);
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| format!("cannot read model {}: {e}", args.model.display()))?;
    let model: FitDocument = serde_json::from_str(&text)
        .map_err(|e| format!("cannot parse model {}: {e}", args.model.display()))?;
    let data = csvio::load_csv(&args.data).map_err(|e| e.to_string())?;
    if data.names != model.variable_names {
        return Err("dataset columns do not match the fitted model".into());
    }
    if data.t_len() <= model.t_fit {
        return Err(format!(
            "extended dataset has {} rows but the model was fitted on {}; \
             need at least one additional row to forecast",
            data.t_len(),
            model.t_fit
        ));
    }
    let target_index = resolve_target(&data.names, &args.target)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut reference = model
        .particles
        .sample_trajectory(&mut rng)
        .map_err(|e| e.to_string())?;
    let m = data.m();
    let mut steps = Vec::new();
    for t_pred in model.t_fit..data.t_len() {
        let history = data.truncated(t_pred);
        reference = extend_reference(
            &model.parameters,
            &reference,
            t_pred - reference.len(),
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let (system, next_reference) = cpf_as_sweep(
            &history,
            &model.parameters,
            &reference,
            model.config.m_particles,
            None,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        reference = next_reference;
        let observed = Array1::from_shape_fn(m, |i| data.values[(t_pred, i)]);
        let (point, _trace) = forecast_one_step(
            &system,
            &model.parameters,
            &model.graph,
            &history.values,
            &observed,
            target_index,
            mh_samples,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        steps.push(ForecastStep { t: t_pred, point, actual: observed[target_index] });
    }
    let doc = ForecastDocument {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.seed,
        target: args.target.clone(),
        target_index,
        mh_samples,
        steps,
    };
    write_json(&args.out, &doc)
}

#[derive(Args)]
struct OracleRootArgs {
    /// Input CSV dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output JSON document.
    #[arg(long)]
    out: PathBuf,
    /// Maximum profile lag.
    #[arg(long)]
    p_max: Option<usize>,
    /// TOML or JSON configuration file (for `p_max`).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct RootDocument {
    version: String,
    p_max: usize,
    root: usize,
    root_name: String,
    candidates: Vec<usize>,
    flatness: Vec<f64>,
    profiles: Array2<f64>,
    /// Noise-variance estimate at the detected root (profile lag 1).
    root_noise_variance: f64,
}

fn cmd_oracle_root(args: &OracleRootArgs) -> Result<(), String> {
    let file = load_config(args.config.as_deref())?;
    let p_max = args.p_max.unwrap_or(file.p_max);
    let data = csvio::load_csv(&args.data).map_err(|e| e.to_string())?;
    let detection = detect_root(&data, p_max).map_err(|e| e.to_string())?;
    let sigma2 =
        root_noise_variance(&data, detection.root, 1).map_err(|e| e.to_string())?;
    let doc = RootDocument {
        version: env!("CARGO_PKG_VERSION").into(),
        p_max,
        root: detection.root,
        root_name: data.names[detection.root].clone(),
        candidates: detection.candidates,
        flatness: detection.flatness,
        profiles: detection.profiles,
        root_noise_variance: sigma2,
    };
    write_json(&args.out, &doc)
}

#[derive(Args)]
struct BenchmarkArgs {
    /// TOML or JSON configuration file (sections `generator`, `fit`,
    /// `benchmark`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Optional flat CSV table of the per-replication results.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
}

#[derive(Serialize)]
struct BenchmarkDocument {
    version: String,
    seed: u64,
    config: BenchmarkConfig64,
    report: tvsem::BenchmarkReport64,
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), String> {
    let file = load_config(args.config.as_deref())?;
    let mut config = BenchmarkConfig64 {
        generator: file.generator,
        fit: file.fit,
        replications: file.benchmark.replications,
        sample_sizes: file.benchmark.sample_sizes,
        forecast_horizon: file.benchmark.forecast_horizon,
        threshold: file.threshold,
        mh_samples: file.mh_samples,
        seed: 0,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(s) = args.scenario {
        config.generator.scenario = s;
        config.fit.scenario = s;
    }
    let report = run_benchmark(&config).map_err(|e| e.to_string())?;
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, report.to_csv())
            .map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    }
    let doc = BenchmarkDocument {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config,
        report,
    };
    write_json(&args.out, &doc)
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| format!("serialization failed: {e}"))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::OracleRoot(args) => cmd_oracle_root(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
