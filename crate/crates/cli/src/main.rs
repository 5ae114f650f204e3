use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cpm_core::dataset::{self, load_csv_auto};
use cpm_core::embed::Init;
use cpm_core::eval;
use cpm_core::pipeline::{self, StageError};
use cpm_core::{CpmError, Dataset, DistanceMatrix, Embedding, Method, Metric, Rng, RunConfig, TargetDim};

#[derive(Parser)]
#[command(name = "cpm", version, about = "Capacity preserving mapping for point clouds")]
struct Cli {
    /// Worker threads (falls back to CPM_THREADS; results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        #[command(subcommand)]
        kind: Generator,
    },
    /// Embed a CSV dataset in 2 or 3 dimensions.
    Embed(EmbedArgs),
    /// Compare an embedding against its source data.
    Evaluate(EvaluateArgs),
}

#[derive(Subcommand)]
enum Generator {
    /// I.i.d. standard Gaussian cloud.
    Gaussian {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Unit ball (label 1) plus a surrounding shell (label 2).
    BallShell {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 1.0)]
        inner: f64,
        #[arg(long, default_value_t = 1.3)]
        outer: f64,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Swiss-roll strip padded with Gaussian noise coordinates.
    SwissRoll {
        #[arg(long)]
        n: usize,
        /// Total number of columns.
        #[arg(long, default_value_t = 6)]
        p: usize,
        #[arg(long, default_value_t = 25.0)]
        noise_variance: f64,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Labelled isotropic Gaussian clusters.
    Clusters {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        per_cluster: usize,
        #[arg(long)]
        dim: usize,
        /// Standard deviation of the cluster centers.
        #[arg(long, default_value_t = 20.0)]
        spread: f64,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Args)]
struct GenCommon {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Geodesic,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Geodesic => Metric::Geodesic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cpm,
    Mds,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Mds,
    Random,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Diagnostics JSON (dimension curve, KL history, config echo, warnings).
    #[arg(long)]
    diag: Option<PathBuf>,
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the high-dimensional distance matrix as CSV.
    #[arg(long)]
    dump_distances: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    num_scales: Option<usize>,
    #[arg(long)]
    smoothing_width: Option<usize>,
    #[arg(long)]
    small_scale_fraction: Option<f64>,
    #[arg(long)]
    epsilon_factor: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    orig: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    /// Metric for the original distances.
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: MetricArg,
    #[arg(long, default_value_t = 10)]
    knn: usize,
    /// Pairs of (original, embedded) distances.
    #[arg(long)]
    shepard: Option<PathBuf>,
    /// Cluster proximity error curve (needs labels).
    #[arg(long)]
    proximity: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    p_grid: Vec<f64>,
    /// Per-cluster variances of the embedding (needs labels).
    #[arg(long)]
    variances: Option<PathBuf>,
    /// Print the ball/shell crowding score (labels 1 and 2).
    #[arg(long)]
    crowding: bool,
    /// Embedded coordinates with their source row index.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

/// A failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

impl From<CpmError> for Failure {
    fn from(e: CpmError) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        Failure { code, message: e.to_string() }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let code = if e.source.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Generate { kind } => run_generate(kind),
        Command::Embed(args) => run_embed(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Failure> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("CPM_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("CPM_THREADS must be a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run_generate(kind: Generator) -> Result<(), Failure> {
    let (data, out) = match kind {
        Generator::Gaussian { n, dim, common } => {
            let mut rng = Rng::new(common.seed);
            (dataset::generate_gaussian_cloud(n, dim, &mut rng)?, common.out)
        }
        Generator::BallShell { dim, n1, n2, inner, outer, common } => {
            let mut rng = Rng::new(common.seed);
            (dataset::generate_ball_shell(dim, n1, n2, inner, outer, &mut rng)?, common.out)
        }
        Generator::SwissRoll { n, p, noise_variance, common } => {
            let mut rng = Rng::new(common.seed);
            (dataset::generate_augmented_swiss_roll(n, p, noise_variance, &mut rng)?, common.out)
        }
        Generator::Clusters { k, per_cluster, dim, spread, common } => {
            let mut rng = Rng::new(common.seed);
            (dataset::generate_gaussian_clusters(k, per_cluster, dim, spread, &mut rng)?, common.out)
        }
    };
    data.save_csv(&out)?;
    println!("N={}", data.len());
    println!("n={}", data.dim());
    Ok(())
}

fn build_config(args: &EmbedArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = args.method {
        cfg.method = match m {
            MethodArg::Cpm => Method::Cpm,
            MethodArg::Mds => Method::Mds,
        };
    }
    if let Some(m) = args.metric {
        cfg.metric = m.into();
    }
    if let Some(k) = args.knn {
        cfg.knn = k;
    }
    if let Some(d) = args.dim {
        cfg.target_dim = TargetDim::try_from(d).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(v) = args.num_scales {
        cfg.num_scales = v;
    }
    if let Some(v) = args.smoothing_width {
        cfg.smoothing_width = v;
    }
    if let Some(v) = args.small_scale_fraction {
        cfg.small_scale_fraction = v;
    }
    if let Some(v) = args.epsilon_factor {
        cfg.epsilon_factor = v;
    }
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = args.tol {
        cfg.tol = v;
    }
    if let Some(v) = args.init {
        cfg.init = match v {
            InitArg::Mds => Init::Mds,
            InitArg::Random => Init::Random,
        };
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn run_embed(args: EmbedArgs) -> Result<(), Failure> {
    let cfg = build_config(&args)?;
    let data = load_csv_auto(&args.input)?;
    info!("loaded {} points in R^{}", data.len(), data.dim());
    let output = pipeline::run(&data, &cfg)?;
    for w in &output.warnings {
        log::warn!("{w}");
    }
    dataset::save_csv(&args.out, output.embedding.coords(), data.labels())?;
    if let Some(path) = &args.diag {
        let diag = output.diagnostics(&cfg, &data);
        let mut text = serde_json::to_string_pretty(&diag)
            .map_err(|e| Failure { code: EXIT_DATA, message: format!("cannot encode diagnostics: {e}") })?;
        text.push('\n');
        write_file(path, &text)?;
    }
    if let Some(path) = &args.dump_distances {
        output.distances.save_csv(path)?;
    }
    if let Some(stop) = output.stop {
        println!("iterations={}", output.iterations);
        println!("stop={}", serde_json::to_string(&stop).unwrap_or_default().trim_matches('"'));
    }
    if let Some(kl) = output.kl_history.last() {
        println!("kl={kl}");
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("i/o error on {}: {e}", path.display()),
    })
}

fn original_distances(data: &Dataset, metric: MetricArg, knn: usize) -> Result<DistanceMatrix, Failure> {
    let cfg = RunConfig { metric: metric.into(), knn, ..RunConfig::default() };
    let mut warnings = Vec::new();
    let (dist, _) = pipeline::metric_distances(data, &cfg, &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(dist)
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let orig = load_csv_auto(&args.orig)?;
    let emb_data = load_csv_auto(&args.emb)?;
    if orig.len() != emb_data.len() {
        return Err(CpmError::Contract(format!(
            "original data has {} points, embedding has {}",
            orig.len(),
            emb_data.len()
        ))
        .into());
    }
    let labels = orig.labels().or(emb_data.labels()).map(<[i64]>::to_vec);
    let (coords, _) = emb_data.into_parts();
    let emb = Embedding::new(coords)?;
    let need_labels = |what: &str| {
        labels.as_deref().ok_or_else(|| Failure {
            code: EXIT_DATA,
            message: format!("{what} needs a label column in the original data"),
        })
    };

    let dist = original_distances(&orig, args.metric, args.knn)?;
    let shepard = eval::shepard_pairs(&dist, &emb)?;
    if let Some(path) = &args.shepard {
        shepard.save_csv(path)?;
    }
    println!("spearman={}", eval::spearman_rank_correlation(&shepard)?);

    if let Some(path) = &args.proximity {
        let curve = eval::proximity_error_curve(orig.points(), &emb, need_labels("proximity error")?, &args.p_grid)?;
        eval::save_proximity_csv(path, &curve)?;
        for (p, e) in &curve {
            println!("proximity_error[{p}]={e}");
        }
    }
    if let Some(path) = &args.variances {
        let v = eval::cluster_variances(emb.coords(), need_labels("cluster variance")?)?;
        eval::save_variance_csv(path, &v)?;
    }
    if args.crowding {
        let score = eval::crowding_overlap_score(&emb, need_labels("crowding score")?)?;
        println!("crowding={score}");
    }
    if let Some(path) = &args.trajectory {
        eval::save_trajectory_csv(path, &emb, labels.as_deref())?;
    }
    Ok(())
}
