use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use skgp::bench::{
    is_toml_path, parse_config, run_experiment, score_predictions, ExperimentConfig,
};
use skgp::bundle::{write_json, ModelBundle, SimSidecar, StackingReport};
use skgp::csvio::{
    default_feature_names, load_csv, load_features, write_csv, write_predictions, ResponseColumn,
};
use skgp::pipeline::{fit, screen_dataset, PipelineConfig};
use skgp::threads::{resolve_threads, with_threads, THREADS_ENV};
use skgp_core::simgen::{generate, Manifold, SimConfig, TorusSampling};

#[derive(Parser)]
#[command(
    name = "skgp",
    version,
    about = "Sketched Gaussian process regression with predictive stacking"
)]
struct Cli {
    /// Worker threads; never changes numeric output.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noisy-manifold regression dataset.
    Simulate(SimulateArgs),
    /// Rank features by marginal association with the response.
    Screen(ScreenArgs),
    /// Fit the stacked sketched-GP model and write a bundle.
    Fit(FitArgs),
    /// Predict with a fitted bundle.
    Predict(PredictArgs),
    /// Run a replicate experiment from a config file.
    Bench(BenchArgs),
    /// Score an external prediction CSV against a truth CSV.
    Score(ScoreArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    #[value(name = "swiss_roll", alias = "swiss-roll")]
    SwissRoll,
    Torus,
}

#[derive(Clone, Copy, ValueEnum)]
enum TorusSamplingArg {
    #[value(name = "parameter_uniform")]
    ParameterUniform,
    #[value(name = "area_uniform")]
    AreaUniform,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    manifold: ManifoldArg,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    n_new: usize,
    #[arg(long, default_value_t = 2000)]
    p: usize,
    #[arg(long, default_value_t = 0.01)]
    tau2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "parameter_uniform")]
    torus_sampling: TorusSamplingArg,
    /// Output directory for train.csv, test.csv and simulation.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Response column, by name or zero-based index.
    #[arg(long, default_value = "y")]
    response: ResponseColumn,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON or TOML pipeline config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    screen_count: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    standardize_features: bool,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text, is_toml_path(path))
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.screen_count {
            cfg.screen_count = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.seed {
            cfg.root_seed = v;
        }
        if self.standardize_features {
            cfg.standardize_features = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output JSON with scores and selected columns.
    #[arg(long, default_value = "screening.json")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for bundle.json, weights.json and stacking.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Feature CSV; a column named like the training response is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (JSON or TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv, summary.csv and timings.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    root_seed: Option<u64>,
}

#[derive(Args)]
struct ScoreArgs {
    /// CSV with columns point, lower95, upper95.
    #[arg(long)]
    predictions: PathBuf,
    /// CSV holding the true responses.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "y")]
    response: ResponseColumn,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let manifold = match args.manifold {
        ManifoldArg::SwissRoll => Manifold::SwissRoll,
        ManifoldArg::Torus => Manifold::Torus,
    };
    let cfg = SimConfig {
        torus_sampling: match args.torus_sampling {
            TorusSamplingArg::ParameterUniform => TorusSampling::ParameterUniform,
            TorusSamplingArg::AreaUniform => TorusSampling::AreaUniform,
        },
        ..SimConfig::new(manifold, args.n, args.n_new, args.p, args.tau2, args.seed)
    };
    let data = generate(&cfg)?;
    create_dir(&args.out)?;
    write_csv(&data.train, args.out.join("train.csv"), "y")?;
    write_csv(&data.test, args.out.join("test.csv"), "y")?;
    write_json(
        args.out.join("simulation.json"),
        &SimSidecar::of(&cfg, &data),
    )?;
    Ok(())
}

fn screen(args: ScreenArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let data = load_csv(&args.data.data, &args.data.response)?;
    let result = screen_dataset(&data, &cfg)?;
    write_json(&args.out, &result)?;
    Ok(())
}

fn response_name(data: &Path, response: &ResponseColumn) -> Result<String> {
    match response {
        ResponseColumn::Name(n) => Ok(n.clone()),
        ResponseColumn::Index(i) => {
            let mut reader = csv::Reader::from_path(data)
                .with_context(|| format!("reading {}", data.display()))?;
            let header = reader.headers()?;
            Ok(header.get(*i).unwrap_or("y").trim().to_string())
        }
    }
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let data = load_csv(&args.data.data, &args.data.response)?;
    let names = data
        .feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| default_feature_names(data.p()));
    let model = fit(&data, &cfg)?;
    create_dir(&args.out)?;
    write_json(args.out.join("weights.json"), &model.weights.as_slice())?;
    write_json(args.out.join("stacking.json"), &StackingReport::of(&model))?;
    let bundle = ModelBundle::new(
        model,
        names,
        response_name(&args.data.data, &args.data.response)?,
    );
    bundle.save(args.out.join("bundle.json"))?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let bundle = ModelBundle::load(&args.bundle)?;
    let drop = ResponseColumn::Name(bundle.response_name.clone());
    let x = load_features(&args.data, &bundle.feature_names, Some(&drop))?;
    let pred = bundle.model.predict(&x)?;
    write_predictions(&args.out, &pred.point, &pred.lower, &pred.upper)?;
    Ok(())
}

fn bench(args: BenchArgs, threads: Option<usize>) -> Result<()> {
    let mut exp = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(r) = args.replicates {
        exp.replicates = r;
    }
    if let Some(s) = args.root_seed {
        exp.root_seed = s;
    }
    exp.validate()?;
    let threads = resolve_threads(threads.or(exp.threads))?;
    let summary = with_threads(threads, || run_experiment(&exp, &args.out))??;
    for row in summary {
        println!(
            "m={:<4} {:<14} mean={:.4} sd={:.4} se={:.4}",
            row.m, row.metric, row.summary.mean, row.summary.sd, row.summary.se
        );
    }
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let s = score_predictions(&args.predictions, &args.truth, &args.response)?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Command::Bench(args) = cli.command {
        return bench(args, cli.threads);
    }
    let threads = resolve_threads(cli.threads)?;
    with_threads(threads, move || match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Screen(a) => screen(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Score(a) => score(a),
        Command::Bench(_) => unreachable!(),
    })?
}
