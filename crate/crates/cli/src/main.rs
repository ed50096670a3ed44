use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bayes_vq::commands;
use bayes_vq::{MetricConfig, Objective, PipelineConfig, ScenarioConfig, ScoringMode, SearchSpace};
use clap::{Args, Parser, Subcommand};

/// Locate the last occurrence of a query object by fusing two proposal scores.
#[derive(Parser)]
#[command(name = "bayes-vq", version)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario (clips.jsonl, annotations.jsonl).
    Generate(GenerateArgs),
    /// Localize every clip (predictions.jsonl, signals.jsonl).
    Localize(LocalizeArgs),
    /// Score predictions against annotations (report.json, report.txt).
    Evaluate(EvaluateArgs),
    /// Random search over b and w (trials.tsv, best_config.toml).
    Tune(TuneArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario TOML file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_clips: Option<usize>,
    #[arg(long)]
    frames_per_clip: Option<usize>,
    #[arg(long)]
    proposals_per_frame: Option<usize>,
    #[arg(long)]
    gt_visibility: Option<f64>,
    #[arg(long)]
    fp_rate_prior: Option<f64>,
    #[arg(long)]
    fp_rate_measurement: Option<f64>,
    #[arg(long)]
    fp_correlation: Option<f64>,
    #[arg(long)]
    score_noise_sd: Option<f64>,
    #[arg(long)]
    box_jitter_sd: Option<f64>,
}

/// Pipeline config file plus per-key overrides.
#[derive(Args)]
struct PipelineArgs {
    /// Pipeline TOML file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `fused` or `measurement_only`.
    #[arg(long)]
    mode: Option<ScoringMode>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    gate_threshold: Option<f64>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long)]
    smoothing_window: Option<usize>,
    #[arg(long)]
    min_peak_height: Option<f64>,
    #[arg(long)]
    iou_min: Option<f64>,
    #[arg(long)]
    track_score_min: Option<f64>,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Clips JSONL file.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions JSONL file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Row label in the summary table.
    #[arg(long, default_value = "fused")]
    method: String,
}

#[derive(Args)]
struct TuneArgs {
    /// Clips JSONL file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    b_min: f64,
    #[arg(long, default_value_t = 20.0)]
    b_max: f64,
    #[arg(long, default_value_t = 0.5)]
    w_min: f64,
    #[arg(long, default_value_t = 20.0)]
    w_max: f64,
    /// `tAP`, `stAP`, `success` or `recovery`.
    #[arg(long, default_value_t = Objective::TemporalAp)]
    objective: Objective,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

impl GenerateArgs {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => commands::load_scenario_config(path)?,
            None => ScenarioConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.n_clips, self.n_clips);
        set(&mut cfg.frames_per_clip, self.frames_per_clip);
        set(&mut cfg.proposals_per_frame, self.proposals_per_frame);
        set(&mut cfg.gt_visibility, self.gt_visibility);
        set(&mut cfg.fp_rate_prior, self.fp_rate_prior);
        set(&mut cfg.fp_rate_measurement, self.fp_rate_measurement);
        set(&mut cfg.fp_correlation, self.fp_correlation);
        set(&mut cfg.score_noise_sd, self.score_noise_sd);
        set(&mut cfg.box_jitter_sd, self.box_jitter_sd);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        set(&mut cfg.mode, self.mode);
        set(&mut cfg.b, self.b);
        set(&mut cfg.w, self.w);
        set(&mut cfg.gate_threshold, self.gate_threshold);
        set(&mut cfg.sample_rate, self.sample_rate);
        set(&mut cfg.smoothing_window, self.smoothing_window);
        set(&mut cfg.min_peak_height, self.min_peak_height);
        set(&mut cfg.iou_min, self.iou_min);
        set(&mut cfg.track_score_min, self.track_score_min);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.scenario()?;
            let (clips, anns) = commands::generate(&cfg, &args.output)
                .with_context(|| format!("generating into {}", show(&args.output)))?;
            log::info!("wrote {} and {}", show(&clips), show(&anns));
        }
        Command::Localize(args) => {
            let cfg = args.pipeline.resolve()?;
            let summary = commands::localize(&args.input, &cfg, args.workers, &args.output)
                .with_context(|| format!("localizing {}", show(&args.input)))?;
            log::info!(
                "localized {} queries, {} without a track",
                summary.clips,
                summary.misses
            );
        }
        Command::Evaluate(args) => {
            let report = commands::evaluate(
                &args.input,
                &args.annotations,
                &MetricConfig::default(),
                &args.method,
                &args.output,
            )
            .with_context(|| format!("evaluating {}", show(&args.input)))?;
            print!("{}", report.table(&args.method));
        }
        Command::Tune(args) => {
            let base = args.pipeline.resolve()?;
            let space = SearchSpace {
                b_range: (args.b_min, args.b_max),
                w_range: (args.w_min, args.w_max),
                n_trials: args.trials,
                seed: args.seed,
                objective: args.objective,
            };
            let outcome = commands::tune(
                &args.input,
                &args.annotations,
                &space,
                &base,
                &MetricConfig::default(),
                args.workers,
                &args.output,
            )
            .with_context(|| format!("tuning on {}", show(&args.input)))?;
            println!(
                "best b = {}, w = {}, {} = {}",
                outcome.best_b, outcome.best_w, space.objective, outcome.best_objective
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
