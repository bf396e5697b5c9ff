//! Command-line entry point for the SCSA blood-pressure pipeline.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use scsa_bp::config::{RunConfig, Stage};
use scsa_bp::noise::{self, StressInput};
use scsa_bp::pipeline::{self, Context, RunManifest, StageStatus};
use scsa_bp::regression::TrainedModel;
use scsa_bp::synth;

#[derive(Parser, Debug)]
#[command(name = "scsa-bp", version, about = "Cuff-less BP estimation from PPG via SCSA")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip stages whose recorded outputs are all present.
    #[arg(long, global = true)]
    resume: bool,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Log filter when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the configured stages in order.
    Run {
        /// Comma list of stages; defaults to the configured ones.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
    },
    /// Screens records and cuts the analysis windows.
    Ingest,
    /// Filters PPG and ABP.
    Preprocess,
    /// Segments pulses and marks landmarks.
    Fiducials,
    /// h search and decomposition of every beat.
    Scsa,
    /// Writes the feature table.
    Features,
    /// Nested CV, final models and metrics.
    Train,
    /// Recomputes metrics.json from stored predictions.
    Evaluate,
    /// Noise stress sweep.
    NoiseTest(NoiseArgs),
    /// Writes the synthetic dataset.
    Synth {
        /// Destination directory; defaults to `<out_dir>/data`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Config supplying the filter, SCSA and category settings.
    #[arg(long)]
    features_config: Option<PathBuf>,
    /// Trained model; defaults to the first target's model of the run.
    #[arg(long)]
    model: Option<PathBuf>,
    /// `lo:hi:step` or a comma list, in dB.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Report directory; defaults to `<out_dir>/noise`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_stage(s: &str) -> Result<Stage> {
    let s = s.trim().replace('-', "_");
    Stage::ALL
        .into_iter()
        .find(|st| st.as_str() == s)
        .with_context(|| format!("unknown stage '{s}'"))
}

fn report(m: &RunManifest) {
    for s in &m.stages {
        let status = match s.status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "skipped",
            StageStatus::Failed => "FAILED",
            StageStatus::NotRun => "not run",
        };
        println!("{:<11} {status}", s.stage.as_str());
        for (k, v) in &s.failures {
            println!("  skipped {k}: {v}");
        }
        if let Some(e) = &s.error {
            println!("  {e}");
        }
    }
}

fn run_stages(mut cfg: RunConfig, stages: Vec<Stage>, resume: bool) -> Result<bool> {
    if !stages.is_empty() {
        cfg.stages = stages;
    }
    let m = pipeline::run_pipeline(&cfg, resume)?;
    report(&m);
    Ok(!m.failed())
}

fn evaluate(cfg: &RunConfig) -> Result<bool> {
    let ctx = Context::new(cfg);
    let outputs = pipeline::run_evaluate(&ctx)?;
    let path = cfg.out_dir.join(&outputs[0]);
    let summary: pipeline::MetricsSummary = serde_json::from_str(&fs::read_to_string(&path)?)?;
    for t in &summary.targets {
        println!(
            "{}: n {} MAE {:.3} ME {:.3} SD {:.3} r {:.3} BHS {:?} AAMI {}",
            t.target.as_str(),
            t.n_rows,
            t.metrics.mae,
            t.metrics.me,
            t.metrics.sd,
            t.metrics.r,
            t.standards.bhs_grade,
            if t.standards.aami_pass { "pass" } else { "fail" }
        );
    }
    println!("wrote {}", path.display());
    Ok(true)
}

fn noise_test(cfg: &RunConfig, a: &NoiseArgs) -> Result<bool> {
    let mut cfg = cfg.clone();
    if let Some(p) = &a.features_config {
        let f = RunConfig::load(p)?;
        cfg.filter = f.filter;
        cfg.scsa = f.scsa;
        cfg.categories = f.categories;
    }
    if let Some(s) = &a.snr {
        cfg.noise.snr_levels_db = noise::parse_snr_levels(s)?;
    }
    if let Some(t) = a.trials {
        cfg.noise.trials_per_level = t;
    }
    cfg.validate()?;
    let ctx = Context::new(&cfg);
    let model_path = a
        .model
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(Stage::TrainEval.dir()).join(pipeline::model_file(cfg.targets[0])));
    let model: TrainedModel = serde_json::from_str(
        &fs::read_to_string(&model_path).with_context(|| format!("reading {}", model_path.display()))?,
    )
    .with_context(|| format!("parsing {}", model_path.display()))?;
    let data: Vec<StressInput> = pipeline::load_windows(&ctx)?
        .into_iter()
        .map(|r| StressInput {
            subject_id: r.subject_id,
            fs: r.fs,
            ppg: r.ppg,
            abp: r.abp,
        })
        .collect();
    if data.is_empty() {
        bail!("no ingested windows under {}", cfg.out_dir.display());
    }
    let out = a.out.clone().unwrap_or_else(|| cfg.out_dir.join(Stage::NoiseTest.dir()));
    let rep = noise::stress_sweep(&data, &model, &cfg.analysis(), &cfg.noise_spec())?;
    noise::write_report(&rep, &out)?;
    for l in &rep.levels {
        let mae = l.mae.map_or("-".to_string(), |e| format!("{:.3}", e.mean));
        println!("{:>6} dB  success {:.2}  MAE {mae}", l.snr_db, l.success_rate);
    }
    println!("wrote {}", out.display());
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    let resume = cli.global.resume;
    let one = |s: Stage| run_stages(cfg.clone(), vec![s], resume);
    match &cli.command {
        Command::Run { stages } => {
            let stages = stages.iter().map(|s| parse_stage(s)).collect::<Result<Vec<_>>>()?;
            run_stages(cfg.clone(), stages, resume)
        }
        Command::Ingest => one(Stage::Ingest),
        Command::Preprocess => one(Stage::Preprocess),
        Command::Fiducials => one(Stage::Fiducials),
        Command::Scsa => one(Stage::Scsa),
        Command::Features => one(Stage::Features),
        Command::Train => one(Stage::TrainEval),
        Command::Evaluate => evaluate(&cfg),
        Command::NoiseTest(a) => noise_test(&cfg, a),
        Command::Synth { out } => {
            let dir = out.clone().unwrap_or_else(|| cfg.out_dir.join("data"));
            let files = synth::write_dataset(&cfg.synth, cfg.seed, &dir)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.global.log_level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
