//! File-based staged run.
//!
//! ```text
//! <out>/data/                 generated records (only without input_dir)
//! <out>/ingest/manifest.jsonl, windows/<id>.csv (+ sidecar)
//! <out>/preprocess/<id>.csv   ppg_clean,abp_smooth
//! <out>/fiducials/<id>.json   beats after smoothing
//! <out>/scsa/<id>.json        per-beat SCSA results
//! <out>/features/features.csv
//! <out>/train/model_<t>.json, cv_<t>.json, predictions.csv, metrics.json
//! <out>/noise/stress.csv, stress.svg, fiducials.csv, stress.json
//! <out>/run_manifest.json
//! ```
//!
//! Every stage reads only files of earlier stages and ends by writing
//! `<stage dir>/stage.json`, the list of its outputs. With `resume`, a stage
//! is skipped when that list exists and every file on it is present.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, WindowBeats};
use crate::config::{ConfigError, RunConfig, Stage};
use crate::features::{self, FeatureRow, ScsaBeat, Target};
use crate::ingest::{self, DatasetManifest, SignalRecord};
use crate::noise::{self, StressInput};
use crate::preprocess;
use crate::regression::cv::{splitmix64, FoldChoice};
use crate::regression::{self, MetricsFile, Prediction, TrainedModel};
use crate::synth;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed at {path}: {message}")]
    StageFailed {
        stage: &'static str,
        path: PathBuf,
        message: String,
    },
}

pub const STAGE_FILE: &str = "stage.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Contents of `stage.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Paths relative to the output root.
    pub outputs: Vec<String>,
    /// Subjects (or targets) that were skipped, with the reason.
    pub failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: Stage,
    pub status: StageStatus,
    pub outputs: Vec<String>,
    pub failures: BTreeMap<String, String>,
    pub error: Option<String>,
}

/// Contents of `run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub git_hash: String,
    pub resume: bool,
    pub config: RunConfig,
    pub stages: Vec<StageEntry>,
}

impl RunManifest {
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Failed)
    }

    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.status)
    }
}

/// Paths and settings shared by the stages of one run.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub root: PathBuf,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Context {
            cfg,
            root: cfg.out_dir.clone(),
        }
    }

    fn path(&self, stage: Stage, name: &str) -> PathBuf {
        self.root.join(stage.dir()).join(name)
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

fn fail(stage: Stage, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::StageFailed {
        stage: stage.as_str(),
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| fail(stage, dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| fail(stage, path, e))?;
    fs::write(path, text + "\n").map_err(|e| fail(stage, path, e))
}

fn read_json<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| fail(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| fail(stage, path, e))
}

fn create_dir(stage: Stage, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| fail(stage, dir, e))
}

/// Window position seed of one subject: depends on the run seed and the id
/// only, so adding records does not move existing windows.
pub fn window_seed(seed: u64, subject_id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in subject_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn record_files(dir: &Path, stage: Stage) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| fail(stage, dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("csv") | Some("mat")
            )
        })
        .collect();
    out.sort();
    Ok(out)
}

fn short(e: &impl std::fmt::Display) -> String {
    e.to_string()
}

/// Screens the records, cuts the analysis windows and applies the BP
/// exclusion rules.
pub fn run_ingest(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::Ingest;
    let cfg = ctx.cfg;
    let mut outputs = Vec::new();
    let input = match &cfg.input_dir {
        Some(d) => d.clone(),
        None => {
            let d = ctx.root.join("data");
            let files = synth::write_dataset(&cfg.synth, cfg.seed, &d).map_err(|e| fail(st, &d, e))?;
            for f in files {
                outputs.push(ctx.rel(&f));
                outputs.push(ctx.rel(&ingest::Sidecar::path_for(&f)));
            }
            d
        }
    };
    let windows_dir = ctx.path(st, "windows");
    create_dir(st, &windows_dir)?;
    let mut manifest = DatasetManifest::default();
    let mut failures = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for path in record_files(&input, st)? {
        let (mut entry, rec) = ingest::screen_record(&path, cfg.min_record_s);
        let Some(rec) = rec else {
            failures.insert(entry.subject_id.clone(), entry.rejection_reason.clone().unwrap_or_default());
            manifest.entries.push(entry);
            continue;
        };
        let verdict = (|| {
            if !seen.insert(rec.subject_id.clone()) {
                return Err("duplicate subject id".to_string());
            }
            let seed = window_seed(cfg.seed, &rec.subject_id);
            let w = ingest::extract_window_with(&rec, seed, cfg.window_s, cfg.margin_s).map_err(|e| short(&e))?;
            entry.window_start = Some(w.start_index);
            let bp = features::bp_targets(&w.abp_seg, &cfg.categories).map_err(|e| format!("window BP: {e}"))?;
            entry.sbp = Some(bp.sbp);
            entry.dbp = Some(bp.dbp);
            let v = ingest::apply_bp_exclusion(bp.sbp, bp.dbp);
            if !v.accepted {
                return Err(v.reason.unwrap_or_default());
            }
            Ok(w)
        })();
        match verdict {
            Ok(w) => {
                let win = SignalRecord::new(rec.subject_id.clone(), rec.fs, w.ppg_seg, w.abp_seg, rec.source)
                    .map_err(|e| fail(st, &path, e))?;
                let out = windows_dir.join(format!("{}.csv", rec.subject_id));
                ingest::write_record_with_sidecar(&win, &out).map_err(|e| fail(st, &out, e))?;
                outputs.push(ctx.rel(&out));
                outputs.push(ctx.rel(&ingest::Sidecar::path_for(&out)));
            }
            Err(reason) => {
                entry.accepted = false;
                entry.rejection_reason = Some(reason.clone());
                failures.insert(entry.subject_id.clone(), reason);
            }
        }
        manifest.entries.push(entry);
    }
    let mpath = ctx.path(st, "manifest.jsonl");
    manifest.write_jsonl(&mpath).map_err(|e| fail(st, &mpath, e))?;
    outputs.push(ctx.rel(&mpath));
    if manifest.accepted().next().is_none() {
        return Err(fail(st, &input, "no record was accepted"));
    }
    Ok(StageRecord {
        stage: st,
        outputs,
        failures,
    })
}

fn accepted_ids(ctx: &Context, st: Stage) -> Result<Vec<String>, PipelineError> {
    let p = ctx.path(Stage::Ingest, "manifest.jsonl");
    let m = DatasetManifest::read_jsonl(&p).map_err(|e| fail(st, &p, e))?;
    Ok(m.accepted().map(|e| e.subject_id.clone()).collect())
}

fn load_window(ctx: &Context, st: Stage, id: &str) -> Result<SignalRecord, PipelineError> {
    let p = ctx.path(Stage::Ingest, "windows").join(format!("{id}.csv"));
    ingest::load_record_auto(&p).map_err(|e| fail(st, &p, e))
}

/// Window records of every accepted subject, in manifest order.
pub fn load_windows(ctx: &Context) -> Result<Vec<SignalRecord>, PipelineError> {
    let st = Stage::Ingest;
    accepted_ids(ctx, st)?
        .iter()
        .map(|id| load_window(ctx, st, id))
        .collect()
}

fn write_preprocessed(path: &Path, ppg: &[f64], abp: &[f64]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "ppg_clean,abp_smooth")?;
    for (p, a) in ppg.iter().zip(abp) {
        writeln!(w, "{p:?},{a:?}")?;
    }
    w.flush()
}

fn read_preprocessed(path: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let f = fs::File::open(path).map_err(|e| e.to_string())?;
    let mut ppg = Vec::new();
    let mut abp = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate().skip(1) {
        let line = line.map_err(|e| e.to_string())?;
        let (p, a) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected two columns", i + 1))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1));
        ppg.push(num(p)?);
        abp.push(num(a)?);
    }
    Ok((ppg, abp))
}

/// Subjects of `st` whose input from `prev` exists.
fn available(ctx: &Context, st: Stage, prev: Stage, ext: &str) -> Result<Vec<String>, PipelineError> {
    Ok(accepted_ids(ctx, st)?
        .into_iter()
        .filter(|id| ctx.path(prev, &format!("{id}.{ext}")).exists())
        .collect())
}

fn none_left(st: Stage, dir: &Path, outputs: &[String]) -> Result<(), PipelineError> {
    if outputs.is_empty() {
        Err(fail(st, dir, "no subject produced output"))
    } else {
        Ok(())
    }
}

pub fn run_preprocess(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::Preprocess;
    let dir = ctx.root.join(st.dir());
    create_dir(st, &dir)?;
    let mut outputs = Vec::new();
    let mut failures = BTreeMap::new();
    let mut applied = BTreeMap::new();
    for id in accepted_ids(ctx, st)? {
        let rec = load_window(ctx, st, &id)?;
        match preprocess::preprocess(&rec.ppg, &rec.abp, rec.fs, &ctx.cfg.filter) {
            Ok(pre) => {
                let out = dir.join(format!("{id}.csv"));
                write_preprocessed(&out, &pre.ppg_clean, &pre.abp_smooth).map_err(|e| fail(st, &out, e))?;
                outputs.push(ctx.rel(&out));
                applied.insert(id, pre.applied);
            }
            Err(e) => {
                failures.insert(id, short(&e));
            }
        }
    }
    none_left(st, &dir, &outputs)?;
    let fp = dir.join("filters.json");
    write_json(st, &fp, &applied)?;
    outputs.push(ctx.rel(&fp));
    Ok(StageRecord {
        stage: st,
        outputs,
        failures,
    })
}

pub fn run_fiducials(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::Fiducials;
    let dir = ctx.root.join(st.dir());
    create_dir(st, &dir)?;
    let mut outputs = Vec::new();
    let mut failures = BTreeMap::new();
    for id in available(ctx, st, Stage::Preprocess, "csv")? {
        let rec = load_window(ctx, st, &id)?;
        let pp = ctx.path(Stage::Preprocess, &format!("{id}.csv"));
        let (clean, _) = read_preprocessed(&pp).map_err(|e| fail(st, &pp, e))?;
        match analysis::detect_beats(&id, &clean, &rec.ppg, rec.fs) {
            Ok(wb) => {
                let out = dir.join(format!("{id}.json"));
                write_json(st, &out, &wb)?;
                outputs.push(ctx.rel(&out));
            }
            Err(e) => {
                failures.insert(id, short(&e));
            }
        }
    }
    none_left(st, &dir, &outputs)?;
    Ok(StageRecord {
        stage: st,
        outputs,
        failures,
    })
}

/// Contents of `scsa/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsaFile {
    pub subject_id: String,
    pub beats: Vec<ScsaBeat>,
    pub failures: BTreeMap<String, usize>,
}

pub fn run_scsa(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::Scsa;
    let dir = ctx.root.join(st.dir());
    create_dir(st, &dir)?;
    let acfg = ctx.cfg.analysis();
    let mut outputs = Vec::new();
    let mut failures = BTreeMap::new();
    for id in available(ctx, st, Stage::Fiducials, "json")? {
        let wb: WindowBeats = read_json(st, &ctx.path(Stage::Fiducials, &format!("{id}.json")))?;
        let (beats, fails) = analysis::scsa_window(&wb, &acfg);
        log::info!("{id}: SCSA on {} of {} beats", beats.len(), wb.beats.len());
        if beats.is_empty() {
            failures.insert(id, "no beat decomposed".into());
            continue;
        }
        let out = dir.join(format!("{id}.json"));
        write_json(
            st,
            &out,
            &ScsaFile {
                subject_id: id.clone(),
                beats,
                failures: fails,
            },
        )?;
        outputs.push(ctx.rel(&out));
    }
    none_left(st, &dir, &outputs)?;
    Ok(StageRecord {
        stage: st,
        outputs,
        failures,
    })
}

pub const FEATURES_CSV: &str = "features.csv";

pub fn run_features(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::Features;
    let dir = ctx.root.join(st.dir());
    create_dir(st, &dir)?;
    let acfg = ctx.cfg.analysis();
    let mut rows: Vec<FeatureRow> = Vec::new();
    let mut failures = BTreeMap::new();
    let mut summary: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for id in available(ctx, st, Stage::Scsa, "json")? {
        let wb: WindowBeats = read_json(st, &ctx.path(Stage::Fiducials, &format!("{id}.json")))?;
        let sf: ScsaFile = read_json(st, &ctx.path(Stage::Scsa, &format!("{id}.json")))?;
        let pp = ctx.path(Stage::Preprocess, &format!("{id}.csv"));
        let (_, abp) = read_preprocessed(&pp).map_err(|e| fail(st, &pp, e))?;
        match analysis::rows_from_scsa(&wb, &sf.beats, &abp, &acfg) {
            Ok((r, fails)) => {
                let mut counts = fails;
                counts.insert("rows".into(), r.len());
                summary.insert(id, counts);
                rows.extend(r);
            }
            Err(e) => {
                failures.insert(id, short(&e));
            }
        }
    }
    let out = dir.join(FEATURES_CSV);
    if rows.is_empty() {
        return Err(fail(st, &out, "no feature rows"));
    }
    let f = fs::File::create(&out).map_err(|e| fail(st, &out, e))?;
    features::write_feature_csv(BufWriter::new(f), &rows).map_err(|e| fail(st, &out, e))?;
    let sp = dir.join("summary.json");
    write_json(st, &sp, &summary)?;
    Ok(StageRecord {
        stage: st,
        outputs: vec![ctx.rel(&out), ctx.rel(&sp)],
        failures,
    })
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>, PipelineError> {
    let f = fs::File::open(path).map_err(|e| fail(Stage::TrainEval, path, e))?;
    features::read_feature_csv(BufReader::new(f)).map_err(|e| fail(Stage::TrainEval, path, e))
}

pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const METRICS_JSON: &str = "metrics.json";

pub fn model_file(target: Target) -> String {
    format!("model_{}.json", target.as_str())
}

fn cv_file(target: Target) -> String {
    format!("cv_{}.json", target.as_str())
}

/// Nested CV and final model per target: models, fold choices and
/// out-of-fold predictions.
pub fn run_train(ctx: &Context) -> Result<Vec<String>, PipelineError> {
    let st = Stage::TrainEval;
    let dir = ctx.root.join(st.dir());
    create_dir(st, &dir)?;
    let rows = read_features(&ctx.path(Stage::Features, FEATURES_CSV))?;
    let cv = ctx.cfg.cv_config();
    let mut outputs = Vec::new();
    let mut preds: Vec<Prediction> = Vec::new();
    for &target in &ctx.cfg.targets {
        log::info!("training {} on {} rows", target.as_str(), rows.len());
        let out = regression::train(&rows, target, &cv).map_err(|e| fail(st, &dir, format!("{}: {e}", target.as_str())))?;
        let mp = dir.join(model_file(target));
        write_json(st, &mp, &out.model)?;
        let cp = dir.join(cv_file(target));
        write_json(st, &cp, &out.outcome.choices)?;
        outputs.push(ctx.rel(&mp));
        outputs.push(ctx.rel(&cp));
        preds.extend(out.predictions);
    }
    let pp = dir.join(PREDICTIONS_CSV);
    write_predictions(&pp, &preds).map_err(|e| fail(st, &pp, e))?;
    outputs.push(ctx.rel(&pp));
    Ok(outputs)
}

fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["target", "subject_id", "pulse_start", "fold", "category", "y_true", "y_pred"])?;
    for p in preds {
        w.write_record([
            p.target.as_str().to_string(),
            p.subject_id.clone(),
            p.pulse_start.to_string(),
            p.fold.to_string(),
            p.category.as_str().to_string(),
            format!("{:?}", p.y_true),
            format!("{:?}", p.y_pred),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, PipelineError> {
    let st = Stage::TrainEval;
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(st, path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| fail(st, path, e))?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| fail(st, path, format!("bad {what} '{}'", rec.iter().collect::<Vec<_>>().join(",")));
        out.push(Prediction {
            target: get(0).parse().map_err(|_| bad("target"))?,
            subject_id: get(1).to_string(),
            pulse_start: get(2).parse().map_err(|_| bad("pulse_start"))?,
            fold: get(3).parse().map_err(|_| bad("fold"))?,
            category: get(4).parse().map_err(|_| bad("category"))?,
            y_true: get(5).parse().map_err(|_| bad("y_true"))?,
            y_pred: get(6).parse().map_err(|_| bad("y_pred"))?,
        });
    }
    Ok(out)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub seed: u64,
    pub targets: Vec<MetricsFile>,
}

/// Metrics and standards grading from the stored predictions.
pub fn run_evaluate(ctx: &Context) -> Result<Vec<String>, PipelineError> {
    let st = Stage::TrainEval;
    let dir = ctx.root.join(st.dir());
    let preds = read_predictions(&dir.join(PREDICTIONS_CSV))?;
    let cv = ctx.cfg.cv_config();
    let mut targets = Vec::new();
    for &target in &ctx.cfg.targets {
        let choices: Vec<FoldChoice> = read_json(st, &dir.join(cv_file(target)))?;
        let m = regression::evaluate(target, &cv, &preds, choices)
            .map_err(|e| fail(st, &dir, format!("{}: {e}", target.as_str())))?;
        log::info!(
            "{}: MAE {:.3} r {:.3} BHS {:?} AAMI {}",
            target.as_str(),
            m.metrics.mae,
            m.metrics.r,
            m.standards.bhs_grade,
            if m.standards.aami_pass { "pass" } else { "fail" }
        );
        targets.push(m);
    }
    let mp = dir.join(METRICS_JSON);
    write_json(st, &mp, &MetricsSummary { seed: cv.seed, targets })?;
    Ok(vec![ctx.rel(&mp)])
}

pub fn run_train_eval(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let mut outputs = run_train(ctx)?;
    outputs.extend(run_evaluate(ctx)?);
    Ok(StageRecord {
        stage: Stage::TrainEval,
        outputs,
        failures: BTreeMap::new(),
    })
}

/// Stress sweep over the ingest windows with the first target's model.
pub fn run_noise_test(ctx: &Context) -> Result<StageRecord, PipelineError> {
    let st = Stage::NoiseTest;
    let target = ctx.cfg.targets[0];
    let model: TrainedModel = read_json(st, &ctx.path(Stage::TrainEval, &model_file(target)))?;
    let data: Vec<StressInput> = load_windows(ctx)?
        .into_iter()
        .map(|r| StressInput {
            subject_id: r.subject_id,
            fs: r.fs,
            ppg: r.ppg,
            abp: r.abp,
        })
        .collect();
    let dir = ctx.root.join(st.dir());
    let report = noise::stress_sweep(&data, &model, &ctx.cfg.analysis(), &ctx.cfg.noise_spec())
        .map_err(|e| fail(st, &dir, e))?;
    noise::write_report(&report, &dir).map_err(|e| fail(st, &dir, e))?;
    let outputs = ["stress.csv", "stress.svg", "fiducials.csv", "stress.json"]
        .iter()
        .map(|n| ctx.rel(&dir.join(n)))
        .collect();
    Ok(StageRecord {
        stage: st,
        outputs,
        failures: BTreeMap::new(),
    })
}

fn execute(ctx: &Context, stage: Stage) -> Result<StageRecord, PipelineError> {
    match stage {
        Stage::Ingest => run_ingest(ctx),
        Stage::Preprocess => run_preprocess(ctx),
        Stage::Fiducials => run_fiducials(ctx),
        Stage::Scsa => run_scsa(ctx),
        Stage::Features => run_features(ctx),
        Stage::TrainEval => run_train_eval(ctx),
        Stage::NoiseTest => run_noise_test(ctx),
    }
}

/// The stored record of a stage, if every output it lists is present.
pub fn completed(root: &Path, stage: Stage) -> Option<StageRecord> {
    let p = root.join(stage.dir()).join(STAGE_FILE);
    let rec: StageRecord = serde_json::from_str(&fs::read_to_string(p).ok()?).ok()?;
    rec.outputs.iter().all(|o| root.join(o).exists()).then_some(rec)
}

/// Runs one stage and writes its `stage.json`.
pub fn run_stage(ctx: &Context, stage: Stage, resume: bool) -> Result<StageEntry, PipelineError> {
    if resume {
        if let Some(rec) = completed(&ctx.root, stage) {
            log::info!("{}: outputs present, skipped", stage.as_str());
            return Ok(StageEntry {
                stage,
                status: StageStatus::Skipped,
                outputs: rec.outputs,
                failures: rec.failures,
                error: None,
            });
        }
    }
    log::info!("{}: running", stage.as_str());
    let rec = execute(ctx, stage)?;
    for (k, v) in &rec.failures {
        log::warn!("{}: {k}: {v}", stage.as_str());
    }
    write_json(stage, &ctx.root.join(stage.dir()).join(STAGE_FILE), &rec)?;
    Ok(StageEntry {
        stage,
        status: StageStatus::Ran,
        outputs: rec.outputs,
        failures: rec.failures,
        error: None,
    })
}

/// Runs the configured stages in order and writes `run_manifest.json`. A
/// failed stage stops the run; later stages are listed as not run.
pub fn run_pipeline(cfg: &RunConfig, resume: bool) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let ctx = Context::new(cfg);
    fs::create_dir_all(&ctx.root).map_err(|e| fail(Stage::Ingest, &ctx.root, e))?;
    let mut stages = Vec::new();
    let mut stopped = false;
    for stage in cfg.ordered_stages() {
        if stopped {
            stages.push(StageEntry {
                stage,
                status: StageStatus::NotRun,
                outputs: Vec::new(),
                failures: BTreeMap::new(),
                error: None,
            });
            continue;
        }
        match run_stage(&ctx, stage, resume) {
            Ok(e) => stages.push(e),
            Err(e) => {
                log::error!("{e}");
                stopped = true;
                stages.push(StageEntry {
                    stage,
                    status: StageStatus::Failed,
                    outputs: Vec::new(),
                    failures: BTreeMap::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        git_hash: option_env!("SCSA_BP_GIT_HASH").unwrap_or("unknown").to_string(),
        resume,
        config: cfg.clone(),
        stages,
    };
    write_json(Stage::Ingest, &ctx.root.join(RUN_MANIFEST), &manifest)?;
    Ok(manifest)
}
