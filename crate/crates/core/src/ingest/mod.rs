//! Record loading, windowing and BP exclusion.
//!
//! Records are synchronised PPG/ABP pairs. CSV (`t,ppg,abp`) is the canonical
//! interchange format; uncompressed MAT-v5 files holding a 3xN matrix
//! (ppg, abp, ecg rows) are read as well, with the ECG row dropped.

pub mod mat;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("ppg has {ppg} samples but abp has {abp}")]
    LengthMismatch { ppg: usize, abp: usize },
    #[error("record lasts {duration_s:.1} s, need at least {required_s:.1} s")]
    TooShort { duration_s: f64, required_s: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Uci,
    Mimic3,
    Queensland,
    Wearable,
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::Uci => "UCI",
            Source::Mimic3 => "MIMIC3",
            Source::Queensland => "QUEENSLAND",
            Source::Wearable => "WEARABLE",
            Source::Synthetic => "SYNTHETIC",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    MatV5,
}

impl Format {
    /// Guesses the format from the file extension (`.mat` or anything else as CSV).
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mat") => Format::MatV5,
            _ => Format::Csv,
        }
    }
}

/// Metadata stored next to a record as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fs: f64,
    pub subject_id: String,
    pub source: Source,
}

impl Sidecar {
    pub fn path_for(record: &Path) -> PathBuf {
        record.with_extension("json")
    }

    pub fn read(path: &Path) -> Result<Sidecar, IngestError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| IngestError::MalformedFile(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string(self).expect("sidecar serialises");
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub subject_id: String,
    pub fs: f64,
    pub ppg: Vec<f64>,
    pub abp: Vec<f64>,
    pub source: Source,
    /// Rows dropped at load time because a value was missing or non-finite.
    pub rejected_rows: usize,
}

impl SignalRecord {
    pub fn new(
        subject_id: impl Into<String>,
        fs: f64,
        ppg: Vec<f64>,
        abp: Vec<f64>,
        source: Source,
    ) -> Result<SignalRecord, IngestError> {
        if ppg.len() != abp.len() {
            return Err(IngestError::LengthMismatch {
                ppg: ppg.len(),
                abp: abp.len(),
            });
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(IngestError::MalformedFile(format!("invalid fs {fs}")));
        }
        Ok(SignalRecord {
            subject_id: subject_id.into(),
            fs,
            ppg,
            abp,
            source,
            rejected_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.ppg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ppg.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("record")
        .to_string()
}

/// Loads a record. The sidecar, when given, supplies fs, subject id and
/// source; otherwise the file stem is the subject id and fs is inferred from
/// the time column (CSV only).
pub fn load_record(
    path: &Path,
    format: Format,
    sidecar: Option<&Sidecar>,
) -> Result<SignalRecord, IngestError> {
    match format {
        Format::Csv => load_csv(path, sidecar),
        Format::MatV5 => load_mat(path, sidecar),
    }
}

/// Loads a record and looks for a `<stem>.json` sidecar next to it.
pub fn load_record_auto(path: &Path) -> Result<SignalRecord, IngestError> {
    let sc_path = Sidecar::path_for(path);
    let sidecar = if sc_path.exists() && sc_path != path {
        Some(Sidecar::read(&sc_path)?)
    } else {
        None
    };
    load_record(path, Format::from_path(path), sidecar.as_ref())
}

/// Snaps an inferred rate to the nearest integer when within 1e-6 relative.
fn snap_fs(fs: f64) -> f64 {
    let r = fs.round();
    if r > 0.0 && ((fs - r) / r).abs() < 1e-6 {
        r
    } else {
        fs
    }
}

fn load_csv(path: &Path, sidecar: Option<&Sidecar>) -> Result<SignalRecord, IngestError> {
    let bad = |m: String| IngestError::MalformedFile(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name:?}")))
    };
    let (ti, pi, ai) = (col("t")?, col("ppg")?, col("abp")?);

    let parse = |rec: &csv::StringRecord, i: usize| -> Option<f64> {
        rec.get(i)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
    };
    let mut times = Vec::new();
    let mut ppg = Vec::new();
    let mut abp = Vec::new();
    let mut rejected = 0;
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let t = parse(&row, ti);
        if let Some(t) = t {
            times.push(t);
        }
        match (t, parse(&row, pi), parse(&row, ai)) {
            (Some(_), Some(p), Some(a)) => {
                ppg.push(p);
                abp.push(a);
            }
            _ => rejected += 1,
        }
    }
    if rejected > 0 {
        log::warn!("{}: rejected {rejected} rows with missing or non-finite values", path.display());
    }

    let fs = match sidecar {
        Some(s) => s.fs,
        None => {
            if times.len() < 2 {
                return Err(bad("cannot infer fs from fewer than two time stamps".into()));
            }
            let diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let dt = crate::stats::median(&diffs);
            if !(dt > 0.0) {
                return Err(bad("time column is not increasing".into()));
            }
            snap_fs(1.0 / dt)
        }
    };
    let subject = sidecar.map(|s| s.subject_id.clone()).unwrap_or_else(|| stem(path));
    let source = sidecar.map(|s| s.source).unwrap_or(Source::Wearable);
    let mut rec = SignalRecord::new(subject, fs, ppg, abp, source)?;
    rec.rejected_rows = rejected;
    Ok(rec)
}

fn load_mat(path: &Path, sidecar: Option<&Sidecar>) -> Result<SignalRecord, IngestError> {
    let bytes = fs::read(path)?;
    let matrices = mat::read_matrices(&bytes)?;
    let m = matrices
        .into_iter()
        .find(|m| m.rows == 3 && m.cols > 0)
        .ok_or_else(|| {
            IngestError::MalformedFile(format!("{}: no 3xN numeric matrix", path.display()))
        })?;
    let sc = sidecar.ok_or_else(|| {
        IngestError::MalformedFile(format!(
            "{}: MAT files carry no sampling rate; a sidecar is required",
            path.display()
        ))
    })?;
    let mut ppg = Vec::with_capacity(m.cols);
    let mut abp = Vec::with_capacity(m.cols);
    let mut rejected = 0;
    for c in 0..m.cols {
        let (p, a) = (m.get(0, c), m.get(1, c));
        if p.is_finite() && a.is_finite() {
            ppg.push(p);
            abp.push(a);
        } else {
            rejected += 1;
        }
    }
    let mut rec = SignalRecord::new(sc.subject_id.clone(), sc.fs, ppg, abp, sc.source)?;
    rec.rejected_rows = rejected;
    Ok(rec)
}

/// Writes the canonical CSV: `t = i/fs` and shortest round-trip float text.
pub fn write_record(rec: &SignalRecord, path: &Path) -> Result<(), IngestError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,ppg,abp")?;
    for (i, (p, a)) in rec.ppg.iter().zip(&rec.abp).enumerate() {
        writeln!(w, "{},{},{}", i as f64 / rec.fs, p, a)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the record CSV plus its sidecar.
pub fn write_record_with_sidecar(rec: &SignalRecord, path: &Path) -> Result<(), IngestError> {
    write_record(rec, path)?;
    Sidecar {
        fs: rec.fs,
        subject_id: rec.subject_id.clone(),
        source: rec.source,
    }
    .write(&Sidecar::path_for(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentWindow {
    pub start_index: usize,
    pub length_s: f64,
    pub ppg_seg: Vec<f64>,
    pub abp_seg: Vec<f64>,
}

pub const WINDOW_S: f64 = 100.0;
pub const MARGIN_S: f64 = 30.0;

/// Cuts the standard 100 s window between 30 s margins.
pub fn extract_window(rec: &SignalRecord, seed: u64) -> Result<SegmentWindow, IngestError> {
    extract_window_with(rec, seed, WINDOW_S, MARGIN_S)
}

/// Picks a uniformly random window of `length_s` that stays clear of both
/// `margin_s` margins.
pub fn extract_window_with(
    rec: &SignalRecord,
    seed: u64,
    length_s: f64,
    margin_s: f64,
) -> Result<SegmentWindow, IngestError> {
    let required_s = length_s + 2.0 * margin_s;
    let margin = (margin_s * rec.fs).round() as usize;
    let width = (length_s * rec.fs).round() as usize;
    if rec.len() < 2 * margin + width {
        return Err(IngestError::TooShort {
            duration_s: rec.duration_s(),
            required_s,
        });
    }
    let lo = margin;
    let hi = rec.len() - margin - width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(lo..=hi);
    Ok(SegmentWindow {
        start_index: start,
        length_s,
        ppg_seg: rec.ppg[start..start + width].to_vec(),
        abp_seg: rec.abp[start..start + width].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionVerdict {
    pub accepted: bool,
    pub reason: Option<String>,
}

/// Physiological plausibility bounds; equality rejects.
pub fn apply_bp_exclusion(sbp: f64, dbp: f64) -> ExclusionVerdict {
    let mut reasons = Vec::new();
    if sbp >= 180.0 {
        reasons.push("SBP≥180");
    }
    if dbp >= 130.0 {
        reasons.push("DBP≥130");
    }
    if sbp <= 80.0 {
        reasons.push("SBP≤80");
    }
    if dbp <= 60.0 {
        reasons.push("DBP≤60");
    }
    if reasons.is_empty() {
        ExclusionVerdict {
            accepted: true,
            reason: None,
        }
    } else {
        ExclusionVerdict {
            accepted: false,
            reason: Some(reasons.join(", ")),
        }
    }
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub path: String,
    pub accepted: bool,
    pub rejection_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbp: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn accepted(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.accepted)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), IngestError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{}", serde_json::to_string(e).expect("entry serialises"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<DatasetManifest, IngestError> {
        let r = BufReader::new(fs::File::open(path)?);
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| {
                IngestError::MalformedFile(format!("{}: {e}", path.display()))
            })?);
        }
        Ok(DatasetManifest { entries })
    }
}

/// Minimum record duration for a file to enter the dataset at all.
pub const MIN_RECORD_S: f64 = 600.0;

/// First-stage screen applied when the manifest is built: the record must
/// load and last at least `min_duration_s`.
pub fn screen_record(path: &Path, min_duration_s: f64) -> (ManifestEntry, Option<SignalRecord>) {
    let path_str = path.display().to_string();
    match load_record_auto(path) {
        Ok(rec) => {
            let mut entry = ManifestEntry {
                subject_id: rec.subject_id.clone(),
                path: path_str,
                accepted: true,
                rejection_reason: None,
                window_start: None,
                sbp: None,
                dbp: None,
            };
            if rec.duration_s() < min_duration_s {
                entry.accepted = false;
                entry.rejection_reason =
                    Some(format!("duration {:.1} s < {min_duration_s} s", rec.duration_s()));
                (entry, None)
            } else {
                (entry, Some(rec))
            }
        }
        Err(e) => (
            ManifestEntry {
                subject_id: stem(path),
                path: path_str,
                accepted: false,
                rejection_reason: Some(e.to_string()),
                window_start: None,
                sbp: None,
                dbp: None,
            },
            None,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_of(seconds: usize, fs: f64) -> SignalRecord {
        let n = (seconds as f64 * fs) as usize;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        SignalRecord::new("s", fs, x.clone(), x, Source::Synthetic).unwrap()
    }

    #[test]
    fn three_row_csv_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "t,ppg,abp\n0,1,80\n0.008,2,81\n0.016,3,82\n").unwrap();
        let sc = Sidecar {
            fs: 125.0,
            subject_id: "a".into(),
            source: Source::Uci,
        };
        let r = load_record(&p, Format::Csv, Some(&sc)).unwrap();
        assert_eq!(r.fs, 125.0);
        assert_eq!(r.len(), 3);
        assert_eq!(r.rejected_rows, 0);
    }

    #[test]
    fn nan_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        fs::write(&p, "t,ppg,abp\n0,1,80\n0.008,2,NaN\n0.016,3,82\n").unwrap();
        let r = load_record(&p, Format::Csv, None).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.rejected_rows, 1);
        assert_eq!(r.fs, 125.0);
    }

    #[test]
    fn missing_column_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        fs::write(&p, "t,ppg\n0,1\n").unwrap();
        assert!(matches!(
            load_record(&p, Format::Csv, None),
            Err(IngestError::MalformedFile(_))
        ));
    }

    #[test]
    fn length_mismatch() {
        let e = SignalRecord::new("x", 1.0, vec![1.0], vec![], Source::Uci).unwrap_err();
        assert!(matches!(e, IngestError::LengthMismatch { ppg: 1, abp: 0 }));
    }

    #[test]
    fn fs_snaps_to_integer() {
        assert_eq!(snap_fs(124.99999999), 125.0);
        assert_eq!(snap_fs(124.5), 124.5);
    }

    #[test]
    fn short_record_forces_single_start() {
        let r = rec_of(160, 125.0);
        for seed in 0..20 {
            let w = extract_window(&r, seed).unwrap();
            assert_eq!(w.start_index, 30 * 125);
            assert_eq!(w.ppg_seg.len(), 100 * 125);
        }
    }

    #[test]
    fn too_short() {
        let r = rec_of(159, 125.0);
        assert!(matches!(
            extract_window(&r, 1),
            Err(IngestError::TooShort { .. })
        ));
    }

    #[test]
    fn window_is_deterministic_and_in_bounds() {
        let r = rec_of(600, 125.0);
        assert_eq!(extract_window(&r, 7).unwrap(), extract_window(&r, 7).unwrap());
        for seed in 0..1000 {
            let w = extract_window(&r, seed).unwrap();
            let start_s = w.start_index as f64 / r.fs;
            assert!((30.0..=470.0).contains(&start_s), "{start_s}");
            assert!(w.start_index + 100 * 125 <= r.len() - 30 * 125);
            assert_eq!(w.ppg_seg[0], w.start_index as f64);
        }
    }

    #[test]
    fn exclusion_examples() {
        assert!(apply_bp_exclusion(120.0, 80.0).accepted);
        let v = apply_bp_exclusion(180.0, 80.0);
        assert!(!v.accepted);
        assert_eq!(v.reason.as_deref(), Some("SBP≥180"));
        assert!(apply_bp_exclusion(81.0, 61.0).accepted);
        assert!(!apply_bp_exclusion(81.0, 60.0).accepted);
        assert!(!apply_bp_exclusion(80.0, 70.0).accepted);
        assert!(!apply_bp_exclusion(150.0, 130.0).accepted);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let m = DatasetManifest {
            entries: vec![ManifestEntry {
                subject_id: "s1".into(),
                path: "x.csv".into(),
                accepted: false,
                rejection_reason: Some("SBP≥180".into()),
                window_start: Some(10),
                sbp: Some(181.0),
                dbp: None,
            }],
        };
        m.write_jsonl(&p).unwrap();
        assert_eq!(DatasetManifest::read_jsonl(&p).unwrap(), m);
    }
}
