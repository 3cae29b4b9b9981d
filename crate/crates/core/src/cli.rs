//! Command implementations behind the `segrobust` binary.
//!
//! Each command reads its inputs, fans per-patient work out over the worker
//! pool, sorts by patient id, and writes a JSON report plus its Markdown (and
//! for Bland-Altman, SVG) rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::label_space::{correspondence_pairs, Encoding, LabelError, LabelScheme};
use crate::metrics::{evaluate_targets, EvalTarget, Hd95Options, MetricError, MetricRecord};
use crate::report::{
    bland_altman_caption, bland_altman_svg, render_bland_altman_md, render_comparison_md, render_evaluation_md,
    BlandAltmanReport, ComparisonReport, ComparisonRow, EvaluationReport, PatientError, RunMetadata, TargetSummary,
};
use crate::scenario::{apply_scenario, sample_dropout, DropoutConfig, Scenario, ScenarioError};
use crate::stats::{self, compare_paired, dsc_diffs_pp, macro_average, summarize, Metric, StatConfig, StatsError};
use crate::volume_io::{read_volume, write_volume, Channel, Study, VolumeError};
use crate::par;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_PATIENTS: i32 = 3;

pub const RECORDS_CSV: &str = "records.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_MD: &str = "comparison.md";
pub const BLAND_ALTMAN_JSON: &str = "bland_altman.json";
pub const BLAND_ALTMAN_MD: &str = "bland_altman.md";
pub const BLAND_ALTMAN_SVG: &str = "bland_altman.svg";
pub const TRANSFORM_JSON: &str = "transform.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    ParseError { path: PathBuf, line: u64, message: String },
    #[error("duplicate patient id {0:?}")]
    DuplicatePatient(String),
    #[error("manifest lacks required column {0:?}")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("record sets share no patients")]
    NoCommonPatients,
    #[error("target mismatch: {0}")]
    TargetMismatch(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration and input errors; commands that produced a report
    /// with no successful patient exit 3 separately.
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

// ---- manifest -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub patient_id: String,
    pub pred_path: Option<PathBuf>,
    pub ref_path: Option<PathBuf>,
    pub channels: BTreeMap<Channel, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// A FLAIR path may be omitted only when the run is FLAIR-absent.
    pub fn check_scenario(&self, scenario: Scenario) -> Result<(), CliError> {
        if scenario == Scenario::FlairAbsent {
            return Ok(());
        }
        match self.rows.iter().find(|r| !r.channels.is_empty() && !r.channels.contains_key(&Channel::Flair)) {
            Some(r) => Err(CliError::Config(format!(
                "patient {:?} has no FLAIR path but the scenario is flair-present",
                r.patient_id
            ))),
            None => Ok(()),
        }
    }
}

/// CSV manifest with header `patient_id,pred_path,ref_path[,t1,t1ce,t2,flair]`.
pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<Manifest, CliError> {
    ingest_manifest_with(path, true)
}

/// Relative paths resolve against the manifest's directory. When
/// `require_predictions` is false the pred/ref columns may be absent.
pub fn ingest_manifest_with(path: impl AsRef<Path>, require_predictions: bool) -> Result<Manifest, CliError> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let parse_err = |line: u64, message: String| CliError::ParseError { path: path.to_path_buf(), line, message };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) },
        _ => parse_err(1, e.to_string()),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));

    let pid_col = col("patient_id").ok_or_else(|| CliError::MissingColumn("patient_id".into()))?;
    let pred_col = col("pred_path");
    let ref_col = col("ref_path");
    if require_predictions {
        pred_col.ok_or_else(|| CliError::MissingColumn("pred_path".into()))?;
        ref_col.ok_or_else(|| CliError::MissingColumn("ref_path".into()))?;
    }
    let channel_cols: Vec<(Channel, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| match h.to_ascii_lowercase().as_str() {
            "t1" | "t1ce" | "t2" | "flair" => Channel::parse(h).map(|c| (c, i)),
            _ => None,
        })
        .collect();

    let resolve = |s: &str| -> Option<PathBuf> {
        if s.is_empty() {
            None
        } else {
            let p = PathBuf::from(s);
            Some(if p.is_absolute() { p } else { base.join(p) })
        }
    };

    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let pid = field(pid_col).to_string();
        if pid.is_empty() {
            return Err(parse_err(line, "empty patient_id".into()));
        }
        if !seen.insert(pid.clone()) {
            return Err(CliError::DuplicatePatient(pid));
        }
        let pred_path = pred_col.and_then(|c| resolve(field(c)));
        let ref_path = ref_col.and_then(|c| resolve(field(c)));
        if require_predictions && (pred_path.is_none() || ref_path.is_none()) {
            return Err(parse_err(line, format!("patient {pid:?}: pred_path and ref_path must be non-empty")));
        }
        let channels = channel_cols.iter().filter_map(|&(c, i)| resolve(field(i)).map(|p| (c, p))).collect();
        rows.push(ManifestRow { patient_id: pid, pred_path, ref_path, channels });
    }
    Ok(Manifest { rows })
}

// ---- evaluate -------------------------------------------------------------

/// Which targets are scored and how predictions are labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalEncoding {
    Label,
    Region,
    /// comparator predictions in HD-GLIO codes against BraTS references
    HdGlio,
}

impl EvalEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalEncoding::Label => "label",
            EvalEncoding::Region => "region",
            EvalEncoding::HdGlio => "hd-glio",
        }
    }

    fn targets(self) -> Vec<EvalTarget> {
        match self {
            EvalEncoding::Label => Encoding::LabelWise.targets().iter().map(EvalTarget::same).collect(),
            EvalEncoding::Region => Encoding::RegionWise.targets().iter().map(EvalTarget::same).collect(),
            EvalEncoding::HdGlio => correspondence_pairs("hd-glio")
                .expect("built-in comparator")
                .into_iter()
                .map(|(brats, comp)| EvalTarget { name: comp.name.clone(), pred: comp, reference: brats })
                .collect(),
        }
    }
}

impl std::str::FromStr for EvalEncoding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" | "label-wise" => Ok(Self::Label),
            "region" | "region-wise" => Ok(Self::Region),
            "hd-glio" => Ok(Self::HdGlio),
            _ => Err(format!("unknown encoding {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub manifest: PathBuf,
    pub scenario: Scenario,
    pub encoding: EvalEncoding,
    pub scheme: Option<PathBuf>,
    pub hd95: Hd95Options,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

fn evaluate_row(
    row: &ManifestRow,
    targets: &[EvalTarget],
    pred_scheme: &LabelScheme,
    ref_scheme: &LabelScheme,
    hd95: Hd95Options,
) -> Result<Vec<MetricRecord>, String> {
    let pred_path = row.pred_path.as_ref().ok_or("missing pred_path")?;
    let ref_path = row.ref_path.as_ref().ok_or("missing ref_path")?;
    let pred = read_volume(pred_path).map_err(|e| format!("prediction: {e}"))?;
    let reference = read_volume(ref_path).map_err(|e| format!("reference: {e}"))?;
    evaluate_targets(&row.patient_id, &pred, pred_scheme, &reference, ref_scheme, targets, hd95)
        .map_err(|e: MetricError| e.to_string())
}

pub fn cmd_evaluate(opts: &EvaluateOptions) -> Result<EvaluationReport, CliError> {
    let manifest = ingest_manifest(&opts.manifest)?;
    manifest.check_scenario(opts.scenario)?;
    let ref_scheme = match &opts.scheme {
        Some(p) => LabelScheme::load(p)?,
        None => LabelScheme::brats(),
    };
    let pred_scheme = match opts.encoding {
        EvalEncoding::HdGlio => LabelScheme::hd_glio(),
        _ => ref_scheme.clone(),
    };
    let targets = opts.encoding.targets();
    for t in &targets {
        t.pred.check_against(&pred_scheme)?;
        t.reference.check_against(&ref_scheme)?;
    }
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;

    let mut rows: Vec<&ManifestRow> = manifest.rows.iter().collect();
    rows.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let results = par::with_jobs(opts.jobs, || {
        par::map_slice(&rows, |row| evaluate_row(row, &targets, &pred_scheme, &ref_scheme, opts.hd95))
    });

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (row, res) in rows.iter().zip(results) {
        match res {
            Ok(r) => records.extend(r),
            Err(message) => errors.push(PatientError { patient_id: row.patient_id.clone(), message }),
        }
    }
    write_records(&opts.out.join(RECORDS_CSV), &records)?;

    let target_names: Vec<&str> = targets.iter().map(|t| t.name.as_str()).collect();
    let summaries = summarize_records(&records, &target_names);
    let config = json!({
        "manifest": opts.manifest.file_name().map(|f| f.to_string_lossy().into_owned()),
        "scenario": opts.scenario.as_str(),
        "encoding": opts.encoding.as_str(),
        "scheme": ref_scheme,
        "pred_scheme": pred_scheme,
        "hd95_convention": opts.hd95.convention.as_str(),
        "hd95_percentile": opts.hd95.percentile.as_str(),
    });
    let report = EvaluationReport {
        metadata: RunMetadata::new("evaluate", config),
        scenario: opts.scenario.as_str().into(),
        encoding: opts.encoding.as_str().into(),
        n_patients: rows.len(),
        n_succeeded: rows.len() - errors.len(),
        summaries,
        errors,
    };
    write_file(&opts.out.join(SUMMARY_JSON), to_json(&report))?;
    write_file(&opts.out.join(SUMMARY_MD), render_evaluation_md(&report))?;
    Ok(report)
}

/// Overall (per-patient macro-average) followed by each target.
pub fn summarize_records(records: &[MetricRecord], targets: &[&str]) -> Vec<TargetSummary> {
    let mut out = Vec::with_capacity(targets.len() + 1);
    let overall = |m: Metric| {
        let vals: Vec<Option<f64>> = macro_average(records, targets, m).into_iter().map(|(_, v)| v).collect();
        summarize("Overall", &vals).ok()
    };
    out.push(TargetSummary {
        target: "Overall".into(),
        dsc: overall(Metric::Dsc),
        hd95: overall(Metric::Hd95),
        emptiness: BTreeMap::new(),
    });
    for &t in targets {
        let rs: Vec<&MetricRecord> = records.iter().filter(|r| r.target == t).collect();
        let dsc: Vec<Option<f64>> = rs.iter().map(|r| r.dsc).collect();
        let hd: Vec<Option<f64>> = rs.iter().map(|r| r.hd95_mm).collect();
        let mut emptiness = BTreeMap::new();
        for r in &rs {
            *emptiness.entry(r.emptiness.as_str().to_string()).or_insert(0) += 1;
        }
        out.push(TargetSummary {
            target: t.into(),
            dsc: summarize(t, &dsc).ok(),
            hd95: summarize(t, &hd).ok(),
            emptiness,
        });
    }
    out
}

pub fn write_records(path: &Path, records: &[MetricRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let wrap = |e: csv::Error| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) };
    if records.is_empty() {
        w.write_record(["patient_id", "target", "dsc", "hd95_mm", "vol_pred_ml", "vol_ref_ml", "emptiness"])
            .map_err(wrap)?;
    }
    for r in records {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::ParseError {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e: csv::Error| CliError::ParseError {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

// ---- compare --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareMode {
    Equivalence,
    Noninferiority,
}

impl CompareMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareMode::Equivalence => "equivalence",
            CompareMode::Noninferiority => "noninferiority",
        }
    }
}

impl std::str::FromStr for CompareMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equivalence" => Ok(Self::Equivalence),
            "noninferiority" | "non-inferiority" => Ok(Self::Noninferiority),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    SameLabels,
    HdGlio,
}

impl Pairing {
    pub fn as_str(self) -> &'static str {
        match self {
            Pairing::SameLabels => "same-labels",
            Pairing::HdGlio => "hd-glio",
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-labels" => Ok(Self::SameLabels),
            "hd-glio" => Ok(Self::HdGlio),
            _ => Err(format!("unknown pairing {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub records_a: PathBuf,
    pub records_b: PathBuf,
    pub mode: CompareMode,
    pub pairing: Pairing,
    pub stats: StatConfig,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

type DscTable = BTreeMap<String, BTreeMap<String, Option<f64>>>;

fn dsc_table(records: &[MetricRecord]) -> DscTable {
    let mut t: DscTable = BTreeMap::new();
    for r in records {
        t.entry(r.patient_id.clone()).or_default().insert(r.target.clone(), r.dsc);
    }
    t
}

fn targets_in_order(records: &[MetricRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    records.iter().filter(|r| seen.insert(r.target.clone())).map(|r| r.target.clone()).collect()
}

pub fn cmd_compare(opts: &CompareOptions) -> Result<ComparisonReport, CliError> {
    opts.stats.validate()?;
    let a = read_records(&opts.records_a)?;
    let b = read_records(&opts.records_b)?;
    let ta = dsc_table(&a);
    let tb = dsc_table(&b);

    let common: Vec<&String> = ta.keys().filter(|p| tb.contains_key(*p)).collect();
    if common.is_empty() {
        return Err(CliError::NoCommonPatients);
    }
    let unpaired_a: Vec<String> = ta.keys().filter(|p| !tb.contains_key(*p)).cloned().collect();
    let unpaired_b: Vec<String> = tb.keys().filter(|p| !ta.contains_key(*p)).cloned().collect();

    let targets_a = targets_in_order(&a);
    let targets_b: BTreeSet<String> = targets_in_order(&b).into_iter().collect();
    let pairs: Vec<(String, String)> = match opts.pairing {
        Pairing::SameLabels => targets_a.iter().filter(|t| targets_b.contains(*t)).map(|t| (t.clone(), t.clone())).collect(),
        Pairing::HdGlio => correspondence_pairs("hd-glio")?
            .into_iter()
            .map(|(x, y)| (x.name, y.name))
            .filter(|(x, y)| targets_a.contains(x) && targets_b.contains(y))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(CliError::TargetMismatch(format!(
            "no {} target pairs between {:?} and {:?}",
            opts.pairing.as_str(),
            targets_a,
            targets_b
        )));
    }

    // one (label_a, label_b, values_a, values_b) per output row
    let mut series: Vec<(String, String, Vec<f64>, Vec<f64>)> = Vec::new();
    if opts.pairing == Pairing::SameLabels && pairs.len() > 1 {
        let names: Vec<&str> = pairs.iter().map(|(x, _)| x.as_str()).collect();
        let macro_of = |table: &DscTable, pid: &str| -> Option<f64> {
            let row = table.get(pid)?;
            let mut sum = 0.0;
            for n in &names {
                sum += (*row.get(*n)?)?;
            }
            Some(sum / names.len() as f64)
        };
        let (va, vb): (Vec<f64>, Vec<f64>) =
            common.iter().filter_map(|p| Some((macro_of(&ta, p)?, macro_of(&tb, p)?))).unzip();
        series.push(("Overall".into(), "Overall".into(), va, vb));
    }
    for (x, y) in &pairs {
        let (va, vb): (Vec<f64>, Vec<f64>) = common
            .iter()
            .filter_map(|p| Some(((*ta[*p].get(x)?)?, (*tb[*p].get(y)?)?)))
            .unzip();
        series.push((x.clone(), y.clone(), va, vb));
    }

    let with_ni = opts.mode == CompareMode::Noninferiority;
    let rows = par::with_jobs(opts.jobs, || {
        series
            .iter()
            .map(|(la, lb, va, vb)| -> Result<ComparisonRow, CliError> {
                let diffs = dsc_diffs_pp(va, vb);
                let wrap_a: Vec<Option<f64>> = va.iter().map(|&v| Some(v)).collect();
                let wrap_b: Vec<Option<f64>> = vb.iter().map(|&v| Some(v)).collect();
                Ok(ComparisonRow {
                    label_a: la.clone(),
                    label_b: lb.clone(),
                    summary_a: summarize(la, &wrap_a)?,
                    summary_b: summarize(lb, &wrap_b)?,
                    comparison: compare_paired(la, &diffs, &opts.stats, with_ni)?,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let config = json!({
        "records_a": opts.records_a.file_name().map(|f| f.to_string_lossy().into_owned()),
        "records_b": opts.records_b.file_name().map(|f| f.to_string_lossy().into_owned()),
        "mode": opts.mode.as_str(),
        "pairing": opts.pairing.as_str(),
        "margin_pp": opts.stats.margin_pp,
        "alpha": opts.stats.alpha,
        "replicates": opts.stats.replicates,
        "seed": opts.stats.seed,
    });
    let report = ComparisonReport {
        metadata: RunMetadata::new("compare", config),
        mode: opts.mode.as_str().into(),
        pairing: opts.pairing.as_str().into(),
        n_common_patients: common.len(),
        unpaired_a,
        unpaired_b,
        rows,
    };
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    write_file(&opts.out.join(COMPARISON_JSON), to_json(&report))?;
    write_file(&opts.out.join(COMPARISON_MD), render_comparison_md(&report))?;
    Ok(report)
}

// ---- bland-altman ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlandAltmanOptions {
    pub records: PathBuf,
    pub target: String,
    pub stats: StatConfig,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_bland_altman(opts: &BlandAltmanOptions) -> Result<BlandAltmanReport, CliError> {
    opts.stats.validate()?;
    let mut records: Vec<MetricRecord> =
        read_records(&opts.records)?.into_iter().filter(|r| r.target == opts.target).collect();
    if records.is_empty() {
        return Err(CliError::TargetMismatch(format!("no records for target {:?}", opts.target)));
    }
    records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let pred: Vec<f64> = records.iter().map(|r| r.vol_pred_ml).collect();
    let reference: Vec<f64> = records.iter().map(|r| r.vol_ref_ml).collect();
    let result = par::with_jobs(opts.jobs, || stats::bland_altman(&pred, &reference, &opts.stats))?;
    let points: Vec<(f64, f64)> = pred.iter().zip(&reference).map(|(p, r)| ((p + r) / 2.0, p - r)).collect();

    let config = json!({
        "records": opts.records.file_name().map(|f| f.to_string_lossy().into_owned()),
        "target": opts.target,
        "replicates": opts.stats.replicates,
        "seed": opts.stats.seed,
    });
    let report = BlandAltmanReport {
        metadata: RunMetadata::new("bland-altman", config),
        target: opts.target.clone(),
        caption: bland_altman_caption(&result),
        result,
        excluded: Vec::new(),
    };
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    write_file(&opts.out.join(BLAND_ALTMAN_JSON), to_json(&report))?;
    write_file(&opts.out.join(BLAND_ALTMAN_MD), render_bland_altman_md(&report))?;
    let title = format!("{} volume: predicted - reference", opts.target);
    write_file(&opts.out.join(BLAND_ALTMAN_SVG), bland_altman_svg(&points, &result, &title))?;
    Ok(report)
}

// ---- transform ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformMode {
    Scenario(Scenario),
    Dropout(DropoutConfig),
}

#[derive(Debug, Clone)]
pub struct TransformOptions {
    pub manifest: PathBuf,
    pub mode: TransformMode,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DropoutDecision {
    pub patient_id: String,
    pub sample_index: u64,
    pub seed: u64,
    pub dropped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformReport {
    pub metadata: RunMetadata,
    pub samples: Vec<DropoutDecision>,
}

fn nifti_suffix(path: &Path) -> &'static str {
    let name = path.file_name().map(|n| n.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    if name.ends_with(".gz") {
        ".nii.gz"
    } else {
        ".nii"
    }
}

fn transform_row(
    index: u64,
    row: &ManifestRow,
    mode: TransformMode,
    out: &Path,
) -> Result<DropoutDecision, CliError> {
    let mut grids = BTreeMap::new();
    for (&c, p) in &row.channels {
        grids.insert(c, read_volume(p)?);
    }
    let study = Study::new(row.patient_id.clone(), grids, None)?;
    let (result, dropped, seed) = match mode {
        TransformMode::Scenario(s) => {
            let r = apply_scenario(&study, s)?;
            (r, s == Scenario::FlairAbsent, 0)
        }
        TransformMode::Dropout(cfg) => {
            let (r, d) = sample_dropout(&study, &cfg, index)?;
            (r, d, cfg.seed)
        }
    };
    let dir = out.join(&row.patient_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (&c, grid) in result.channels() {
        let name = c.name().to_ascii_lowercase();
        match row.channels.get(&c) {
            // untouched channels are copied byte-for-byte
            Some(src) if study.channel(c) == Some(grid) => {
                let dst = dir.join(format!("{name}{}", nifti_suffix(src)));
                fs::copy(src, &dst).map_err(io_err(&dst))?;
            }
            Some(src) => write_volume(grid, dir.join(format!("{name}{}", nifti_suffix(src))))?,
            None => write_volume(grid, dir.join(format!("{name}.nii.gz")))?,
        }
    }
    Ok(DropoutDecision { patient_id: row.patient_id.clone(), sample_index: index, seed, dropped })
}

/// Writes transformed studies under `out/<patient_id>/` and a sidecar with
/// each sample's drop decision. Sample indices follow manifest row order.
pub fn cmd_transform(opts: &TransformOptions) -> Result<TransformReport, CliError> {
    if let TransformMode::Dropout(cfg) = &opts.mode {
        cfg.validate()?;
    }
    let manifest = ingest_manifest_with(&opts.manifest, false)?;
    if let TransformMode::Scenario(s) = opts.mode {
        manifest.check_scenario(s)?;
    }
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    let indexed: Vec<(u64, &ManifestRow)> = manifest.rows.iter().enumerate().map(|(i, r)| (i as u64, r)).collect();
    let results = par::with_jobs(opts.jobs, || {
        par::map_slice(&indexed, |(i, row)| transform_row(*i, row, opts.mode, &opts.out))
    });
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let config = match opts.mode {
        TransformMode::Scenario(s) => json!({ "scenario": s.as_str() }),
        TransformMode::Dropout(cfg) => json!({ "dropout_rate": cfg.rate, "channel": cfg.channel.name(), "seed": cfg.seed }),
    };
    let report = TransformReport { metadata: RunMetadata::new("transform", config), samples };
    write_file(&opts.out.join(TRANSFORM_JSON), to_json(&report))?;
    Ok(report)
}

/// Exit code for a finished evaluation.
pub fn evaluation_exit_code(report: &EvaluationReport) -> i32 {
    if report.n_succeeded == 0 {
        EXIT_NO_PATIENTS
    } else {
        EXIT_OK
    }
}

