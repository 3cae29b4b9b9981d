//! Cohort summaries and paired inference.
//!
//! All intervals and tests are built from one bootstrap distribution: the
//! median paired difference over patients resampled with replacement. Each
//! replicate draws from its own counter-based stream keyed by
//! `(seed, replicate_index)`, so results do not depend on thread count.
//!
//! DSC lives in [0, 1] everywhere except here: [`dsc_diffs_pp`] is the one
//! place fractions become percentage points, and margins are in points.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::metrics::MetricRecord;
use crate::{par, quantile, rng};

pub const PP_PER_UNIT: f64 = 100.0;
/// z-multiplier for 95% limits of agreement.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no non-missing values")]
    AllMissing,
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("length mismatch: {pred} predicted vs {reference} reference values")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("invalid statistics config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatConfig {
    /// Equivalence / non-inferiority margin in DSC percentage points.
    pub margin_pp: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for StatConfig {
    fn default() -> Self {
        Self { margin_pp: 1.5, alpha: 0.05, replicates: 2000, seed: 0 }
    }
}

impl StatConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.margin_pp > 0.0 && self.margin_pp.is_finite()) {
            return Err(StatsError::InvalidConfig(format!("margin_pp must be > 0, got {}", self.margin_pp)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.replicates < 100 {
            return Err(StatsError::InvalidConfig(format!("replicates must be >= 100, got {}", self.replicates)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub target: String,
    pub n: usize,
    pub n_missing: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Median and quartiles over the non-missing values.
pub fn summarize(target: &str, values: &[Option<f64>]) -> Result<CohortSummary, StatsError> {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(StatsError::AllMissing);
    }
    if let Some(&bad) = present.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(bad));
    }
    present.sort_by(f64::total_cmp);
    Ok(CohortSummary {
        target: target.to_string(),
        n: values.len(),
        n_missing: values.len() - present.len(),
        median: quantile::linear_sorted(&present, 0.5),
        q1: quantile::linear_sorted(&present, 0.25),
        q3: quantile::linear_sorted(&present, 0.75),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Dsc,
    Hd95,
}

impl Metric {
    pub fn of(self, r: &MetricRecord) -> Option<f64> {
        match self {
            Metric::Dsc => r.dsc,
            Metric::Hd95 => r.hd95_mm,
        }
    }
}

/// Per-patient unweighted mean over `targets`, sorted by patient id. A
/// patient missing any component gets `None` rather than a renormalised mean.
pub fn macro_average(records: &[MetricRecord], targets: &[&str], metric: Metric) -> Vec<(String, Option<f64>)> {
    let mut by_patient: BTreeMap<&str, BTreeMap<&str, Option<f64>>> = BTreeMap::new();
    for r in records {
        by_patient.entry(&r.patient_id).or_default().insert(&r.target, metric.of(r));
    }
    by_patient
        .into_iter()
        .map(|(pid, vals)| {
            let mut sum = 0.0;
            for t in targets {
                match vals.get(t).copied().flatten() {
                    Some(v) => sum += v,
                    None => return (pid.to_string(), None),
                }
            }
            (pid.to_string(), Some(sum / targets.len() as f64))
        })
        .collect()
}

/// Paired DSC differences `a - b`, converted from fractions to percentage points.
pub fn dsc_diffs_pp(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) * PP_PER_UNIT).collect()
}

fn check_pairs(values: &[f64]) -> Result<(), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewPairs(values.len()));
    }
    match values.iter().find(|v| !v.is_finite()) {
        Some(&bad) => Err(StatsError::NonFinite(bad)),
        None => Ok(()),
    }
}

/// Bootstrap replicates of a statistic over resampled patients, in replicate order.
fn bootstrap<F>(values: &[f64], replicates: usize, seed: u64, domain: u64, stat: F) -> Vec<f64>
where
    F: Fn(&mut [f64]) -> f64 + Sync + Send,
{
    par::map_range(replicates, |r| {
        let mut stream = rng::stream(seed, domain, r as u64);
        let mut idx = Vec::with_capacity(values.len());
        rng::resample_indices(&mut stream, values.len(), &mut idx);
        let mut sample: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        stat(&mut sample)
    })
}

/// Replicate medians of the paired differences, ascending.
pub fn bootstrap_medians(diffs: &[f64], cfg: &StatConfig) -> Result<Vec<f64>, StatsError> {
    cfg.validate()?;
    check_pairs(diffs)?;
    let mut meds = bootstrap(diffs, cfg.replicates, cfg.seed, rng::DOMAIN_BOOTSTRAP, |s| {
        quantile::linear_select(s, 0.5)
    });
    meds.sort_by(f64::total_cmp);
    Ok(meds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Median of `diffs` with a 95% percentile bootstrap interval.
pub fn paired_bootstrap_median(diffs: &[f64], cfg: &StatConfig) -> Result<BootstrapCi, StatsError> {
    let meds = bootstrap_medians(diffs, cfg)?;
    Ok(BootstrapCi {
        estimate: quantile::linear(diffs, 0.5),
        ci_low: quantile::linear_sorted(&meds, 0.025),
        ci_high: quantile::linear_sorted(&meds, 0.975),
    })
}

/// Bootstrap p-value: the share of replicates on the wrong side of a bound.
/// Zero exceedances are reported as "< 1/B".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct PValue {
    pub exceedances: usize,
    pub replicates: usize,
}

impl PValue {
    pub fn value(&self) -> f64 {
        self.exceedances as f64 / self.replicates as f64
    }

    pub fn is_lower_bound(&self) -> bool {
        self.exceedances == 0
    }

    /// Comparison against a significance level; "< 1/B" counts as below any alpha ≥ 1/B.
    pub fn below(&self, alpha: f64) -> bool {
        self.value() < alpha
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_lower_bound() {
            write!(f, "<{}", 1.0 / self.replicates as f64)
        } else {
            write!(f, "{:.3}", self.value())
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PValue", 4)?;
        st.serialize_field("value", &self.value())?;
        st.serialize_field("exceedances", &self.exceedances)?;
        st.serialize_field("replicates", &self.replicates)?;
        st.serialize_field("display", &self.to_string())?;
        st.end()
    }
}

fn count(sorted: &[f64], pred: impl Fn(f64) -> bool) -> PValue {
    PValue { exceedances: sorted.iter().filter(|&&m| pred(m)).count(), replicates: sorted.len() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TostResult {
    /// share of replicate medians ≤ −margin
    pub p_lower: PValue,
    /// share of replicate medians ≥ +margin
    pub p_upper: PValue,
    pub p: PValue,
    pub equivalent: bool,
}

fn tost_from(meds: &[f64], cfg: &StatConfig) -> TostResult {
    let p_lower = count(meds, |m| m <= -cfg.margin_pp);
    let p_upper = count(meds, |m| m >= cfg.margin_pp);
    let p = if p_lower.exceedances >= p_upper.exceedances { p_lower } else { p_upper };
    TostResult { p_lower, p_upper, p, equivalent: p.below(cfg.alpha) }
}

/// Two one-sided tests against ±margin on the bootstrap median distribution.
pub fn tost_equivalence(diffs: &[f64], cfg: &StatConfig) -> Result<TostResult, StatsError> {
    Ok(tost_from(&bootstrap_medians(diffs, cfg)?, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonInferiorityResult {
    pub p: PValue,
    pub noninferior: bool,
}

fn noninferiority_from(meds: &[f64], cfg: &StatConfig) -> NonInferiorityResult {
    let p = count(meds, |m| m <= -cfg.margin_pp);
    NonInferiorityResult { p, noninferior: p.below(cfg.alpha) }
}

/// One-sided test of `diffs` (model − comparator) against −margin.
pub fn noninferiority(diffs: &[f64], cfg: &StatConfig) -> Result<NonInferiorityResult, StatsError> {
    Ok(noninferiority_from(&bootstrap_medians(diffs, cfg)?, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub target: String,
    pub n_pairs: usize,
    pub median_diff_pp: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub tost: TostResult,
    pub p_noninferior: Option<NonInferiorityResult>,
}

/// CI, TOST and (optionally) non-inferiority from a single replicate set.
pub fn compare_paired(
    target: &str,
    diffs_pp: &[f64],
    cfg: &StatConfig,
    with_noninferiority: bool,
) -> Result<PairedComparison, StatsError> {
    let meds = bootstrap_medians(diffs_pp, cfg)?;
    Ok(PairedComparison {
        target: target.to_string(),
        n_pairs: diffs_pp.len(),
        median_diff_pp: quantile::linear(diffs_pp, 0.5),
        ci_low: quantile::linear_sorted(&meds, 0.025),
        ci_high: quantile::linear_sorted(&meds, 0.975),
        tost: tost_from(&meds, cfg),
        p_noninferior: with_noninferiority.then(|| noninferiority_from(&meds, cfg)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanResult {
    pub n: usize,
    pub bias_ml: f64,
    pub sd_ml: f64,
    pub loa_low_ml: f64,
    pub loa_high_ml: f64,
    pub bias_ci_low_ml: f64,
    pub bias_ci_high_ml: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Bias (mean of pred − ref), sample SD, 95% limits of agreement and a
/// patient-bootstrap CI of the bias.
pub fn bland_altman(pred_ml: &[f64], ref_ml: &[f64], cfg: &StatConfig) -> Result<BlandAltmanResult, StatsError> {
    cfg.validate()?;
    if pred_ml.len() != ref_ml.len() {
        return Err(StatsError::LengthMismatch { pred: pred_ml.len(), reference: ref_ml.len() });
    }
    let diffs: Vec<f64> = pred_ml.iter().zip(ref_ml).map(|(p, r)| p - r).collect();
    check_pairs(&diffs)?;
    let bias = mean(&diffs);
    let var = diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
    let sd = var.sqrt();
    let mut boot = bootstrap(&diffs, cfg.replicates, cfg.seed, rng::DOMAIN_BLAND_ALTMAN, |s| mean(s));
    boot.sort_by(f64::total_cmp);
    Ok(BlandAltmanResult {
        n: diffs.len(),
        bias_ml: bias,
        sd_ml: sd,
        loa_low_ml: bias - LOA_Z * sd,
        loa_high_ml: bias + LOA_Z * sd,
        bias_ci_low_ml: quantile::linear_sorted(&boot, 0.025),
        bias_ci_high_ml: quantile::linear_sorted(&boot, 0.975),
    })
}
