//! Report structures and their renderings.
//!
//! The JSON structures are the record of a run. Markdown tables and SVG plots
//! are renderings of them and never recompute statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::stats::{BlandAltmanResult, CohortSummary, PairedComparison};

pub const QUANTILE_METHOD: &str = "linear interpolation at (n-1)q";
pub const CI_METHOD: &str = "percentile bootstrap over patients";

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub quantile_method: String,
    pub ci_method: String,
}

impl RunMetadata {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "segrobust".into(),
            version: crate::VERSION.into(),
            command: command.into(),
            config,
            quantile_method: QUANTILE_METHOD.into(),
            ci_method: CI_METHOD.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientError {
    pub patient_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetSummary {
    pub target: String,
    pub dsc: Option<CohortSummary>,
    pub hd95: Option<CohortSummary>,
    /// patient counts per emptiness class; empty for the macro-average row
    pub emptiness: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub scenario: String,
    pub encoding: String,
    pub n_patients: usize,
    pub n_succeeded: usize,
    /// "Overall" first, then targets in reporting order
    pub summaries: Vec<TargetSummary>,
    pub errors: Vec<PatientError>,
}

/// DSC cell, "95.0 [90.3-97.1]": fractions rendered as percent, 1 decimal.
pub fn dsc_cell(s: &CohortSummary) -> String {
    format!("{:.1} [{:.1}-{:.1}]", s.median * 100.0, s.q1 * 100.0, s.q3 * 100.0)
}

/// DSC cell with 2 decimals, as in the comparator table.
pub fn dsc_cell_2dp(s: &CohortSummary) -> String {
    format!("{:.2} [{:.2}-{:.2}]", s.median * 100.0, s.q1 * 100.0, s.q3 * 100.0)
}

/// HD95 cell in mm, "1.61 [1.14-2.72]".
pub fn hd95_cell(s: &CohortSummary) -> String {
    format!("{:.2} [{:.2}-{:.2}]", s.median, s.q1, s.q3)
}

fn or_na(cell: Option<String>) -> String {
    cell.unwrap_or_else(|| "n/a".into())
}

pub fn render_evaluation_md(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Segmentation performance ({} encoding, {})", r.encoding, r.scenario);
    let _ = writeln!(out);
    let _ = writeln!(out, "Values are median [Q1-Q3] across patients. DSC in %, HD95 in mm.");
    let _ = writeln!(out, "Overall is the unweighted per-patient macro-average across the targets.");
    let _ = writeln!(out);

    let mut header = String::from("| Scenario |");
    let mut rule = String::from("|---|");
    let mut row = format!("| {} |", r.scenario);
    for t in &r.summaries {
        let _ = write!(header, " {} DSC | {} HD95 |", t.target, t.target);
        rule.push_str("---|---|");
        let _ = write!(row, " {} | {} |", or_na(t.dsc.as_ref().map(dsc_cell)), or_na(t.hd95.as_ref().map(hd95_cell)));
    }
    let _ = writeln!(out, "{header}\n{rule}\n{row}");
    let _ = writeln!(out);
    let _ = writeln!(out, "Patients evaluated: {} of {}.", r.n_succeeded, r.n_patients);
    for t in &r.summaries {
        if let Some(h) = &t.hd95 {
            if h.n_missing > 0 {
                let _ = writeln!(out, "- {}: HD95 undefined for {} of {} patients (empty mask).", t.target, h.n_missing, h.n);
            }
        }
    }
    if !r.errors.is_empty() {
        let _ = writeln!(out, "\n## Errors\n");
        for e in &r.errors {
            let _ = writeln!(out, "- {}: {}", e.patient_id, e.message);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub label_a: String,
    pub label_b: String,
    pub summary_a: CohortSummary,
    pub summary_b: CohortSummary,
    pub comparison: PairedComparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub metadata: RunMetadata,
    pub mode: String,
    pub pairing: String,
    pub n_common_patients: usize,
    pub unpaired_a: Vec<String>,
    pub unpaired_b: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn display_target(name: &str) -> &str {
    match name {
        "ED" => "Edema",
        other => other,
    }
}

fn delta_cell(c: &PairedComparison) -> String {
    format!("{:.3} [{:.3}, {:.3}]", c.median_diff_pp, c.ci_low, c.ci_high)
}

pub fn render_comparison_md(r: &ComparisonReport) -> String {
    let mut out = String::new();
    let cfg = &r.metadata.config;
    let margin = cfg.get("margin_pp").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    let alpha = cfg.get("alpha").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    if r.mode == "noninferiority" {
        let _ = writeln!(out, "# Non-inferiority (margin -{margin} DSC pp, alpha {alpha})\n");
        let _ = writeln!(out, "Values are median DSC (%) [Q1-Q3]. Median Δ is the paired median difference (A - B) in DSC percentage points with 95% bootstrap CI.\n");
        let _ = writeln!(out, "| A target | B target | A median DSC (%) [Q1-Q3] | B median DSC (%) [Q1-Q3] | Median Δ DSC (pp) [95%CI] | Non-inferior p-Value |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for row in &r.rows {
            let p = row.comparison.p_noninferior.map(|n| n.p.to_string()).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                display_target(&row.label_a),
                display_target(&row.label_b),
                dsc_cell_2dp(&row.summary_a),
                dsc_cell_2dp(&row.summary_b),
                delta_cell(&row.comparison),
                p
            );
        }
    } else {
        let _ = writeln!(out, "# Equivalence (TOST, bounds ±{margin} DSC pp, alpha {alpha})\n");
        let _ = writeln!(out, "Entries are the median paired DSC difference (A - B) in percentage points with 95% bootstrap CI.\n");
        let _ = writeln!(out, "| Target | n | Median DSC Δ [95%CI] | TOST p-Value |");
        let _ = writeln!(out, "|---|---|---|---|");
        for row in &r.rows {
            let label = if row.label_a == row.label_b {
                display_target(&row.label_a).to_string()
            } else {
                format!("{}/{}", display_target(&row.label_a), display_target(&row.label_b))
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                label,
                row.comparison.n_pairs,
                delta_cell(&row.comparison),
                row.comparison.tost.p
            );
        }
    }
    let _ = writeln!(out, "\nPatients paired: {}.", r.n_common_patients);
    if !r.unpaired_a.is_empty() || !r.unpaired_b.is_empty() {
        let _ = writeln!(out, "Excluded (unpaired): A only {:?}; B only {:?}.", r.unpaired_a, r.unpaired_b);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BlandAltmanReport {
    pub metadata: RunMetadata,
    pub target: String,
    pub result: BlandAltmanResult,
    pub caption: String,
    pub excluded: Vec<String>,
}

/// "Bias: -45.59 mL; Limits of Agreement: -107.96, 16.78 mL"
pub fn bland_altman_caption(r: &BlandAltmanResult) -> String {
    format!("Bias: {:.2} mL; Limits of Agreement: {:.2}, {:.2} mL", r.bias_ml, r.loa_low_ml, r.loa_high_ml)
}

pub fn render_bland_altman_md(r: &BlandAltmanReport) -> String {
    format!(
        "# Bland-Altman: {} volume (predicted - reference, mL)\n\n{}\n\nBias 95% CI: {:.2} to {:.2} mL (n = {}).\n",
        r.target,
        r.caption,
        r.result.bias_ci_low_ml,
        r.result.bias_ci_high_ml,
        r.result.n
    )
}

/// Scatter of mean volume (x) against difference (y) with a solid bias line
/// and dashed limits of agreement.
pub fn bland_altman_svg(points: &[(f64, f64)], r: &BlandAltmanResult, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;

    let (mut x_lo, mut x_hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let mut y_lo = points.iter().map(|p| p.1).fold(r.loa_low_ml, f64::min);
    let mut y_hi = points.iter().map(|p| p.1).fold(r.loa_high_ml, f64::max);
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    pad_range(&mut x_lo, &mut x_hi);
    pad_range(&mut y_lo, &mut y_hi);

    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * (W - LEFT - RIGHT);
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, W / 2.0, xml_escape(title));
    let _ = writeln!(
        s,
        r#"<path class="axis" d="M{LEFT:.2},{TOP:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for p in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.6"/>"#, sx(p.0), sy(p.1));
    }
    let guide = |s: &mut String, class: &str, y: f64, dashed: bool| {
        let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line class="{class}" x1="{LEFT:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="black"{dash}/>"#,
            W - RIGHT,
            yy = sy(y)
        );
    };
    guide(&mut s, "guide bias", r.bias_ml, false);
    guide(&mut s, "guide loa", r.loa_high_ml, true);
    guide(&mut s, "guide loa", r.loa_low_ml, true);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">Mean of predicted and reference volume (mL)</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {y})">Predicted - reference (mL)</text>"#,
        y = (TOP + H - BOTTOM) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
        LEFT + 6.0,
        TOP + 14.0,
        xml_escape(&bland_altman_caption(r))
    );
    for (label, v) in [(format!("{:.2}", y_lo), y_lo), (format!("{:.2}", y_hi), y_hi)] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{label}</text>"#, LEFT - 4.0, sy(v));
    }
    for (label, v) in [(format!("{:.1}", x_lo), x_lo), (format!("{:.1}", x_hi), x_hi)] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{label}</text>"#, sx(v), H - BOTTOM + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

fn pad_range(lo: &mut f64, hi: &mut f64) {
    let span = *hi - *lo;
    if span <= 0.0 || !span.is_finite() {
        *lo -= 1.0;
        *hi += 1.0;
    } else {
        *lo -= 0.05 * span;
        *hi += 0.05 * span;
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
