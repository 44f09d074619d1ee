//! Text output: CSV tables and JSON documents written by the CLI.
//!
//! Floats in CSV carry 17 significant digits, which round-trips every `f64`.
//! Infinities and NaN are written as `inf`, `-inf` and `nan`; absent values
//! as empty fields.

use serde::Serialize;

use crate::bounds::BoundReport;
use crate::error::Result;
use crate::experiments::{OptRatioRow, SummaryRow, TrialRecord};
use crate::model::{SelectionResult, Step};

pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn table(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn bounds_csv(rows: &[BoundReport]) -> String {
    table(
        "M1,M2,ms,thm1,thm2,combined",
        rows.iter().map(|r| {
            vec![
                r.quota.to_string(),
                r.other_quota.to_string(),
                r.switch.to_string(),
                fmt_float(r.floor),
                fmt_opt(r.two_set),
                fmt_float(r.combined),
            ]
        }),
    )
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    table(
        "sweep_value,method,mean_nmse_db,mean_wfc,trials_ok,trials_failed",
        rows.iter().map(|r| {
            vec![
                fmt_float(r.sweep_value),
                r.method.name().to_string(),
                fmt_float(r.mean_nmse_db),
                fmt_float(r.mean_wfc),
                r.trials_ok.to_string(),
                r.trials_failed.to_string(),
            ]
        }),
    )
}

pub fn opt_ratio_csv(rows: &[OptRatioRow]) -> String {
    table(
        "sweep_value,method,mean_wfc_ratio,min_wfc_ratio,trials",
        rows.iter().map(|r| {
            vec![
                fmt_float(r.sweep_value),
                r.method.name().to_string(),
                fmt_float(r.mean_ratio),
                fmt_float(r.min_ratio),
                r.trials.to_string(),
            ]
        }),
    )
}

/// One JSON document per line.
pub fn trials_jsonl(records: &[TrialRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_trials_jsonl(text: &str) -> Result<Vec<TrialRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Selection output with 1-based sensor indices.
#[derive(Serialize)]
pub struct SelectionDocument<'a> {
    pub method: &'a str,
    pub cost: &'a str,
    pub weight: &'a str,
    pub seed: u64,
    pub kept: Vec<Vec<usize>>,
    pub objective_set: Vec<usize>,
    pub trajectory: Vec<Step>,
    pub final_cost: f64,
    pub switch_iterations: Vec<usize>,
    pub feasible: bool,
    pub wfc: f64,
    pub bound: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl<'a> SelectionDocument<'a> {
    pub fn new(
        method: &'a str,
        cost: &'a str,
        weight: &'a str,
        seed: u64,
        result: &SelectionResult,
        wfc: f64,
        bound: BoundReport,
    ) -> Self {
        let shift = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        SelectionDocument {
            method,
            cost,
            weight,
            seed,
            kept: result.kept.iter().map(|s| shift(s)).collect(),
            objective_set: shift(&result.objective_set),
            trajectory: result
                .trajectory
                .iter()
                .map(|s| Step {
                    index: s.index + 1,
                    ..*s
                })
                .collect(),
            final_cost: result.final_cost,
            switch_iterations: result.switch_iterations.clone(),
            feasible: result.feasible,
            wfc,
            bound,
            wall_time_s: None,
        }
    }
}
