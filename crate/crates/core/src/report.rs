//! Plain-text effect tables.

use crate::bootstrap::{BootstrapResult, IntervalSummary};
use crate::engine::{Analysis, Effect};

pub const HAZARD_DECIMALS: usize = 1;
pub const SURVIVAL_DECIMALS: usize = 2;

const ROWS: [Effect; 5] = [
    Effect::Direct,
    Effect::IndirectMediator,
    Effect::IndirectDeath,
    Effect::Total,
    Effect::DirectPlusMediator,
];

/// Fixed-point rendering that never shows a negative zero.
pub fn format_number(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// `point (lower, upper)`.
pub fn format_estimate(point: f64, lower: f64, upper: f64, decimals: usize) -> String {
    format!(
        "{} ({}, {})",
        format_number(point, decimals),
        format_number(lower, decimals),
        format_number(upper, decimals)
    )
}

pub fn format_hazard(s: &IntervalSummary) -> String {
    format_estimate(s.point, s.lower, s.upper, HAZARD_DECIMALS)
}

pub fn format_survival(s: &IntervalSummary) -> String {
    format_estimate(s.point, s.lower, s.upper, SURVIVAL_DECIMALS)
}

fn block_title(analysis: Analysis) -> &'static str {
    match analysis {
        Analysis::CompetingRisks => "With competing risks",
        Analysis::ConditionalOnSurvival => "Without competing risks",
    }
}

/// One row per effect with a hazard and a survival column for each result,
/// side by side. Effects a result does not estimate are shown as `-`.
pub fn render_table(results: &[BootstrapResult]) -> String {
    let mut out = String::new();
    if let Some(first) = results.first() {
        out.push_str(&format!(
            "Exposure contrast: {} (reference) vs {} (comparison); {}% bootstrap intervals\n\n",
            first.contrast.a_ref,
            first.contrast.a_cmp,
            format_number(first.ci_level * 100.0, 0)
        ));
    }

    let mut table: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Effect".to_string()];
    for _ in results {
        header.push("Hazard difference per 100,000 PY".into());
        header.push("Survival probability difference (%)".into());
    }
    table.push(header);
    for effect in ROWS {
        let mut row = vec![effect.description().to_string()];
        for r in results {
            match r.get(effect) {
                Some(e) => {
                    row.push(format_hazard(&e.hazard_diff));
                    row.push(format_survival(&e.surv_prob_diff));
                }
                None => {
                    row.push("-".into());
                    row.push("-".into());
                }
            }
        }
        table.push(row);
    }

    let columns = table[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let sep = "   ";

    let mut titles = format!("{:w$}", "", w = widths[0]);
    for (j, r) in results.iter().enumerate() {
        let span = widths[1 + 2 * j] + sep.len() + widths[2 + 2 * j];
        titles.push_str(sep);
        titles.push_str(&format!("{:span$}", block_title(r.analysis)));
    }
    out.push_str(titles.trim_end());
    out.push('\n');

    for row in &table {
        let line = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:w$}"))
            .collect::<Vec<_>>()
            .join(sep);
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
