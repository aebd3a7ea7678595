//! Accuracy, expectation-compliance metrics, and table rendering.
//!
//! Accuracies are kept at full precision internally and rounded to one
//! decimal (half away from zero) only when rendered.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::perturb::{PerturbationSetting, PioChoice};
use crate::scorer::ScoreMatrix;

/// One instance's scores, keyed by instance id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub scores: Vec<f64>,
}

/// Per-instance score rows for one evaluation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionFile {
    pub rows: Vec<PredictionRow>,
}

impl PredictionFile {
    /// Pairs a score matrix with its dataset's ids.
    pub fn from_matrix(d: &Dataset, m: &ScoreMatrix) -> Self {
        PredictionFile {
            rows: d
                .instances
                .iter()
                .zip(&m.rows)
                .map(|(inst, row)| PredictionRow {
                    id: inst.id.clone(),
                    scores: row.clone(),
                })
                .collect(),
        }
    }
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionFile> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    read_predictions(BufReader::new(file), &display)
}

pub fn read_predictions(reader: impl Read, name: &str) -> Result<PredictionFile> {
    let reader = BufReader::new(reader);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let row: PredictionRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if row.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation(format!(
                "prediction row {:?} contains a non-finite score",
                row.id
            )));
        }
        rows.push(row);
    }
    Ok(PredictionFile { rows })
}

pub fn save_predictions(p: &PredictionFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    write_predictions(p, &mut w, &display)?;
    w.flush().map_err(|e| Error::io(&display, e))
}

pub fn write_predictions(p: &PredictionFile, writer: &mut impl Write, name: &str) -> Result<()> {
    for row in &p.rows {
        let line = serde_json::to_string(row).map_err(|e| Error::Validation(e.to_string()))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(name, e))?;
    }
    Ok(())
}

/// Index of the row maximum; ties break to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Aligns prediction rows to dataset order, enforcing id-set equality and
/// per-row length. Errors name the offending id.
fn align<'a>(preds: &'a PredictionFile, gold: &Dataset) -> Result<Vec<&'a [f64]>> {
    let mut by_id: HashMap<&str, &PredictionRow> = HashMap::with_capacity(preds.rows.len());
    for row in &preds.rows {
        if by_id.insert(row.id.as_str(), row).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction id {:?}",
                row.id
            )));
        }
    }
    let mut aligned = Vec::with_capacity(gold.len());
    for inst in &gold.instances {
        let row = by_id.remove(inst.id.as_str()).ok_or_else(|| {
            Error::Validation(format!("no prediction row for instance {:?}", inst.id))
        })?;
        if row.scores.len() != inst.option_count() {
            return Err(Error::Validation(format!(
                "prediction row {:?} has {} scores but the instance has {} options",
                inst.id,
                row.scores.len(),
                inst.option_count()
            )));
        }
        aligned.push(row.scores.as_slice());
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(Error::Validation(format!(
            "prediction id {extra:?} does not appear in the gold dataset"
        )));
    }
    Ok(aligned)
}

/// Percentage of instances whose argmax score (ties to the lowest index)
/// lands on the gold option.
pub fn accuracy(preds: &PredictionFile, gold: &Dataset) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Validation(
            "cannot compute accuracy over an empty dataset".into(),
        ));
    }
    let aligned = align(preds, gold)?;
    let correct = aligned
        .iter()
        .zip(&gold.instances)
        .filter(|(row, inst)| argmax_lowest(row) == inst.gold)
        .count();
    Ok(correct as f64 / gold.len() as f64 * 100.0)
}

/// Outcome of the monotonicity probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Percentage of all instances answered correctly under Original but
    /// incorrectly under PIO.
    pub violation_rate: f64,
    /// Percentage of those violations where the chosen option is exactly
    /// the PIO-perturbed index.
    pub echo_attraction_rate: f64,
}

/// Compares Original and PIO predictions instance by instance.
pub fn monotonicity_check(
    orig_preds: &PredictionFile,
    pio_preds: &PredictionFile,
    gold: &Dataset,
    pio_choices: &[PioChoice],
) -> Result<MonotonicityReport> {
    if gold.is_empty() {
        return Err(Error::Validation(
            "cannot run the monotonicity check on an empty dataset".into(),
        ));
    }
    let orig = align(orig_preds, gold)?;
    let pio = align(pio_preds, gold)?;
    let mut perturbed_index: HashMap<&str, usize> = HashMap::with_capacity(pio_choices.len());
    for c in pio_choices {
        perturbed_index.insert(c.id.as_str(), c.perturbed_option_index);
    }

    let mut violations = 0usize;
    let mut echoes = 0usize;
    for ((inst, orig_row), pio_row) in gold.instances.iter().zip(&orig).zip(&pio) {
        let perturbed = *perturbed_index.get(inst.id.as_str()).ok_or_else(|| {
            Error::Validation(format!("no PIO choice recorded for instance {:?}", inst.id))
        })?;
        let orig_pick = argmax_lowest(orig_row);
        let pio_pick = argmax_lowest(pio_row);
        if orig_pick == inst.gold && pio_pick != inst.gold {
            violations += 1;
            if pio_pick == perturbed {
                echoes += 1;
            }
        }
    }

    let violation_rate = violations as f64 / gold.len() as f64 * 100.0;
    let echo_attraction_rate = if violations == 0 {
        0.0
    } else {
        echoes as f64 / violations as f64 * 100.0
    };
    Ok(MonotonicityReport {
        violation_rate,
        echo_attraction_rate,
    })
}

/// Accuracy under one setting, with the direction a well-behaved model
/// should move it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettingResult {
    pub setting: PerturbationSetting,
    pub accuracy: f64,
}

impl SettingResult {
    pub fn higher_is_better(&self) -> bool {
        self.setting.higher_is_better()
    }
}

/// Per-setting accuracies plus the expectation-compliance metrics for one
/// model.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub results: Vec<SettingResult>,
    pub monotonicity: Option<MonotonicityReport>,
    /// Accuracy minus chance under No Option, when that setting was run.
    pub sanity_margin_no: Option<f64>,
    /// Accuracy minus chance under No Question, when that setting was run.
    pub sanity_margin_nq: Option<f64>,
    /// Accuracy minus chance under No Context, when that setting was run.
    pub reading_margin: Option<f64>,
}

impl EvalReport {
    pub fn accuracy_for(&self, setting: PerturbationSetting) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.setting == setting)
            .map(|r| r.accuracy)
    }
}

/// Chance-level accuracy for a dataset: the mean of `100 / k` over
/// instances, which reduces to `100 / k` when every instance has the same
/// option count.
pub fn chance_level(gold: &Dataset) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    gold.instances
        .iter()
        .map(|i| 100.0 / i.option_count() as f64)
        .sum::<f64>()
        / gold.len() as f64
}

/// True when the No Option setting produces per-option inputs that are all
/// identical within every instance (shared-context datasets), making the
/// setting uninformative. Such datasets render a dash in the NO column.
pub fn no_setting_inapplicable(gold: &Dataset) -> bool {
    !gold.is_empty()
        && gold.instances.iter().all(|inst| {
            inst.options
                .iter()
                .all(|opt| opt.context == inst.options[0].context)
        })
}

/// Assembles the compliance report from per-setting accuracies. Original
/// must be present; margins are filled in for whichever of NO, NQ, NC were
/// run.
pub fn compliance_report(
    model: impl Into<String>,
    gold: &Dataset,
    accuracies: &[(PerturbationSetting, f64)],
    monotonicity: Option<MonotonicityReport>,
) -> Result<EvalReport> {
    let mut results = Vec::new();
    for setting in PerturbationSetting::ALL {
        if let Some(&(_, acc)) = accuracies.iter().find(|(s, _)| *s == setting) {
            results.push(SettingResult {
                setting,
                accuracy: acc,
            });
        }
    }
    if results
        .iter()
        .all(|r| r.setting != PerturbationSetting::Original)
    {
        return Err(Error::Validation(
            "a compliance report requires the Original setting".into(),
        ));
    }
    let chance = chance_level(gold);
    let margin = |setting| {
        results
            .iter()
            .find(|r| r.setting == setting)
            .map(|r| r.accuracy - chance)
    };
    Ok(EvalReport {
        model: model.into(),
        monotonicity,
        sanity_margin_no: margin(PerturbationSetting::No),
        sanity_margin_nq: margin(PerturbationSetting::Nq),
        reading_margin: margin(PerturbationSetting::Nc),
        results,
    })
}

/// Output format for rendered reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format {other:?}; expected tsv or markdown")),
        }
    }
}

/// One accuracy cell: one decimal, rounding half away from zero.
pub fn format_accuracy(x: f64) -> String {
    format!("{:.1}", (x * 10.0).round() / 10.0)
}

fn column_header(setting: PerturbationSetting) -> String {
    let arrow = if setting.higher_is_better() {
        "\u{2191}"
    } else {
        "\u{2193}"
    };
    format!("{} ({arrow})", setting.label())
}

/// Renders one row per report. Columns are the union of the settings
/// present across rows, in O, PIO, NO, NQ, NC order; a setting missing from
/// a row renders as a dash.
pub fn render_table(reports: &[EvalReport], format: ReportFormat) -> String {
    let columns: Vec<PerturbationSetting> = PerturbationSetting::ALL
        .into_iter()
        .filter(|&s| {
            s == PerturbationSetting::Original
                || reports.iter().any(|r| r.accuracy_for(s).is_some())
        })
        .collect();

    let header: Vec<String> = std::iter::once("Model".to_string())
        .chain(columns.iter().map(|&s| column_header(s)))
        .collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            std::iter::once(r.model.clone())
                .chain(columns.iter().map(|&s| {
                    r.accuracy_for(s)
                        .map(format_accuracy)
                        .unwrap_or_else(|| "-".to_string())
                }))
                .collect()
        })
        .collect();

    match format {
        ReportFormat::Tsv => {
            let mut out = String::new();
            out.push_str(&header.join("\t"));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| ");
            out.push_str(&header.join(" | "));
            out.push_str(" |\n|");
            for _ in 0..header.len() {
                out.push_str("---|");
            }
            out.push('\n');
            for row in rows {
                out.push_str("| ");
                out.push_str(&row.join(" | "));
                out.push_str(" |\n");
            }
            out
        }
    }
}

/// Renders a single report: its one-row table followed by the compliance
/// metrics that were computed. Pure: identical input gives identical bytes.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut out = render_table(std::slice::from_ref(report), format);
    let mut metrics: Vec<(String, String)> = Vec::new();
    if let Some(m) = &report.monotonicity {
        metrics.push((
            "Monotonicity violations (%)".to_string(),
            format_accuracy(m.violation_rate),
        ));
        metrics.push((
            "Echo attraction (%)".to_string(),
            format_accuracy(m.echo_attraction_rate),
        ));
    }
    if let Some(v) = report.sanity_margin_no {
        metrics.push(("Sanity margin (NO)".to_string(), format_accuracy(v)));
    }
    if let Some(v) = report.sanity_margin_nq {
        metrics.push(("Sanity margin (NQ)".to_string(), format_accuracy(v)));
    }
    if let Some(v) = report.reading_margin {
        metrics.push(("Reading margin (NC)".to_string(), format_accuracy(v)));
    }
    if !metrics.is_empty() {
        out.push('\n');
        for (name, value) in metrics {
            match format {
                ReportFormat::Tsv => out.push_str(&format!("{name}\t{value}\n")),
                ReportFormat::Markdown => out.push_str(&format!("{name}: {value}\n")),
            }
        }
    }
    out
}
