//! Combines the profit model and the residual-density forest into per-flip
//! anomaly labels: a flip is flagged when its profit above expectation is
//! positive and the upper-tail probability of a residual that large falls
//! below the threshold.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Flip;
use crate::regress::{RegressError, RegressionFit};
use crate::rfcde::{CdeError, CdeForest};

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("threshold must lie in (0,1), got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Cde(#[from] CdeError),
    #[error("label csv error: {0}")]
    Csv(String),
}

/// Labeling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelOptions {
    /// Tail-probability threshold, in (0,1).
    pub threshold: f64,
    /// Also flag loss-side anomalies (pae < 0 with a small lower-tail
    /// probability). Off by default: only unusually *profitable* trades
    /// are flagged.
    pub loss_side: bool,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            threshold: 0.01,
            loss_side: false,
        }
    }
}

impl LabelOptions {
    pub fn validate(&self) -> Result<(), AnomalyError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(AnomalyError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Verdict for one flip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLabel {
    /// Index into the labeled flip slice.
    pub flip_index: usize,
    pub sale_transaction_id: String,
    /// p̂: model-expected profit, dollars.
    pub predicted_profit: f64,
    /// p: realized profit, dollars.
    pub realized_profit: f64,
    /// Profit above expectation, p − p̂.
    pub pae: f64,
    /// Pr[residual > pae] under the conditional density at p̂.
    pub tail_prob: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Labels one flip given its design row (full row or interceptless row,
/// per [`RegressionFit::predict`]).
pub fn label_flip(
    flip_index: usize,
    flip: &Flip,
    row: &[f64],
    fit: &RegressionFit,
    forest: &CdeForest,
    opts: &LabelOptions,
) -> Result<AnomalyLabel, AnomalyError> {
    opts.validate()?;
    let predicted = fit.predict(row)?;
    Ok(label_with_predicted(flip_index, flip, predicted, forest, opts)?)
}

fn label_with_predicted(
    flip_index: usize,
    flip: &Flip,
    predicted: f64,
    forest: &CdeForest,
    opts: &LabelOptions,
) -> Result<AnomalyLabel, CdeError> {
    let realized = flip.profit.to_dollars();
    let pae = realized - predicted;
    let density = forest.predict_density_1d(predicted)?;
    let tail_prob = density.tail_probability(pae);
    let mut flagged = pae > 0.0 && tail_prob < opts.threshold;
    if opts.loss_side && pae < 0.0 {
        // Lower tail: Pr[residual <= pae].
        flagged |= density.cdf(pae) < opts.threshold;
    }
    Ok(AnomalyLabel {
        flip_index,
        sale_transaction_id: flip.sale_transaction_id.clone(),
        predicted_profit: predicted,
        realized_profit: realized,
        pae,
        tail_prob,
        threshold: opts.threshold,
        flagged,
    })
}

/// Distribution summary of a labeling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub n_flips: u64,
    pub n_flagged: u64,
    pub flag_rate: f64,
    pub threshold: f64,
    pub pae_quantiles: PaeQuantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaeQuantiles {
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

/// Labels every flip. `rows` must align with `flips`; each row is the
/// flip's design row. Runs in parallel over flips.
pub fn label_all(
    flips: &[Flip],
    rows: &[Vec<f64>],
    fit: &RegressionFit,
    forest: &CdeForest,
    opts: &LabelOptions,
) -> Result<(Vec<AnomalyLabel>, LabelSummary), AnomalyError> {
    opts.validate()?;
    if flips.len() != rows.len() {
        return Err(AnomalyError::Csv(format!(
            "{} flips but {} design rows",
            flips.len(),
            rows.len()
        )));
    }
    let labels: Result<Vec<AnomalyLabel>, AnomalyError> = flips
        .par_iter()
        .zip(rows.par_iter())
        .enumerate()
        .map(|(i, (flip, row))| label_flip(i, flip, row, fit, forest, opts))
        .collect();
    let labels = labels?;
    let summary = summarize(&labels, opts.threshold);
    Ok((labels, summary))
}

pub fn summarize(labels: &[AnomalyLabel], threshold: f64) -> LabelSummary {
    let n = labels.len() as u64;
    let flagged = labels.iter().filter(|l| l.flagged).count() as u64;
    let mut paes: Vec<f64> = labels.iter().map(|l| l.pae).collect();
    paes.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        if paes.is_empty() {
            return 0.0;
        }
        let idx = ((paes.len() - 1) as f64 * p).round() as usize;
        paes[idx]
    };
    LabelSummary {
        n_flips: n,
        n_flagged: flagged,
        flag_rate: if n > 0 { flagged as f64 / n as f64 } else { 0.0 },
        threshold,
        pae_quantiles: PaeQuantiles {
            min: q(0.0),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p90: q(0.9),
            p99: q(0.99),
            max: q(1.0),
        },
    }
}

const LABEL_CSV_HEADER: [&str; 11] = [
    "transaction_id",
    "moment_unique_id",
    "seller_id",
    "buyer_id",
    "sale_price",
    "predicted_profit",
    "realized_profit",
    "pae",
    "tail_prob",
    "threshold",
    "flagged",
];

/// Writes labels joined with their flips as CSV (floats at full
/// round-trip precision).
pub fn write_labels_csv<W: Write>(
    out: W,
    labels: &[AnomalyLabel],
    flips: &[Flip],
) -> Result<(), AnomalyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABEL_CSV_HEADER)
        .map_err(|e| AnomalyError::Csv(e.to_string()))?;
    for label in labels {
        let flip = &flips[label.flip_index];
        w.write_record([
            label.sale_transaction_id.as_str(),
            flip.moment_unique_id.as_str(),
            flip.seller_id.as_str(),
            flip.buyer_id.as_str(),
            &flip.sold_price.to_string(),
            &format_f64(label.predicted_profit),
            &format_f64(label.realized_profit),
            &format_f64(label.pae),
            &format_f64(label.tail_prob),
            &format_f64(label.threshold),
            if label.flagged { "1" } else { "0" },
        ])
        .map_err(|e| AnomalyError::Csv(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| AnomalyError::Csv(e.to_string()))?
        .flush()
        .map_err(|e| AnomalyError::Csv(e.to_string()))?;
    Ok(())
}

/// Minimal view of a labels CSV needed by downstream network analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub transaction_id: String,
    pub flagged: bool,
}

pub fn read_labels_csv<R: Read>(source: R) -> Result<Vec<LabelRecord>, AnomalyError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| AnomalyError::Csv(e.to_string()))?
        .clone();
    let id_col = headers
        .iter()
        .position(|h| h == "transaction_id")
        .ok_or_else(|| AnomalyError::Csv("missing transaction_id column".into()))?;
    let flag_col = headers
        .iter()
        .position(|h| h == "flagged")
        .ok_or_else(|| AnomalyError::Csv("missing flagged column".into()))?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AnomalyError::Csv(e.to_string()))?;
        records.push(LabelRecord {
            transaction_id: record
                .get(id_col)
                .ok_or_else(|| AnomalyError::Csv("short row".into()))?
                .to_string(),
            flagged: record.get(flag_col) == Some("1"),
        });
    }
    Ok(records)
}

/// Shortest representation that round-trips the exact f64.
fn format_f64(v: f64) -> String {
    format!("{v}")
}
