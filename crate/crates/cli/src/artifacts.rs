//! Fixed artifact filenames and typed load/store helpers. Every command
//! reads and writes only through these, so staged runs compose.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use flipnet::Usd;

pub const TRANSACTIONS_CSV: &str = "transactions.csv";
pub const GROUND_TRUTH_JSON: &str = "ground_truth.json";
pub const ENCODING_SCHEMA_JSON: &str = "encoding_schema.json";
pub const REGRESSION_FIT_JSON: &str = "regression_fit.json";
pub const CDE_FOREST_JSON: &str = "cde_forest.json";
pub const FIT_SUMMARY_JSON: &str = "fit_summary.json";
pub const LABELS_CSV: &str = "labels.csv";
pub const LABEL_SUMMARY_JSON: &str = "label_summary.json";
pub const NETWORK_REPORT_JSON: &str = "network_report.json";
pub const EDGES_FULL_TSV: &str = "edges_full.tsv";
pub const REPORT_JSON: &str = "report.json";

pub fn edges_subnet_tsv(delta: Usd) -> String {
    format!("edges_anomalous_delta_{}.tsv", delta_tag(delta))
}

pub fn degree_tsv(net_tag: &str, mode: &str) -> String {
    format!("degree_{mode}_{net_tag}.tsv")
}

pub fn centrality_tsv(net_tag: &str) -> String {
    format!("centrality_{net_tag}.tsv")
}

pub fn diversity_tsv(role: &str) -> String {
    format!("diversity_{role}.tsv")
}

/// Dollars with trailing zeros trimmed: 1, 500, 0.5.
pub fn delta_tag(delta: Usd) -> String {
    let cents = delta.cents();
    if cents % 100 == 0 {
        format!("{}", cents / 100)
    } else {
        let mut s = delta.to_string();
        while s.ends_with('0') {
            s.pop();
        }
        s
    }
}

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

pub fn artifact_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

pub fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let path = artifact_path(out, name);
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {name}"))?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(out: &Path, name: &str) -> Result<T> {
    let path = artifact_path(out, name);
    let text = fs::read_to_string(&path).with_context(|| {
        format!(
            "missing artifact {}; run the producing command first",
            path.display()
        )
    })?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_required(out: &Path, name: &str) -> Result<String> {
    let path = artifact_path(out, name);
    fs::read_to_string(&path).with_context(|| {
        format!(
            "missing artifact {}; run the producing command first",
            path.display()
        )
    })
}
