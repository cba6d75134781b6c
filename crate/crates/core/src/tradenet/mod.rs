//! Directed trade-network construction and comparative analysis: edge
//! density, global clustering, degree power laws, HITS centralities, and
//! bootstrap significance against node-matched random subnetworks.

mod bootstrap;
mod graph;
mod hits;
mod ks;
mod powerlaw;

pub use bootstrap::{
    bootstrap_statistic, empirical_pvalue, induced_subgraph, sample_subnetwork_at,
    sample_subnetworks,
    sample_subnetworks_by_edges, BootstrapResult, SubnetSampler,
};
pub use graph::{
    anomalous_subnetwork, build_network, build_network_where, edge_density, global_clustering,
    DegreeMode, TradeNetwork,
};
pub use hits::{hits, hits_default, HitsScores, DEFAULT_HITS_MAX_ITER, DEFAULT_HITS_TOL};
pub use ks::{kolmogorov_sf, ks_two_sample, KsResult};
pub use powerlaw::{
    fit_double_power_law, fit_power_law, hurwitz_zeta, DoublePowerLawFit, PowerLawFit,
    PowerLawMode, XminPolicy, MIN_DOUBLE_POINTS, MIN_TAIL_POINTS,
};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("too few nodes: need {needed}, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("no connected triples in the undirected projection")]
    NoTriples,
    #[error("too few tail points: need {needed}, got {got}")]
    TooFewTailPoints { needed: usize, got: usize },
    #[error("network has no edges")]
    NoEdges,
    #[error("sample of {requested} exceeds available {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("no bootstrap samples")]
    EmptySamples,
    #[error("empty sample")]
    EmptySample,
}

/// Degree statistics for one direction convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub mode: DegreeMode,
    pub sequence: Vec<u32>,
    pub max: u32,
    /// Max degree as a fraction of the node count.
    pub max_over_n: f64,
    /// MLE power-law fit of the degree tail, when enough tail points exist.
    pub power_law: Option<PowerLawFit>,
}

/// Full metric battery for one network. Metrics that are undefined on the
/// network (too few nodes, no triples, no edges) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub edge_density: Option<f64>,
    pub global_clustering: Option<f64>,
    pub degree: Vec<DegreeStats>,
    pub hits: Option<HitsScores>,
}

/// Power-law settings used by [`metric_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawOptions {
    pub mode: PowerLawMode,
    pub xmin_policy: XminPolicy,
}

impl Default for PowerLawOptions {
    fn default() -> Self {
        PowerLawOptions {
            mode: PowerLawMode::Continuous,
            xmin_policy: XminPolicy::ScanKs,
        }
    }
}

/// Computes the full metric battery, degrading gracefully on degenerate
/// networks.
pub fn metric_report(net: &TradeNetwork, plaw: &PowerLawOptions) -> MetricReport {
    let degree = DegreeMode::ALL
        .iter()
        .map(|&mode| {
            let sequence = net.degree_sequence(mode);
            let max = sequence.iter().copied().max().unwrap_or(0);
            let data: Vec<f64> = sequence.iter().map(|&d| d as f64).collect();
            let power_law = fit_power_law(&data, plaw.mode, plaw.xmin_policy).ok();
            DegreeStats {
                mode,
                max,
                max_over_n: if sequence.is_empty() {
                    0.0
                } else {
                    max as f64 / sequence.len() as f64
                },
                sequence,
                power_law,
            }
        })
        .collect();
    MetricReport {
        node_count: net.node_count(),
        edge_count: net.edge_count(),
        edge_density: edge_density(net).ok(),
        global_clustering: global_clustering(net).ok(),
        degree,
        hits: hits_default(net).ok(),
    }
}

/// Writes a degree sequence as TSV (`user<TAB>degree`), for plotting.
pub fn write_degree_tsv<W: Write>(
    out: &mut W,
    net: &TradeNetwork,
    mode: DegreeMode,
) -> std::io::Result<()> {
    writeln!(out, "user\tdegree")?;
    for (id, d) in net.degree_sequence(mode).iter().enumerate() {
        writeln!(out, "{}\t{}", net.node_name(id as u32), d)?;
    }
    Ok(())
}

/// Writes hub and authority vectors as TSV (`user<TAB>hub<TAB>authority`).
pub fn write_centrality_tsv<W: Write>(
    out: &mut W,
    net: &TradeNetwork,
    scores: &HitsScores,
) -> std::io::Result<()> {
    writeln!(out, "user\thub\tauthority")?;
    for id in 0..net.node_count() {
        writeln!(
            out,
            "{}\t{}\t{}",
            net.node_name(id as u32),
            scores.hub[id],
            scores.authority[id]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_report_on_triangle() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a")]);
        let report = metric_report(&net, &PowerLawOptions::default());
        assert_eq!(report.node_count, 3);
        assert_eq!(report.edge_count, 3);
        assert_eq!(report.edge_density, Some(0.5));
        assert_eq!(report.global_clustering, Some(1.0));
        assert!(report.hits.is_some());
        // Tails of 3 observations are too small for a power-law fit.
        assert!(report.degree.iter().all(|d| d.power_law.is_none()));
    }

    #[test]
    fn metric_report_on_empty_network() {
        let net = TradeNetwork::from_pairs(Vec::<(&str, &str)>::new());
        let report = metric_report(&net, &PowerLawOptions::default());
        assert_eq!(report.node_count, 0);
        assert_eq!(report.edge_density, None);
        assert_eq!(report.global_clustering, None);
        assert!(report.hits.is_none());
    }

    #[test]
    fn report_serializes() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c")]);
        let report = metric_report(&net, &PowerLawOptions::default());
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }
}
