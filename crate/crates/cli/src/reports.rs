//! Serialized report schemas written by `net` and `report`.

use serde::{Deserialize, Serialize};

use flipnet::anomaly::LabelSummary;
use flipnet::tradenet::{BootstrapResult, MetricReport};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_transactions: usize,
    pub n_rejected_rows: usize,
    pub n_chains: usize,
    pub n_provenance_breaks: usize,
    pub n_flips: usize,
    pub n_columns: usize,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: f64,
    pub forest: ForestSummary,
    pub validation: Option<ValidationSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestSummary {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    pub n_basis: usize,
    pub mean_leaf_count: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub fraction: f64,
    pub holdout_n: usize,
    pub cde_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkReport {
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub full: MetricReport,
    pub subnets: Vec<SubnetReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubnetReport {
    pub delta_dollars: f64,
    pub report: MetricReport,
    /// One entry per defined statistic: edge_density, global_clustering,
    /// alpha_in, alpha_out, alpha_total.
    pub bootstrap: Vec<BootstrapResult>,
    pub hits_ks: Option<HitsKsSummary>,
}

/// KS comparisons of the subnet's centrality distributions against each
/// sampled subnetwork's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitsKsSummary {
    pub n_samples: usize,
    /// Samples where HITS was undefined (no edges).
    pub n_skipped: usize,
    pub hub: KsAggregate,
    pub authority: KsAggregate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsAggregate {
    pub max_p_value: f64,
    pub median_p_value: f64,
    pub share_below_001: f64,
}

/// Consolidated run digest written by `report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub labels: LabelSummary,
    pub network: NetworkDigest,
    pub diversity: DiversityDigest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDigest {
    pub full: NetDigest,
    pub subnets: Vec<SubnetDigest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetDigest {
    pub node_count: usize,
    pub edge_count: usize,
    pub edge_density: Option<f64>,
    pub global_clustering: Option<f64>,
    /// (mode, alpha) for each degree mode with a defined fit.
    pub power_law_alpha: Vec<(String, f64)>,
    pub max_degree_over_n: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubnetDigest {
    pub delta_dollars: f64,
    pub net: NetDigest,
    /// (statistic, empirical p-value).
    pub bootstrap_pvalues: Vec<(String, f64)>,
    pub hits_ks: Option<HitsKsSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityDigest {
    pub seller: RoleDiversity,
    pub buyer: RoleDiversity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleDiversity {
    pub n_users: usize,
    pub mean_entropy: f64,
    pub median_entropy: f64,
    pub zero_entropy_fraction: f64,
}
