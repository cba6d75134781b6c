//! Run configuration: built-in defaults, overridden by command-line flags,
//! overridden in turn by an optional JSON config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use flipnet::rfcde::CdeForestParams;
use flipnet::synth::MarketConfig;
use flipnet::Usd;

pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_DELTAS_DOLLARS: [i64; 3] = [1, 500, 1000];
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 20_000;
pub const DEFAULT_SEED: u64 = 42;

/// Flags shared by every subcommand. A `--config` file overrides flags.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Input transactions CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory for artifacts (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Tail-probability threshold for flagging, in (0,1).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Minimum sale price (dollars) for an anomalous subnetwork; repeatable.
    #[arg(long = "delta")]
    pub deltas: Vec<f64>,
    /// Density-forest tree count.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Density-forest minimum leaf size.
    #[arg(long = "min-leaf")]
    pub min_leaf: Option<usize>,
    /// Density-forest basis size for the split criterion.
    #[arg(long)]
    pub basis: Option<usize>,
    /// Bootstrap sample count for network significance tests.
    #[arg(long = "bootstrap-samples")]
    pub bootstrap_samples: Option<usize>,
    /// Root seed; every random choice in the pipeline derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON config file; values here override command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Optional JSON overrides, all fields optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    threshold: Option<f64>,
    deltas: Option<Vec<f64>>,
    trees: Option<usize>,
    min_leaf: Option<usize>,
    basis: Option<usize>,
    bootstrap_samples: Option<usize>,
    seed: Option<u64>,
    /// Fraction of rows held out of density-forest training for a
    /// validation loss; 0 trains on all residuals.
    cde_validation_fraction: Option<f64>,
    synth: Option<PartialSynth>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSynth {
    n_users: Option<usize>,
    n_moments: Option<usize>,
    n_players: Option<usize>,
    n_sets: Option<usize>,
    time_span_days: Option<u32>,
    activity_exponent: Option<f64>,
    copies_per_moment_max: Option<usize>,
    mean_chain_len: Option<f64>,
    max_chain_len: Option<usize>,
    noise_sigma: Option<f64>,
    price_mean_log: Option<f64>,
    price_sigma_log: Option<f64>,
    price_min: Option<f64>,
    price_max: Option<f64>,
    anomaly_count: Option<usize>,
    inflation_factor_range: Option<(f64, f64)>,
    collusion_pair_count: Option<usize>,
}

/// Synth-only flags.
#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub moments: Option<usize>,
    #[arg(long)]
    pub players: Option<usize>,
    /// Anomalous sales to inject.
    #[arg(long)]
    pub anomalies: Option<usize>,
    #[arg(long = "collusion-pairs")]
    pub collusion_pairs: Option<usize>,
}

/// Fully resolved configuration for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub threshold: f64,
    pub deltas: Vec<Usd>,
    pub rfcde: CdeForestParams,
    pub cde_validation_fraction: f64,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub synth: MarketConfig,
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs, synth_args: Option<&SynthArgs>) -> Result<RunConfig> {
        let file = match &common.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };

        let seed = file.seed.or(common.seed).unwrap_or(DEFAULT_SEED);
        let threshold = file
            .threshold
            .or(common.threshold)
            .unwrap_or(DEFAULT_THRESHOLD);

        let deltas_dollars: Vec<f64> = file.deltas.unwrap_or_else(|| {
            if common.deltas.is_empty() {
                DEFAULT_DELTAS_DOLLARS.iter().map(|&d| d as f64).collect()
            } else {
                common.deltas.clone()
            }
        });
        let mut deltas = Vec::with_capacity(deltas_dollars.len());
        // The negated comparison intentionally rejects NaN deltas.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        for d in deltas_dollars {
            if !(d > 0.0) {
                bail!("delta values must be positive, got {d}");
            }
            deltas.push(Usd::from_dollars_f64(d));
        }
        deltas.sort_unstable();
        deltas.dedup();

        if !(threshold > 0.0 && threshold < 1.0) {
            bail!("threshold must lie in (0,1), got {threshold}");
        }

        let mut rfcde = CdeForestParams {
            rng_seed: seed,
            ..CdeForestParams::default()
        };
        if let Some(t) = file.trees.or(common.trees) {
            rfcde.n_trees = t;
        }
        if let Some(m) = file.min_leaf.or(common.min_leaf) {
            rfcde.min_leaf_size = m;
        }
        if let Some(b) = file.basis.or(common.basis) {
            rfcde.n_basis = b;
        }

        let cde_validation_fraction = file.cde_validation_fraction.unwrap_or(0.0);
        if !(0.0..0.9).contains(&cde_validation_fraction) {
            bail!("cde_validation_fraction must lie in [0, 0.9)");
        }

        let mut synth = MarketConfig {
            rng_seed: seed,
            ..MarketConfig::default()
        };
        if let Some(args) = synth_args {
            if let Some(v) = args.users {
                synth.n_users = v;
            }
            if let Some(v) = args.moments {
                synth.n_moments = v;
            }
            if let Some(v) = args.players {
                synth.n_players = v;
            }
            if let Some(v) = args.anomalies {
                synth.anomaly_spec.count = v;
            }
            if let Some(v) = args.collusion_pairs {
                synth.anomaly_spec.collusion_pair_count = v;
            }
        }
        if let Some(p) = &file.synth {
            apply_partial_synth(&mut synth, p);
        }

        Ok(RunConfig {
            input: file.input.or_else(|| common.input.clone()),
            out: common.out.clone(),
            threshold,
            deltas,
            rfcde,
            cde_validation_fraction,
            bootstrap_samples: file
                .bootstrap_samples
                .or(common.bootstrap_samples)
                .unwrap_or(DEFAULT_BOOTSTRAP_SAMPLES),
            seed,
            synth,
        })
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .context("no --input transactions CSV given (flag or config file)")
    }
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
}

fn apply_partial_synth(synth: &mut MarketConfig, p: &PartialSynth) {
    if let Some(v) = p.n_users {
        synth.n_users = v;
    }
    if let Some(v) = p.n_moments {
        synth.n_moments = v;
    }
    if let Some(v) = p.n_players {
        synth.n_players = v;
    }
    if let Some(v) = p.n_sets {
        synth.n_sets = v;
    }
    if let Some(v) = p.time_span_days {
        synth.time_span_days = v;
    }
    if let Some(v) = p.activity_exponent {
        synth.activity_exponent = v;
    }
    if let Some(v) = p.copies_per_moment_max {
        synth.copies_per_moment_max = v;
    }
    if let Some(v) = p.mean_chain_len {
        synth.mean_chain_len = v;
    }
    if let Some(v) = p.max_chain_len {
        synth.max_chain_len = v;
    }
    if let Some(v) = p.noise_sigma {
        synth.noise_sigma = v;
    }
    if let Some(v) = p.price_mean_log {
        synth.price_model.mean_log = v;
    }
    if let Some(v) = p.price_sigma_log {
        synth.price_model.sigma_log = v;
    }
    if let Some(v) = p.price_min {
        synth.price_model.min_price = v;
    }
    if let Some(v) = p.price_max {
        synth.price_model.max_price = v;
    }
    if let Some(v) = p.anomaly_count {
        synth.anomaly_spec.count = v;
    }
    if let Some(v) = p.inflation_factor_range {
        synth.anomaly_spec.inflation_factor_range = v;
    }
    if let Some(v) = p.collusion_pair_count {
        synth.anomaly_spec.collusion_pair_count = v;
    }
}
