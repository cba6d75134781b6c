//! Batch toolkit for spotting anomalously profitable trades in a
//! peer-to-peer collectibles market.
//!
//! The pipeline has three stages:
//!
//! 1. **Ingest** ([`ingest`]): parse transaction logs, reconstruct
//!    per-collectible provenance chains, derive buy→sell *flips* with
//!    realized profits, and compute counterparty-diversity entropies.
//! 2. **Model** ([`features`], [`regress`], [`rfcde`], [`anomaly`]): fit a
//!    linear expected-profit model over collectible features, then model the
//!    conditional density of its residuals with a density-estimation forest.
//!    A flip is flagged when the probability of a residual at least as large
//!    as the observed one falls below a threshold.
//! 3. **Corroborate** ([`tradenet`]): build the directed who-sold-to-whom
//!    network, extract the subnetwork induced by flagged trades, and compare
//!    edge density, clustering, degree power laws, and HITS centralities
//!    against node-matched random subnetworks via bootstrap resampling.
//!
//! [`synth`] provides a seeded market generator with known ground truth so
//! the whole pipeline can be verified end to end without proprietary data.

pub mod anomaly;
pub mod features;
pub mod ingest;
pub mod money;
pub mod regress;
pub mod rfcde;
pub mod seeding;
pub mod synth;
pub mod tradenet;

pub use anomaly::{AnomalyLabel, LabelOptions, LabelSummary};
pub use features::{Dataset, Design, EncodingSchema, FeatureRow};
pub use ingest::{
    DiversityScore, Flip, ParseOutcome, PlayCategory, Provenance, ProvenanceChain, Role,
    Transaction,
};
pub use money::Usd;
pub use regress::RegressionFit;
pub use rfcde::{CdeForest, CdeForestParams, DensityEstimate};
pub use synth::{GroundTruth, MarketConfig};
pub use tradenet::{BootstrapResult, HitsScores, KsResult, MetricReport, TradeNetwork};
