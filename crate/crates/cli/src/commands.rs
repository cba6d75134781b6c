//! The five pipeline commands. Each reads its prerequisites from the
//! output directory (or `--input`), computes, and writes fixed-name
//! artifacts, so stages can be rerun independently.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use flipnet::anomaly::{self, LabelOptions, LabelRecord};
use flipnet::features::{assemble_design, build_feature_rows, Encoder, EncodingSchema};
use flipnet::ingest::{self, Flip, Transaction};
use flipnet::regress::{fit_ols, RegressionFit};
use flipnet::rfcde::{cde_loss, fit_forest, CdeForest};
use flipnet::seeding;
use flipnet::synth::generate_market;
use flipnet::tradenet::{
    anomalous_subnetwork, build_network, edge_density, fit_power_law, global_clustering,
    hits_default, ks_two_sample, metric_report, sample_subnetwork_at, write_centrality_tsv,
    write_degree_tsv, BootstrapResult, DegreeMode, MetricReport, PowerLawOptions, TradeNetwork,
};
use flipnet::{Role, Usd};

use crate::artifacts::{self as art, ensure_out_dir};
use crate::config::RunConfig;
use crate::reports::{
    DiversityDigest, FinalReport, FitSummary, ForestSummary, HitsKsSummary, KsAggregate,
    NetDigest, NetworkDigest, NetworkReport, RoleDiversity, SubnetDigest, SubnetReport,
    ValidationSummary,
};

/// Generates a synthetic market and writes `transactions.csv` plus
/// `ground_truth.json`.
pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    ensure_out_dir(&config.out)?;
    let (transactions, truth) = generate_market(&config.synth)?;
    let path = art::artifact_path(&config.out, art::TRANSACTIONS_CSV);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    ingest::write_transactions_csv(BufWriter::new(file), &transactions)?;
    art::write_json(&config.out, art::GROUND_TRUTH_JSON, &truth)?;
    eprintln!(
        "synth: {} transactions, {} anomalous, written to {}",
        transactions.len(),
        truth.anomalous_transaction_ids.len(),
        config.out.display()
    );
    Ok(())
}

/// Loads and parses the input CSV, logging rejected rows to stderr.
/// Returns the accepted transactions and the reject count.
fn load_transactions(config: &RunConfig) -> Result<(Vec<Transaction>, usize)> {
    let path = config.input_path()?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let outcome = ingest::parse_transactions(BufReader::new(file))?;
    if !outcome.rejects.is_empty() {
        eprintln!(
            "warning: rejected {} malformed rows (first: row {}: {})",
            outcome.rejects.len(),
            outcome.rejects[0].row,
            outcome.rejects[0].reason
        );
    }
    Ok((outcome.transactions, outcome.rejects.len()))
}

/// Chronologically ordered flips (sale time, then sale transaction id).
fn ordered_flips(transactions: &[Transaction]) -> (Vec<Flip>, usize, usize) {
    let provenance = ingest::build_provenance(transactions);
    let mut flips = ingest::derive_flips(&provenance, transactions);
    flips.sort_by(|a, b| {
        (a.sale_time, &a.sale_transaction_id).cmp(&(b.sale_time, &b.sale_transaction_id))
    });
    (flips, provenance.chains.len(), provenance.breaks.len())
}

/// Fits the expected-profit regression and the residual-density forest.
pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    ensure_out_dir(&config.out)?;
    let (transactions, n_rejected) = load_transactions(config)?;
    let (flips, n_chains, n_breaks) = ordered_flips(&transactions);
    if flips.is_empty() {
        bail!("no flips could be derived from {} transactions", transactions.len());
    }

    let schema = EncodingSchema::from_transactions(&transactions);
    let dataset = build_feature_rows(&flips, &transactions);
    let design = assemble_design(&dataset.rows, &schema)?;
    let fit = fit_ols(&design.x, &design.y, &design.columns)?;
    let residuals = fit.residuals(&design.x, &design.y)?;
    let fitted: Vec<f64> = design
        .y
        .iter()
        .zip(residuals.iter())
        .map(|(y, r)| y - r)
        .collect();
    let resid: Vec<f64> = residuals.iter().copied().collect();

    // Residual-density forest on the predicted value, in-sample by default;
    // an optional held-out fraction yields a validation loss.
    let (forest, validation) = if config.cde_validation_fraction > 0.0 {
        let n = resid.len();
        let holdout_n = ((n as f64) * config.cde_validation_fraction).round() as usize;
        let mut rng = seeding::stream_rng(config.seed, 7);
        let mut holdout = seeding::sample_indices(&mut rng, n, holdout_n.clamp(1, n / 2));
        holdout.sort_unstable();
        let held: std::collections::HashSet<u32> = holdout.iter().copied().collect();
        let (mut x_tr, mut z_tr, mut x_ho, mut z_ho) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            if held.contains(&(i as u32)) {
                x_ho.push(fitted[i]);
                z_ho.push(resid[i]);
            } else {
                x_tr.push(fitted[i]);
                z_tr.push(resid[i]);
            }
        }
        let forest = fit_forest(&x_tr, &z_tr, &config.rfcde)?;
        let loss = cde_loss(&forest, &x_ho, &z_ho)?;
        let summary = ValidationSummary {
            fraction: config.cde_validation_fraction,
            holdout_n: z_ho.len(),
            cde_loss: loss,
        };
        (forest, Some(summary))
    } else {
        (fit_forest(&fitted, &resid, &config.rfcde)?, None)
    };
    if forest.degenerate {
        eprintln!("warning: all residuals identical; density forest is degenerate");
    }

    art::write_json(&config.out, art::ENCODING_SCHEMA_JSON, &schema)?;
    art::write_json(&config.out, art::REGRESSION_FIT_JSON, &fit)?;
    art::write_json(&config.out, art::CDE_FOREST_JSON, &forest)?;
    let summary = FitSummary {
        n_transactions: transactions.len(),
        n_rejected_rows: n_rejected,
        n_chains,
        n_provenance_breaks: n_breaks,
        n_flips: flips.len(),
        n_columns: design.columns.len(),
        r_squared: fit.r_squared,
        adjusted_r_squared: fit.adjusted_r_squared,
        residual_std_error: fit.residual_std_error,
        f_statistic: fit.f_statistic,
        forest: ForestSummary {
            n_trees: config.rfcde.n_trees,
            min_leaf_size: config.rfcde.min_leaf_size,
            n_basis: config.rfcde.n_basis,
            mean_leaf_count: forest.mean_leaf_count(),
            degenerate: forest.degenerate,
        },
        validation,
    };
    art::write_json(&config.out, art::FIT_SUMMARY_JSON, &summary)?;
    eprintln!(
        "fit: {} flips, {} columns, R² {:.4}, residual SE {:.2}",
        flips.len(),
        design.columns.len(),
        fit.r_squared,
        fit.residual_std_error
    );
    Ok(())
}

/// Scores every flip against the stored models and writes labels.
pub fn cmd_label(config: &RunConfig) -> Result<()> {
    ensure_out_dir(&config.out)?;
    let schema: EncodingSchema = art::read_json(&config.out, art::ENCODING_SCHEMA_JSON)?;
    let fit: RegressionFit = art::read_json(&config.out, art::REGRESSION_FIT_JSON)?;
    let forest: CdeForest = art::read_json(&config.out, art::CDE_FOREST_JSON)?;

    let (transactions, _) = load_transactions(config)?;
    let (flips, _, _) = ordered_flips(&transactions);
    let dataset = build_feature_rows(&flips, &transactions);
    let encoder = Encoder::new(&schema);
    let rows: Result<Vec<Vec<f64>>, _> = dataset.rows.iter().map(|r| encoder.encode(r)).collect();
    let rows = rows?;

    let opts = LabelOptions {
        threshold: config.threshold,
        loss_side: false,
    };
    let (labels, summary) = anomaly::label_all(&flips, &rows, &fit, &forest, &opts)?;

    let path = art::artifact_path(&config.out, art::LABELS_CSV);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    anomaly::write_labels_csv(BufWriter::new(file), &labels, &flips)?;
    art::write_json(&config.out, art::LABEL_SUMMARY_JSON, &summary)?;
    eprintln!(
        "label: {} of {} flips flagged at threshold {}",
        summary.n_flagged, summary.n_flips, config.threshold
    );
    Ok(())
}

fn net_tag(delta: Option<Usd>) -> String {
    match delta {
        None => "full".to_string(),
        Some(d) => format!("delta_{}", art::delta_tag(d)),
    }
}

fn write_net_tsvs(config: &RunConfig, net: &TradeNetwork, report: &MetricReport, tag: &str) -> Result<()> {
    for mode in DegreeMode::ALL {
        let path = art::artifact_path(&config.out, &art::degree_tsv(tag, mode.name()));
        let mut out = BufWriter::new(File::create(&path)?);
        write_degree_tsv(&mut out, net, mode)?;
        out.flush()?;
    }
    if let Some(scores) = &report.hits {
        let path = art::artifact_path(&config.out, &art::centrality_tsv(tag));
        let mut out = BufWriter::new(File::create(&path)?);
        write_centrality_tsv(&mut out, net, scores)?;
        out.flush()?;
    }
    Ok(())
}

/// Per-sample statistics gathered in one pass over the sample stream.
struct SampleStats {
    density: Option<f64>,
    clustering: Option<f64>,
    alpha: [Option<f64>; 3],
    hub_p: Option<f64>,
    authority_p: Option<f64>,
}

/// Builds networks, computes metrics, and runs the bootstrap battery.
pub fn cmd_net(config: &RunConfig) -> Result<()> {
    ensure_out_dir(&config.out)?;
    let (transactions, _) = load_transactions(config)?;
    let labels_text = art::read_required(&config.out, art::LABELS_CSV)?;
    let labels: Vec<LabelRecord> = anomaly::read_labels_csv(labels_text.as_bytes())?;

    let plaw = PowerLawOptions::default();
    let full = build_network(&transactions);
    let full_report = metric_report(&full, &plaw);
    {
        let path = art::artifact_path(&config.out, art::EDGES_FULL_TSV);
        let mut out = BufWriter::new(File::create(&path)?);
        full.write_edge_list_tsv(&mut out)?;
        out.flush()?;
    }
    write_net_tsvs(config, &full, &full_report, &net_tag(None))?;

    let mut subnets = Vec::new();
    for (delta_idx, &delta) in config.deltas.iter().enumerate() {
        let subnet = anomalous_subnetwork(&labels, &transactions, delta);
        let report = metric_report(&subnet, &plaw);
        {
            let path = art::artifact_path(&config.out, &art::edges_subnet_tsv(delta));
            let mut out = BufWriter::new(File::create(&path)?);
            subnet.write_edge_list_tsv(&mut out)?;
            out.flush()?;
        }
        write_net_tsvs(config, &subnet, &report, &net_tag(Some(delta)))?;

        let seed = seeding::derive_seed(config.seed, 1000 + delta_idx as u64);
        let (bootstrap, hits_ks) =
            bootstrap_battery(&full, &subnet, &report, config.bootstrap_samples, seed, &plaw);
        subnets.push(SubnetReport {
            delta_dollars: delta.to_dollars(),
            report,
            bootstrap,
            hits_ks,
        });
        eprintln!(
            "net: delta {} -> {} nodes, {} edges",
            art::delta_tag(delta),
            subnet.node_count(),
            subnet.edge_count()
        );
    }

    let report = NetworkReport {
        bootstrap_samples: config.bootstrap_samples,
        seed: config.seed,
        full: full_report,
        subnets,
    };
    art::write_json(&config.out, art::NETWORK_REPORT_JSON, &report)?;
    eprintln!(
        "net: full network {} nodes, {} edges",
        full.node_count(),
        full.edge_count()
    );
    Ok(())
}

/// One pass over node-matched samples computing every statistic, then
/// per-statistic empirical p-values against the subnet's observed values.
fn bootstrap_battery(
    host: &TradeNetwork,
    subnet: &TradeNetwork,
    observed: &MetricReport,
    count: usize,
    seed: u64,
    plaw: &PowerLawOptions,
) -> (Vec<BootstrapResult>, Option<HitsKsSummary>) {
    let n_nodes = subnet.node_count();
    if n_nodes < 2 || n_nodes > host.node_count() || count == 0 {
        return (Vec::new(), None);
    }
    let observed_hits = observed.hits.as_ref();

    let stats: Vec<SampleStats> = (0..count)
        .into_par_iter()
        .map(|i| {
            let sample = sample_subnetwork_at(host, n_nodes, seed, i);
            let degree_alpha = |mode: DegreeMode| {
                let seq: Vec<f64> = sample
                    .degree_sequence(mode)
                    .iter()
                    .map(|&d| d as f64)
                    .collect();
                fit_power_law(&seq, plaw.mode, plaw.xmin_policy)
                    .ok()
                    .map(|f| f.alpha)
            };
            let (hub_p, authority_p) = match (observed_hits, hits_default(&sample).ok()) {
                (Some(obs), Some(sample_scores)) => (
                    ks_two_sample(&obs.hub, &sample_scores.hub)
                        .ok()
                        .map(|k| k.p_value),
                    ks_two_sample(&obs.authority, &sample_scores.authority)
                        .ok()
                        .map(|k| k.p_value),
                ),
                _ => (None, None),
            };
            SampleStats {
                density: edge_density(&sample).ok(),
                clustering: global_clustering(&sample).ok(),
                alpha: [
                    degree_alpha(DegreeMode::In),
                    degree_alpha(DegreeMode::Out),
                    degree_alpha(DegreeMode::Total),
                ],
                hub_p,
                authority_p,
            }
        })
        .collect();

    let mut results = Vec::new();
    let mut push_stat = |name: &str, observed_value: Option<f64>, values: Vec<f64>| {
        let Some(obs) = observed_value else { return };
        let n_failed = count - values.len();
        match flipnet::tradenet::empirical_pvalue(obs, &values) {
            Ok(p) => results.push(BootstrapResult {
                statistic: name.to_string(),
                observed: obs,
                samples: values,
                empirical_pvalue: p,
                n_nodes,
                n_requested: count,
                n_failed,
                seed,
            }),
            Err(_) => eprintln!("warning: statistic {name} undefined on every sample"),
        }
    };

    push_stat(
        "edge_density",
        observed.edge_density,
        stats.iter().filter_map(|s| s.density).collect(),
    );
    push_stat(
        "global_clustering",
        observed.global_clustering,
        stats.iter().filter_map(|s| s.clustering).collect(),
    );
    for (k, mode) in DegreeMode::ALL.iter().enumerate() {
        let observed_alpha = observed
            .degree
            .iter()
            .find(|d| d.mode == *mode)
            .and_then(|d| d.power_law.as_ref())
            .map(|f| f.alpha);
        push_stat(
            &format!("alpha_{}", mode.name()),
            observed_alpha,
            stats.iter().filter_map(|s| s.alpha[k]).collect(),
        );
    }

    let hits_ks = observed_hits.map(|_| {
        let hub_ps: Vec<f64> = stats.iter().filter_map(|s| s.hub_p).collect();
        let auth_ps: Vec<f64> = stats.iter().filter_map(|s| s.authority_p).collect();
        HitsKsSummary {
            n_samples: hub_ps.len(),
            n_skipped: count - hub_ps.len(),
            hub: aggregate_ks(&hub_ps),
            authority: aggregate_ks(&auth_ps),
        }
    });

    (results, hits_ks)
}

fn aggregate_ks(ps: &[f64]) -> KsAggregate {
    if ps.is_empty() {
        return KsAggregate {
            max_p_value: 0.0,
            median_p_value: 0.0,
            share_below_001: 0.0,
        };
    }
    let mut sorted = ps.to_vec();
    sorted.sort_by(f64::total_cmp);
    KsAggregate {
        max_p_value: *sorted.last().unwrap(),
        median_p_value: sorted[sorted.len() / 2],
        share_below_001: sorted.iter().filter(|&&p| p < 0.001).count() as f64 / sorted.len() as f64,
    }
}

fn digest(report: &MetricReport) -> NetDigest {
    NetDigest {
        node_count: report.node_count,
        edge_count: report.edge_count,
        edge_density: report.edge_density,
        global_clustering: report.global_clustering,
        power_law_alpha: report
            .degree
            .iter()
            .filter_map(|d| d.power_law.as_ref().map(|f| (d.mode.name().to_string(), f.alpha)))
            .collect(),
        max_degree_over_n: report
            .degree
            .iter()
            .map(|d| (d.mode.name().to_string(), d.max_over_n))
            .collect(),
    }
}

/// Consolidates label and network artifacts into one digest plus
/// diversity TSVs.
pub fn cmd_report(config: &RunConfig) -> Result<()> {
    ensure_out_dir(&config.out)?;
    let labels: flipnet::anomaly::LabelSummary =
        art::read_json(&config.out, art::LABEL_SUMMARY_JSON)?;
    let network: NetworkReport = art::read_json(&config.out, art::NETWORK_REPORT_JSON)?;

    // Diversity needs the transactions; fall back to the synth output in
    // the artifact directory.
    let input = config
        .input
        .clone()
        .unwrap_or_else(|| art::artifact_path(&config.out, art::TRANSACTIONS_CSV));
    let file = File::open(&input)
        .with_context(|| format!("missing transactions CSV at {}", input.display()))?;
    let outcome = ingest::parse_transactions(BufReader::new(file))?;
    let transactions = outcome.transactions;

    let mut role_digests = Vec::new();
    for (role, tag) in [(Role::Seller, "seller"), (Role::Buyer, "buyer")] {
        let scores = ingest::diversity_all(role, &transactions);
        let path = art::artifact_path(&config.out, &art::diversity_tsv(tag));
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "user\trole\tentropy\tevents")?;
        for s in &scores {
            writeln!(out, "{}\t{}\t{}\t{}", s.user_id, s.role, s.entropy, s.event_count)?;
        }
        out.flush()?;

        let mut entropies: Vec<f64> = scores.iter().map(|s| s.entropy).collect();
        entropies.sort_by(f64::total_cmp);
        let n = entropies.len();
        role_digests.push(RoleDiversity {
            n_users: n,
            mean_entropy: if n > 0 {
                entropies.iter().sum::<f64>() / n as f64
            } else {
                0.0
            },
            median_entropy: if n > 0 { entropies[n / 2] } else { 0.0 },
            zero_entropy_fraction: if n > 0 {
                entropies.iter().filter(|&&e| e == 0.0).count() as f64 / n as f64
            } else {
                0.0
            },
        });
    }
    let buyer = role_digests.pop().unwrap();
    let seller = role_digests.pop().unwrap();

    let final_report = FinalReport {
        labels,
        network: NetworkDigest {
            full: digest(&network.full),
            subnets: network
                .subnets
                .iter()
                .map(|s| SubnetDigest {
                    delta_dollars: s.delta_dollars,
                    net: digest(&s.report),
                    bootstrap_pvalues: s
                        .bootstrap
                        .iter()
                        .map(|b| (b.statistic.clone(), b.empirical_pvalue))
                        .collect(),
                    hits_ks: s.hits_ks.clone(),
                })
                .collect(),
        },
        diversity: DiversityDigest { seller, buyer },
    };
    art::write_json(&config.out, art::REPORT_JSON, &final_report)?;
    eprintln!("report: written to {}", config.out.join(art::REPORT_JSON).display());
    Ok(())
}
