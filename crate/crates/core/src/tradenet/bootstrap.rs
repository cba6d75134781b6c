//! Node-matched random subnetwork sampling and empirical significance.
//!
//! Every sample draws its own RNG stream from `(seed, sample index)`, so
//! results are identical whether samples are generated serially or in
//! parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seeding::{sample_indices, stream_rng};

use super::graph::TradeNetwork;
use super::NetError;

/// Subgraph induced by `nodes` (host node ids): the chosen nodes plus every
/// host edge with both endpoints chosen. Node names carry over; isolated
/// chosen nodes survive induction.
pub fn induced_subgraph(host: &TradeNetwork, nodes: &[u32]) -> TradeNetwork {
    let chosen: std::collections::HashSet<u32> = nodes.iter().copied().collect();
    let mut pairs: Vec<(&str, &str, u32)> = Vec::new();
    for &v in nodes {
        for (&nbr, &w) in host.out_neighbors(v).iter().zip(host.out_weights_of(v)) {
            if chosen.contains(&nbr) {
                pairs.push((host.node_name(v), host.node_name(nbr), w));
            }
        }
    }
    TradeNetwork::from_nodes_and_weighted_pairs(nodes.iter().map(|&v| host.node_name(v)), pairs)
}

/// Streaming iterator over seeded node-matched induced subnetworks.
pub struct SubnetSampler<'a> {
    host: &'a TradeNetwork,
    n_nodes: usize,
    seed: u64,
    count: usize,
    next: usize,
}

impl<'a> Iterator for SubnetSampler<'a> {
    type Item = TradeNetwork;

    fn next(&mut self) -> Option<TradeNetwork> {
        if self.next >= self.count {
            return None;
        }
        let net = sample_subnetwork_at(self.host, self.n_nodes, self.seed, self.next);
        self.next += 1;
        Some(net)
    }
}

/// The `index`-th subnetwork of the seeded sample stream. Equals the
/// corresponding element of [`sample_subnetworks`], so callers can fan the
/// stream out across threads.
pub fn sample_subnetwork_at(
    host: &TradeNetwork,
    n_nodes: usize,
    seed: u64,
    index: usize,
) -> TradeNetwork {
    let mut rng = stream_rng(seed, index as u64);
    let mut nodes = sample_indices(&mut rng, host.node_count(), n_nodes);
    nodes.sort_unstable();
    induced_subgraph(host, &nodes)
}

/// Stream of `count` induced subnetworks on uniformly random `n_nodes`-node
/// subsets (without replacement). Identical seed ⇒ identical sequence.
pub fn sample_subnetworks(
    host: &TradeNetwork,
    n_nodes: usize,
    count: usize,
    seed: u64,
) -> Result<SubnetSampler<'_>, NetError> {
    if n_nodes > host.node_count() {
        return Err(NetError::SampleTooLarge {
            requested: n_nodes,
            available: host.node_count(),
        });
    }
    Ok(SubnetSampler {
        host,
        n_nodes,
        seed,
        count,
        next: 0,
    })
}

/// Subnetworks built from `n_edges` uniformly random host edges (plus their
/// endpoints). Provided for size comparisons only; significance tests use
/// the node-matched sampler.
pub fn sample_subnetworks_by_edges(
    host: &TradeNetwork,
    n_edges: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TradeNetwork>, NetError> {
    if n_edges > host.edge_count() {
        return Err(NetError::SampleTooLarge {
            requested: n_edges,
            available: host.edge_count(),
        });
    }
    let edges: Vec<(u32, u32, u32)> = host.edges().collect();
    Ok((0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut idx = sample_indices(&mut rng, edges.len(), n_edges);
            idx.sort_unstable();
            TradeNetwork::from_weighted_pairs(idx.iter().map(|&e| {
                let (s, b, w) = edges[e as usize];
                (host.node_name(s), host.node_name(b), w)
            }))
        })
        .collect())
}

/// Add-one-smoothed upper-tail empirical p-value:
/// `(1 + #{samples ≥ observed}) / (|samples| + 1)`, always in (0, 1].
pub fn empirical_pvalue(observed: f64, samples: &[f64]) -> Result<f64, NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptySamples);
    }
    let at_least = samples.iter().filter(|&&s| s >= observed).count();
    Ok((1 + at_least) as f64 / (samples.len() + 1) as f64)
}

/// One bootstrap significance run: the observed statistic against its
/// distribution over node-matched random subnetworks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub statistic: String,
    pub observed: f64,
    /// Statistic values over the samples where it was defined.
    pub samples: Vec<f64>,
    pub empirical_pvalue: f64,
    pub n_nodes: usize,
    pub n_requested: usize,
    /// Samples where the statistic was undefined (e.g. too few tail
    /// points for an exponent fit).
    pub n_failed: usize,
    pub seed: u64,
}

/// Evaluates `statistic` over `count` node-matched samples in parallel and
/// reports the empirical p-value of `observed`. The closure returns `None`
/// where the statistic is undefined for a sample.
pub fn bootstrap_statistic<F>(
    host: &TradeNetwork,
    n_nodes: usize,
    count: usize,
    seed: u64,
    name: &str,
    observed: f64,
    statistic: F,
) -> Result<BootstrapResult, NetError>
where
    F: Fn(&TradeNetwork) -> Option<f64> + Sync,
{
    if n_nodes > host.node_count() {
        return Err(NetError::SampleTooLarge {
            requested: n_nodes,
            available: host.node_count(),
        });
    }
    let values: Vec<Option<f64>> = (0..count)
        .into_par_iter()
        .map(|i| statistic(&sample_subnetwork_at(host, n_nodes, seed, i)))
        .collect();
    let samples: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let n_failed = count - samples.len();
    let empirical_pvalue = empirical_pvalue(observed, &samples)?;
    Ok(BootstrapResult {
        statistic: name.to_string(),
        observed,
        samples,
        empirical_pvalue,
        n_nodes,
        n_requested: count,
        n_failed,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::root_rng;

    fn chain_host(n: usize) -> TradeNetwork {
        let names: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let pairs: Vec<(&str, &str)> = names
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
            .collect();
        TradeNetwork::from_pairs(pairs)
    }

    #[test]
    fn subset_sampling_is_uniform_without_replacement() {
        let mut rng = root_rng(3);
        let mut counts = vec![0u32; 10];
        for _ in 0..10_000 {
            let s = sample_indices(&mut rng, 10, 3);
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 3, "replacement in {s:?}");
            for v in s {
                counts[v as usize] += 1;
            }
        }
        // Each node expected in 3/10 of draws: 3000 ± a few hundred.
        for c in counts {
            assert!((2700..3300).contains(&c), "count {c}");
        }
    }

    #[test]
    fn full_size_sample_equals_host() {
        let host = chain_host(6);
        let mut sampler = sample_subnetworks(&host, 6, 3, 1).unwrap();
        let sample = sampler.next().unwrap();
        assert_eq!(sample.node_count(), host.node_count());
        assert_eq!(sample.edge_count(), host.edge_count());
    }

    #[test]
    fn sample_too_large_is_rejected() {
        let host = chain_host(4);
        assert!(matches!(
            sample_subnetworks(&host, 5, 1, 0),
            Err(NetError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn same_seed_same_sequence() {
        let host = chain_host(30);
        let a: Vec<usize> = sample_subnetworks(&host, 10, 5, 7)
            .unwrap()
            .map(|s| s.edge_count())
            .collect();
        let b: Vec<usize> = sample_subnetworks(&host, 10, 5, 7)
            .unwrap()
            .map(|s| s.edge_count())
            .collect();
        assert_eq!(a, b);
        let c: Vec<usize> = sample_subnetworks(&host, 10, 5, 8)
            .unwrap()
            .map(|s| s.edge_count())
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn induced_subgraph_keeps_isolated_nodes() {
        let host = chain_host(5);
        // Nodes 0 and 3 are not adjacent.
        let sub = induced_subgraph(&host, &[0, 3]);
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.edge_count(), 0);
    }

    #[test]
    fn empirical_pvalue_extremes() {
        let samples = vec![1.0, 2.0, 3.0, 4.0];
        // Observed below all samples: (1+4)/5 = 1.
        assert_eq!(empirical_pvalue(0.0, &samples).unwrap(), 1.0);
        // Observed above all samples: 1/5.
        assert_eq!(empirical_pvalue(9.0, &samples).unwrap(), 0.2);
        assert!(matches!(
            empirical_pvalue(1.0, &[]),
            Err(NetError::EmptySamples)
        ));
    }

    #[test]
    fn empirical_pvalue_at_median() {
        let samples: Vec<f64> = (0..999).map(|i| i as f64).collect();
        let p = empirical_pvalue(499.0, &samples).unwrap();
        assert!((p - 0.5).abs() < 0.01);
    }

    #[test]
    fn edge_matched_samples_have_exact_edge_counts() {
        let host = chain_host(50);
        let samples = sample_subnetworks_by_edges(&host, 12, 4, 3).unwrap();
        assert_eq!(samples.len(), 4);
        for s in &samples {
            assert_eq!(s.edge_count(), 12);
            assert!(s.node_count() <= 24);
        }
        assert!(matches!(
            sample_subnetworks_by_edges(&host, 1000, 1, 3),
            Err(NetError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn bootstrap_statistic_matches_sampler_stream() {
        let host = chain_host(40);
        let result = bootstrap_statistic(&host, 12, 8, 21, "edges", 1.0, |net| {
            Some(net.edge_count() as f64)
        })
        .unwrap();
        let streamed: Vec<f64> = sample_subnetworks(&host, 12, 8, 21)
            .unwrap()
            .map(|s| s.edge_count() as f64)
            .collect();
        assert_eq!(result.samples, streamed);
        assert_eq!(result.n_failed, 0);
    }
}
