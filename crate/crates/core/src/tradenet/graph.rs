//! Simple directed trade network: edge (u,v) iff u sold at least one
//! collectible to v. Parallel trades collapse to one edge; multiplicities
//! are kept as weights but ignored by every metric.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anomaly::LabelRecord;
use crate::ingest::Transaction;
use crate::money::Usd;

use super::NetError;

/// Immutable directed simple graph over user ids, with adjacency kept in
/// both directions for O(deg) traversal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeNetwork {
    names: Vec<String>,
    out_adj: Vec<Vec<u32>>,
    in_adj: Vec<Vec<u32>>,
    /// Trade count per out-edge, aligned with `out_adj`.
    out_weights: Vec<Vec<u32>>,
    n_edges: usize,
}

impl TradeNetwork {
    /// Builds from an explicit node set plus (seller, buyer, multiplicity)
    /// triples. Node ids follow first-appearance order (explicit nodes
    /// first); edgeless explicit nodes are kept; self-pairs are ignored.
    pub fn from_nodes_and_weighted_pairs<'a, N, I>(nodes: N, pairs: I) -> TradeNetwork
    where
        N: IntoIterator<Item = &'a str>,
        I: IntoIterator<Item = (&'a str, &'a str, u32)>,
    {
        struct Interner {
            names: Vec<String>,
            ids: HashMap<String, u32>,
        }
        impl Interner {
            fn get(&mut self, name: &str) -> u32 {
                if let Some(&id) = self.ids.get(name) {
                    return id;
                }
                let id = self.names.len() as u32;
                self.names.push(name.to_string());
                self.ids.insert(name.to_string(), id);
                id
            }
        }
        let mut interner = Interner {
            names: Vec::new(),
            ids: HashMap::new(),
        };
        for node in nodes {
            interner.get(node);
        }
        let mut weights: HashMap<(u32, u32), u32> = HashMap::new();
        for (seller, buyer, count) in pairs {
            if seller == buyer {
                continue;
            }
            let s = interner.get(seller);
            let b = interner.get(buyer);
            *weights.entry((s, b)).or_insert(0) += count;
        }

        let n = interner.names.len();
        let mut edges: Vec<((u32, u32), u32)> = weights.into_iter().collect();
        edges.sort_unstable_by_key(|&(e, _)| e);
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut out_weights = vec![Vec::new(); n];
        for &((s, b), w) in &edges {
            out_adj[s as usize].push(b);
            out_weights[s as usize].push(w);
            in_adj[b as usize].push(s);
        }
        for adj in &mut in_adj {
            adj.sort_unstable();
        }
        TradeNetwork {
            names: interner.names,
            out_adj,
            in_adj,
            out_weights,
            n_edges: edges.len(),
        }
    }

    /// Builds from (seller, buyer, multiplicity) triples alone.
    pub fn from_weighted_pairs<'a, I>(pairs: I) -> TradeNetwork
    where
        I: IntoIterator<Item = (&'a str, &'a str, u32)>,
    {
        Self::from_nodes_and_weighted_pairs(std::iter::empty(), pairs)
    }

    pub fn from_pairs<'a, I>(pairs: I) -> TradeNetwork
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::from_weighted_pairs(pairs.into_iter().map(|(a, b)| (a, b, 1)))
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn node_name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn out_neighbors(&self, id: u32) -> &[u32] {
        &self.out_adj[id as usize]
    }

    /// Trade counts aligned with [`out_neighbors`](Self::out_neighbors).
    pub fn out_weights_of(&self, id: u32) -> &[u32] {
        &self.out_weights[id as usize]
    }

    pub fn in_neighbors(&self, id: u32) -> &[u32] {
        &self.in_adj[id as usize]
    }

    /// All directed edges with weights, in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.out_adj.iter().enumerate().flat_map(move |(s, adj)| {
            adj.iter()
                .zip(&self.out_weights[s])
                .map(move |(&b, &w)| (s as u32, b, w))
        })
    }

    /// Degree sequence under the given mode, indexed by node id.
    pub fn degree_sequence(&self, mode: DegreeMode) -> Vec<u32> {
        (0..self.node_count() as u32)
            .map(|v| match mode {
                DegreeMode::In => self.in_adj[v as usize].len() as u32,
                DegreeMode::Out => self.out_adj[v as usize].len() as u32,
                DegreeMode::Total => {
                    (self.in_adj[v as usize].len() + self.out_adj[v as usize].len()) as u32
                }
            })
            .collect()
    }

    /// Undirected projection adjacency (sorted, deduplicated).
    pub(crate) fn undirected_adjacency(&self) -> Vec<Vec<u32>> {
        let n = self.node_count();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (s, b, _) in self.edges() {
            adj[s as usize].push(b);
            adj[b as usize].push(s);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Tab-separated edge list: `src dst weight` with a header row.
    pub fn write_edge_list_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "src\tdst\tweight")?;
        for (s, b, w) in self.edges() {
            writeln!(out, "{}\t{}\t{}", self.names[s as usize], self.names[b as usize], w)?;
        }
        Ok(())
    }
}

/// Direction convention for degree statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    In,
    Out,
    Total,
}

impl DegreeMode {
    pub const ALL: [DegreeMode; 3] = [DegreeMode::In, DegreeMode::Out, DegreeMode::Total];

    pub fn name(self) -> &'static str {
        match self {
            DegreeMode::In => "in",
            DegreeMode::Out => "out",
            DegreeMode::Total => "total",
        }
    }
}

/// Builds the full trade network from transactions: one edge per distinct
/// (seller, buyer) pair, weight counting trades.
pub fn build_network(transactions: &[Transaction]) -> TradeNetwork {
    TradeNetwork::from_pairs(
        transactions
            .iter()
            .map(|t| (t.seller_id.as_str(), t.buyer_id.as_str())),
    )
}

/// Like [`build_network`] but over the transactions passing `filter`.
pub fn build_network_where<F>(transactions: &[Transaction], filter: F) -> TradeNetwork
where
    F: Fn(&Transaction) -> bool,
{
    TradeNetwork::from_pairs(
        transactions
            .iter()
            .filter(|t| filter(t))
            .map(|t| (t.seller_id.as_str(), t.buyer_id.as_str())),
    )
}

/// Network over the flagged transactions worth at least `delta`; nodes are
/// the participants in those transactions.
pub fn anomalous_subnetwork(
    labels: &[LabelRecord],
    transactions: &[Transaction],
    delta: Usd,
) -> TradeNetwork {
    let by_id: HashMap<&str, &Transaction> = transactions
        .iter()
        .map(|t| (t.transaction_id.as_str(), t))
        .collect();
    TradeNetwork::from_pairs(labels.iter().filter(|l| l.flagged).filter_map(|l| {
        by_id.get(l.transaction_id.as_str()).and_then(|t| {
            (t.sale_price >= delta).then_some((t.seller_id.as_str(), t.buyer_id.as_str()))
        })
    }))
}

/// Fraction of existing directed edges over all N(N−1) possible ones.
pub fn edge_density(net: &TradeNetwork) -> Result<f64, NetError> {
    let n = net.node_count();
    if n < 2 {
        return Err(NetError::TooFewNodes {
            needed: 2,
            got: n,
        });
    }
    Ok(net.edge_count() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Global clustering coefficient of the undirected projection:
/// 3 × triangles / connected triples.
pub fn global_clustering(net: &TradeNetwork) -> Result<f64, NetError> {
    let adj = net.undirected_adjacency();
    let triples: u64 = adj
        .iter()
        .map(|nbrs| {
            let d = nbrs.len() as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum();
    if triples == 0 {
        return Err(NetError::NoTriples);
    }
    // Count each triangle once: for each edge (u,v) with u < v, count
    // common neighbors w > v.
    let mut triangles: u64 = 0;
    for (u, nbrs) in adj.iter().enumerate() {
        let u = u as u32;
        for &v in nbrs.iter().filter(|&&v| v > u) {
            triangles += sorted_intersection_above(nbrs, &adj[v as usize], v);
        }
    }
    Ok(3.0 * triangles as f64 / triples as f64)
}

/// |{w ∈ a ∩ b : w > floor}| for sorted slices.
fn sorted_intersection_above(a: &[u32], b: &[u32], floor: u32) -> u64 {
    let mut count = 0;
    let mut i = a.partition_point(|&x| x <= floor);
    let mut j = b.partition_point(|&x| x <= floor);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_trades_collapse_to_one_weighted_edge() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("a", "b"), ("a", "b")]);
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edge_count(), 1);
        let edges: Vec<_> = net.edges().collect();
        assert_eq!(edges, vec![(0, 1, 3)]);
    }

    #[test]
    fn self_trades_are_ignored() {
        let net = TradeNetwork::from_pairs([("a", "a"), ("a", "b")]);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn directed_three_cycle_density() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a")]);
        assert_eq!(edge_density(&net).unwrap(), 0.5);
    }

    #[test]
    fn density_requires_two_nodes() {
        let net = TradeNetwork::from_pairs(Vec::<(&str, &str)>::new());
        assert!(matches!(
            edge_density(&net),
            Err(NetError::TooFewNodes { .. })
        ));
    }

    #[test]
    fn triangle_clusters_fully() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a")]);
        assert_eq!(global_clustering(&net).unwrap(), 1.0);
    }

    #[test]
    fn triangle_with_pendant() {
        // Triangle a-b-c plus pendant edge d-a: 3 closed of 5 triples.
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a"), ("d", "a")]);
        assert!((global_clustering(&net).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn clustering_ignores_edge_direction() {
        // Reciprocated edges must not create spurious triples.
        let one_way = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a")]);
        let two_way = TradeNetwork::from_pairs([
            ("a", "b"),
            ("b", "a"),
            ("b", "c"),
            ("c", "b"),
            ("c", "a"),
            ("a", "c"),
        ]);
        assert_eq!(
            global_clustering(&one_way).unwrap(),
            global_clustering(&two_way).unwrap()
        );
    }

    #[test]
    fn no_triples_is_an_error() {
        let net = TradeNetwork::from_pairs([("a", "b")]);
        assert!(matches!(global_clustering(&net), Err(NetError::NoTriples)));
    }

    #[test]
    fn degree_sequences() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("a", "c"), ("b", "c")]);
        assert_eq!(net.degree_sequence(DegreeMode::Out), vec![2, 1, 0]);
        assert_eq!(net.degree_sequence(DegreeMode::In), vec![0, 1, 2]);
        assert_eq!(net.degree_sequence(DegreeMode::Total), vec![2, 2, 2]);
    }

    #[test]
    fn rebuilding_from_edge_list_is_identity() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("b", "c"), ("c", "a"), ("a", "c")]);
        let pairs: Vec<(String, String, u32)> = net
            .edges()
            .map(|(s, b, w)| {
                (
                    net.node_name(s).to_string(),
                    net.node_name(b).to_string(),
                    w,
                )
            })
            .collect();
        let rebuilt = TradeNetwork::from_weighted_pairs(
            pairs.iter().map(|(s, b, w)| (s.as_str(), b.as_str(), *w)),
        );
        assert_eq!(net, rebuilt);
    }

    #[test]
    fn edge_list_tsv_shape() {
        let net = TradeNetwork::from_pairs([("a", "b"), ("a", "b"), ("b", "c")]);
        let mut buf = Vec::new();
        net.write_edge_list_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "src\tdst\tweight\na\tb\t2\nb\tc\t1\n");
    }
}
