//! Property tests for the structural invariants: partitions, fixed points,
//! monotonicity, and permutation invariance.

use std::collections::HashMap;

use proptest::prelude::*;

use flipnet::ingest::{self, PlayCategory, Role, Transaction};
use flipnet::money::Usd;
use flipnet::rfcde::{fit_forest, CdeForestParams};
use flipnet::synth::{generate_market, AnomalySpec, MarketConfig};
use flipnet::tradenet::TradeNetwork;

fn tx(unique: &str, seller: u8, buyer: u8, secs: i64, id: String, cents: i64) -> Transaction {
    use chrono::TimeZone;
    Transaction {
        moment_unique_id: unique.to_string(),
        moment_id: format!("m-{}", &unique[..unique.len().min(2)]),
        player_id: "p1".to_string(),
        set_id: "s1".to_string(),
        seller_id: format!("u{seller}"),
        buyer_id: format!("u{buyer}"),
        play_category: PlayCategory::Dunk,
        limited_flag: false,
        circulation_count: 10,
        transaction_time: chrono::Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap(),
        transaction_id: id,
        sale_price: Usd::from_cents(cents.abs() % 1_000_000),
    }
}

/// Arbitrary transaction soups: a handful of copies, random participants
/// and timestamps (ties included), no self trades.
fn tx_soup() -> impl Strategy<Value = Vec<Transaction>> {
    prop::collection::vec(
        (0u8..6, 0u8..12, 0u8..12, 0i64..50, 0i64..100_000),
        1..60,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .filter_map(|(i, (copy, seller, buyer, secs, cents))| {
                if seller == buyer {
                    return None;
                }
                Some(tx(
                    &format!("mu{copy}"),
                    seller,
                    buyer,
                    secs,
                    format!("t{i:04}"),
                    cents,
                ))
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Provenance is a partition: every transaction lands in exactly one
    /// chain segment, and flips number Σ max(0, len−1).
    #[test]
    fn provenance_partitions_transactions(txs in tx_soup()) {
        let provenance = ingest::build_provenance(&txs);
        let mut seen = vec![0usize; txs.len()];
        for chain in &provenance.chains {
            for &i in &chain.events {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        let expected_flips: usize = provenance
            .chains
            .iter()
            .map(|c| c.events.len().saturating_sub(1))
            .sum();
        let flips = ingest::derive_flips(&provenance, &txs);
        prop_assert_eq!(flips.len(), expected_flips);
        for flip in &flips {
            prop_assert_eq!(flip.profit, flip.sold_price - flip.bought_price);
            prop_assert!(flip.trade_count >= 1);
        }
    }

    /// Chains are time-ordered with seller/buyer continuity inside each
    /// segment.
    #[test]
    fn provenance_chains_are_ordered_and_continuous(txs in tx_soup()) {
        let provenance = ingest::build_provenance(&txs);
        for chain in &provenance.chains {
            for pair in chain.events.windows(2) {
                let (a, b) = (&txs[pair[0]], &txs[pair[1]]);
                prop_assert!(
                    (a.transaction_time, &a.transaction_id)
                        < (b.transaction_time, &b.transaction_id)
                );
                prop_assert_eq!(&a.buyer_id, &b.seller_id);
            }
        }
    }

    /// Parse → serialize → parse is a fixed point.
    #[test]
    fn parse_serialize_fixed_point(txs in tx_soup()) {
        let mut bytes = Vec::new();
        ingest::write_transactions_csv(&mut bytes, &txs).unwrap();
        let once = ingest::parse_transactions(bytes.as_slice()).unwrap();
        prop_assert!(once.rejects.is_empty());
        prop_assert_eq!(&once.transactions, &txs);
        let mut again = Vec::new();
        ingest::write_transactions_csv(&mut again, &once.transactions).unwrap();
        prop_assert_eq!(bytes, again);
    }

    /// Diversity entropy is invariant under counterparty relabeling and
    /// stays in [0,1].
    #[test]
    fn entropy_is_permutation_invariant(counts in prop::collection::vec(1u64..40, 1..10)) {
        // Build a market where seller "s" trades `counts[k]` times with
        // counterparty k, plus enough spare users to fix the universe.
        let universe = counts.len() as u64 + 8;
        let build = |order: &[usize]| -> Vec<Transaction> {
            let mut txs = Vec::new();
            let mut seq = 0usize;
            for (slot, &k) in order.iter().enumerate() {
                for _ in 0..counts[k] {
                    txs.push(tx("muX", 200, (slot + 1) as u8, seq as i64, format!("t{seq:05}"), 100));
                    seq += 1;
                }
            }
            // Widen the universe with unrelated trades.
            for extra in 0..(universe as usize - counts.len() - 1) {
                txs.push(tx(
                    "muY",
                    100,
                    (extra + 50) as u8,
                    (1000 + extra) as i64,
                    format!("x{extra:05}"),
                    100,
                ));
            }
            txs
        };
        let forward: Vec<usize> = (0..counts.len()).collect();
        let mut backward = forward.clone();
        backward.reverse();
        let e1 = ingest::diversity("u200", Role::Seller, &build(&forward)).unwrap().entropy;
        let e2 = ingest::diversity("u200", Role::Seller, &build(&backward)).unwrap().entropy;
        prop_assert!((e1 - e2).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&e1));
    }

    /// Tail probability is monotone nonincreasing in the threshold.
    #[test]
    fn tail_probability_is_monotone(seed in 0u64..50, query in -2.0f64..2.0) {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 120;
        let x: Vec<f64> = (0..n).map(|_| next() * 4.0 - 2.0).collect();
        let z: Vec<f64> = x.iter().map(|&v| v + next() - 0.5).collect();
        let params = CdeForestParams {
            n_trees: 5,
            min_leaf_size: 20,
            rng_seed: seed,
            ..CdeForestParams::default()
        };
        let forest = fit_forest(&x, &z, &params).unwrap();
        let de = forest.predict_density_1d(query).unwrap();
        let mut prev = f64::INFINITY;
        for k in -30..=30 {
            let t = k as f64 / 6.0;
            let v = de.tail_probability(t);
            prop_assert!(v <= prev + 1e-12);
            prop_assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    /// Rebuilding a network from its own weighted edge list is the
    /// identity, and node relabeling leaves the metric values unchanged.
    #[test]
    fn network_rebuild_is_identity(edges in prop::collection::vec((0u8..15, 0u8..15), 0..60)) {
        let pairs: Vec<(String, String)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (format!("u{a}"), format!("u{b}")))
            .collect();
        let net = TradeNetwork::from_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
        let relist: Vec<(String, String, u32)> = net
            .edges()
            .map(|(s, b, w)| (net.node_name(s).to_string(), net.node_name(b).to_string(), w))
            .collect();
        let rebuilt = TradeNetwork::from_weighted_pairs(
            relist.iter().map(|(a, b, w)| (a.as_str(), b.as_str(), *w)),
        );
        prop_assert_eq!(net.edge_count(), rebuilt.edge_count());
        prop_assert_eq!(net.node_count(), rebuilt.node_count());
        for (s, b, w) in net.edges() {
            let s_name = net.node_name(s);
            let b_name = net.node_name(b);
            let found = rebuilt.edges().any(|(s2, b2, w2)| {
                rebuilt.node_name(s2) == s_name && rebuilt.node_name(b2) == b_name && w2 == w
            });
            prop_assert!(found);
        }
    }

    /// Synthetic markets are reproducible and internally consistent for
    /// any seed.
    #[test]
    fn market_generation_is_seed_stable(seed in 0u64..30) {
        let config = MarketConfig {
            n_users: 40,
            n_moments: 25,
            n_players: 6,
            copies_per_moment_max: 2,
            mean_chain_len: 2.0,
            max_chain_len: 5,
            anomaly_spec: AnomalySpec { count: 2, collusion_pair_count: 2, ..AnomalySpec::default() },
            rng_seed: seed,
            ..MarketConfig::default()
        };
        let (a, truth_a) = generate_market(&config).unwrap();
        let (b, truth_b) = generate_market(&config).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&truth_a, &truth_b);

        // Every anomalous id must exist and the log must parse cleanly.
        let ids: HashMap<&str, ()> = a.iter().map(|t| (t.transaction_id.as_str(), ())).collect();
        for id in &truth_a.anomalous_transaction_ids {
            prop_assert!(ids.contains_key(id.as_str()));
        }
        let mut bytes = Vec::new();
        ingest::write_transactions_csv(&mut bytes, &a).unwrap();
        let parsed = ingest::parse_transactions(bytes.as_slice()).unwrap();
        prop_assert!(parsed.rejects.is_empty());
    }
}
