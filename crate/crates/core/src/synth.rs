//! Seeded synthetic marketplace generator with recorded ground truth.
//!
//! Honest resale prices follow `bought + f(features) + noise` with a known
//! linear `f`; injected anomalies multiply the honest resale price by a
//! factor drawn from the configured range and route the trade between
//! colluding users. Per-user activity is heavy tailed. The emitted log
//! satisfies every transaction invariant and the generator is byte-exact
//! reproducible per seed.

use chrono::{DateTime, TimeZone, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureRow;
use crate::ingest::{PlayCategory, Transaction};
use crate::money::Usd;
use crate::seeding::{root_rng, sample_indices, standard_normal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid market config: {0}")]
    ConfigInvalid(String),
}

/// Lognormal base-price model for collectible designs, in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceModel {
    pub mean_log: f64,
    pub sigma_log: f64,
    pub min_price: f64,
    pub max_price: f64,
}

impl Default for PriceModel {
    fn default() -> Self {
        PriceModel {
            mean_log: 40f64.ln(),
            sigma_log: 0.6,
            min_price: 15.0,
            max_price: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalySpec {
    /// Number of anomalous sale events to inject.
    pub count: usize,
    /// Multiplier on the honest resale price; lower bound must exceed 1.
    pub inflation_factor_range: (f64, f64),
    /// Colluding user pairs that carry the anomalous trades.
    pub collusion_pair_count: usize,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        AnomalySpec {
            count: 0,
            inflation_factor_range: (5.0, 50.0),
            collusion_pair_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub n_users: usize,
    pub n_moments: usize,
    pub n_players: usize,
    pub n_sets: usize,
    pub time_span_days: u32,
    /// Pareto exponent for per-user activity weights (> 1; smaller is
    /// heavier tailed).
    pub activity_exponent: f64,
    /// Copies minted per design are uniform in 1..=this.
    pub copies_per_moment_max: usize,
    pub mean_chain_len: f64,
    pub max_chain_len: usize,
    pub price_model: PriceModel,
    /// Std deviation of the honest profit noise, dollars.
    pub noise_sigma: f64,
    pub anomaly_spec: AnomalySpec,
    pub rng_seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            n_users: 1000,
            n_moments: 2000,
            n_players: 50,
            n_sets: 12,
            time_span_days: 180,
            activity_exponent: 2.0,
            copies_per_moment_max: 6,
            mean_chain_len: 4.5,
            max_chain_len: 14,
            price_model: PriceModel::default(),
            noise_sigma: 8.0,
            anomaly_spec: AnomalySpec::default(),
            rng_seed: 0,
        }
    }
}

impl MarketConfig {
    // Negated comparisons here intentionally reject NaN parameters.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::ConfigInvalid(msg.to_string()));
        if self.n_users < 2 {
            return bad("n_users must be at least 2");
        }
        if self.n_moments < 1 || self.n_players < 1 || self.n_sets < 1 {
            return bad("n_moments, n_players, n_sets must be at least 1");
        }
        if self.time_span_days < 1 {
            return bad("time_span_days must be at least 1");
        }
        if !(self.activity_exponent > 1.0) {
            return bad("activity_exponent must exceed 1");
        }
        if self.copies_per_moment_max < 1 {
            return bad("copies_per_moment_max must be at least 1");
        }
        if !(self.mean_chain_len >= 1.0) || self.max_chain_len < 1 {
            return bad("chain length parameters must be at least 1");
        }
        if !(self.noise_sigma > 0.0) {
            return bad("noise_sigma must be positive");
        }
        if !(self.price_model.min_price >= 1.0)
            || !(self.price_model.max_price >= self.price_model.min_price)
        {
            return bad("price model range must satisfy 1 <= min <= max");
        }
        let (lo, hi) = self.anomaly_spec.inflation_factor_range;
        if !(lo > 1.0) || !(hi >= lo) {
            return bad("inflation factor range must satisfy 1 < lo <= hi");
        }
        if self.anomaly_spec.count > 0 {
            if self.anomaly_spec.collusion_pair_count < 1 {
                return bad("collusion_pair_count must be at least 1 when injecting anomalies");
            }
            if 2 * self.anomaly_spec.collusion_pair_count > self.n_users {
                return bad("not enough users for the requested collusion pairs");
            }
        }
        Ok(())
    }
}

/// The linear profit process the generator used, recorded for verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCoefficients {
    pub intercept: f64,
    pub circulation_count: f64,
    pub limited_edition: f64,
    pub serial_number: f64,
    /// Absolute effect per play category (display name).
    pub play: Vec<(String, f64)>,
    /// Absolute effect per player id.
    pub player: Vec<(String, f64)>,
    pub trade_count: f64,
    pub bought_price: f64,
}

impl TrueCoefficients {
    /// Expected profit of a flip under the generating process.
    pub fn expected_profit(&self, row: &FeatureRow) -> f64 {
        let play_effect = self
            .play
            .iter()
            .find(|(name, _)| name == row.play_category.display_name())
            .map_or(0.0, |(_, v)| *v);
        let player_effect = self
            .player
            .iter()
            .find(|(name, _)| name == &row.player_id)
            .map_or(0.0, |(_, v)| *v);
        self.intercept
            + self.circulation_count * row.circulation_count as f64
            + self.limited_edition * f64::from(row.limited_edition)
            + self.serial_number * row.serial_number as f64
            + play_effect
            + player_effect
            + self.trade_count * row.trade_count as f64
            + self.bought_price * row.bought_price.to_dollars()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueChain {
    pub moment_unique_id: String,
    pub transaction_ids: Vec<String>,
}

/// Everything the generator knows that the pipeline must rediscover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-copy transaction ids in true ownership order, sorted by copy id.
    pub chains: Vec<TrueChain>,
    pub coefficients: TrueCoefficients,
    pub noise_sigma: f64,
    /// Sale transactions whose price was inflated; sorted.
    pub anomalous_transaction_ids: Vec<String>,
    pub collusion_pairs: Vec<(String, String)>,
    /// Σ (sale − purchase) over every resale event, in cents.
    pub total_flip_profit_cents: i64,
    pub n_flips: u64,
}

struct PendingTx {
    time_s: i64,
    copy: usize,
    position: usize,
    seller: usize,
    buyer: usize,
    price: Usd,
}

struct CopyPlan {
    moment: usize,
    serial: u32,
    chain_len: usize,
    /// (sale position 1.., pair index) when this copy carries an anomaly.
    anomaly: Option<(usize, usize)>,
}

/// Generates a transaction log plus its ground truth. Same config ⇒
/// byte-identical output (single sequential RNG stream).
pub fn generate_market(config: &MarketConfig) -> Result<(Vec<Transaction>, GroundTruth), SynthError> {
    config.validate()?;
    let mut rng = root_rng(config.rng_seed);

    let user_ids: Vec<String> = (0..config.n_users).map(|i| format!("u{i:05}")).collect();
    let player_ids: Vec<String> = (0..config.n_players).map(|i| format!("p{i:04}")).collect();
    let set_ids: Vec<String> = (0..config.n_sets).map(|i| format!("s{i:03}")).collect();

    // Heavy-tailed activity: Pareto weights, cumulative for binary search.
    let activity = ActivitySampler::new(&mut rng, config.n_users, config.activity_exponent);

    let coefficients = draw_coefficients(&mut rng, &player_ids);

    // Collectible designs.
    struct Moment {
        player: usize,
        set: usize,
        play: PlayCategory,
        limited: bool,
        circulation: u32,
        base_price: f64,
    }
    let moments: Vec<Moment> = (0..config.n_moments)
        .map(|_| {
            let circulation = (400.0 * (standard_normal(&mut rng)).exp())
                .clamp(5.0, 5000.0)
                .round() as u32;
            let pm = &config.price_model;
            let base_price = (pm.mean_log + pm.sigma_log * standard_normal(&mut rng))
                .exp()
                .clamp(pm.min_price, pm.max_price);
            Moment {
                player: rng.random_range(0..config.n_players),
                set: rng.random_range(0..config.n_sets),
                play: PlayCategory::ALL[rng.random_range(0..PlayCategory::ALL.len())],
                limited: rng.random::<f64>() < 0.3,
                circulation,
                base_price,
            }
        })
        .collect();

    // Copy plans: serials and chain lengths.
    let geom_p = 1.0 / config.mean_chain_len;
    let mut plans: Vec<CopyPlan> = Vec::new();
    for (m, moment) in moments.iter().enumerate() {
        let copies = 1 + rng.random_range(0..config.copies_per_moment_max);
        let copies = copies.min(moment.circulation as usize);
        let serials = sample_indices(&mut rng, moment.circulation as usize, copies);
        for serial0 in serials {
            let mut chain_len = 1usize;
            while chain_len < config.max_chain_len && rng.random::<f64>() >= geom_p {
                chain_len += 1;
            }
            plans.push(CopyPlan {
                moment: m,
                serial: serial0 + 1,
                chain_len,
                anomaly: None,
            });
        }
    }

    // Anomaly slots: distinct eligible copies (chain length ≥ 2), one
    // anomalous sale each.
    let spec = &config.anomaly_spec;
    let collusion_pool: Vec<usize> = if spec.count > 0 {
        sample_indices(&mut rng, config.n_users, 2 * spec.collusion_pair_count)
            .into_iter()
            .map(|v| v as usize)
            .collect()
    } else {
        Vec::new()
    };
    let collusion_pairs: Vec<(usize, usize)> = collusion_pool
        .chunks(2)
        .map(|c| (c[0], c[1]))
        .collect();
    if spec.count > 0 {
        let eligible: Vec<usize> = plans
            .iter()
            .enumerate()
            .filter(|(_, p)| p.chain_len >= 2)
            .map(|(i, _)| i)
            .collect();
        if eligible.len() < spec.count {
            return Err(SynthError::ConfigInvalid(format!(
                "only {} resale-capable copies for {} anomalies",
                eligible.len(),
                spec.count
            )));
        }
        let chosen = sample_indices(&mut rng, eligible.len(), spec.count);
        for c in chosen {
            let plan = eligible[c as usize];
            let len = plans[plan].chain_len;
            let position = 1 + rng.random_range(0..(len - 1));
            let pair = rng.random_range(0..collusion_pairs.len());
            plans[plan].anomaly = Some((position, pair));
        }
    }

    // Walk each chain, pricing every hop.
    let span_secs = config.time_span_days as i64 * 86_400;
    let mut pending: Vec<PendingTx> = Vec::new();
    let mut truth_anomalies_by_copy: Vec<(usize, usize)> = Vec::new(); // (copy, position)
    let mut total_flip_profit_cents = 0i64;
    let mut n_flips = 0u64;

    for (copy_idx, plan) in plans.iter().enumerate() {
        let moment = &moments[plan.moment];
        let chain_len = plan.chain_len;

        // Strictly increasing event times.
        let mut times: Vec<i64> = (0..chain_len)
            .map(|_| rng.random_range(0..span_secs))
            .collect();
        times.sort_unstable();
        for k in 1..chain_len {
            if times[k] <= times[k - 1] {
                times[k] = times[k - 1] + 1;
            }
        }

        // Ownership path o_0..o_L; event k sells from o_k to o_{k+1}. When
        // the chain carries an anomaly at sale `position`, the colluding
        // seller takes ownership one hop earlier and sells to the partner.
        let collusion_route: Option<(usize, usize, usize)> =
            plan.anomaly.map(|(position, pair)| {
                let (a, b) = collusion_pairs[pair];
                let (seller, partner) = if rng.random::<bool>() { (a, b) } else { (b, a) };
                // Occasionally cross pairs so colluders form triangles.
                let buyer = if collusion_pool.len() > 2 && rng.random::<f64>() < 0.3 {
                    let alt = collusion_pool[rng.random_range(0..collusion_pool.len())];
                    if alt == seller {
                        partner
                    } else {
                        alt
                    }
                } else {
                    partner
                };
                (position, seller, buyer)
            });
        let mut owners: Vec<usize> = Vec::with_capacity(chain_len + 1);
        owners.push(activity.sample(&mut rng));
        for k in 1..=chain_len {
            let prev = *owners.last().unwrap();
            let next = match collusion_route {
                Some((position, seller, buyer)) if k == position => {
                    if seller == prev {
                        // Already owned by the colluder; keep the pair's
                        // other member as the seller instead.
                        buyer
                    } else {
                        seller
                    }
                }
                Some((position, seller, buyer)) if k == position + 1 => {
                    // prev is the anomalous seller chosen above.
                    if buyer == prev {
                        seller
                    } else {
                        buyer
                    }
                }
                _ => activity.sample_excluding(&mut rng, prev),
            };
            debug_assert_ne!(next, prev);
            owners.push(next);
        }

        // Prices: first trade from the design's base price, then the
        // linear profit process on the rounded previous price.
        let first = moment.base_price * (0.2 * standard_normal(&mut rng)).exp();
        let mut prev_price = Usd::from_dollars_f64(first.max(1.0));
        for position in 0..chain_len {
            let price = if position == 0 {
                prev_price
            } else {
                let row = FeatureRow {
                    circulation_count: moment.circulation,
                    limited_edition: moment.limited,
                    serial_number: plan.serial,
                    play_category: moment.play,
                    player_id: player_ids[moment.player].clone(),
                    trade_count: position as u32,
                    bought_price: prev_price,
                    comparable_profit: 0.0,
                    cold_start: true,
                    response_profit: Usd::ZERO,
                };
                let expected = coefficients.expected_profit(&row);
                let bought = prev_price.to_dollars();
                let mut resale = 0.0;
                for _ in 0..100 {
                    resale = bought + expected + config.noise_sigma * standard_normal(&mut rng);
                    if resale >= 1.0 {
                        break;
                    }
                }
                resale = resale.max(1.0);
                if plan.anomaly.map(|(p, _)| p) == Some(position) {
                    let (lo, hi) = spec.inflation_factor_range;
                    let factor = rng.random_range(lo..=hi);
                    resale *= factor;
                    truth_anomalies_by_copy.push((copy_idx, position));
                }
                let rounded = Usd::from_dollars_f64(resale);
                total_flip_profit_cents += rounded.cents() - prev_price.cents();
                n_flips += 1;
                rounded
            };
            pending.push(PendingTx {
                time_s: times[position],
                copy: copy_idx,
                position,
                seller: owners[position],
                buyer: owners[position + 1],
                price,
            });
            prev_price = price;
        }
    }

    // Global chronological order defines transaction ids and file order.
    pending.sort_by_key(|t| (t.time_s, t.copy, t.position));
    let base_time = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
    let mut tx_ids_by_copy: Vec<Vec<(usize, String)>> = vec![Vec::new(); plans.len()];
    let mut transactions = Vec::with_capacity(pending.len());
    for (seq, p) in pending.iter().enumerate() {
        let id = format!("t{seq:08}");
        let plan = &plans[p.copy];
        let moment = &moments[plan.moment];
        tx_ids_by_copy[p.copy].push((p.position, id.clone()));
        transactions.push(Transaction {
            moment_unique_id: unique_id(plan.moment, plan.serial),
            moment_id: format!("m{:05}", plan.moment),
            player_id: player_ids[moment.player].clone(),
            set_id: set_ids[moment.set].clone(),
            seller_id: user_ids[p.seller].clone(),
            buyer_id: user_ids[p.buyer].clone(),
            play_category: moment.play,
            limited_flag: moment.limited,
            circulation_count: moment.circulation,
            transaction_time: time_at(base_time, p.time_s),
            transaction_id: id,
            sale_price: p.price,
        });
    }

    let mut chains: Vec<TrueChain> = tx_ids_by_copy
        .iter()
        .enumerate()
        .map(|(copy, ids)| {
            let mut ids = ids.clone();
            ids.sort_by_key(|(pos, _)| *pos);
            TrueChain {
                moment_unique_id: unique_id(plans[copy].moment, plans[copy].serial),
                transaction_ids: ids.into_iter().map(|(_, id)| id).collect(),
            }
        })
        .collect();
    chains.sort_by(|a, b| a.moment_unique_id.cmp(&b.moment_unique_id));

    let mut anomalous_transaction_ids: Vec<String> = truth_anomalies_by_copy
        .iter()
        .map(|&(copy, position)| {
            tx_ids_by_copy[copy]
                .iter()
                .find(|(p, _)| *p == position)
                .map(|(_, id)| id.clone())
                .expect("anomalous event emitted")
        })
        .collect();
    anomalous_transaction_ids.sort_unstable();

    let truth = GroundTruth {
        chains,
        coefficients,
        noise_sigma: config.noise_sigma,
        anomalous_transaction_ids,
        collusion_pairs: collusion_pairs
            .iter()
            .map(|&(a, b)| (user_ids[a].clone(), user_ids[b].clone()))
            .collect(),
        total_flip_profit_cents,
        n_flips,
    };
    Ok((transactions, truth))
}

fn unique_id(moment: usize, serial: u32) -> String {
    format!("m{moment:05}-{serial:05}")
}

fn time_at(base: DateTime<Utc>, offset_s: i64) -> DateTime<Utc> {
    base + chrono::Duration::seconds(offset_s)
}

fn draw_coefficients(rng: &mut ChaCha8Rng, player_ids: &[String]) -> TrueCoefficients {
    let play = PlayCategory::ALL
        .iter()
        .map(|c| {
            (
                c.display_name().to_string(),
                (3.0 * standard_normal(rng)).clamp(-6.0, 6.0),
            )
        })
        .collect();
    let player = player_ids
        .iter()
        .map(|p| (p.clone(), (3.0 * standard_normal(rng)).clamp(-9.0, 9.0)))
        .collect();
    TrueCoefficients {
        intercept: 40.0,
        circulation_count: 0.004,
        limited_edition: 12.0,
        serial_number: -0.002,
        play,
        player,
        trade_count: -1.5,
        bought_price: 0.15,
    }
}

/// Weighted user sampling with Pareto activity weights.
struct ActivitySampler {
    cumulative: Vec<f64>,
    total: f64,
}

impl ActivitySampler {
    fn new(rng: &mut ChaCha8Rng, n_users: usize, exponent: f64) -> ActivitySampler {
        let mut cumulative = Vec::with_capacity(n_users);
        let mut total = 0.0;
        for _ in 0..n_users {
            let u: f64 = rng.random();
            // Pareto(α) with x_min = 1; cap to keep one user from owning
            // the whole market.
            let w = (1.0 - u).powf(-1.0 / exponent).min(n_users as f64);
            total += w;
            cumulative.push(total);
        }
        ActivitySampler { cumulative, total }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let t: f64 = rng.random::<f64>() * self.total;
        self.cumulative
            .partition_point(|&c| c <= t)
            .min(self.cumulative.len() - 1)
    }

    fn sample_excluding(&self, rng: &mut ChaCha8Rng, forbidden: usize) -> usize {
        for _ in 0..200 {
            let v = self.sample(rng);
            if v != forbidden {
                return v;
            }
        }
        (forbidden + 1) % self.cumulative.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest;

    fn small_config(anomalies: usize, seed: u64) -> MarketConfig {
        MarketConfig {
            n_users: 60,
            n_moments: 80,
            n_players: 10,
            anomaly_spec: AnomalySpec {
                count: anomalies,
                collusion_pair_count: 3,
                ..AnomalySpec::default()
            },
            rng_seed: seed,
            ..MarketConfig::default()
        }
    }

    #[test]
    fn no_anomalies_means_empty_truth_set() {
        let (_, truth) = generate_market(&small_config(0, 1)).unwrap();
        assert!(truth.anomalous_transaction_ids.is_empty());
    }

    #[test]
    fn exact_anomaly_count_and_presence() {
        let (txs, truth) = generate_market(&small_config(12, 7)).unwrap();
        assert_eq!(truth.anomalous_transaction_ids.len(), 12);
        let ids: std::collections::HashSet<&str> =
            txs.iter().map(|t| t.transaction_id.as_str()).collect();
        for a in &truth.anomalous_transaction_ids {
            assert!(ids.contains(a.as_str()), "{a} missing from the log");
        }
    }

    #[test]
    fn emitted_log_satisfies_all_invariants() {
        let (txs, _) = generate_market(&small_config(10, 3)).unwrap();
        let mut buf = Vec::new();
        ingest::write_transactions_csv(&mut buf, &txs).unwrap();
        let outcome = ingest::parse_transactions(buf.as_slice()).unwrap();
        assert!(outcome.rejects.is_empty(), "rejects: {:?}", outcome.rejects);
        assert_eq!(outcome.transactions.len(), txs.len());
    }

    #[test]
    fn generation_is_deterministic() {
        let (txs_a, truth_a) = generate_market(&small_config(5, 42)).unwrap();
        let (txs_b, truth_b) = generate_market(&small_config(5, 42)).unwrap();
        assert_eq!(txs_a, txs_b);
        assert_eq!(truth_a, truth_b);
        let (txs_c, _) = generate_market(&small_config(5, 43)).unwrap();
        assert_ne!(txs_a, txs_c);
    }

    #[test]
    fn pipeline_recovers_true_chains_and_profit_ledger() {
        let (txs, truth) = generate_market(&small_config(8, 11)).unwrap();
        let provenance = ingest::build_provenance(&txs);
        assert!(provenance.breaks.is_empty());

        let mut reconstructed: Vec<TrueChain> = provenance
            .chains
            .iter()
            .map(|c| TrueChain {
                moment_unique_id: c.moment_unique_id.clone(),
                transaction_ids: c
                    .events
                    .iter()
                    .map(|&i| txs[i].transaction_id.clone())
                    .collect(),
            })
            .collect();
        reconstructed.sort_by(|a, b| a.moment_unique_id.cmp(&b.moment_unique_id));
        assert_eq!(reconstructed, truth.chains);

        let flips = ingest::derive_flips(&provenance, &txs);
        assert_eq!(flips.len() as u64, truth.n_flips);
        let total: i64 = flips.iter().map(|f| f.profit.cents()).sum();
        assert_eq!(total, truth.total_flip_profit_cents);
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = small_config(0, 1);
        c.n_users = 1;
        assert!(matches!(c.validate(), Err(SynthError::ConfigInvalid(_))));
        let mut c = small_config(0, 1);
        c.anomaly_spec.inflation_factor_range = (0.9, 50.0);
        assert!(matches!(c.validate(), Err(SynthError::ConfigInvalid(_))));
        let mut c = small_config(4, 1);
        c.anomaly_spec.collusion_pair_count = 200;
        assert!(matches!(
            generate_market(&c),
            Err(SynthError::ConfigInvalid(_))
        ));
    }
}
