//! Design-matrix assembly for the expected-profit model: numeric features,
//! categorical encodings, comparable profits, and the two interaction terms.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Flip, PlayCategory, Transaction};
use crate::money::Usd;

/// Window length for comparable profits: the chronologically last sales of
/// copies of the same parent collectible.
pub const COMPARABLE_WINDOW: usize = 10;

/// Play-category baseline omitted from the one-hot encoding.
pub const PLAY_BASELINE: PlayCategory = PlayCategory::ThreePointer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("unknown play category {0:?} (not covered by schema)")]
    UnknownCategory(String),
    #[error("unknown player {0:?} (not covered by schema)")]
    UnknownPlayer(String),
}

/// Fixed, serializable column layout for the design matrix. Encoding is
/// bijective given the schema, so a fitted model can score new data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSchema {
    /// Column names in design-matrix order.
    pub columns: Vec<String>,
    pub play_baseline: String,
    /// Lexicographically first player id.
    pub player_baseline: String,
    /// Full player vocabulary, sorted.
    pub players: Vec<String>,
}

impl EncodingSchema {
    /// Builds a schema whose player vocabulary covers `txs`.
    pub fn from_transactions(txs: &[Transaction]) -> EncodingSchema {
        let mut players: Vec<String> = txs.iter().map(|t| t.player_id.clone()).collect();
        players.sort_unstable();
        players.dedup();
        Self::with_players(players)
    }

    pub fn with_players(players: Vec<String>) -> EncodingSchema {
        let player_baseline = players.first().cloned().unwrap_or_default();
        let mut columns = vec![
            "intercept".to_string(),
            "circulation_count".to_string(),
            "limited_edition".to_string(),
            "serial_number".to_string(),
        ];
        for cat in PlayCategory::ALL {
            if cat != PLAY_BASELINE {
                columns.push(format!("play:{}", cat.display_name()));
            }
        }
        columns.push("trade_count".to_string());
        columns.push("comparable_profit".to_string());
        columns.push("bought_price".to_string());
        columns.push("circ_x_limited".to_string());
        columns.push("comp_x_bought".to_string());
        for p in players.iter().skip(1) {
            columns.push(format!("player:{p}"));
        }
        EncodingSchema {
            columns,
            play_baseline: PLAY_BASELINE.display_name().to_string(),
            player_baseline,
            players,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }
}

/// Typed feature values for one flip, prior to encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub circulation_count: u32,
    pub limited_edition: bool,
    pub serial_number: u32,
    pub play_category: PlayCategory,
    pub player_id: String,
    pub trade_count: u32,
    pub bought_price: Usd,
    /// Mean profit (dollars) of the chronologically last up-to-10 prior
    /// flips of the same parent collectible; 0 when there are none.
    pub comparable_profit: f64,
    /// True when no prior flips existed (comparable_profit defaulted to 0).
    pub cold_start: bool,
    pub response_profit: Usd,
}

/// Mean profit of the chronologically last `min(10, len)` entries of
/// `prior_profits` (dollars, oldest first). Returns `(0.0, true)` on an
/// empty history.
pub fn comparable_profit(prior_profits: &[f64]) -> (f64, bool) {
    if prior_profits.is_empty() {
        return (0.0, true);
    }
    let take = prior_profits.len().min(COMPARABLE_WINDOW);
    let window = &prior_profits[prior_profits.len() - take..];
    (window.iter().sum::<f64>() / take as f64, false)
}

/// Feature rows in chronological flip order, plus the permutation mapping
/// each row back to its source flip.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    /// `flip_order[i]` is the index into the input flip slice of row `i`.
    pub flip_order: Vec<usize>,
}

/// Derives feature rows from flips. Rows come out in chronological order
/// (sale time, then sale transaction id); comparable-profit windows use
/// strictly earlier sales only, so same-second sales never see each other.
pub fn build_feature_rows(flips: &[Flip], txs: &[Transaction]) -> Dataset {
    let mut order: Vec<usize> = (0..flips.len()).collect();
    order.sort_by(|&a, &b| {
        (flips[a].sale_time, &flips[a].sale_transaction_id)
            .cmp(&(flips[b].sale_time, &flips[b].sale_transaction_id))
    });

    // Per parent collectible: (sale_time, profit) in chronological order.
    let mut history: HashMap<&str, Vec<(chrono::DateTime<chrono::Utc>, f64)>> = HashMap::new();
    for &i in &order {
        history
            .entry(flips[i].moment_id.as_str())
            .or_default()
            .push((flips[i].sale_time, flips[i].profit.to_dollars()));
    }

    // Index of the next entry to read per moment, advanced lazily.
    let mut rows = Vec::with_capacity(flips.len());
    for &i in &order {
        let flip = &flips[i];
        let tx = &txs[flip.sale_tx];
        let series = &history[flip.moment_id.as_str()];
        // Strictly-prior boundary: first entry with time >= this sale time.
        let boundary = series.partition_point(|&(t, _)| t < flip.sale_time);
        let start = boundary.saturating_sub(COMPARABLE_WINDOW);
        let window: Vec<f64> = series[start..boundary].iter().map(|&(_, p)| p).collect();
        let (comp, cold_start) = comparable_profit(&window);
        rows.push(FeatureRow {
            circulation_count: tx.circulation_count,
            limited_edition: tx.limited_flag,
            serial_number: serial_from_unique_id(&tx.moment_unique_id),
            play_category: tx.play_category,
            player_id: tx.player_id.clone(),
            trade_count: flip.trade_count,
            bought_price: flip.bought_price,
            comparable_profit: comp,
            cold_start,
            response_profit: flip.profit,
        });
    }
    Dataset {
        rows,
        flip_order: order,
    }
}

/// Mint order of the copy, recovered from the trailing digit run of the
/// unique id (the source tuple carries no dedicated serial column). Ids
/// without a digit suffix get serial 0.
pub fn serial_from_unique_id(unique_id: &str) -> u32 {
    let digits: Vec<u8> = unique_id
        .bytes()
        .rev()
        .take_while(|b| b.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return 0;
    }
    let run: String = digits.into_iter().rev().map(char::from).collect();
    let trimmed = if run.len() > 9 { &run[run.len() - 9..] } else { &run };
    trimmed.parse().unwrap_or(0)
}

/// Design matrix plus response vector, aligned with the schema columns.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<String>,
}

/// Column-index lookup for encoding rows against a schema.
pub struct Encoder<'a> {
    schema: &'a EncodingSchema,
    play_cols: HashMap<&'a str, usize>,
    player_cols: HashMap<&'a str, usize>,
    numeric: NumericCols,
}

struct NumericCols {
    intercept: usize,
    circulation: usize,
    limited: usize,
    serial: usize,
    trade_count: usize,
    comparable: usize,
    bought: usize,
    circ_x_limited: usize,
    comp_x_bought: usize,
}

impl<'a> Encoder<'a> {
    pub fn new(schema: &'a EncodingSchema) -> Encoder<'a> {
        let index: HashMap<&str, usize> = schema
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let col = |name: &str| index[name];
        let mut play_cols = HashMap::new();
        let mut player_cols = HashMap::new();
        for (i, c) in schema.columns.iter().enumerate() {
            if let Some(cat) = c.strip_prefix("play:") {
                play_cols.insert(cat, i);
            } else if let Some(p) = c.strip_prefix("player:") {
                player_cols.insert(p, i);
            }
        }
        Encoder {
            schema,
            play_cols,
            player_cols,
            numeric: NumericCols {
                intercept: col("intercept"),
                circulation: col("circulation_count"),
                limited: col("limited_edition"),
                serial: col("serial_number"),
                trade_count: col("trade_count"),
                comparable: col("comparable_profit"),
                bought: col("bought_price"),
                circ_x_limited: col("circ_x_limited"),
                comp_x_bought: col("comp_x_bought"),
            },
        }
    }

    /// Encodes one row into design-matrix order.
    pub fn encode(&self, row: &FeatureRow) -> Result<Vec<f64>, FeatureError> {
        let mut v = vec![0.0; self.schema.columns.len()];
        let n = &self.numeric;
        let limited = if row.limited_edition { 1.0 } else { 0.0 };
        let bought = row.bought_price.to_dollars();
        v[n.intercept] = 1.0;
        v[n.circulation] = row.circulation_count as f64;
        v[n.limited] = limited;
        v[n.serial] = row.serial_number as f64;
        v[n.trade_count] = row.trade_count as f64;
        v[n.comparable] = row.comparable_profit;
        v[n.bought] = bought;
        v[n.circ_x_limited] = row.circulation_count as f64 * limited;
        v[n.comp_x_bought] = row.comparable_profit * bought;

        let play = row.play_category.display_name();
        if play != self.schema.play_baseline {
            match self.play_cols.get(play) {
                Some(&i) => v[i] = 1.0,
                None => return Err(FeatureError::UnknownCategory(play.to_string())),
            }
        }
        if row.player_id != self.schema.player_baseline {
            match self.player_cols.get(row.player_id.as_str()) {
                Some(&i) => v[i] = 1.0,
                None => return Err(FeatureError::UnknownPlayer(row.player_id.clone())),
            }
        }
        Ok(v)
    }
}

/// Encodes all rows against the schema. One design row per feature row, in
/// input (chronological) order, with the intercept column included.
pub fn assemble_design(rows: &[FeatureRow], schema: &EncodingSchema) -> Result<Design, FeatureError> {
    let encoder = Encoder::new(schema);
    let p = schema.n_columns();
    let mut data = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    for row in rows {
        data.extend_from_slice(&encoder.encode(row)?);
        y.push(row.response_profit.to_dollars());
    }
    Ok(Design {
        x: DMatrix::from_row_slice(rows.len(), p, &data),
        y: DVector::from_vec(y),
        columns: schema.columns.clone(),
    })
}
