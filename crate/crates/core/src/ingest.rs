//! Transaction-log ingestion: CSV parsing, provenance-chain reconstruction,
//! flip derivation, and counterparty-diversity entropies.
//!
//! The input schema is a 12-column CSV (header required, exact order):
//! `moment_unique_id, moment_id, player_id, set_id, seller_id, buyer_id,
//! play_category, limited_flag, circulation_count, transaction_time,
//! transaction_id, sale_price`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Usd;

/// Column names of the input CSV, in required order.
pub const CSV_COLUMNS: [&str; 12] = [
    "moment_unique_id",
    "moment_id",
    "player_id",
    "set_id",
    "seller_id",
    "buyer_id",
    "play_category",
    "limited_flag",
    "circulation_count",
    "transaction_time",
    "transaction_id",
    "sale_price",
];

/// The type of play captured by a collectible clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlayCategory {
    Assist,
    Block,
    Dunk,
    Handles,
    JumpShot,
    Layup,
    Steal,
    ThreePointer,
}

impl PlayCategory {
    pub const ALL: [PlayCategory; 8] = [
        PlayCategory::Assist,
        PlayCategory::Block,
        PlayCategory::Dunk,
        PlayCategory::Handles,
        PlayCategory::JumpShot,
        PlayCategory::Layup,
        PlayCategory::Steal,
        PlayCategory::ThreePointer,
    ];

    /// Marketplace display string, used verbatim in the CSV.
    pub fn display_name(self) -> &'static str {
        match self {
            PlayCategory::Assist => "Assist",
            PlayCategory::Block => "Block",
            PlayCategory::Dunk => "Dunk",
            PlayCategory::Handles => "Handles",
            PlayCategory::JumpShot => "Jump Shot",
            PlayCategory::Layup => "Layup",
            PlayCategory::Steal => "Steal",
            PlayCategory::ThreePointer => "3 Pointer",
        }
    }

    pub fn from_display(s: &str) -> Option<PlayCategory> {
        Self::ALL.into_iter().find(|c| c.display_name() == s)
    }
}

impl fmt::Display for PlayCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// One marketplace sale event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    /// Identity of the physical copy.
    pub moment_unique_id: String,
    /// Parent collectible design.
    pub moment_id: String,
    pub player_id: String,
    pub set_id: String,
    pub seller_id: String,
    pub buyer_id: String,
    pub play_category: PlayCategory,
    pub limited_flag: bool,
    /// Copies in existence at sale time; at least 1.
    pub circulation_count: u32,
    /// UTC, second precision.
    pub transaction_time: DateTime<Utc>,
    /// Unique across the dataset.
    pub transaction_id: String,
    /// Nonnegative.
    pub sale_price: Usd,
}

/// Why a CSV row was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RowError {
    /// Bad type, enum value, or violated per-field invariant.
    MalformedRow { field: &'static str, reason: String },
    DuplicateTransactionId { transaction_id: String },
    /// seller_id == buyer_id.
    SelfTrade,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowError::MalformedRow { field, reason } => {
                write!(f, "malformed field {field}: {reason}")
            }
            RowError::DuplicateTransactionId { transaction_id } => {
                write!(f, "duplicate transaction_id {transaction_id}")
            }
            RowError::SelfTrade => write!(f, "seller_id equals buyer_id"),
        }
    }
}

/// A rejected row: 1-based data-row number (header excluded) plus reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowReject {
    pub row: u64,
    pub reason: RowError,
}

/// Parse result: accepted transactions in file order plus per-row rejects.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub transactions: Vec<Transaction>,
    pub rejects: Vec<RowReject>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing header row")]
    MissingHeader,
    #[error("header mismatch at column {index}: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("csv read error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("user {user} has no events in role {role}")]
    NoEventsInRole { user: String, role: Role },
}

/// Parses the transaction CSV. Well-formed rows are returned in file order;
/// rows violating field invariants are collected as rejects with their
/// 1-based data-row number.
pub fn parse_transactions<R: Read>(source: R) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(IngestError::MissingHeader),
    };
    if header.len() != CSV_COLUMNS.len() {
        return Err(IngestError::HeaderMismatch {
            index: header.len().min(CSV_COLUMNS.len()),
            expected: CSV_COLUMNS.get(header.len()).copied().unwrap_or(""),
            found: format!("{} columns", header.len()),
        });
    }
    for (i, expected) in CSV_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*expected) {
            return Err(IngestError::HeaderMismatch {
                index: i,
                expected,
                found: header.get(i).unwrap_or("").to_string(),
            });
        }
    }

    let mut transactions = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, record) in records.enumerate() {
        let record = record?;
        let row_no = idx as u64 + 1;
        match parse_row(&record) {
            Ok(tx) => {
                if !seen_ids.insert(tx.transaction_id.clone()) {
                    rejects.push(RowReject {
                        row: row_no,
                        reason: RowError::DuplicateTransactionId {
                            transaction_id: tx.transaction_id,
                        },
                    });
                } else {
                    transactions.push(tx);
                }
            }
            Err(reason) => rejects.push(RowReject {
                row: row_no,
                reason,
            }),
        }
    }
    Ok(ParseOutcome {
        transactions,
        rejects,
    })
}

fn parse_row(record: &csv::StringRecord) -> Result<Transaction, RowError> {
    if record.len() != CSV_COLUMNS.len() {
        return Err(RowError::MalformedRow {
            field: "row",
            reason: format!("expected 12 columns, found {}", record.len()),
        });
    }
    let field = |i: usize| record.get(i).unwrap_or("");
    let non_empty = |i: usize, name: &'static str| -> Result<String, RowError> {
        let v = field(i);
        if v.is_empty() {
            Err(RowError::MalformedRow {
                field: name,
                reason: "empty".to_string(),
            })
        } else {
            Ok(v.to_string())
        }
    };

    let moment_unique_id = non_empty(0, "moment_unique_id")?;
    let moment_id = non_empty(1, "moment_id")?;
    let player_id = non_empty(2, "player_id")?;
    let set_id = non_empty(3, "set_id")?;
    let seller_id = non_empty(4, "seller_id")?;
    let buyer_id = non_empty(5, "buyer_id")?;
    if seller_id == buyer_id {
        return Err(RowError::SelfTrade);
    }
    let play_category =
        PlayCategory::from_display(field(6)).ok_or_else(|| RowError::MalformedRow {
            field: "play_category",
            reason: format!("unknown category {:?}", field(6)),
        })?;
    let limited_flag = match field(7) {
        "0" => false,
        "1" => true,
        other => {
            return Err(RowError::MalformedRow {
                field: "limited_flag",
                reason: format!("expected 0 or 1, found {other:?}"),
            })
        }
    };
    let circulation_count: u32 = field(8).parse().map_err(|_| RowError::MalformedRow {
        field: "circulation_count",
        reason: format!("not a nonnegative integer: {:?}", field(8)),
    })?;
    if circulation_count < 1 {
        return Err(RowError::MalformedRow {
            field: "circulation_count",
            reason: "must be at least 1".to_string(),
        });
    }
    let transaction_time = parse_timestamp(field(9)).ok_or_else(|| RowError::MalformedRow {
        field: "transaction_time",
        reason: format!("not an ISO-8601 timestamp: {:?}", field(9)),
    })?;
    let transaction_id = non_empty(10, "transaction_id")?;
    let sale_price = Usd::parse(field(11)).map_err(|e| RowError::MalformedRow {
        field: "sale_price",
        reason: e.to_string(),
    })?;
    if sale_price.is_negative() {
        return Err(RowError::MalformedRow {
            field: "sale_price",
            reason: "negative sale price".to_string(),
        });
    }

    Ok(Transaction {
        moment_unique_id,
        moment_id,
        player_id,
        set_id,
        seller_id,
        buyer_id,
        play_category,
        limited_flag,
        circulation_count,
        transaction_time,
        transaction_id,
        sale_price,
    })
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    // Naive form without an offset is taken as UTC.
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|n| n.and_utc())
}

/// Canonical timestamp rendering used when serializing.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes transactions in the canonical CSV form (the fixed point of
/// parse → serialize → parse).
pub fn write_transactions_csv<W: Write>(out: W, txs: &[Transaction]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for tx in txs {
        w.write_record([
            tx.moment_unique_id.as_str(),
            tx.moment_id.as_str(),
            tx.player_id.as_str(),
            tx.set_id.as_str(),
            tx.seller_id.as_str(),
            tx.buyer_id.as_str(),
            tx.play_category.display_name(),
            if tx.limited_flag { "1" } else { "0" },
            &tx.circulation_count.to_string(),
            &format_timestamp(tx.transaction_time),
            tx.transaction_id.as_str(),
            &tx.sale_price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Time-ordered transactions of one physical copy with unbroken
/// buyer→seller continuity. Events index into the source transaction slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceChain {
    pub moment_unique_id: String,
    pub events: Vec<usize>,
}

/// A continuity break: the buyer of `after` did not reappear as the seller
/// of `before`, so the copy changed hands off-market in between.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceBreak {
    pub moment_unique_id: String,
    /// Last event (index into the source slice) of the earlier segment.
    pub after: usize,
    /// First event of the later segment.
    pub before: usize,
}

/// Reconstructed provenance: a partition of all transactions into chain
/// segments, plus the reported continuity breaks.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub chains: Vec<ProvenanceChain>,
    pub breaks: Vec<ProvenanceBreak>,
}

/// Groups transactions by unique copy, orders each group by
/// `(transaction_time, transaction_id)`, and splits at continuity breaks.
pub fn build_provenance(txs: &[Transaction]) -> Provenance {
    let mut by_copy: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, tx) in txs.iter().enumerate() {
        by_copy.entry(&tx.moment_unique_id).or_default().push(i);
    }
    let mut copy_ids: Vec<&str> = by_copy.keys().copied().collect();
    copy_ids.sort_unstable();

    let mut provenance = Provenance::default();
    for copy in copy_ids {
        let mut events = by_copy.remove(copy).unwrap();
        events.sort_by(|&a, &b| {
            let ta = (&txs[a].transaction_time, &txs[a].transaction_id);
            let tb = (&txs[b].transaction_time, &txs[b].transaction_id);
            ta.cmp(&tb)
        });
        let mut segment: Vec<usize> = Vec::new();
        for idx in events {
            if let Some(&prev) = segment.last() {
                if txs[prev].buyer_id != txs[idx].seller_id {
                    provenance.breaks.push(ProvenanceBreak {
                        moment_unique_id: copy.to_string(),
                        after: prev,
                        before: idx,
                    });
                    provenance.chains.push(ProvenanceChain {
                        moment_unique_id: copy.to_string(),
                        events: std::mem::take(&mut segment),
                    });
                }
            }
            segment.push(idx);
        }
        if !segment.is_empty() {
            provenance.chains.push(ProvenanceChain {
                moment_unique_id: copy.to_string(),
                events: segment,
            });
        }
    }
    provenance
}

/// A matched buy→sell of one physical copy by one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub moment_unique_id: String,
    pub moment_id: String,
    /// The flipper: buyer of the earlier event, seller of the later one.
    pub seller_id: String,
    /// Buyer of the sale event.
    pub buyer_id: String,
    pub bought_price: Usd,
    pub sold_price: Usd,
    /// `sold_price - bought_price`, exact; may be negative.
    pub profit: Usd,
    /// Prior trades of this copy before the sale (1-based position of the
    /// purchase event within its chain segment).
    pub trade_count: u32,
    /// Index of the sale event in the source transaction slice.
    pub sale_tx: usize,
    pub sale_transaction_id: String,
    pub sale_time: DateTime<Utc>,
}

/// Emits one flip per consecutive event pair in each chain. The first event
/// of a chain produces no flip (its acquisition price is unknown).
pub fn derive_flips(provenance: &Provenance, txs: &[Transaction]) -> Vec<Flip> {
    let mut flips = Vec::new();
    for chain in &provenance.chains {
        for (k, pair) in chain.events.windows(2).enumerate() {
            let buy = &txs[pair[0]];
            let sell = &txs[pair[1]];
            flips.push(Flip {
                moment_unique_id: chain.moment_unique_id.clone(),
                moment_id: sell.moment_id.clone(),
                seller_id: sell.seller_id.clone(),
                buyer_id: sell.buyer_id.clone(),
                bought_price: buy.sale_price,
                sold_price: sell.sale_price,
                profit: sell.sale_price - buy.sale_price,
                trade_count: (k + 1) as u32,
                sale_tx: pair[1],
                sale_transaction_id: sell.transaction_id.clone(),
                sale_time: sell.transaction_time,
            });
        }
    }
    flips
}

/// Side of a trade a user acted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Seller,
    Buyer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Seller => "Seller",
            Role::Buyer => "Buyer",
        })
    }
}

/// Normalized counterparty-diversity entropy of one user in one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityScore {
    pub user_id: String,
    pub role: Role,
    /// In [0, 1]; 0 when all events share one counterparty, 1 when spread
    /// evenly over all N-1 possible counterparties.
    pub entropy: f64,
    pub event_count: u64,
    /// Total distinct users in the dataset (the N of the normalizer).
    pub n_universe: u64,
}

/// Distinct users appearing anywhere in the dataset.
pub fn user_universe(txs: &[Transaction]) -> HashSet<&str> {
    let mut users = HashSet::with_capacity(txs.len() / 2);
    for tx in txs {
        users.insert(tx.seller_id.as_str());
        users.insert(tx.buyer_id.as_str());
    }
    users
}

/// Normalized entropy of the user's counterparty distribution in `role`.
///
/// `entropy = (1/ln(N-1)) * Σ_k p_k ln(1/p_k)` with `p_k` the fraction of
/// the user's events in that role with counterparty `k`, and `N` the
/// dataset-wide distinct-user count. Defined as 0 when `N = 2`.
pub fn diversity(user: &str, role: Role, txs: &[Transaction]) -> Result<DiversityScore, IngestError> {
    let universe = user_universe(txs);
    if !universe.contains(user) {
        return Err(IngestError::UnknownUser(user.to_string()));
    }
    diversity_with_universe(user, role, txs, universe.len() as u64)
}

fn diversity_with_universe(
    user: &str,
    role: Role,
    txs: &[Transaction],
    n_universe: u64,
) -> Result<DiversityScore, IngestError> {
    let mut counterparty_counts: HashMap<&str, u64> = HashMap::new();
    let mut event_count = 0u64;
    for tx in txs {
        let counterparty = match role {
            Role::Seller if tx.seller_id == user => tx.buyer_id.as_str(),
            Role::Buyer if tx.buyer_id == user => tx.seller_id.as_str(),
            _ => continue,
        };
        *counterparty_counts.entry(counterparty).or_insert(0) += 1;
        event_count += 1;
    }
    if event_count == 0 {
        return Err(IngestError::NoEventsInRole {
            user: user.to_string(),
            role,
        });
    }
    let entropy = normalized_entropy(counterparty_counts.values().copied(), n_universe);
    Ok(DiversityScore {
        user_id: user.to_string(),
        role,
        entropy,
        event_count,
        n_universe,
    })
}

fn normalized_entropy(counts: impl Iterator<Item = u64>, n_universe: u64) -> f64 {
    if n_universe <= 2 {
        return 0.0;
    }
    // Summation order is fixed by sorting so the result is bit-stable
    // regardless of hash-map iteration order.
    let mut counts: Vec<u64> = counts.filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let total: u64 = counts.iter().sum();
    let total_f = total as f64;
    let raw: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total_f;
            -p * p.ln()
        })
        .sum();
    (raw / ((n_universe - 1) as f64).ln()).clamp(0.0, 1.0)
}

/// Diversity scores for every user with at least one event in `role`,
/// ordered by user id. Computed in parallel over users.
pub fn diversity_all(role: Role, txs: &[Transaction]) -> Vec<DiversityScore> {
    let n_universe = user_universe(txs).len() as u64;
    let mut by_user: HashMap<&str, HashMap<&str, u64>> = HashMap::new();
    for tx in txs {
        let (user, counterparty) = match role {
            Role::Seller => (tx.seller_id.as_str(), tx.buyer_id.as_str()),
            Role::Buyer => (tx.buyer_id.as_str(), tx.seller_id.as_str()),
        };
        *by_user
            .entry(user)
            .or_default()
            .entry(counterparty)
            .or_insert(0) += 1;
    }
    let mut users: Vec<(&str, HashMap<&str, u64>)> = by_user.into_iter().collect();
    users.sort_unstable_by_key(|(u, _)| *u);
    users
        .into_par_iter()
        .map(|(user, counts)| {
            let event_count = counts.values().sum();
            DiversityScore {
                user_id: user.to_string(),
                role,
                entropy: normalized_entropy(counts.values().copied(), n_universe),
                event_count,
                n_universe,
            }
        })
        .collect()
}
