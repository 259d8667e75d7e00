//! Append-only settlement ledger (one JSON object per line) and replay.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EngineConfig, Market, MarketError, MarketTask};
use crate::allocation::AllocationConfig;
use crate::combination::{AvailabilityMask, QuantileLevel};

/// Everything needed to rebuild a market from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketHeader {
    pub task: MarketTask,
    pub sellers: Vec<String>,
    pub engine: EngineConfig,
    pub allocation: AllocationConfig,
    pub seed: u64,
}

/// Per model instance part of a settlement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub tau: QuantileLevel,
    pub horizon: usize,
    /// Submissions with missing sellers set to 0.
    pub x_hat: Vec<f64>,
    pub combined: f64,
    pub phi_s: Vec<f64>,
    pub phi_c: Vec<f64>,
    pub scores: Vec<f64>,
    pub r_is: Vec<f64>,
    pub r_oos: Vec<f64>,
    pub utility: f64,
    pub reward_is: Vec<f64>,
    pub reward_oos: Vec<f64>,
    pub reward: Vec<f64>,
    /// Post-update weights.
    pub w: Vec<f64>,
    /// Post-update correction matrix, row-major.
    pub d: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub seq: u64,
    pub t: u64,
    pub session: String,
    pub alpha: AvailabilityMask,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub late: Vec<String>,
    pub y: f64,
    pub utility: f64,
    pub degenerate: bool,
    pub levels: Vec<LevelRecord>,
    pub totals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerEntry {
    Header(MarketHeader),
    Join { seq: u64, seller: String },
    Settlement(SettlementRecord),
}

impl LedgerEntry {
    pub fn seq(&self) -> Option<u64> {
        match self {
            LedgerEntry::Header(_) => None,
            LedgerEntry::Join { seq, .. } => Some(*seq),
            LedgerEntry::Settlement(r) => Some(r.seq),
        }
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("ledger is empty")]
    Empty,
    #[error("entry {index}: the first entry must be the market header")]
    MissingHeader { index: usize },
    #[error("entry {index}: expected sequence number {expected}, found {found}")]
    Sequence {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("entry {index}: unexpected second header")]
    DuplicateHeader { index: usize },
    #[error("entry {index}: recomputed settlement differs from the recorded one")]
    Divergence { index: usize },
    #[error("entry {index}: {source}")]
    Market { index: usize, source: MarketError },
}

/// Writes entries as JSON lines.
pub fn write_ledger<W: Write>(mut out: W, entries: &[LedgerEntry]) -> Result<(), LedgerError> {
    for entry in entries {
        serde_json::to_writer(&mut out, entry).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines. A final line without a newline that fails to parse is
/// treated as a torn write and dropped.
pub fn read_ledger<R: BufRead>(mut input: R) -> Result<Vec<LedgerEntry>, LedgerError> {
    let mut entries = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if input.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(entry) => entries.push(entry),
            Err(_) if !complete => break,
            Err(source) => {
                return Err(LedgerError::Parse {
                    line: line_no,
                    source,
                })
            }
        }
    }
    Ok(entries)
}

/// Rebuilds a market by re-executing every recorded settlement, checking each
/// recomputed record against the ledger.
pub fn replay_ledger(entries: &[LedgerEntry]) -> Result<Market, LedgerError> {
    let (first, rest) = entries.split_first().ok_or(LedgerError::Empty)?;
    let LedgerEntry::Header(header) = first else {
        return Err(LedgerError::MissingHeader { index: 0 });
    };
    let mut market = Market::from_header(header.clone())
        .map_err(|source| LedgerError::Market { index: 0, source })?;

    for (offset, entry) in rest.iter().enumerate() {
        let index = offset + 1;
        let expected = market.next_seq();
        let market_err = |source| LedgerError::Market { index, source };
        match entry {
            LedgerEntry::Header(_) => return Err(LedgerError::DuplicateHeader { index }),
            LedgerEntry::Join { seq, seller } => {
                check_seq(index, expected, *seq)?;
                market.register_seller(seller).map_err(market_err)?;
            }
            LedgerEntry::Settlement(record) => {
                check_seq(index, expected, record.seq)?;
                let replayed = resettle(&mut market, record).map_err(market_err)?;
                if &replayed != record {
                    return Err(LedgerError::Divergence { index });
                }
            }
        }
    }
    Ok(market)
}

fn check_seq(index: usize, expected: u64, found: u64) -> Result<(), LedgerError> {
    if expected != found {
        return Err(LedgerError::Sequence {
            index,
            expected,
            found,
        });
    }
    Ok(())
}

fn resettle(
    market: &mut Market,
    record: &SettlementRecord,
) -> Result<SettlementRecord, MarketError> {
    let n = market.registry().len();
    if record.alpha.len() != n || record.levels.iter().any(|l| l.x_hat.len() != n) {
        return Err(MarketError::Malformed(
            "record width does not match the seller registry".into(),
        ));
    }
    let ids: Vec<String> = market.registry().ids().map(str::to_owned).collect();
    market.open_session(record.t)?;
    for (i, id) in ids.iter().enumerate() {
        if record.alpha.is_missing(i) {
            continue;
        }
        let values: Vec<f64> = record.levels.iter().map(|l| l.x_hat[i]).collect();
        market.submit_forecast(record.t, id, &values)?;
    }
    market.close_and_aggregate(record.t)?;
    for late in &record.late {
        match market.submit_forecast(record.t, late, &[]) {
            Err(MarketError::LateSubmission { .. }) => {}
            Err(other) => return Err(other),
            Ok(_) => {
                return Err(MarketError::Malformed(
                    "late submission accepted on replay".into(),
                ))
            }
        }
    }
    market.settle_session(record.t, record.y, record.utility)
}
