use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{atomic_write, ensure_dir, fmt_f64, IoError};
use crate::combination::{quantile_loss, QuantileLevel};
use crate::market::{LedgerEntry, MarketHeader, SettlementRecord};
use crate::scenario::{Method, MonteCarloResult, WeightErrorStats};

pub const LEDGER_FILE: &str = "ledger.jsonl";

/// Cumulative pinball loss per model instance.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub tau: QuantileLevel,
    pub horizon: usize,
    /// Summed over the rounds each seller submitted.
    pub sellers: Vec<f64>,
    pub rounds: Vec<usize>,
    pub combined: f64,
    pub settlements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSummary {
    pub sellers: Vec<String>,
    pub rows: Vec<LossRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardSummary {
    pub sellers: Vec<String>,
    pub in_sample: Vec<f64>,
    pub out_of_sample: Vec<f64>,
    pub total: Vec<f64>,
    pub utility: f64,
}

struct Parsed<'a> {
    header: &'a MarketHeader,
    sellers: Vec<String>,
    settlements: Vec<&'a SettlementRecord>,
}

fn parse(entries: &[LedgerEntry]) -> Result<Parsed<'_>, IoError> {
    let Some(LedgerEntry::Header(header)) = entries.first() else {
        return Err(IoError::Invalid(
            "ledger does not start with a header".into(),
        ));
    };
    let mut sellers = header.sellers.clone();
    let mut settlements = Vec::new();
    for entry in &entries[1..] {
        match entry {
            LedgerEntry::Header(_) => {
                return Err(IoError::Invalid("ledger has a second header".into()))
            }
            LedgerEntry::Join { seller, .. } => sellers.push(seller.clone()),
            LedgerEntry::Settlement(record) => settlements.push(record),
        }
    }
    if settlements.is_empty() {
        return Err(IoError::Invalid("ledger has no settlements".into()));
    }
    Ok(Parsed {
        header,
        sellers,
        settlements,
    })
}

pub fn loss_summary(entries: &[LedgerEntry]) -> Result<LossSummary, IoError> {
    let parsed = parse(entries)?;
    let n = parsed.sellers.len();
    let mut rows: Vec<LossRow> = parsed
        .header
        .task
        .instances()
        .map(|(tau, horizon)| LossRow {
            tau,
            horizon,
            sellers: vec![0.0; n],
            rounds: vec![0; n],
            combined: 0.0,
            settlements: 0,
        })
        .collect();
    for record in &parsed.settlements {
        for (row, level) in rows.iter_mut().zip(&record.levels) {
            for (i, &x) in level.x_hat.iter().enumerate() {
                if !record.alpha.is_missing(i) {
                    row.sellers[i] += quantile_loss(level.tau, record.y, x);
                    row.rounds[i] += 1;
                }
            }
            row.combined += quantile_loss(level.tau, record.y, level.combined);
            row.settlements += 1;
        }
    }
    Ok(LossSummary {
        sellers: parsed.sellers,
        rows,
    })
}

pub fn reward_summary(entries: &[LedgerEntry]) -> Result<RewardSummary, IoError> {
    let parsed = parse(entries)?;
    let n = parsed.sellers.len();
    let mut summary = RewardSummary {
        sellers: parsed.sellers,
        in_sample: vec![0.0; n],
        out_of_sample: vec![0.0; n],
        total: vec![0.0; n],
        utility: 0.0,
    };
    for record in &parsed.settlements {
        summary.utility += record.utility;
        for level in &record.levels {
            for (i, (a, b)) in level.reward_is.iter().zip(&level.reward_oos).enumerate() {
                summary.in_sample[i] += a;
                summary.out_of_sample[i] += b;
            }
        }
        for (acc, r) in summary.total.iter_mut().zip(&record.totals) {
            *acc += r;
        }
    }
    Ok(summary)
}

fn header_line(first: &[&str], sellers: &[String], last: &[&str]) -> String {
    let cols: Vec<String> = first
        .iter()
        .map(|s| s.to_string())
        .chain(sellers.iter().map(|s| csv_field(s)))
        .chain(last.iter().map(|s| s.to_string()))
        .collect();
    cols.join(",") + "\n"
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Values for all `n` columns; sellers not yet registered stay empty.
fn padded(values: &[f64], n: usize) -> String {
    (0..n)
        .map(|i| values.get(i).map_or(String::new(), |&v| fmt_f64(v)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Writes `weights.csv`, `rewards.csv`, `losses.csv` and `reward_totals.csv`
/// into `dir` and returns their paths.
pub fn emit_report(entries: &[LedgerEntry], dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let parsed = parse(entries)?;
    let sellers = &parsed.sellers;
    let n = sellers.len();
    ensure_dir(dir)?;

    let mut weights = header_line(&["t", "tau", "horizon"], sellers, &[]);
    let mut rewards = header_line(&["t"], sellers, &["utility"]);
    let mut cumulative = vec![0.0; n];
    let mut utility = 0.0;
    for record in &parsed.settlements {
        for level in &record.levels {
            let _ = writeln!(
                weights,
                "{},{},{},{}",
                record.t,
                level.tau,
                level.horizon,
                padded(&level.w, n)
            );
        }
        for (acc, r) in cumulative.iter_mut().zip(&record.totals) {
            *acc += r;
        }
        utility += record.utility;
        let _ = writeln!(
            rewards,
            "{},{},{}",
            record.t,
            padded(&cumulative, n),
            fmt_f64(utility)
        );
    }

    let losses = loss_summary(entries)?;
    let mut loss_text = header_line(&["tau", "horizon"], sellers, &["combined"]);
    for row in &losses.rows {
        let _ = writeln!(
            loss_text,
            "{},{},{},{}",
            row.tau,
            row.horizon,
            padded(&row.sellers, n),
            fmt_f64(row.combined)
        );
    }

    let totals = reward_summary(entries)?;
    let mut totals_text = String::from("seller,in_sample,out_of_sample,total\n");
    for i in 0..n {
        let _ = writeln!(
            totals_text,
            "{},{},{},{}",
            csv_field(&sellers[i]),
            fmt_f64(totals.in_sample[i]),
            fmt_f64(totals.out_of_sample[i]),
            fmt_f64(totals.total[i])
        );
    }

    let files = [
        ("weights.csv", weights),
        ("rewards.csv", rewards),
        ("losses.csv", loss_text),
        ("reward_totals.csv", totals_text),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        atomic_write(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Bias and variance rows: `method,rate,tau,seller,bias,bias_sd,var,var_sd`.
pub fn write_stats(
    path: &Path,
    rows: &[(Method, f64, Vec<WeightErrorStats>)],
) -> Result<(), IoError> {
    let mut text = String::from("method,rate,tau,seller,bias,bias_sd,var,var_sd\n");
    for (method, rate, stats) in rows {
        for s in stats {
            for i in 0..s.bias.len() {
                let _ = writeln!(
                    text,
                    "{method},{},{},{},{},{},{},{}",
                    fmt_f64(*rate),
                    s.tau,
                    i + 1,
                    fmt_f64(s.bias[i]),
                    fmt_f64(s.bias_sd[i]),
                    fmt_f64(s.var[i]),
                    fmt_f64(s.var_sd[i])
                );
            }
        }
    }
    atomic_write(path, text.as_bytes())
}

/// Per-step weights of the first `max_runs` runs:
/// `method,run,t,tau,seller,w_true,w_est,alpha`.
pub fn write_trajectories(
    path: &Path,
    results: &[MonteCarloResult],
    levels: &[QuantileLevel],
    n_sellers: usize,
    max_runs: usize,
) -> Result<(), IoError> {
    let mut text = String::from("method,run,t,tau,seller,w_true,w_est,alpha\n");
    for result in results {
        for tr in result.trajectories.iter().take(max_runs) {
            let horizon = tr.w_true.len() / n_sellers.max(1);
            for t in 0..horizon {
                for (q, tau) in levels.iter().enumerate() {
                    for i in 0..n_sellers {
                        let j = t * n_sellers + i;
                        let _ = writeln!(
                            text,
                            "{},{},{t},{tau},{},{},{},{}",
                            result.method,
                            tr.run,
                            i + 1,
                            fmt_f64(tr.w_true[j]),
                            fmt_f64(tr.w_est[q][j]),
                            tr.alpha[j] as u8
                        );
                    }
                }
            }
        }
    }
    atomic_write(path, text.as_bytes())
}
