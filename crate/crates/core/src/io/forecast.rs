use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use super::{atomic_write, fmt_f64, IoError};
use crate::combination::{AvailabilityMask, QuantileLevel};

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastRow {
    pub timestamp: u64,
    pub seller: String,
    pub horizon: usize,
    /// One value per configured level, nondecreasing.
    pub quantiles: Vec<f64>,
}

/// Seller quantile forecasts keyed by (timestamp, seller, horizon).
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastTable {
    pub levels: Vec<QuantileLevel>,
    pub horizon_steps: usize,
    /// Sellers in order of first appearance.
    pub sellers: Vec<String>,
    pub rows: Vec<ForecastRow>,
    index: BTreeMap<(u64, usize, usize), usize>,
    latest: HashMap<(usize, usize), u64>,
}

impl ForecastTable {
    pub fn new(levels: Vec<QuantileLevel>, horizon_steps: usize) -> Self {
        Self {
            levels,
            horizon_steps,
            sellers: Vec::new(),
            rows: Vec::new(),
            index: BTreeMap::new(),
            latest: HashMap::new(),
        }
    }

    /// Adds a row; `Err` carries the reason it was refused.
    pub fn push(&mut self, row: ForecastRow) -> Result<(), RowError> {
        if row.quantiles.len() != self.levels.len() {
            return Err(RowError::Malformed(format!(
                "expected {} quantiles, got {}",
                self.levels.len(),
                row.quantiles.len()
            )));
        }
        if row.horizon >= self.horizon_steps {
            return Err(RowError::Malformed(format!(
                "horizon {} outside 0..{}",
                row.horizon, self.horizon_steps
            )));
        }
        if row.quantiles.iter().any(|v| !v.is_finite()) {
            return Err(RowError::Malformed("non-finite quantile".into()));
        }
        if row.quantiles.windows(2).any(|w| w[0] > w[1]) {
            return Err(RowError::Malformed(
                "quantiles cross (must be nondecreasing in the level)".into(),
            ));
        }
        if row.seller.is_empty() {
            return Err(RowError::Malformed("empty seller id".into()));
        }
        let known = self.sellers.iter().position(|s| *s == row.seller);
        let seller = known.unwrap_or(self.sellers.len());
        let key = (row.timestamp, seller, row.horizon);
        if self.index.contains_key(&key) {
            return Err(RowError::Conflict(format!(
                "duplicate row for timestamp {}, seller `{}`, horizon {}",
                row.timestamp, row.seller, row.horizon
            )));
        }
        if let Some(&latest) = self
            .latest
            .get(&(seller, row.horizon))
            .filter(|&&l| l > row.timestamp)
        {
            return Err(RowError::Malformed(format!(
                "timestamp {} follows {latest} for seller `{}`, horizon {}",
                row.timestamp, row.seller, row.horizon
            )));
        }
        if known.is_none() {
            self.sellers.push(row.seller.clone());
        }
        self.latest.insert((seller, row.horizon), row.timestamp);
        self.index.insert(key, self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    /// Distinct timestamps, ascending.
    pub fn timestamps(&self) -> Vec<u64> {
        let mut ts: Vec<u64> = self.index.keys().map(|(t, _, _)| *t).collect();
        ts.dedup();
        ts
    }

    /// Seller `i`'s full submission at `t` in horizon-major layout, or `None`
    /// if any horizon is absent.
    pub fn submission(&self, t: u64, seller: usize) -> Option<Vec<f64>> {
        let mut values = Vec::with_capacity(self.levels.len() * self.horizon_steps);
        for h in 0..self.horizon_steps {
            let row = self.index.get(&(t, seller, h))?;
            values.extend_from_slice(&self.rows[*row].quantiles);
        }
        Some(values)
    }

    /// Missing flags at `t`: a seller is missing unless every horizon is present.
    pub fn alpha(&self, t: u64) -> AvailabilityMask {
        AvailabilityMask::from_missing(
            (0..self.sellers.len())
                .map(|i| self.submission(t, i).is_none())
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowError {
    Malformed(String),
    Conflict(String),
}

/// Realized values by timestamp, strictly increasing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Realizations {
    pub rows: Vec<(u64, f64)>,
}

fn level_header(tau: QuantileLevel) -> String {
    format!("q{tau}")
}

fn csv_error(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn map_csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::io(path, source),
        kind => csv_error(path, line, format!("{kind:?}")),
    }
}

/// Reads forecast rows from every file in order into one table.
///
/// Columns: `timestamp`, `seller`, `horizon` (optional when there is a single
/// horizon) and one `q<level>` column per configured level.
pub fn load_forecast_csv(
    paths: &[PathBuf],
    levels: &[QuantileLevel],
    horizon_steps: usize,
) -> Result<ForecastTable, IoError> {
    let mut table = ForecastTable::new(levels.to_vec(), horizon_steps);
    for path in paths {
        let mut reader = open_reader(path)?;
        let headers = reader
            .headers()
            .map_err(|e| map_csv_error(path, e))?
            .clone();
        let position: HashMap<&str, usize> =
            headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let column = |name: &str| {
            position
                .get(name)
                .copied()
                .ok_or_else(|| csv_error(path, 1, format!("missing column `{name}`")))
        };
        let ts_col = column("timestamp")?;
        let seller_col = column("seller")?;
        let horizon_col = match position.get("horizon") {
            Some(&i) => Some(i),
            None if horizon_steps == 1 => None,
            None => return Err(csv_error(path, 1, "missing column `horizon`")),
        };
        let level_cols = levels
            .iter()
            .map(|&tau| column(&level_header(tau)))
            .collect::<Result<Vec<_>, _>>()?;
        let expected = 2 + horizon_col.is_some() as usize + levels.len();
        if headers.len() != expected {
            let known: Vec<String> = ["timestamp", "seller", "horizon"]
                .iter()
                .map(|s| s.to_string())
                .chain(levels.iter().map(|&t| level_header(t)))
                .collect();
            let extra = headers
                .iter()
                .find(|h| !known.iter().any(|k| k == h))
                .unwrap_or("?");
            return Err(csv_error(path, 1, format!("unexpected column `{extra}`")));
        }

        for record in reader.records() {
            let record = record.map_err(|e| map_csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or("");
            let timestamp: u64 = field(ts_col)
                .parse()
                .map_err(|_| csv_error(path, line, format!("bad timestamp `{}`", field(ts_col))))?;
            let horizon: usize = match horizon_col {
                None => 0,
                Some(c) => field(c)
                    .parse()
                    .map_err(|_| csv_error(path, line, format!("bad horizon `{}`", field(c))))?,
            };
            let quantiles = level_cols
                .iter()
                .map(|&c| {
                    field(c)
                        .parse::<f64>()
                        .map_err(|_| csv_error(path, line, format!("bad number `{}`", field(c))))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let row = ForecastRow {
                timestamp,
                seller: field(seller_col).to_string(),
                horizon,
                quantiles,
            };
            table.push(row).map_err(|e| match e {
                RowError::Malformed(message) => csv_error(path, line, message),
                RowError::Conflict(message) => IoError::Conflict {
                    path: path.clone(),
                    line,
                    message,
                },
            })?;
        }
    }
    Ok(table)
}

pub fn write_forecast_csv(path: &Path, table: &ForecastTable) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["timestamp".to_string(), "seller".into(), "horizon".into()];
    header.extend(table.levels.iter().map(|&t| level_header(t)));
    writer
        .write_record(&header)
        .map_err(|e| map_csv_error(path, e))?;
    for row in &table.rows {
        let mut fields = vec![
            row.timestamp.to_string(),
            row.seller.clone(),
            row.horizon.to_string(),
        ];
        fields.extend(row.quantiles.iter().map(|&v| fmt_f64(v)));
        writer
            .write_record(&fields)
            .map_err(|e| map_csv_error(path, e))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    atomic_write(path, &bytes)
}

/// Reads `timestamp,y` rows with strictly increasing timestamps.
pub fn load_realizations_csv(path: &Path) -> Result<Realizations, IoError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| map_csv_error(path, e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "y"] {
        return Err(csv_error(path, 1, "expected columns `timestamp,y`"));
    }
    let mut out = Realizations::default();
    for record in reader.records() {
        let record = record.map_err(|e| map_csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: u64 = record[0]
            .parse()
            .map_err(|_| csv_error(path, line, format!("bad timestamp `{}`", &record[0])))?;
        let y: f64 = record[1]
            .parse()
            .ok()
            .filter(|y: &f64| y.is_finite())
            .ok_or_else(|| csv_error(path, line, format!("bad realization `{}`", &record[1])))?;
        if let Some(&(prev, _)) = out.rows.last() {
            if t == prev {
                return Err(IoError::Conflict {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate timestamp {t}"),
                });
            }
            if t < prev {
                return Err(csv_error(
                    path,
                    line,
                    format!("timestamp {t} follows {prev}"),
                ));
            }
        }
        out.rows.push((t, y));
    }
    Ok(out)
}

pub fn write_realizations_csv(path: &Path, realizations: &Realizations) -> Result<(), IoError> {
    let mut text = String::from("timestamp,y\n");
    for (t, y) in &realizations.rows {
        text.push_str(&format!("{t},{}\n", fmt_f64(*y)));
    }
    atomic_write(path, text.as_bytes())
}
