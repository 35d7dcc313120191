//! Daily OHLCV ingestion, cleaning and chronological train/test splitting.
//!
//! Two sources are supported: a JSON archive (a directory of files, each an
//! array of daily records) and per-symbol CSV files with the header
//! `date,open,high,low,close,volume[,prev_close]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Prices with a larger magnitude are treated as corrupt.
pub const MAX_PRICE_MAGNITUDE: f64 = 1e12;

/// One trading day for one symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub prev_close: Option<f64>,
}

impl StockBar {
    /// Checks every invariant a cleaned bar must satisfy.
    pub fn is_valid(&self) -> bool {
        let prices = [self.open, self.high, self.low, self.close];
        let finite = prices
            .iter()
            .chain(self.prev_close.iter())
            .all(|p| p.is_finite() && p.abs() <= MAX_PRICE_MAGNITUDE);
        finite
            && self.open > 0.0
            && self.low <= self.open.min(self.close)
            && self.high >= self.open.max(self.close)
    }

    fn same_record(&self, other: &StockBar) -> bool {
        self.date == other.date
            && self.open.to_bits() == other.open.to_bits()
            && self.high.to_bits() == other.high.to_bits()
            && self.low.to_bits() == other.low.to_bits()
            && self.close.to_bits() == other.close.to_bits()
            && self.volume == other.volume
    }
}

/// Chronologically ordered bars of a single symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSeries {
    pub symbol: String,
    pub bars: Vec<StockBar>,
}

impl SymbolSeries {
    /// Builds a series, sorting by date and collapsing exact duplicates.
    pub fn new(symbol: impl Into<String>, bars: Vec<StockBar>) -> Self {
        let mut series = SymbolSeries {
            symbol: symbol.into(),
            bars,
        };
        series.normalize();
        series
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    fn normalize(&mut self) {
        // stable: rows sharing a date keep their file order
        self.bars.sort_by_key(|b| b.date);
        let mut kept: Vec<StockBar> = Vec::with_capacity(self.bars.len());
        for bar in self.bars.drain(..) {
            let duplicate = kept
                .iter()
                .rev()
                .take_while(|k| k.date == bar.date)
                .any(|k| k.same_record(&bar));
            if duplicate {
                continue;
            }
            if kept.last().is_some_and(|k| k.date == bar.date) {
                log::warn!(
                    "{}: conflicting rows share date {}; keeping both",
                    self.symbol,
                    bar.date
                );
            }
            kept.push(bar);
        }
        self.bars = kept;
    }
}

/// Result of splitting a series in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub train: SymbolSeries,
    pub test: SymbolSeries,
}

/// Series loaded from an archive plus the number of rejected records.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveLoad {
    pub series: Vec<SymbolSeries>,
    pub skipped: usize,
    pub files: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub series: SymbolSeries,
    pub skipped: usize,
}

const SYMBOL_KEYS: &[&str] = &["symbol", "trading_code"];
const DATE_KEYS: &[&str] = &["date"];
const OPEN_KEYS: &[&str] = &["open", "opening_price"];
const HIGH_KEYS: &[&str] = &["high"];
const LOW_KEYS: &[&str] = &["low"];
const CLOSE_KEYS: &[&str] = &["close", "closing_price"];
const VOLUME_KEYS: &[&str] = &["volume"];
const PREV_CLOSE_KEYS: &[&str] = &["prev_close", "yesterdays_closing_price"];

/// Loads every `.json` file under `path` (or `path` itself if it is a file).
///
/// Each file holds an array of objects. The symbol comes from a `symbol`
/// field when present, otherwise from the file stem. Records that cannot be
/// parsed are skipped and counted.
pub fn load_json_archive(path: &Path) -> Result<ArchiveLoad> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let p = entry.path();
            if p.is_file() && p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("json")) {
                files.push(p);
            }
        }
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut by_symbol: BTreeMap<String, Vec<StockBar>> = BTreeMap::new();
    let mut skipped = 0;
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: file.clone(),
            message: e.to_string(),
        })?;
        let records = doc.as_array().ok_or_else(|| Error::Format {
            path: file.clone(),
            message: "expected a top-level array of records".into(),
        })?;
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for record in records {
            match parse_json_record(record) {
                Some((symbol, bar)) => {
                    let symbol = symbol.unwrap_or_else(|| stem.clone());
                    by_symbol.entry(symbol).or_default().push(bar);
                }
                None => skipped += 1,
            }
        }
    }

    if by_symbol.is_empty() {
        return Err(Error::EmptyArchive(path.to_path_buf()));
    }
    let series = by_symbol
        .into_iter()
        .map(|(symbol, bars)| SymbolSeries::new(symbol, bars))
        .collect();
    Ok(ArchiveLoad {
        series,
        skipped,
        files: files.len(),
    })
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k)).filter(|v| !v.is_null())
}

fn json_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn json_volume(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64().or_else(|| n.as_f64().and_then(volume_from_f64)),
        Value::String(s) => parse_volume(s),
        _ => None,
    }
}

fn volume_from_f64(x: f64) -> Option<u64> {
    (x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64).then_some(x as u64)
}

fn parse_volume(s: &str) -> Option<u64> {
    let s = s.trim();
    s.parse::<u64>()
        .ok()
        .or_else(|| s.parse::<f64>().ok().and_then(volume_from_f64))
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    // tolerate a trailing time component such as "2008-03-06T00:00:00"
    let day = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

fn parse_json_record(record: &Value) -> Option<(Option<String>, StockBar)> {
    let obj = record.as_object()?;
    let symbol = field(obj, SYMBOL_KEYS).and_then(|v| match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        _ => None,
    });
    let date = field(obj, DATE_KEYS)?.as_str().and_then(parse_date)?;
    let prev_close = match field(obj, PREV_CLOSE_KEYS) {
        Some(v) => Some(json_f64(v)?),
        None => None,
    };
    let bar = StockBar {
        date,
        open: json_f64(field(obj, OPEN_KEYS)?)?,
        high: json_f64(field(obj, HIGH_KEYS)?)?,
        low: json_f64(field(obj, LOW_KEYS)?)?,
        close: json_f64(field(obj, CLOSE_KEYS)?)?,
        volume: json_volume(field(obj, VOLUME_KEYS)?)?,
        prev_close,
    };
    Some((symbol, bar))
}

const REQUIRED_COLUMNS: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

/// Loads one symbol's bars from a CSV file.
pub fn load_csv(path: &Path, symbol: &str) -> Result<CsvLoad> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, symbol)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, path: &Path, symbol: &str) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
    };
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = position(name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })?;
    }
    let prev_idx = position("prev_close");

    let mut bars = Vec::new();
    let mut skipped = 0;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let cell = |i: usize| row.get(i).unwrap_or("");
        let price = |i: usize| cell(i).parse::<f64>().ok();
        let prev_close = match prev_idx.map(cell) {
            None | Some("") => Some(None),
            Some(s) => s.parse::<f64>().ok().map(Some),
        };
        let bar = (|| {
            Some(StockBar {
                date: parse_date(cell(idx[0]))?,
                open: price(idx[1])?,
                high: price(idx[2])?,
                low: price(idx[3])?,
                close: price(idx[4])?,
                volume: parse_volume(cell(idx[5]))?,
                prev_close: prev_close?,
            })
        })();
        match bar {
            Some(bar) => bars.push(bar),
            None => skipped += 1,
        }
    }
    Ok(CsvLoad {
        series: SymbolSeries::new(symbol, bars),
        skipped,
    })
}

/// Writes a series in the ingestion CSV format.
pub fn write_csv<W: std::io::Write>(series: &SymbolSeries, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "open", "high", "low", "close", "volume", "prev_close"])?;
    for bar in &series.bars {
        let prev = bar.prev_close.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([
            bar.date.format("%Y-%m-%d").to_string(),
            bar.open.to_string(),
            bar.high.to_string(),
            bar.low.to_string(),
            bar.close.to_string(),
            bar.volume.to_string(),
            prev,
        ])?;
    }
    w.flush()
}

/// Drops bars violating the price invariants and collapses exact duplicates.
pub fn clean(series: &SymbolSeries) -> SymbolSeries {
    let bars = series.bars.iter().filter(|b| b.is_valid()).cloned().collect();
    SymbolSeries::new(series.symbol.clone(), bars)
}

/// Splits without shuffling: the first `floor(train_fraction * len)` bars
/// train, the rest test.
pub fn chronological_split(series: &SymbolSeries, train_fraction: f64) -> Result<SplitSeries> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: series.len(),
        });
    }
    let n_train = (train_fraction * series.len() as f64).floor() as usize;
    let (train, test) = series.bars.split_at(n_train);
    Ok(SplitSeries {
        train: SymbolSeries {
            symbol: series.symbol.clone(),
            bars: train.to_vec(),
        },
        test: SymbolSeries {
            symbol: series.symbol.clone(),
            bars: test.to_vec(),
        },
    })
}
