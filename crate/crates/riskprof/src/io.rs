//! Problem-instance JSON, historical-price CSV, and the ingestion that
//! turns price series into empirical marginal distributions.
//!
//! Both loaders treat their input as untrusted: everything is
//! re-validated through the domain constructors, and parse failures come
//! back as errors rather than panics.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::numeric::kahan_sum;
use crate::return_model::{MarginalDistribution, ReturnGrid};
use crate::{Error, Result};

/// A loaded problem instance: the grid and one named marginal per stock.
#[derive(Debug, Clone)]
pub struct Instance {
    pub grid: ReturnGrid,
    pub stocks: Vec<StockEntry>,
}

#[derive(Debug, Clone)]
pub struct StockEntry {
    pub name: String,
    pub dist: MarginalDistribution,
}

impl Instance {
    pub fn marginals(&self) -> Vec<MarginalDistribution> {
        self.stocks.iter().map(|s| s.dist.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    mu: f64,
    m1: i64,
    m2: i64,
    stocks: Vec<RawStock>,
}

#[derive(Serialize, Deserialize)]
struct RawStock {
    name: String,
    probs: Vec<RawNumber>,
}

/// Probabilities arrive as doubles or as decimal strings.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Num(f64),
    Text(String),
}

impl RawNumber {
    fn value(&self) -> Result<f64> {
        match self {
            RawNumber::Num(v) => Ok(*v),
            RawNumber::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidNumber { text: s.clone() }),
        }
    }
}

/// Parses and fully re-validates an instance from JSON bytes.
pub fn parse_instance(bytes: &[u8]) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_slice(bytes)?;
    let grid = ReturnGrid::new(raw.mu, raw.m1, raw.m2)?;
    let mut stocks = Vec::with_capacity(raw.stocks.len());
    for stock in &raw.stocks {
        let probs = stock
            .probs
            .iter()
            .map(RawNumber::value)
            .collect::<Result<Vec<f64>>>()?;
        let dist = MarginalDistribution::new_named(grid, probs, Some(&stock.name))?;
        stocks.push(StockEntry {
            name: stock.name.clone(),
            dist,
        });
    }
    Ok(Instance { grid, stocks })
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    parse_instance(&std::fs::read(path)?)
}

/// Canonical JSON serialization: numbers as doubles, two-space indent.
/// Serializing a loaded instance is idempotent byte for byte.
pub fn instance_to_json(instance: &Instance) -> String {
    let raw = RawInstance {
        mu: instance.grid.mu(),
        m1: instance.grid.m1(),
        m2: instance.grid.m2(),
        stocks: instance
            .stocks
            .iter()
            .map(|s| RawStock {
                name: s.name.clone(),
                probs: s.dist.probs().iter().map(|&p| RawNumber::Num(p)).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("instance serialization cannot fail") + "\n"
}

/// One ticker's ordered price history.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    pub ticker: String,
    /// (date, price); dates strictly increasing, prices positive.
    pub observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(ticker: String, mut observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        observations.sort_by_key(|&(date, _)| date);
        for window in observations.windows(2) {
            if window[0].0 >= window[1].0 {
                return Err(Error::NonMonotoneDates {
                    ticker,
                    date: window[1].0.to_string(),
                });
            }
        }
        for &(date, price) in &observations {
            if !price.is_finite() || price <= 0.0 {
                return Err(Error::NonPositivePrice {
                    ticker,
                    date: date.to_string(),
                    price,
                });
            }
        }
        Ok(Self {
            ticker,
            observations,
        })
    }
}

/// Parses `date,ticker,price` CSV (RFC 4180 quoting) into one series per
/// ticker, in first-appearance order.
pub fn parse_prices_csv(bytes: &[u8]) -> Result<Vec<PriceSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let field = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidNumber {
                text: format!("missing CSV column {name:?}"),
            })
    };
    let (date_idx, ticker_idx, price_idx) = (field("date")?, field("ticker")?, field("price")?);

    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::HashMap<String, Vec<(NaiveDate, f64)>> =
        std::collections::HashMap::new();
    for record in reader.records() {
        let record = record?;
        let date_text = record.get(date_idx).unwrap_or("");
        let date =
            NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| Error::InvalidNumber {
                text: format!("bad date {date_text:?}"),
            })?;
        let ticker = record.get(ticker_idx).unwrap_or("").to_owned();
        let price_text = record.get(price_idx).unwrap_or("");
        let price = price_text
            .parse::<f64>()
            .map_err(|_| Error::InvalidNumber {
                text: price_text.to_owned(),
            })?;
        if !rows.contains_key(&ticker) {
            order.push(ticker.clone());
        }
        rows.entry(ticker).or_default().push((date, price));
    }
    order
        .into_iter()
        .map(|ticker| {
            let observations = rows.remove(&ticker).unwrap();
            PriceSeries::new(ticker, observations)
        })
        .collect()
}

pub fn load_prices_csv(path: &Path) -> Result<Vec<PriceSeries>> {
    parse_prices_csv(&std::fs::read(path)?)
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub instance: Instance,
    /// One note per clamped out-of-range return.
    pub warnings: Vec<String>,
}

/// Tallies empirical per-period returns into marginal distributions.
///
/// Returns are end-of-window price over start-of-window price, as a
/// percentage, over non-overlapping windows of `period` observations.
/// Out-of-range returns are clamped to the grid ends with a warning, and
/// each return rounds to the nearest grid point with ties toward minus
/// infinity for determinism.
pub fn ingest(series: &[PriceSeries], period: usize, grid: ReturnGrid) -> Result<IngestOutcome> {
    let period = period.max(1);
    let mut stocks = Vec::with_capacity(series.len());
    let mut warnings = Vec::new();
    for s in series {
        if s.observations.len() < period + 1 {
            return Err(Error::InsufficientData {
                ticker: s.ticker.clone(),
                needed: period + 1,
                got: s.observations.len(),
            });
        }
        let mut counts = vec![0u64; grid.len()];
        let mut total = 0u64;
        let mut start = 0;
        while start + period < s.observations.len() {
            let (_, p0) = s.observations[start];
            let (_, p1) = s.observations[start + period];
            let ret = 100.0 * p1 / p0;
            let clamped = ret.clamp(grid.lowest_return(), grid.highest_return());
            if clamped != ret {
                warnings.push(format!(
                    "{}: return {ret:.4}% clamped to {clamped:.4}%",
                    s.ticker
                ));
            }
            // round half down: ceil(q - 1/2)
            let level = ((clamped / grid.mu()) - 0.5).ceil() as i64;
            let level = level.clamp(grid.m1(), grid.m2());
            counts[grid.offset(level)] += 1;
            total += 1;
            start += period;
        }
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        debug_assert!((kahan_sum(probs.iter().copied()) - 1.0).abs() <= 1e-9);
        let dist = MarginalDistribution::new_named(grid, probs, Some(&s.ticker))?;
        stocks.push(StockEntry {
            name: s.ticker.clone(),
            dist,
        });
    }
    Ok(IngestOutcome {
        instance: Instance { grid, stocks },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_instances_with_string_probs() {
        let json = br#"{"mu": 100.0, "m1": 0, "m2": 1,
            "stocks": [{"name": "A", "probs": ["0.5", 0.5]},
                       {"name": "B", "probs": [0.25, "0.75"]}]}"#;
        let inst = parse_instance(json).unwrap();
        assert_eq!(inst.stocks.len(), 2);
        assert_eq!(inst.stocks[0].dist.probs(), &[0.5, 0.5]);
        assert_eq!(inst.stocks[1].dist.probs(), &[0.25, 0.75]);
    }

    #[test]
    fn rejects_bad_sum_with_stock_name() {
        let json = br#"{"mu": 1.0, "m1": 0, "m2": 1,
            "stocks": [{"name": "BAD", "probs": [0.6, 0.5]}]}"#;
        match parse_instance(json).unwrap_err() {
            Error::SumNotOne { stock, .. } => assert_eq!(stock.as_deref(), Some("BAD")),
            other => panic!("expected SumNotOne, got {other:?}"),
        }
    }

    #[test]
    fn serialization_is_idempotent() {
        let json = br#"{"mu": 1.0, "m1": -1, "m2": 1,
            "stocks": [{"name": "A", "probs": [0.25, "0.5", 0.25]}]}"#;
        let once = instance_to_json(&parse_instance(json).unwrap());
        let twice = instance_to_json(&parse_instance(once.as_bytes()).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn csv_round_trip_and_grouping() {
        let csv = b"date,ticker,price\n2024-01-01,AAA,100\n2024-01-02,AAA,150\n2024-01-01,\"B,B\",10\n2024-01-02,\"B,B\",12\n";
        let series = parse_prices_csv(csv).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].ticker, "AAA");
        assert_eq!(series[1].ticker, "B,B");
        assert_eq!(series[0].observations.len(), 2);
    }

    #[test]
    fn csv_rejects_nonpositive_prices() {
        let csv = b"date,ticker,price\n2024-01-01,A,0\n2024-01-02,A,5\n";
        assert!(matches!(
            parse_prices_csv(csv).unwrap_err(),
            Error::NonPositivePrice { .. }
        ));
    }

    #[test]
    fn csv_rejects_duplicate_dates() {
        let csv = b"date,ticker,price\n2024-01-01,A,1\n2024-01-01,A,2\n";
        assert!(matches!(
            parse_prices_csv(csv).unwrap_err(),
            Error::NonMonotoneDates { .. }
        ));
    }

    #[test]
    fn ingest_single_period() {
        let grid = ReturnGrid::new(1.0, 0, 200).unwrap();
        let s = PriceSeries::new(
            "A".into(),
            vec![(date("2024-01-01"), 100.0), (date("2024-02-01"), 150.0)],
        )
        .unwrap();
        let out = ingest(&[s], 1, grid).unwrap();
        let dist = &out.instance.stocks[0].dist;
        assert_eq!(dist.prob_at(150), 1.0);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn ingest_flat_price_hits_hundred() {
        let grid = ReturnGrid::new(1.0, 0, 200).unwrap();
        let s = PriceSeries::new(
            "A".into(),
            vec![(date("2024-01-01"), 100.0), (date("2024-02-01"), 100.0)],
        )
        .unwrap();
        let out = ingest(&[s], 1, grid).unwrap();
        assert_eq!(out.instance.stocks[0].dist.prob_at(100), 1.0);
    }

    #[test]
    fn ingest_two_periods_splits_mass() {
        let grid = ReturnGrid::new(1.0, 0, 200).unwrap();
        let s = PriceSeries::new(
            "A".into(),
            vec![
                (date("2024-01-01"), 100.0),
                (date("2024-02-01"), 150.0),
                (date("2024-03-01"), 150.0),
            ],
        )
        .unwrap();
        let out = ingest(&[s], 1, grid).unwrap();
        let dist = &out.instance.stocks[0].dist;
        assert_eq!(dist.prob_at(150), 0.5);
        assert_eq!(dist.prob_at(100), 0.5);
    }

    #[test]
    fn ingest_clamps_with_warning() {
        let grid = ReturnGrid::new(1.0, 50, 150).unwrap();
        let s = PriceSeries::new(
            "A".into(),
            vec![(date("2024-01-01"), 100.0), (date("2024-02-01"), 400.0)],
        )
        .unwrap();
        let out = ingest(&[s], 1, grid).unwrap();
        assert_eq!(out.instance.stocks[0].dist.prob_at(150), 1.0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn ingest_insufficient_data() {
        let grid = ReturnGrid::new(1.0, 0, 200).unwrap();
        let s = PriceSeries::new("A".into(), vec![(date("2024-01-01"), 100.0)]).unwrap();
        assert!(matches!(
            ingest(&[s], 1, grid).unwrap_err(),
            Error::InsufficientData { .. }
        ));
    }

    #[test]
    fn rounding_ties_go_down() {
        let grid = ReturnGrid::new(2.0, 0, 100).unwrap();
        // return of 101% sits exactly between levels 50 and 51 on a mu=2 grid
        let s = PriceSeries::new(
            "A".into(),
            vec![(date("2024-01-01"), 100.0), (date("2024-02-01"), 101.0)],
        )
        .unwrap();
        let out = ingest(&[s], 1, grid).unwrap();
        assert_eq!(out.instance.stocks[0].dist.prob_at(50), 1.0);
    }
}
