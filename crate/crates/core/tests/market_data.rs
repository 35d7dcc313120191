mod common;

use std::fs;

use chrono::{Days, NaiveDate};
use hmm_forecast::market_data::{
    chronological_split, clean, load_csv, load_json_archive, StockBar, SymbolSeries,
};
use hmm_forecast::Error;
use proptest::prelude::*;

const ACI_JSON: &str = r#"[
  {"date": "2008-03-06", "symbol": "ACI", "open": 200.0, "high": 202.0, "low": 194.0, "close": 195.5, "volume": 266850, "prev_close": 198.8},
  {"date": "2008-03-09", "symbol": "ACI", "open": 199.8, "high": 199.8, "low": 194.0, "close": 195.0, "volume": 333600, "prev_close": 195.5},
  {"date": "2008-03-09", "symbol": "ACI", "open": 199.8, "high": 199.8, "low": 194.0, "close": 195.0, "volume": 333600, "prev_close": 195.5},
  {"date": "2008-03-10", "symbol": "ACI", "open": 196.5, "high": 209.5, "low": 195.4, "close": 207.3, "volume": 381650, "prev_close": 195.0},
  {"date": "2008-03-11", "symbol": "ACI", "open": 209.9, "high": 217.9, "low": 207.0, "close": 215.5, "volume": 509550, "prev_close": 207.3}
]"#;

#[test]
fn json_archive_collapses_duplicate_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("2008.json"), ACI_JSON).unwrap();
    let load = load_json_archive(dir.path()).unwrap();
    assert_eq!(load.series.len(), 1);
    assert_eq!(load.series[0].symbol, "ACI");
    assert_eq!(load.series[0].len(), 4);
    assert_eq!(load.skipped, 0);
    assert_eq!(load.files, 1);
}

#[test]
fn json_archive_two_symbols_one_bad_record() {
    let dir = tempfile::tempdir().unwrap();
    // symbol inferred from the file stem for AAA, given explicitly for BBB
    fs::write(
        dir.path().join("AAA.json"),
        r#"[
          {"date": "2020-01-01", "open": 10, "high": 11, "low": 9, "close": 10.5, "volume": 100},
          {"date": "2020-01-02", "open": "10.5", "high": "11", "low": "10", "close": "10.8", "volume": "120"},
          {"date": "2020-01-03", "open": 10.8, "high": 11, "low": 10, "close": 10.1}
        ]"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("other.json"),
        r#"[
          {"symbol": "BBB", "date": "2020-01-01", "open": 5, "high": 6, "low": 4, "close": 5.5, "volume": 1},
          {"symbol": "BBB", "date": "2020-01-03", "open": 5.5, "high": 6, "low": 5, "close": 5.2, "volume": 2},
          {"symbol": "BBB", "date": "2020-01-02", "open": 5.5, "high": 6, "low": 5, "close": 5.6, "volume": 3}
        ]"#,
    )
    .unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let load = load_json_archive(dir.path()).unwrap();
    assert_eq!(load.series.len(), 2);
    assert_eq!(load.series.iter().map(|s| s.len()).sum::<usize>(), 5);
    assert_eq!(load.skipped, 1);
    let bbb = &load.series[1];
    assert_eq!(bbb.symbol, "BBB");
    assert!(bbb.bars.windows(2).all(|w| w[0].date <= w[1].date));
    assert_eq!(load.series[0].bars[1].open, 10.5);
}

#[test]
fn dsebd_style_field_names() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dse.json"),
        r#"[{"date": "2020-12-02", "trading_code": "ACI", "opening_price": "250.1", "high": "255", "low": "249", "closing_price": "252.3", "yesterdays_closing_price": "250.0", "volume": "123456"}]"#,
    )
    .unwrap();
    let load = load_json_archive(dir.path()).unwrap();
    assert_eq!(load.series[0].symbol, "ACI");
    assert_eq!(load.series[0].bars[0].close, 252.3);
    assert_eq!(load.series[0].bars[0].prev_close, Some(250.0));
}

#[test]
fn json_archive_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_json_archive(dir.path()), Err(Error::EmptyArchive(_))));

    assert!(matches!(
        load_json_archive(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));

    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    match load_json_archive(dir.path()) {
        Err(Error::Format { path, .. }) => assert!(path.ends_with("broken.json")),
        other => panic!("{other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.json"), r#"[{"date": "yesterday"}]"#).unwrap();
    assert!(matches!(load_json_archive(dir.path()), Err(Error::EmptyArchive(_))));
}

#[test]
fn loaders_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.json"), ACI_JSON).unwrap();
    assert_eq!(load_json_archive(dir.path()).unwrap(), load_json_archive(dir.path()).unwrap());
    let csv = dir.path().join("aci.csv");
    fs::write(&csv, "date,open,high,low,close,volume\n2020-01-02,1,2,0.5,1.5,10\n2020-01-01,1,2,0.5,1.5,10\n").unwrap();
    let a = load_csv(&csv, "ACI").unwrap();
    assert_eq!(a, load_csv(&csv, "ACI").unwrap());
    assert_eq!(a.series.bars[0].date, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
}

fn arb_bar(day: u64) -> impl Strategy<Value = StockBar> {
    (
        prop_oneof![8 => 1.0f64..500.0, 1 => Just(f64::NAN), 1 => Just(0.0), 1 => Just(f64::INFINITY)],
        -0.2f64..0.2,
        -0.1f64..0.2,
        -0.1f64..0.2,
        0u64..1_000_000,
        0u64..3,
    )
        .prop_map(move |(open, change, up, down, volume, jitter)| StockBar {
            date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Days::new(day + jitter),
            open,
            close: open * (1.0 + change),
            high: open.max(open * (1.0 + change)) * (1.0 + up),
            low: open.min(open * (1.0 + change)) * (1.0 - down),
            volume,
            prev_close: None,
        })
}

fn arb_series() -> impl Strategy<Value = SymbolSeries> {
    (0usize..60).prop_flat_map(|n| {
        (0..n as u64)
            .map(arb_bar)
            .collect::<Vec<_>>()
            .prop_map(|bars| {
                // repeat some rows to exercise duplicate collapsing
                let mut all = bars.clone();
                all.extend(bars.into_iter().step_by(5));
                SymbolSeries { symbol: "P".into(), bars: all }
            })
    })
}

proptest! {
    #[test]
    fn clean_is_idempotent_and_enforces_invariants(series in arb_series()) {
        let once = clean(&series);
        prop_assert_eq!(clean(&once), once.clone());
        for b in &once.bars {
            prop_assert!(b.open > 0.0);
            prop_assert!([b.open, b.high, b.low, b.close].iter().all(|p| p.is_finite()));
            prop_assert!(b.low <= b.open.min(b.close));
            prop_assert!(b.open.max(b.close) <= b.high);
        }
        prop_assert!(once.bars.windows(2).all(|w| w[0].date <= w[1].date));
    }

    #[test]
    fn split_partitions_in_order(len in 2usize..400, frac in 0.01f64..0.99) {
        let series = common::random_walk_series("S", len, 0.02, len as u64);
        let split = chronological_split(&series, frac).unwrap();
        let expected_train = (frac * len as f64).floor() as usize;
        prop_assert_eq!(split.train.len(), expected_train);
        prop_assert_eq!(split.test.len(), len - expected_train);
        let mut joined = split.train.bars.clone();
        joined.extend(split.test.bars.iter().cloned());
        prop_assert_eq!(&joined, &series.bars);
        if let (Some(a), Some(b)) = (split.train.bars.last(), split.test.bars.first()) {
            prop_assert!(a.date < b.date);
        }
    }
}
