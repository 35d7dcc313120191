//! Command-line front end: ingest, train, backtest and predict.
//!
//! Settings come from flags and, optionally, a `key = value` config file
//! passed with `--config`; flags take precedence. Progress goes to stderr,
//! results to files and stdout.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evaluation::{build_report, BacktestReport};
use crate::features::fractional_features;
use crate::fluct_predictor::{rolling_forecast_fluct, FluctModel};
use crate::forecast::{write_forecast_csv, write_plot_data, Forecast, Method};
use crate::hmm::{deserialize, fit_baum_welch, serialize, FitConfig, FitReport, GaussianHmm};
use crate::map_predictor::{predict_close, rolling_forecast, GridSpec, PredictorConfig};
use crate::market_data::{chronological_split, clean, load_csv, load_json_archive, write_csv, SymbolSeries};

#[derive(Debug, Parser)]
#[command(name = "hmm-forecast", version, about = "HMM next-day closing price forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a JSON archive into per-symbol CSV files plus a manifest.
    Ingest {
        /// Archive directory (or a single JSON file).
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on the training split and save it.
    Train(RunArgs),
    /// Roll forecasts over the test split and write reports.
    Backtest {
        #[command(flatten)]
        run: RunArgs,
        /// Forecast only the last N days of the test split.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Predict a single day's close.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        /// Target date (YYYY-MM-DD) or `next` for the day after the data ends.
        #[arg(long, default_value = "next")]
        date: String,
        /// Opening price of the target day.
        #[arg(long)]
        open: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key = value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-symbol CSV file, or a directory holding `<symbol>.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub symbol: Option<String>,
    /// map_fractional or successive_fluctuation.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub latency: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_change_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_change_max: Option<f64>,
    #[arg(long)]
    pub grid_change_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_high_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_high_max: Option<f64>,
    #[arg(long)]
    pub grid_high_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_low_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_low_max: Option<f64>,
    #[arg(long)]
    pub grid_low_steps: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Output directory for models and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid scoring.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub symbol: String,
    pub method: Method,
    pub n_states: usize,
    pub predictor: PredictorConfig,
    pub fit: FitConfig,
    pub train_fraction: f64,
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(data: impl Into<PathBuf>, symbol: impl Into<String>, method: Method, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            data: data.into(),
            symbol: symbol.into(),
            method,
            n_states: 4,
            predictor: PredictorConfig::default(),
            fit: FitConfig::default(),
            train_fraction: 0.8,
            out: out.into(),
            jobs: 1,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.out.join(format!("{}.{}.model", file_stem(&self.symbol), self.method))
    }

    fn artifact(&self, suffix: &str) -> PathBuf {
        self.out.join(format!("{}.{}.{suffix}", file_stem(&self.symbol), self.method))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 1 {
            return Err(Error::InvalidArgument("--states must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "--train-frac must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.jobs < 1 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        self.fit.validate()?;
        self.predictor.validate()
    }
}

fn file_stem(symbol: &str) -> String {
    symbol
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.&".contains(c) { c } else { '_' })
        .collect()
}

/// Parses `key = value` lines; `#` starts a comment. Keys use the flag
/// names without leading dashes (`-` and `_` are interchangeable).
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("config line {}: expected key = value", no + 1))
        })?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::InvalidArgument(format!("config key `{key}`: cannot parse `{raw}`")))
}

impl RunArgs {
    /// Merges the config file (if any) under the flags and applies defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => parse_config_file(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => HashMap::new(),
        };
        const KNOWN: &[&str] = &[
            "data", "symbol", "method", "states", "latency", "grid-change-min", "grid-change-max",
            "grid-change-steps", "grid-high-min", "grid-high-max", "grid-high-steps", "grid-low-min",
            "grid-low-max", "grid-low-steps", "max-iter", "tol", "seed", "train-frac", "out", "jobs",
        ];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown config key `{k}`")));
        }
        fn pick<T: std::str::FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
            match flag {
                Some(v) => Ok(Some(v)),
                None => file.get(key).map(|raw| parse_value(key, raw)).transpose(),
            }
        }

        let data: PathBuf = pick(self.data.clone(), &file, "data")?
            .ok_or_else(|| Error::InvalidArgument("--data is required".into()))?;
        let symbol: String = pick(self.symbol.clone(), &file, "symbol")?
            .ok_or_else(|| Error::InvalidArgument("--symbol is required".into()))?;
        let method: Method = match pick(self.method.clone(), &file, "method")? {
            Some(m) => m.parse()?,
            None => Method::MapFractional,
        };
        let out: PathBuf = pick(self.out.clone(), &file, "out")?.unwrap_or_else(|| PathBuf::from("."));
        let mut cfg = RunConfig::new(data, symbol, method, out);

        macro_rules! set {
            ($field:expr, $flag:expr, $key:literal) => {
                if let Some(v) = pick($flag, &file, $key)? {
                    $field = v;
                }
            };
        }
        set!(cfg.n_states, self.states, "states");
        set!(cfg.predictor.latency_days, self.latency, "latency");
        let g: &mut GridSpec = &mut cfg.predictor.grid;
        set!(g.change_min, self.grid_change_min, "grid-change-min");
        set!(g.change_max, self.grid_change_max, "grid-change-max");
        set!(g.change_steps, self.grid_change_steps, "grid-change-steps");
        set!(g.high_min, self.grid_high_min, "grid-high-min");
        set!(g.high_max, self.grid_high_max, "grid-high-max");
        set!(g.high_steps, self.grid_high_steps, "grid-high-steps");
        set!(g.low_min, self.grid_low_min, "grid-low-min");
        set!(g.low_max, self.grid_low_max, "grid-low-max");
        set!(g.low_steps, self.grid_low_steps, "grid-low-steps");
        set!(cfg.fit.max_iterations, self.max_iter, "max-iter");
        set!(cfg.fit.tolerance, self.tol, "tol");
        set!(cfg.fit.seed, self.seed, "seed");
        set!(cfg.train_fraction, self.train_frac, "train-frac");
        set!(cfg.jobs, self.jobs, "jobs");
        cfg.predictor.parallel = cfg.jobs > 1;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub symbols: usize,
    pub rows: usize,
    pub skipped: usize,
}

/// Writes `<symbol>.csv` per symbol and `manifest.csv` under `out`.
pub fn cmd_ingest(archive: &Path, out: &Path) -> Result<IngestSummary> {
    let load = load_json_archive(archive)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join("manifest.csv");
    let mut manifest = csv::Writer::from_writer(Vec::new());
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: std::io::Error| Error::io(p, e)
    };
    manifest
        .write_record(["symbol", "rows", "first_date", "last_date"])
        .map_err(|e| io_err(&manifest_path)(e.into()))?;
    let mut rows = 0;
    for series in &load.series {
        let path = out.join(format!("{}.csv", file_stem(&series.symbol)));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_csv(series, std::io::BufWriter::new(file)).map_err(io_err(&path))?;
        let date = |b: Option<&crate::market_data::StockBar>| b.map(|b| b.date.to_string()).unwrap_or_default();
        manifest
            .write_record([
                series.symbol.clone(),
                series.len().to_string(),
                date(series.bars.first()),
                date(series.bars.last()),
            ])
            .map_err(|e| io_err(&manifest_path)(e.into()))?;
        rows += series.len();
    }
    let bytes = manifest
        .into_inner()
        .map_err(|e| Error::io(&manifest_path, e.into_error()))?;
    fs::write(&manifest_path, bytes).map_err(io_err(&manifest_path))?;
    Ok(IngestSummary {
        symbols: load.series.len(),
        rows,
        skipped: load.skipped,
    })
}

fn data_file(cfg: &RunConfig) -> PathBuf {
    if cfg.data.is_dir() {
        cfg.data.join(format!("{}.csv", file_stem(&cfg.symbol)))
    } else {
        cfg.data.clone()
    }
}

fn load_series(cfg: &RunConfig) -> Result<SymbolSeries> {
    let load = load_csv(&data_file(cfg), &cfg.symbol)?;
    if load.skipped > 0 {
        eprintln!("{}: skipped {} unparseable rows", cfg.symbol, load.skipped);
    }
    Ok(load.series)
}

/// Splits before cleaning, so nothing in the test period can change the
/// training set.
fn split_clean(cfg: &RunConfig) -> Result<(SymbolSeries, SymbolSeries)> {
    let series = load_series(cfg)?;
    let split = chronological_split(&series, cfg.train_fraction)?;
    Ok((clean(&split.train), clean(&split.test)))
}

fn fit_model(cfg: &RunConfig, train: &SymbolSeries) -> Result<(GaussianHmm, FitReport)> {
    match cfg.method {
        Method::MapFractional => {
            let features = fractional_features(&train.bars);
            fit_baum_welch(&features.observations, cfg.n_states, &cfg.fit)
        }
        Method::SuccessiveFluctuation => {
            let (model, report) = crate::fluct_predictor::fit_fluct(train, cfg.n_states, &cfg.fit)?;
            Ok((model.hmm, report))
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub report: FitReport,
}

/// Fits on the training split and writes the model and a training log.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train, _) = split_clean(cfg)?;
    eprintln!(
        "training {} ({}) on {} bars with {} states",
        cfg.symbol,
        cfg.method,
        train.len(),
        cfg.n_states
    );
    let (model, report) = fit_model(cfg, &train)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let model_path = cfg.model_path();
    write_file(&model_path, serialize(&model, Some(&cfg.fit)).as_bytes())?;

    let mut log = String::new();
    log.push_str(&format!("symbol = {}\nmethod = {}\n", cfg.symbol, cfg.method));
    log.push_str(&format!("train_bars = {}\n", train.len()));
    log.push_str(&format!("iterations = {}\n", report.iterations_run));
    log.push_str(&format!("final_log_likelihood = {}\n", report.final_log_likelihood()));
    log.push_str(&format!("converged = {}\n", report.converged));
    for w in &report.warnings {
        log.push_str(&format!("warning = {w}\n"));
    }
    let trace: Vec<String> = report.log_likelihood_trace.iter().map(|v| v.to_string()).collect();
    log.push_str(&format!("trace = {}\n", trace.join(",")));
    write_file(&cfg.artifact("train.log"), log.as_bytes())?;
    eprintln!(
        "wrote {} ({} iterations, converged = {})",
        model_path.display(),
        report.iterations_run,
        report.converged
    );
    Ok(TrainOutcome { model_path, report })
}

fn load_model(cfg: &RunConfig) -> Result<GaussianHmm> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(Error::MissingModel(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(deserialize(&text)?.model)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs <= 1 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

/// Rolls forecasts over the test split (or its last `horizon` days) and
/// writes the forecast CSV, plot data and report summary.
pub fn cmd_backtest(cfg: &RunConfig, horizon: Option<usize>) -> Result<BacktestReport> {
    cfg.validate()?;
    let model = load_model(cfg)?;
    let (train, test) = split_clean(cfg)?;
    let horizon = horizon.unwrap_or(test.len());
    if horizon > test.len() {
        return Err(Error::InvalidArgument(format!(
            "--horizon {horizon} exceeds the {} test days",
            test.len()
        )));
    }
    let mut bars = train.bars;
    bars.extend(test.bars);
    let full = SymbolSeries::new(cfg.symbol.clone(), bars);
    let start = full.len() - horizon;
    eprintln!("backtesting {} ({}) over {horizon} days", cfg.symbol, cfg.method);

    let forecasts: Vec<Forecast> = if horizon == 0 {
        Vec::new()
    } else {
        match cfg.method {
            Method::MapFractional => {
                with_pool(cfg.jobs, || rolling_forecast(&model, &full, start, horizon, &cfg.predictor))?
            }
            Method::SuccessiveFluctuation => {
                let fluct = FluctModel::from_hmm(model, &full.bars[..start])?;
                rolling_forecast_fluct(&fluct, &full, start, horizon)?
            }
        }
    };

    let tag = match cfg.method {
        Method::MapFractional => None,
        Method::SuccessiveFluctuation => Some(cfg.method),
    };
    let mut csv_buf = Vec::new();
    write_forecast_csv(&forecasts, tag, &mut csv_buf).map_err(|e| Error::io(cfg.artifact("forecasts.csv"), e))?;
    write_file(&cfg.artifact("forecasts.csv"), &csv_buf)?;
    let mut plot_buf = Vec::new();
    write_plot_data(&forecasts, &mut plot_buf).map_err(|e| Error::io(cfg.artifact("plot.csv"), e))?;
    write_file(&cfg.artifact("plot.csv"), &plot_buf)?;

    let report = build_report(forecasts, &cfg.symbol, cfg.method)?;
    write_file(&cfg.artifact("report.txt"), report.summary().as_bytes())?;
    Ok(report)
}

/// Target of a single prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Next,
    Date(NaiveDate),
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("next") {
            return Ok(Target::Next);
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Target::Date)
            .map_err(|_| Error::InvalidArgument(format!("--date must be YYYY-MM-DD or `next`, got `{s}`")))
    }
}

pub fn cmd_predict(cfg: &RunConfig, target: Target, open: Option<f64>) -> Result<Forecast> {
    cfg.validate()?;
    let model = load_model(cfg)?;
    let series = clean(&load_series(cfg)?);
    let (cut, date, data_open, actual) = match target {
        Target::Next => (series.len(), None, None, None),
        Target::Date(d) => {
            let cut = series.bars.partition_point(|b| b.date < d);
            match series.bars.get(cut).filter(|b| b.date == d) {
                Some(b) => (cut, Some(d), Some(b.open), Some(b.close)),
                None => (cut, Some(d), None, None),
            }
        }
    };
    let open = open.or(data_open).ok_or_else(|| {
        Error::InvalidArgument("the target day's opening price is required: pass --open".into())
    })?;
    let history = &series.bars[..cut];
    let mut forecast = match cfg.method {
        Method::MapFractional => {
            with_pool(cfg.jobs, || predict_close(&model, history, open, &cfg.predictor))?
        }
        Method::SuccessiveFluctuation => {
            let fluct = FluctModel::from_hmm(model, history)?;
            Forecast {
                date: None,
                open,
                predicted_close: fluct.predict_close(fluct.last_close),
                actual_close: None,
                chosen_candidate: None,
                candidate_log_likelihood: None,
            }
        }
    };
    forecast.date = date;
    forecast.actual_close = actual;
    Ok(forecast)
}

fn print_forecast(cfg: &RunConfig, f: &Forecast, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "symbol = {}", cfg.symbol)?;
    writeln!(out, "method = {}", cfg.method)?;
    if let Some(d) = f.date {
        writeln!(out, "date = {d}")?;
    }
    writeln!(out, "open = {:?}", f.open)?;
    writeln!(out, "predicted_close = {:?}", f.predicted_close)?;
    if let Some(c) = f.chosen_candidate {
        writeln!(out, "frac_change = {:?}", c.frac_change())?;
    }
    if let Some(ll) = f.candidate_log_likelihood {
        writeln!(out, "log_likelihood = {ll:?}")?;
    }
    if let Some(a) = f.actual_close {
        writeln!(out, "actual_close = {a:?}")?;
    }
    Ok(())
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let out_err = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Ingest { data, out } => {
            let s = cmd_ingest(&data, &out)?;
            writeln!(
                stdout.lock(),
                "symbols = {}\nrows = {}\nskipped = {}",
                s.symbols,
                s.rows,
                s.skipped
            )
            .map_err(out_err)?;
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let t = cmd_train(&cfg)?;
            writeln!(
                stdout.lock(),
                "model = {}\niterations = {}\nfinal_log_likelihood = {}\nconverged = {}",
                t.model_path.display(),
                t.report.iterations_run,
                t.report.final_log_likelihood(),
                t.report.converged
            )
            .map_err(out_err)?;
        }
        Command::Backtest { run, horizon } => {
            let cfg = run.resolve()?;
            let report = cmd_backtest(&cfg, horizon)?;
            stdout.lock().write_all(report.summary().as_bytes()).map_err(out_err)?;
        }
        Command::Predict { run, date, open } => {
            let cfg = run.resolve()?;
            let target: Target = date.parse()?;
            let f = cmd_predict(&cfg, target, open)?;
            print_forecast(&cfg, &f, stdout.lock()).map_err(out_err)?;
        }
    }
    Ok(())
}
