#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use hmm_forecast::hmm::GaussianHmm;
use hmm_forecast::market_data::{StockBar, SymbolSeries};
use hmm_forecast::ObservationVector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let spd = &m * m.transpose() + DMatrix::identity(dim, dim) * 0.3;
    // exact symmetry
    DMatrix::from_fn(dim, dim, |r, c| if r <= c { spd[(r, c)] } else { spd[(c, r)] })
}

pub fn random_hmm(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> GaussianHmm {
    let start = random_distribution(n, rng);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, p) in random_distribution(n, rng).into_iter().enumerate() {
            a[(i, j)] = p;
        }
    }
    let means = (0..n)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    let covs = (0..n).map(|_| random_spd(dim, rng)).collect();
    GaussianHmm::new(start, a, means, covs).unwrap()
}

pub fn random_observations(t: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

/// Log-density through an explicit inverse and determinant.
pub fn density_oracle(x: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let diff = DVector::from_column_slice(x) - mean;
    let inv = cov.clone().try_inverse().unwrap();
    let maha = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + maha)
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log P(O | model) by summing over all `n^T` state paths.
pub fn brute_force_log_likelihood(model: &GaussianHmm, obs: &[Vec<f64>]) -> f64 {
    let n = model.n_states();
    let t_len = obs.len();
    let emit: Vec<Vec<f64>> = obs
        .iter()
        .map(|o| (0..n).map(|j| density_oracle(o, model.mean(j), model.covariance(j))).collect())
        .collect();
    let total = n.pow(t_len as u32);
    let mut path_scores = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut path = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            path.push(c % n);
            c /= n;
        }
        let mut s = model.start_prob()[path[0]].ln() + emit[0][path[0]];
        for t in 1..t_len {
            s += model.transition()[(path[t - 1], path[t])].ln() + emit[t][path[t]];
        }
        path_scores.push(s);
    }
    lse(&path_scores)
}

/// Synthetic geometric random walk with `|frac_change| <= max_change`.
pub fn random_walk_series(symbol: &str, len: usize, max_change: f64, seed: u64) -> SymbolSeries {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, max_change / 2.0).unwrap();
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut prev_close = 100.0;
    let mut bars = Vec::with_capacity(len);
    for i in 0..len {
        let gap: f64 = rng.random_range(-0.003..0.003);
        let open: f64 = prev_close * (1.0 + gap);
        let change: f64 = noise.sample(&mut rng).clamp(-max_change, max_change);
        let close = open * (1.0 + change);
        let high = open.max(close) * (1.0 + rng.random_range(0.0..0.01));
        let low = open.min(close) * (1.0 - rng.random_range(0.0..0.01));
        bars.push(StockBar {
            date: start + Days::new(i as u64),
            open,
            high,
            low,
            close,
            volume: rng.random_range(10_000..500_000),
            prev_close: Some(prev_close),
        });
        prev_close = close;
    }
    SymbolSeries::new(symbol, bars)
}

/// Closes follow a random walk whose drift switches between +1 and -1.
pub fn regime_walk_series(len: usize, seed: u64) -> SymbolSeries {
    let mut rng = rng(seed);
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let mut close: f64 = 500.0;
    let mut up = true;
    let mut bars = Vec::with_capacity(len);
    for i in 0..len {
        if rng.random::<f64>() < 0.05 {
            up = !up;
        }
        let drift = if up { 1.0 } else { -1.0 };
        let z: f64 = rng.sample(StandardNormal);
        let open = close;
        close = (close + drift + 0.3 * z).max(1.0);
        bars.push(StockBar {
            date: start + Days::new(i as u64),
            open,
            high: open.max(close) + 0.5,
            low: open.min(close) - 0.5,
            close,
            volume: 100_000 + rng.random_range(0..1000),
            prev_close: None,
        });
    }
    SymbolSeries::new("REGIME", bars)
}

/// Scores every candidate with a fresh forward pass over `window ++ [c]`.
pub fn naive_map(model: &GaussianHmm, window: &[ObservationVector], grid: &[ObservationVector]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut seq: Vec<Vec<f64>> = window.iter().map(|o| o.0.to_vec()).collect();
    seq.push(vec![0.0; 3]);
    for (i, c) in grid.iter().enumerate() {
        *seq.last_mut().unwrap() = c.0.to_vec();
        let s = hmm_forecast::forward_log_likelihood(model, &seq).unwrap();
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Fractional-feature model fitted to a synthetic random walk.
pub fn trained_fractional_model(seed: u64) -> (GaussianHmm, SymbolSeries) {
    let series = random_walk_series("SYN", 600, 0.02, seed);
    let feats = hmm_forecast::fractional_features(&series.bars);
    let config = hmm_forecast::FitConfig { seed, ..Default::default() };
    let (model, _) = hmm_forecast::fit_baum_welch(&feats.observations, 4, &config).unwrap();
    (model, series)
}
