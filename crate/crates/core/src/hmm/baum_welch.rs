//! Expectation-maximization for [`GaussianHmm`].
//!
//! Initialization: uniform start and transition probabilities, means seeded
//! by farthest-point selection from a random first observation, covariances
//! set to the pooled sample covariance. Each M-step adds
//! `regularization_floor` to every covariance diagonal.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{backward_from_table, emission_table, forward_from_table};
use super::model::GaussianHmm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub regularization_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 10_000,
            tolerance: 1e-3,
            regularization_floor: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if !(self.regularization_floor > 0.0 && self.regularization_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization_floor must be positive and finite, got {}",
                self.regularization_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations_run: usize,
    /// Log-likelihood of the initial model followed by one entry per iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

struct Posteriors {
    log_likelihood: f64,
    /// `T x n` state posteriors.
    gamma: Vec<Vec<f64>>,
    /// Expected transition counts.
    xi_sum: DMatrix<f64>,
}

fn e_step(model: &GaussianHmm, obs: &[DVector<f64>]) -> Posteriors {
    let n = model.n_states();
    let log_b = emission_table(model, obs);
    let fwd = forward_from_table(model, &log_b);
    let log_beta = backward_from_table(model, &log_b);
    let ll = fwd.log_likelihood;

    let gamma: Vec<Vec<f64>> = fwd
        .log_alpha
        .iter()
        .zip(&log_beta)
        .map(|(a, b)| {
            let mut row: Vec<f64> = a.iter().zip(b).map(|(a, b)| (a + b - ll).exp()).collect();
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|g| *g /= s);
            }
            row
        })
        .collect();

    let log_a = model.log_transition();
    let mut xi_sum = DMatrix::zeros(n, n);
    for t in 0..obs.len().saturating_sub(1) {
        for i in 0..n {
            let ai = fwd.log_alpha[t][i];
            if ai == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                let lx = ai + log_a[(i, j)] + log_b[t + 1][j] + log_beta[t + 1][j] - ll;
                xi_sum[(i, j)] += lx.exp();
            }
        }
    }
    Posteriors {
        log_likelihood: ll,
        gamma,
        xi_sum,
    }
}

fn m_step(
    model: &GaussianHmm,
    obs: &[DVector<f64>],
    post: &Posteriors,
    floor: f64,
) -> Result<GaussianHmm> {
    let n = model.n_states();
    let dim = model.dim();

    let mut start: Vec<f64> = post.gamma[0].clone();
    let s: f64 = start.iter().sum();
    start.iter_mut().for_each(|p| *p /= s);

    let mut transition = model.transition().clone();
    for i in 0..n {
        let row_sum: f64 = post.xi_sum.row(i).sum();
        if row_sum > f64::MIN_POSITIVE {
            for j in 0..n {
                transition[(i, j)] = post.xi_sum[(i, j)] / row_sum;
            }
        }
    }

    let mut means = model.means();
    let mut covs = model.covariances();
    for j in 0..n {
        let weight: f64 = post.gamma.iter().map(|g| g[j]).sum();
        if weight <= f64::MIN_POSITIVE {
            continue;
        }
        let mut mean = DVector::zeros(dim);
        for (g, x) in post.gamma.iter().zip(obs) {
            mean.axpy(g[j], x, 1.0);
        }
        mean /= weight;
        let mut cov = DMatrix::zeros(dim, dim);
        for (g, x) in post.gamma.iter().zip(obs) {
            let d = x - &mean;
            cov += g[j] * &d * d.transpose();
        }
        cov /= weight;
        for k in 0..dim {
            cov[(k, k)] += floor;
        }
        means[j] = mean;
        covs[j] = cov;
    }
    GaussianHmm::new(start, transition, means, covs)
}

fn sample_covariance(obs: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = obs[0].len();
    let t = obs.len() as f64;
    let mean = obs.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / t;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in obs {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / t)
}

/// Farthest-point seeding under a per-dimension standardized distance.
fn seed_means(obs: &[DVector<f64>], variances: &DVector<f64>, n: usize, rng: &mut ChaCha8Rng) -> (Vec<DVector<f64>>, bool) {
    let scale: Vec<f64> = variances
        .iter()
        .map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 })
        .collect();
    let dist = |a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        a.iter()
            .zip(b.iter())
            .zip(&scale)
            .map(|((x, y), s)| (x - y) * (x - y) * s)
            .sum()
    };
    let first = rng.random_range(0..obs.len());
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = obs.iter().map(|x| dist(x, &obs[first])).collect();
    let mut collapsed = false;
    while chosen.len() < n {
        let (best, best_d) = min_dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if best_d <= 0.0 {
            collapsed = true;
        }
        chosen.push(best);
        for (m, x) in min_dist.iter_mut().zip(obs) {
            *m = m.min(dist(x, &obs[best]));
        }
    }
    (chosen.into_iter().map(|i| obs[i].clone()).collect(), collapsed)
}

fn initial_model(obs: &[DVector<f64>], n: usize, config: &FitConfig, warnings: &mut Vec<String>) -> Result<GaussianHmm> {
    let dim = obs[0].len();
    let (_, mut cov) = sample_covariance(obs);
    let variances = cov.diagonal();
    for (k, v) in variances.iter().enumerate() {
        if *v <= 0.0 {
            warnings.push(format!(
                "observation dimension {k} has zero variance; covariances rely on the regularization floor"
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (means, collapsed) = seed_means(obs, &variances, n, &mut rng);
    if collapsed {
        warnings.push(format!(
            "fewer than {n} distinct observations; some initial means coincide"
        ));
    }
    for k in 0..dim {
        cov[(k, k)] += config.regularization_floor;
    }
    let uniform = 1.0 / n as f64;
    GaussianHmm::new(
        vec![uniform; n],
        DMatrix::from_element(n, n, uniform),
        means,
        vec![cov; n],
    )
}

/// Fits an `n_states` model to one observation sequence.
pub fn fit_baum_welch<O: AsRef<[f64]>>(
    observations: &[O],
    n_states: usize,
    config: &FitConfig,
) -> Result<(GaussianHmm, FitReport)> {
    fit_baum_welch_observed(observations, n_states, config, |_, _| {})
}

/// Like [`fit_baum_welch`], calling `observer` with the initial model
/// (iteration 0) and with the model produced by every M-step.
pub fn fit_baum_welch_observed<O, F>(
    observations: &[O],
    n_states: usize,
    config: &FitConfig,
    mut observer: F,
) -> Result<(GaussianHmm, FitReport)>
where
    O: AsRef<[f64]>,
    F: FnMut(usize, &GaussianHmm),
{
    config.validate()?;
    if n_states == 0 {
        return Err(Error::InvalidArgument("n_states must be at least 1".into()));
    }
    if observations.len() < n_states {
        return Err(Error::InsufficientData {
            needed: n_states,
            got: observations.len(),
        });
    }
    let dim = observations[0].as_ref().len();
    if dim == 0 {
        return Err(Error::InvalidArgument("observations have dimension zero".into()));
    }
    let mut obs = Vec::with_capacity(observations.len());
    for (t, o) in observations.iter().enumerate() {
        let o = o.as_ref();
        if o.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "observation {t} has dimension {}, expected {dim}",
                o.len()
            )));
        }
        if o.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("observation {t} is not finite")));
        }
        obs.push(DVector::from_column_slice(o));
    }

    let mut warnings = Vec::new();
    let mut model = initial_model(&obs, n_states, config, &mut warnings)?;
    observer(0, &model);
    let mut post = e_step(&model, &obs);
    let mut trace = vec![post.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        model = m_step(&model, &obs, &post, config.regularization_floor)?;
        iterations += 1;
        observer(iterations, &model);
        post = e_step(&model, &obs);
        let prev = *trace.last().unwrap();
        trace.push(post.log_likelihood);
        if !post.log_likelihood.is_finite() {
            return Err(Error::InvalidModel(format!(
                "log-likelihood became non-finite at iteration {iterations}"
            )));
        }
        if post.log_likelihood - prev < config.tolerance {
            converged = true;
            break;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((
        model,
        FitReport {
            iterations_run: iterations,
            log_likelihood_trace: trace,
            converged,
            warnings,
        },
    ))
}
