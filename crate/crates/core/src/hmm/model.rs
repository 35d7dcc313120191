use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::gaussian::GaussianEmission;
use super::math::ln_prob;
use crate::error::{Error, Result};

/// Tolerance on probability vectors summing to one.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-8;

/// Hidden Markov model with one full-covariance Gaussian per state.
///
/// Construction validates every parameter, so any value of this type has a
/// row-stochastic transition matrix, a normalized start distribution and
/// positive-definite covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    start_prob: Vec<f64>,
    transition: DMatrix<f64>,
    emissions: Vec<GaussianEmission>,
    log_start: Vec<f64>,
    log_transition: DMatrix<f64>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidModel(format!(
            "{what} has a negative or non-finite entry {bad}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "{what} is not stochastic: sums to {sum}"
        )));
    }
    Ok(())
}

impl GaussianHmm {
    pub fn new(
        start_prob: Vec<f64>,
        transition: DMatrix<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = start_prob.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        if transition.nrows() != n || transition.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "transition matrix is {}x{}, expected {n}x{n}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        if means.len() != n || covariances.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} means and covariances, got {} and {}",
                means.len(),
                covariances.len()
            )));
        }
        check_distribution(&start_prob, "start probability vector")?;
        for i in 0..n {
            let row: Vec<f64> = transition.row(i).iter().copied().collect();
            check_distribution(&row, &format!("transition row {i} (row-stochastic)"))?;
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidModel("observation dimension is zero".into()));
        }
        let mut emissions = Vec::with_capacity(n);
        for (state, (mean, cov)) in means.into_iter().zip(covariances).enumerate() {
            if mean.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "mean of state {state} has dimension {}, expected {dim}",
                    mean.len()
                )));
            }
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "state {state} has non-finite emission parameters"
                )));
            }
            if cov.nrows() != dim || cov.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "covariance of state {state} is {}x{}, expected {dim}x{dim}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            let scale = cov.amax().max(1.0);
            for r in 0..dim {
                for c in 0..r {
                    if (cov[(r, c)] - cov[(c, r)]).abs() > 1e-12 * scale {
                        return Err(Error::InvalidModel(format!(
                            "covariance of state {state} is not symmetric"
                        )));
                    }
                }
            }
            let emission = GaussianEmission::new(mean, cov).map_err(|e| match e {
                Error::CovarianceNotPd => Error::NotPositiveDefinite { state },
                other => other,
            })?;
            emissions.push(emission);
        }
        let log_start = start_prob.iter().map(|&p| ln_prob(p)).collect();
        let log_transition = transition.map(ln_prob);
        Ok(GaussianHmm {
            start_prob,
            transition,
            emissions,
            log_start,
            log_transition,
        })
    }

    pub fn n_states(&self) -> usize {
        self.start_prob.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn start_prob(&self) -> &[f64] {
        &self.start_prob
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn mean(&self, state: usize) -> &DVector<f64> {
        self.emissions[state].mean()
    }

    pub fn covariance(&self, state: usize) -> &DMatrix<f64> {
        self.emissions[state].covariance()
    }

    pub fn means(&self) -> Vec<DVector<f64>> {
        self.emissions.iter().map(|e| e.mean().clone()).collect()
    }

    pub fn covariances(&self) -> Vec<DMatrix<f64>> {
        self.emissions.iter().map(|e| e.covariance().clone()).collect()
    }

    pub fn log_start(&self) -> &[f64] {
        &self.log_start
    }

    pub fn log_transition(&self) -> &DMatrix<f64> {
        &self.log_transition
    }

    pub fn emission_log_density(&self, state: usize, x: &[f64]) -> f64 {
        self.emissions[state].log_density(x)
    }

    /// Per-state emission log-densities of `x`, written into `out`.
    pub fn emission_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.emissions) {
            *o = e.log_density(x);
        }
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!(
                "{perm:?} is not a permutation of {n} states"
            )));
        }
        let start = perm.iter().map(|&p| self.start_prob[p]).collect();
        let transition = DMatrix::from_fn(n, n, |r, c| self.transition[(perm[r], perm[c])]);
        let means = perm.iter().map(|&p| self.mean(p).clone()).collect();
        let covs = perm.iter().map(|&p| self.covariance(p).clone()).collect();
        GaussianHmm::new(start, transition, means, covs)
    }

    /// Draws a state path and observation sequence of length `len`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<f64>>) {
        let n = self.n_states();
        let dim = self.dim();
        let chols: Vec<DMatrix<f64>> = self
            .emissions
            .iter()
            .map(|e| e.covariance().clone().cholesky().expect("validated").l())
            .collect();
        let draw = |probs: &mut dyn Iterator<Item = f64>, rng: &mut R| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, p) in probs.enumerate() {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        };
        let mut states = Vec::with_capacity(len);
        let mut obs = Vec::with_capacity(len);
        for t in 0..len {
            let s = if t == 0 {
                draw(&mut self.start_prob.iter().copied(), rng)
            } else {
                draw(&mut self.transition.row(states[t - 1]).iter().copied(), rng)
            };
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = self.mean(s) + &chols[s] * z;
            states.push(s);
            obs.push(x.iter().copied().collect());
        }
        debug_assert!(states.iter().all(|&s| s < n));
        (states, obs)
    }
}
