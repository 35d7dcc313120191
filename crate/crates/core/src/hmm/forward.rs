use super::math::log_sum_exp;
use super::model::GaussianHmm;
use crate::error::{Error, Result};

/// Log-space forward variables: `log_alpha[t][j] = log P(O_1..O_t, q_t = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub log_alpha: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

pub(crate) fn check_observations<O: AsRef<[f64]>>(model: &GaussianHmm, obs: &[O]) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("observation sequence is empty".into()));
    }
    let dim = model.dim();
    if let Some((t, o)) = obs.iter().enumerate().find(|(_, o)| o.as_ref().len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "observation {t} has dimension {}, model expects {dim}",
            o.as_ref().len()
        )));
    }
    Ok(())
}

/// Emission log-densities, `T x n`.
pub(crate) fn emission_table<O: AsRef<[f64]>>(model: &GaussianHmm, obs: &[O]) -> Vec<Vec<f64>> {
    let n = model.n_states();
    obs.iter()
        .map(|o| {
            let mut row = vec![0.0; n];
            model.emission_log_densities(o.as_ref(), &mut row);
            row
        })
        .collect()
}

/// One step of the recursion: `out[j] = log sum_i exp(prev[i] + log A[i][j])`.
pub(crate) fn propagate(model: &GaussianHmm, prev: &[f64], out: &mut [f64]) {
    let n = model.n_states();
    let log_a = model.log_transition();
    let mut terms = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        for (i, term) in terms.iter_mut().enumerate() {
            *term = prev[i] + log_a[(i, j)];
        }
        *o = log_sum_exp(&terms);
    }
}

pub(crate) fn forward_from_table(model: &GaussianHmm, log_b: &[Vec<f64>]) -> ForwardPass {
    let n = model.n_states();
    let mut log_alpha: Vec<Vec<f64>> = Vec::with_capacity(log_b.len());
    let first: Vec<f64> = (0..n).map(|j| model.log_start()[j] + log_b[0][j]).collect();
    log_alpha.push(first);
    let mut predicted = vec![0.0; n];
    for b in &log_b[1..] {
        propagate(model, log_alpha.last().unwrap(), &mut predicted);
        log_alpha.push(predicted.iter().zip(b).map(|(p, e)| p + e).collect());
    }
    let log_likelihood = log_sum_exp(log_alpha.last().unwrap());
    ForwardPass {
        log_alpha,
        log_likelihood,
    }
}

pub(crate) fn backward_from_table(model: &GaussianHmm, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = model.n_states();
    let t_len = log_b.len();
    let log_a = model.log_transition();
    let mut log_beta = vec![vec![0.0; n]; t_len];
    let mut terms = vec![0.0; n];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..n {
            for (j, term) in terms.iter_mut().enumerate() {
                *term = log_a[(i, j)] + log_b[t + 1][j] + log_beta[t + 1][j];
            }
            log_beta[t][i] = log_sum_exp(&terms);
        }
    }
    log_beta
}

pub fn forward_pass<O: AsRef<[f64]>>(model: &GaussianHmm, observations: &[O]) -> Result<ForwardPass> {
    check_observations(model, observations)?;
    Ok(forward_from_table(model, &emission_table(model, observations)))
}

/// `log P(O_1..O_T | model)`, computed in log space in `O(n^2 T)`.
pub fn forward_log_likelihood<O: AsRef<[f64]>>(model: &GaussianHmm, observations: &[O]) -> Result<f64> {
    forward_pass(model, observations).map(|f| f.log_likelihood)
}
