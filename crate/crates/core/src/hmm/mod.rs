//! Continuous-emission hidden Markov models: parameters, log-space forward
//! recursion, Baum-Welch fitting and a portable model document.

mod baum_welch;
mod document;
mod forward;
mod gaussian;
mod math;
mod model;

pub use baum_welch::{fit_baum_welch, fit_baum_welch_observed, FitConfig, FitReport};
pub use document::{deserialize, serialize, StoredModel, FORMAT_TAG, FORMAT_VERSION};
pub use forward::{forward_log_likelihood, forward_pass, ForwardPass};
pub use gaussian::{log_gaussian_density, GaussianEmission};
pub use math::log_sum_exp;
pub use model::{GaussianHmm, STOCHASTIC_TOLERANCE};

pub(crate) use forward::propagate;
