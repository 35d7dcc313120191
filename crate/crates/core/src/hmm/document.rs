//! Versioned JSON model documents.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces every parameter bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::baum_welch::FitConfig;
use super::model::GaussianHmm;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "gaussian-hmm";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    n_states: usize,
    dim: usize,
    start_prob: Vec<f64>,
    transition: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
    fit_config: Option<FitConfig>,
}

/// A model together with the fitting configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: GaussianHmm,
    pub fit_config: Option<FitConfig>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn serialize(model: &GaussianHmm, fit_config: Option<&FitConfig>) -> String {
    let doc = ModelDocument {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        n_states: model.n_states(),
        dim: model.dim(),
        start_prob: model.start_prob().to_vec(),
        transition: rows(model.transition()),
        means: model.means().iter().map(|m| m.iter().copied().collect()).collect(),
        covariances: model.covariances().iter().map(rows).collect(),
        fit_config: fit_config.copied(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("model document is always serializable");
    text.push('\n');
    text
}

fn matrix(rows: &[Vec<f64>], n_rows: usize, n_cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Document(format!("{what} must be {n_rows}x{n_cols}")));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |r, c| rows[r][c]))
}

pub fn deserialize(text: &str) -> Result<StoredModel> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::Document(format!("malformed document: {e}")))?;
    if doc.format != FORMAT_TAG {
        return Err(Error::Document(format!(
            "unexpected format tag `{}`, expected `{FORMAT_TAG}`",
            doc.format
        )));
    }
    if doc.version != FORMAT_VERSION {
        return Err(Error::Document(format!(
            "unsupported version {}, expected {FORMAT_VERSION}",
            doc.version
        )));
    }
    let (n, dim) = (doc.n_states, doc.dim);
    if doc.start_prob.len() != n {
        return Err(Error::Document(format!("start_prob must have {n} entries")));
    }
    if doc.means.len() != n || doc.means.iter().any(|m| m.len() != dim) {
        return Err(Error::Document(format!("means must be {n} vectors of length {dim}")));
    }
    if doc.covariances.len() != n {
        return Err(Error::Document(format!("covariances must hold {n} matrices")));
    }
    let transition = matrix(&doc.transition, n, n, "transition")?;
    let covariances = doc
        .covariances
        .iter()
        .map(|c| matrix(c, dim, dim, "covariance"))
        .collect::<Result<Vec<_>>>()?;
    let means = doc.means.iter().map(|m| DVector::from_column_slice(m)).collect();
    if let Some(cfg) = &doc.fit_config {
        cfg.validate()
            .map_err(|e| Error::Document(format!("fit_config: {e}")))?;
    }
    let model = GaussianHmm::new(doc.start_prob, transition, means, covariances)
        .map_err(|e| Error::Document(e.to_string()))?;
    Ok(StoredModel {
        model,
        fit_config: doc.fit_config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GaussianHmm {
        GaussianHmm::new(
            vec![0.1, 0.9],
            DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 1.0 / 3.0, 2.0 / 3.0]),
            vec![DVector::from_vec(vec![0.1, -0.2]), DVector::from_vec(vec![1e-7, 3.5])],
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.02, 0.0, 0.0, 1e5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_with_config() {
        let m = model();
        let cfg = FitConfig { seed: 42, ..Default::default() };
        let text = serialize(&m, Some(&cfg));
        let back = deserialize(&text).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.fit_config, Some(cfg));
        assert_eq!(serialize(&back.model, Some(&cfg)), text);
    }

    #[test]
    fn bad_row_is_named() {
        let text = serialize(&model(), None).replace("0.7", "0.5");
        let err = deserialize(&text).unwrap_err();
        assert!(err.to_string().contains("row-stochastic"), "{err}");
    }

    #[test]
    fn wrong_version_and_garbage() {
        let text = serialize(&model(), None).replace("\"version\": 1", "\"version\": 2");
        assert!(deserialize(&text).unwrap_err().to_string().contains("version"));
        assert!(matches!(deserialize("not json"), Err(Error::Document(_))));
        let text = serialize(&model(), None).replace("\"dim\": 2", "\"dim\": 3");
        assert!(matches!(deserialize(&text), Err(Error::Document(_))));
    }
}
