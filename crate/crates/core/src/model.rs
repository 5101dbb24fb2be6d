//! Observations and multi-source datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single observation `z = (x, y)`.
///
/// `embedding` is the low-dimensional representation biasing functions act on
/// (e.g. the mean HSV value of an image border). `features` are what the
/// classifier sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl Observation {
    pub fn new(id: usize) -> Self {
        Observation {
            id,
            label: None,
            stratum: None,
            embedding: None,
            features: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_stratum(mut self, stratum: i64) -> Self {
        self.stratum = Some(stratum);
        self
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }
}

/// Observations drawn from one biased source `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDataset {
    pub index: usize,
    pub observations: Vec<Observation>,
}

impl SourceDataset {
    pub fn new(index: usize, observations: Vec<Observation>) -> Self {
        SourceDataset {
            index,
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// The `K` biased samples together with their sizes and proportions `λ_k = n_k / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCollection {
    sources: Vec<SourceDataset>,
    num_classes: usize,
}

impl DatasetCollection {
    /// Validates and wraps `sources`. Sources are re-indexed `0..K` in the given order.
    pub fn new(mut sources: Vec<SourceDataset>, num_classes: usize) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidDataset("at least one source is required".into()));
        }
        for (k, source) in sources.iter_mut().enumerate() {
            if source.is_empty() {
                return Err(Error::InvalidDataset(format!("source {k} is empty")));
            }
            source.index = k;
            for obs in &source.observations {
                if let Some(label) = obs.label {
                    if num_classes > 0 && label >= num_classes {
                        return Err(Error::InvalidDataset(format!(
                            "observation {} has label {label} >= {num_classes} classes",
                            obs.id
                        )));
                    }
                }
                if let Some(emb) = &obs.embedding {
                    if emb.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite { id: obs.id });
                    }
                }
            }
        }
        Ok(DatasetCollection {
            sources,
            num_classes,
        })
    }

    pub fn sources(&self) -> &[SourceDataset] {
        &self.sources
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Total number of observations `n`.
    pub fn len(&self) -> usize {
        self.sources.iter().map(SourceDataset::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sources.iter().map(SourceDataset::len).collect()
    }

    /// Source proportions `λ_k = n_k / n`.
    pub fn lambda(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.sources.iter().map(|s| s.len() as f64 / n).collect()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Iterates `(source index, observation)` in source-major order, the row order
    /// used by [`crate::omega::OmegaMatrix`] and [`crate::weights::WeightVector`].
    pub fn rows(&self) -> impl Iterator<Item = (usize, &Observation)> + '_ {
        self.sources
            .iter()
            .flat_map(|s| s.observations.iter().map(move |o| (s.index, o)))
    }

    /// Source index of every row.
    pub fn row_sources(&self) -> Vec<usize> {
        self.rows().map(|(k, _)| k).collect()
    }

    /// Concatenates all sources into a single one (naive pooling).
    pub fn pooled(&self) -> DatasetCollection {
        let obs = self.rows().map(|(_, o)| o.clone()).collect();
        DatasetCollection {
            sources: vec![SourceDataset::new(0, obs)],
            num_classes: self.num_classes,
        }
    }

    /// Label histogram over all rows (length `num_classes`).
    pub fn label_counts(&self) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.num_classes];
        for (_, obs) in self.rows() {
            let y = obs.label.ok_or(Error::UnlabeledObservation { id: obs.id })?;
            counts[y] += 1;
        }
        Ok(counts)
    }
}
