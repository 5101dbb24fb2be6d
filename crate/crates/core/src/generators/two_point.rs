use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bias::BiasSpec;
use crate::error::{Error, Result};
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::rng;

/// Two-atom model `Z = {1, 2}` with uniform test distribution,
/// `ω_k(1) = R_k` and `ω_k(2) = 1`. Source `k` then has `p_k(1) = R_k / (1 + R_k)`
/// and normalizer `Ω_k = (1 + R_k) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointConfig {
    pub ratios: Vec<f64>,
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl TwoPointConfig {
    pub fn new(r1: f64, r2: f64, n1: usize, n2: usize, seed: u64) -> Self {
        TwoPointConfig {
            ratios: vec![r1, r2],
            sizes: vec![n1, n2],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.ratios.len() != self.sizes.len() {
            return Err(Error::InvalidConfig("one ratio and one size per source".into()));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("ratios must be positive".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        Ok(())
    }

    /// `p_k(1) = R_k / (1 + R_k)`.
    pub fn prob_one(&self, k: usize) -> f64 {
        self.ratios[k] / (1.0 + self.ratios[k])
    }

    /// `Ω_k = (1 + R_k) / 2` for the raw (unrescaled) biasing functions.
    pub fn omegas(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| (1.0 + r) / 2.0).collect()
    }

    pub fn ground_truth(&self) -> Vec<BiasSpec> {
        self.ratios
            .iter()
            .map(|&r| BiasSpec::tabular_strata([(1, r), (2, 1.0)]))
            .collect()
    }
}

/// Observations carry the atom in `stratum` (1 or 2).
pub fn gen_two_point(cfg: &TwoPointConfig) -> Result<(DatasetCollection, Vec<BiasSpec>)> {
    cfg.validate()?;
    let mut next_id = 0;
    let sources = (0..cfg.ratios.len())
        .map(|k| {
            let p1 = cfg.prob_one(k);
            let mut rng = rng::stream(cfg.seed, k as u64);
            let obs = (0..cfg.sizes[k])
                .map(|_| {
                    let z = if rng.random::<f64>() < p1 { 1 } else { 2 };
                    let o = Observation::new(next_id).with_stratum(z);
                    next_id += 1;
                    o
                })
                .collect();
            SourceDataset::new(k, obs)
        })
        .collect();
    Ok((DatasetCollection::new(sources, 0)?, cfg.ground_truth()))
}
