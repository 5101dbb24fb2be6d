use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::rng::{self, Rng};

/// Power-law distortion of the modality proportions of a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawConfig {
    /// Base proportions `p_k` over the `K` modalities.
    pub proportions: Vec<f64>,
    /// Bias strength in `(0, 1]`; 1 means no distortion.
    pub gamma: f64,
    pub seed: u64,
    /// Fixed permutation `σ` with values in `1..=K`; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
}

impl PowerLawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "power-law gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        let sum: f64 = self.proportions.iter().sum();
        if self.proportions.is_empty()
            || self.proportions.iter().any(|p| !(*p >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig("proportions must be a distribution".into()));
        }
        if let Some(sigma) = &self.permutation {
            let mut s = sigma.clone();
            s.sort_unstable();
            if s != (1..=self.proportions.len()).collect::<Vec<_>>() {
                return Err(Error::InvalidConfig("permutation must permute 1..=K".into()));
            }
        }
        Ok(())
    }

    /// The permutation `σ` actually used.
    pub fn sigma(&self) -> Vec<usize> {
        self.permutation
            .clone()
            .unwrap_or_else(|| random_permutation(self.proportions.len(), self.seed))
    }

    /// Target train proportions `p'_k`.
    pub fn target(&self) -> Vec<f64> {
        power_law_proportions(&self.proportions, self.gamma, &self.sigma())
    }
}

/// Random permutation of `1..=k`.
pub fn random_permutation(k: usize, seed: u64) -> Vec<usize> {
    let mut sigma: Vec<usize> = (1..=k).collect();
    sigma.shuffle(&mut rng::stream(seed, u64::MAX));
    sigma
}

/// `p'_k ∝ gamma^(-⌊K/2⌋ / σ(k)) p_k`.
pub fn power_law_proportions(p: &[f64], gamma: f64, sigma: &[usize]) -> Vec<f64> {
    let half = (p.len() / 2) as f64;
    let raw: Vec<f64> = p
        .iter()
        .zip(sigma)
        .map(|(&pk, &s)| gamma.powf(-half / s as f64) * pk)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn multinomial(rng: &mut Rng, trials: usize, p: &[f64]) -> Vec<usize> {
    let mut counts = vec![0usize; p.len()];
    let mut remaining = trials as u64;
    let mut mass = 1.0f64;
    for (k, &pk) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == p.len() || mass <= 0.0 {
            counts[k] = remaining as usize;
            break;
        }
        let q = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).map(|b| b.sample(rng)).unwrap_or(0);
        counts[k] = draw as usize;
        remaining -= draw;
        mass -= pk;
    }
    counts
}

/// Samples the pool without replacement in multinomial rounds of size
/// `min_k |I_k|` until some modality is exhausted. Returns a single source
/// whose observations carry `stratum = k`.
pub fn gen_power_law(cfg: &PowerLawConfig, pools: &[Vec<Observation>]) -> Result<DatasetCollection> {
    cfg.validate()?;
    let k = cfg.proportions.len();
    if pools.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: pools.len(),
        });
    }
    if let Some(m) = pools.iter().position(Vec::is_empty) {
        return Err(Error::EmptyModalityPool { modality: m });
    }
    let target = cfg.target();
    let mut rng = rng::stream(cfg.seed, 0);
    let mut remaining: Vec<Vec<usize>> = pools.iter().map(|p| (0..p.len()).collect()).collect();
    let mut out = Vec::new();
    loop {
        let m_samp = remaining.iter().map(Vec::len).min().unwrap_or(0);
        if m_samp == 0 {
            break;
        }
        let counts = multinomial(&mut rng, m_samp, &target);
        for (modality, &count) in counts.iter().enumerate() {
            let idx = &mut remaining[modality];
            // random subset of `count` elements: partial shuffle, take the tail
            let (chosen, _) = idx.partial_shuffle(&mut rng, count);
            let mut chosen = chosen.to_vec();
            chosen.sort_unstable();
            for &i in &chosen {
                let mut o = pools[modality][i].clone();
                o.id = out.len();
                o.stratum = Some(modality as i64);
                out.push(o);
            }
            idx.retain(|i| chosen.binary_search(i).is_err());
        }
    }
    let num_classes = out.iter().filter_map(|o| o.label).max().map_or(0, |m| m + 1);
    DatasetCollection::new(vec![SourceDataset::new(0, out)], num_classes)
}
