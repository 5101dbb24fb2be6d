//! Debiasing weights `π_ki ∝ (Σ_l λ_l ω_l(z_i^(k)) / Ŵ_l)^{-1}` and metrics on them.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DatasetCollection;
use crate::omega::OmegaMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub pi: Vec<f64>,
    pub unnormalized: Vec<f64>,
}

impl WeightVector {
    /// `π = 1/n` on every row.
    pub fn uniform(n: usize) -> Self {
        WeightVector {
            pi: vec![1.0 / n as f64; n],
            unnormalized: vec![1.0; n],
        }
    }

    /// Normalizes arbitrary positive weights.
    pub fn from_unnormalized(unnormalized: Vec<f64>) -> Self {
        if unnormalized.windows(2).all(|w| w[0] == w[1]) {
            let n = unnormalized.len() as f64;
            return WeightVector {
                pi: vec![1.0 / n; unnormalized.len()],
                unnormalized,
            };
        }
        let total: f64 = unnormalized.iter().sum();
        WeightVector {
            pi: unnormalized.iter().map(|v| v / total).collect(),
            unnormalized,
        }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Caps every `π` at `cap / n`, spreading the excess proportionally over
    /// the uncapped rows. Off by default in every pipeline.
    pub fn capped(&self, cap: f64) -> Result<WeightVector> {
        let n = self.pi.len();
        if !(cap >= 1.0) {
            return Err(Error::InvalidConfig("weight cap must be at least 1".into()));
        }
        let limit = cap / n as f64;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.pi[b].partial_cmp(&self.pi[a]).unwrap());
        let mut free: f64 = self.pi.iter().sum();
        let mut capped = 0;
        // capped rows are a prefix of the descending order
        while capped < n {
            let share = (1.0 - capped as f64 * limit) * self.pi[order[capped]] / free;
            if share <= limit {
                break;
            }
            free -= self.pi[order[capped]];
            capped += 1;
        }
        let scale = (1.0 - capped as f64 * limit) / free;
        let mut pi: Vec<f64> = self.pi.iter().map(|p| p * scale).collect();
        for &i in &order[..capped] {
            pi[i] = limit;
        }
        Ok(WeightVector {
            pi,
            unnormalized: self.unnormalized.clone(),
        })
    }

    /// `count` row indices drawn with replacement with probabilities `π`.
    pub fn sample_indices(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(&self.pi)
            .map_err(|e| Error::InvalidDataset(format!("sampling weights: {e}")))?;
        let mut r = rng::stream(seed, 0);
        Ok((0..count).map(|_| dist.sample(&mut r)).collect())
    }
}

pub fn compute_pi(omega: &OmegaMatrix, lambda: &[f64], w_hat: &[f64]) -> Result<WeightVector> {
    let k = omega.ncols();
    for (len, expected) in [(lambda.len(), k), (w_hat.len(), k)] {
        if len != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: len,
            });
        }
    }
    if let Some((index, &value)) = w_hat
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
    {
        return Err(Error::NonPositiveW { index, value });
    }
    let coef: Vec<f64> = lambda.iter().zip(w_hat).map(|(l, w)| l / w).collect();
    let unnormalized: Vec<f64> = (0..omega.nrows())
        .map(|r| {
            let s: f64 = omega.row(r).iter().zip(&coef).map(|(o, c)| o * c).sum();
            1.0 / s
        })
        .collect();
    if let Some(r) = unnormalized.iter().position(|v| !v.is_finite()) {
        return Err(Error::AllZeroRow { row: r });
    }
    Ok(WeightVector::from_unnormalized(unnormalized))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKey {
    Label,
    Stratum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedDistribution {
    pub support: Vec<i64>,
    pub mass: Vec<f64>,
}

impl DebiasedDistribution {
    /// Mass at `v`, 0 off the support.
    pub fn mass_of(&self, v: i64) -> f64 {
        self.support
            .iter()
            .position(|s| *s == v)
            .map_or(0.0, |i| self.mass[i])
    }

    /// Total variation distance to `reference` indexed by `0..len`.
    pub fn total_variation(&self, reference: &[f64]) -> f64 {
        let mut tv = 0.0;
        for (v, r) in reference.iter().enumerate() {
            tv += (self.mass_of(v as i64) - r).abs();
        }
        for (s, m) in self.support.iter().zip(&self.mass) {
            if *s < 0 || *s as usize >= reference.len() {
                tv += m.abs();
            }
        }
        tv / 2.0
    }
}

pub fn debiased_distribution(
    pi: &WeightVector,
    data: &DatasetCollection,
    key: DistributionKey,
) -> Result<DebiasedDistribution> {
    if pi.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            actual: pi.len(),
        });
    }
    let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
    for ((_, obs), &p) in data.rows().zip(&pi.pi) {
        let v = match key {
            DistributionKey::Label => obs.label.map(|y| y as i64).ok_or(Error::MissingKey {
                id: obs.id,
                key: "label",
            })?,
            DistributionKey::Stratum => obs.stratum.ok_or(Error::MissingKey {
                id: obs.id,
                key: "stratum",
            })?,
        };
        *acc.entry(v).or_insert(0.0) += p;
    }
    let (support, mass) = acc.into_iter().unzip();
    Ok(DebiasedDistribution { support, mass })
}

/// Gini index via the sorted identity `Σ_i (2i − n − 1) x_(i) / (n Σ x)`.
pub fn gini(pi: &WeightVector) -> f64 {
    gini_of(&pi.pi)
}

pub fn gini_of(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total == 0.0 || values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let s: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i + 1) as f64 - nf - 1.0) * v)
        .sum();
    s / (nf * total)
}

/// Quadratic-time reference `Σ_{a,b} |x_a − x_b| / (2 n Σ x)`.
pub fn gini_naive(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for a in values {
        for b in values {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n as f64 * total)
}

pub fn l2_to_reference(pi: &WeightVector, reference: &[f64]) -> Result<f64> {
    if pi.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: pi.len(),
            actual: reference.len(),
        });
    }
    Ok(pi
        .pi
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}
