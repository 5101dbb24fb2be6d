//! Biased multi-source dataset generators with known ground-truth bias.

mod class_imbalance;
mod hsv;
mod power_law;
mod two_point;

pub use class_imbalance::{gen_class_imbalance, ClassImbalanceConfig};
pub use hsv::{gen_hsv_bins, lower_median, uniform_population, Bin, HsvBinConfig};
pub use power_law::{gen_power_law, power_law_proportions, random_permutation, PowerLawConfig};
pub use two_point::{gen_two_point, TwoPointConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many observations each source receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSizes {
    Explicit { sizes: Vec<usize> },
    /// `total / K` each, remainder spread by largest remainder.
    Balanced { total: usize },
    /// `n_k ∝ alpha^k`, rounded by largest remainder to hit `total`.
    LongTail { total: usize, alpha: f64 },
}

impl SourceSizes {
    pub fn resolve(&self, num_sources: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            SourceSizes::Explicit { sizes } => {
                if sizes.len() != num_sources {
                    return Err(Error::InvalidConfig(format!(
                        "{} sizes given for {num_sources} sources",
                        sizes.len()
                    )));
                }
                sizes.clone()
            }
            SourceSizes::Balanced { total } => {
                largest_remainder(*total, &vec![1.0; num_sources])
            }
            SourceSizes::LongTail { total, alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "long-tail alpha must lie in (0, 1], got {alpha}"
                    )));
                }
                let weights: Vec<f64> = (0..num_sources).map(|k| alpha.powi(k as i32)).collect();
                largest_remainder(*total, &weights)
            }
        };
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "every source needs at least one observation, got {sizes:?}"
            )));
        }
        Ok(sizes)
    }
}

/// Apportions `total` proportionally to `weights` with the largest-remainder
/// rule (ties go to the lower index).
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_tail_hits_total() {
        let sizes = SourceSizes::LongTail {
            total: 50_000,
            alpha: 0.75,
        }
        .resolve(8)
        .unwrap();
        assert_eq!(sizes.iter().sum::<usize>(), 50_000);
        let denom: f64 = (0..8).map(|k| 0.75f64.powi(k)).sum();
        for (k, &n) in sizes.iter().enumerate() {
            let quota = 50_000.0 * 0.75f64.powi(k as i32) / denom;
            assert!((n as f64 - quota).abs() < 1.0, "{k}: {n} vs {quota}");
        }
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn balanced_spreads_remainder() {
        assert_eq!(SourceSizes::Balanced { total: 10 }.resolve(3).unwrap(), vec![4, 3, 3]);
        assert!(SourceSizes::Balanced { total: 2 }.resolve(3).is_err());
    }
}
