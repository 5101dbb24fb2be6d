use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SourceSizes;
use crate::bias::BiasSpec;
use crate::error::{Error, Result};
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::rng;

const DIM: usize = 3;
const NUM_BINS: usize = 8;

/// Configuration for the border-color acquisition scenario: eight sources,
/// one per median-split octant of the 3-dim embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvBinConfig {
    pub gamma_ramp: f64,
    pub sizes: SourceSizes,
    pub seed: u64,
}

/// Octant `l = 4 b_H + 2 b_S + b_V` of the median split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub index: usize,
    pub code: [u8; 3],
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Bin {
    pub fn new(index: usize, medians: [f64; 3]) -> Bin {
        let code = [
            ((index >> 2) & 1) as u8,
            ((index >> 1) & 1) as u8,
            (index & 1) as u8,
        ];
        let mut lower = [0.0; 3];
        let mut upper = [1.0; 3];
        for c in 0..DIM {
            if code[c] == 1 {
                lower[c] = medians[c];
            } else {
                upper[c] = medians[c];
            }
        }
        Bin {
            index,
            code,
            lower,
            upper,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..DIM).all(|c| self.lower[c] <= x[c] && x[c] <= self.upper[c])
    }
}

/// `size` points uniform on `[0, 1]^3`; labels uniform on `0..num_classes`
/// when `num_classes > 0`.
pub fn uniform_population(size: usize, num_classes: usize, seed: u64) -> Vec<Observation> {
    let mut rng = rng::stream(seed, 0);
    (0..size)
        .map(|i| {
            let e: Vec<f64> = (0..DIM).map(|_| rng.random::<f64>()).collect();
            let o = Observation::new(i).with_embedding(e);
            if num_classes > 0 {
                o.with_label(rng.random_range(0..num_classes))
            } else {
                o
            }
        })
        .collect()
}

/// Lower median (element `(n - 1) / 2` of the sorted values).
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(v.len() - 1) / 2]
}

/// Splits the population at the per-coordinate medians into 8 bins, builds a
/// ramp biasing function around each bin and samples every source with
/// replacement proportionally to its biasing function.
pub fn gen_hsv_bins(
    cfg: &HsvBinConfig,
    population: &[Observation],
) -> Result<(DatasetCollection, Vec<BiasSpec>, Vec<Bin>)> {
    if !(cfg.gamma_ramp > 0.0 && cfg.gamma_ramp.is_finite()) {
        return Err(Error::InvalidConfig("ramp width must be positive".into()));
    }
    if population.len() < NUM_BINS {
        return Err(Error::InvalidDataset(format!(
            "population has {} observations, at least {NUM_BINS} needed",
            population.len()
        )));
    }
    let mut coords: Vec<Vec<f64>> = (0..DIM).map(|_| Vec::with_capacity(population.len())).collect();
    for obs in population {
        let e = obs
            .embedding
            .as_deref()
            .ok_or(Error::MissingEmbedding { id: obs.id })?;
        if e.len() != DIM {
            return Err(Error::InvalidDataset(format!(
                "observation {} has a {}-dim embedding",
                obs.id,
                e.len()
            )));
        }
        for c in 0..DIM {
            if !e[c].is_finite() {
                return Err(Error::NonFinite { id: obs.id });
            }
            if !(0.0..=1.0).contains(&e[c]) {
                return Err(Error::InvalidDataset(format!(
                    "observation {} embedding lies outside [0, 1]^3",
                    obs.id
                )));
            }
            coords[c].push(e[c]);
        }
    }
    let mut medians = [0.0; 3];
    for c in 0..DIM {
        let (lo, hi) = coords[c]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo == hi {
            return Err(Error::DegeneratePopulation { coordinate: c });
        }
        medians[c] = lower_median(&coords[c]);
    }
    let bins: Vec<Bin> = (0..NUM_BINS).map(|l| Bin::new(l, medians)).collect();
    let specs: Vec<BiasSpec> = bins
        .iter()
        .map(|b| BiasSpec::box_ramp(b.lower.to_vec(), b.upper.to_vec(), cfg.gamma_ramp))
        .collect();
    let sizes = cfg.sizes.resolve(NUM_BINS)?;

    let mut sources = Vec::with_capacity(NUM_BINS);
    let mut next_id = 0usize;
    for (k, spec) in specs.iter().enumerate() {
        let weights = population
            .iter()
            .map(|o| spec.evaluate(o))
            .collect::<Result<Vec<f64>>>()?;
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidDataset(format!("bin {k} sampling weights: {e}")))?;
        let mut rng = rng::stream(cfg.seed, k as u64);
        let obs = (0..sizes[k])
            .map(|_| {
                let mut o = population[dist.sample(&mut rng)].clone();
                o.id = next_id;
                next_id += 1;
                o
            })
            .collect();
        sources.push(SourceDataset::new(k, obs));
    }
    let num_classes = population
        .iter()
        .filter_map(|o| o.label)
        .max()
        .map_or(0, |m| m + 1);
    let data = DatasetCollection::new(sources, num_classes)?;
    Ok((data, specs, bins))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn population(n: usize, seed: u64) -> Vec<Observation> {
        uniform_population(n, 0, seed)
    }

    #[test]
    fn bin_five_layout() {
        let b = Bin::new(5, [0.3, 0.4, 0.6]);
        assert_eq!(b.code, [1, 0, 1]);
        assert_eq!(b.lower, [0.3, 0.0, 0.6]);
        assert_eq!(b.upper, [1.0, 0.4, 1.0]);
    }

    #[test]
    fn lower_median_even() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn every_point_in_some_bin() {
        let pop = population(500, 1);
        let cfg = HsvBinConfig {
            gamma_ramp: 0.1,
            sizes: SourceSizes::Balanced { total: 800 },
            seed: 2,
        };
        let (data, specs, bins) = gen_hsv_bins(&cfg, &pop).unwrap();
        assert_eq!(data.len(), 800);
        for o in &pop {
            let e = o.embedding.as_ref().unwrap();
            assert!(bins.iter().any(|b| b.contains(e)));
            assert!(specs.iter().any(|s| s.evaluate(o).unwrap() == 1.0));
        }
        // sampled points carry positive weight under their own source
        for source in data.sources() {
            for o in &source.observations {
                assert!(specs[source.index].evaluate(o).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn degenerate_population_is_reported() {
        let pop: Vec<Observation> = (0..10)
            .map(|i| Observation::new(i).with_embedding(vec![i as f64 / 10.0, 0.5, 0.2]))
            .collect();
        let cfg = HsvBinConfig {
            gamma_ramp: 0.1,
            sizes: SourceSizes::Balanced { total: 16 },
            seed: 0,
        };
        assert_eq!(
            gen_hsv_bins(&cfg, &pop).unwrap_err(),
            Error::DegeneratePopulation { coordinate: 1 }
        );
    }

    #[test]
    fn long_tail_sizes() {
        let pop = population(200, 4);
        let cfg = HsvBinConfig {
            gamma_ramp: 0.2,
            sizes: SourceSizes::LongTail {
                total: 5000,
                alpha: 0.75,
            },
            seed: 9,
        };
        let (data, _, _) = gen_hsv_bins(&cfg, &pop).unwrap();
        assert_eq!(data.len(), 5000);
        assert!(data.sizes().windows(2).all(|w| w[0] >= w[1]));
    }
}
