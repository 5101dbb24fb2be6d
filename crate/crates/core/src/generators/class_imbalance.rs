use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bias::BiasSpec;
use crate::error::{Error, Result};
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::rng;

/// Sources that each cover two consecutive meta-classes.
///
/// Classes are split into `K` meta-classes `C_0..C_{K-1}` of `M / K`
/// consecutive classes (or consecutive entries of `class_order` when given).
/// Source `k` puts mass `1 - gamma` on `C_k` and `gamma` on `C_{k+1}`
/// (cyclically), uniform inside each meta-class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassImbalanceConfig {
    pub num_classes: usize,
    pub num_sources: usize,
    pub gamma: f64,
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Optional permutation of the classes applied before forming meta-classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_order: Option<Vec<usize>>,
}

impl ClassImbalanceConfig {
    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.num_classes, self.num_sources);
        if k == 0 || m == 0 || m % k != 0 {
            return Err(Error::InvalidConfig(format!(
                "number of sources {k} must divide number of classes {m}"
            )));
        }
        if !(0.0..=0.5).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "overlap gamma must lie in [0, 0.5], got {}",
                self.gamma
            )));
        }
        if self.sizes.len() != k || self.sizes.contains(&0) {
            return Err(Error::InvalidConfig(
                "one positive size per source is required".into(),
            ));
        }
        if let Some(order) = &self.class_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..m).collect::<Vec<_>>() {
                return Err(Error::InvalidConfig("class_order must permute 0..M".into()));
            }
        }
        Ok(())
    }

    /// Meta-classes `C_0..C_{K-1}`.
    pub fn meta_classes(&self) -> Vec<Vec<usize>> {
        let per = self.num_classes / self.num_sources;
        let order: Vec<usize> = self
            .class_order
            .clone()
            .unwrap_or_else(|| (0..self.num_classes).collect());
        order.chunks(per).map(|c| c.to_vec()).collect()
    }

    /// Label distribution `p_k(y)` of source `k`.
    pub fn source_distribution(&self, k: usize) -> Vec<f64> {
        let metas = self.meta_classes();
        let per = (self.num_classes / self.num_sources) as f64;
        let mut p = vec![0.0; self.num_classes];
        for &y in &metas[k] {
            p[y] += (1.0 - self.gamma) / per;
        }
        for &y in &metas[(k + 1) % self.num_sources] {
            p[y] += self.gamma / per;
        }
        p
    }

    /// Ground-truth biasing functions against a uniform test distribution.
    pub fn ground_truth(&self) -> Vec<BiasSpec> {
        let uniform = vec![1.0 / self.num_classes as f64; self.num_classes];
        (0..self.num_sources)
            .map(|k| BiasSpec::class_ratio(self.source_distribution(k), uniform.clone()))
            .collect()
    }
}

/// Draws each source with replacement from `pool[y]`, labels sampled from
/// `p_k`. Returned ids are the row indices of the collection.
pub fn gen_class_imbalance(
    cfg: &ClassImbalanceConfig,
    pool: &[Vec<Observation>],
) -> Result<(DatasetCollection, Vec<BiasSpec>)> {
    cfg.validate()?;
    if pool.len() < cfg.num_classes {
        return Err(Error::EmptyClassPool { class: pool.len() });
    }
    let mut sources = Vec::with_capacity(cfg.num_sources);
    let mut next_id = 0usize;
    for k in 0..cfg.num_sources {
        let p = cfg.source_distribution(k);
        for (y, &mass) in p.iter().enumerate() {
            if mass > 0.0 && pool[y].is_empty() {
                return Err(Error::EmptyClassPool { class: y });
            }
        }
        let labels = WeightedIndex::new(&p)
            .map_err(|e| Error::InvalidConfig(format!("source {k} distribution: {e}")))?;
        let mut rng = rng::stream(cfg.seed, k as u64);
        let mut obs = Vec::with_capacity(cfg.sizes[k]);
        for _ in 0..cfg.sizes[k] {
            let y = labels.sample(&mut rng);
            let pick = rng.random_range(0..pool[y].len());
            let mut o = pool[y][pick].clone();
            o.id = next_id;
            o.label = Some(y);
            next_id += 1;
            obs.push(o);
        }
        sources.push(SourceDataset::new(k, obs));
    }
    let data = DatasetCollection::new(sources, cfg.num_classes)?;
    Ok((data, cfg.ground_truth()))
}
