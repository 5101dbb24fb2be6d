use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{evaluate, train, Metrics, TrainConfig, WeightUse, Weighting};
use crate::bias::BiasSpec;
use crate::error::{Error, Result};
use crate::estimators::estimate_class_counts;
use crate::generators::{gen_class_imbalance, ClassImbalanceConfig, SourceSizes};
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::omega::build_omega_matrix;
use crate::rng;
use crate::solver::{solve, SolverConfig};
use crate::weights::{compute_pi, gini, l2_to_reference, WeightVector};

/// Naive versus debiased ERM on class-imbalanced sources with Gaussian
/// class-conditional features (class `y` centred at the unit vector `e_y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub num_classes: usize,
    pub num_sources: usize,
    pub gamma: f64,
    pub sizes: SourceSizes,
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_pool")]
    pub pool_per_class: usize,
    #[serde(default = "default_test")]
    pub test_per_class: usize,
    pub seed: u64,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub estimator: OmegaEstimator,
}

/// Where the debiased model's biasing functions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OmegaEstimator {
    /// Label counts of each source.
    #[default]
    Counts,
    /// The generator's exact class ratios.
    Truth,
    /// `ω ≡ 1` for every source.
    Unbiased,
}

fn default_dim() -> usize {
    16
}
fn default_noise() -> f64 {
    0.35
}
fn default_pool() -> usize {
    2000
}
fn default_test() -> usize {
    500
}
fn default_train() -> TrainConfig {
    TrainConfig::default()
}

impl CompareConfig {
    pub fn new(num_classes: usize, num_sources: usize, gamma: f64, sizes: SourceSizes, seed: u64) -> Self {
        CompareConfig {
            num_classes,
            num_sources,
            gamma,
            sizes,
            feature_dim: default_dim(),
            noise_std: default_noise(),
            pool_per_class: default_pool(),
            test_per_class: default_test(),
            seed,
            train: default_train(),
            solver: SolverConfig::default(),
            estimator: OmegaEstimator::Counts,
        }
    }

    pub fn with_weight_use(mut self, weight_use: WeightUse) -> Self {
        self.train.weight_use = weight_use;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub gamma: f64,
    pub naive: Metrics,
    pub debiased: Metrics,
    pub w_hat: Vec<f64>,
    pub solver_converged: bool,
    pub gini: f64,
    pub l2_to_uniform: f64,
}

/// `per_class` feature vectors per class, `x = e_y + noise_std · N(0, I)`.
pub fn gaussian_pool(
    num_classes: usize,
    dim: usize,
    noise_std: f64,
    per_class: usize,
    seed: u64,
) -> Result<Vec<Vec<Observation>>> {
    if dim < num_classes {
        return Err(Error::InvalidConfig(format!(
            "feature_dim {dim} must be at least the number of classes {num_classes}"
        )));
    }
    let noise = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidConfig(format!("noise_std: {e}")))?;
    let mut id = 0;
    Ok((0..num_classes)
        .map(|y| {
            let mut r = rng::stream(seed, y as u64);
            (0..per_class)
                .map(|_| {
                    let mut x: Vec<f64> = (0..dim).map(|_| noise.sample(&mut r)).collect();
                    x[y] += 1.0;
                    id += 1;
                    Observation::new(id - 1).with_label(y).with_features(x)
                })
                .collect()
        })
        .collect())
}

/// Balanced single-source test collection.
pub fn gaussian_test_set(
    num_classes: usize,
    dim: usize,
    noise_std: f64,
    per_class: usize,
    seed: u64,
) -> Result<DatasetCollection> {
    let obs: Vec<Observation> = gaussian_pool(num_classes, dim, noise_std, per_class, seed)?
        .into_iter()
        .flatten()
        .collect();
    DatasetCollection::new(vec![SourceDataset::new(0, obs)], num_classes)
}

/// Generates sources, estimates `ω̂` by label counts, solves for `Ŵ`, then
/// trains a plain and a `π`-weighted model on the same seed and scores both
/// on a balanced held-out set.
pub fn compare(cfg: &CompareConfig) -> Result<CompareReport> {
    let sizes = cfg.sizes.resolve(cfg.num_sources)?;
    let pool = gaussian_pool(
        cfg.num_classes,
        cfg.feature_dim,
        cfg.noise_std,
        cfg.pool_per_class,
        rng::derive_seed(cfg.seed, 1),
    )?;
    let gen = ClassImbalanceConfig {
        num_classes: cfg.num_classes,
        num_sources: cfg.num_sources,
        gamma: cfg.gamma,
        sizes,
        seed: rng::derive_seed(cfg.seed, 2),
        class_order: None,
    };
    let (data, truth) = gen_class_imbalance(&gen, &pool)?;
    let test = gaussian_test_set(
        cfg.num_classes,
        cfg.feature_dim,
        cfg.noise_std,
        cfg.test_per_class,
        rng::derive_seed(cfg.seed, 3),
    )?;

    let specs = match cfg.estimator {
        OmegaEstimator::Counts => estimate_class_counts(&data, 0.0)?,
        OmegaEstimator::Truth => truth,
        OmegaEstimator::Unbiased => {
            let ones = BiasSpec::tabular_labels((0..cfg.num_classes as i64).map(|y| (y, 1.0)));
            vec![ones; cfg.num_sources]
        }
    };
    let omega = build_omega_matrix(&specs, &data)?;
    let lambda = data.lambda();
    let res = solve(&omega, &lambda, &cfg.solver)?;
    let pi = compute_pi(&omega, &lambda, &res.w_hat)?;

    let train_seed = rng::derive_seed(cfg.seed, 4);
    let naive_cfg = TrainConfig {
        seed: train_seed,
        weighting: Weighting::Uniform,
        ..cfg.train.clone()
    };
    let debiased_cfg = TrainConfig {
        seed: train_seed,
        weighting: Weighting::Pi { weights: pi.clone() },
        ..cfg.train.clone()
    };
    let naive = evaluate(&train(&data, &naive_cfg)?, &test)?;
    let debiased = evaluate(&train(&data, &debiased_cfg)?, &test)?;
    let n = pi.len();
    Ok(CompareReport {
        seed: cfg.seed,
        gamma: cfg.gamma,
        naive,
        debiased,
        w_hat: res.w_hat,
        solver_converged: res.converged,
        gini: gini(&pi),
        l2_to_uniform: l2_to_reference(&pi, &WeightVector::uniform(n).pi)?,
    })
}
