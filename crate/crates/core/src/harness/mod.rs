//! Weighted empirical risk minimization with multinomial logistic regression.

mod compare;

pub use compare::{
    compare, gaussian_pool, gaussian_test_set, CompareConfig, CompareReport, OmegaEstimator,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DatasetCollection;
use crate::rng;
use crate::weights::WeightVector;

/// Linear scores `W x + b` over `M` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `M × d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        LinearModel {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Arg-max class (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for c in 1..z.len() {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    /// Cross-entropy `−log softmax(Wx + b)_y`.
    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        let z = self.logits(x);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - z[y]
    }

    /// Adds `scale · ∇ loss(x, y)` to `grad` (weights first, then bias).
    pub fn accumulate_gradient(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64]) {
        let z = self.logits(x);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        for c in 0..self.num_classes {
            let d = scale * (e[c] / s - if c == y { 1.0 } else { 0.0 });
            gb[c] += d;
            let row = &mut gw[c * self.dim..(c + 1) * self.dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Pi { weights: WeightVector },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightUse {
    /// Per-example losses multiplied by `n π`.
    #[default]
    LossReweight,
    /// Each epoch draws `n` rows with replacement with probabilities `π`.
    ResampleWithReplacement,
}

/// Missing JSON keys take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows per step; 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_penalty: f64,
    pub seed: u64,
    pub weighting: Weighting,
    pub weight_use: WeightUse,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            l2_penalty: 1e-4,
            seed: 0,
            weighting: Weighting::Uniform,
            weight_use: WeightUse::LossReweight,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Features and labels in row order.
pub fn design(data: &DatasetCollection) -> Result<(Vec<&[f64]>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    let mut dim = None;
    for (_, obs) in data.rows() {
        let x = obs.features.as_deref().ok_or(Error::MissingKey {
            id: obs.id,
            key: "features",
        })?;
        if *dim.get_or_insert(x.len()) != x.len() {
            return Err(Error::InvalidDataset(format!(
                "observation {} has {} features, expected {}",
                obs.id,
                x.len(),
                dim.unwrap()
            )));
        }
        xs.push(x);
        ys.push(obs.label.ok_or(Error::UnlabeledObservation { id: obs.id })?);
    }
    if xs.is_empty() {
        return Err(Error::InvalidDataset("no rows".into()));
    }
    Ok((xs, ys))
}

fn row_weights(cfg: &TrainConfig, n: usize) -> Result<Vec<f64>> {
    match &cfg.weighting {
        Weighting::Uniform => Ok(WeightVector::uniform(n).pi),
        Weighting::Pi { weights } => {
            if weights.len() != n {
                return Err(Error::MisalignedWeights(format!(
                    "{} weights for {n} rows",
                    weights.len()
                )));
            }
            Ok(weights.pi.clone())
        }
    }
}

/// `Σ_i w_i ℓ_i + ½ l2 ‖W‖²` and its gradient.
pub fn weighted_objective(
    model: &LinearModel,
    xs: &[&[f64]],
    ys: &[usize],
    w: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.num_params()];
    let mut value = 0.0;
    for ((x, &y), &wi) in xs.iter().zip(ys).zip(w) {
        value += wi * model.loss(x, y);
        model.accumulate_gradient(x, y, wi, &mut grad);
    }
    value += 0.5 * l2 * model.weights.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad.iter_mut().zip(&model.weights) {
        *g += l2 * v;
    }
    (value, grad)
}

/// Seeded minibatch momentum descent on the weighted cross-entropy.
pub fn train(data: &DatasetCollection, cfg: &TrainConfig) -> Result<LinearModel> {
    Ok(train_with_history(data, cfg)?.0)
}

/// Like [`train`], also returning the full weighted training objective
/// after each epoch.
pub fn train_with_history(data: &DatasetCollection, cfg: &TrainConfig) -> Result<(LinearModel, Vec<f64>)> {
    cfg.validate()?;
    let (xs, ys) = design(data)?;
    let n = xs.len();
    let pi = row_weights(cfg, n)?;
    let num_classes = data.num_classes().max(ys.iter().max().unwrap() + 1);
    let mut model = LinearModel::zeros(num_classes, xs[0].len());
    let mut velocity = vec![0.0; model.num_params()];
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let scale: Vec<f64> = match cfg.weight_use {
        WeightUse::LossReweight => pi.iter().map(|p| n as f64 * p).collect(),
        WeightUse::ResampleWithReplacement => vec![1.0; n],
    };
    let sampler = match cfg.weight_use {
        WeightUse::ResampleWithReplacement => Some(WeightVector::from_unnormalized(pi.clone())),
        WeightUse::LossReweight => None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, 0);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        match &sampler {
            Some(s) => order = s.sample_indices(n, rng::derive_seed(cfg.seed, epoch as u64))?,
            None if batch < n => order.shuffle(&mut shuffle_rng),
            None => {}
        }
        for chunk in order.chunks(batch) {
            let mut grad = vec![0.0; model.num_params()];
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                model.accumulate_gradient(xs[i], ys[i], scale[i] * inv, &mut grad);
            }
            for (g, v) in grad.iter_mut().zip(&model.weights) {
                *g += cfg.l2_penalty * v;
            }
            for ((p, v), g) in model.params_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
        }
        if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: epoch,
                objective: f64::NAN,
            });
        }
        history.push(weighted_objective(&model, &xs, &ys, &pi, cfg.l2_penalty).0);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` for classes absent from the evaluation set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Mean cross-entropy (weighted when weights are supplied).
    pub risk: f64,
    pub n: usize,
}

pub fn evaluate(model: &LinearModel, test: &DatasetCollection) -> Result<Metrics> {
    evaluate_weighted(model, test, None)
}

/// Metrics with the risk averaged under `weights` (uniform when `None`).
pub fn evaluate_weighted(
    model: &LinearModel,
    test: &DatasetCollection,
    weights: Option<&WeightVector>,
) -> Result<Metrics> {
    let (xs, ys) = design(test)?;
    let n = xs.len();
    let w = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::MisalignedWeights(format!("{} weights for {n} rows", w.len())))
        }
        Some(w) => w.pi.clone(),
        None => vec![1.0 / n as f64; n],
    };
    let m = model.num_classes;
    let mut hits = vec![0usize; m];
    let mut totals = vec![0usize; m];
    let mut correct = 0usize;
    let mut risk = 0.0;
    for ((x, &y), wi) in xs.iter().zip(&ys).zip(&w) {
        let ok = model.predict(x) == y;
        correct += ok as usize;
        if y < m {
            totals[y] += 1;
            hits[y] += ok as usize;
        }
        risk += wi * model.loss(x, y);
    }
    Ok(Metrics {
        accuracy: correct as f64 / n as f64,
        per_class_accuracy: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        risk,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Observation, SourceDataset};

    fn toy() -> DatasetCollection {
        let obs = (0..40)
            .map(|i| {
                let y = i % 2;
                let x = if y == 0 { -1.0 - (i as f64) / 40.0 } else { 1.0 + (i as f64) / 40.0 };
                Observation::new(i).with_label(y).with_features(vec![x, 0.5])
            })
            .collect();
        DatasetCollection::new(vec![SourceDataset::new(0, obs)], 2).unwrap()
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = toy();
        for weight_use in [WeightUse::LossReweight, WeightUse::ResampleWithReplacement] {
            let pi = WeightVector::from_unnormalized((0..40).map(|i| 1.0 + (i % 3) as f64).collect());
            let cfg = TrainConfig {
                batch_size: 8,
                weighting: Weighting::Pi { weights: pi },
                weight_use,
                ..TrainConfig::default()
            };
            let model = train(&data, &cfg).unwrap();
            assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
        }
    }

    #[test]
    fn uniform_equals_explicit_uniform_pi() {
        let data = toy();
        let a = train(&data, &TrainConfig::default()).unwrap();
        let cfg = TrainConfig {
            weighting: Weighting::Pi {
                weights: WeightVector::uniform(40),
            },
            ..TrainConfig::default()
        };
        assert_eq!(a, train(&data, &cfg).unwrap());
    }

    #[test]
    fn misaligned_weights() {
        let cfg = TrainConfig {
            weighting: Weighting::Pi {
                weights: WeightVector::uniform(3),
            },
            ..TrainConfig::default()
        };
        assert!(matches!(train(&toy(), &cfg), Err(Error::MisalignedWeights(_))));
    }

    #[test]
    fn constant_model_scores_one_over_m() {
        let obs = (0..30)
            .map(|i| Observation::new(i).with_label(i % 3).with_features(vec![1.0]))
            .collect();
        let data = DatasetCollection::new(vec![SourceDataset::new(0, obs)], 3).unwrap();
        let model = LinearModel::zeros(3, 1);
        let m = evaluate(&model, &data).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.risk - 3f64.ln()).abs() < 1e-12);
        assert_eq!(m.per_class_accuracy, vec![Some(1.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn full_batch_loss_decreases() {
        let cfg = TrainConfig {
            batch_size: 0,
            momentum: 0.0,
            learning_rate: 0.05,
            epochs: 50,
            ..TrainConfig::default()
        };
        let (_, hist) = train_with_history(&toy(), &cfg).unwrap();
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
