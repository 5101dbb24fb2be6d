//! Biasing functions `ω_k` and their evaluation.
//!
//! A [`BiasSpec`] is declarative: it describes the functional form of `ω_k`
//! and is evaluated per observation. Values are always returned in
//! `[0, clamp_max]`. Forms that can exceed the clamp (likelihood ratios,
//! similarity forms) are brought into range by [`BiasSpec::rescaled_for`],
//! which divides by the largest value seen on the training collection; the
//! normalizer estimate absorbs any constant factor, so ratios are all that
//! matter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetCollection, Observation};

/// Which discrete attribute a tabular bias is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TabularKey {
    #[default]
    Stratum,
    Label,
}

/// Functional form of a biasing function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasKind {
    /// Lookup table over strata (or labels). Missing keys evaluate to `default`.
    Tabular {
        #[serde(with = "string_keys")]
        values: BTreeMap<i64, f64>,
        #[serde(default)]
        key: TabularKey,
        #[serde(default)]
        default: f64,
    },
    /// Likelihood ratio `p_source(y) / p_test(y)` of class proportions.
    ClassRatio { p_source: Vec<f64>, p_test: Vec<f64> },
    /// 1 inside the box, decaying linearly with the l1 distance to the box,
    /// reaching 0 at distance `ramp_width`.
    BoxRamp {
        lower: Vec<f64>,
        upper: Vec<f64>,
        ramp_width: f64,
    },
    /// Indicator of an axis-aligned box (bounds inclusive).
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `exp(-β (|e - reference|² - |e - target|²))`.
    SimilarityExp {
        reference: Vec<f64>,
        target: Vec<f64>,
        beta: f64,
    },
    /// `(sᵀ train_mean + β) / (sᵀ proportions + β)`.
    SimilarityRatio {
        train_mean: Vec<f64>,
        proportions: Vec<f64>,
        beta: f64,
    },
    /// Explicit values keyed by observation id. Missing ids evaluate to 0.
    Table {
        #[serde(with = "string_keys")]
        values: BTreeMap<usize, f64>,
    },
    /// `base` shifted by `±magnitude` per observation (sign from a hash of
    /// `seed` and the observation id), clipped to `[0, 1]`. Zeros of `base`
    /// stay zero so the support is preserved.
    Perturbed {
        base: Box<BiasKind>,
        magnitude: f64,
        seed: u64,
    },
}

/// Integer-keyed maps as JSON objects with decimal string keys (internally
/// tagged enums cannot parse integer keys on their own).
mod string_keys {
    use std::collections::BTreeMap;
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S, K>(map: &BTreeMap<K, f64>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        K: Display,
    {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D, K>(d: D) -> Result<BTreeMap<K, f64>, D::Error>
    where
        D: Deserializer<'de>,
        K: FromStr + Ord,
    {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<K>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("invalid integer key `{k}`")))
            })
            .collect()
    }
}

fn default_one() -> f64 {
    1.0
}

/// A biasing function together with its clamp and scale.
///
/// Evaluates to `min(clamp_max, scale * multiplier * raw(z))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    #[serde(flatten)]
    pub kind: BiasKind,
    #[serde(default = "default_one")]
    pub clamp_max: f64,
    /// Set by [`BiasSpec::rescaled_for`].
    #[serde(default = "default_one")]
    pub scale: f64,
    /// User-supplied constant factor. A per-source constant is absorbed by the
    /// normalizer estimate, so it has no effect on debiasing weights.
    #[serde(default = "default_one")]
    pub multiplier: f64,
}

impl From<BiasKind> for BiasSpec {
    fn from(kind: BiasKind) -> Self {
        BiasSpec::new(kind)
    }
}

impl BiasSpec {
    pub fn new(kind: BiasKind) -> Self {
        BiasSpec {
            kind,
            clamp_max: 1.0,
            scale: 1.0,
            multiplier: 1.0,
        }
    }

    pub fn with_clamp_max(mut self, clamp_max: f64) -> Self {
        self.clamp_max = clamp_max;
        self
    }

    pub fn with_multiplier(mut self, multiplier: f64) -> Self {
        self.multiplier = multiplier;
        self
    }

    pub fn tabular_strata(values: impl IntoIterator<Item = (i64, f64)>) -> Self {
        BiasSpec::new(BiasKind::Tabular {
            values: values.into_iter().collect(),
            key: TabularKey::Stratum,
            default: 0.0,
        })
    }

    pub fn tabular_labels(values: impl IntoIterator<Item = (i64, f64)>) -> Self {
        BiasSpec::new(BiasKind::Tabular {
            values: values.into_iter().collect(),
            key: TabularKey::Label,
            default: 0.0,
        })
    }

    pub fn class_ratio(p_source: Vec<f64>, p_test: Vec<f64>) -> Self {
        BiasSpec::new(BiasKind::ClassRatio { p_source, p_test })
    }

    pub fn box_ramp(lower: Vec<f64>, upper: Vec<f64>, ramp_width: f64) -> Self {
        BiasSpec::new(BiasKind::BoxRamp {
            lower,
            upper,
            ramp_width,
        })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BiasSpec::new(BiasKind::Box { lower, upper })
    }

    /// Checks parameter invariants that do not depend on observations.
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_max > 0.0 && self.clamp_max.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "clamp_max must be positive, got {}",
                self.clamp_max
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite())
            || !(self.multiplier > 0.0 && self.multiplier.is_finite())
        {
            return Err(Error::InvalidSpec("scale and multiplier must be positive".into()));
        }
        validate_kind(&self.kind)
    }

    /// Evaluates `ω(z)` in `[0, clamp_max]`.
    pub fn evaluate(&self, obs: &Observation) -> Result<f64> {
        let raw = self.unclamped(obs)?;
        Ok(raw.min(self.clamp_max))
    }

    /// `scale * multiplier * raw(z)` before clamping.
    pub fn unclamped(&self, obs: &Observation) -> Result<f64> {
        let raw = raw_value(&self.kind, obs)?;
        let value = self.scale * self.multiplier * raw;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "bias value {value} for observation {} is not a finite non-negative number",
                obs.id
            )));
        }
        Ok(value)
    }

    /// Returns a copy whose scale maps the largest value over `data` onto
    /// `clamp_max`, when that value exceeds the clamp. Ratios between
    /// observations are preserved.
    pub fn rescaled_for(&self, data: &DatasetCollection) -> Result<BiasSpec> {
        self.validate()?;
        let mut max = 0.0f64;
        for (_, obs) in data.rows() {
            max = max.max(self.unclamped(obs)?);
        }
        let mut out = self.clone();
        if max > self.clamp_max {
            out.scale = self.scale * self.clamp_max / max;
        }
        Ok(out)
    }
}

/// Free-function form of [`BiasSpec::evaluate`].
pub fn evaluate_bias(spec: &BiasSpec, obs: &Observation) -> Result<f64> {
    spec.evaluate(obs)
}

fn validate_kind(kind: &BiasKind) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidSpec(msg));
    match kind {
        BiasKind::Tabular {
            values, default, ..
        } => {
            if values.values().chain(std::iter::once(default)).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("tabular values must be finite and non-negative".into());
            }
        }
        BiasKind::ClassRatio { p_source, p_test } => {
            if p_source.len() != p_test.len() {
                return bad("class ratio distributions differ in length".into());
            }
            for (y, (&ps, &pt)) in p_source.iter().zip(p_test).enumerate() {
                if !(ps.is_finite() && pt.is_finite() && ps >= 0.0 && pt >= 0.0) {
                    return bad(format!("class {y} has an invalid probability"));
                }
                if ps > 0.0 && pt <= 0.0 {
                    return bad(format!("p_test({y}) must be positive where p_source({y}) > 0"));
                }
            }
        }
        BiasKind::BoxRamp {
            lower,
            upper,
            ramp_width,
        } => {
            check_box(lower, upper)?;
            if !(*ramp_width >= 0.0 && ramp_width.is_finite()) {
                return bad("ramp width must be finite and non-negative".into());
            }
        }
        BiasKind::Box { lower, upper } => check_box(lower, upper)?,
        BiasKind::SimilarityExp {
            reference,
            target,
            beta,
        } => {
            if reference.len() != target.len() {
                return bad("similarity vectors differ in length".into());
            }
            if !(*beta >= 0.0 && beta.is_finite()) {
                return bad("beta must be finite and non-negative".into());
            }
        }
        BiasKind::SimilarityRatio {
            train_mean,
            proportions,
            beta,
        } => {
            if train_mean.len() != proportions.len() {
                return bad("similarity vectors differ in length".into());
            }
            if !(*beta >= 0.0 && beta.is_finite()) {
                return bad("beta must be finite and non-negative".into());
            }
        }
        BiasKind::Table { values } => {
            if values.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("table values must be finite and non-negative".into());
            }
        }
        BiasKind::Perturbed {
            base, magnitude, ..
        } => {
            if !(*magnitude >= 0.0 && magnitude.is_finite()) {
                return bad("perturbation magnitude must be non-negative".into());
            }
            validate_kind(base)?;
        }
    }
    Ok(())
}

fn check_box(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::InvalidSpec("box bounds differ in dimension".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidSpec("box lower bound exceeds upper bound".into()));
    }
    Ok(())
}

fn kind_name(kind: &BiasKind) -> &'static str {
    match kind {
        BiasKind::Tabular { .. } => "tabular",
        BiasKind::ClassRatio { .. } => "class_ratio",
        BiasKind::BoxRamp { .. } => "box_ramp",
        BiasKind::Box { .. } => "box",
        BiasKind::SimilarityExp { .. } => "similarity_exp",
        BiasKind::SimilarityRatio { .. } => "similarity_ratio",
        BiasKind::Table { .. } => "table",
        BiasKind::Perturbed { .. } => "perturbed",
    }
}

fn embedding<'a>(kind: &BiasKind, obs: &'a Observation, dim: usize) -> Result<&'a [f64]> {
    let emb = obs.embedding.as_deref().ok_or(Error::MissingField {
        id: obs.id,
        field: "embedding",
        kind: kind_name(kind),
    })?;
    if emb.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { id: obs.id });
    }
    if emb.len() != dim {
        return Err(Error::InvalidSpec(format!(
            "observation {} has embedding dimension {}, spec expects {dim}",
            obs.id,
            emb.len()
        )));
    }
    Ok(emb)
}

/// l1 distance from `x` to its coordinatewise clamp onto `[lower, upper]`.
/// The clamp is the l1 projection onto an axis-aligned box.
pub fn l1_distance_to_box(x: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| (lo - v).max(0.0) + (v - hi).max(0.0))
        .sum()
}

fn label(kind: &BiasKind, obs: &Observation) -> Result<usize> {
    obs.label.ok_or(Error::MissingField {
        id: obs.id,
        field: "label",
        kind: kind_name(kind),
    })
}

fn raw_value(kind: &BiasKind, obs: &Observation) -> Result<f64> {
    match kind {
        BiasKind::Tabular {
            values,
            key,
            default,
        } => {
            let k = match key {
                TabularKey::Stratum => obs.stratum.ok_or(Error::MissingField {
                    id: obs.id,
                    field: "stratum",
                    kind: "tabular",
                })?,
                TabularKey::Label => label(kind, obs)? as i64,
            };
            Ok(values.get(&k).copied().unwrap_or(*default))
        }
        BiasKind::ClassRatio { p_source, p_test } => {
            let y = label(kind, obs)?;
            match (p_source.get(y), p_test.get(y)) {
                (Some(&ps), Some(&pt)) if ps > 0.0 => Ok(ps / pt),
                (Some(_), Some(_)) => Ok(0.0),
                _ => Err(Error::InvalidSpec(format!(
                    "label {y} outside class ratio of length {}",
                    p_source.len()
                ))),
            }
        }
        BiasKind::BoxRamp {
            lower,
            upper,
            ramp_width,
        } => {
            let x = embedding(kind, obs, lower.len())?;
            let d1 = l1_distance_to_box(x, lower, upper);
            if d1 == 0.0 {
                Ok(1.0)
            } else if *ramp_width == 0.0 {
                Ok(0.0)
            } else {
                Ok((1.0 - d1 / ramp_width).max(0.0))
            }
        }
        BiasKind::Box { lower, upper } => {
            let x = embedding(kind, obs, lower.len())?;
            let inside = x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| lo <= v && v <= hi);
            Ok(if inside { 1.0 } else { 0.0 })
        }
        BiasKind::SimilarityExp {
            reference,
            target,
            beta,
        } => {
            if *beta == 0.0 {
                return Ok(1.0);
            }
            let e = embedding(kind, obs, reference.len())?;
            let d_ref: f64 = e.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
            let d_tgt: f64 = e.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((-beta * (d_ref - d_tgt)).exp())
        }
        BiasKind::SimilarityRatio {
            train_mean,
            proportions,
            beta,
        } => {
            let s = embedding(kind, obs, train_mean.len())?;
            let num: f64 = s.iter().zip(train_mean).map(|(a, b)| a * b).sum::<f64>() + beta;
            let den: f64 = s.iter().zip(proportions).map(|(a, b)| a * b).sum::<f64>() + beta;
            if den <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "similarity ratio denominator vanishes for observation {}",
                    obs.id
                )));
            }
            Ok(num.max(0.0) / den)
        }
        BiasKind::Table { values } => Ok(values.get(&obs.id).copied().unwrap_or(0.0)),
        BiasKind::Perturbed {
            base,
            magnitude,
            seed,
        } => {
            let v = raw_value(base, obs)?;
            if v == 0.0 {
                return Ok(0.0);
            }
            Ok((v + magnitude * rademacher(*seed, obs.id as u64)).clamp(0.0, 1.0))
        }
    }
}

/// Deterministic ±1 from a SplitMix64 hash of `(seed, id)`.
fn rademacher(seed: u64, id: u64) -> f64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    if z & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}
