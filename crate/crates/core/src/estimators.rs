//! Biasing functions estimated from the biased samples themselves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{BiasKind, BiasSpec};
use crate::error::{Error, Result};
use crate::model::DatasetCollection;
use crate::omega::build_omega_matrix;

/// Sup-norm distance between estimated and ground-truth biasing functions
/// over the training rows, and the implied constant `C = sup · √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxQuality {
    pub sup_error: f64,
    pub c_omega_hat: f64,
}

/// `ω̂_k(y) ∝ n_k^(y) + smoothing`, divided by its max. Use `smoothing = 0`
/// for raw counts.
pub fn estimate_class_counts(data: &DatasetCollection, smoothing: f64) -> Result<Vec<BiasSpec>> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidConfig("smoothing must be non-negative".into()));
    }
    let m = data.num_classes();
    data.sources()
        .iter()
        .map(|source| {
            let mut counts = vec![0.0f64; m];
            for obs in &source.observations {
                let y = obs.label.ok_or(Error::UnlabeledObservation { id: obs.id })?;
                counts[y] += 1.0;
            }
            let smoothed: Vec<f64> = counts.iter().map(|c| c + smoothing).collect();
            let max = smoothed.iter().cloned().fold(0.0, f64::max);
            Ok(BiasSpec::tabular_labels(
                smoothed
                    .iter()
                    .enumerate()
                    .map(|(y, &c)| (y as i64, c / max)),
            ))
        })
        .collect()
}

/// Indicator of the bounding box of each source's embeddings, optionally
/// inflated by `margin` per coordinate (0 reproduces the plain min/max box).
pub fn estimate_boxes(data: &DatasetCollection, margin: f64) -> Result<Vec<BiasSpec>> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidConfig("margin must be non-negative".into()));
    }
    data.sources()
        .iter()
        .map(|source| {
            let mut lower: Vec<f64> = Vec::new();
            let mut upper: Vec<f64> = Vec::new();
            for obs in &source.observations {
                let e = obs
                    .embedding
                    .as_deref()
                    .ok_or(Error::MissingEmbedding { id: obs.id })?;
                if lower.is_empty() {
                    lower = e.to_vec();
                    upper = e.to_vec();
                    continue;
                }
                if e.len() != lower.len() {
                    return Err(Error::InvalidDataset(format!(
                        "observation {} embedding dimension differs within source {}",
                        obs.id, source.index
                    )));
                }
                for (c, &v) in e.iter().enumerate() {
                    lower[c] = lower[c].min(v);
                    upper[c] = upper[c].max(v);
                }
            }
            Ok(BiasSpec::boxed(
                lower.iter().map(|v| v - margin).collect(),
                upper.iter().map(|v| v + margin).collect(),
            ))
        })
        .collect()
}

/// Wraps `spec` so every positive value moves by exactly `±magnitude`
/// (clipped to `[0, 1]`), sign drawn per observation from `seed`. Forms
/// whose raw values exceed 1 should be passed through
/// [`BiasSpec::rescaled_for`] first, or the clip swallows the perturbation.
pub fn perturb_spec(spec: &BiasSpec, magnitude: f64, seed: u64) -> BiasSpec {
    let mut base = spec.clone();
    // fold scale/multiplier into the base so the perturbation acts on final values
    let factor = spec.scale * spec.multiplier;
    let kind = if factor == 1.0 {
        base.kind
    } else {
        scale_kind(base.kind, factor)
    };
    base = BiasSpec::new(BiasKind::Perturbed {
        base: Box::new(kind),
        magnitude,
        seed,
    });
    base.clamp_max = spec.clamp_max;
    base
}

fn scale_kind(kind: BiasKind, factor: f64) -> BiasKind {
    match kind {
        BiasKind::Tabular {
            values,
            key,
            default,
        } => BiasKind::Tabular {
            values: values.into_iter().map(|(k, v)| (k, v * factor)).collect(),
            key,
            default: default * factor,
        },
        BiasKind::Table { values } => BiasKind::Table {
            values: values.into_iter().map(|(k, v)| (k, v * factor)).collect::<BTreeMap<_, _>>(),
        },
        BiasKind::ClassRatio { p_source, p_test } => BiasKind::ClassRatio {
            p_source: p_source.into_iter().map(|v| v * factor).collect(),
            p_test,
        },
        other => other,
    }
}

/// Compares `estimated` against `truth` on the training rows, both rescaled
/// the same way as for solving.
pub fn approx_quality(
    estimated: &[BiasSpec],
    truth: &[BiasSpec],
    data: &DatasetCollection,
) -> Result<ApproxQuality> {
    let a = build_omega_matrix(estimated, data)?;
    let b = build_omega_matrix(truth, data)?;
    let sup_error = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(ApproxQuality {
        sup_error,
        c_omega_hat: sup_error * (data.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Observation, SourceDataset};

    fn labelled(counts: &[usize]) -> Vec<Observation> {
        let mut out = Vec::new();
        for (y, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                out.push(Observation::new(out.len()).with_label(y));
            }
        }
        out
    }

    #[test]
    fn counts_divided_by_max() {
        let data = DatasetCollection::new(
            vec![SourceDataset::new(0, labelled(&[40, 40, 10, 10, 0, 0]))],
            6,
        )
        .unwrap();
        let spec = &estimate_class_counts(&data, 0.0).unwrap()[0];
        let values: Vec<f64> = (0..6)
            .map(|y| spec.evaluate(&Observation::new(0).with_label(y)).unwrap())
            .collect();
        assert_eq!(values, vec![1.0, 1.0, 0.25, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn single_class_and_balanced_sources() {
        let data = DatasetCollection::new(
            vec![
                SourceDataset::new(0, labelled(&[0, 7, 0])),
                SourceDataset::new(1, labelled(&[5, 5, 5])),
            ],
            3,
        )
        .unwrap();
        let specs = estimate_class_counts(&data, 0.0).unwrap();
        let eval = |s: &BiasSpec, y| s.evaluate(&Observation::new(0).with_label(y)).unwrap();
        assert_eq!((0..3).map(|y| eval(&specs[0], y)).collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!((0..3).map(|y| eval(&specs[1], y)).collect::<Vec<_>>(), vec![1.0; 3]);
    }

    #[test]
    fn unlabeled_is_an_error() {
        let data =
            DatasetCollection::new(vec![SourceDataset::new(0, vec![Observation::new(4)])], 2).unwrap();
        assert_eq!(
            estimate_class_counts(&data, 0.0).unwrap_err(),
            Error::UnlabeledObservation { id: 4 }
        );
    }

    #[test]
    fn bounding_boxes() {
        let obs = vec![
            Observation::new(0).with_embedding(vec![0.1, 0.2, 0.3]),
            Observation::new(1).with_embedding(vec![0.5, 0.1, 0.9]),
        ];
        let single = vec![Observation::new(2).with_embedding(vec![0.4, 0.4, 0.4])];
        let data = DatasetCollection::new(
            vec![SourceDataset::new(0, obs.clone()), SourceDataset::new(1, single)],
            0,
        )
        .unwrap();
        let specs = estimate_boxes(&data, 0.0).unwrap();
        match &specs[0].kind {
            BiasKind::Box { lower, upper } => {
                assert_eq!(lower, &vec![0.1, 0.1, 0.3]);
                assert_eq!(upper, &vec![0.5, 0.2, 0.9]);
            }
            other => panic!("unexpected {other:?}"),
        }
        match &specs[1].kind {
            BiasKind::Box { lower, upper } => assert_eq!(lower, upper),
            other => panic!("unexpected {other:?}"),
        }
        let inside = Observation::new(9).with_embedding(vec![0.3, 0.15, 0.5]);
        let outside = Observation::new(9).with_embedding(vec![0.3, 0.25, 0.5]);
        assert_eq!(specs[0].evaluate(&inside).unwrap(), 1.0);
        assert_eq!(specs[0].evaluate(&outside).unwrap(), 0.0);
        for (k, s) in data.sources().iter().enumerate() {
            for o in &s.observations {
                assert_eq!(specs[k].evaluate(o).unwrap(), 1.0);
            }
        }
        let missing =
            DatasetCollection::new(vec![SourceDataset::new(0, vec![Observation::new(3)])], 0).unwrap();
        assert_eq!(
            estimate_boxes(&missing, 0.0).unwrap_err(),
            Error::MissingEmbedding { id: 3 }
        );
    }

    #[test]
    fn perturbation_magnitude() {
        let spec = BiasSpec::tabular_strata((0..4).map(|s| (s, 0.5)));
        let obs: Vec<Observation> = (0..64).map(|i| Observation::new(i).with_stratum((i % 4) as i64)).collect();
        let same = perturb_spec(&spec, 0.0, 1);
        for o in &obs {
            assert_eq!(same.evaluate(o).unwrap(), spec.evaluate(o).unwrap());
        }
        let sup = |m: f64| {
            let p = perturb_spec(&spec, m, 1);
            obs.iter()
                .map(|o| (p.evaluate(o).unwrap() - spec.evaluate(o).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let c = 0.2;
        let a = sup(c / (100f64).sqrt());
        let b = sup(c / (400f64).sqrt());
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quality_zero_for_exact_estimate() {
        let data = DatasetCollection::new(
            vec![
                SourceDataset::new(0, labelled(&[4, 4, 1, 1])),
                SourceDataset::new(1, labelled(&[1, 1, 4, 4])),
            ],
            4,
        )
        .unwrap();
        let est = estimate_class_counts(&data, 0.0).unwrap();
        let truth = vec![
            BiasSpec::class_ratio(vec![0.4, 0.4, 0.1, 0.1], vec![0.25; 4]),
            BiasSpec::class_ratio(vec![0.1, 0.1, 0.4, 0.4], vec![0.25; 4]),
        ];
        let q = approx_quality(&est, &truth, &data).unwrap();
        assert!(q.sup_error < 1e-15);
    }
}
