//! Gini index of the debiasing weights over a grid of two-point models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{gen_two_point, TwoPointConfig};
use crate::omega::{build_omega_matrix, rescale_specs};
use crate::rng::derive_seed;
use crate::solver::{solve, SolverConfig};
use crate::weights::{compute_pi, gini};

pub const STANDARD_R_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub r_grid: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl StudyConfig {
    /// 5 × 5 grid, 100 observations per source, 100 trials per cell.
    pub fn standard(seed: u64) -> Self {
        StudyConfig {
            r_grid: STANDARD_R_GRID.to_vec(),
            n1: 100,
            n2: 100,
            trials: 100,
            seed,
            solver: SolverConfig::full_gradient(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub r1: f64,
    pub r2: f64,
    pub mean_gini: f64,
    /// Twice the (population) standard deviation of the Gini over trials.
    pub two_sigma: f64,
    /// Mean `|G(Ŵ) − G(Ω)|`, the second Gini using the exact normalizers.
    pub mean_abs_diff: f64,
    pub mean_true_gini: f64,
}

struct Trial {
    gini: f64,
    true_gini: f64,
}

fn run_trial(r1: f64, r2: f64, cfg: &StudyConfig, seed: u64) -> Result<Trial> {
    let (data, specs) = gen_two_point(&TwoPointConfig::new(r1, r2, cfg.n1, cfg.n2, seed))?;
    let omega = build_omega_matrix(&specs, &data)?;
    let lambda = data.lambda();
    let res = solve(&omega, &lambda, &cfg.solver)?;
    let pi = compute_pi(&omega, &lambda, &res.w_hat)?;
    // exact normalizers of the rescaled biasing functions under a uniform test law
    let scaled = rescale_specs(&specs, &data)?;
    let exact: Vec<f64> = scaled
        .iter()
        .map(|s| {
            let at = |z| s.evaluate(&crate::model::Observation::new(0).with_stratum(z));
            Ok(0.5 * (at(1)? + at(2)?))
        })
        .collect::<Result<_>>()?;
    let true_pi = compute_pi(&omega, &lambda, &exact)?;
    Ok(Trial {
        gini: gini(&pi),
        true_gini: gini(&true_pi),
    })
}

/// Row-major over `(R₁, R₂)`. Trials run in parallel with per-trial seeds,
/// so the table does not depend on the thread count.
pub fn run_two_point_study(cfg: &StudyConfig) -> Result<Vec<StudyCell>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let cells: Vec<(usize, f64, f64)> = cfg
        .r_grid
        .iter()
        .flat_map(|&a| cfg.r_grid.iter().map(move |&b| (a, b)))
        .enumerate()
        .map(|(i, (a, b))| (i, a, b))
        .collect();
    cells
        .iter()
        .map(|&(cell, r1, r2)| {
            let trials: Vec<Trial> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(cfg.seed, (cell * cfg.trials + t) as u64);
                    run_trial(r1, r2, cfg, seed)
                })
                .collect::<Result<_>>()?;
            let m = trials.len() as f64;
            let mean = trials.iter().map(|t| t.gini).sum::<f64>() / m;
            let var = trials.iter().map(|t| (t.gini - mean).powi(2)).sum::<f64>() / m;
            Ok(StudyCell {
                r1,
                r2,
                mean_gini: mean,
                two_sigma: 2.0 * var.sqrt(),
                mean_abs_diff: trials.iter().map(|t| (t.gini - t.true_gini).abs()).sum::<f64>() / m,
                mean_true_gini: trials.iter().map(|t| t.true_gini).sum::<f64>() / m,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_ratios_give_zero() {
        let cfg = StudyConfig {
            r_grid: vec![1.0],
            trials: 5,
            ..StudyConfig::standard(1)
        };
        let cells = run_two_point_study(&cfg).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].mean_gini.abs() < 1e-12);
        assert!(cells[0].mean_abs_diff.abs() < 1e-12);
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = StudyConfig {
            trials: 0,
            ..StudyConfig::standard(1)
        };
        assert!(run_two_point_study(&cfg).is_err());
    }
}
