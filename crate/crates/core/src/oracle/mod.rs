//! Exact computations on finite supports, used to certify the sample solver.

mod study;
mod threshold;

pub use study::{run_two_point_study, StudyCell, StudyConfig, STANDARD_R_GRID};
pub use threshold::{
    bisect_theta, closed_form_theta, excess, risk, risk_derivative, risk_minimizer,
    threshold_demo, ThetaStar, ThresholdDemo,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omega::OmegaMatrix;
use crate::rng::Rng;
use crate::solver::{self, strong_components, RowMass, SolverConfig};

/// Population-level problem on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProblem {
    pub points: Vec<i64>,
    pub p_test: Vec<f64>,
    /// `omega[z][k] = ω_k(z)`.
    pub omega: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

impl DiscreteProblem {
    pub fn num_sources(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        let z = self.points.len();
        let k = self.lambda.len();
        if z == 0 || k == 0 {
            return Err(Error::InvalidConfig("empty support or no sources".into()));
        }
        if self.p_test.len() != z || self.omega.len() != z {
            return Err(Error::LengthMismatch {
                expected: z,
                actual: self.p_test.len().min(self.omega.len()),
            });
        }
        if let Some(row) = self.omega.iter().find(|r| r.len() != k) {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: row.len(),
            });
        }
        if (self.p_test.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.p_test.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidConfig("p_test must be a distribution".into()));
        }
        if (self.lambda.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.lambda.iter().any(|l| *l <= 0.0) {
            return Err(Error::InvalidConfig("lambda must be a positive distribution".into()));
        }
        for (i, (p, row)) in self.p_test.iter().zip(&self.omega).enumerate() {
            if row.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidConfig(format!("omega row {i} is invalid")));
            }
            if *p > 0.0 && row.iter().all(|w| *w == 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "point {} has test mass but no biasing support",
                    self.points[i]
                )));
            }
        }
        Ok(())
    }

    /// Edge `k → l` iff some point charged by `p_l` has `ω_k > 0`.
    pub fn overlap_graph(&self) -> Vec<Vec<bool>> {
        let k = self.num_sources();
        let mut g = vec![vec![false; k]; k];
        for (p, row) in self.p_test.iter().zip(&self.omega) {
            if *p <= 0.0 {
                continue;
            }
            for l in 0..k {
                if row[l] > 0.0 {
                    for kk in 0..k {
                        if kk != l && row[kk] > 0.0 {
                            g[kk][l] = true;
                        }
                    }
                }
            }
        }
        g
    }
}

/// `Ω_k = Σ_z ω_k(z) p_test(z)`.
pub fn exact_omegas(prob: &DiscreteProblem) -> Vec<f64> {
    (0..prob.num_sources())
        .map(|k| {
            prob.omega
                .iter()
                .zip(&prob.p_test)
                .map(|(row, p)| row[k] * p)
                .sum()
        })
        .collect()
}

/// `p̄(z) = Σ_k λ_k ω_k(z) p_test(z) / Ω_k`, renormalized against rounding.
pub fn exact_pbar(prob: &DiscreteProblem) -> Result<Vec<f64>> {
    let omegas = exact_omegas(prob);
    if let Some(index) = omegas.iter().position(|o| *o <= 0.0) {
        return Err(Error::ZeroNormalizer { index });
    }
    let raw: Vec<f64> = prob
        .omega
        .iter()
        .zip(&prob.p_test)
        .map(|(row, p)| {
            row.iter()
                .zip(&prob.lambda)
                .zip(&omegas)
                .map(|((w, l), o)| l * w * p / o)
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Solver settings used for population solves.
pub fn exact_solver_config() -> SolverConfig {
    SolverConfig {
        grad_tol: 1e-13,
        max_iters: 1_000_000,
        ..SolverConfig::full_gradient()
    }
}

/// Minimizes the population objective (rows weighted by `p̄`) with the
/// sample solver. Returns `W` normalized so that `W_K = 1`.
pub fn exact_solve(prob: &DiscreteProblem) -> Result<Vec<f64>> {
    prob.validate()?;
    let components = strong_components(&prob.overlap_graph());
    if components.len() > 1 {
        return Err(Error::NotConnected { components });
    }
    let pbar = exact_pbar(prob)?;
    let (omega, masses) = population_matrix(prob, &pbar)?;
    let res = solver::solve_weighted(&omega, RowMass::Explicit(&masses), &prob.lambda, &exact_solver_config())?;
    Ok(res.w_hat)
}

/// One row per point with positive `p̄`, with its mass.
pub fn population_matrix(prob: &DiscreteProblem, pbar: &[f64]) -> Result<(OmegaMatrix, Vec<f64>)> {
    let mut rows = Vec::new();
    let mut masses = Vec::new();
    let mut sources = Vec::new();
    let mut ids = Vec::new();
    for (i, (row, &m)) in prob.omega.iter().zip(pbar).enumerate() {
        if m > 0.0 {
            rows.push(row.clone());
            masses.push(m);
            sources.push(row.iter().position(|w| *w > 0.0).unwrap_or(0));
            ids.push(i);
        }
    }
    Ok((OmegaMatrix::from_rows(rows, sources, ids)?, masses))
}

/// Debiased distribution over the points: `p̄(z) / Σ_l λ_l ω_l(z)/W_l`, normalized.
pub fn exact_debiased(prob: &DiscreteProblem, w: &[f64]) -> Result<Vec<f64>> {
    let pbar = exact_pbar(prob)?;
    let raw: Vec<f64> = prob
        .omega
        .iter()
        .zip(&pbar)
        .map(|(row, m)| {
            if *m == 0.0 {
                return 0.0;
            }
            let s: f64 = row.iter().zip(&prob.lambda).zip(w).map(|((o, l), w)| l * o / w).sum();
            m / s
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Random problem with `|Z| ≤ max_points`, `K ≤ max_sources`; roughly 40% of
/// the `ω` entries vanish. Not necessarily connected.
pub fn random_problem(rng: &mut Rng, max_points: usize, max_sources: usize) -> DiscreteProblem {
    let z = rng.random_range(1..=max_points);
    let k = rng.random_range(1..=max_sources);
    let mut p: Vec<f64> = (0..z).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let omega: Vec<Vec<f64>> = (0..z)
        .map(|_| {
            let mut row: Vec<f64> = (0..k)
                .map(|_| {
                    if rng.random::<f64>() < 0.4 {
                        0.0
                    } else {
                        rng.random_range(0.05..=1.0)
                    }
                })
                .collect();
            if row.iter().all(|w| *w == 0.0) {
                let j = rng.random_range(0..k);
                row[j] = rng.random_range(0.05..=1.0);
            }
            row
        })
        .collect();
    let mut lambda: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|v| *v /= total);
    DiscreteProblem {
        points: (0..z as i64).collect(),
        p_test: p,
        omega,
        lambda,
    }
}

/// `count` connected problems by rejection sampling, with the number rejected.
pub fn random_connected_problems(
    count: usize,
    seed: u64,
    max_points: usize,
    max_sources: usize,
) -> (Vec<DiscreteProblem>, usize) {
    let mut rng = crate::rng::stream(seed, 0);
    let mut out = Vec::with_capacity(count);
    let mut rejected = 0;
    while out.len() < count {
        let prob = random_problem(&mut rng, max_points, max_sources);
        let connected = strong_components(&prob.overlap_graph()).len() == 1;
        let positive = exact_omegas(&prob).iter().all(|o| *o > 0.0);
        if connected && positive {
            out.push(prob);
        } else {
            rejected += 1;
        }
    }
    (out, rejected)
}
