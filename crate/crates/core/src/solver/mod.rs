//! Normalizer estimation by momentum descent on the convex objective.

mod diagnostics;
mod objective;

pub use diagnostics::{diagnose, overlap_graph, strong_components, OverlapDiagnostics};
pub use objective::{
    gradient, gradient_weighted, hessian, hessian_weighted, objective, objective_weighted, RowMass,
    BLOCK,
};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omega::OmegaMatrix;
use crate::rng;

/// Consecutive objective increases tolerated before reporting divergence.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    FullGradient,
    Minibatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Init {
    Zero,
    SeededNormal { seed: u64 },
}

/// Missing JSON keys take the full-gradient defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub max_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_tol: f64,
    pub init: Init,
    /// Seed of the minibatch stream.
    pub seed: u64,
    /// Record (and, in minibatch mode, test the stopping rule) every this many iterations.
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::full_gradient()
    }
}

impl SolverConfig {
    /// Deterministic full-gradient descent run to `‖∇D̂‖_∞ ≤ 1e−8`.
    pub fn full_gradient() -> Self {
        SolverConfig {
            mode: SolverMode::FullGradient,
            max_iters: 200_000,
            batch_size: 0,
            learning_rate: 1.0,
            momentum: 0.9,
            grad_tol: 1e-8,
            init: Init::Zero,
            seed: 0,
            trace_every: 1,
        }
    }

    /// 4000 minibatch iterations, batch 100, step 1e−2, momentum 0.9.
    pub fn minibatch(seed: u64) -> Self {
        SolverConfig {
            mode: SolverMode::Minibatch,
            max_iters: 4000,
            batch_size: 100,
            learning_rate: 1e-2,
            momentum: 0.9,
            grad_tol: 0.0,
            init: Init::Zero,
            seed,
            trace_every: 100,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidConfig("grad_tol must be non-negative".into()));
        }
        if self.mode == SolverMode::Minibatch && (self.batch_size == 0 || self.batch_size > n) {
            return Err(Error::InvalidConfig(format!(
                "batch_size must lie in 1..={n}, got {}",
                self.batch_size
            )));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidConfig("trace_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverWarning {
    /// Ĝ_n is not strongly connected; only ratios within a component are identified.
    NotConnected { components: Vec<Vec<usize>> },
    /// Stopped at `max_iters` above the gradient tolerance.
    MaxIters { grad_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub u_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub objective: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
    pub warnings: Vec<SolverWarning>,
}

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `D̂` under the empirical distribution of the rows.
pub fn solve(omega: &OmegaMatrix, lambda: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    solve_weighted(omega, RowMass::Uniform, lambda, cfg)
}

/// Minimizes `D̂` with explicit row masses. Minibatches are then drawn
/// proportionally to the masses.
pub fn solve_weighted(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let n = omega.nrows();
    let k = omega.ncols();
    cfg.validate(n)?;
    if lambda.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: lambda.len(),
        });
    }
    let graph = overlap_graph(omega);
    let components = strong_components(&graph);
    let mut warnings = Vec::new();
    if components.len() > 1 {
        warnings.push(SolverWarning::NotConnected { components });
    }

    let mut u = match cfg.init {
        Init::Zero => vec![0.0; k],
        Init::SeededNormal { seed } => {
            let mut r = rng::stream(seed, 0);
            (0..k).map(|_| StandardNormal.sample(&mut r)).collect()
        }
    };
    let mut velocity = vec![0.0; k];
    let mut trace = Vec::new();
    let (mut value, mut grad, _) = objective::full_eval(omega, masses, lambda, &u, false)?;
    let initial = value;
    let mut grad_norm = inf_norm(&grad);
    let mut iterations = 0;
    let mut increases = 0;
    trace.push(TracePoint {
        iteration: 0,
        objective: value,
        grad_norm,
    });

    let sampler = match (cfg.mode, masses) {
        (SolverMode::Minibatch, RowMass::Explicit(m)) => Some(
            rand::distr::weighted::WeightedIndex::new(m)
                .map_err(|e| Error::InvalidConfig(format!("row masses: {e}")))?,
        ),
        _ => None,
    };
    let mut batch_rng = rng::stream(cfg.seed, 0);
    let mut batch = vec![0usize; cfg.batch_size];

    while grad_norm > cfg.grad_tol && iterations < cfg.max_iters {
        let step_grad = match cfg.mode {
            SolverMode::FullGradient => grad.clone(),
            SolverMode::Minibatch => {
                for b in batch.iter_mut() {
                    *b = match &sampler {
                        Some(s) => s.sample(&mut batch_rng),
                        None => batch_rng.random_range(0..n),
                    };
                }
                // a weighted draw is already an unbiased sample of the masses
                objective::evaluate_rows(
                    omega,
                    RowMass::Uniform,
                    lambda,
                    &u,
                    &batch,
                    cfg.batch_size as f64,
                    false,
                )?
                .1
            }
        };
        for l in 0..k {
            velocity[l] = cfg.momentum * velocity[l] + step_grad[l];
            u[l] -= cfg.learning_rate * velocity[l];
        }
        iterations += 1;

        let record = iterations % cfg.trace_every == 0 || iterations == cfg.max_iters;
        if cfg.mode == SolverMode::FullGradient || record {
            let previous = value;
            (value, grad, _) = objective::full_eval(omega, masses, lambda, &u, false)?;
            grad_norm = inf_norm(&grad);
            if !value.is_finite() || u.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    iteration: iterations,
                    objective: value,
                });
            }
            if cfg.mode == SolverMode::FullGradient {
                if value > previous + 1e-12 * (1.0 + previous.abs()) && value > initial + 1e-9 {
                    increases += 1;
                    if increases >= DIVERGENCE_WINDOW {
                        return Err(Error::Diverged {
                            iteration: iterations,
                            objective: value,
                        });
                    }
                } else {
                    increases = 0;
                }
            }
            if record {
                trace.push(TracePoint {
                    iteration: iterations,
                    objective: value,
                    grad_norm,
                });
            }
        }
    }
    if trace.last().map(|t| t.iteration) != Some(iterations) {
        trace.push(TracePoint {
            iteration: iterations,
            objective: value,
            grad_norm,
        });
    }
    let converged = grad_norm <= cfg.grad_tol;
    if !converged && cfg.grad_tol > 0.0 {
        warnings.push(SolverWarning::MaxIters { grad_norm });
    }
    let (u_hat, w_hat) = normalize(&u, lambda);
    Ok(SolverResult {
        u_hat,
        w_hat,
        objective: value,
        final_grad_norm: grad_norm,
        iterations,
        converged,
        trace,
        warnings,
    })
}

/// Shifts `u` so that `Ŵ_K = λ_K e^{−u_K} = 1`, returning `(u, Ŵ)`.
pub fn normalize(u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = u.len();
    let shift = lambda[k - 1].ln() - u[k - 1];
    let u_hat: Vec<f64> = u.iter().map(|x| x + shift).collect();
    let mut w: Vec<f64> = u_hat
        .iter()
        .zip(lambda)
        .map(|(x, l)| l * (-x).exp())
        .collect();
    w[k - 1] = 1.0;
    (u_hat, w)
}
