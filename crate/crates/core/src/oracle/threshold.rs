//! One-dimensional threshold classifier with class-conditional densities
//! `f₊(x) = (1+α) x^α` on the positive side and `f₋(x) = (1+β)(1−x)^β`,
//! giving the risk `R_p(θ) = p θ^{1+α} + (1−p)(1−θ)^{1+β}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ThetaStar {
    Point { theta: f64 },
    /// Every threshold in the interval is optimal in the tabulated sense.
    Interval { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDemo {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub theta_star: ThetaStar,
}

impl ThresholdDemo {
    pub fn risk(&self, theta: f64) -> f64 {
        risk(self.alpha, self.beta, self.p, theta)
    }

    /// `𝓔(p′, p)` for the demo's shapes and `p`.
    pub fn excess(&self, p_prime: f64) -> f64 {
        excess(self.alpha, self.beta, p_prime, self.p)
    }
}

pub fn risk(alpha: f64, beta: f64, p: f64, theta: f64) -> f64 {
    p * theta.powf(1.0 + alpha) + (1.0 - p) * (1.0 - theta).powf(1.0 + beta)
}

/// `R_p'(θ) = p(1+α)θ^α − (1−p)(1+β)(1−θ)^β`, non-decreasing in θ.
pub fn risk_derivative(alpha: f64, beta: f64, p: f64, theta: f64) -> f64 {
    p * (1.0 + alpha) * theta.powf(alpha) - (1.0 - p) * (1.0 + beta) * (1.0 - theta).powf(beta)
}

fn check(alpha: f64, beta: f64, p: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidConfig("shape parameters must be non-negative".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidConfig(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Tabulated closed forms for `α = β ∈ {0, ½, 1, 2}`.
pub fn closed_form_theta(alpha: f64, beta: f64, p: f64) -> Result<ThetaStar> {
    check(alpha, beta, p)?;
    let q = 1.0 - p;
    let theta = match (alpha, beta) {
        (a, b) if a == 0.0 && b == 0.0 => {
            return Ok(ThetaStar::Interval {
                lower: 0.0,
                upper: 1.0,
            })
        }
        (a, b) if a == 0.5 && b == 0.5 => q * q / (p * p + q * q),
        (a, b) if a == 1.0 && b == 1.0 => q,
        (a, b) if a == 2.0 && b == 2.0 => q.sqrt() / (p.sqrt() + q.sqrt()),
        _ => return Err(Error::UnsupportedShapes { alpha, beta }),
    };
    Ok(ThetaStar::Point { theta })
}

/// Root of the stationarity equation `p(1+α)θ^α = (1−p)(1+β)(1−θ)^β` by
/// bisection, or the optimal endpoint when the derivative keeps its sign.
pub fn bisect_theta(alpha: f64, beta: f64, p: f64) -> Result<f64> {
    check(alpha, beta, p)?;
    Ok(risk_minimizer(alpha, beta, p))
}

/// Minimizer of `R_p` over `[0, 1]` (lowest one when not unique).
pub fn risk_minimizer(alpha: f64, beta: f64, p: f64) -> f64 {
    let d = |t: f64| risk_derivative(alpha, beta, p, t);
    if d(0.0) >= 0.0 {
        return 0.0;
    }
    if d(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if d(lo).abs() <= d(hi).abs() {
        lo
    } else {
        hi
    }
}

/// `𝓔(p′, p) = R_p(θ*_{p′}) − R_p(θ*_p)`.
pub fn excess(alpha: f64, beta: f64, p_prime: f64, p: f64) -> f64 {
    let a = risk_minimizer(alpha, beta, p_prime);
    let b = risk_minimizer(alpha, beta, p);
    risk(alpha, beta, p, a) - risk(alpha, beta, p, b)
}

/// Closed form when tabulated, bisection otherwise.
pub fn threshold_demo(alpha: f64, beta: f64, p: f64) -> Result<ThresholdDemo> {
    let theta_star = match closed_form_theta(alpha, beta, p) {
        Ok(t) => t,
        Err(Error::UnsupportedShapes { .. }) => ThetaStar::Point {
            theta: bisect_theta(alpha, beta, p)?,
        },
        Err(e) => return Err(e),
    };
    Ok(ThresholdDemo {
        alpha,
        beta,
        p,
        theta_star,
    })
}
