//! The convex objective `D̂(u) = Σ_r w_r log Σ_l e^{u_l} ω_l(z_r) − Σ_l λ_l u_l`,
//! its gradient and Hessian.
//!
//! Row masses `w_r` default to `1/n` (the empirical distribution). Passing
//! explicit masses evaluates the population objective on a discrete support.
//!
//! Row sums are reduced over fixed blocks of [`BLOCK`] rows combined by a
//! pairwise tree, so the floating-point result does not depend on how many
//! worker threads run the blocks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::omega::OmegaMatrix;

pub const BLOCK: usize = 1024;

/// Row masses for the empirical measure.
#[derive(Debug, Clone, Copy)]
pub enum RowMass<'a> {
    /// `1/n` for every row.
    Uniform,
    /// Explicit masses summing to one.
    Explicit(&'a [f64]),
}

impl RowMass<'_> {
    fn check(&self, n: usize) -> Result<()> {
        if let RowMass::Explicit(m) = self {
            if m.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: m.len(),
                });
            }
        }
        Ok(())
    }
}

fn check_inputs(omega: &OmegaMatrix, lambda: &[f64], u: &[f64]) -> Result<()> {
    let k = omega.ncols();
    if lambda.len() != k || u.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: if lambda.len() != k { lambda.len() } else { u.len() },
        });
    }
    Ok(())
}

/// Sum of `f(row, acc)` over `rows`, block-wise with a pairwise tree.
pub(crate) fn reduce_rows<F>(rows: &[usize], width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let block_sum = |chunk: &[usize]| {
        let mut acc = vec![0.0; width];
        for &r in chunk {
            f(r, &mut acc);
        }
        acc
    };
    let partials: Vec<Vec<f64>> = if rows.len() > 4 * BLOCK {
        rows.par_chunks(BLOCK).map(block_sum).collect()
    } else {
        rows.chunks(BLOCK).map(block_sum).collect()
    };
    pairwise_sum(partials, width)
}

fn pairwise_sum(mut parts: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; width];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Stabilized `log Σ_l e^{u_l} ω_l` and the softmax weights `q_l` of one row.
/// Returns `None` when every entry vanishes.
#[inline]
pub(crate) fn row_softmax(row: &[f64], u: &[f64], q: &mut [f64]) -> Option<f64> {
    let mut m = f64::NEG_INFINITY;
    for (l, &w) in row.iter().enumerate() {
        let a = if w > 0.0 { u[l] + w.ln() } else { f64::NEG_INFINITY };
        q[l] = a;
        m = m.max(a);
    }
    if m == f64::NEG_INFINITY {
        return None;
    }
    let mut s = 0.0;
    for v in q.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in q.iter_mut() {
        *v /= s;
    }
    Some(m + s.ln())
}

fn mass(masses: RowMass<'_>, r: usize) -> f64 {
    match masses {
        RowMass::Uniform => 1.0,
        RowMass::Explicit(m) => m[r],
    }
}

fn normalizer(masses: RowMass<'_>, n: usize) -> f64 {
    match masses {
        RowMass::Uniform => n as f64,
        RowMass::Explicit(_) => 1.0,
    }
}

/// Objective, gradient and (optionally) Hessian over the rows in `rows`,
/// with the row masses rescaled by `scale`.
pub(crate) fn evaluate_rows(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    u: &[f64],
    rows: &[usize],
    scale: f64,
    with_hessian: bool,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    let k = omega.ncols();
    let width = 1 + k + if with_hessian { k * k } else { 0 };
    let bad_row = std::sync::atomic::AtomicUsize::new(usize::MAX);
    let sums = reduce_rows(rows, width, |r, acc| {
        let mut q = vec![0.0; k];
        let Some(lse) = row_softmax(omega.row(r), u, &mut q) else {
            bad_row.fetch_min(r, std::sync::atomic::Ordering::Relaxed);
            return;
        };
        let w = mass(masses, r);
        acc[0] += w * lse;
        for l in 0..k {
            acc[1 + l] += w * q[l];
        }
        if with_hessian {
            let h = &mut acc[1 + k..];
            for a in 0..k {
                h[a * k + a] += w * q[a];
                for b in 0..k {
                    h[a * k + b] -= w * q[a] * q[b];
                }
            }
        }
    });
    let bad = bad_row.into_inner();
    if bad != usize::MAX {
        return Err(Error::AllZeroRow { row: bad });
    }
    let value = sums[0] / scale - lambda.iter().zip(u).map(|(l, x)| l * x).sum::<f64>();
    let grad = (0..k).map(|l| sums[1 + l] / scale - lambda[l]).collect();
    let hess = with_hessian.then(|| sums[1 + k..].iter().map(|v| v / scale).collect());
    Ok((value, grad, hess))
}

pub(crate) fn full_eval(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    u: &[f64],
    with_hessian: bool,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    check_inputs(omega, lambda, u)?;
    masses.check(omega.nrows())?;
    let rows: Vec<usize> = (0..omega.nrows()).collect();
    evaluate_rows(
        omega,
        masses,
        lambda,
        u,
        &rows,
        normalizer(masses, omega.nrows()),
        with_hessian,
    )
}

/// `D̂(u)` under the empirical distribution.
pub fn objective(omega: &OmegaMatrix, lambda: &[f64], u: &[f64]) -> Result<f64> {
    objective_weighted(omega, RowMass::Uniform, lambda, u)
}

pub fn objective_weighted(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    u: &[f64],
) -> Result<f64> {
    Ok(full_eval(omega, masses, lambda, u, false)?.0)
}

/// `∇D̂(u)_k = Σ_r w_r e^{u_k} ω_k / Σ_l e^{u_l} ω_l − λ_k`.
pub fn gradient(omega: &OmegaMatrix, lambda: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    gradient_weighted(omega, RowMass::Uniform, lambda, u)
}

pub fn gradient_weighted(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    Ok(full_eval(omega, masses, lambda, u, false)?.1)
}

/// Row-major `K × K` Hessian `Σ_r w_r (diag(q_r) − q_r q_rᵀ)`.
pub fn hessian(omega: &OmegaMatrix, lambda: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    hessian_weighted(omega, RowMass::Uniform, lambda, u)
}

pub fn hessian_weighted(
    omega: &OmegaMatrix,
    masses: RowMass<'_>,
    lambda: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    Ok(full_eval(omega, masses, lambda, u, true)?.2.unwrap())
}
