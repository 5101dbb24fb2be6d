//! Overlap diagnostics: the empirical source graph, support-overlap
//! fractions, the lower bound of ω on its support and the spectral gap of
//! the Hessian at the solution.

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::objective::{full_eval, RowMass};
use crate::omega::OmegaMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapDiagnostics {
    /// `graph[k][l]`: some observation of source `l` has `ω_k > 0`.
    pub graph: Vec<Vec<bool>>,
    pub connected: bool,
    /// Strongly connected components, each sorted, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
    pub epsilon_hat: f64,
    /// Fraction of rows on which both `ω_k` and `ω_l` are positive.
    pub kappa_hat: Vec<Vec<f64>>,
    /// Largest threshold keeping the undirected `κ̂`-graph connected.
    pub kappa_min: f64,
    pub sigma2: f64,
    pub u_bound: f64,
    pub warnings: Vec<String>,
}

/// Directed adjacency of Ĝ_n (self loops excluded).
pub fn overlap_graph(omega: &OmegaMatrix) -> Vec<Vec<bool>> {
    let k = omega.ncols();
    let mut g = vec![vec![false; k]; k];
    for r in 0..omega.nrows() {
        let l = omega.sources()[r];
        if l >= k {
            continue;
        }
        for (kk, &w) in omega.row(r).iter().enumerate() {
            if w > 0.0 && kk != l {
                g[kk][l] = true;
            }
        }
    }
    g
}

/// Strongly connected components of a dense adjacency matrix.
pub fn strong_components(graph: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let k = graph.len();
    let mut g = DiGraph::<(), ()>::with_capacity(k, k * k);
    let nodes: Vec<_> = (0..k).map(|_| g.add_node(())).collect();
    for a in 0..k {
        for b in 0..k {
            if graph[a][b] {
                g.add_edge(nodes[a], nodes[b], ());
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = kosaraju_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort();
    comps
}

fn undirected_connected(k: usize, adj: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; k];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for (b, s) in seen.iter_mut().enumerate() {
            if !*s && (adj(a, b) || adj(b, a)) {
                *s = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Fills every diagnostic at `u_hat`. Degenerate situations are reported in
/// `warnings` instead of failing.
pub fn diagnose(omega: &OmegaMatrix, lambda: &[f64], u_hat: &[f64]) -> OverlapDiagnostics {
    let k = omega.ncols();
    let n = omega.nrows();
    let mut warnings = Vec::new();
    let graph = overlap_graph(omega);
    let components = strong_components(&graph);
    let connected = components.len() == 1;
    if !connected {
        warnings.push(format!("overlap graph is not strongly connected: {components:?}"));
    }

    let epsilon_hat = omega
        .values()
        .iter()
        .filter(|v| **v > 0.0)
        .fold(f64::INFINITY, |m, &v| m.min(v));

    let mut counts = vec![vec![0usize; k]; k];
    for r in 0..n {
        let row = omega.row(r);
        for a in 0..k {
            if row[a] > 0.0 {
                for b in 0..k {
                    if row[b] > 0.0 {
                        counts[a][b] += 1;
                    }
                }
            }
        }
    }
    let kappa_hat: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| c.iter().map(|&v| v as f64 / n as f64).collect())
        .collect();

    let kappa_min = if k == 1 {
        kappa_hat[0][0]
    } else {
        let mut levels: Vec<f64> = (0..k)
            .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| kappa_hat[a][b])
            .filter(|v| *v > 0.0)
            .collect();
        levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
        levels.dedup();
        levels
            .into_iter()
            .find(|&t| undirected_connected(k, |a, b| a != b && kappa_hat[a][b] >= t))
            .unwrap_or(0.0)
    };
    if kappa_min == 0.0 {
        warnings.push("support-overlap graph is disconnected (kappa_min = 0)".into());
    }

    let sigma2 = if k < 2 {
        0.0
    } else {
        match full_eval(omega, RowMass::Uniform, lambda, u_hat, true) {
            Ok((_, _, Some(h))) => {
                let m = DMatrix::from_row_slice(k, k, &h);
                let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
                eig[1]
            }
            Ok(_) => unreachable!(),
            Err(e) => {
                warnings.push(format!("hessian unavailable: {e}"));
                f64::NAN
            }
        }
    };

    let lambda_min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let base = lambda_min * kappa_min * epsilon_hat;
    let u_bound = (2.0 * k as f64 / epsilon_hat).ln()
        * (1..k)
            .map(|t| 2f64.powi(t as i32) * base.powi(-(t as i32)))
            .sum::<f64>();

    OverlapDiagnostics {
        graph,
        connected,
        components,
        epsilon_hat,
        kappa_hat,
        kappa_min,
        sigma2,
        u_bound,
        warnings,
    }
}
