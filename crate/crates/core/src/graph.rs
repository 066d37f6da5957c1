//! Graph determination: SCAD penalty, mean/variance thresholding of
//! posterior coefficient trajectories, acyclicity repair, Markov blankets.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{topological_order, CausalGraph, LatentTrajectory};
use crate::scalar::Real;
use crate::stats::{mean, population_variance};

/// Smoothly clipped absolute deviation penalty.
///
/// Three branches: `lambda * |b|` near zero, a quadratic blend in the middle,
/// and a constant `(a + 1) * lambda^2 / 2` for large `|b|` (so large
/// coefficients are not shrunk).
pub fn scad<F: Real>(b: F, lambda: F, a: F) -> Result<F> {
    if lambda < F::zero() {
        return Err(Error::InvalidHyperparameter("scad lambda must be >= 0".into()));
    }
    if a <= F::c(2.0) {
        return Err(Error::InvalidHyperparameter("scad a must be > 2".into()));
    }
    let x = b.abs();
    let two = F::c(2.0);
    let val = if x <= lambda {
        lambda * x
    } else if x <= a * lambda {
        -(x * x - two * a * lambda * x + lambda * lambda) / (two * (a - F::one()))
    } else {
        (a + F::one()) * lambda * lambda / two
    };
    Ok(val)
}

/// SCAD configuration used when penalizing the E-step likelihood.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct ScadPenalty<F: Real> {
    pub lambda: F,
    pub a: F,
}

impl<F: Real> ScadPenalty<F> {
    /// Penalty with the standard `a = 3.7`.
    pub fn new(lambda: F) -> Self {
        ScadPenalty { lambda, a: F::c(3.7) }
    }

    pub fn validate(&self) -> Result<()> {
        scad(F::zero(), self.lambda, self.a).map(|_| ())
    }

    /// Penalty value at `b`; assumes hyperparameters already validated.
    pub fn penalty(&self, b: F) -> F {
        scad(b, self.lambda, self.a).unwrap_or_else(|_| F::zero())
    }
}

/// Thresholds the posterior mean coefficient trajectories into a discrete
/// graph: the edge `j -> i` is present iff the absolute time-mean of
/// `b[(i, j)]` or its time-variance (population form) reaches `threshold`.
/// The same rule applies per lag to the lagged coefficients.
pub fn determine_graph<F: Real>(
    posterior_mean: &LatentTrajectory<F>,
    threshold: F,
) -> Result<CausalGraph<F>> {
    posterior_mean.validate()?;
    if !(threshold > F::zero()) {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    let t_len = posterior_mean.len();
    if t_len == 0 {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let m = posterior_mean.b[0].nrows();
    let mut graph = CausalGraph::<F>::empty(m, posterior_mean.c.len());
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let series: Vec<F> = (0..t_len).map(|t| posterior_mean.b[t][(i, j)]).collect();
            let mean_stat = mean(&series).abs();
            let var_stat = population_variance(&series);
            graph.edge_scores[(j, i)] = mean_stat.max(var_stat);
            if mean_stat >= threshold || var_stat >= threshold {
                graph.instantaneous[(j, i)] = 1;
            }
        }
    }
    for (s, c_s) in posterior_mean.c.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                let series: Vec<F> = (0..t_len).map(|t| c_s[t][(i, j)]).collect();
                let mean_stat = mean(&series).abs();
                let var_stat = population_variance(&series);
                if mean_stat >= threshold || var_stat >= threshold {
                    graph.lagged[s][(j, i)] = 1;
                }
            }
        }
    }
    Ok(graph)
}

/// Whether `to` is reachable from `from` along instantaneous edges.
fn reachable(adj: &Array2<u8>, from: usize, to: usize) -> bool {
    let m = adj.nrows();
    let mut seen = vec![false; m];
    let mut stack = vec![from];
    while let Some(node) = stack.pop() {
        if node == to {
            return true;
        }
        if seen[node] {
            continue;
        }
        seen[node] = true;
        for next in 0..m {
            if adj[(node, next)] != 0 && !seen[next] {
                stack.push(next);
            }
        }
    }
    false
}

/// Repairs a cyclic thresholded graph by repeatedly removing the
/// lowest-score edge that participates in some cycle. Returns the removed
/// edges as `(from, to)` pairs; an acyclic input comes back untouched.
pub fn enforce_acyclicity<F: Real>(graph: &mut CausalGraph<F>) -> Vec<(usize, usize)> {
    let m = graph.m();
    let mut removed = Vec::new();
    loop {
        let support = graph.b_mask();
        if topological_order(&support).is_some() {
            break;
        }
        // An edge (u, v) lies on a cycle iff u is reachable from v.
        let mut worst: Option<(usize, usize, F)> = None;
        for u in 0..m {
            for v in 0..m {
                if graph.instantaneous[(u, v)] == 0 || !reachable(&graph.instantaneous, v, u) {
                    continue;
                }
                let score = graph.edge_scores[(u, v)];
                if worst.map_or(true, |(_, _, s)| score < s) {
                    worst = Some((u, v, score));
                }
            }
        }
        let (u, v, _) = worst.expect("cyclic graph must contain a cycle edge");
        graph.instantaneous[(u, v)] = 0;
        removed.push((u, v));
    }
    if !removed.is_empty() {
        log::warn!("removed {} edge(s) to restore acyclicity: {removed:?}", removed.len());
    }
    removed
}

/// Parents, children, and spouses (other parents of children) of `target`.
/// The three role sets may overlap across lags of relationship; each is
/// sorted and deduplicated, and the target itself never appears.
pub fn markov_blanket<F: Real>(
    graph: &CausalGraph<F>,
    target: usize,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if target >= graph.m() {
        return Err(Error::InvalidInput(format!(
            "target index {target} out of range for {} nodes",
            graph.m()
        )));
    }
    let parents = graph.parents(target);
    let children = graph.children(target);
    let mut spouses: Vec<usize> = children
        .iter()
        .flat_map(|&c| graph.parents(c))
        .filter(|&p| p != target)
        .collect();
    spouses.sort_unstable();
    spouses.dedup();
    Ok((parents, children, spouses))
}
