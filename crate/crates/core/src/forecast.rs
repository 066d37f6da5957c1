//! One-step-ahead Bayesian forecasting through the target's Markov blanket.
//!
//! Final-time particles are advanced one AR step to obtain samples of the
//! coefficients and noise variances at the forecast time; predictive
//! densities are Monte Carlo mixtures over those samples, and the forecast
//! itself is the post-burn-in mean of a Metropolis-Hastings chain whose
//! target combines the predictive density of the candidate value with the
//! predictive densities of the target's children.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CausalGraph, SemParameters};
use crate::scalar::Real;
use crate::smoother::{propagate_particle, ParticleSystem};
use crate::stats::normal_logpdf;

/// Predictive coefficient/variance samples for one node at the forecast
/// time. `coef[j]` aligns with `parents`; `offset[j]` absorbs the node's
/// lagged terms (whose regressors are already observed); `var[j] > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NodePredictive<F: Real> {
    pub node: usize,
    pub parents: Vec<usize>,
    pub coef: Vec<Vec<F>>,
    pub offset: Vec<F>,
    pub var: Vec<F>,
}

/// Predictive samples for the target and each of its children, plus the
/// source particle weights of the generating sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PredictiveEnsemble<F: Real> {
    pub target: usize,
    pub target_node: NodePredictive<F>,
    pub children: Vec<NodePredictive<F>>,
    pub weights: Vec<F>,
}

fn node_predictive<F: Real>(
    node: usize,
    graph: &CausalGraph<F>,
    advanced: &[crate::model::LatentSlice<F>],
    history: &Array2<F>,
    sigma2_fixed: Option<&Array1<F>>,
) -> NodePredictive<F> {
    let parents = graph.parents(node);
    let t_next = history.nrows();
    let mut coef = Vec::with_capacity(advanced.len());
    let mut offset = Vec::with_capacity(advanced.len());
    let mut var = Vec::with_capacity(advanced.len());
    for slice in advanced {
        coef.push(parents.iter().map(|&p| slice.b[(node, p)]).collect());
        let mut off = F::zero();
        for (s, adj) in graph.lagged.iter().enumerate() {
            let lag = s + 1;
            if t_next < lag {
                continue;
            }
            for from in 0..graph.m() {
                if adj[(from, node)] != 0 {
                    off = off + slice.c[s][(node, from)] * history[(t_next - lag, from)];
                }
            }
        }
        offset.push(off);
        let v = match sigma2_fixed {
            Some(s2) => s2[node],
            None => slice.h[node].exp(),
        };
        var.push(v);
    }
    NodePredictive { node, parents, coef, offset, var }
}

/// Advances every final-time particle one AR step and assembles the
/// predictive samples for `target` and its children in `graph`. `history`
/// holds the observed series the model was fitted on (the forecast time is
/// one step past its last row).
pub fn propagate_coefficients_one_step<F: Real, R: Rng>(
    system: &ParticleSystem<F>,
    theta: &SemParameters<F>,
    graph: &CausalGraph<F>,
    target: usize,
    history: &Array2<F>,
    rng: &mut R,
) -> Result<PredictiveEnsemble<F>> {
    if target >= graph.m() {
        return Err(Error::InvalidInput(format!("target {target} out of range")));
    }
    if system.t_len() == 0 {
        return Err(Error::InvalidInput("empty particle system".into()));
    }
    let order = theta.max_order();
    let t_last = system.t_len() - 1;
    let weights = system.final_weights().to_vec();
    let mut advanced = Vec::with_capacity(system.m_particles);
    for j in 0..system.m_particles {
        // Trace the particle's history window (most recent first).
        let mut window = Vec::with_capacity(order);
        let mut idx = j;
        let mut time = t_last;
        loop {
            window.push(system.states[time][idx].clone());
            if window.len() == order || time == 0 {
                break;
            }
            idx = system.ancestors[time][idx];
            time -= 1;
        }
        while window.len() < order {
            window.push(window.last().expect("nonempty window").clone());
        }
        advanced.push(propagate_particle(theta, &window, rng)?);
    }
    let s2 = theta.sigma2_fixed.as_ref();
    let target_node = node_predictive(target, graph, &advanced, history, s2);
    let children = graph
        .children(target)
        .into_iter()
        .map(|c| node_predictive(c, graph, &advanced, history, s2))
        .collect();
    Ok(PredictiveEnsemble { target, target_node, children, weights })
}

/// Monte Carlo predictive density: the weighted mixture
/// `sum_j w_j Normal(value ; offset_j + <coef_j, regressors>, var_j)`.
/// With uniform weights this is the plain `1/J` average.
pub fn predictive_density<F: Real>(
    value: F,
    regressors: &[F],
    node: &NodePredictive<F>,
    weights: &[F],
) -> Result<F> {
    log_predictive_density(value, regressors, node, weights).map(|l| l.exp())
}

fn log_predictive_density<F: Real>(
    value: F,
    regressors: &[F],
    node: &NodePredictive<F>,
    weights: &[F],
) -> Result<F> {
    if node.coef.is_empty() || weights.is_empty() {
        return Err(Error::InvalidInput("empty predictive ensemble".into()));
    }
    if regressors.len() != node.parents.len() {
        return Err(Error::InvalidInput(format!(
            "{} regressors for {} parents",
            regressors.len(),
            node.parents.len()
        )));
    }
    let total: F = weights.iter().copied().fold(F::zero(), |a, x| a + x);
    if !(total > F::zero()) {
        return Err(Error::DegenerateWeights { t: 0 });
    }
    let mut log_terms = Vec::with_capacity(weights.len());
    for (j, &wj) in weights.iter().enumerate() {
        if wj <= F::zero() {
            continue;
        }
        let mut mean = node.offset[j];
        for (b, &x) in node.coef[j].iter().zip(regressors) {
            mean = mean + *b * x;
        }
        log_terms.push((wj / total).ln() + normal_logpdf(value, mean, node.var[j]));
    }
    let max = log_terms.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return Ok(F::neg_infinity());
    }
    let sum: F = log_terms.iter().map(|&l| (l - max).exp()).fold(F::zero(), |a, x| a + x);
    Ok(max + sum.ln())
}

/// Log of the MH target at candidate `y`: the target's own predictive
/// density times each child's predictive density with `y` substituted for
/// the target among the child's parents.
fn log_mh_target<F: Real>(
    y: F,
    ensemble: &PredictiveEnsemble<F>,
    observed: &Array1<F>,
) -> Result<F> {
    let pick = |p: usize, y: F| if p == ensemble.target { y } else { observed[p] };
    let regressors: Vec<F> =
        ensemble.target_node.parents.iter().map(|&p| pick(p, y)).collect();
    let mut total = log_predictive_density(y, &regressors, &ensemble.target_node, &ensemble.weights)?;
    for child in &ensemble.children {
        let regressors: Vec<F> = child.parents.iter().map(|&p| pick(p, y)).collect();
        total = total
            + log_predictive_density(observed[child.node], &regressors, child, &ensemble.weights)?;
    }
    Ok(total)
}

/// Metropolis-Hastings forecast of the target at the next time step.
///
/// `observed` holds the values of every non-target variable at the forecast
/// time (the target's entry is ignored). Runs `n` Gaussian random-walk
/// steps from `init` and returns the mean of samples 100..n together with
/// the full trace.
pub fn mh_forecast<F: Real, R: Rng>(
    ensemble: &PredictiveEnsemble<F>,
    observed: &Array1<F>,
    n: usize,
    proposal_sd: F,
    init: F,
    rng: &mut R,
) -> Result<(F, Vec<F>)> {
    if n <= 100 {
        return Err(Error::InvalidConfig("need more than 100 MH samples".into()));
    }
    if !(proposal_sd > F::zero()) || !proposal_sd.is_finite() {
        return Err(Error::InvalidConfig("proposal sd must be positive".into()));
    }
    let mut current = init;
    let mut current_log = log_mh_target(current, ensemble, observed)?;
    let mut trace = Vec::with_capacity(n);
    // Symmetric random-walk proposal: the Hastings correction
    // q(cur | cand) / q(cand | cur) is exactly 1 (0 in log space).
    let log_hastings_correction = F::zero();
    for _ in 0..n {
        let candidate = current + proposal_sd * F::std_normal(rng);
        let cand_log = log_mh_target(candidate, ensemble, observed)?;
        let log_alpha = cand_log - current_log + log_hastings_correction;
        let accept = if log_alpha >= F::zero() {
            true
        } else {
            let u: F = rng.random_range(F::zero()..F::one());
            u.ln() < log_alpha
        };
        if accept && cand_log.is_finite() {
            current = candidate;
            current_log = cand_log;
        }
        trace.push(current);
    }
    // Output line of the algorithm: the mean of samples 100..n.
    let tail = &trace[99..];
    let point = tail.iter().copied().fold(F::zero(), |a, x| a + x)
        / F::from_usize(tail.len()).unwrap();
    Ok((point, trace))
}

/// Direct Monte Carlo forecast for targets without children: samples the
/// predictive mixture itself (component by source weight, then the normal).
/// Used as an oracle for the MH chain and as a cheap fallback.
pub fn direct_forecast<F: Real, R: Rng>(
    ensemble: &PredictiveEnsemble<F>,
    observed: &Array1<F>,
    n: usize,
    rng: &mut R,
) -> Result<(F, Vec<F>)> {
    if !ensemble.children.is_empty() {
        return Err(Error::InvalidInput(
            "direct sampling only valid without children".into(),
        ));
    }
    let node = &ensemble.target_node;
    let regressors: Vec<F> = node.parents.iter().map(|&p| observed[p]).collect();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let j = crate::stats::categorical(&ensemble.weights, rng)?;
        let mut mean = node.offset[j];
        for (b, &x) in node.coef[j].iter().zip(&regressors) {
            mean = mean + *b * x;
        }
        samples.push(mean + node.var[j].sqrt() * F::std_normal(rng));
    }
    let point =
        samples.iter().copied().fold(F::zero(), |a, x| a + x) / F::from_usize(n).unwrap();
    Ok((point, samples))
}

/// Proposal scale heuristic: empirical standard deviation of the target
/// over the last `min(T, 200)` observations (floored away from zero).
pub fn proposal_scale<F: Real>(history: &Array2<F>, target: usize) -> F {
    let t_len = history.nrows();
    let window = t_len.min(200);
    let xs: Vec<F> = (t_len - window..t_len).map(|t| history[(t, target)]).collect();
    crate::stats::population_variance(&xs).sqrt().max(F::c(1e-3))
}

/// End-to-end one-step forecast: advances the fitted particles, then runs
/// the MH chain with the scale heuristic and a warm start at the last
/// observed target value. `observed` is the full variable vector at the
/// forecast time (target entry ignored).
#[allow(clippy::too_many_arguments)]
pub fn forecast_one_step<F: Real, R: Rng>(
    system: &ParticleSystem<F>,
    theta: &SemParameters<F>,
    graph: &CausalGraph<F>,
    history: &Array2<F>,
    observed: &Array1<F>,
    target: usize,
    n: usize,
    rng: &mut R,
) -> Result<(F, Vec<F>)> {
    let ensemble = propagate_coefficients_one_step(system, theta, graph, target, history, rng)?;
    let proposal_sd = proposal_scale(history, target);
    let init = history[(history.nrows() - 1, target)];
    mh_forecast(&ensemble, observed, n, proposal_sd, init, rng)
}
