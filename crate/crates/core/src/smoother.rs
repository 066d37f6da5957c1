//! Conditional particle filter with ancestor sampling (CPF-AS) targeting the
//! posterior of the latent coefficient/variance trajectories given the data.
//!
//! One particle per sweep is pinned to a reference trajectory; its ancestor
//! at each step is resampled against the transition density, which is what
//! makes repeated sweeps mix over the whole trajectory space. All weight
//! arithmetic happens in log space with a max shift before exponentiation.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::ScadPenalty;
use crate::model::{
    lag_contribution, observation_loglik, LatentSlice, LatentTrajectory, SemParameters,
    TimeSeriesDataset,
};
use crate::scalar::Real;
use crate::stats::{categorical, normal_logpdf};

/// Weighted particle system produced by one filter sweep.
///
/// `states[t][j]` is particle `j`'s latent slice at time `t`; `weights[t]`
/// are normalized; `ancestors[t][j]` indexes the particle at `t - 1` that
/// particle `j` at `t` descends from (the identity at `t = 0`).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct ParticleSystem<F: Real> {
    pub m_particles: usize,
    pub states: Vec<Vec<LatentSlice<F>>>,
    pub weights: Vec<Vec<F>>,
    pub ancestors: Vec<Vec<usize>>,
}

impl<F: Real> ParticleSystem<F> {
    pub fn t_len(&self) -> usize {
        self.states.len()
    }

    /// Normalized weights at the final time step (the smoothing weights).
    pub fn final_weights(&self) -> &[F] {
        self.weights.last().map(|w| w.as_slice()).unwrap_or(&[])
    }

    /// Lineage of particle `j` at the final time step: the particle index at
    /// every `t`, traced through the ancestor indices.
    fn lineage(&self, j: usize) -> Vec<usize> {
        let t_len = self.t_len();
        let mut idx = vec![0usize; t_len];
        let mut cur = j;
        for t in (0..t_len).rev() {
            idx[t] = cur;
            if t > 0 {
                cur = self.ancestors[t][cur];
            }
        }
        idx
    }

    /// Full latent trajectory of final-time particle `j`.
    pub fn trajectory(&self, j: usize) -> LatentTrajectory<F> {
        let lineage = self.lineage(j);
        let slices = lineage
            .iter()
            .enumerate()
            .map(|(t, &idx)| self.states[t][idx].clone())
            .collect();
        LatentTrajectory::from_slices(slices)
    }

    /// Draws one trajectory from the final-time weights.
    pub fn sample_trajectory<R: Rng>(&self, rng: &mut R) -> Result<LatentTrajectory<F>> {
        let j = categorical(self.final_weights(), rng)?;
        Ok(self.trajectory(j))
    }

    /// Posterior mean and mean-of-squares trajectories, weighting each
    /// final-time particle's full lineage by its smoothing weight.
    pub fn weighted_mean_trajectories(&self) -> (LatentTrajectory<F>, LatentTrajectory<F>) {
        let t_len = self.t_len();
        let template = &self.states[0][0];
        let m = template.b.nrows();
        let s_lag = template.c.len();
        let mut mean = LatentTrajectory::from_slices(vec![LatentSlice::zeros(m, s_lag); t_len]);
        let mut mean_sq = mean.clone();
        let weights = self.final_weights().to_vec();
        for (j, &wj) in weights.iter().enumerate() {
            if wj == F::zero() {
                continue;
            }
            for (t, &idx) in self.lineage(j).iter().enumerate() {
                let st = &self.states[t][idx];
                mean.b[t].zip_mut_with(&st.b, |acc, &x| *acc = *acc + wj * x);
                mean_sq.b[t].zip_mut_with(&st.b, |acc, &x| *acc = *acc + wj * x * x);
                mean.h[t].zip_mut_with(&st.h, |acc, &x| *acc = *acc + wj * x);
                mean_sq.h[t].zip_mut_with(&st.h, |acc, &x| *acc = *acc + wj * x * x);
                for s in 0..s_lag {
                    mean.c[s][t].zip_mut_with(&st.c[s], |acc, &x| *acc = *acc + wj * x);
                    mean_sq.c[s][t].zip_mut_with(&st.c[s], |acc, &x| *acc = *acc + wj * x * x);
                }
            }
        }
        (mean, mean_sq)
    }
}

/// One draw from the initial latent prior (stationary AR moments).
pub fn initial_particle<F: Real, R: Rng>(theta: &SemParameters<F>, rng: &mut R) -> LatentSlice<F> {
    let m = theta.m;
    let mut slice = LatentSlice::zeros(m, theta.s_lag);
    for i in 0..m {
        for j in 0..m {
            if theta.b_support[(i, j)] {
                let (mu, var) = theta.b_prior(i, j);
                slice.b[(i, j)] = mu + var.max(F::zero()).sqrt() * F::std_normal(rng);
            }
        }
    }
    for i in 0..m {
        if theta.h_varying() {
            let (mu, var) = theta.h_prior(i);
            slice.h[i] = mu + var.max(F::zero()).sqrt() * F::std_normal(rng);
        } else {
            slice.h[i] = theta.h_prior(i).0;
        }
    }
    for s in 0..theta.s_lag {
        for i in 0..m {
            for j in 0..m {
                if theta.c_support[s][(i, j)] {
                    let (mu, var) = theta.c_prior(s, i, j);
                    slice.c[s][(i, j)] = mu + var.max(F::zero()).sqrt() * F::std_normal(rng);
                }
            }
        }
    }
    slice
}

/// One AR transition step. `history` holds the previous slices most recent
/// first and must cover the maximum AR order; structurally-zero entries
/// stay zero.
pub fn propagate_particle<F: Real, R: Rng>(
    theta: &SemParameters<F>,
    history: &[LatentSlice<F>],
    rng: &mut R,
) -> Result<LatentSlice<F>> {
    if history.len() < theta.max_order() {
        return Err(Error::InvalidInput(format!(
            "history window {} shorter than AR order {}",
            history.len(),
            theta.max_order()
        )));
    }
    let m = theta.m;
    let mut slice = LatentSlice::zeros(m, theta.s_lag);
    for i in 0..m {
        for j in 0..m {
            if !theta.b_support[(i, j)] {
                continue;
            }
            let mut mean = theta.alpha0[(i, j)];
            for p in 0..theta.p_lag {
                mean = mean + theta.alpha[p][(i, j)] * history[p].b[(i, j)];
            }
            slice.b[(i, j)] = mean + theta.w[(i, j)].max(F::zero()).sqrt() * F::std_normal(rng);
        }
    }
    for i in 0..m {
        if theta.h_varying() {
            let mut mean = theta.beta0[i];
            for q in 0..theta.q_lag {
                mean = mean + theta.beta[q][i] * history[q].h[i];
            }
            slice.h[i] = mean + theta.v[i].max(F::zero()).sqrt() * F::std_normal(rng);
        } else {
            slice.h[i] = history[0].h[i];
        }
    }
    for s in 0..theta.s_lag {
        for i in 0..m {
            for j in 0..m {
                if !theta.c_support[s][(i, j)] {
                    continue;
                }
                let mut mean = theta.gamma0[s][(i, j)];
                for r in 0..theta.r_lag {
                    mean = mean + theta.gamma[s][r][(i, j)] * history[r].c[s][(i, j)];
                }
                slice.c[s][(i, j)] =
                    mean + theta.u[s][(i, j)].max(F::zero()).sqrt() * F::std_normal(rng);
            }
        }
    }
    Ok(slice)
}

/// Log transition density `log f_theta(state | history)`; with an empty
/// history this is the initial-prior log density. Zero-innovation entries
/// contribute a point-mass term (0 on the mean, -inf off it).
pub fn transition_logpdf<F: Real>(
    theta: &SemParameters<F>,
    state: &LatentSlice<F>,
    history: &[LatentSlice<F>],
) -> F {
    let m = theta.m;
    let initial = history.is_empty();
    let mut total = F::zero();
    for i in 0..m {
        for j in 0..m {
            if !theta.b_support[(i, j)] {
                continue;
            }
            let (mean, var) = if initial {
                theta.b_prior(i, j)
            } else {
                let mut mean = theta.alpha0[(i, j)];
                for p in 0..theta.p_lag {
                    mean = mean + theta.alpha[p][(i, j)] * history[p].b[(i, j)];
                }
                (mean, theta.w[(i, j)])
            };
            total = total + normal_logpdf(state.b[(i, j)], mean, var);
        }
    }
    if theta.h_varying() {
        for i in 0..m {
            let (mean, var) = if initial {
                theta.h_prior(i)
            } else {
                let mut mean = theta.beta0[i];
                for q in 0..theta.q_lag {
                    mean = mean + theta.beta[q][i] * history[q].h[i];
                }
                (mean, theta.v[i])
            };
            total = total + normal_logpdf(state.h[i], mean, var);
        }
    }
    for s in 0..theta.s_lag {
        for i in 0..m {
            for j in 0..m {
                if !theta.c_support[s][(i, j)] {
                    continue;
                }
                let (mean, var) = if initial {
                    theta.c_prior(s, i, j)
                } else {
                    let mut mean = theta.gamma0[s][(i, j)];
                    for r in 0..theta.r_lag {
                        mean = mean + theta.gamma[s][r][(i, j)] * history[r].c[s][(i, j)];
                    }
                    (mean, theta.u[s][(i, j)])
                };
                total = total + normal_logpdf(state.c[s][(i, j)], mean, var);
            }
        }
    }
    total
}

/// Log observation weight of one particle at time `t`:
/// `log p_theta(X_t | Z_t)`, minus the SCAD penalty terms when enabled
/// (penalizing both the coefficients and their step-to-step increments).
pub fn log_weight_particle<F: Real>(
    data: &TimeSeriesDataset<F>,
    t: usize,
    state: &LatentSlice<F>,
    theta: &SemParameters<F>,
    scad: Option<&ScadPenalty<F>>,
    prev_b: Option<&Array2<F>>,
) -> Result<F> {
    let lag = lag_contribution(&data.values, &state.c, t);
    let mut lw = observation_loglik(
        data.values.row(t),
        state.b.view(),
        state.h.view(),
        lag.view(),
    )?;
    if let Some(pen) = scad {
        for i in 0..theta.m {
            for j in 0..theta.m {
                if !theta.b_support[(i, j)] {
                    continue;
                }
                lw = lw - pen.penalty(state.b[(i, j)]);
                if let Some(prev) = prev_b {
                    lw = lw - pen.penalty(state.b[(i, j)] - prev[(i, j)]);
                }
            }
        }
    }
    Ok(lw)
}

/// Multinomial ancestor resampling: `weights.len() - 1` i.i.d. categorical
/// draws with probabilities proportional to the previous-step weights.
pub fn sample_ancestors<F: Real, R: Rng>(weights: &[F], rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len().saturating_sub(1);
    (0..n).map(|_| categorical(weights, rng)).collect()
}

/// Ancestor index for the pinned reference particle, drawn with probability
/// proportional to `weight_j * f_theta(reference_state | history_j)`. When
/// every product vanishes (e.g. near-deterministic transitions) this falls
/// back to plain weight resampling with a logged warning.
pub fn sample_reference_ancestor<F: Real, R: Rng>(
    theta: &SemParameters<F>,
    weights: &[F],
    histories: &[Vec<LatentSlice<F>>],
    ref_state: &LatentSlice<F>,
    rng: &mut R,
) -> Result<usize> {
    debug_assert_eq!(weights.len(), histories.len());
    let log_probs: Vec<F> = weights
        .iter()
        .zip(histories)
        .map(|(&w, hist)| {
            if w > F::zero() {
                w.ln() + transition_logpdf(theta, ref_state, hist)
            } else {
                F::neg_infinity()
            }
        })
        .collect();
    let max = log_probs.iter().copied().fold(F::neg_infinity(), F::max);
    if max.is_finite() {
        let probs: Vec<F> = log_probs.iter().map(|&lp| (lp - max).exp()).collect();
        if let Ok(idx) = categorical(&probs, rng) {
            return Ok(idx);
        }
    }
    log::warn!("reference ancestor products all degenerate; falling back to weight resampling");
    categorical(weights, rng)
}

fn normalize_log_weights<F: Real>(log_w: &[F], t: usize) -> Result<Vec<F>> {
    let max = log_w.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { t });
    }
    let unnorm: Vec<F> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    let total: F = unnorm.iter().copied().fold(F::zero(), |a, x| a + x);
    if !(total > F::zero()) || !total.is_finite() {
        return Err(Error::DegenerateWeights { t });
    }
    Ok(unnorm.into_iter().map(|w| w / total).collect())
}

/// One conditional sweep: `m_particles - 1` particles evolve freely, the
/// last is pinned to `reference` with its ancestry resampled each step.
/// Returns the particle system and one trajectory drawn from the final
/// weights (the reference for the next sweep).
///
/// `m_particles = 1` degenerates to returning the reference itself.
pub fn cpf_as_sweep<F: Real, R: Rng>(
    data: &TimeSeriesDataset<F>,
    theta: &SemParameters<F>,
    reference: &LatentTrajectory<F>,
    m_particles: usize,
    scad: Option<&ScadPenalty<F>>,
    rng: &mut R,
) -> Result<(ParticleSystem<F>, LatentTrajectory<F>)> {
    let t_len = data.t_len();
    if t_len == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if reference.len() != t_len {
        return Err(Error::InvalidInput(format!(
            "reference length {} != data length {t_len}",
            reference.len()
        )));
    }
    if m_particles == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    if let Some(pen) = scad {
        pen.validate()?;
    }
    let order = theta.max_order();
    if m_particles == 1 {
        let states: Vec<Vec<LatentSlice<F>>> =
            (0..t_len).map(|t| vec![reference.slice(t)]).collect();
        let system = ParticleSystem {
            m_particles: 1,
            states,
            weights: vec![vec![F::one()]; t_len],
            ancestors: vec![vec![0]; t_len],
        };
        return Ok((system, reference.clone()));
    }

    let free = m_particles - 1;
    let mut system = ParticleSystem {
        m_particles,
        states: Vec::with_capacity(t_len),
        weights: Vec::with_capacity(t_len),
        ancestors: Vec::with_capacity(t_len),
    };

    // Traced history window (most recent first) of particle `j` at time `t`.
    let history = |system: &ParticleSystem<F>, t: usize, j: usize| -> Vec<LatentSlice<F>> {
        let mut out = Vec::with_capacity(order);
        let mut idx = j;
        let mut time = t;
        loop {
            out.push(system.states[time][idx].clone());
            if out.len() == order || time == 0 {
                break;
            }
            idx = system.ancestors[time][idx];
            time -= 1;
        }
        out
    };

    for t in 0..t_len {
        let mut states_t: Vec<LatentSlice<F>> = Vec::with_capacity(m_particles);
        let mut anc_t: Vec<usize> = Vec::with_capacity(m_particles);
        if t == 0 {
            for _ in 0..free {
                states_t.push(initial_particle(theta, rng));
            }
            states_t.push(reference.slice(0));
            anc_t.extend(0..m_particles);
        } else {
            let prev_w = system.weights[t - 1].clone();
            let from_prior = t < order;
            for _ in 0..free {
                let a = categorical(&prev_w, rng).map_err(|_| Error::DegenerateWeights { t })?;
                let state = if from_prior {
                    initial_particle(theta, rng)
                } else {
                    let hist = history(&system, t - 1, a);
                    propagate_particle(theta, &hist, rng)?
                };
                states_t.push(state);
                anc_t.push(a);
            }
            let ref_state = reference.slice(t);
            let ref_anc = if from_prior {
                // Initial-prior steps do not depend on the ancestor, so the
                // transition factor is constant across candidates.
                categorical(&prev_w, rng).map_err(|_| Error::DegenerateWeights { t })?
            } else {
                let histories: Vec<Vec<LatentSlice<F>>> =
                    (0..m_particles).map(|i| history(&system, t - 1, i)).collect();
                sample_reference_ancestor(theta, &prev_w, &histories, &ref_state, rng)
                    .map_err(|_| Error::DegenerateWeights { t })?
            };
            states_t.push(ref_state);
            anc_t.push(ref_anc);
        }

        let mut log_w = Vec::with_capacity(m_particles);
        for (j, state) in states_t.iter().enumerate() {
            let prev_b = (t > 0).then(|| &system.states[t - 1][anc_t[j]].b);
            log_w.push(log_weight_particle(data, t, state, theta, scad, prev_b)?);
        }
        let weights_t = normalize_log_weights(&log_w, t)?;

        system.states.push(states_t);
        system.ancestors.push(anc_t);
        system.weights.push(weights_t);
    }

    let next_reference = system.sample_trajectory(rng)?;
    Ok((system, next_reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_benchmark_instance, simulate_latents, GeneratorConfig, Scenario};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Single-edge model: x2 = b * x1 + e with AR(1) coefficient.
    fn single_edge_theta(w: f64, v: f64) -> SemParameters<f64> {
        let mut theta = SemParameters::<f64>::unstructured(2, Scenario::CoefAndVariance, 1, 1, 0, 1);
        theta.b_support.fill(false);
        theta.b_support[(1, 0)] = true;
        theta.alpha0[(1, 0)] = 0.1;
        theta.alpha[0][(1, 0)] = 0.8;
        theta.w[(1, 0)] = w;
        theta.beta[0].fill(0.5);
        theta.v.fill(v);
        theta
    }

    #[test]
    fn standard_normal_weight_value() {
        // m=1, no edges, h=0, x=0: weight = standard normal density at 0.
        let theta = SemParameters::<f64>::unstructured(1, Scenario::CoefAndVariance, 1, 1, 0, 1);
        let data = TimeSeriesDataset::new(ndarray::array![[0.0]], vec!["x1".into()]).unwrap();
        let state = LatentSlice::<f64>::zeros(1, 0);
        let lw = log_weight_particle(&data, 0, &state, &theta, None, None).unwrap();
        assert_abs_diff_eq!(lw.exp(), 0.398_942_280_401_432_7, epsilon = 1e-12);
    }

    #[test]
    fn equal_residuals_give_equal_weights() {
        let theta = single_edge_theta(0.05, 0.02);
        let data = TimeSeriesDataset::new(ndarray::array![[1.0, 2.0]], vec!["a".into(), "b".into()])
            .unwrap();
        let mut s1 = LatentSlice::<f64>::zeros(2, 0);
        s1.b[(1, 0)] = 0.5;
        let s2 = s1.clone();
        let w1 = log_weight_particle(&data, 0, &s1, &theta, None, None).unwrap();
        let w2 = log_weight_particle(&data, 0, &s2, &theta, None, None).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn ancestor_sampling_follows_categorical_law() {
        let weights = [1.0_f64, 3.0];
        let mut r = rng(1);
        let n = 100_000;
        let mut count = 0usize;
        for _ in 0..n {
            let idx = sample_ancestors(&weights, &mut r).unwrap();
            assert_eq!(idx.len(), 1);
            count += idx[0];
        }
        let freq = count as f64 / n as f64;
        // 3 sigma of a Bernoulli(0.75) mean over 1e5 draws.
        assert_abs_diff_eq!(freq, 0.75, epsilon = 3.0 * (0.75 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn ancestor_sampling_rejects_zero_weights() {
        assert!(sample_ancestors(&[0.0_f64, 0.0], &mut rng(2)).is_err());
    }

    #[test]
    fn propagation_is_deterministic_with_zero_innovation() {
        let theta = single_edge_theta(0.0, 0.0);
        let mut prev = LatentSlice::<f64>::zeros(2, 0);
        prev.b[(1, 0)] = 0.5;
        prev.h.fill(-0.2);
        let next = propagate_particle(&theta, &[prev.clone()], &mut rng(3)).unwrap();
        assert_abs_diff_eq!(next.b[(1, 0)], 0.1 + 0.8 * 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(next.h[0], 0.5 * -0.2, epsilon = 1e-14);
    }

    #[test]
    fn propagation_mean_matches_transition() {
        let theta = single_edge_theta(0.05, 0.02);
        let mut prev = LatentSlice::<f64>::zeros(2, 0);
        prev.b[(1, 0)] = 0.4;
        let mut r = rng(4);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += propagate_particle(&theta, &[prev.clone()], &mut r).unwrap().b[(1, 0)];
        }
        let mean = acc / n as f64;
        let expect = 0.1 + 0.8 * 0.4;
        let se = (0.05 / n as f64).sqrt();
        assert_abs_diff_eq!(mean, expect, epsilon = 3.0 * se);
    }

    #[test]
    fn reference_ancestor_prefers_likely_parent() {
        let theta = single_edge_theta(0.05, 0.0);
        // v = 0 makes h deterministic; choose h consistent so only b matters.
        let mut parent_good = LatentSlice::<f64>::zeros(2, 0);
        parent_good.b[(1, 0)] = 0.5;
        let mut parent_bad = parent_good.clone();
        parent_bad.b[(1, 0)] = -2.0;
        let mut ref_state = parent_good.clone();
        ref_state.b[(1, 0)] = 0.1 + 0.8 * 0.5;
        let histories = vec![vec![parent_bad], vec![parent_good]];
        let weights = [0.5_f64, 0.5];
        let mut r = rng(5);
        let picks: usize = (0..2000)
            .map(|_| {
                sample_reference_ancestor(&theta, &weights, &histories, &ref_state, &mut r)
                    .unwrap()
            })
            .sum();
        // The good parent should be picked essentially always.
        assert!(picks > 1990, "good parent picked only {picks}/2000 times");
    }

    #[test]
    fn zero_innovation_reference_ancestor_is_exact() {
        let theta = single_edge_theta(0.0, 0.0);
        let mut match_parent = LatentSlice::<f64>::zeros(2, 0);
        match_parent.b[(1, 0)] = 0.5;
        let mut other = match_parent.clone();
        other.b[(1, 0)] = 0.6;
        let mut ref_state = match_parent.clone();
        ref_state.b[(1, 0)] = 0.1 + 0.8 * 0.5;
        let histories = vec![vec![other], vec![match_parent]];
        let weights = [0.5_f64, 0.5];
        for seed in 0..20 {
            let idx = sample_reference_ancestor(
                &theta,
                &weights,
                &histories,
                &ref_state,
                &mut rng(seed),
            )
            .unwrap();
            assert_eq!(idx, 1);
        }
    }

    #[test]
    fn single_particle_sweep_returns_reference() {
        let config = GeneratorConfig::<f64> { m: 3, t_len: 20, ..Default::default() };
        let (data, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(6)).unwrap();
        let (system, out) = cpf_as_sweep(&data, &theta, &latents, 1, None, &mut rng(7)).unwrap();
        assert_eq!(out, latents);
        assert_eq!(system.m_particles, 1);
    }

    #[test]
    fn sweep_keeps_reference_pinned_and_weights_normalized() {
        let config = GeneratorConfig::<f64> { m: 4, t_len: 30, ..Default::default() };
        let (data, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(8)).unwrap();
        let m_particles = 10;
        let (system, _) =
            cpf_as_sweep(&data, &theta, &latents, m_particles, None, &mut rng(9)).unwrap();
        for t in 0..system.t_len() {
            let total: f64 = system.weights[t].iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            assert!(system.weights[t].iter().all(|w| w.is_finite() && *w >= 0.0));
            // Last particle is the reference slice.
            assert_eq!(system.states[t][m_particles - 1], latents.slice(t));
            assert!(system.ancestors[t].iter().all(|&a| a < m_particles));
        }
    }

    #[test]
    fn sweep_is_seed_deterministic() {
        let config = GeneratorConfig::<f64> { m: 3, t_len: 25, ..Default::default() };
        let (data, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(10)).unwrap();
        let (s1, o1) = cpf_as_sweep(&data, &theta, &latents, 8, None, &mut rng(42)).unwrap();
        let (s2, o2) = cpf_as_sweep(&data, &theta, &latents, 8, None, &mut rng(42)).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(s1.weights, s2.weights);
        assert_eq!(s1.ancestors, s2.ancestors);
    }

    #[test]
    fn sweep_rejects_mismatched_reference() {
        let config = GeneratorConfig::<f64> { m: 3, t_len: 25, ..Default::default() };
        let (data, _, theta, _) = generate_benchmark_instance(&config, &mut rng(11)).unwrap();
        let short = simulate_latents(&theta, 10, &mut rng(12)).unwrap();
        assert!(cpf_as_sweep(&data, &theta, &short, 8, None, &mut rng(13)).is_err());
    }

    #[test]
    fn weighted_mean_trajectories_have_matching_shapes() {
        let config = GeneratorConfig::<f64> {
            m: 3,
            t_len: 20,
            scenario: Scenario::WithLags,
            s_lag: 1,
            ..Default::default()
        };
        let (data, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(14)).unwrap();
        let (system, _) = cpf_as_sweep(&data, &theta, &latents, 6, None, &mut rng(15)).unwrap();
        let (mean, mean_sq) = system.weighted_mean_trajectories();
        assert_eq!(mean.len(), 20);
        assert_eq!(mean_sq.len(), 20);
        assert_eq!(mean.c.len(), 1);
        for t in 0..20 {
            for i in 0..3 {
                for j in 0..3 {
                    // E[b^2] >= E[b]^2.
                    assert!(
                        mean_sq.b[t][(i, j)] + 1e-12 >= mean.b[t][(i, j)].powi(2),
                        "second moment below squared mean at t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn scad_weighting_penalizes_large_coefficients() {
        let theta = single_edge_theta(0.05, 0.02);
        let data = TimeSeriesDataset::new(ndarray::array![[1.0, 0.5]], vec!["a".into(), "b".into()])
            .unwrap();
        let mut state = LatentSlice::<f64>::zeros(2, 0);
        state.b[(1, 0)] = 1.0;
        let pen = ScadPenalty::new(0.1);
        let unpen = log_weight_particle(&data, 0, &state, &theta, None, None).unwrap();
        let pend = log_weight_particle(&data, 0, &state, &theta, Some(&pen), None).unwrap();
        // Constant branch of the penalty: (a + 1) lambda^2 / 2 = 0.0235.
        assert_abs_diff_eq!(unpen - pend, 0.0235, epsilon = 1e-12);
    }
}
