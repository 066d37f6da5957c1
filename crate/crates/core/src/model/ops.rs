//! Model operations: acyclicity checks, synthetic data generation, the
//! observation likelihood, and AR stationary moments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::normal_logpdf;

use super::types::{
    CausalGraph, GeneratorConfig, LatentSlice, LatentTrajectory, Scenario, SemParameters,
    TimeSeriesDataset,
};

/// True iff the directed graph given by a binary adjacency (`adj[(j, i)]`
/// meaning `j -> i`) has no cycle.
pub fn validate_acyclic(adj: &Array2<u8>) -> Result<bool> {
    if adj.nrows() != adj.ncols() {
        return Err(Error::InvalidInput("adjacency must be square".into()));
    }
    if adj.diag().iter().any(|&d| d != 0) {
        return Err(Error::InvalidInput("adjacency must have a zero diagonal".into()));
    }
    let m = adj.nrows();
    let support = Array2::from_shape_fn((m, m), |(i, j)| adj[(j, i)] != 0);
    Ok(topological_order(&support).is_some())
}

/// Topological order of the nodes given a support matrix in coefficient
/// layout (`support[(i, j)]` meaning `j -> i`); parents come first.
/// `None` when the graph is cyclic.
pub(crate) fn topological_order(support: &Array2<bool>) -> Option<Vec<usize>> {
    let m = support.nrows();
    let mut indeg: Vec<usize> = (0..m)
        .map(|i| (0..m).filter(|&j| support[(i, j)]).count())
        .collect();
    let mut queue: Vec<usize> = (0..m).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(&i) = queue.first() {
        queue.remove(0);
        order.push(i);
        for child in 0..m {
            if support[(child, i)] {
                indeg[child] -= 1;
                if indeg[child] == 0 {
                    queue.push(child);
                }
            }
        }
    }
    (order.len() == m).then_some(order)
}

fn draw_uniform<F: Real, R: Rng>(rng: &mut R, (lo, hi): (F, F)) -> F {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw_normal<F: Real, R: Rng>(rng: &mut R, mean: F, var: F) -> F {
    mean + var.max(F::zero()).sqrt() * F::std_normal(rng)
}

/// Draws latent trajectories from the AR recursions. Time steps before the
/// maximum AR order are drawn from the stationary initial prior; entries
/// outside the candidate support stay identically zero.
pub fn simulate_latents<F: Real, R: Rng>(
    theta: &SemParameters<F>,
    t_len: usize,
    rng: &mut R,
) -> Result<LatentTrajectory<F>> {
    theta.validate()?;
    let k = theta.max_order();
    if t_len < k {
        return Err(Error::InvalidInput(format!(
            "t_len = {t_len} below the maximum AR order {k}"
        )));
    }
    let m = theta.m;
    let mut out = LatentTrajectory {
        b: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
        c: (0..theta.s_lag).map(|_| Vec::with_capacity(t_len)).collect(),
    };
    for t in 0..t_len {
        let mut slice = LatentSlice::zeros(m, theta.s_lag);
        for i in 0..m {
            for j in 0..m {
                if !theta.b_support[(i, j)] {
                    continue;
                }
                slice.b[(i, j)] = if t < k {
                    let (mu, var) = theta.b_prior(i, j);
                    draw_normal(rng, mu, var)
                } else {
                    let mut mean = theta.alpha0[(i, j)];
                    for p in 0..theta.p_lag {
                        mean = mean + theta.alpha[p][(i, j)] * out.b[t - 1 - p][(i, j)];
                    }
                    draw_normal(rng, mean, theta.w[(i, j)])
                };
            }
        }
        if theta.h_varying() {
            for i in 0..m {
                slice.h[i] = if t < k {
                    let (mu, var) = theta.h_prior(i);
                    draw_normal(rng, mu, var)
                } else {
                    let mut mean = theta.beta0[i];
                    for q in 0..theta.q_lag {
                        mean = mean + theta.beta[q][i] * out.h[t - 1 - q][i];
                    }
                    draw_normal(rng, mean, theta.v[i])
                };
            }
        } else {
            let s2 = theta.sigma2_fixed.as_ref().expect("fixed-variance scenario");
            for i in 0..m {
                slice.h[i] = s2[i].ln();
            }
        }
        for s in 0..theta.s_lag {
            for i in 0..m {
                for j in 0..m {
                    if !theta.c_support[s][(i, j)] {
                        continue;
                    }
                    slice.c[s][(i, j)] = if t < k {
                        let (mu, var) = theta.c_prior(s, i, j);
                        draw_normal(rng, mu, var)
                    } else {
                        let mut mean = theta.gamma0[s][(i, j)];
                        for r in 0..theta.r_lag {
                            mean = mean + theta.gamma[s][r][(i, j)] * out.c[s][t - 1 - r][(i, j)];
                        }
                        draw_normal(rng, mean, theta.u[s][(i, j)])
                    };
                }
            }
        }
        out.b.push(slice.b);
        out.h.push(slice.h);
        for (s, c_s) in slice.c.into_iter().enumerate() {
            out.c[s].push(c_s);
        }
    }
    Ok(out)
}

/// Contribution of the lagged terms to the structural equation at time `t`:
/// `sum_s C_t^(s) x_{t-s}`, with missing history treated as zero.
pub fn lag_contribution<F: Real>(
    values: &Array2<F>,
    c_slices: &[Array2<F>],
    t: usize,
) -> Array1<F> {
    let m = values.ncols();
    let mut out = Array1::<F>::zeros(m);
    for (s_idx, c) in c_slices.iter().enumerate() {
        let lag = s_idx + 1;
        if t < lag {
            continue;
        }
        let x_prev = values.row(t - lag);
        for i in 0..m {
            let mut acc = out[i];
            for j in 0..m {
                acc = acc + c[(i, j)] * x_prev[j];
            }
            out[i] = acc;
        }
    }
    out
}

/// Generates observations `X_t = (I - B_t)^{-1} (sum_s C_t^(s) X_{t-s} + E_t)`
/// with `e_{i,t} ~ Normal(0, exp(h_{i,t}))`, solving the acyclic structural
/// system by topological substitution. Also returns the injected noise.
pub fn simulate_observations_with_noise<F: Real, R: Rng>(
    latents: &LatentTrajectory<F>,
    theta: &SemParameters<F>,
    rng: &mut R,
) -> Result<(TimeSeriesDataset<F>, Array2<F>)> {
    latents.validate()?;
    let m = theta.m;
    let order = topological_order(&theta.b_support)
        .ok_or_else(|| Error::InvalidModel("instantaneous support is cyclic".into()))?;
    let t_len = latents.len();
    let mut values = Array2::<F>::zeros((t_len, m));
    let mut noise = Array2::<F>::zeros((t_len, m));
    for t in 0..t_len {
        for i in 0..m {
            noise[(t, i)] = draw_normal(rng, F::zero(), latents.h[t][i].exp());
        }
        let c_slices: Vec<Array2<F>> = latents.c.iter().map(|c_s| c_s[t].clone()).collect();
        let lag = lag_contribution(&values, &c_slices, t);
        let b = &latents.b[t];
        for &i in &order {
            let mut x = lag[i] + noise[(t, i)];
            for j in 0..m {
                x = x + b[(i, j)] * values[(t, j)];
            }
            values[(t, i)] = x;
        }
    }
    let names = (0..m).map(|i| format!("x{}", i + 1)).collect();
    Ok((TimeSeriesDataset::new(values, names)?, noise))
}

/// See [`simulate_observations_with_noise`].
pub fn simulate_observations<F: Real, R: Rng>(
    latents: &LatentTrajectory<F>,
    theta: &SemParameters<F>,
    rng: &mut R,
) -> Result<TimeSeriesDataset<F>> {
    simulate_observations_with_noise(latents, theta, rng).map(|(d, _)| d)
}

/// Node-wise factorized observation log-likelihood
/// `sum_i log Normal(x_i ; sum_j B[i][j] x_j + lag_i, exp(h_i))`.
///
/// With an acyclic instantaneous pattern `|det(I - B)| = 1`, so this equals
/// the joint log-density of the structural model.
pub fn observation_loglik<F: Real>(
    x: ArrayView1<F>,
    b: ArrayView2<F>,
    h: ArrayView1<F>,
    lag: ArrayView1<F>,
) -> Result<F> {
    let finite = x.iter().all(|v| v.is_finite())
        && b.iter().all(|v| v.is_finite())
        && h.iter().all(|v| v.is_finite())
        && lag.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidInput("nonfinite input to observation_loglik".into()));
    }
    let m = x.len();
    let mut total = F::zero();
    for i in 0..m {
        let mut mean = lag[i];
        for j in 0..m {
            mean = mean + b[(i, j)] * x[j];
        }
        total = total + normal_logpdf(x[i], mean, h[i].exp());
    }
    Ok(total)
}

/// Stationary mean and variance of the AR(1) process
/// `z_t = a0 + a1 z_{t-1} + Normal(0, w)`.
pub fn ar_stationary_moments<F: Real>(a0: F, a1: F, w: F) -> Result<(F, F)> {
    if a1.abs() >= F::one() {
        return Err(Error::Nonstationary { magnitude: a1.abs().to_f64_lossy() });
    }
    if w < F::zero() {
        return Err(Error::InvalidInput("negative innovation variance".into()));
    }
    Ok((a0 / (F::one() - a1), w / (F::one() - a1 * a1)))
}

/// Draws a random acyclic benchmark instance: Erdos-Renyi structure oriented
/// by a random permutation, parameters from the configured uniform ranges.
/// Returns the dataset together with the ground truth for evaluation.
pub fn generate_benchmark_instance<F: Real, R: Rng>(
    config: &GeneratorConfig<F>,
    rng: &mut R,
) -> Result<(TimeSeriesDataset<F>, CausalGraph<F>, SemParameters<F>, LatentTrajectory<F>)> {
    config.validate()?;
    let m = config.m;
    let s_lag = if config.scenario == Scenario::WithLags { config.s_lag.max(1) } else { 0 };
    let mut theta = SemParameters::<F>::unstructured(m, config.scenario, 1, 1, s_lag, 1);
    theta.b_support.fill(false);
    for c in &mut theta.c_support {
        c.fill(false);
    }

    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let mut rank = vec![0usize; m];
    for (r, &node) in perm.iter().enumerate() {
        rank[node] = r;
    }

    let mut graph = CausalGraph::<F>::empty(m, s_lag);
    for from in 0..m {
        for to in 0..m {
            if from == to || rank[from] >= rank[to] {
                continue;
            }
            let coin: F = rng.random_range(F::zero()..F::one());
            if coin >= config.edge_probability {
                continue;
            }
            let a1 = draw_uniform(rng, config.alpha_range);
            let w = draw_uniform(rng, config.w_range);
            let mag = draw_uniform(rng, config.b_mean_range);
            let mean = if rng.random::<bool>() { mag } else { -mag };
            theta.b_support[(to, from)] = true;
            theta.alpha[0][(to, from)] = a1;
            theta.w[(to, from)] = w;
            theta.alpha0[(to, from)] = mean * (F::one() - a1);
            graph.instantaneous[(from, to)] = 1;
            graph.edge_scores[(from, to)] = mean.abs();
        }
    }

    match config.scenario {
        Scenario::CoefOnly => {
            let mut s2 = Array1::<F>::zeros(m);
            for i in 0..m {
                s2[i] = draw_uniform(rng, config.sigma2_range);
            }
            theta.sigma2_fixed = Some(s2);
        }
        _ => {
            for i in 0..m {
                let b1 = draw_uniform(rng, config.beta_range);
                let v = draw_uniform(rng, config.v_range);
                let target_s2 = draw_uniform(rng, config.sigma2_range);
                theta.beta[0][i] = b1;
                theta.v[i] = v;
                theta.beta0[i] = target_s2.ln() * (F::one() - b1);
            }
        }
    }

    for s in 0..s_lag {
        for from in 0..m {
            for to in 0..m {
                let coin: F = rng.random_range(F::zero()..F::one());
                if coin >= config.edge_probability {
                    continue;
                }
                let g1 = draw_uniform(rng, config.gamma_range);
                let u = draw_uniform(rng, config.u_range);
                let mag = draw_uniform(rng, config.c_mean_range);
                let mean = if rng.random::<bool>() { mag } else { -mag };
                theta.c_support[s][(to, from)] = true;
                theta.gamma[s][0][(to, from)] = g1;
                theta.u[s][(to, from)] = u;
                theta.gamma0[s][(to, from)] = mean * (F::one() - g1);
                graph.lagged[s][(from, to)] = 1;
            }
        }
    }

    let latents = simulate_latents(&theta, config.t_len, rng)?;
    let data = simulate_observations(&latents, &theta, rng)?;
    Ok((data, graph, theta, latents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn acyclicity_of_chain_and_cycle() {
        let chain = array![[0u8, 1, 0], [0, 0, 1], [0, 0, 0]];
        assert!(validate_acyclic(&chain).unwrap());
        let cycle = array![[0u8, 1, 0], [0, 0, 1], [1, 0, 0]];
        assert!(!validate_acyclic(&cycle).unwrap());
        let self_loop = array![[1u8, 0], [0, 0]];
        assert!(validate_acyclic(&self_loop).is_err());
    }

    #[test]
    fn stationary_moments_match_closed_form() {
        let (mean, var) = ar_stationary_moments(0.1_f64, 0.8, 0.05).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 0.138_888_888_888_888_9, epsilon = 1e-12);
        assert!(matches!(
            ar_stationary_moments(0.0_f64, 1.0, 0.05),
            Err(Error::Nonstationary { .. })
        ));
        assert!(ar_stationary_moments(0.0_f64, 0.5, -0.1).is_err());
    }

    #[test]
    fn observation_loglik_matches_hand_value() {
        let mut b = Array2::<f64>::zeros((3, 3));
        b[(1, 0)] = 0.7;
        b[(2, 1)] = -0.4;
        let h = array![0.5_f64.ln(), 0.25_f64.ln(), 1.5_f64.ln()];
        let x = array![1.0, -2.0, 0.5];
        let lag = array![0.1, 0.0, -0.3];
        let ll = observation_loglik(x.view(), b.view(), h.view(), lag.view()).unwrap();
        assert_abs_diff_eq!(ll, -17.309_827_382_828_182, epsilon = 1e-10);
    }

    #[test]
    fn observation_loglik_rejects_nonfinite() {
        let b = Array2::<f64>::zeros((1, 1));
        let h = array![0.0];
        let lag = array![0.0];
        let x = array![f64::NAN];
        assert!(observation_loglik(x.view(), b.view(), h.view(), lag.view()).is_err());
    }

    #[test]
    fn lag_contribution_skips_missing_history() {
        let values = array![[1.0_f64, 2.0], [3.0, 4.0]];
        let c1 = array![[0.5, 0.0], [0.0, 0.25]];
        let c2 = array![[1.0, 1.0], [1.0, 1.0]];
        let none = lag_contribution(&values, &[c1.clone(), c2.clone()], 0);
        assert_eq!(none, array![0.0, 0.0]);
        // t = 1: only lag 1 applies.
        let one = lag_contribution(&values, &[c1, c2], 1);
        assert_abs_diff_eq!(one[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(one[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn simulated_latents_respect_support_and_seed() {
        let config = GeneratorConfig::<f64> { m: 4, t_len: 40, ..Default::default() };
        let mut r1 = rng(7);
        let (_, _, theta, latents) = generate_benchmark_instance(&config, &mut r1).unwrap();
        for t in 0..latents.len() {
            for i in 0..theta.m {
                for j in 0..theta.m {
                    if !theta.b_support[(i, j)] {
                        assert_eq!(latents.b[t][(i, j)], 0.0);
                    }
                }
            }
        }
        let mut r2 = rng(7);
        let (_, _, _, latents2) = generate_benchmark_instance(&config, &mut r2).unwrap();
        assert_eq!(latents, latents2);
    }

    #[test]
    fn coef_only_latents_have_constant_log_variance() {
        let config = GeneratorConfig::<f64> {
            m: 3,
            t_len: 25,
            scenario: Scenario::CoefOnly,
            ..Default::default()
        };
        let (_, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(3)).unwrap();
        let s2 = theta.sigma2_fixed.as_ref().unwrap();
        for t in 0..latents.len() {
            for i in 0..3 {
                assert_abs_diff_eq!(latents.h[t][i], s2[i].ln(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn structural_solve_recovers_injected_noise() {
        let config = GeneratorConfig::<f64> { m: 5, t_len: 60, ..Default::default() };
        let (_, _, theta, latents) = generate_benchmark_instance(&config, &mut rng(11)).unwrap();
        let (data, noise) =
            simulate_observations_with_noise(&latents, &theta, &mut rng(12)).unwrap();
        for t in 0..data.t_len() {
            let c_slices: Vec<Array2<f64>> =
                latents.c.iter().map(|c_s| c_s[t].clone()).collect();
            let lag = lag_contribution(&data.values, &c_slices, t);
            for i in 0..theta.m {
                let mut e_hat = data.values[(t, i)] - lag[i];
                for j in 0..theta.m {
                    e_hat -= latents.b[t][(i, j)] * data.values[(t, j)];
                }
                assert_abs_diff_eq!(e_hat, noise[(t, i)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn generated_graph_is_acyclic_and_matches_support() {
        for seed in 0..20 {
            let config = GeneratorConfig::<f64> { m: 6, t_len: 10, ..Default::default() };
            let (data, graph, theta, _) =
                generate_benchmark_instance(&config, &mut rng(seed)).unwrap();
            assert!(validate_acyclic(&graph.instantaneous).unwrap());
            assert_eq!(graph.b_mask(), theta.b_support);
            assert_eq!(data.t_len(), 10);
            assert_eq!(data.m(), 6);
        }
    }

    #[test]
    fn with_lags_scenario_generates_lagged_structure() {
        let config = GeneratorConfig::<f64> {
            m: 4,
            t_len: 30,
            scenario: Scenario::WithLags,
            s_lag: 2,
            ..Default::default()
        };
        let (_, graph, theta, latents) =
            generate_benchmark_instance(&config, &mut rng(5)).unwrap();
        assert_eq!(theta.s_lag, 2);
        assert_eq!(graph.lagged.len(), 2);
        assert_eq!(latents.c.len(), 2);
        for s in 0..2 {
            assert_eq!(graph.c_mask(s), theta.c_support[s]);
        }
    }

    #[test]
    fn observation_loglik_is_invariant_to_node_relabeling() {
        // With an acyclic B the Jacobian is 1, so the joint density must not
        // depend on how the nodes are ordered.
        let mut b = Array2::<f64>::zeros((3, 3));
        b[(0, 2)] = 0.9;
        b[(1, 0)] = -0.6;
        let h = array![0.1, -0.4, 0.3];
        let x = array![0.2, -1.1, 0.7];
        let lag = Array1::<f64>::zeros(3);
        let ll = observation_loglik(x.view(), b.view(), h.view(), lag.view()).unwrap();
        // Relabel nodes with the permutation (0 1 2) -> (2 0 1).
        let perm = [2usize, 0, 1];
        let mut bp = Array2::<f64>::zeros((3, 3));
        let mut hp = Array1::<f64>::zeros(3);
        let mut xp = Array1::<f64>::zeros(3);
        for i in 0..3 {
            hp[perm[i]] = h[i];
            xp[perm[i]] = x[i];
            for j in 0..3 {
                bp[(perm[i], perm[j])] = b[(i, j)];
            }
        }
        let llp = observation_loglik(xp.view(), bp.view(), hp.view(), lag.view()).unwrap();
        assert_abs_diff_eq!(ll, llp, epsilon = 1e-12);
    }
}
