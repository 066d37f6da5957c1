//! Stochastic approximation EM driver.
//!
//! Each iteration runs one conditional particle sweep, folds the weighted
//! per-particle sufficient statistics into running accumulators with the
//! step size `lambda_k`, and solves the closed-form M-step updates for all
//! parameter groups of the active scenario.
//!
//! The accumulators store raw weighted lag moments (counts, lagged sums,
//! lagged cross products) per latent scalar process; every numerator and
//! denominator of the closed-form updates is linear in these moments, so
//! convexly combining the moments and solving once per iteration is
//! equivalent to combining the update fractions' parts separately.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{scad, ScadPenalty};
use crate::model::{
    lag_contribution, observation_loglik, simulate_latents, LatentTrajectory, Scenario,
    SemParameters, TimeSeriesDataset,
};
use crate::scalar::Real;
use crate::smoother::{cpf_as_sweep, transition_logpdf, ParticleSystem};

/// Hard bound for AR coefficient estimates; see `FitDiagnostics`.
const AR_CLAMP: f64 = 0.999;

/// Raw weighted lag moments of one scalar latent process `z_t`, taken over
/// `t = order..T`: `n` observations, `s[l] = sum_t z_{t-l}`, and
/// `cross[l][l'] = sum_t z_{t-l} z_{t-l'}` for `l, l' = 0..=order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LagMoments<F: Real> {
    pub order: usize,
    pub n: F,
    pub s: Vec<F>,
    pub cross: Vec<Vec<F>>,
}

impl<F: Real> LagMoments<F> {
    pub fn zeros(order: usize) -> Self {
        LagMoments {
            order,
            n: F::zero(),
            s: vec![F::zero(); order + 1],
            cross: vec![vec![F::zero(); order + 1]; order + 1],
        }
    }

    /// Adds `weight` times the moments of `series` (skipping the first
    /// `order` steps, which have no full history).
    pub fn accumulate(&mut self, series: &[F], weight: F) {
        for t in self.order..series.len() {
            self.n = self.n + weight;
            for l in 0..=self.order {
                self.s[l] = self.s[l] + weight * series[t - l];
                for lp in 0..=self.order {
                    self.cross[l][lp] = self.cross[l][lp] + weight * series[t - l] * series[t - lp];
                }
            }
        }
    }

    /// `self <- (1 - lambda) self + lambda other`.
    pub fn blend(&mut self, other: &LagMoments<F>, lambda: F) {
        let keep = F::one() - lambda;
        self.n = keep * self.n + lambda * other.n;
        for l in 0..=self.order {
            self.s[l] = keep * self.s[l] + lambda * other.s[l];
            for lp in 0..=self.order {
                self.cross[l][lp] = keep * self.cross[l][lp] + lambda * other.cross[l][lp];
            }
        }
    }
}

/// Running sufficient statistics of the stochastic approximation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SufficientStats<F: Real> {
    pub iteration: usize,
    /// Moments of each `b[(i, j)]` process, flattened row-major (`i * m + j`).
    pub b: Vec<LagMoments<F>>,
    /// Moments of each `h[i]` process.
    pub h: Vec<LagMoments<F>>,
    /// Moments of each lagged-coefficient process, `[s][i * m + j]`.
    pub c: Vec<Vec<LagMoments<F>>>,
    /// Weighted sums of squared observation residuals per node (coef-only).
    pub r_num: Array1<F>,
    /// Number of time steps behind `r_num`.
    pub r_den: F,
    /// Weighted sums and sums of squares of the first `r_lag` lagged-
    /// coefficient slices (for the initial-slice variance), per lag `s`.
    pub c_init_sum: Vec<Array2<F>>,
    pub c_init_sumsq: Vec<Array2<F>>,
    pub c_init_n: F,
}

impl<F: Real> SufficientStats<F> {
    pub fn new(theta: &SemParameters<F>) -> Self {
        let m = theta.m;
        SufficientStats {
            iteration: 0,
            b: (0..m * m).map(|_| LagMoments::zeros(theta.p_lag)).collect(),
            h: (0..m).map(|_| LagMoments::zeros(theta.q_lag)).collect(),
            c: (0..theta.s_lag)
                .map(|_| (0..m * m).map(|_| LagMoments::zeros(theta.r_lag)).collect())
                .collect(),
            r_num: Array1::zeros(m),
            r_den: F::zero(),
            c_init_sum: (0..theta.s_lag).map(|_| Array2::zeros((m, m))).collect(),
            c_init_sumsq: (0..theta.s_lag).map(|_| Array2::zeros((m, m))).collect(),
            c_init_n: F::zero(),
        }
    }

    fn from_particles(
        theta: &SemParameters<F>,
        system: &ParticleSystem<F>,
        data: &TimeSeriesDataset<F>,
    ) -> Self {
        let m = theta.m;
        let mut stats = SufficientStats::new(theta);
        let weights = system.final_weights().to_vec();
        for (j, &wj) in weights.iter().enumerate() {
            if wj == F::zero() {
                continue;
            }
            let traj = system.trajectory(j);
            let t_len = traj.len();
            for i in 0..m {
                for jj in 0..m {
                    if theta.b_support[(i, jj)] {
                        let series: Vec<F> = (0..t_len).map(|t| traj.b[t][(i, jj)]).collect();
                        stats.b[i * m + jj].accumulate(&series, wj);
                    }
                }
                if theta.h_varying() {
                    let series: Vec<F> = (0..t_len).map(|t| traj.h[t][i]).collect();
                    stats.h[i].accumulate(&series, wj);
                }
            }
            for s in 0..theta.s_lag {
                for i in 0..m {
                    for jj in 0..m {
                        if theta.c_support[s][(i, jj)] {
                            let series: Vec<F> =
                                (0..t_len).map(|t| traj.c[s][t][(i, jj)]).collect();
                            stats.c[s][i * m + jj].accumulate(&series, wj);
                            for t in 0..theta.r_lag.min(t_len) {
                                let z = traj.c[s][t][(i, jj)];
                                stats.c_init_sum[s][(i, jj)] =
                                    stats.c_init_sum[s][(i, jj)] + wj * z;
                                stats.c_init_sumsq[s][(i, jj)] =
                                    stats.c_init_sumsq[s][(i, jj)] + wj * z * z;
                            }
                        }
                    }
                }
            }
            if !theta.h_varying() {
                for t in 0..t_len {
                    let c_slices: Vec<Array2<F>> =
                        traj.c.iter().map(|c_s| c_s[t].clone()).collect();
                    let lag = lag_contribution(&data.values, &c_slices, t);
                    for i in 0..m {
                        let mut resid = data.values[(t, i)] - lag[i];
                        for jj in 0..m {
                            resid = resid - traj.b[t][(i, jj)] * data.values[(t, jj)];
                        }
                        stats.r_num[i] = stats.r_num[i] + wj * resid * resid;
                    }
                }
            }
        }
        stats.r_den = F::from_usize(data.t_len()).unwrap();
        stats.c_init_n = F::from_usize(theta.r_lag).unwrap();
        stats
    }
}

/// Configuration of one SAEM fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, bound = "")]
pub struct FitConfig<F: Real> {
    /// Particle count M of each conditional sweep.
    pub m_particles: usize,
    /// Number of SAEM iterations K.
    pub iterations: usize,
    /// Iterations with step size 1 before the decaying schedule starts.
    pub burn_in: usize,
    /// Decay exponent of the step size; must lie in (0.5, 1].
    pub kappa: F,
    pub scenario: Scenario,
    /// Number of time lags (used by the with-lags scenario).
    pub s_lag: usize,
    /// AR orders of the coefficient / log-variance / lagged processes.
    pub p_lag: usize,
    pub q_lag: usize,
    pub r_lag: usize,
    /// SCAD penalty strength for the E-step weighting; 0 disables it.
    pub scad_lambda: F,
    pub scad_a: F,
    /// How many final iterations the posterior summaries average over.
    pub summary_window: usize,
    /// Early-stopping tolerance on the Q-trace after burn-in; 0 disables.
    pub tolerance: F,
    pub seed: u64,
}

impl<F: Real> Default for FitConfig<F> {
    fn default() -> Self {
        FitConfig {
            m_particles: 15,
            iterations: 100,
            burn_in: 50,
            kappa: F::c(0.7),
            scenario: Scenario::CoefAndVariance,
            s_lag: 1,
            p_lag: 1,
            q_lag: 1,
            r_lag: 1,
            scad_lambda: F::zero(),
            scad_a: F::c(3.7),
            summary_window: 10,
            tolerance: F::zero(),
            seed: 0,
        }
    }
}

impl<F: Real> FitConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.m_particles < 2 {
            return Err(Error::InvalidConfig("need at least 2 particles".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("need at least 1 iteration".into()));
        }
        if !(self.kappa > F::c(0.5) && self.kappa <= F::one()) {
            return Err(Error::InvalidConfig("kappa must lie in (0.5, 1]".into()));
        }
        if self.p_lag == 0 || self.q_lag == 0 || self.r_lag == 0 {
            return Err(Error::InvalidConfig("AR orders must be at least 1".into()));
        }
        if self.summary_window == 0 {
            return Err(Error::InvalidConfig("summary_window must be at least 1".into()));
        }
        if self.scad_lambda < F::zero() {
            return Err(Error::InvalidHyperparameter("scad_lambda must be >= 0".into()));
        }
        if self.scad_lambda > F::zero() {
            ScadPenalty { lambda: self.scad_lambda, a: self.scad_a }.validate()?;
        }
        Ok(())
    }

    fn scad_penalty(&self) -> Option<ScadPenalty<F>> {
        (self.scad_lambda > F::zero())
            .then(|| ScadPenalty { lambda: self.scad_lambda, a: self.scad_a })
    }
}

/// Counters describing how hard the guard rails worked during a fit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitDiagnostics<F: Real> {
    /// AR estimates clamped into (-0.999, 0.999).
    pub clamped_ar_updates: usize,
    /// Iterations actually run (smaller than K only with early stopping).
    pub iterations_run: usize,
    pub early_stopped: bool,
    /// Estimated initial-slice variance of the lagged coefficients, per lag.
    pub initial_slice_variance: Vec<Array2<F>>,
}

/// Result of a SAEM fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitResult<F: Real> {
    pub theta: SemParameters<F>,
    /// Posterior mean trajectories, averaged over the summary window.
    pub posterior_mean: LatentTrajectory<F>,
    /// Posterior second-moment trajectories over the same window.
    pub posterior_sq: LatentTrajectory<F>,
    /// Stochastic approximation of the complete-data log-likelihood per
    /// iteration.
    pub q_trace: Vec<F>,
    pub diagnostics: FitDiagnostics<F>,
    /// The particle system of the final sweep.
    pub particles: ParticleSystem<F>,
}

impl<F: Real> FitResult<F> {
    /// Posterior variance trajectory of the instantaneous coefficients.
    pub fn posterior_var_b(&self, t: usize) -> Array2<F> {
        let mut var = self.posterior_sq.b[t].clone();
        var.zip_mut_with(&self.posterior_mean.b[t], |v, &m| {
            *v = (*v - m * m).max(F::zero());
        });
        var
    }
}

/// Step size `lambda_k`: 1 during burn-in, then `(k - burn_in)^(-kappa)`.
pub fn step_size<F: Real>(k: usize, config: &FitConfig<F>) -> F {
    if k <= config.burn_in {
        F::one()
    } else {
        F::from_usize(k - config.burn_in).unwrap().powf(-config.kappa)
    }
}

/// Folds one sweep's weighted statistics into the running accumulators:
/// every accumulator A becomes `(1 - lambda_k) A + lambda_k A_new`.
pub fn update_q_statistics<F: Real>(
    stats: &mut SufficientStats<F>,
    system: &ParticleSystem<F>,
    data: &TimeSeriesDataset<F>,
    theta: &SemParameters<F>,
    lambda_k: F,
) {
    let fresh = SufficientStats::from_particles(theta, system, data);
    let keep = F::one() - lambda_k;
    for (acc, new) in stats.b.iter_mut().zip(&fresh.b) {
        acc.blend(new, lambda_k);
    }
    for (acc, new) in stats.h.iter_mut().zip(&fresh.h) {
        acc.blend(new, lambda_k);
    }
    for (acc_s, new_s) in stats.c.iter_mut().zip(&fresh.c) {
        for (acc, new) in acc_s.iter_mut().zip(new_s) {
            acc.blend(new, lambda_k);
        }
    }
    stats.r_num.zip_mut_with(&fresh.r_num, |a, &n| *a = keep * *a + lambda_k * n);
    stats.r_den = keep * stats.r_den + lambda_k * fresh.r_den;
    for s in 0..stats.c_init_sum.len() {
        stats.c_init_sum[s]
            .zip_mut_with(&fresh.c_init_sum[s], |a, &n| *a = keep * *a + lambda_k * n);
        stats.c_init_sumsq[s]
            .zip_mut_with(&fresh.c_init_sumsq[s], |a, &n| *a = keep * *a + lambda_k * n);
    }
    stats.c_init_n = keep * stats.c_init_n + lambda_k * fresh.c_init_n;
    stats.iteration += 1;
}

/// Guards a denominator: tiny relative inflation plus an absolute floor, so
/// an all-zero process yields a zero coefficient rather than a blow-up.
fn guard_denominator<F: Real>(denom: F, group: &str) -> Result<F> {
    let guarded = denom * (F::one() + F::c(1e-8)) + F::c(1e-12);
    if !guarded.is_finite() {
        return Err(Error::SingularUpdate { group: group.into() });
    }
    Ok(guarded)
}

fn clamp_ar<F: Real>(a: F, diag: &mut FitDiagnostics<F>) -> F {
    let bound = F::c(AR_CLAMP);
    if a.abs() > bound {
        diag.clamped_ar_updates += 1;
        bound.copysign(a)
    } else {
        a
    }
}

/// One block-coordinate pass over the AR normal equations of a single
/// process: each lag coefficient in turn, then the intercept, starting from
/// the current estimates.
fn solve_ar_block<F: Real>(
    mom: &LagMoments<F>,
    a0: &mut F,
    a: &mut [F],
    group: &str,
    diag: &mut FitDiagnostics<F>,
) -> Result<()> {
    if mom.n <= F::zero() {
        return Ok(());
    }
    let order = mom.order;
    for p in 1..=order {
        let mut num = mom.cross[0][p] - *a0 * mom.s[p];
        for l in 1..=order {
            if l != p {
                num = num - a[l - 1] * mom.cross[l][p];
            }
        }
        let denom = guard_denominator(mom.cross[p][p], group)?;
        a[p - 1] = clamp_ar(num / denom, diag);
    }
    let mut num = mom.s[0];
    for l in 1..=order {
        num = num - a[l - 1] * mom.s[l];
    }
    *a0 = num / guard_denominator(mom.n, group)?;
    if !a0.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularUpdate { group: group.into() });
    }
    Ok(())
}

/// Weighted mean squared AR residual from the raw moments.
fn residual_variance<F: Real>(mom: &LagMoments<F>, a0: F, a: &[F]) -> F {
    if mom.n <= F::zero() {
        return F::zero();
    }
    let order = mom.order;
    let mut ss = mom.cross[0][0] + a0 * a0 * mom.n - F::c(2.0) * a0 * mom.s[0];
    for l in 1..=order {
        ss = ss - F::c(2.0) * a[l - 1] * mom.cross[0][l];
        ss = ss + F::c(2.0) * a0 * a[l - 1] * mom.s[l];
        for lp in 1..=order {
            ss = ss + a[l - 1] * a[lp - 1] * mom.cross[l][lp];
        }
    }
    (ss / mom.n).max(F::zero())
}

/// M-step for the coefficient AR parameters (intercepts and lag weights).
pub fn m_step_alpha<F: Real>(
    stats: &SufficientStats<F>,
    theta: &mut SemParameters<F>,
    diag: &mut FitDiagnostics<F>,
) -> Result<()> {
    let m = theta.m;
    for i in 0..m {
        for j in 0..m {
            if !theta.b_support[(i, j)] {
                continue;
            }
            let mut a: Vec<F> = theta.alpha.iter().map(|al| al[(i, j)]).collect();
            let mut a0 = theta.alpha0[(i, j)];
            solve_ar_block(&stats.b[i * m + j], &mut a0, &mut a, "alpha", diag)?;
            theta.alpha0[(i, j)] = a0;
            for (p, val) in a.into_iter().enumerate() {
                theta.alpha[p][(i, j)] = val;
            }
        }
    }
    Ok(())
}

/// M-step for the coefficient innovation variances.
pub fn m_step_w<F: Real>(stats: &SufficientStats<F>, theta: &mut SemParameters<F>) -> Result<()> {
    let m = theta.m;
    for i in 0..m {
        for j in 0..m {
            if !theta.b_support[(i, j)] {
                continue;
            }
            let a: Vec<F> = theta.alpha.iter().map(|al| al[(i, j)]).collect();
            theta.w[(i, j)] = residual_variance(&stats.b[i * m + j], theta.alpha0[(i, j)], &a);
        }
    }
    Ok(())
}

/// M-step for the log-variance AR parameters and innovation variances.
pub fn m_step_beta_v<F: Real>(
    stats: &SufficientStats<F>,
    theta: &mut SemParameters<F>,
    diag: &mut FitDiagnostics<F>,
) -> Result<()> {
    if !theta.h_varying() {
        return Ok(());
    }
    for i in 0..theta.m {
        let mut b: Vec<F> = theta.beta.iter().map(|be| be[i]).collect();
        let mut b0 = theta.beta0[i];
        solve_ar_block(&stats.h[i], &mut b0, &mut b, "beta", diag)?;
        theta.beta0[i] = b0;
        theta.v[i] = residual_variance(&stats.h[i], b0, &b);
        for (q, val) in b.into_iter().enumerate() {
            theta.beta[q][i] = val;
        }
    }
    Ok(())
}

/// M-step for the constant noise variances (coef-only scenario): the
/// diagonal of the weighted average of structural-residual outer products.
pub fn m_step_r<F: Real>(stats: &SufficientStats<F>, theta: &mut SemParameters<F>) -> Result<()> {
    let Some(s2) = theta.sigma2_fixed.as_mut() else {
        return Ok(());
    };
    if stats.r_den <= F::zero() {
        return Ok(());
    }
    for i in 0..theta.m {
        s2[i] = (stats.r_num[i] / stats.r_den).max(F::c(1e-12));
    }
    Ok(())
}

/// M-step for the lagged-coefficient AR parameters, innovation variances,
/// and the initial-slice variance (returned through the diagnostics).
pub fn m_step_gamma_u<F: Real>(
    stats: &SufficientStats<F>,
    theta: &mut SemParameters<F>,
    diag: &mut FitDiagnostics<F>,
) -> Result<()> {
    diag.initial_slice_variance = (0..theta.s_lag)
        .map(|_| Array2::zeros((theta.m, theta.m)))
        .collect();
    let m = theta.m;
    for s in 0..theta.s_lag {
        for i in 0..m {
            for j in 0..m {
                if !theta.c_support[s][(i, j)] {
                    continue;
                }
                let mut g: Vec<F> = theta.gamma[s].iter().map(|ga| ga[(i, j)]).collect();
                let mut g0 = theta.gamma0[s][(i, j)];
                solve_ar_block(&stats.c[s][i * m + j], &mut g0, &mut g, "gamma", diag)?;
                theta.gamma0[s][(i, j)] = g0;
                theta.u[s][(i, j)] = residual_variance(&stats.c[s][i * m + j], g0, &g);
                let g_sum: F = g.iter().copied().fold(F::zero(), |acc, x| acc + x);
                for (r, val) in g.into_iter().enumerate() {
                    theta.gamma[s][r][(i, j)] = val;
                }
                // Initial-slice variance around the stationary mean.
                if stats.c_init_n > F::zero() && g_sum.abs() < F::one() {
                    let mu = g0 / (F::one() - g_sum);
                    let mean_sq = stats.c_init_sumsq[s][(i, j)] / stats.c_init_n;
                    let mean = stats.c_init_sum[s][(i, j)] / stats.c_init_n;
                    diag.initial_slice_variance[s][(i, j)] =
                        (mean_sq - F::c(2.0) * mu * mean + mu * mu).max(F::zero());
                }
            }
        }
    }
    Ok(())
}

/// Observation log-likelihood of a data window under fixed latents, minus
/// the SCAD penalties on the coefficients and their increments.
pub fn penalized_loglik<F: Real>(
    data: &TimeSeriesDataset<F>,
    latents: &LatentTrajectory<F>,
    lambda: F,
    a: F,
) -> Result<F> {
    if latents.len() != data.t_len() {
        return Err(Error::InvalidInput("latents/data length mismatch".into()));
    }
    let m = data.m();
    let mut total = F::zero();
    for t in 0..data.t_len() {
        let c_slices: Vec<Array2<F>> = latents.c.iter().map(|c_s| c_s[t].clone()).collect();
        let lag = lag_contribution(&data.values, &c_slices, t);
        total = total
            + observation_loglik(
                data.values.row(t),
                latents.b[t].view(),
                latents.h[t].view(),
                lag.view(),
            )?;
        if lambda > F::zero() {
            for i in 0..m {
                for j in 0..m {
                    total = total - scad(latents.b[t][(i, j)], lambda, a)?;
                    if t > 0 {
                        total = total
                            - scad(
                                latents.b[t][(i, j)] - latents.b[t - 1][(i, j)],
                                lambda,
                                a,
                            )?;
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Complete-data log-likelihood `log p_theta(X, Z)` of one trajectory:
/// observation terms plus latent transition terms (initial prior included).
pub fn complete_data_loglik<F: Real>(
    data: &TimeSeriesDataset<F>,
    theta: &SemParameters<F>,
    traj: &LatentTrajectory<F>,
) -> Result<F> {
    let order = theta.max_order();
    let mut total = F::zero();
    for t in 0..data.t_len() {
        let c_slices: Vec<Array2<F>> = traj.c.iter().map(|c_s| c_s[t].clone()).collect();
        let lag = lag_contribution(&data.values, &c_slices, t);
        total = total
            + observation_loglik(
                data.values.row(t),
                traj.b[t].view(),
                traj.h[t].view(),
                lag.view(),
            )?;
        let state = traj.slice(t);
        let history: Vec<_> = if t < order {
            Vec::new()
        } else {
            (1..=order).map(|back| traj.slice(t - back)).collect()
        };
        total = total + transition_logpdf(theta, &state, &history);
    }
    Ok(total)
}

/// Per-node ridge regression of each variable on all the others:
/// coefficient matrix `[(to, from)]` and residual variances. Used to start
/// the coefficient processes near a consistent static estimate, without
/// which the particle sweeps explore a high-dimensional latent space from
/// an uninformative prior and stochastic approximation stalls.
fn static_ridge_fit<F: Real>(data: &TimeSeriesDataset<F>) -> (Array2<F>, Array1<F>) {
    let (t_len, m) = (data.t_len(), data.m());
    let n = F::from_usize(t_len).unwrap();
    let mut coefs = Array2::<F>::zeros((m, m));
    let mut resvar = Array1::<F>::zeros(m);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let k = others.len();
        let mut xtx = Array2::<F>::zeros((k, k));
        let mut xty = Array1::<F>::zeros(k);
        for t in 0..t_len {
            let y = data.values[(t, i)];
            for (a, &ja) in others.iter().enumerate() {
                let xa = data.values[(t, ja)];
                xty[a] = xty[a] + xa * y;
                for (b, &jb) in others.iter().enumerate() {
                    xtx[(a, b)] = xtx[(a, b)] + xa * data.values[(t, jb)];
                }
            }
        }
        for a in 0..k {
            xtx[(a, a)] = xtx[(a, a)] + F::c(1e-6) * n;
        }
        let beta = crate::stats::solve_linear(xtx, xty).unwrap_or_else(|| Array1::zeros(k));
        let mut rss = F::zero();
        for t in 0..t_len {
            let mut pred = F::zero();
            for (a, &ja) in others.iter().enumerate() {
                pred = pred + beta[a] * data.values[(t, ja)];
            }
            let r = data.values[(t, i)] - pred;
            rss = rss + r * r;
        }
        for (a, &ja) in others.iter().enumerate() {
            coefs[(i, ja)] = beta[a];
        }
        resvar[i] = (rss / n).max(F::c(1e-6));
    }
    (coefs, resvar)
}

/// Starting parameters: AR processes with moderate persistence whose
/// stationary means match a static per-node ridge regression, and noise
/// variances from the regression residuals.
pub fn initial_theta<F: Real>(
    data: &TimeSeriesDataset<F>,
    config: &FitConfig<F>,
) -> SemParameters<F> {
    let m = data.m();
    let s_lag = if config.scenario == Scenario::WithLags { config.s_lag.max(1) } else { 0 };
    let mut theta = SemParameters::unstructured(
        m,
        config.scenario,
        config.p_lag,
        config.q_lag,
        s_lag,
        config.r_lag,
    );
    let persist = F::c(0.9);
    for p in 0..config.p_lag {
        theta.alpha[p].fill(persist / F::from_usize(config.p_lag).unwrap());
    }
    theta.w.fill(F::c(0.05));
    for q in 0..config.q_lag {
        theta.beta[q].fill(persist / F::from_usize(config.q_lag).unwrap());
    }
    theta.v.fill(F::c(0.05));
    for s in 0..s_lag {
        for r in 0..config.r_lag {
            theta.gamma[s][r].fill(persist / F::from_usize(config.r_lag).unwrap());
        }
        theta.u[s].fill(F::c(0.05));
    }
    let (coefs, resvar) = static_ridge_fit(data);
    let one_minus = F::one() - persist;
    for i in 0..m {
        for j in 0..m {
            if theta.b_support[(i, j)] {
                theta.alpha0[(i, j)] = coefs[(i, j)] * one_minus;
            }
        }
    }
    if let Some(s2) = theta.sigma2_fixed.as_mut() {
        for i in 0..m {
            s2[i] = resvar[i];
        }
    } else {
        for i in 0..m {
            theta.beta0[i] = resvar[i].ln() * one_minus;
        }
    }
    theta
}

/// Runs the full SAEM loop: conditional sweep, statistics update, M step.
pub fn saem_fit<F: Real>(
    data: &TimeSeriesDataset<F>,
    config: &FitConfig<F>,
) -> Result<FitResult<F>> {
    config.validate()?;
    if data.t_len() < 3 {
        return Err(Error::InvalidInput("need at least 3 time steps".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = initial_theta(data, config);
    if data.t_len() <= theta.max_order() {
        return Err(Error::InvalidInput("series shorter than the AR order".into()));
    }
    let scad_pen = config.scad_penalty();
    let mut reference = simulate_latents(&theta, data.t_len(), &mut rng)?;
    let mut stats = SufficientStats::new(&theta);
    let mut diag = FitDiagnostics::default();
    let mut q_trace: Vec<F> = Vec::with_capacity(config.iterations);
    let mut q_running = F::zero();
    let mut window: Vec<(LatentTrajectory<F>, LatentTrajectory<F>)> = Vec::new();
    let mut last_system: Option<ParticleSystem<F>> = None;

    for k in 1..=config.iterations {
        let (system, next_reference) = cpf_as_sweep(
            data,
            &theta,
            &reference,
            config.m_particles,
            scad_pen.as_ref(),
            &mut rng,
        )?;
        let lambda_k = step_size(k, config);
        update_q_statistics(&mut stats, &system, data, &theta, lambda_k);

        let mut q_new = F::zero();
        for (j, &wj) in system.final_weights().iter().enumerate() {
            if wj > F::zero() {
                q_new = q_new + wj * complete_data_loglik(data, &theta, &system.trajectory(j))?;
            }
        }
        q_running = if k == 1 {
            q_new
        } else {
            (F::one() - lambda_k) * q_running + lambda_k * q_new
        };
        q_trace.push(q_running);

        m_step_alpha(&stats, &mut theta, &mut diag)?;
        m_step_w(&stats, &mut theta)?;
        m_step_beta_v(&stats, &mut theta, &mut diag)?;
        m_step_r(&stats, &mut theta)?;
        m_step_gamma_u(&stats, &mut theta, &mut diag)?;

        window.push(system.weighted_mean_trajectories());
        if window.len() > config.summary_window {
            window.remove(0);
        }
        reference = next_reference;
        last_system = Some(system);
        diag.iterations_run = k;

        if config.tolerance > F::zero() && k > config.burn_in.max(1) && q_trace.len() >= 2 {
            let delta = (q_trace[q_trace.len() - 1] - q_trace[q_trace.len() - 2]).abs();
            if delta < config.tolerance {
                diag.early_stopped = true;
                break;
            }
        }
    }

    // Average the summary window.
    let n_window = F::from_usize(window.len()).unwrap();
    let (mut mean_acc, mut sq_acc) = window[0].clone();
    for (mean_k, sq_k) in window.iter().skip(1) {
        for t in 0..mean_acc.len() {
            mean_acc.b[t].zip_mut_with(&mean_k.b[t], |a, &x| *a = *a + x);
            sq_acc.b[t].zip_mut_with(&sq_k.b[t], |a, &x| *a = *a + x);
            mean_acc.h[t].zip_mut_with(&mean_k.h[t], |a, &x| *a = *a + x);
            sq_acc.h[t].zip_mut_with(&sq_k.h[t], |a, &x| *a = *a + x);
            for s in 0..mean_acc.c.len() {
                mean_acc.c[s][t].zip_mut_with(&mean_k.c[s][t], |a, &x| *a = *a + x);
                sq_acc.c[s][t].zip_mut_with(&sq_k.c[s][t], |a, &x| *a = *a + x);
            }
        }
    }
    for t in 0..mean_acc.len() {
        mean_acc.b[t].mapv_inplace(|x| x / n_window);
        sq_acc.b[t].mapv_inplace(|x| x / n_window);
        mean_acc.h[t].mapv_inplace(|x| x / n_window);
        sq_acc.h[t].mapv_inplace(|x| x / n_window);
        for s in 0..mean_acc.c.len() {
            mean_acc.c[s][t].mapv_inplace(|x| x / n_window);
            sq_acc.c[s][t].mapv_inplace(|x| x / n_window);
        }
    }

    Ok(FitResult {
        theta,
        posterior_mean: mean_acc,
        posterior_sq: sq_acc,
        q_trace,
        diagnostics: diag,
        particles: last_system.expect("at least one iteration"),
    })
}
