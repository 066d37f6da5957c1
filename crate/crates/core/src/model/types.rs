//! Domain types for the time-varying linear causal model.
//!
//! The observation model at each time step is a linear structural equation
//! model `x_i = sum_j B[i][j] x_j + lag terms + e_i` whose coefficient matrix
//! `B_t`, log noise variances `h_t`, and lagged coefficient matrices
//! `C_t^(s)` follow independent AR processes.
//!
//! Index conventions:
//! - coefficient matrices are indexed `[(to, from)]`: `B[(i, j)]` is the
//!   strength of the edge `x_j -> x_i`;
//! - graph adjacency is indexed `[(from, to)]`: `instantaneous[(j, i)] = 1`
//!   means there is an edge `x_j -> x_i`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which parameter groups are time-varying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Coefficients change, noise variances are constant.
    CoefOnly,
    /// Both coefficients and noise variances change.
    CoefAndVariance,
    /// Instantaneous and lagged coefficients change (variances too).
    WithLags,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coef-only" => Ok(Scenario::CoefOnly),
            "coef-and-variance" => Ok(Scenario::CoefAndVariance),
            "with-lags" => Ok(Scenario::WithLags),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::CoefOnly => "coef-only",
            Scenario::CoefAndVariance => "coef-and-variance",
            Scenario::WithLags => "with-lags",
        };
        f.write_str(s)
    }
}

/// Static model parameters of the state-space causal model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SemParameters<F: Real> {
    /// Number of observed processes.
    pub m: usize,
    /// AR order of the coefficient processes.
    pub p_lag: usize,
    /// AR order of the log-variance processes.
    pub q_lag: usize,
    /// Number of time-lagged causal lags (0 = instantaneous only).
    pub s_lag: usize,
    /// AR order of the lagged-coefficient processes.
    pub r_lag: usize,
    pub scenario: Scenario,
    /// Intercepts of the coefficient AR processes, `[(to, from)]`.
    pub alpha0: Array2<F>,
    /// AR coefficients of the coefficient processes, one matrix per lag.
    pub alpha: Vec<Array2<F>>,
    /// Innovation variances of the coefficient processes.
    pub w: Array2<F>,
    /// Intercepts of the log-variance AR processes.
    pub beta0: Array1<F>,
    /// AR coefficients of the log-variance processes, one vector per lag.
    pub beta: Vec<Array1<F>>,
    /// Innovation variances of the log-variance processes.
    pub v: Array1<F>,
    /// Intercepts of the lagged-coefficient processes, one matrix per lag s.
    pub gamma0: Vec<Array2<F>>,
    /// AR coefficients of the lagged-coefficient processes, `[s][r]`.
    pub gamma: Vec<Vec<Array2<F>>>,
    /// Innovation variances of the lagged-coefficient processes, per lag s.
    pub u: Vec<Array2<F>>,
    /// Constant noise variances (coef-only scenario).
    pub sigma2_fixed: Option<Array1<F>>,
    /// Candidate instantaneous edges, `[(to, from)]`. Entries outside the
    /// support are structurally zero and never sampled.
    pub b_support: Array2<bool>,
    /// Candidate lagged edges per lag s, `[(to, from)]`.
    pub c_support: Vec<Array2<bool>>,
}

impl<F: Real> SemParameters<F> {
    /// Parameters with every off-diagonal instantaneous edge (and every
    /// lagged edge) as a candidate; all intercepts/coefficients zero.
    pub fn unstructured(
        m: usize,
        scenario: Scenario,
        p_lag: usize,
        q_lag: usize,
        s_lag: usize,
        r_lag: usize,
    ) -> Self {
        let zero_m = || Array2::<F>::zeros((m, m));
        let mut b_support = Array2::from_elem((m, m), true);
        for i in 0..m {
            b_support[(i, i)] = false;
        }
        let s_lag = if scenario == Scenario::WithLags { s_lag.max(1) } else { 0 };
        SemParameters {
            m,
            p_lag,
            q_lag,
            s_lag,
            r_lag,
            scenario,
            alpha0: zero_m(),
            alpha: (0..p_lag).map(|_| zero_m()).collect(),
            w: zero_m(),
            beta0: Array1::zeros(m),
            beta: (0..q_lag).map(|_| Array1::zeros(m)).collect(),
            v: Array1::zeros(m),
            gamma0: (0..s_lag).map(|_| zero_m()).collect(),
            gamma: (0..s_lag).map(|_| (0..r_lag).map(|_| zero_m()).collect()).collect(),
            u: (0..s_lag).map(|_| zero_m()).collect(),
            sigma2_fixed: if scenario == Scenario::CoefOnly {
                Some(Array1::from_elem(m, F::one()))
            } else {
                None
            },
            b_support,
            c_support: (0..s_lag).map(|_| Array2::from_elem((m, m), true)).collect(),
        }
    }

    /// Whether the log-variance process is latent (changing variances).
    pub fn h_varying(&self) -> bool {
        self.sigma2_fixed.is_none()
    }

    /// Largest AR order among the active latent processes.
    pub fn max_order(&self) -> usize {
        let mut o = self.p_lag;
        if self.h_varying() {
            o = o.max(self.q_lag);
        }
        if self.s_lag > 0 {
            o = o.max(self.r_lag);
        }
        o.max(1)
    }

    /// Checks the structural invariants: AR coefficients in (-1, 1),
    /// nonnegative variances, scenario/noise consistency.
    pub fn validate(&self) -> Result<()> {
        let one = F::one();
        let in_unit = |x: F| x.abs() < one;
        for a in &self.alpha {
            if !a.iter().all(|&x| in_unit(x)) {
                return Err(Error::InvalidModel("alpha entries must lie in (-1, 1)".into()));
            }
        }
        for b in &self.beta {
            if !b.iter().all(|&x| in_unit(x)) {
                return Err(Error::InvalidModel("beta entries must lie in (-1, 1)".into()));
            }
        }
        for g_s in &self.gamma {
            for g in g_s {
                if !g.iter().all(|&x| in_unit(x)) {
                    return Err(Error::InvalidModel("gamma entries must lie in (-1, 1)".into()));
                }
            }
        }
        if self.w.iter().any(|&x| x < F::zero())
            || self.v.iter().any(|&x| x < F::zero())
            || self.u.iter().any(|u| u.iter().any(|&x| x < F::zero()))
        {
            return Err(Error::InvalidModel("innovation variances must be nonnegative".into()));
        }
        match (&self.sigma2_fixed, self.scenario) {
            (Some(s2), Scenario::CoefOnly) => {
                if s2.iter().any(|&x| x <= F::zero()) {
                    return Err(Error::InvalidModel("sigma2_fixed entries must be positive".into()));
                }
            }
            (None, Scenario::CoefOnly) => {
                return Err(Error::InvalidModel(
                    "coef-only scenario requires sigma2_fixed".into(),
                ));
            }
            (Some(_), _) => {
                return Err(Error::InvalidModel(
                    "sigma2_fixed is only valid in the coef-only scenario".into(),
                ));
            }
            (None, _) => {}
        }
        if self.b_support.diag().iter().any(|&d| d) {
            return Err(Error::InvalidModel("self-loops are not allowed".into()));
        }
        Ok(())
    }

    /// Initial-state prior for the coefficient of edge `j -> i`:
    /// the AR process's stationary moments, Normal(0, 1) when degenerate.
    pub fn b_prior(&self, i: usize, j: usize) -> (F, F) {
        let ar: Vec<F> = self.alpha.iter().map(|a| a[(i, j)]).collect();
        stationary_prior(self.alpha0[(i, j)], &ar, self.w[(i, j)])
    }

    /// Initial-state prior for the log-variance of node `i`. Deterministic
    /// at `log(sigma2_fixed)` when variances are constant.
    pub fn h_prior(&self, i: usize) -> (F, F) {
        if let Some(s2) = &self.sigma2_fixed {
            return (s2[i].ln(), F::zero());
        }
        let ar: Vec<F> = self.beta.iter().map(|b| b[i]).collect();
        stationary_prior(self.beta0[i], &ar, self.v[i])
    }

    /// Initial-state prior for the lag-`s` coefficient of edge `j -> i`.
    pub fn c_prior(&self, s: usize, i: usize, j: usize) -> (F, F) {
        let ar: Vec<F> = self.gamma[s].iter().map(|g| g[(i, j)]).collect();
        stationary_prior(self.gamma0[s][(i, j)], &ar, self.u[s][(i, j)])
    }
}

/// Stationary mean/variance of an AR process used as the initial prior.
///
/// Falls back to Normal(0, 1) when the process is nonstationary or fully
/// degenerate (no innovation, no intercept). For orders above one the
/// variance uses the first-order form with the summed AR coefficient.
fn stationary_prior<F: Real>(a0: F, ar: &[F], w: F) -> (F, F) {
    let s: F = ar.iter().copied().fold(F::zero(), |acc, x| acc + x);
    if s.abs() >= F::one() {
        return (F::zero(), F::one());
    }
    if w == F::zero() && a0 == F::zero() {
        return (F::zero(), F::one());
    }
    (a0 / (F::one() - s), w / (F::one() - s * s))
}

/// One time slice of the latent state: instantaneous coefficients, log
/// noise variances, and lagged coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LatentSlice<F: Real> {
    pub b: Array2<F>,
    pub h: Array1<F>,
    /// Lagged coefficient matrices, one per lag s.
    pub c: Vec<Array2<F>>,
}

impl<F: Real> LatentSlice<F> {
    pub fn zeros(m: usize, s_lag: usize) -> Self {
        LatentSlice {
            b: Array2::zeros((m, m)),
            h: Array1::zeros(m),
            c: (0..s_lag).map(|_| Array2::zeros((m, m))).collect(),
        }
    }
}

/// Per-time-step latent trajectories over a whole series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LatentTrajectory<F: Real> {
    /// Instantaneous coefficient matrices, one per time step.
    pub b: Vec<Array2<F>>,
    /// Log noise variances, one vector per time step.
    pub h: Vec<Array1<F>>,
    /// Lagged coefficient matrices, indexed `[s][t]`.
    pub c: Vec<Vec<Array2<F>>>,
}

impl<F: Real> LatentTrajectory<F> {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn slice(&self, t: usize) -> LatentSlice<F> {
        LatentSlice {
            b: self.b[t].clone(),
            h: self.h[t].clone(),
            c: self.c.iter().map(|c_s| c_s[t].clone()).collect(),
        }
    }

    pub fn from_slices(slices: Vec<LatentSlice<F>>) -> Self {
        let s_lag = slices.first().map_or(0, |s| s.c.len());
        let mut b = Vec::with_capacity(slices.len());
        let mut h = Vec::with_capacity(slices.len());
        let mut c: Vec<Vec<Array2<F>>> = (0..s_lag).map(|_| Vec::with_capacity(slices.len())).collect();
        for slice in slices {
            b.push(slice.b);
            h.push(slice.h);
            for (s, c_s) in slice.c.into_iter().enumerate() {
                c[s].push(c_s);
            }
        }
        LatentTrajectory { b, h, c }
    }

    /// All entries finite and lengths consistent.
    pub fn validate(&self) -> Result<()> {
        let t_len = self.b.len();
        if self.h.len() != t_len || self.c.iter().any(|c_s| c_s.len() != t_len) {
            return Err(Error::InvalidInput("trajectory length mismatch".into()));
        }
        let finite = self.b.iter().all(|b| b.iter().all(|x| x.is_finite()))
            && self.h.iter().all(|h| h.iter().all(|x| x.is_finite()))
            && self.c.iter().all(|c_s| c_s.iter().all(|c| c.iter().all(|x| x.is_finite())));
        if !finite {
            return Err(Error::InvalidInput("nonfinite latent entry".into()));
        }
        Ok(())
    }
}

/// Discrete causal graph: instantaneous adjacency (acyclic), per-lag
/// adjacency, and posterior edge scores for tie-breaking/reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CausalGraph<F: Real> {
    /// `instantaneous[(j, i)] = 1` iff there is an edge `x_j -> x_i`.
    pub instantaneous: Array2<u8>,
    /// Lagged adjacency, one matrix per lag s, same `(from, to)` layout.
    pub lagged: Vec<Array2<u8>>,
    /// Posterior score per candidate instantaneous edge, `(from, to)` layout.
    pub edge_scores: Array2<F>,
}

impl<F: Real> CausalGraph<F> {
    pub fn empty(m: usize, s_lag: usize) -> Self {
        CausalGraph {
            instantaneous: Array2::zeros((m, m)),
            lagged: (0..s_lag).map(|_| Array2::zeros((m, m))).collect(),
            edge_scores: Array2::zeros((m, m)),
        }
    }

    pub fn m(&self) -> usize {
        self.instantaneous.nrows()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.instantaneous[(from, to)] != 0
    }

    /// Instantaneous support in coefficient-matrix layout `[(to, from)]`.
    pub fn b_mask(&self) -> Array2<bool> {
        let m = self.m();
        Array2::from_shape_fn((m, m), |(i, j)| self.instantaneous[(j, i)] != 0)
    }

    /// Lag-`s` support in coefficient-matrix layout `[(to, from)]`.
    pub fn c_mask(&self, s: usize) -> Array2<bool> {
        let m = self.m();
        Array2::from_shape_fn((m, m), |(i, j)| self.lagged[s][(j, i)] != 0)
    }

    /// Directed parents of `node` in the instantaneous graph.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.m()).filter(|&j| self.has_edge(j, node)).collect()
    }

    /// Directed children of `node` in the instantaneous graph.
    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.m()).filter(|&j| self.has_edge(node, j)).collect()
    }

    /// Lagged parents `(lag s, from)` of `node`.
    pub fn lagged_parents(&self, node: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, adj) in self.lagged.iter().enumerate() {
            for j in 0..self.m() {
                if adj[(j, node)] != 0 {
                    out.push((s, j));
                }
            }
        }
        out
    }
}

/// Observed multivariate time series, `values[(t, i)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TimeSeriesDataset<F: Real> {
    pub values: Array2<F>,
    pub names: Vec<String>,
}

impl<F: Real> TimeSeriesDataset<F> {
    pub fn new(values: Array2<F>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("dataset contains nonfinite values".into()));
        }
        Ok(TimeSeriesDataset { values, names })
    }

    pub fn t_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// First `t_len` time steps.
    pub fn truncated(&self, t_len: usize) -> Self {
        TimeSeriesDataset {
            values: self.values.slice(ndarray::s![..t_len, ..]).to_owned(),
            names: self.names.clone(),
        }
    }
}

/// Configuration of the synthetic benchmark generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, bound = "")]
pub struct GeneratorConfig<F: Real> {
    pub m: usize,
    pub t_len: usize,
    pub seed: u64,
    /// Erdos-Renyi edge inclusion probability.
    pub edge_probability: F,
    pub scenario: Scenario,
    /// Number of time lags when the scenario includes lagged relations.
    pub s_lag: usize,
    /// Uniform range of the fixed (or target stationary) noise variances.
    pub sigma2_range: (F, F),
    /// Uniform range of coefficient-process innovation variances.
    pub w_range: (F, F),
    /// Uniform range of log-variance-process innovation variances.
    pub v_range: (F, F),
    /// Uniform range of coefficient-process AR coefficients.
    pub alpha_range: (F, F),
    /// Uniform range of log-variance-process AR coefficients.
    pub beta_range: (F, F),
    /// Uniform range of lagged-coefficient innovation variances.
    pub u_range: (F, F),
    /// Uniform range of lagged-coefficient AR coefficients.
    pub gamma_range: (F, F),
    /// Magnitude range of the stationary mean of a present edge's
    /// coefficient; the sign is drawn at random.
    pub b_mean_range: (F, F),
    /// Magnitude range of the stationary mean of a present lagged edge.
    pub c_mean_range: (F, F),
}

impl<F: Real> Default for GeneratorConfig<F> {
    fn default() -> Self {
        GeneratorConfig {
            m: 5,
            t_len: 500,
            seed: 0,
            edge_probability: F::c(0.3),
            scenario: Scenario::CoefAndVariance,
            s_lag: 1,
            sigma2_range: (F::c(0.1), F::c(0.5)),
            w_range: (F::c(0.01), F::c(0.1)),
            v_range: (F::c(0.01), F::c(0.1)),
            alpha_range: (F::c(0.8), F::c(0.998)),
            beta_range: (F::c(0.8), F::c(0.998)),
            u_range: (F::c(0.01), F::c(0.1)),
            gamma_range: (F::c(0.8), F::c(0.998)),
            b_mean_range: (F::c(0.3), F::c(0.8)),
            c_mean_range: (F::c(0.1), F::c(0.3)),
        }
    }
}

impl<F: Real> GeneratorConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.edge_probability < F::zero() || self.edge_probability > F::one() {
            return Err(Error::InvalidConfig("edge_probability must lie in [0, 1]".into()));
        }
        let ranges = [
            self.sigma2_range,
            self.w_range,
            self.v_range,
            self.alpha_range,
            self.beta_range,
            self.u_range,
            self.gamma_range,
            self.b_mean_range,
            self.c_mean_range,
        ];
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidConfig("parameter range with lo > hi".into()));
        }
        if self.m == 0 || self.t_len < 2 {
            return Err(Error::InvalidConfig("need m >= 1 and t_len >= 2".into()));
        }
        Ok(())
    }
}
