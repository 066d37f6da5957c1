//! Shared test oracles: an independently implemented Kalman filter and
//! Rauch-Tung-Striebel smoother for scalar varying-coefficient regression,
//! plus small helpers for building two-variable test systems.

use ndarray::{Array1, Array2};
use tvsem::model::{Scenario, SemParameters};

/// Exact smoothed posterior means of `b_t` in the model
///
/// ```text
/// y_t = x_t b_t + e_t,          e_t ~ N(0, r)
/// b_t = a0 + a1 b_{t-1} + n_t,  n_t ~ N(0, q),   b_0 ~ N(mu0, p0)
/// ```
///
/// computed by a forward Kalman filter and a backward RTS pass.
#[allow(clippy::too_many_arguments)]
pub fn kalman_smooth_varying_coefficient(
    y: &[f64],
    x: &[f64],
    a0: f64,
    a1: f64,
    q: f64,
    r: f64,
    mu0: f64,
    p0: f64,
) -> Vec<f64> {
    let t_len = y.len();
    assert_eq!(x.len(), t_len);
    let mut m_pred = vec![0.0; t_len];
    let mut p_pred = vec![0.0; t_len];
    let mut m_filt = vec![0.0; t_len];
    let mut p_filt = vec![0.0; t_len];
    for t in 0..t_len {
        let (mp, pp) = if t == 0 {
            (mu0, p0)
        } else {
            (a0 + a1 * m_filt[t - 1], a1 * a1 * p_filt[t - 1] + q)
        };
        m_pred[t] = mp;
        p_pred[t] = pp;
        let s = x[t] * x[t] * pp + r;
        let gain = pp * x[t] / s;
        m_filt[t] = mp + gain * (y[t] - x[t] * mp);
        p_filt[t] = (1.0 - gain * x[t]) * pp;
    }
    let mut smoothed = m_filt.clone();
    for t in (0..t_len - 1).rev() {
        let c = p_filt[t] * a1 / p_pred[t + 1];
        smoothed[t] = m_filt[t] + c * (smoothed[t + 1] - m_pred[t + 1]);
    }
    smoothed
}

/// Two-variable constant-variance system `x2 = b_t x1 + e` with a single
/// AR(1) coefficient process on the edge `x1 -> x2`.
pub fn two_variable_coef_only(
    alpha0: f64,
    alpha1: f64,
    w: f64,
    sigma2: [f64; 2],
) -> SemParameters<f64> {
    let mut theta = SemParameters::<f64>::unstructured(2, Scenario::CoefOnly, 1, 1, 0, 1);
    theta.b_support.fill(false);
    theta.b_support[(1, 0)] = true;
    theta.alpha0 = Array2::zeros((2, 2));
    theta.alpha0[(1, 0)] = alpha0;
    theta.alpha[0][(1, 0)] = alpha1;
    theta.w[(1, 0)] = w;
    theta.sigma2_fixed = Some(Array1::from_vec(sigma2.to_vec()));
    theta.validate().expect("valid test system");
    theta
}
