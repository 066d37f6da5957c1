//! Identifiability diagnostics based on cross-time kurtosis statistics.
//!
//! For a root-cause variable (one without changing incoming influences) the
//! statistic `S_i(p) = E[x_{i,t}^2 x_{i,t+p}^2]` is flat in the lag `p`,
//! while variables driven through persistently changing coefficients show a
//! decreasing profile. This yields a root detector and an estimate of the
//! root's noise variance (`sigma^2 = sqrt(S)`), both usable as test oracles
//! for the full estimator.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeSeriesDataset;
use crate::scalar::Real;

/// Minimum usable sample count for the lagged products.
const MIN_SAMPLES: usize = 30;

/// Candidates within this flatness-score distance of the best are ties.
const TIE_TOLERANCE: f64 = 0.05;

/// Sample average of `x_{i,t}^2 x_{i,t+p}^2` over `t`.
pub fn kurtosis_statistic<F: Real>(
    data: &TimeSeriesDataset<F>,
    i: usize,
    p: usize,
) -> Result<F> {
    if i >= data.m() {
        return Err(Error::InvalidInput(format!("variable index {i} out of range")));
    }
    if p == 0 {
        return Err(Error::InvalidInput("lag p must be at least 1".into()));
    }
    let t_len = data.t_len();
    if t_len < p + MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SAMPLES} lagged products, have {}",
            t_len.saturating_sub(p)
        )));
    }
    let n = t_len - p;
    let mut acc = F::zero();
    for t in 0..n {
        let a = data.values[(t, i)];
        let b = data.values[(t + p, i)];
        acc = acc + a * a * b * b;
    }
    Ok(acc / F::from_usize(n).unwrap())
}

/// Outcome of root detection: the winning variable, everything tied with
/// it, each variable's profile `S_i(p)` for `p = 1..=p_max`, and the
/// flatness scores the decision was made on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RootDetection<F: Real> {
    pub root: usize,
    /// All candidates within tolerance of the best score (includes `root`).
    pub candidates: Vec<usize>,
    /// `profiles[(i, p - 1)] = S_i(p)`.
    pub profiles: Array2<F>,
    pub flatness: Vec<F>,
}

/// Scores every variable by the flatness of its kurtosis profile over
/// `p = 1..=p_max` (mean absolute successive difference, normalized by the
/// profile mean so the score is scale-free) and returns the flattest as the
/// root. Near-ties are all reported.
pub fn detect_root<F: Real>(data: &TimeSeriesDataset<F>, p_max: usize) -> Result<RootDetection<F>> {
    if p_max < 2 {
        return Err(Error::InvalidInput("p_max must be at least 2".into()));
    }
    let m = data.m();
    let mut profiles = Array2::<F>::zeros((m, p_max));
    for i in 0..m {
        for p in 1..=p_max {
            profiles[(i, p - 1)] = kurtosis_statistic(data, i, p)?;
        }
    }
    let mut flatness = Vec::with_capacity(m);
    for i in 0..m {
        let mean: F = (0..p_max).map(|p| profiles[(i, p)]).fold(F::zero(), |a, x| a + x)
            / F::from_usize(p_max).unwrap();
        if mean <= F::zero() {
            // A degenerate (all-zero) profile is perfectly flat.
            flatness.push(F::zero());
            continue;
        }
        let mut diff_acc = F::zero();
        for p in 1..p_max {
            diff_acc = diff_acc + (profiles[(i, p)] - profiles[(i, p - 1)]).abs();
        }
        flatness.push(diff_acc / F::from_usize(p_max - 1).unwrap() / mean);
    }
    let root = (0..m)
        .min_by(|&a, &b| flatness[a].partial_cmp(&flatness[b]).expect("finite scores"))
        .expect("at least one variable");
    let tol = F::c(TIE_TOLERANCE);
    let candidates: Vec<usize> =
        (0..m).filter(|&i| flatness[i] <= flatness[root] + tol).collect();
    Ok(RootDetection { root, candidates, profiles, flatness })
}

/// Noise-variance estimate at the root: `sqrt(S_root(p))`.
pub fn root_noise_variance<F: Real>(
    data: &TimeSeriesDataset<F>,
    root: usize,
    p: usize,
) -> Result<F> {
    kurtosis_statistic(data, root, p).map(|s| s.max(F::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn iid_normal_data(t_len: usize, m: usize, sd: f64, seed: u64) -> TimeSeriesDataset<f64> {
        let mut r = rng(seed);
        let values = Array2::from_shape_fn((t_len, m), |_| sd * f64::std_normal(&mut r));
        let names = (0..m).map(|i| format!("x{}", i + 1)).collect();
        TimeSeriesDataset::new(values, names).unwrap()
    }

    #[test]
    fn zero_series_has_zero_statistic() {
        let data =
            TimeSeriesDataset::new(Array2::<f64>::zeros((100, 1)), vec!["x1".into()]).unwrap();
        assert_eq!(kurtosis_statistic(&data, 0, 1).unwrap(), 0.0);
        assert_eq!(root_noise_variance(&data, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn iid_standard_normal_statistic_is_one() {
        let n = 100_000;
        let data = iid_normal_data(n, 1, 1.0, 1);
        let s = kurtosis_statistic(&data, 0, 1).unwrap();
        // Var(x^2 y^2) = E[x^4] E[y^4] - 1 = 8 for independent standard
        // normals.
        let se = (8.0 / n as f64).sqrt();
        assert_abs_diff_eq!(s, 1.0, epsilon = 3.0 * se);
    }

    #[test]
    fn iid_scaled_normal_statistic_is_sigma_fourth() {
        let n = 100_000;
        let sigma2: f64 = 0.25;
        let data = iid_normal_data(n, 1, sigma2.sqrt(), 2);
        let s = kurtosis_statistic(&data, 0, 1).unwrap();
        assert!((s - sigma2 * sigma2).abs() / (sigma2 * sigma2) < 0.05);
        let est = root_noise_variance(&data, 0, 1).unwrap();
        assert!((est - sigma2).abs() / sigma2 < 0.05, "variance estimate {est}");
    }

    #[test]
    fn statistic_preconditions() {
        let data = iid_normal_data(35, 1, 1.0, 3);
        assert!(kurtosis_statistic(&data, 0, 0).is_err());
        assert!(kurtosis_statistic(&data, 1, 1).is_err());
        assert!(kurtosis_statistic(&data, 0, 10).is_err());
        assert!(kurtosis_statistic(&data, 0, 1).is_ok());
        assert!(detect_root(&data, 1).is_err());
    }

    #[test]
    fn scale_equivariance_of_variance_estimate() {
        let data = iid_normal_data(1000, 1, 0.7, 4);
        let c = 3.0;
        let scaled = TimeSeriesDataset::new(data.values.mapv(|x| c * x), data.names.clone())
            .unwrap();
        let base = root_noise_variance(&data, 0, 1).unwrap();
        let big = root_noise_variance(&scaled, 0, 1).unwrap();
        assert_abs_diff_eq!(big, c * c * base, epsilon = 1e-9);
    }

    #[test]
    fn single_variable_is_trivially_root() {
        let data = iid_normal_data(200, 1, 1.0, 5);
        let det = detect_root(&data, 3).unwrap();
        assert_eq!(det.root, 0);
        assert_eq!(det.candidates, vec![0]);
    }

    #[test]
    fn independent_white_noise_reports_a_tie() {
        let data = iid_normal_data(50_000, 3, 1.0, 6);
        let det = detect_root(&data, 4).unwrap();
        assert_eq!(det.candidates.len(), 3, "flat profiles must tie: {:?}", det.flatness);
    }

    /// Two-variable chain x1 -> x2 with a persistently changing coefficient.
    fn chain_data(t_len: usize, seed: u64) -> TimeSeriesDataset<f64> {
        let mut r = rng(seed);
        let mut values = Array2::<f64>::zeros((t_len, 2));
        let mut b: f64 = 1.0;
        let (alpha0, alpha1, w): (f64, f64, f64) = (1.0 * (1.0 - 0.9), 0.9, 0.05);
        for t in 0..t_len {
            b = alpha0 + alpha1 * b + w.sqrt() * f64::std_normal(&mut r);
            let x1 = f64::std_normal(&mut r);
            let x2 = b * x1 + 0.3_f64.sqrt() * f64::std_normal(&mut r);
            values[(t, 0)] = x1;
            values[(t, 1)] = x2;
        }
        TimeSeriesDataset::new(values, vec!["x1".into(), "x2".into()]).unwrap()
    }

    #[test]
    fn chain_root_detected_in_most_runs() {
        let runs: usize = 50;
        let hits = (0..runs)
            .filter(|&seed| detect_root(&chain_data(50_000, 100 + seed as u64), 5).unwrap().root == 0)
            .count();
        assert!(hits * 10 >= runs * 9, "root detected in only {hits}/{runs} runs");
    }

    #[test]
    fn chain_profiles_decrease_for_the_effect_variable() {
        let data = chain_data(200_000, 7);
        let det = detect_root(&data, 4).unwrap();
        // Root profile flat, effect profile decreasing in p.
        for p in 1..4 {
            let root_jump =
                (det.profiles[(0, p)] - det.profiles[(0, p - 1)]).abs() / det.profiles[(0, 0)];
            assert!(root_jump < 0.05, "root profile jump {root_jump} at p={p}");
            assert!(
                det.profiles[(1, p)] < det.profiles[(1, p - 1)],
                "effect profile not decreasing at p={p}"
            );
        }
    }
}
