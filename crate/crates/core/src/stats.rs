//! Small shared numeric helpers.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Log-density of Normal(mean, var) at `x`. A zero-variance transition is a
/// point mass: 0 when `x` hits the mean exactly, -inf otherwise (log scale).
pub fn normal_logpdf<F: Real>(x: F, mean: F, var: F) -> F {
    if var <= F::zero() {
        let tol = F::c(1e-12) * (F::one() + mean.abs());
        return if (x - mean).abs() <= tol { F::zero() } else { F::neg_infinity() };
    }
    let half = F::c(0.5);
    let two_pi = F::c(std::f64::consts::TAU);
    let r = x - mean;
    -half * ((two_pi * var).ln() + r * r / var)
}

/// One categorical draw with probabilities proportional to `weights`.
pub fn categorical<F: Real, R: Rng>(weights: &[F], rng: &mut R) -> Result<usize> {
    let total: F = weights.iter().copied().fold(F::zero(), |a, x| a + x);
    if !(total > F::zero()) || !total.is_finite() {
        return Err(Error::DegenerateWeights { t: 0 });
    }
    let u: F = rng.random_range(F::zero()..F::one()) * total;
    let mut acc = F::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Mean of a slice (0 for empty input).
pub fn mean<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    let s: F = xs.iter().copied().fold(F::zero(), |a, x| a + x);
    s / F::from_usize(xs.len()).unwrap()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub(crate) fn solve_linear<F: Real>(mut a: Array2<F>, mut b: Array1<F>) -> Option<Array1<F>> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap()
        })?;
        if a[(pivot, col)].abs() < F::c(1e-12) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot, k)];
                a[(pivot, k)] = tmp;
            }
            let tmp = b[col];
            b[col] = b[pivot];
            b[pivot] = tmp;
        }
        for row in col + 1..n {
            let factor = a[(row, col)] / a[(col, col)];
            for k in col..n {
                a[(row, k)] = a[(row, k)] - factor * a[(col, k)];
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = Array1::<F>::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[(row, k)] * x[k];
        }
        x[row] = acc / a[(row, row)];
    }
    Some(x)
}

/// Population variance of a slice.
pub fn population_variance<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    let mu = mean(xs);
    let s: F = xs.iter().map(|&x| (x - mu) * (x - mu)).fold(F::zero(), |a, x| a + x);
    s / F::from_usize(xs.len()).unwrap()
}
