//! Approximate inference probability from regression estimates, and entropy-based top-k.

use std::cmp::Ordering;

use crate::scalar::{clamp, logistic};
use crate::Scalar;

use super::graph::FactorGraph;
use super::support::FeatureKernel;

/// Lower clamp on every reported probability (the upper clamp is `1 - PROB_FLOOR`).
pub const PROB_FLOOR: f64 = 1e-10;

pub fn clamp_probability<T: Scalar>(p: T) -> T {
    let lo = T::lit(PROB_FLOOR);
    clamp(p, lo, T::one() - lo)
}

/// Logistic of the summed confidence-scaled factor weights, using the regression estimates
/// of each feature.
pub fn approximate_probability<T: Scalar>(graph: &FactorGraph<T>, kernels: &[FeatureKernel<T>], pair: usize) -> T {
    let z = graph.edges(pair).fold(T::zero(), |acc, (f, x)| acc + kernels[f].weight(x));
    clamp_probability(logistic(z))
}

/// Binary entropy in bits, with `H(0) = H(1) = 0`.
pub fn entropy<T: Scalar>(p: T) -> T {
    let term = |q: T| if q <= T::zero() { T::zero() } else { -q * q.log2() };
    term(p) + term(T::one() - p)
}

/// Indices of the `k` lowest-entropy probabilities; ties go to the lower rank.
pub fn select_top_k<T: Scalar>(probabilities: &[T], ranks: &[u32], k: usize) -> Vec<usize> {
    let h: Vec<T> = probabilities.iter().map(|&p| entropy(p)).collect();
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| h[a].partial_cmp(&h[b]).unwrap_or(Ordering::Equal).then(ranks[a].cmp(&ranks[b])));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(0.5f64), 1.0);
        assert_eq!(entropy(1.0f64), 0.0);
        assert_eq!(entropy(0.0f64), 0.0);
        assert!((entropy(0.75f64) - 0.8113).abs() < 1e-4);
        assert!((entropy(0.75f32) - 0.8113).abs() < 1e-4);
    }

    #[test]
    fn logistic_examples() {
        assert_eq!(clamp_probability(logistic(0.0f64)), 0.5);
        assert!((logistic(3f64.ln()) - 0.75).abs() < 1e-12);
        assert!((logistic(-(3f64.ln())) - 0.25).abs() < 1e-12);
        assert_eq!(clamp_probability(logistic(-800.0f64)), 1e-10);
        assert_eq!(clamp_probability(logistic(800.0f64)), 1.0 - 1e-10);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top_k(&[0.99, 0.55, 0.02], &[0, 1, 2], 2), vec![0, 2]);
        assert_eq!(select_top_k(&[0.99, 0.55, 0.02], &[0, 1, 2], 9), vec![0, 2, 1]);
        assert_eq!(select_top_k(&[0.9, 0.1], &[0, 1], 1), vec![0]);
    }

    proptest! {
        #[test]
        fn entropy_symmetric_and_bounded(p in 0.0f64..=1.0) {
            prop_assert!((entropy(p) - entropy(1.0 - p)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&entropy(p)));
        }
    }
}
