//! Weighted maximum-likelihood fit of a subgraph's factor parameters.
//!
//! The negative log-likelihood `Σ_d t_d · -ln P(label_d)` with
//! `P(d) = σ(Σ_f θ_f(d) τ_f (x_f(d) - α_f))` is not convex in `(α, τ)`. Writing `β = τ α`
//! makes every logit linear in `(τ, β)` and the objective convex, and the box
//! `α ∈ [lo, hi], τ ∈ [0, τ_max]` becomes the triangle `0 ≤ τ ≤ τ_max, lo τ ≤ β ≤ hi τ`.
//! The optimizer runs spectral projected gradient over those triangles and maps the result
//! back to `(α, τ)`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::influence::{ClassWeights, SigmoidModel};
use crate::scalar::{logistic, softplus};
use crate::Scalar;

use super::approx::clamp_probability;
use super::subgraph::InferenceSubgraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<T> {
    pub tolerance: T,
    pub max_iterations: usize,
    pub tau_max: T,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-6),
            max_iterations: 100,
            tau_max: T::lit(10.0),
        }
    }
}

/// Flattened evidence of a subgraph restricted to its active factors.
#[derive(Debug, Clone)]
pub struct SubgraphProblem<T> {
    /// Subgraph-local factor index of each parameter block.
    pub factors: Vec<usize>,
    pub bounds: Vec<(T, T)>,
    pub tau_max: T,
    offsets: Vec<usize>,
    edge_param: Vec<usize>,
    edge_x: Vec<T>,
    edge_theta: Vec<T>,
    /// +1 for matching evidence, -1 for unmatching.
    sign: Vec<T>,
    weight: Vec<T>,
}

impl<T: Scalar> SubgraphProblem<T> {
    pub fn new(sub: &InferenceSubgraph<T>, weights: &ClassWeights, tau_max: T) -> Self {
        let mut param_of = vec![usize::MAX; sub.factors.len()];
        let mut factors = Vec::new();
        let mut bounds = Vec::new();
        for (i, f) in sub.factors.iter().enumerate() {
            if f.active {
                param_of[i] = factors.len();
                factors.push(i);
                bounds.push(f.alpha_bounds);
            }
        }
        let mut offsets = vec![0];
        let (mut edge_param, mut edge_x, mut edge_theta) = (Vec::new(), Vec::new(), Vec::new());
        let (mut sign, mut weight) = (Vec::new(), Vec::new());
        for e in &sub.evidence {
            for &(f, x, theta) in &e.edges {
                if param_of[f] != usize::MAX {
                    edge_param.push(param_of[f]);
                    edge_x.push(x);
                    edge_theta.push(theta);
                }
            }
            offsets.push(edge_param.len());
            sign.push(if e.matching { T::one() } else { -T::one() });
            weight.push(weights.weight::<T>(e.matching));
        }
        Self {
            factors,
            bounds,
            tau_max,
            offsets,
            edge_param,
            edge_x,
            edge_theta,
            sign,
            weight,
        }
    }

    pub fn n_params(&self) -> usize {
        self.factors.len()
    }

    pub fn n_evidence(&self) -> usize {
        self.sign.len()
    }

    /// Objective and gradient at `p = [τ_0, β_0, τ_1, β_1, ...]`.
    pub fn value_grad_tb(&self, p: &[T], grad: &mut [T]) -> T {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut total = T::zero();
        for d in 0..self.n_evidence() {
            let r = self.offsets[d]..self.offsets[d + 1];
            let mut z = T::zero();
            for e in r.clone() {
                let j = self.edge_param[e];
                z += self.edge_theta[e] * (p[2 * j] * self.edge_x[e] - p[2 * j + 1]);
            }
            let s = self.sign[d];
            // -ln σ(s z) = softplus(-s z); derivative in z is -s σ(-s z)
            total += self.weight[d] * softplus(-s * z);
            let dz = -s * self.weight[d] * logistic(-s * z);
            for e in r {
                let j = self.edge_param[e];
                let t = dz * self.edge_theta[e];
                grad[2 * j] += t * self.edge_x[e];
                grad[2 * j + 1] -= t;
            }
        }
        total
    }

    pub fn value_tb(&self, p: &[T]) -> T {
        let mut g = vec![T::zero(); p.len()];
        self.value_grad_tb(p, &mut g)
    }

    /// Objective and gradient at `p = [α_0, τ_0, α_1, τ_1, ...]`.
    pub fn value_grad_alpha_tau(&self, p: &[T], grad: &mut [T]) -> T {
        let tb: Vec<T> = p.chunks(2).flat_map(|c| [c[1], c[0] * c[1]]).collect();
        let mut g_tb = vec![T::zero(); tb.len()];
        let v = self.value_grad_tb(&tb, &mut g_tb);
        // chain rule: τ' = τ, β' = α τ
        for j in 0..self.n_params() {
            let (alpha, tau) = (p[2 * j], p[2 * j + 1]);
            let (g_tau, g_beta) = (g_tb[2 * j], g_tb[2 * j + 1]);
            grad[2 * j] = g_beta * tau;
            grad[2 * j + 1] = g_tau + g_beta * alpha;
        }
        v
    }

    pub fn value_alpha_tau(&self, p: &[T]) -> T {
        let mut g = vec![T::zero(); p.len()];
        self.value_grad_alpha_tau(p, &mut g)
    }

    pub fn project(&self, p: &mut [T]) {
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let (t, b) = project_wedge(p[2 * j], p[2 * j + 1], lo, hi, self.tau_max);
            p[2 * j] = t;
            p[2 * j + 1] = b;
        }
    }
}

/// Euclidean projection of `(τ, β)` onto `{0 ≤ τ ≤ τ_max, lo τ ≤ β ≤ hi τ}`.
pub fn project_wedge<T: Scalar>(tau: T, beta: T, lo: T, hi: T, tau_max: T) -> (T, T) {
    if tau >= T::zero() && tau <= tau_max && beta >= lo * tau && beta <= hi * tau {
        return (tau, beta);
    }
    let o = (T::zero(), T::zero());
    let a = (tau_max, lo * tau_max);
    let b = (tau_max, hi * tau_max);
    let q = (tau, beta);
    [(o, a), (o, b), (a, b)]
        .iter()
        .map(|&(u, v)| project_segment(q, u, v))
        .map(|p| (p, (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)))
        .fold(None, |best: Option<((T, T), T)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .map(|(p, _)| p)
        .unwrap()
}

fn project_segment<T: Scalar>(q: (T, T), u: (T, T), v: (T, T)) -> (T, T) {
    let dir = (v.0 - u.0, v.1 - u.1);
    let len2 = dir.0 * dir.0 + dir.1 * dir.1;
    if len2 <= T::zero() {
        return u;
    }
    let s = (((q.0 - u.0) * dir.0 + (q.1 - u.1) * dir.1) / len2).max(T::zero()).min(T::one());
    (u.0 + s * dir.0, u.1 + s * dir.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgResult<T> {
    pub point: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

const SPG_MEMORY: usize = 10;
const SPG_GAMMA: f64 = 1e-4;
const SPG_STEP_BOUNDS: (f64, f64) = (1e-10, 1e10);

/// Nonmonotone spectral projected gradient.
///
/// Stops when the projected gradient's infinity norm reaches `tolerance`, when the objective
/// stalls at rounding level for a whole nonmonotone window, or after `max_iterations`.
/// A small but steady decrease does not stop it: flat valleys of the likelihood still lead
/// somewhere.
/// Returns the best point seen.
pub fn spg<T: Scalar>(
    f: impl Fn(&[T], &mut [T]) -> T,
    project: impl Fn(&mut [T]),
    start: &[T],
    tolerance: T,
    max_iterations: usize,
) -> SpgResult<T> {
    let n = start.len();
    let mut x = start.to_vec();
    project(&mut x);
    let mut g = vec![T::zero(); n];
    let mut fx = f(&x, &mut g);
    let pg_norm = |x: &[T], g: &[T]| -> T {
        let mut y: Vec<T> = x.iter().zip(g).map(|(&a, &b)| a - b).collect();
        project(&mut y);
        y.iter().zip(x).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    };
    let (lmin, lmax) = (T::lit(SPG_STEP_BOUNDS.0), T::lit(SPG_STEP_BOUNDS.1));
    let mut pg = pg_norm(&x, &g);
    let mut lambda = if pg > T::zero() { (T::one() / pg).max(lmin).min(lmax) } else { T::one() };
    let mut history: VecDeque<T> = VecDeque::from([fx]);
    let (mut best_x, mut best_f) = (x.clone(), fx);
    let mut small_steps = 0;
    let mut iterations = 0;
    let mut converged = pg <= tolerance;

    let mut xn = vec![T::zero(); n];
    let mut gn = vec![T::zero(); n];
    while !converged && iterations < max_iterations {
        iterations += 1;
        let mut d: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - lambda * b).collect();
        project(&mut d);
        d.iter_mut().zip(&x).for_each(|(di, &xi)| *di -= xi);
        let gd = g.iter().zip(&d).fold(T::zero(), |s, (&a, &b)| s + a * b);
        let f_ref = history.iter().copied().fold(T::neg_infinity(), T::max);
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            xn.iter_mut().zip(x.iter().zip(&d)).for_each(|(o, (&a, &b))| *o = a + step * b);
            let fnew = f(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f_ref + T::lit(SPG_GAMMA) * step * gd {
                accepted = Some(fnew);
                break;
            }
            let denom = T::lit(2.0) * (fnew - fx - step * gd);
            let trial = if denom > T::zero() { -gd * step * step / denom } else { step / T::lit(2.0) };
            step = if trial >= step * T::lit(0.1) && trial <= step * T::lit(0.9) {
                trial
            } else {
                step / T::lit(2.0)
            };
        }
        let Some(fnew) = accepted else {
            break;
        };
        let (mut sts, mut sty) = (T::zero(), T::zero());
        for i in 0..n {
            let s = xn[i] - x[i];
            sts += s * s;
            sty += s * (gn[i] - g[i]);
        }
        lambda = if sty <= T::zero() { lmax } else { (sts / sty).max(lmin).min(lmax) };
        let improvement = fx - fnew;
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        fx = fnew;
        history.push_back(fx);
        if history.len() > SPG_MEMORY {
            history.pop_front();
        }
        if fx < best_f {
            best_f = fx;
            best_x.copy_from_slice(&x);
        }
        pg = pg_norm(&x, &g);
        let noise = T::epsilon() * T::lit(16.0) * (T::one() + fx.abs());
        small_steps = if improvement.abs() <= noise { small_steps + 1 } else { 0 };
        converged = pg <= tolerance || small_steps >= SPG_MEMORY;
    }
    SpgResult {
        point: best_x,
        value: best_f,
        iterations,
        converged,
    }
}

/// Fitted parameters of one subgraph factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFactor<T> {
    /// Subgraph-local factor index.
    pub factor: usize,
    pub model: SigmoidModel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphSolution<T> {
    pub probability: T,
    pub factors: Vec<FittedFactor<T>>,
    pub objective: T,
    pub iterations: usize,
    /// False when the subgraph lacked a class or an active factor and the regression
    /// estimates were used unchanged.
    pub optimized: bool,
}

/// Fits the subgraph's active factors by weighted maximum likelihood and returns the
/// target's probability under them.
///
/// Without both evidence classes (or without any active factor) there is nothing to fit and
/// the regression estimates give the probability.
pub fn optimize_subgraph<T: Scalar>(
    sub: &InferenceSubgraph<T>,
    weights: &ClassWeights,
    config: &OptimizerConfig<T>,
) -> Result<SubgraphSolution<T>> {
    let problem = SubgraphProblem::new(sub, weights, config.tau_max);
    let start: Vec<T> = problem
        .factors
        .iter()
        .flat_map(|&i| {
            let f = &sub.factors[i];
            [f.tau_hat, f.tau_hat * f.alpha_hat]
        })
        .collect();
    let fitted_from = |p: &[T]| -> Vec<FittedFactor<T>> {
        problem
            .factors
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let f = &sub.factors[i];
                let (tau, beta) = (p[2 * j], p[2 * j + 1]);
                let alpha = if tau > T::zero() {
                    (beta / tau).max(f.alpha_bounds.0).min(f.alpha_bounds.1)
                } else {
                    f.alpha_hat
                };
                FittedFactor {
                    factor: i,
                    model: SigmoidModel {
                        alpha,
                        tau,
                        alpha_bounds: f.alpha_bounds,
                    },
                }
            })
            .collect()
    };
    let target_probability = |fitted: &[FittedFactor<T>]| {
        let z = fitted.iter().fold(T::zero(), |acc, ff| {
            let f = &sub.factors[ff.factor];
            acc + f.target_theta * ff.model.log_odds(f.target_x)
        });
        clamp_probability(logistic(z))
    };

    if problem.n_params() == 0 || !sub.has_both_classes() {
        let fitted = fitted_from(&start);
        return Ok(SubgraphSolution {
            probability: target_probability(&fitted),
            objective: problem.value_tb(&start),
            factors: fitted,
            iterations: 0,
            optimized: false,
        });
    }
    let result = spg(
        |p, g| problem.value_grad_tb(p, g),
        |p| problem.project(p),
        &start,
        config.tolerance,
        config.max_iterations,
    );
    if !result.value.is_finite() {
        let f = problem.factors.first().map(|&i| sub.factors[i].feature).unwrap_or(0);
        return Err(Error::Numeric(format!(
            "subgraph objective is not finite (first factor: feature {f})"
        )));
    }
    let fitted = fitted_from(&result.point);
    Ok(SubgraphSolution {
        probability: target_probability(&fitted),
        objective: result.value,
        factors: fitted,
        iterations: result.iterations,
        optimized: true,
    })
}
