//! The gradual inference loop: one label per iteration, chosen among the best-supported and
//! most certain candidates by subgraph inference.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

use super::approx::{approximate_probability, entropy, select_top_k};
use super::graph::FactorGraph;
use super::optimize::{optimize_subgraph, OptimizerConfig};
use super::subgraph::{build_subgraph, InferenceSubgraph};
use super::support::{combined_from_log_support, select_top_m, SupportCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmlConfig {
    /// Candidates kept after ranking by evidential support.
    pub m: usize,
    /// Candidates given full subgraph inference.
    pub k: usize,
    /// Evidence kept per feature and value interval in a subgraph.
    pub delta_cap: usize,
    pub easy_ratio: f64,
    /// Error bound on the log-odds scale behind each regression confidence.
    pub error_bound: f64,
    pub logit_epsilon: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub tau_max: f64,
    pub seed: u64,
}

impl Default for GmlConfig {
    fn default() -> Self {
        Self {
            m: 2000,
            k: 10,
            delta_cap: 200,
            easy_ratio: 0.3,
            error_bound: 1.0,
            logit_epsilon: 0.01,
            tolerance: 1e-6,
            max_iterations: 100,
            tau_max: 10.0,
            seed: 0,
        }
    }
}

impl GmlConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.m == 0 || self.k == 0 {
            return fail(format!("m and k must be positive (m={}, k={})", self.m, self.k));
        }
        if self.k > self.m {
            return fail(format!("k ({}) must not exceed m ({})", self.k, self.m));
        }
        if self.delta_cap == 0 {
            return fail("delta_cap must be at least 1".into());
        }
        if !(self.easy_ratio > 0.0 && self.easy_ratio < 1.0) {
            return fail(format!("easy_ratio must lie in (0, 1), got {}", self.easy_ratio));
        }
        if !(self.error_bound > 0.0 && self.error_bound.is_finite()) {
            return fail(format!("error_bound must be positive, got {}", self.error_bound));
        }
        if !(self.logit_epsilon > 0.0 && self.logit_epsilon < 0.5) {
            return fail(format!("logit_epsilon must lie in (0, 0.5), got {}", self.logit_epsilon));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return fail("optimizer tolerance and iteration limit must be positive".into());
        }
        if !(self.tau_max > 0.0) {
            return fail(format!("tau_max must be positive, got {}", self.tau_max));
        }
        Ok(())
    }

    pub fn optimizer<T: Scalar>(&self) -> OptimizerConfig<T> {
        OptimizerConfig {
            tolerance: T::lit(self.tolerance),
            max_iterations: self.max_iterations,
            tau_max: T::lit(self.tau_max),
        }
    }
}

/// One loop iteration's decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailEntry {
    pub iteration: usize,
    pub pair: usize,
    pub probability: f64,
    pub entropy: f64,
    pub combined_support: f64,
    pub matching: bool,
    /// Set when no candidate had subgraph evidence and the approximate probability decided.
    pub fallback: bool,
}

/// Labels every inference variable of `graph`, returning the audit trail.
pub fn gradual_inference_loop<T: Scalar>(graph: &mut FactorGraph<T>, config: &GmlConfig) -> Result<Vec<TrailEntry>> {
    gradual_inference_loop_inspect(graph, config, |_| {})
}

/// [`gradual_inference_loop`], calling `inspect` on every subgraph it builds.
pub fn gradual_inference_loop_inspect<T: Scalar>(
    graph: &mut FactorGraph<T>,
    config: &GmlConfig,
    inspect: impl Fn(&InferenceSubgraph<T>) + Sync,
) -> Result<Vec<TrailEntry>> {
    config.validate()?;
    let mut unlabeled = graph.unlabeled();
    if unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    graph.class_weights()?;
    let optimizer = config.optimizer::<T>();
    let tau_max = T::lit(config.tau_max);
    let error_bound = T::lit(config.error_bound);
    let total = unlabeled.len();
    let mut trail = Vec::with_capacity(total);
    let mut cache = SupportCache::new(error_bound);

    for iteration in 1..=total {
        let weights = graph.class_weights()?;
        let fits = graph.fits(tau_max)?;
        let scores = cache.update(graph, fits, &unlabeled);
        let kernels = cache.kernels();

        let ranks: Vec<u32> = unlabeled.iter().map(|&d| graph.rank(d)).collect();
        let top_m: Vec<usize> = select_top_m(&scores, &ranks, config.m);

        let g: &FactorGraph<T> = graph;
        let approx: Vec<T> = top_m
            .par_iter()
            .map(|&i| approximate_probability(g, kernels, unlabeled[i]))
            .collect();
        let m_ranks: Vec<u32> = top_m.iter().map(|&i| ranks[i]).collect();
        let top_k: Vec<usize> = select_top_k(&approx, &m_ranks, config.k);

        let inferred: Vec<Option<T>> = top_k
            .par_iter()
            .map(|&j| {
                let target = unlabeled[top_m[j]];
                match build_subgraph(g, kernels, target, config.delta_cap) {
                    Ok(sub) => {
                        inspect(&sub);
                        let r = optimize_subgraph(&sub, &weights, &optimizer);
                        r.map(|s| Some(s.probability))
                    }
                    Err(Error::NoEvidence(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;

        let chosen = top_k
            .iter()
            .zip(&inferred)
            .filter_map(|(&j, p)| p.map(|p| (j, p, entropy(p))))
            .min_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .unwrap_or(Ordering::Equal)
                    .then(m_ranks[a.0].cmp(&m_ranks[b.0]))
            });
        let (j, probability, h, fallback) = match chosen {
            Some((j, p, h)) => (j, p, h, false),
            None => {
                let j = top_k[0];
                (j, approx[j], entropy(approx[j]), true)
            }
        };
        let slot = top_m[j];
        let pair = unlabeled[slot];
        let matching = probability >= T::lit(0.5);
        graph.label(pair, matching, iteration)?;
        trail.push(TrailEntry {
            iteration,
            pair,
            probability: probability.as_f64(),
            entropy: h.as_f64(),
            combined_support: combined_from_log_support(scores[slot]).as_f64(),
            matching,
            fallback,
        });
        unlabeled.remove(slot);
    }
    Ok(trail)
}
