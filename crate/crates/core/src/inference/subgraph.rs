//! Inference subgraph around one target: its factors and a capped sample of the evidence
//! sharing them.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::Scalar;

use super::graph::{FactorGraph, VALUE_INTERVALS};
use super::support::FeatureKernel;

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphFactor<T> {
    /// Feature index in the factor graph.
    pub feature: usize,
    /// Whether the feature's regression is fittable, i.e. whether this factor carries weight.
    pub active: bool,
    pub target_x: T,
    pub target_theta: T,
    /// Regression estimates, the optimizer's starting point.
    pub alpha_hat: T,
    pub tau_hat: T,
    pub alpha_bounds: (T, T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphEvidence<T> {
    pub pair: usize,
    pub matching: bool,
    /// `(local factor, x, θ)` for the factors this evidence was retained under.
    pub edges: Vec<(usize, T, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSubgraph<T> {
    pub target: usize,
    pub factors: Vec<SubgraphFactor<T>>,
    pub evidence: Vec<SubgraphEvidence<T>>,
}

impl<T: Scalar> InferenceSubgraph<T> {
    pub fn has_both_classes(&self) -> bool {
        self.evidence.iter().any(|e| e.matching) && self.evidence.iter().any(|e| !e.matching)
    }

    /// Evidence retained for `(local factor, interval)`.
    pub fn interval_count(&self, factor: usize, interval: usize) -> usize {
        self.evidence
            .iter()
            .filter(|e| {
                e.edges
                    .iter()
                    .any(|&(f, x, _)| f == factor && crate::easy_label::similarity_bin(x.as_f64(), VALUE_INTERVALS) == interval)
            })
            .count()
    }
}

/// Collects the target's factors and, per factor and value interval, up to `delta_cap`
/// evidence pairs (most recently labeled first, then ascending pair id).
///
/// An evidence pair only gets edges for the factors it was retained under, so the cap bounds
/// every (factor, interval) exactly.
pub fn build_subgraph<T: Scalar>(
    graph: &FactorGraph<T>,
    kernels: &[FeatureKernel<T>],
    target: usize,
    delta_cap: usize,
) -> Result<InferenceSubgraph<T>> {
    if graph.state(target).is_evidence() {
        return Err(Error::Integrity(format!(
            "subgraph target `{}` is already labeled",
            graph.pair_id(target)
        )));
    }
    let mut factors = Vec::with_capacity(graph.degree(target));
    let mut evidence: Vec<SubgraphEvidence<T>> = Vec::new();
    let mut local: HashMap<usize, usize> = HashMap::new();
    for (fi, (f, x)) in graph.edges(target).enumerate() {
        let k = &kernels[f];
        factors.push(SubgraphFactor {
            feature: f,
            active: k.is_active(),
            target_x: x,
            target_theta: k.theta(x),
            alpha_hat: k.fit.alpha_hat,
            tau_hat: k.fit.tau_hat,
            alpha_bounds: k.fit.alpha_bounds,
        });
        for interval in 0..VALUE_INTERVALS {
            for d in graph.evidence_in_interval(f, interval).take(delta_cap) {
                let slot = *local.entry(d).or_insert_with(|| {
                    evidence.push(SubgraphEvidence {
                        pair: d,
                        matching: graph.state(d).label().expect("bucketed pairs are evidence"),
                        edges: Vec::new(),
                    });
                    evidence.len() - 1
                });
                if k.is_active() {
                    let xd = graph.value(d, f).expect("bucketed pairs carry the feature");
                    evidence[slot].edges.push((fi, xd, k.theta(xd)));
                }
            }
        }
    }
    if evidence.is_empty() {
        return Err(Error::NoEvidence(format!(
            "pair `{}` shares no feature with any evidence",
            graph.pair_id(target)
        )));
    }
    Ok(InferenceSubgraph {
        target,
        factors,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, FeatureKind};
    use crate::influence::RegressionFit;

    fn feature(id: &str, pairs: Vec<usize>, values: Vec<f64>) -> Feature {
        Feature {
            id: id.into(),
            kind: FeatureKind::SameToken(id.into()),
            pairs,
            values,
        }
    }

    fn kernels(n: usize) -> Vec<FeatureKernel<f64>> {
        let fit = RegressionFit {
            alpha_hat: 0.5,
            tau_hat: 3.0,
            sigma2_hat: 1.0,
            x_bar: 0.5,
            n_obs: 50,
            sum_sq_dev: 2.0,
            alpha_bounds: (0.3, 0.7),
            fittable: true,
        };
        vec![FeatureKernel::exact(&fit, 1.0); n]
    }

    #[test]
    fn small_subgraph_keeps_everything() {
        let ids: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let f = vec![
            feature("a", vec![0, 1, 2, 3], vec![0.5, 0.9, 0.1, 0.8]),
            feature("b", vec![0, 4, 5], vec![0.5, 0.2, 0.95]),
        ];
        let mut g = FactorGraph::new(ids, &f, 0.01).unwrap();
        for (p, m) in [(1, true), (2, false), (3, true), (4, false), (5, true)] {
            g.label(p, m, 0).unwrap();
        }
        let s = build_subgraph(&g, &kernels(2), 0, 200).unwrap();
        assert_eq!(s.factors.len(), 2);
        assert_eq!(s.evidence.len(), 5);
        assert!(s.has_both_classes());
    }

    #[test]
    fn cap_limits_each_interval() {
        let n = 301;
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:03}")).collect();
        let values: Vec<f64> = (0..n).map(|i| if i == 0 { 0.5 } else { 0.9 + (i % 10) as f64 * 0.005 }).collect();
        let f = vec![feature("a", (0..n).collect(), values)];
        let mut g = FactorGraph::new(ids, &f, 0.01).unwrap();
        for p in 1..n {
            g.label(p, p % 2 == 0, if p > 250 { p } else { 0 }).unwrap();
        }
        let s = build_subgraph(&g, &kernels(1), 0, 200).unwrap();
        assert_eq!(s.evidence.len(), 200);
        assert_eq!(s.interval_count(0, 9), 200);
        // the 50 loop-labeled pairs come first, newest first, then easy ones by id
        assert_eq!(s.evidence[0].pair, 300);
        assert_eq!(s.evidence[49].pair, 251);
        assert_eq!(s.evidence[50].pair, 1);
    }

    #[test]
    fn isolated_target_has_no_evidence() {
        let ids: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
        let f = vec![feature("a", vec![0], vec![0.5]), feature("b", vec![1, 2], vec![0.4, 0.6])];
        let mut g = FactorGraph::new(ids, &f, 0.01).unwrap();
        g.label(1, false, 0).unwrap();
        g.label(2, true, 0).unwrap();
        assert!(matches!(build_subgraph(&g, &kernels(2), 0, 200), Err(Error::NoEvidence(_))));
    }
}
