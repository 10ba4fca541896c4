//! The factor graph: variables (pairs), factors (features) and their edges, plus the
//! per-feature evidence statistics that the loop keeps current.

use serde::{Deserialize, Serialize};

use crate::easy_label::similarity_bin;
use crate::error::{Error, Result};
use crate::features::Feature;
use crate::influence::{encode_logit_target, fit_from_sums, ClassWeights, FeatureSums, RegressionFit};
use crate::Scalar;

/// Number of uniform value intervals on `[0, 1]` used by the evidence cap.
pub const VALUE_INTERVALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableState {
    /// Labeled pair. `labeled_at` is 0 for easy instances and the loop iteration otherwise.
    Evidence { matching: bool, labeled_at: usize },
    Inference,
}

impl VariableState {
    pub fn is_evidence(&self) -> bool {
        matches!(self, VariableState::Evidence { .. })
    }

    pub fn label(&self) -> Option<bool> {
        match *self {
            VariableState::Evidence { matching, .. } => Some(matching),
            VariableState::Inference => None,
        }
    }
}

/// Evidence applicable to one (feature, value interval): easy instances by ascending pair id,
/// then loop-labeled pairs in labeling order.
#[derive(Debug, Clone, Default)]
struct Bucket {
    easy: Vec<u32>,
    labeled: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct GraphFeature<T> {
    pub id: String,
    pub pairs: Vec<u32>,
    pub values: Vec<T>,
    /// Position of each of this feature's edges in the pair-major edge arrays, aligned
    /// with `pairs`.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FactorGraph<T> {
    pair_ids: Vec<String>,
    /// Position of each pair in ascending pair-id order; every tie rule sorts by this.
    rank: Vec<u32>,
    features: Vec<GraphFeature<T>>,
    edge_offsets: Vec<usize>,
    edge_feature: Vec<u32>,
    edge_value: Vec<T>,
    states: Vec<VariableState>,
    sums: Vec<FeatureSums<T>>,
    buckets: Vec<[Bucket; VALUE_INTERVALS]>,
    n_minus: usize,
    n_plus: usize,
    logit_target: T,
}

impl<T: Scalar> FactorGraph<T> {
    /// Builds the graph with every pair unlabeled.
    pub fn new(pair_ids: Vec<String>, features: &[Feature], logit_epsilon: T) -> Result<Self> {
        let n = pair_ids.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| pair_ids[a as usize].cmp(&pair_ids[b as usize]));
        let mut rank = vec![0u32; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i as usize] = r as u32;
        }
        if order.windows(2).any(|w| pair_ids[w[0] as usize] == pair_ids[w[1] as usize]) {
            return Err(Error::Integrity("duplicate pair id in factor graph".into()));
        }

        let mut degree = vec![0usize; n];
        let mut graph_features = Vec::with_capacity(features.len());
        for f in features {
            if let Some(&p) = f.pairs.iter().find(|&&p| p >= n) {
                return Err(Error::Integrity(format!("feature `{}` references pair {p} of {n}", f.id)));
            }
            if let Some(v) = f.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("feature `{}` has value {v} outside [0, 1]", f.id)));
            }
            for &p in &f.pairs {
                degree[p] += 1;
            }
            graph_features.push(GraphFeature {
                id: f.id.clone(),
                pairs: f.pairs.iter().map(|&p| p as u32).collect(),
                values: f.values.iter().map(|&v| T::lit(v)).collect(),
                edges: Vec::with_capacity(f.pairs.len()),
            });
        }
        let mut edge_offsets = Vec::with_capacity(n + 1);
        edge_offsets.push(0);
        for d in &degree {
            edge_offsets.push(edge_offsets.last().unwrap() + d);
        }
        let total = *edge_offsets.last().unwrap();
        let mut edge_feature = vec![0u32; total];
        let mut edge_value = vec![T::zero(); total];
        let mut cursor = edge_offsets[..n].to_vec();
        for (fi, f) in graph_features.iter_mut().enumerate() {
            for (&p, &v) in f.pairs.iter().zip(&f.values) {
                let c = &mut cursor[p as usize];
                edge_feature[*c] = fi as u32;
                edge_value[*c] = v;
                f.edges.push(*c);
                *c += 1;
            }
        }
        let nf = graph_features.len();
        Ok(Self {
            pair_ids,
            rank,
            features: graph_features,
            edge_offsets,
            edge_feature,
            edge_value,
            states: vec![VariableState::Inference; n],
            sums: vec![FeatureSums::default(); nf],
            buckets: (0..nf).map(|_| Default::default()).collect(),
            n_minus: 0,
            n_plus: 0,
            logit_target: encode_logit_target(true, logit_epsilon)?,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn pair_id(&self, pair: usize) -> &str {
        &self.pair_ids[pair]
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    pub fn rank(&self, pair: usize) -> u32 {
        self.rank[pair]
    }

    pub fn feature(&self, f: usize) -> &GraphFeature<T> {
        &self.features[f]
    }

    pub fn state(&self, pair: usize) -> VariableState {
        self.states[pair]
    }

    pub fn states(&self) -> &[VariableState] {
        &self.states
    }

    /// `(feature, value)` edges of a pair, ascending by feature.
    pub fn edges(&self, pair: usize) -> impl ExactSizeIterator<Item = (usize, T)> + '_ {
        let r = self.edge_offsets[pair]..self.edge_offsets[pair + 1];
        self.edge_feature[r.clone()]
            .iter()
            .zip(&self.edge_value[r])
            .map(|(&f, &x)| (f as usize, x))
    }

    /// Positions of a pair's edges in the pair-major edge arrays.
    pub fn edge_range(&self, pair: usize) -> std::ops::Range<usize> {
        self.edge_offsets[pair]..self.edge_offsets[pair + 1]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_value.len()
    }

    pub fn degree(&self, pair: usize) -> usize {
        self.edge_offsets[pair + 1] - self.edge_offsets[pair]
    }

    pub fn value(&self, pair: usize, feature: usize) -> Option<T> {
        self.edges(pair).find(|&(f, _)| f == feature).map(|(_, x)| x)
    }

    pub fn evidence_counts(&self) -> (usize, usize) {
        (self.n_minus, self.n_plus)
    }

    pub fn class_weights(&self) -> Result<ClassWeights> {
        ClassWeights::new(self.n_minus, self.n_plus)
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.n_pairs()).filter(|&p| !self.states[p].is_evidence()).collect()
    }

    /// Marks a pair as evidence. Easy instances use `labeled_at = 0`; relabeling an evidence
    /// variable is an error.
    pub fn label(&mut self, pair: usize, matching: bool, labeled_at: usize) -> Result<()> {
        if let VariableState::Evidence { .. } = self.states[pair] {
            return Err(Error::Integrity(format!(
                "pair `{}` is already evidence",
                self.pair_ids[pair]
            )));
        }
        self.states[pair] = VariableState::Evidence { matching, labeled_at };
        if matching {
            self.n_plus += 1;
        } else {
            self.n_minus += 1;
        }
        let target = if matching { self.logit_target } else { -self.logit_target };
        let rank = &self.rank;
        for i in self.edge_offsets[pair]..self.edge_offsets[pair + 1] {
            let f = self.edge_feature[i] as usize;
            let x = self.edge_value[i];
            self.sums[f].add(x, target, matching);
            let bucket = &mut self.buckets[f][similarity_bin(x.as_f64(), VALUE_INTERVALS)];
            if labeled_at == 0 {
                let pos = bucket.easy.partition_point(|&q| rank[q as usize] < rank[pair]);
                bucket.easy.insert(pos, pair as u32);
            } else {
                bucket.labeled.push(pair as u32);
            }
        }
        Ok(())
    }

    /// Current regression fit of every feature.
    pub fn fits(&self, tau_max: T) -> Result<Vec<RegressionFit<T>>> {
        let w = self.class_weights()?;
        Ok(self.sums.iter().map(|s| fit_from_sums(s, &w, tau_max)).collect())
    }

    pub fn feature_sums(&self, f: usize) -> &FeatureSums<T> {
        &self.sums[f]
    }

    /// Evidence of feature `f` in value interval `interval`, in retention order: most
    /// recently labeled first, then easy instances by ascending pair id.
    pub fn evidence_in_interval(&self, f: usize, interval: usize) -> impl Iterator<Item = usize> + '_ {
        let b = &self.buckets[f][interval];
        b.labeled.iter().rev().chain(&b.easy).map(|&p| p as usize)
    }

    pub fn evidence_count(&self, f: usize) -> usize {
        self.buckets[f].iter().map(|b| b.easy.len() + b.labeled.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::similarity::SimilarityMetric;

    fn feature(id: &str, pairs: Vec<usize>, values: Vec<f64>) -> Feature {
        Feature {
            id: id.into(),
            kind: FeatureKind::AttributeSimilarity { attribute: id.into(), metric: SimilarityMetric::Jaccard },
            pairs,
            values,
        }
    }

    fn graph() -> FactorGraph<f64> {
        let ids = vec!["c".to_string(), "a".into(), "b".into(), "d".into()];
        let f = vec![
            feature("f0", vec![0, 1, 2, 3], vec![0.95, 0.91, 0.1, 0.5]),
            feature("f1", vec![1, 3], vec![0.3, 0.4]),
        ];
        FactorGraph::new(ids, &f, 0.01).unwrap()
    }

    #[test]
    fn edges_and_ranks() {
        let g = graph();
        assert_eq!(g.rank(1), 0);
        assert_eq!(g.rank(0), 2);
        assert_eq!(g.edges(1).collect::<Vec<_>>(), vec![(0, 0.91), (1, 0.3)]);
        assert_eq!(g.degree(2), 1);
        assert_eq!(g.value(3, 1), Some(0.4));
        assert_eq!(g.value(0, 1), None);
    }

    #[test]
    fn labeling_updates_counts_and_buckets() {
        let mut g = graph();
        g.label(0, true, 0).unwrap();
        g.label(1, true, 0).unwrap();
        g.label(2, false, 0).unwrap();
        assert_eq!(g.evidence_counts(), (1, 2));
        // easy evidence ordered by pair id: "a" (1) before "c" (0)
        assert_eq!(g.evidence_in_interval(0, 9).collect::<Vec<_>>(), vec![1, 0]);
        g.label(3, false, 1).unwrap();
        assert_eq!(g.evidence_in_interval(0, 5).collect::<Vec<_>>(), vec![3]);
        assert!(g.label(3, true, 2).is_err());
        assert_eq!(g.state(3), VariableState::Evidence { matching: false, labeled_at: 1 });
        assert!(g.unlabeled().is_empty());
        assert_eq!(g.feature_sums(0).n_obs(), 4);
    }

    #[test]
    fn rejects_out_of_range_values_and_duplicate_ids() {
        let f = vec![feature("f", vec![0], vec![1.5])];
        assert!(FactorGraph::<f64>::new(vec!["a".into()], &f, 0.01).is_err());
        assert!(FactorGraph::<f64>::new(vec!["a".into(), "a".into()], &[], 0.01).is_err());
    }
}
