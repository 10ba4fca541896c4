//! Easy-instance labeling: class proportion from 2-means, then similarity thresholds.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 300;

/// Outcome of 2-means: cluster membership (`true` = cluster 1) and within-cluster SSE.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeans {
    pub assignment: Vec<bool>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with `k = 2`, restarted from `restarts` random pairs of distinct points.
/// Returns the lowest-inertia partition; ties keep the earliest restart.
pub fn two_means(points: &[Vec<f64>], restarts: usize, seed: u64) -> Result<TwoMeans> {
    if points.len() < 2 {
        return Err(Error::DegenerateClustering("need at least two pairs to cluster".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite similarity vector".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::DegenerateClustering(
            "all similarity vectors are identical; set the matching proportion manually".into(),
        ));
    }
    let distinct: Vec<usize> = {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        idx.dedup_by(|a, b| points[*a] == points[*b]);
        idx.sort_unstable();
        idx
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<TwoMeans> = None;
    for _ in 0..restarts.max(1) {
        let pick = sample(&mut rng, distinct.len(), 2);
        let centers = [points[distinct[pick.index(0)]].clone(), points[distinct[pick.index(1)]].clone()];
        let run = lloyd(points, centers);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], mut centers: [Vec<f64>; 2]) -> TwoMeans {
    let dim = points[0].len();
    let mut assignment: Vec<bool> = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let next: Vec<bool> = points
            .iter()
            .map(|p| sq_dist(p, &centers[1]) < sq_dist(p, &centers[0]))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == (c == 1))
                .map(|(p, _)| p)
                .collect();
            // An emptied cluster keeps its previous center.
            if members.is_empty() {
                continue;
            }
            *center = (0..dim)
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| sq_dist(p, &centers[a as usize]))
        .sum();
    TwoMeans { assignment, inertia }
}

/// Fraction of pairs in the matching cluster, the one with the higher mean record similarity.
pub fn estimate_class_proportion(vectors: &[Vec<f64>], record_similarity: &[f64], seed: u64) -> Result<f64> {
    assert_eq!(vectors.len(), record_similarity.len());
    let km = two_means(vectors, KMEANS_RESTARTS, seed)?;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (&a, &s) in km.assignment.iter().zip(record_similarity) {
        sums[a as usize] += s;
        counts[a as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::DegenerateClustering(
            "clustering left one cluster empty; set the matching proportion manually".into(),
        ));
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let matching = usize::from(means[1] > means[0]);
    Ok(counts[matching] as f64 / vectors.len() as f64)
}

/// Thresholds and counts chosen for the easy instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EasyLabelingPlan {
    pub easy_ratio: f64,
    pub est_match_fraction: f64,
    /// Lowest similarity among pairs labeled matching.
    pub match_lowerbound: f64,
    /// Highest similarity among pairs labeled unmatching.
    pub unmatch_upperbound: f64,
    pub n_match: usize,
    pub n_unmatch: usize,
}

/// A pair labeled by the easy-instance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EasyLabel {
    pub pair: usize,
    pub matching: bool,
}

/// Labels the `round(ratio · frac · |D|)` most similar pairs matching and the remaining
/// share of `round(ratio · |D|)` least similar pairs unmatching.
///
/// `pair_ids` breaks similarity ties in ascending order. Labels come back with matching
/// pairs first (most similar first), then unmatching (least similar first).
pub fn select_easy_instances(
    similarity: &[f64],
    pair_ids: &[&str],
    easy_ratio: f64,
    est_match_fraction: f64,
) -> Result<(EasyLabelingPlan, Vec<EasyLabel>)> {
    assert_eq!(similarity.len(), pair_ids.len());
    if !(easy_ratio > 0.0 && easy_ratio < 1.0) {
        return Err(Error::Config(format!("easy ratio must lie in (0, 1), got {easy_ratio}")));
    }
    if !(0.0..=1.0).contains(&est_match_fraction) {
        return Err(Error::Config(format!(
            "matching fraction must lie in [0, 1], got {est_match_fraction}"
        )));
    }
    let n = similarity.len();
    let n_easy = (easy_ratio * n as f64).round() as usize;
    let n_match = (est_match_fraction * n_easy as f64).round() as usize;
    if n_match == 0 || n_match >= n_easy {
        return Err(Error::ClassStarvation {
            matching: n_match,
            unmatching: n_easy.saturating_sub(n_match),
        });
    }
    let n_unmatch = n_easy - n_match;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        similarity[b]
            .partial_cmp(&similarity[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| pair_ids[a].cmp(pair_ids[b]))
    });
    let mut ascending: Vec<usize> = (0..n).collect();
    ascending.sort_by(|&a, &b| {
        similarity[a]
            .partial_cmp(&similarity[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| pair_ids[a].cmp(pair_ids[b]))
    });

    let matching = &order[..n_match];
    let mut taken = vec![false; n];
    matching.iter().for_each(|&i| taken[i] = true);
    let unmatching: Vec<usize> = ascending.iter().copied().filter(|&i| !taken[i]).take(n_unmatch).collect();

    let plan = EasyLabelingPlan {
        easy_ratio,
        est_match_fraction,
        match_lowerbound: similarity[*matching.last().unwrap()],
        unmatch_upperbound: similarity[*unmatching.last().unwrap()],
        n_match,
        n_unmatch,
    };
    let labels = matching
        .iter()
        .map(|&pair| EasyLabel { pair, matching: true })
        .chain(unmatching.iter().map(|&pair| EasyLabel { pair, matching: false }))
        .collect();
    Ok((plan, labels))
}

/// Accuracy of each easy class against gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EasyAccuracy {
    pub matching_labeled: usize,
    pub matching_correct: usize,
    pub unmatching_labeled: usize,
    pub unmatching_correct: usize,
}

impl EasyAccuracy {
    pub fn matching_precision(&self) -> Option<f64> {
        (self.matching_labeled > 0).then(|| self.matching_correct as f64 / self.matching_labeled as f64)
    }

    pub fn unmatching_accuracy(&self) -> Option<f64> {
        (self.unmatching_labeled > 0).then(|| self.unmatching_correct as f64 / self.unmatching_labeled as f64)
    }
}

pub fn easy_accuracy(labels: &[EasyLabel], gold: &[bool]) -> EasyAccuracy {
    let mut acc = EasyAccuracy {
        matching_labeled: 0,
        matching_correct: 0,
        unmatching_labeled: 0,
        unmatching_correct: 0,
    };
    for l in labels {
        let ok = gold[l.pair] == l.matching;
        if l.matching {
            acc.matching_labeled += 1;
            acc.matching_correct += ok as usize;
        } else {
            acc.unmatching_labeled += 1;
            acc.unmatching_correct += ok as usize;
        }
    }
    acc
}

/// Precision of the fixed-threshold rules `sim ≥ lowerbound → matching` and
/// `sim ≤ upperbound → unmatching`.
pub fn threshold_accuracy(similarity: &[f64], gold: &[bool], lowerbound: f64, upperbound: f64) -> EasyAccuracy {
    let labels: Vec<EasyLabel> = similarity
        .iter()
        .enumerate()
        .filter_map(|(pair, &s)| {
            if s >= lowerbound {
                Some(EasyLabel { pair, matching: true })
            } else if s <= upperbound {
                Some(EasyLabel { pair, matching: false })
            } else {
                None
            }
        })
        .collect();
    easy_accuracy(&labels, gold)
}

/// One similarity interval of the monotonicity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub equivalent: usize,
}

impl ProfileBin {
    pub fn fraction(&self) -> Option<f64> {
        (self.count > 0).then(|| self.equivalent as f64 / self.count as f64)
    }
}

/// Fraction of equivalent pairs per uniform interval `[i/b, (i+1)/b)`; the last interval
/// also takes similarity 1.
pub fn monotonicity_profile(similarity: &[f64], gold: &[bool], bins: usize) -> Vec<ProfileBin> {
    let bins = bins.max(1);
    let mut out: Vec<ProfileBin> = (0..bins)
        .map(|i| ProfileBin {
            lower: i as f64 / bins as f64,
            upper: (i + 1) as f64 / bins as f64,
            count: 0,
            equivalent: 0,
        })
        .collect();
    for (&s, &g) in similarity.iter().zip(gold) {
        let b = similarity_bin(s, bins);
        out[b].count += 1;
        out[b].equivalent += g as usize;
    }
    out
}

/// Index of the uniform interval holding `s`, clamped into `0..bins`.
pub fn similarity_bin(s: f64, bins: usize) -> usize {
    ((s * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    #[test]
    fn separable_fixture_proportion() {
        let mut vecs = Vec::new();
        let mut sims = Vec::new();
        for i in 0..100 {
            let jitter = (i % 7) as f64 * 0.005;
            let s = if i < 20 { 0.9 - jitter } else { 0.1 + jitter };
            vecs.push(vec![s, s + 0.01]);
            sims.push(s);
        }
        let p = estimate_class_proportion(&vecs, &sims, 7).unwrap();
        assert!((p - 0.2).abs() <= 0.02, "{p}");
    }

    #[test]
    fn two_extremes_split_evenly() {
        let p = estimate_class_proportion(&[vec![0.0], vec![1.0]], &[0.0, 1.0], 1).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let err = estimate_class_proportion(&vec![vec![0.4]; 5], &[0.4; 5], 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateClustering(_)));
    }

    #[test]
    fn two_means_is_seed_deterministic() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin().abs(), (i as f64).cos().abs()]).collect();
        assert_eq!(two_means(&pts, 20, 3).unwrap(), two_means(&pts, 20, 3).unwrap());
    }

    /// Optimal 2-partition over a 1-d sorted fixture by exhaustive split search.
    #[test]
    fn two_means_matches_best_split_in_one_dimension() {
        let xs = [0.02, 0.05, 0.11, 0.13, 0.3, 0.33, 0.62, 0.7, 0.71, 0.95];
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let sse = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let best = (1..xs.len()).map(|k| sse(&xs[..k]) + sse(&xs[k..])).fold(f64::INFINITY, f64::min);
        let km = two_means(&pts, 20, 11).unwrap();
        assert!((km.inertia - best).abs() < 1e-12);
    }

    #[test]
    fn ten_pair_selection() {
        let sims = [0.95, 0.1, 0.5, 0.85, 0.05, 0.6, 0.4, 0.2, 0.7, 0.3];
        let ids = ids(10);
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let (plan, labels) = select_easy_instances(&sims, &refs, 0.4, 0.5).unwrap();
        assert_eq!((plan.n_match, plan.n_unmatch), (2, 2));
        let m: Vec<usize> = labels.iter().filter(|l| l.matching).map(|l| l.pair).collect();
        let u: Vec<usize> = labels.iter().filter(|l| !l.matching).map(|l| l.pair).collect();
        assert_eq!(m, [0, 3]);
        assert_eq!(u, [4, 1]);
        assert_eq!(plan.match_lowerbound, 0.85);
        assert_eq!(plan.unmatch_upperbound, 0.1);
    }

    #[test]
    fn starvation() {
        let ids = ids(10);
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let sims = [0.5; 10];
        assert!(matches!(
            select_easy_instances(&sims, &refs, 0.01, 0.5),
            Err(Error::ClassStarvation { .. })
        ));
        assert!(matches!(
            select_easy_instances(&sims, &refs, 0.4, 1.0),
            Err(Error::ClassStarvation { .. })
        ));
        assert!(matches!(select_easy_instances(&sims, &refs, 1.0, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn ties_break_by_pair_id() {
        let ids = ["d", "b", "c", "a"];
        let sims = [0.5; 4];
        let (_, labels) = select_easy_instances(&sims, &ids, 0.5, 0.5).unwrap();
        assert_eq!(labels[0], EasyLabel { pair: 3, matching: true });
        assert_eq!(labels[1], EasyLabel { pair: 1, matching: false });
    }

    #[test]
    fn profile_examples() {
        let bins = monotonicity_profile(&[0.51, 0.55, 0.58, 1.0, 0.0], &[true, true, false, true, false], 10);
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[5].count, 3);
        assert!((bins[5].fraction().unwrap() - 2.0 / 3.0).abs() < 1e-3);
        assert_eq!(bins[9].count, 1);
        assert_eq!(bins[0].fraction(), Some(0.0));
        assert_eq!(bins[3].fraction(), None);

        let all = monotonicity_profile(&[0.1, 0.5, 0.9], &[true; 3], 10);
        assert!(all.iter().filter_map(ProfileBin::fraction).all(|f| f == 1.0));
    }

    #[test]
    fn threshold_rules() {
        let acc = threshold_accuracy(&[0.9, 0.85, 0.2, 0.1, 0.5], &[true, false, false, false, true], 0.8, 0.3);
        assert_eq!(acc.matching_precision(), Some(0.5));
        assert_eq!(acc.unmatching_accuracy(), Some(1.0));
    }

    proptest! {
        #[test]
        fn selection_partitions_by_similarity(
            sims in prop::collection::vec(0.0f64..1.0, 4..60),
            ratio in 0.1f64..0.9,
            frac in 0.1f64..0.9,
        ) {
            let ids = ids(sims.len());
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            match select_easy_instances(&sims, &refs, ratio, frac) {
                Ok((plan, labels)) => {
                    let n_easy = (ratio * sims.len() as f64).round() as usize;
                    prop_assert_eq!(labels.len(), n_easy);
                    let min_m = labels.iter().filter(|l| l.matching).map(|l| sims[l.pair]).fold(f64::INFINITY, f64::min);
                    let max_u = labels.iter().filter(|l| !l.matching).map(|l| sims[l.pair]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(min_m >= max_u);
                    prop_assert!(plan.unmatch_upperbound <= plan.match_lowerbound);
                    let mut seen: Vec<usize> = labels.iter().map(|l| l.pair).collect();
                    seen.sort_unstable();
                    seen.dedup();
                    prop_assert_eq!(seen.len(), labels.len());
                }
                Err(Error::ClassStarvation { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
