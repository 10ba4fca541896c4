//! End-to-end orchestration shared by the command line and the tests.

use serde::{Deserialize, Serialize};

use crate::easy_label::{
    estimate_class_proportion, select_easy_instances, EasyLabel, EasyLabelingPlan,
};
use crate::error::{Error, Result};
use crate::features::{attribute_vectors, extract_features, Feature, FeaturePlan};
use crate::inference::{gradual_inference_loop, FactorGraph, GmlConfig, TrailEntry, VariableState};
use crate::ingest::{aggregate_record_similarity, AttributeMetric, AttributeWeighting, Workload};
use crate::Scalar;

/// How record similarity is aggregated and how the matching share is obtained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilaritySettings {
    /// Metrics averaged per attribute. Defaults to the feature plan's metric list.
    pub metrics: Option<Vec<AttributeMetric>>,
    /// Skip clustering and use this matching share for the easy instances.
    pub match_fraction: Option<f64>,
}

/// Everything computed before the loop starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub workload: Workload,
    pub weights: AttributeWeighting,
    pub features: Vec<Feature>,
    pub est_match_fraction: f64,
    pub easy_plan: EasyLabelingPlan,
    pub easy_labels: Vec<EasyLabel>,
}

impl Prepared {
    pub fn record_similarity(&self) -> Vec<f64> {
        self.workload.pairs.iter().map(|p| p.record_similarity).collect()
    }
}

/// Attribute weights plus record similarity written into every pair.
pub fn score_workload(workload: &mut Workload, plan: &FeaturePlan, similarity: &SimilaritySettings) -> Result<AttributeWeighting> {
    plan.validate(workload)?;
    let metrics = similarity.metrics.clone().unwrap_or_else(|| plan.attribute_metrics.clone());
    if metrics.is_empty() {
        return Err(Error::Config("no record-similarity metrics configured".into()));
    }
    let mut attributes: Vec<String> = metrics.iter().map(|m| m.attribute.clone()).collect();
    attributes.sort();
    attributes.dedup();
    let weights = AttributeWeighting::from_distinct_values(workload, &attributes)?;
    aggregate_record_similarity(workload, &metrics, &weights)?;
    Ok(weights)
}

/// Matching share from the settings, or clustered from the attribute features.
pub fn match_fraction(workload: &Workload, features: &[Feature], similarity: &SimilaritySettings, seed: u64) -> Result<f64> {
    match similarity.match_fraction {
        Some(f) if f > 0.0 && f < 1.0 => Ok(f),
        Some(f) => Err(Error::Config(format!("match_fraction must lie in (0, 1), got {f}"))),
        None => {
            let sims: Vec<f64> = workload.pairs.iter().map(|p| p.record_similarity).collect();
            let vectors = attribute_vectors(features, workload.pairs.len());
            estimate_class_proportion(&vectors, &sims, seed)
        }
    }
}

/// Record similarity, features and easy labels.
pub fn prepare(mut workload: Workload, plan: &FeaturePlan, similarity: &SimilaritySettings, config: &GmlConfig) -> Result<Prepared> {
    config.validate()?;
    let weights = score_workload(&mut workload, plan, similarity)?;
    let features = extract_features(&workload, plan)?;
    let sims: Vec<f64> = workload.pairs.iter().map(|p| p.record_similarity).collect();
    let est_match_fraction = match_fraction(&workload, &features, similarity, config.seed)?;
    let ids: Vec<&str> = workload.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let (easy_plan, easy_labels) = select_easy_instances(&sims, &ids, config.easy_ratio, est_match_fraction)?;
    Ok(Prepared {
        workload,
        weights,
        features,
        est_match_fraction,
        easy_plan,
        easy_labels,
    })
}

/// Final state of every pair after a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub labels: Vec<bool>,
    /// Probability behind each label; 1 or 0 for easy instances.
    pub probability: Vec<f64>,
    /// Iteration that labeled each pair, 0 for easy instances.
    pub iteration: Vec<usize>,
    pub trail: Vec<TrailEntry>,
    /// Regression fit of every feature on the final labels.
    pub fits: Vec<FitSummary>,
}

/// Scalar-independent view of one feature's final fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub alpha: f64,
    pub tau: f64,
    pub sigma2: f64,
    pub n_obs: usize,
    pub fittable: bool,
}

/// Builds the factor graph with the easy labels as evidence.
pub fn build_graph<T: Scalar>(pair_ids: Vec<String>, features: &[Feature], easy: &[EasyLabel], config: &GmlConfig) -> Result<FactorGraph<T>> {
    let mut graph = FactorGraph::new(pair_ids, features, T::lit(config.logit_epsilon))?;
    for l in easy {
        graph.label(l.pair, l.matching, 0)?;
    }
    Ok(graph)
}

/// Runs the loop on a prepared workload.
pub fn infer<T: Scalar>(prepared: &Prepared, config: &GmlConfig) -> Result<RunOutcome> {
    let ids = prepared.workload.pairs.iter().map(|p| p.pair_id.clone()).collect();
    let graph = build_graph::<T>(ids, &prepared.features, &prepared.easy_labels, config)?;
    run_graph(graph, config)
}

/// Runs the loop on an already seeded graph and collects the outcome.
pub fn run_graph<T: Scalar>(mut graph: FactorGraph<T>, config: &GmlConfig) -> Result<RunOutcome> {
    let trail = gradual_inference_loop(&mut graph, config)?;
    let n = graph.n_pairs();
    let mut probability = vec![0.0; n];
    let mut labels = vec![false; n];
    let mut iteration = vec![0; n];
    for (p, s) in graph.states().iter().enumerate() {
        match *s {
            VariableState::Evidence { matching, labeled_at } => {
                labels[p] = matching;
                iteration[p] = labeled_at;
                probability[p] = if matching { 1.0 } else { 0.0 };
            }
            VariableState::Inference => {
                return Err(Error::Integrity(format!("pair `{}` left unlabeled", graph.pair_id(p))));
            }
        }
    }
    for t in &trail {
        probability[t.pair] = t.probability;
    }
    let fits = graph
        .fits(T::lit(config.tau_max))?
        .into_iter()
        .map(|f| FitSummary {
            alpha: f.alpha_hat.as_f64(),
            tau: f.tau_hat.as_f64(),
            sigma2: f.sigma2_hat.as_f64(),
            n_obs: f.n_obs,
            fittable: f.fittable,
        })
        .collect();
    Ok(RunOutcome {
        labels,
        probability,
        iteration,
        trail,
        fits,
    })
}

/// `feature_id,alpha,tau,sigma2,n_obs,fittable` rows.
pub fn write_fits<W: std::io::Write>(mut out: W, features: &[Feature], fits: &[FitSummary], echo: &[String]) -> std::io::Result<()> {
    crate::evaluation::write_echo(&mut out, echo)?;
    writeln!(out, "feature_id,alpha,tau,sigma2,n_obs,fittable")?;
    for (f, fit) in features.iter().zip(fits) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            crate::features::csv_field(&f.id),
            fit.alpha,
            fit.tau,
            fit.sigma2,
            fit.n_obs,
            u8::from(fit.fittable)
        )?;
    }
    Ok(())
}
