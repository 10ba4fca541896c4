//! Feature extraction: attribute-similarity features (including LCS on long attributes) and
//! Same/Diff token features filtered by IDF.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AttributeMetric, Workload};
use crate::similarity::{lcs_tokens, token_set, SimilarityMetric};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    AttributeSimilarity { attribute: String, metric: SimilarityMetric },
    SameToken(String),
    DiffToken(String),
}

impl FeatureKind {
    pub fn id(&self) -> String {
        match self {
            FeatureKind::AttributeSimilarity { attribute, metric } => format!("attr:{attribute}:{metric}"),
            FeatureKind::SameToken(t) => format!("same:{t}"),
            FeatureKind::DiffToken(t) => format!("diff:{t}"),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeatureKind::AttributeSimilarity { .. } => "attribute",
            FeatureKind::SameToken(_) => "same_token",
            FeatureKind::DiffToken(_) => "diff_token",
        }
    }

    pub fn is_token(&self) -> bool {
        !matches!(self, FeatureKind::AttributeSimilarity { .. })
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// A feature and its value on each pair it applies to.
///
/// `pairs` holds ascending pair indices into the workload; `values[i]` belongs to `pairs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub id: String,
    pub kind: FeatureKind,
    pub pairs: Vec<usize>,
    pub values: Vec<f64>,
}

impl Feature {
    fn new(kind: FeatureKind, pairs: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(pairs.len(), values.len());
        Self {
            id: kind.id(),
            kind,
            pairs,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn value_of(&self, pair: usize) -> Option<f64> {
        self.pairs.binary_search(&pair).ok().map(|i| self.values[i])
    }
}

/// Which features to extract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    /// Attribute/metric assignments, one feature each.
    pub attribute_metrics: Vec<AttributeMetric>,
    /// Long-string attributes: each gets an LCS feature and feeds the token features.
    #[serde(default)]
    pub long_attributes: Vec<String>,
    #[serde(default = "default_idf_threshold")]
    pub idf_threshold: f64,
    #[serde(default = "default_true")]
    pub token_features: bool,
}

pub fn default_idf_threshold() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl FeaturePlan {
    pub fn validate(&self, workload: &Workload) -> Result<()> {
        if self.attribute_metrics.is_empty() {
            return Err(Error::Config("feature plan has no attribute metrics".into()));
        }
        for a in self.attribute_metrics.iter().map(|m| &m.attribute).chain(&self.long_attributes) {
            workload.attribute_columns(a)?;
        }
        if self.attribute_metrics.iter().any(|m| m.metric == SimilarityMetric::Lcs) {
            return Err(Error::Config("LCS features come from `long_attributes`, not the metric list".into()));
        }
        if !self.idf_threshold.is_finite() || self.idf_threshold < 0.0 {
            return Err(Error::Config(format!("idf threshold must be nonnegative, got {}", self.idf_threshold)));
        }
        Ok(())
    }
}

/// Document frequencies over records, one document per record's long-attribute text.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub doc_count: usize,
    pub token_doc_freq: HashMap<String, usize>,
    pub threshold: f64,
}

impl IdfTable {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a BTreeSet<String>>, threshold: f64) -> Self {
        let mut doc_count = 0;
        let mut token_doc_freq: HashMap<String, usize> = HashMap::new();
        for d in docs {
            doc_count += 1;
            for t in d {
                *token_doc_freq.entry(t.clone()).or_default() += 1;
            }
        }
        Self {
            doc_count,
            token_doc_freq,
            threshold,
        }
    }

    /// Builds the table over both tables of `workload` (a self-join counts its table once).
    pub fn build(workload: &Workload, long_attributes: &[String], threshold: f64) -> Result<Self> {
        let docs = RecordTokens::build(workload, long_attributes)?;
        let right = if workload.is_self_join() { &[][..] } else { &docs.right[..] };
        Ok(Self::from_documents(docs.left.iter().chain(right), threshold))
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        let df = *self.token_doc_freq.get(token)?;
        Some((self.doc_count as f64 / df as f64).ln())
    }

    pub fn retains(&self, token: &str) -> bool {
        self.idf(token).is_some_and(|v| v >= self.threshold)
    }
}

/// Token sets of each record's concatenated long attributes.
struct RecordTokens {
    left: Vec<BTreeSet<String>>,
    right: Vec<BTreeSet<String>>,
}

impl RecordTokens {
    fn build(workload: &Workload, attributes: &[String]) -> Result<Self> {
        let cols = attributes
            .iter()
            .map(|a| workload.attribute_columns(a))
            .collect::<Result<Vec<_>>>()?;
        let left = (0..workload.left.len())
            .map(|i| doc_tokens(cols.iter().filter_map(|c| workload.left.value(i, c.0))))
            .collect();
        let right = if workload.is_self_join() {
            Vec::new()
        } else {
            let t = workload.right_table();
            (0..t.len())
                .map(|i| doc_tokens(cols.iter().filter_map(|c| t.value(i, c.1))))
                .collect()
        };
        Ok(Self { left, right })
    }

    fn right(&self, self_join: bool) -> &[BTreeSet<String>] {
        if self_join {
            &self.left
        } else {
            &self.right
        }
    }
}

fn doc_tokens<'a>(values: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    values.flat_map(|v| token_set(v).into_iter()).collect()
}

/// One feature per `(attribute, metric)` in the plan, followed by one LCS feature per long
/// attribute. Every pair gets a value in every attribute feature; a missing value scores 0.
///
/// LCS run lengths are scaled into `[0, 1]` by the longest run observed for that attribute.
pub fn extract_attribute_features(workload: &Workload, plan: &FeaturePlan) -> Result<Vec<Feature>> {
    plan.validate(workload)?;
    let all: Vec<usize> = (0..workload.pairs.len()).collect();
    let mut out = Vec::new();
    for am in &plan.attribute_metrics {
        let (l, r) = workload.attribute_columns(&am.attribute)?;
        let values: Vec<f64> = workload
            .pairs
            .par_iter()
            .map(|p| match workload.values(p, l, r) {
                (Some(a), Some(b)) => am.metric.score(a, b).clamp(0.0, 1.0),
                _ => 0.0,
            })
            .collect();
        out.push(Feature::new(
            FeatureKind::AttributeSimilarity {
                attribute: am.attribute.clone(),
                metric: am.metric,
            },
            all.clone(),
            values,
        ));
    }
    for attr in &plan.long_attributes {
        let (l, r) = workload.attribute_columns(attr)?;
        let raw: Vec<usize> = workload
            .pairs
            .par_iter()
            .map(|p| match workload.values(p, l, r) {
                (Some(a), Some(b)) => lcs_tokens(a, b),
                _ => 0,
            })
            .collect();
        let max = raw.iter().copied().max().unwrap_or(0);
        let values = raw
            .iter()
            .map(|&v| if max == 0 { 0.0 } else { v as f64 / max as f64 })
            .collect();
        out.push(Feature::new(
            FeatureKind::AttributeSimilarity {
                attribute: attr.clone(),
                metric: SimilarityMetric::Lcs,
            },
            all.clone(),
            values,
        ));
    }
    Ok(out)
}

/// Same(o)/Diff(o) features for every token retained by `idf`, ordered by token with Same
/// before Diff. Values are left at 0 until [`align_token_feature_values`] runs.
pub fn extract_token_features(workload: &Workload, idf: &IdfTable, long_attributes: &[String]) -> Result<Vec<Feature>> {
    let docs = RecordTokens::build(workload, long_attributes)?;
    let right_docs = docs.right(workload.is_self_join());
    let mut same: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut diff: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in workload.pairs.iter().enumerate() {
        let (a, b) = (&docs.left[p.left], &right_docs[p.right]);
        for t in a.union(b) {
            if !idf.retains(t) {
                continue;
            }
            let target = if a.contains(t) && b.contains(t) { &mut same } else { &mut diff };
            target.entry(t.as_str()).or_default().push(i);
        }
    }
    let tokens: BTreeSet<&str> = same.keys().chain(diff.keys()).copied().collect();
    let mut out = Vec::new();
    for t in tokens {
        if let Some(pairs) = same.remove(t) {
            let n = pairs.len();
            out.push(Feature::new(FeatureKind::SameToken(t.to_string()), pairs, vec![0.0; n]));
        }
        if let Some(pairs) = diff.remove(t) {
            let n = pairs.len();
            out.push(Feature::new(FeatureKind::DiffToken(t.to_string()), pairs, vec![0.0; n]));
        }
    }
    Ok(out)
}

/// Sets every token feature's value on a pair to that pair's record similarity.
pub fn align_token_feature_values(features: &mut [Feature], workload: &Workload) {
    for f in features.iter_mut().filter(|f| f.kind.is_token()) {
        for (v, &p) in f.values.iter_mut().zip(&f.pairs) {
            *v = workload.pairs[p].record_similarity;
        }
    }
}

/// Runs the full plan: attribute features, then aligned token features.
pub fn extract_features(workload: &Workload, plan: &FeaturePlan) -> Result<Vec<Feature>> {
    let mut features = extract_attribute_features(workload, plan)?;
    if plan.token_features && !plan.long_attributes.is_empty() {
        let idf = IdfTable::build(workload, &plan.long_attributes, plan.idf_threshold)?;
        let mut tokens = extract_token_features(workload, &idf, &plan.long_attributes)?;
        align_token_feature_values(&mut tokens, workload);
        features.extend(tokens);
    }
    Ok(features)
}

/// Per-pair attribute-similarity vectors, in feature order.
pub fn attribute_vectors(features: &[Feature], n_pairs: usize) -> Vec<Vec<f64>> {
    let attrs: Vec<&Feature> = features
        .iter()
        .filter(|f| !f.kind.is_token() && f.len() == n_pairs)
        .collect();
    (0..n_pairs)
        .map(|i| attrs.iter().map(|f| f.values[i]).collect())
        .collect()
}

/// Writes `feature_id,kind,pairs` rows.
pub fn write_feature_dump<W: Write>(features: &[Feature], mut out: W, echo: &[String]) -> std::io::Result<()> {
    crate::evaluation::write_echo(&mut out, echo)?;
    writeln!(out, "feature_id,kind,pairs")?;
    for f in features {
        writeln!(out, "{},{},{}", csv_field(&f.id), f.kind.label(), f.len())?;
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{pairs_from_rows, PairRow, RecordTable};
    use proptest::prelude::*;

    fn workload(l: &str, r: &str, pairs: &[(&str, &str)]) -> Workload {
        let left = RecordTable::from_reader(l.as_bytes(), "l", None).unwrap();
        let right = RecordTable::from_reader(r.as_bytes(), "r", None).unwrap();
        let rows: Vec<PairRow> = pairs
            .iter()
            .map(|(a, b)| PairRow { left_id: a.to_string(), right_id: b.to_string(), gold: None })
            .collect();
        let pairs = pairs_from_rows(&left, &right, &rows, false).unwrap();
        Workload { left, right: Some(right), pairs }
    }

    fn am(attribute: &str, metric: SimilarityMetric) -> AttributeMetric {
        AttributeMetric { attribute: attribute.into(), metric }
    }

    fn plan(metrics: Vec<AttributeMetric>, long: &[&str]) -> FeaturePlan {
        FeaturePlan {
            attribute_metrics: metrics,
            long_attributes: long.iter().map(|s| s.to_string()).collect(),
            idf_threshold: 1.0,
            token_features: true,
        }
    }

    const BIB_L: &str = "id,title,authors,venue,year\n\
        l1,mining association rules,agrawal srikant,vldb,1994\n\
        l2,query optimization survey,chaudhuri,pods,1998\n\
        l3,data cube operator,gray bosworth,,1996\n";
    const BIB_R: &str = "id,title,authors,venue,year\n\
        r1,mining association rules fast,agrawal,vldb conf,1994\n\
        r2,query optimizers overview,chaudhuri s,pods,1998\n\
        r3,the data cube,gray,icde,1996\n";

    fn bib() -> Workload {
        workload(BIB_L, BIB_R, &[("l1", "r1"), ("l2", "r2"), ("l3", "r3")])
    }

    #[test]
    fn one_feature_per_plan_entry() {
        let w = bib();
        let f = extract_attribute_features(&w, &plan(vec![am("title", SimilarityMetric::Jaccard)], &[])).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].len(), 3);
        assert_eq!(f[0].id, "attr:title:jaccard");
    }

    #[test]
    fn bibliographic_plan_has_seven_attribute_features() {
        use SimilarityMetric::*;
        let w = bib();
        let p = plan(
            vec![
                am("title", Jaccard),
                am("authors", Jaccard),
                am("year", Jaccard),
                am("title", JaroWinkler),
                am("authors", JaroWinkler),
                am("venue", JaroWinkler),
            ],
            &["title"],
        );
        let f = extract_attribute_features(&w, &p).unwrap();
        assert_eq!(f.len(), 7);
        assert_eq!(f[6].kind, FeatureKind::AttributeSimilarity { attribute: "title".into(), metric: Lcs });
        assert!(f.iter().all(|f| f.len() == 3 && f.values.iter().all(|v| (0.0..=1.0).contains(v))));
        // longest title run is 3 tokens (l1/r1); l3/r3 share "data cube" = 2
        assert_eq!(f[6].values, vec![1.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn missing_value_scores_zero() {
        let w = bib();
        let f = extract_attribute_features(&w, &plan(vec![am("venue", SimilarityMetric::Edit)], &[])).unwrap();
        assert_eq!(f[0].values[2], 0.0);
    }

    #[test]
    fn unknown_attribute_is_config_error() {
        let w = bib();
        let err = extract_attribute_features(&w, &plan(vec![am("isbn", SimilarityMetric::Edit)], &[])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn idf_arithmetic() {
        let docs: Vec<BTreeSet<String>> = [["rare", "common"].as_slice(), &["common"], &["common"], &["common"]]
            .iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect();
        let idf = IdfTable::from_documents(&docs, 1.0);
        assert!((idf.idf("rare").unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(idf.retains("rare"));
        assert_eq!(idf.idf("common"), Some(0.0));
        assert!(!idf.retains("common"));
    }

    #[test]
    fn same_and_diff_tokens() {
        let w = workload(
            "id,t\na,zebra apple\nb,x1\nc,x2\nd,x3\n",
            "id,t\ne,zebra\nf,x4\ng,x5\nh,x6\n",
            &[("a", "e"), ("b", "f")],
        );
        let idf = IdfTable::build(&w, &["t".into()], 1.0).unwrap();
        let f = extract_token_features(&w, &idf, &["t".into()]).unwrap();
        let ids: Vec<_> = f.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["diff:apple", "diff:x1", "diff:x4", "same:zebra"]);
        assert_eq!(f[3].pairs, vec![0]);
    }

    #[test]
    fn ubiquitous_token_is_dropped() {
        let w = workload("id,t\na,the x\nb,the y\n", "id,t\nc,the x\nd,the z\n", &[("a", "c"), ("b", "d")]);
        let idf = IdfTable::build(&w, &["t".into()], 0.5).unwrap();
        let f = extract_token_features(&w, &idf, &["t".into()]).unwrap();
        assert!(f.iter().all(|f| !f.id.ends_with(":the")));
    }

    #[test]
    fn token_values_follow_record_similarity() {
        let mut w = bib();
        for (p, s) in w.pairs.iter_mut().zip([0.9, 0.4, 0.55]) {
            p.record_similarity = s;
        }
        let p = FeaturePlan { idf_threshold: 0.0, ..plan(vec![am("title", SimilarityMetric::Jaccard)], &["title"]) };
        let f = extract_features(&w, &p).unwrap();
        let mining = f.iter().find(|f| f.id == "same:mining").unwrap();
        assert_eq!(mining.values, vec![0.9]);
        let fast = f.iter().find(|f| f.id == "diff:fast").unwrap();
        assert_eq!(fast.values, vec![0.9]);
        for tf in f.iter().filter(|f| f.kind.is_token()) {
            for (&pi, &v) in tf.pairs.iter().zip(&tf.values) {
                assert_eq!(v, w.pairs[pi].record_similarity);
            }
        }
    }

    #[test]
    fn feature_dump_format() {
        let w = bib();
        let f = extract_attribute_features(&w, &plan(vec![am("title", SimilarityMetric::Jaccard)], &[])).unwrap();
        let mut buf = Vec::new();
        write_feature_dump(&f, &mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "feature_id,kind,pairs\nattr:title:jaccard,attribute,3\n");
    }

    proptest! {
        #[test]
        fn same_diff_exclusive_and_covering(
            left in prop::collection::vec("[a-e]( [a-e]){0,3}", 2..6),
            right in prop::collection::vec("[a-e]( [a-e]){0,3}", 2..6),
        ) {
            let l: String = std::iter::once("id,t".to_string())
                .chain(left.iter().enumerate().map(|(i, t)| format!("l{i},{t}")))
                .collect::<Vec<_>>().join("\n");
            let r: String = std::iter::once("id,t".to_string())
                .chain(right.iter().enumerate().map(|(i, t)| format!("r{i},{t}")))
                .collect::<Vec<_>>().join("\n");
            let ids: Vec<(String, String)> = (0..left.len())
                .flat_map(|i| (0..right.len()).map(move |j| (format!("l{i}"), format!("r{j}"))))
                .collect();
            let refs: Vec<(&str, &str)> = ids.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let w = workload(&l, &r, &refs);
            let p = FeaturePlan { idf_threshold: 0.0, ..plan(vec![am("t", SimilarityMetric::Jaccard)], &["t"]) };
            let f = extract_features(&w, &p).unwrap();
            let ids: BTreeSet<&str> = f.iter().map(|f| f.id.as_str()).collect();
            prop_assert_eq!(ids.len(), f.len());
            let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
            for tf in f.iter().filter(|f| f.kind.is_token()) {
                let tok = match &tf.kind { FeatureKind::SameToken(t) | FeatureKind::DiffToken(t) => t.clone(), _ => unreachable!() };
                for &pi in &tf.pairs {
                    prop_assert!(seen.insert((tok.clone(), pi)), "pair {} in both Same and Diff of {}", pi, tok);
                }
            }
            for i in 0..w.pairs.len() {
                prop_assert!(f.iter().any(|f| f.value_of(i).is_some()));
            }
        }
    }
}
