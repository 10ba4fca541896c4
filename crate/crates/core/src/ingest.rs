//! Record tables, candidate pairs, blocking and aggregate record similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{token_set, SimilarityMetric};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    /// Values in schema order; empty cells are `None`.
    pub values: Vec<Option<String>>,
}

/// A table of records sharing one attribute schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    attributes: Vec<String>,
    records: Vec<Record>,
    index: HashMap<String, usize>,
}

impl RecordTable {
    pub fn new(attributes: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::Integrity(format!("record {} has an empty id", i + 1)));
            }
            if r.values.len() != attributes.len() {
                return Err(Error::Integrity(format!(
                    "record `{}` has {} values for {} attributes",
                    r.id,
                    r.values.len(),
                    attributes.len()
                )));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate record id `{}`", r.id)));
            }
        }
        Ok(Self {
            attributes,
            records,
            index,
        })
    }

    /// Reads a comma-separated table whose first column is the record id.
    ///
    /// When `schema` is given every listed attribute must appear in the header.
    pub fn from_csv(path: impl AsRef<Path>, schema: Option<&[String]>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string(), schema)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, name: &str, schema: Option<&[String]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(name, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header.is_empty() {
            return Err(Error::Parse {
                path: name.into(),
                line: 1,
                message: "missing header row".into(),
            });
        }
        let attributes: Vec<String> = header[1..].to_vec();
        if let Some(schema) = schema {
            for a in schema {
                if !attributes.contains(a) {
                    return Err(Error::Config(format!("{name}: attribute `{a}` not in header")));
                }
            }
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| csv_error(name, e))?;
            let id = row.get(0).unwrap_or_default().trim().to_string();
            let values = row
                .iter()
                .skip(1)
                .map(|v| {
                    let v = v.trim();
                    (!v.is_empty()).then(|| v.to_string())
                })
                .collect();
            records.push(Record { id, values });
        }
        Self::new(attributes, records)
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn value(&self, record: usize, attribute: usize) -> Option<&str> {
        self.records[record].values[attribute].as_deref()
    }
}

fn csv_error(name: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            path: name.into(),
            line,
            message: format!("expected {expected_len} columns, found {len}"),
        },
        _ => Error::Parse {
            path: name.into(),
            line,
            message: e.to_string(),
        },
    }
}

/// An unordered candidate pair: a left record and a right record.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub pair_id: String,
    pub left: usize,
    pub right: usize,
    pub gold: Option<bool>,
    pub record_similarity: f64,
}

/// Both sides of an ER task. A single-table (self-join) task uses the same table twice.
#[derive(Debug, Clone)]
pub struct Workload {
    pub left: RecordTable,
    pub right: Option<RecordTable>,
    pub pairs: Vec<CandidatePair>,
}

impl Workload {
    pub fn right_table(&self) -> &RecordTable {
        self.right.as_ref().unwrap_or(&self.left)
    }

    pub fn is_self_join(&self) -> bool {
        self.right.is_none()
    }

    /// Values of `attribute` on both records of a pair.
    pub fn values(&self, pair: &CandidatePair, left_attr: usize, right_attr: usize) -> (Option<&str>, Option<&str>) {
        (
            self.left.value(pair.left, left_attr),
            self.right_table().value(pair.right, right_attr),
        )
    }

    /// Column index of `attribute` in the left and right tables.
    pub fn attribute_columns(&self, attribute: &str) -> Result<(usize, usize)> {
        let l = self.left.attribute_index(attribute);
        let r = self.right_table().attribute_index(attribute);
        match (l, r) {
            (Some(l), Some(r)) => Ok((l, r)),
            _ => Err(Error::Config(format!("unknown attribute `{attribute}`"))),
        }
    }

    pub fn gold_labels(&self) -> Option<Vec<bool>> {
        self.pairs.iter().map(|p| p.gold).collect()
    }
}

/// Candidate generation strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BlockingSpec {
    /// Explicit `left_id,right_id[,gold]` pairs file.
    Pairs { path: String },
    /// All pairs sharing at least `min_overlap` tokens over `attributes`, ignoring tokens that
    /// occur in more than `max_token_df` (fraction) of the records.
    Tokens {
        attributes: Vec<String>,
        #[serde(default = "default_min_overlap")]
        min_overlap: usize,
        #[serde(default = "default_max_df")]
        max_token_df: f64,
        /// Optional `left_id,right_id` list of true matches used as gold labels.
        #[serde(default)]
        matches: Option<String>,
    },
}

fn default_min_overlap() -> usize {
    2
}

fn default_max_df() -> f64 {
    0.1
}

/// One row of a pairs file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRow {
    pub left_id: String,
    pub right_id: String,
    pub gold: Option<bool>,
}

pub fn pair_id(left: &str, right: &str) -> String {
    format!("{left}|{right}")
}

pub fn read_pair_rows(path: impl AsRef<Path>) -> Result<Vec<PairRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pair_rows(file, &path.display().to_string())
}

pub fn parse_pair_rows<R: std::io::Read>(reader: R, name: &str) -> Result<Vec<PairRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(name, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() < 2 || row.len() > 3 {
            return Err(Error::Parse {
                path: name.into(),
                line,
                message: format!("expected 2 or 3 columns, found {}", row.len()),
            });
        }
        let gold = match row.get(2).map(str::trim) {
            None | Some("") => None,
            Some("1") | Some("true") => Some(true),
            Some("0") | Some("false") => Some(false),
            Some(other) => {
                return Err(Error::Parse {
                    path: name.into(),
                    line,
                    message: format!("gold must be 0 or 1, found `{other}`"),
                })
            }
        };
        rows.push(PairRow {
            left_id: row[0].trim().to_string(),
            right_id: row[1].trim().to_string(),
            gold,
        });
    }
    Ok(rows)
}

/// Resolves explicit pair rows against the tables (blocking mode "pairs").
pub fn pairs_from_rows(left: &RecordTable, right: &RecordTable, rows: &[PairRow], self_join: bool) -> Result<Vec<CandidatePair>> {
    let mut seen = HashSet::with_capacity(rows.len());
    let mut pairs = Vec::with_capacity(rows.len());
    for row in rows {
        let l = left
            .get(&row.left_id)
            .ok_or_else(|| Error::Integrity(format!("pairs file references unknown record id `{}`", row.left_id)))?;
        let r = right
            .get(&row.right_id)
            .ok_or_else(|| Error::Integrity(format!("pairs file references unknown record id `{}`", row.right_id)))?;
        let key = if self_join && row.right_id < row.left_id {
            (row.right_id.as_str(), row.left_id.as_str())
        } else {
            (row.left_id.as_str(), row.right_id.as_str())
        };
        if !seen.insert(key) {
            return Err(Error::Integrity(format!(
                "duplicate candidate pair ({}, {})",
                row.left_id, row.right_id
            )));
        }
        pairs.push(CandidatePair {
            pair_id: pair_id(&row.left_id, &row.right_id),
            left: l,
            right: r,
            gold: row.gold,
            record_similarity: 0.0,
        });
    }
    if pairs.is_empty() {
        return Err(Error::Config("candidate set is empty".into()));
    }
    Ok(pairs)
}

/// Shared-token blocking. Output is ordered by left record, then right record.
pub fn token_blocking(
    left: &RecordTable,
    right: &RecordTable,
    attributes: &[String],
    min_overlap: usize,
    max_token_df: f64,
    self_join: bool,
) -> Result<Vec<CandidatePair>> {
    let min_overlap = min_overlap.max(1);
    let tokens_of = |t: &RecordTable| -> Result<Vec<BTreeSet<String>>> {
        let cols = attributes
            .iter()
            .map(|a| t.attribute_index(a).ok_or_else(|| Error::Config(format!("unknown blocking attribute `{a}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..t.len())
            .map(|i| {
                cols.iter()
                    .filter_map(|&c| t.value(i, c))
                    .flat_map(|v| token_set(v).into_iter())
                    .collect()
            })
            .collect())
    };
    let lt = tokens_of(left)?;
    let rt = if self_join { lt.clone() } else { tokens_of(right)? };

    let mut df: HashMap<&str, usize> = HashMap::new();
    for set in lt.iter().chain(if self_join { [].iter() } else { rt.iter() }) {
        for tok in set {
            *df.entry(tok.as_str()).or_default() += 1;
        }
    }
    let docs = if self_join { lt.len() } else { lt.len() + rt.len() };
    let max_df = (max_token_df * docs as f64).max(1.0);
    let keep = |t: &str| df.get(t).is_some_and(|&c| c as f64 <= max_df);

    let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, set) in rt.iter().enumerate() {
        for tok in set.iter().filter(|t| keep(t)) {
            postings.entry(tok.as_str()).or_default().push(j);
        }
    }
    let mut pairs = Vec::new();
    for (i, set) in lt.iter().enumerate() {
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for tok in set.iter().filter(|t| keep(t)) {
            for &j in postings.get(tok.as_str()).into_iter().flatten() {
                if !self_join || j > i {
                    *overlap.entry(j).or_default() += 1;
                }
            }
        }
        for (j, c) in overlap {
            if c >= min_overlap {
                let (lid, rid) = (&left.records()[i].id, &right.records()[j].id);
                pairs.push(CandidatePair {
                    pair_id: pair_id(lid, rid),
                    left: i,
                    right: j,
                    gold: None,
                    record_similarity: 0.0,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Config("blocking produced an empty candidate set".into()));
    }
    Ok(pairs)
}

/// Runs the configured blocker. `base_dir` resolves relative paths in the spec.
pub fn generate_candidates(left: &RecordTable, right: Option<&RecordTable>, blocker: &BlockingSpec, base_dir: &Path) -> Result<Vec<CandidatePair>> {
    let self_join = right.is_none();
    let right = right.unwrap_or(left);
    match blocker {
        BlockingSpec::Pairs { path } => {
            let rows = read_pair_rows(base_dir.join(path))?;
            pairs_from_rows(left, right, &rows, self_join)
        }
        BlockingSpec::Tokens {
            attributes,
            min_overlap,
            max_token_df,
            matches,
        } => {
            let mut pairs = token_blocking(left, right, attributes, *min_overlap, *max_token_df, self_join)?;
            if let Some(m) = matches {
                let gold: HashSet<(String, String)> = read_pair_rows(base_dir.join(m))?
                    .into_iter()
                    .flat_map(|r| {
                        let fwd = (r.left_id.clone(), r.right_id.clone());
                        let back = (r.right_id, r.left_id);
                        if self_join { vec![fwd, back] } else { vec![fwd] }
                    })
                    .collect();
                for p in &mut pairs {
                    let key = (left.records()[p.left].id.clone(), right.records()[p.right].id.clone());
                    p.gold = Some(gold.contains(&key));
                }
            }
            Ok(pairs)
        }
    }
}

/// Normalized attribute weights proportional to distinct non-empty value counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeWeighting {
    pub weights: BTreeMap<String, f64>,
}

impl AttributeWeighting {
    pub fn from_distinct_values(workload: &Workload, attributes: &[String]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for a in attributes {
            let (lc, rc) = workload.attribute_columns(a)?;
            let mut distinct: HashSet<&str> = HashSet::new();
            for i in 0..workload.left.len() {
                distinct.extend(workload.left.value(i, lc));
            }
            if !workload.is_self_join() {
                let right = workload.right_table();
                for i in 0..right.len() {
                    distinct.extend(right.value(i, rc));
                }
            }
            counts.insert(a.clone(), distinct.len() as f64);
        }
        let total: f64 = counts.values().sum();
        if total <= 0.0 {
            return Err(Error::Config("all weighted attributes are empty".into()));
        }
        Ok(Self {
            weights: counts.into_iter().map(|(k, v)| (k, v / total)).collect(),
        })
    }

    pub fn get(&self, attribute: &str) -> f64 {
        self.weights.get(attribute).copied().unwrap_or(0.0)
    }
}

/// An `(attribute, metric)` term of the record similarity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeMetric {
    pub attribute: String,
    pub metric: SimilarityMetric,
}

/// `Σ_a w_a · sim_a`, where `sim_a` averages the metrics configured for attribute `a` and an
/// absent value on either side scores 0. Clamped to `[0, 1]`.
pub struct RecordSimilarity {
    terms: Vec<(usize, usize, SimilarityMetric, f64)>,
}

impl RecordSimilarity {
    pub fn new(workload: &Workload, metrics: &[AttributeMetric], weights: &AttributeWeighting) -> Result<Self> {
        let mut per_attr: BTreeMap<&str, usize> = BTreeMap::new();
        for m in metrics {
            if !m.metric.is_normalized() {
                return Err(Error::Config(format!(
                    "metric `{}` cannot be used for record similarity",
                    m.metric
                )));
            }
            *per_attr.entry(m.attribute.as_str()).or_default() += 1;
        }
        let terms = metrics
            .iter()
            .map(|m| {
                let (l, r) = workload.attribute_columns(&m.attribute)?;
                let w = weights.get(&m.attribute) / per_attr[m.attribute.as_str()] as f64;
                Ok((l, r, m.metric, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    pub fn score(&self, workload: &Workload, pair: &CandidatePair) -> f64 {
        let s: f64 = self
            .terms
            .iter()
            .map(|&(l, r, metric, w)| match workload.values(pair, l, r) {
                (Some(a), Some(b)) => w * metric.score(a, b),
                _ => 0.0,
            })
            .sum();
        s.clamp(0.0, 1.0)
    }
}

/// Computes and stores `record_similarity` on every pair.
pub fn aggregate_record_similarity(workload: &mut Workload, metrics: &[AttributeMetric], weights: &AttributeWeighting) -> Result<()> {
    let sim = RecordSimilarity::new(workload, metrics, weights)?;
    let scores: Vec<f64> = workload.pairs.iter().map(|p| sim.score(workload, p)).collect();
    for (p, s) in workload.pairs.iter_mut().zip(scores) {
        p.record_similarity = s;
    }
    Ok(())
}
