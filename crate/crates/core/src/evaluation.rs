//! Scoring a labeling against gold labels, and the plot-ready output files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::easy_label::ProfileBin;
use crate::error::{Error, Result};
use crate::features::csv_field;
use crate::inference::TrailEntry;

/// Pairwise quality of a labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkloadMetrics {
    /// Pairs labeled matching.
    pub tn_plus: usize,
    /// Equivalent pairs among those labeled matching.
    pub en_plus: usize,
    /// Equivalent pairs labeled unmatching.
    pub en_minus: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl WorkloadMetrics {
    pub fn from_counts(tn_plus: usize, en_plus: usize, en_minus: usize) -> Self {
        let precision = if tn_plus == 0 { 0.0 } else { en_plus as f64 / tn_plus as f64 };
        let equivalent = en_plus + en_minus;
        let recall = if equivalent == 0 { 0.0 } else { en_plus as f64 / equivalent as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tn_plus,
            en_plus,
            en_minus,
            precision,
            recall,
            f1,
        }
    }
}

/// Scores parallel label and gold vectors.
pub fn score_labels(labels: &[bool], gold: &[bool]) -> WorkloadMetrics {
    assert_eq!(labels.len(), gold.len());
    let (mut tn_plus, mut en_plus, mut en_minus) = (0, 0, 0);
    for (&l, &g) in labels.iter().zip(gold) {
        match (l, g) {
            (true, true) => {
                tn_plus += 1;
                en_plus += 1;
            }
            (true, false) => tn_plus += 1,
            (false, true) => en_minus += 1,
            (false, false) => {}
        }
    }
    WorkloadMetrics::from_counts(tn_plus, en_plus, en_minus)
}

/// Scores labels keyed by pair id. Both maps must cover the same ids.
pub fn score(labels: &BTreeMap<String, bool>, gold: &BTreeMap<String, bool>) -> Result<WorkloadMetrics> {
    let missing_gold: Vec<&str> = labels.keys().filter(|k| !gold.contains_key(*k)).map(String::as_str).collect();
    let missing_label: Vec<&str> = gold.keys().filter(|k| !labels.contains_key(*k)).map(String::as_str).collect();
    if !missing_gold.is_empty() || !missing_label.is_empty() {
        let mut msg = String::from("label and gold pair ids differ");
        for (what, ids) in [("without gold", &missing_gold), ("without a label", &missing_label)] {
            if !ids.is_empty() {
                let shown: Vec<&str> = ids.iter().take(10).copied().collect();
                msg.push_str(&format!("; {} {what}: {}", ids.len(), shown.join(", ")));
                if ids.len() > 10 {
                    msg.push_str(", ...");
                }
            }
        }
        return Err(Error::Integrity(msg));
    }
    let (l, g): (Vec<bool>, Vec<bool>) = labels.iter().map(|(k, &v)| (v, gold[k])).unzip();
    Ok(score_labels(&l, &g))
}

/// Spearman rank correlation with average ranks for ties; `None` if either side is constant
/// or fewer than two points are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between bin index and equivalent fraction over nonempty bins.
pub fn profile_trend(profile: &[ProfileBin]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.fraction().map(|f| (i as f64, f)))
        .unzip();
    spearman(&xs, &ys)
}

/// Writes each line as a `# ` comment.
pub fn write_echo<W: Write>(out: &mut W, echo: &[String]) -> std::io::Result<()> {
    for line in echo {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// `iteration,pair_id,probability,entropy,combined_support,label,fallback` rows.
pub fn write_trail<W: Write>(mut out: W, trail: &[TrailEntry], pair_ids: &[String], echo: &[String]) -> std::io::Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "iteration,pair_id,probability,entropy,combined_support,label,fallback")?;
    for t in trail {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.iteration,
            csv_field(&pair_ids[t.pair]),
            t.probability,
            t.entropy,
            t.combined_support,
            u8::from(t.matching),
            u8::from(t.fallback)
        )?;
    }
    Ok(())
}

/// `pair_id,label,probability,iteration` rows in pair order.
pub fn write_labels<W: Write>(
    mut out: W,
    pair_ids: &[String],
    labels: &[bool],
    probability: &[f64],
    iteration: &[usize],
    echo: &[String],
) -> std::io::Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "pair_id,label,probability,iteration")?;
    for (i, id) in pair_ids.iter().enumerate() {
        writeln!(out, "{},{},{},{}", csv_field(id), u8::from(labels[i]), probability[i], iteration[i])?;
    }
    Ok(())
}

/// Entropy-vs-iteration curve.
pub fn write_entropy_curve<W: Write>(mut out: W, trail: &[TrailEntry], echo: &[String]) -> std::io::Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "iteration,entropy")?;
    for t in trail {
        writeln!(out, "{},{}", t.iteration, t.entropy)?;
    }
    Ok(())
}

/// Monotonicity profile; empty bins leave the fraction field blank.
pub fn write_profile<W: Write>(mut out: W, profile: &[ProfileBin], echo: &[String]) -> std::io::Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "lower,upper,count,equivalent,fraction")?;
    for b in profile {
        let frac = b.fraction().map(|f| f.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.count, b.equivalent, frac)?;
    }
    Ok(())
}

/// `key = value` summary of the metrics followed by `extra` entries.
pub fn write_metrics<W: Write>(mut out: W, metrics: &WorkloadMetrics, extra: &[(String, String)]) -> std::io::Result<()> {
    writeln!(out, "precision = {}", metrics.precision)?;
    writeln!(out, "recall = {}", metrics.recall)?;
    writeln!(out, "f1 = {}", metrics.f1)?;
    writeln!(out, "tn_plus = {}", metrics.tn_plus)?;
    writeln!(out, "en_plus = {}", metrics.en_plus)?;
    writeln!(out, "en_minus = {}", metrics.en_minus)?;
    for (k, v) in extra {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

/// Reads a pair-id keyed boolean column.
///
/// Accepts either a `pair_id` column or `left_id,right_id` columns (joined as `left|right`),
/// and takes the value from the first of `label` or `gold` present. Lines starting with `#`
/// are skipped.
pub fn read_pair_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pair_labels(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn parse_pair_labels<R: BufRead>(reader: R, name: &str) -> Result<BTreeMap<String, bool>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { path: name.into(), line: 1, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |n: &str| header.iter().position(|h| h == n);
    let key: Box<dyn Fn(&csv::StringRecord) -> String> = match (col("pair_id"), col("left_id"), col("right_id")) {
        (Some(p), _, _) => Box::new(move |r| r[p].trim().to_string()),
        (None, Some(l), Some(r)) => Box::new(move |rec| crate::ingest::pair_id(rec[l].trim(), rec[r].trim())),
        _ => {
            return Err(Error::Parse {
                path: name.into(),
                line: 1,
                message: "expected a pair_id column or left_id,right_id columns".into(),
            })
        }
    };
    let value = col("label").or_else(|| col("gold")).ok_or_else(|| Error::Parse {
        path: name.into(),
        line: 1,
        message: "expected a label or gold column".into(),
    })?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: name.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let v = match rec.get(value).map(str::trim) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") => false,
            other => {
                return Err(Error::Parse {
                    path: name.into(),
                    line,
                    message: format!("expected 0 or 1, found {:?}", other.unwrap_or("")),
                })
            }
        };
        if out.insert(key(&rec), v).is_some() {
            return Err(Error::Integrity(format!("{name}: duplicate pair id `{}` (line {line})", key(&rec))));
        }
    }
    Ok(out)
}
