use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use gml_core::easy_label::{easy_accuracy, monotonicity_profile, select_easy_instances, threshold_accuracy, EasyAccuracy};
use gml_core::evaluation::{
    profile_trend, read_pair_labels, score, score_labels, write_echo, write_entropy_curve, write_labels, write_metrics,
    write_profile, write_trail,
};
use gml_core::features::{extract_attribute_features, write_feature_dump};
use gml_core::ingest::{generate_candidates, RecordTable, Workload};
use gml_core::pipeline::{infer, match_fraction, prepare, score_workload, write_fits};
use gml_core::Error;

use crate::config::RunConfig;

const PROFILE_BINS: usize = 10;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(BufWriter::new(file))
}

fn finish(mut w: BufWriter<File>, name: &str) -> Result<()> {
    w.flush().with_context(|| format!("writing {name}"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

pub fn load_workload(config: &RunConfig) -> Result<Workload> {
    let data = &config.data;
    let left = RecordTable::from_csv(&data.left, None)?;
    let right = match &data.right {
        Some(p) => Some(RecordTable::from_csv(p, None)?),
        None => None,
    };
    let pairs = generate_candidates(&left, right.as_ref(), &data.blocking, Path::new("."))?;
    if pairs.is_empty() {
        return Err(Error::Integrity("blocking produced no candidate pairs".into()).into());
    }
    Ok(Workload { left, right, pairs })
}

fn set_workers(config: &RunConfig) -> Result<()> {
    if let Some(n) = config.workers {
        // A second call in the same process keeps the first pool, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<PathBuf> {
    set_workers(config)?;
    let echo = config.echo()?;
    let started = Instant::now();
    let workload = load_workload(config).context("ingest")?;
    let gold = workload.gold_labels();
    let prepared = prepare(workload, &config.features, &config.similarity, &config.inference).context("easy_label")?;
    let prepared_in = started.elapsed();
    let outcome = infer::<f64>(&prepared, &config.inference).context("gradual_inference")?;
    let elapsed = started.elapsed();

    let out = config.out_dir();
    ensure_dir(&out)?;
    let ids: Vec<String> = prepared.workload.pairs.iter().map(|p| p.pair_id.clone()).collect();

    let mut w = create(&out, "labels.csv")?;
    write_labels(&mut w, &ids, &outcome.labels, &outcome.probability, &outcome.iteration, &echo)?;
    finish(w, "labels.csv")?;

    let mut w = create(&out, "trail.csv")?;
    write_trail(&mut w, &outcome.trail, &ids, &echo)?;
    finish(w, "trail.csv")?;

    let mut w = create(&out, "entropy.csv")?;
    write_entropy_curve(&mut w, &outcome.trail, &echo)?;
    finish(w, "entropy.csv")?;

    let mut w = create(&out, "fits.csv")?;
    write_fits(&mut w, &prepared.features, &outcome.fits, &echo)?;
    finish(w, "fits.csv")?;

    let mut w = create(&out, "features.csv")?;
    write_feature_dump(&prepared.features, &mut w, &echo)?;
    finish(w, "features.csv")?;

    let plan = &prepared.easy_plan;
    let fallbacks = outcome.trail.iter().filter(|t| t.fallback).count();
    let mut extra = vec![
        ("pairs".to_string(), ids.len().to_string()),
        ("features".into(), prepared.features.len().to_string()),
        ("est_match_fraction".into(), prepared.est_match_fraction.to_string()),
        ("easy_matching".into(), plan.n_match.to_string()),
        ("easy_unmatching".into(), plan.n_unmatch.to_string()),
        ("match_lowerbound".into(), plan.match_lowerbound.to_string()),
        ("unmatch_upperbound".into(), plan.unmatch_upperbound.to_string()),
        ("iterations".into(), outcome.trail.len().to_string()),
        ("fallbacks".into(), fallbacks.to_string()),
        ("prepare_seconds".into(), format!("{:.3}", prepared_in.as_secs_f64())),
        ("wall_clock_seconds".into(), format!("{:.3}", elapsed.as_secs_f64())),
    ];

    let mut w = create(&out, "metrics.txt")?;
    write_echo(&mut w, &echo)?;
    match &gold {
        Some(gold) => {
            let sims = prepared.record_similarity();
            let profile = monotonicity_profile(&sims, gold, PROFILE_BINS);
            let mut pw = create(&out, "monotonicity.csv")?;
            write_profile(&mut pw, &profile, &echo)?;
            finish(pw, "monotonicity.csv")?;
            let easy = easy_accuracy(&prepared.easy_labels, gold);
            push_accuracy(&mut extra, "easy", &easy);
            let metrics = score_labels(&outcome.labels, gold);
            write_metrics(&mut w, &metrics, &extra)?;
            println!("f1 = {:.4}  precision = {:.4}  recall = {:.4}", metrics.f1, metrics.precision, metrics.recall);
        }
        None => {
            for (k, v) in &extra {
                writeln!(w, "{k} = {v}")?;
            }
            println!("no gold labels; metrics.txt carries run statistics only");
        }
    }
    finish(w, "metrics.txt")?;
    println!(
        "labeled {} pairs ({} easy, {} iterations) in {:.2}s -> {}",
        ids.len(),
        plan.n_match + plan.n_unmatch,
        outcome.trail.len(),
        elapsed.as_secs_f64(),
        out.display()
    );
    Ok(out)
}

fn push_accuracy(extra: &mut Vec<(String, String)>, prefix: &str, acc: &EasyAccuracy) {
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
    extra.push((format!("{prefix}_matching_precision"), fmt(acc.matching_precision())));
    extra.push((format!("{prefix}_unmatching_accuracy"), fmt(acc.unmatching_accuracy())));
}

/// Similarity thresholds to check beside the ratio-based easy labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct Thresholds {
    pub lowerbound: Option<f64>,
    pub upperbound: Option<f64>,
}

pub fn diagnose(config: &RunConfig, thresholds: Thresholds) -> Result<PathBuf> {
    set_workers(config)?;
    let echo = config.echo()?;
    let mut workload = load_workload(config).context("ingest")?;
    let gold = workload
        .gold_labels()
        .ok_or_else(|| Error::Config("diagnose needs gold labels for every candidate pair".into()))?;
    score_workload(&mut workload, &config.features, &config.similarity).context("similarity")?;
    let sims: Vec<f64> = workload.pairs.iter().map(|p| p.record_similarity).collect();

    let out = config.out_dir();
    ensure_dir(&out)?;
    let profile = monotonicity_profile(&sims, &gold, PROFILE_BINS);
    let mut w = create(&out, "monotonicity.csv")?;
    write_profile(&mut w, &profile, &echo)?;
    finish(w, "monotonicity.csv")?;

    let mut report = Vec::new();
    writeln!(report, "pairs = {}", sims.len())?;
    let positives = gold.iter().filter(|&&g| g).count();
    writeln!(report, "equivalent = {positives}")?;
    writeln!(report, "\nsimilarity interval    pairs  equivalent  fraction")?;
    for b in &profile {
        let frac = b.fraction().map(|f| format!("{f:.3}")).unwrap_or_else(|| "-".into());
        writeln!(report, "[{:.1}, {:.1}){:>13}{:>12}{:>10}", b.lower, b.upper, b.count, b.equivalent, frac)?;
    }
    if let Some(rho) = profile_trend(&profile) {
        writeln!(report, "rank correlation of fraction with interval = {rho:.3}")?;
    }

    let mut warnings = Vec::new();
    if positives == 0 || positives == gold.len() {
        let missing = if positives == 0 { "equivalent" } else { "inequivalent" };
        warnings.push(format!("class starvation: gold labels contain no {missing} pairs"));
    }

    let features = extract_attribute_features(&workload, &config.features).context("features")?;
    let ids: Vec<&str> = workload.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let easy = match_fraction(&workload, &features, &config.similarity, config.inference.seed)
        .and_then(|f| select_easy_instances(&sims, &ids, config.inference.easy_ratio, f));
    match easy {
        Ok((plan, labels)) => {
            let acc = easy_accuracy(&labels, &gold);
            writeln!(report, "\neasy labels (ratio {}, est. matching share {:.4})", plan.easy_ratio, plan.est_match_fraction)?;
            write_accuracy(&mut report, &acc, plan.match_lowerbound, plan.unmatch_upperbound)?;
            if acc.unmatching_labeled > 0 && acc.unmatching_correct == 0 {
                warnings.push("class starvation: no easy unmatching label is correct".into());
            }
            if acc.matching_labeled > 0 && acc.matching_correct == 0 {
                warnings.push("class starvation: no easy matching label is correct".into());
            }
        }
        Err(e @ (Error::ClassStarvation { .. } | Error::DegenerateClustering(_))) => {
            warnings.push(e.to_string());
        }
        Err(e) => return Err(anyhow::Error::from(e).context("easy_label")),
    }
    if thresholds.lowerbound.is_some() || thresholds.upperbound.is_some() {
        let lo = thresholds.lowerbound.unwrap_or(f64::INFINITY);
        let hi = thresholds.upperbound.unwrap_or(f64::NEG_INFINITY);
        let acc = threshold_accuracy(&sims, &gold, lo, hi);
        writeln!(report, "\nfixed thresholds")?;
        write_accuracy(&mut report, &acc, lo, hi)?;
    }
    for w in &warnings {
        writeln!(report, "\nwarning: {w}")?;
        eprintln!("warning: {w}");
    }

    let text = String::from_utf8(report).expect("report is UTF-8");
    print!("{text}");
    let mut w = create(&out, "diagnose.txt")?;
    write_echo(&mut w, &echo)?;
    w.write_all(text.as_bytes())?;
    finish(w, "diagnose.txt")?;
    Ok(out)
}

fn write_accuracy(out: &mut Vec<u8>, acc: &EasyAccuracy, lowerbound: f64, upperbound: f64) -> std::io::Result<()> {
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
    writeln!(
        out,
        "  matching   (similarity >= {lowerbound:.4}): {} pairs, precision {}",
        acc.matching_labeled,
        fmt(acc.matching_precision())
    )?;
    writeln!(
        out,
        "  unmatching (similarity <= {upperbound:.4}): {} pairs, accuracy {}",
        acc.unmatching_labeled,
        fmt(acc.unmatching_accuracy())
    )
}

pub fn eval(labels: &Path, gold: &Path, out: Option<&Path>) -> Result<()> {
    let l = read_pair_labels(labels)?;
    let g = read_pair_labels(gold)?;
    let metrics = score(&l, &g)?;
    let mut buf = Vec::new();
    write_metrics(&mut buf, &metrics, &[])?;
    print!("{}", String::from_utf8_lossy(&buf));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut w = create(dir, "metrics.txt")?;
        write_echo(&mut w, &[format!("labels = {}", labels.display()), format!("gold = {}", gold.display())])?;
        w.write_all(&buf)?;
        finish(w, "metrics.txt")?;
    }
    Ok(())
}
