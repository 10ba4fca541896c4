//! Seeded synthetic workloads with known ground truth.
//!
//! [`planted_workload`] builds features directly from planted sigmoids, so the correct label
//! of every pair is known by construction. [`bibliographic_workload`] generates two record
//! tables of publication-like records with realistic perturbations, for exercising the whole
//! pipeline at arbitrary size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{Feature, FeatureKind};
use crate::ingest::{pair_id, CandidatePair, Record, RecordTable, Workload};
use crate::similarity::SimilarityMetric;

/// Sigmoid planted on one feature: the feature pushes towards matching above `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSigmoid {
    pub alpha: f64,
    pub tau: f64,
    /// Standard deviation of the feature value around the pair's latent score.
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedWorkload {
    pub pair_ids: Vec<String>,
    pub features: Vec<Feature>,
    pub record_similarity: Vec<f64>,
    /// `Σ τ_f (x_f - α_f) ≥ 0` per pair.
    pub gold: Vec<bool>,
}

pub fn default_planting() -> Vec<PlantedSigmoid> {
    vec![
        PlantedSigmoid { alpha: 0.5, tau: 6.0, noise: 0.08 },
        PlantedSigmoid { alpha: 0.45, tau: 4.0, noise: 0.12 },
        PlantedSigmoid { alpha: 0.55, tau: 8.0, noise: 0.10 },
    ]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream simple to reason about
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` pairs with a latent score `s ~ U(0, 1)`; feature `f` takes `clamp(s + N(0, noise_f))`
/// and record similarity is the mean feature value.
pub fn planted_workload(n: usize, planting: &[PlantedSigmoid], seed: u64) -> PlantedWorkload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![Vec::with_capacity(n); planting.len()];
    let mut gold = Vec::with_capacity(n);
    let mut record_similarity = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = rng.gen();
        let mut logit = 0.0;
        let mut sum = 0.0;
        for (f, p) in planting.iter().enumerate() {
            let x = (s + p.noise * normal(&mut rng)).clamp(0.0, 1.0);
            values[f].push(x);
            logit += p.tau * (x - p.alpha);
            sum += x;
        }
        gold.push(logit >= 0.0);
        record_similarity.push(sum / planting.len() as f64);
    }
    let features = values
        .into_iter()
        .enumerate()
        .map(|(f, v)| Feature {
            id: format!("attr:planted{f}:jaccard"),
            kind: FeatureKind::AttributeSimilarity {
                attribute: format!("planted{f}"),
                metric: SimilarityMetric::Jaccard,
            },
            pairs: (0..n).collect(),
            values: v,
        })
        .collect();
    PlantedWorkload {
        pair_ids: (0..n).map(|i| format!("p{i:05}")).collect(),
        features,
        record_similarity,
        gold,
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ra", "ti", "su", "po", "de", "va", "qu", "zen", "tra", "bel", "cor", "fin", "gra", "hum", "jol",
    "mar", "nix", "ost", "pel", "rho",
];

fn pseudo_word(mut i: usize, salt: usize) -> String {
    let mut w = String::new();
    i = i * 7 + salt;
    for _ in 0..(2 + i % 2) {
        w.push_str(SYLLABLES[i % 23]);
        i /= 23;
    }
    w.push_str(&(i % 10).to_string());
    w
}

/// Zipf-like sampler over `0..n` by inverse CDF.
struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|k| {
                acc += 1.0 / (k as f64).powf(s);
                acc
            })
            .collect();
        cdf.iter_mut().for_each(|c| *c /= acc);
        Self { cdf }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

#[derive(Debug, Clone)]
struct Publication {
    title: Vec<String>,
    authors: Vec<(String, String)>,
    venue: usize,
    year: u32,
}

const VENUES: [[&str; 3]; 12] = [
    ["vldb", "very large data bases", "proc vldb"],
    ["sigmod conference", "sigmod", "acm sigmod"],
    ["icde", "data engineering", "proc icde"],
    ["pods", "principles of database systems", "acm pods"],
    ["edbt", "extending database technology", "proc edbt"],
    ["kdd", "knowledge discovery and data mining", "sigkdd"],
    ["cikm", "information and knowledge management", "proc cikm"],
    ["tods", "acm trans database syst", "acm tods"],
    ["vldb journal", "vldb j", "the vldb journal"],
    ["sigmod record", "sigmod rec", "acm sigmod record"],
    ["tkde", "ieee trans knowl data eng", "ieee tkde"],
    ["www", "world wide web", "proc www"],
];

struct BibGenerator {
    rng: ChaCha8Rng,
    words: Vec<String>,
    word_dist: Zipf,
    surnames: Vec<String>,
    surname_dist: Zipf,
}

impl BibGenerator {
    fn new(seed: u64) -> Self {
        let words: Vec<String> = (0..6000).map(|i| pseudo_word(i, 3)).collect();
        let surnames: Vec<String> = (0..3000).map(|i| pseudo_word(i, 11)).collect();
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            word_dist: Zipf::new(words.len(), 0.9),
            surname_dist: Zipf::new(surnames.len(), 0.6),
            words,
            surnames,
        }
    }

    fn word(&mut self) -> String {
        let i = self.word_dist.sample(&mut self.rng);
        self.words[i].clone()
    }

    fn author(&mut self) -> (String, String) {
        let i = self.surname_dist.sample(&mut self.rng);
        let first = ((b'a' + self.rng.gen_range(0..26u8)) as char).to_string() + &pseudo_word(self.rng.gen_range(0..400), 5);
        (first, self.surnames[i].clone())
    }

    fn publication(&mut self) -> Publication {
        let len = self.rng.gen_range(4..=10);
        let title = (0..len).map(|_| self.word()).collect();
        let n_auth = self.rng.gen_range(1..=4);
        let authors = (0..n_auth).map(|_| self.author()).collect();
        Publication {
            title,
            authors,
            venue: self.rng.gen_range(0..VENUES.len()),
            year: self.rng.gen_range(1990..=2010),
        }
    }

    /// A different publication sharing part of `p`'s title and possibly authors and venue.
    fn related(&mut self, p: &Publication) -> Publication {
        let mut q = self.publication();
        let keep = self.rng.gen_range(0.2..0.7);
        for (i, w) in p.title.iter().enumerate() {
            if self.rng.gen_bool(keep) && i < q.title.len() {
                q.title[i] = w.clone();
            }
        }
        if self.rng.gen_bool(0.35) {
            q.authors[0] = p.authors[0].clone();
        }
        if self.rng.gen_bool(0.4) {
            q.venue = p.venue;
            q.year = (p.year as i32 + self.rng.gen_range(-2..=2)) as u32;
        }
        q
    }

    fn typo(&mut self, w: &str) -> String {
        let mut c: Vec<char> = w.chars().collect();
        if c.len() > 2 {
            let i = self.rng.gen_range(0..c.len());
            c[i] = (b'a' + self.rng.gen_range(0..26u8)) as char;
        }
        c.into_iter().collect()
    }

    /// Renders a publication as a record, `noisy` adding the kinds of variation found between
    /// bibliographic sources.
    fn render(&mut self, p: &Publication, noisy: bool) -> Vec<Option<String>> {
        let mut title = Vec::new();
        for w in &p.title {
            if noisy && self.rng.gen_bool(0.08) {
                continue;
            }
            if noisy && self.rng.gen_bool(0.07) {
                title.push(self.typo(w));
            } else {
                title.push(w.clone());
            }
        }
        if noisy && self.rng.gen_bool(0.15) {
            title.push(self.word());
        }
        let mut authors = Vec::new();
        for (i, (first, last)) in p.authors.iter().enumerate() {
            if noisy && i > 0 && self.rng.gen_bool(0.15) {
                continue;
            }
            if noisy && self.rng.gen_bool(0.5) {
                authors.push(format!("{} {last}", &first[..1]));
            } else {
                authors.push(format!("{first} {last}"));
            }
        }
        let venue = if noisy && self.rng.gen_bool(0.3) {
            None
        } else {
            let form = if noisy { self.rng.gen_range(0..3) } else { 0 };
            Some(VENUES[p.venue][form].to_string())
        };
        let year = if noisy && self.rng.gen_bool(0.15) {
            None
        } else if noisy && self.rng.gen_bool(0.1) {
            Some((p.year + 1).to_string())
        } else {
            Some(p.year.to_string())
        };
        vec![Some(title.join(" ")), Some(authors.join(", ")), venue, year]
    }
}

/// Schema of the generated tables.
pub const BIB_ATTRIBUTES: [&str; 4] = ["title", "authors", "venue", "year"];

/// `n` candidate pairs over freshly generated left/right tables; about `match_share` of them
/// refer to the same publication. Gold labels are set on every pair.
pub fn bibliographic_workload(n: usize, match_share: f64, seed: u64) -> Workload {
    let mut g = BibGenerator::new(seed);
    let attrs: Vec<String> = BIB_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    for i in 0..n {
        let p = g.publication();
        let matching = g.rng.gen_bool(match_share);
        let q = if matching { p.clone() } else { g.related(&p) };
        left.push(Record { id: format!("l{i}"), values: g.render(&p, false) });
        right.push(Record { id: format!("r{i}"), values: g.render(&q, true) });
        gold.push(matching);
    }
    let pairs = (0..n)
        .map(|i| CandidatePair {
            pair_id: pair_id(&left[i].id, &right[i].id),
            left: i,
            right: i,
            gold: Some(gold[i]),
            record_similarity: 0.0,
        })
        .collect();
    Workload {
        left: RecordTable::new(attrs.clone(), left).expect("generated ids are unique"),
        right: Some(RecordTable::new(attrs, right).expect("generated ids are unique")),
        pairs,
    }
}

/// Writing helpers for turning a generated workload into files.
pub fn write_table<W: std::io::Write>(table: &RecordTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(table.attributes().iter().cloned());
    w.write_record(&header)?;
    for r in table.records() {
        let mut row = vec![r.id.clone()];
        row.extend(r.values.iter().map(|v| v.clone().unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs<W: std::io::Write>(workload: &Workload, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["left_id", "right_id", "gold"])?;
    let right = workload.right_table();
    for p in &workload.pairs {
        let gold = p.gold.map(|g| if g { "1" } else { "0" }).unwrap_or("");
        w.write_record([&workload.left.records()[p.left].id, &right.records()[p.right].id, gold])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_is_deterministic_and_balanced() {
        let a = planted_workload(200, &default_planting(), 5);
        let b = planted_workload(200, &default_planting(), 5);
        assert_eq!(a.gold, b.gold);
        assert_eq!(a.features, b.features);
        let share = a.gold.iter().filter(|g| **g).count() as f64 / 200.0;
        assert!((0.3..0.7).contains(&share), "{share}");
        assert!(a.features.iter().all(|f| f.values.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn bibliographic_tables_are_consistent() {
        let w = bibliographic_workload(300, 0.3, 1);
        assert_eq!(w.pairs.len(), 300);
        assert_eq!(w.left.len(), 300);
        let matches = w.pairs.iter().filter(|p| p.gold == Some(true)).count();
        assert!((50..130).contains(&matches), "{matches}");
        let again = bibliographic_workload(300, 0.3, 1);
        assert_eq!(w.right.as_ref().unwrap().records(), again.right.as_ref().unwrap().records());
    }
}
