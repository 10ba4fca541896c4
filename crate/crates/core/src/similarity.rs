//! String and numeric similarity kernels.
//!
//! Every metric is symmetric and maps into `[0, 1]`, except [`lcs_tokens`], which returns a raw
//! token count that the feature layer rescales per attribute.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Lowercases and splits on anything that is not alphanumeric, dropping empty tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(s: &str) -> HashSet<String> {
    tokenize(s).into_iter().collect()
}

/// Jaccard coefficient of the two token sets; two empty sets score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    jaccard_sets(&token_set(a), &token_set(b))
}

pub fn jaccard_sets(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Jaro similarity with the Winkler common-prefix boost (prefix up to 4, scale 0.1).
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    strsim::jaro_winkler(&a.to_lowercase(), &b.to_lowercase())
}

/// `1 - levenshtein / max_len` over characters; two empty strings score 1.
pub fn normalized_edit_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

/// Length, in tokens, of the longest run of consecutive tokens shared by both strings.
pub fn lcs_tokens(a: &str, b: &str) -> usize {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() || tb.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; tb.len() + 1];
    let mut cur = vec![0usize; tb.len() + 1];
    let mut best = 0;
    for x in &ta {
        for (j, y) in tb.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Relative-difference similarity of two numbers; unparseable or non-finite input scores 0.
pub fn number_similarity(a: &str, b: &str) -> f64 {
    let (Ok(x), Ok(y)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) else {
        return 0.0;
    };
    if !x.is_finite() || !y.is_finite() {
        return 0.0;
    }
    let scale = x.abs().max(y.abs()).max(1.0);
    (1.0 - (x - y).abs() / scale).clamp(0.0, 1.0)
}

/// Arithmetic mean of token Jaccard and normalized edit similarity.
pub fn hybrid(a: &str, b: &str) -> f64 {
    0.5 * (jaccard(a, b) + normalized_edit_similarity(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    Jaccard,
    JaroWinkler,
    Edit,
    Lcs,
    Number,
    Hybrid,
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 6] = [
        SimilarityMetric::Jaccard,
        SimilarityMetric::JaroWinkler,
        SimilarityMetric::Edit,
        SimilarityMetric::Lcs,
        SimilarityMetric::Number,
        SimilarityMetric::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Jaccard => "jaccard",
            SimilarityMetric::JaroWinkler => "jaro_winkler",
            SimilarityMetric::Edit => "edit",
            SimilarityMetric::Lcs => "lcs",
            SimilarityMetric::Number => "number",
            SimilarityMetric::Hybrid => "hybrid",
        }
    }

    /// Raw score. For [`SimilarityMetric::Lcs`] this is the token count, not a normalized value.
    pub fn score(self, a: &str, b: &str) -> f64 {
        match self {
            SimilarityMetric::Jaccard => jaccard(a, b),
            SimilarityMetric::JaroWinkler => jaro_winkler(a, b),
            SimilarityMetric::Edit => normalized_edit_similarity(a, b),
            SimilarityMetric::Lcs => lcs_tokens(a, b) as f64,
            SimilarityMetric::Number => number_similarity(a, b),
            SimilarityMetric::Hybrid => hybrid(a, b),
        }
    }

    pub fn is_normalized(self) -> bool {
        self != SimilarityMetric::Lcs
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SimilarityMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown similarity metric `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook Jaro-Winkler, written independently of the library used above.
    fn jaro_winkler_oracle(a: &str, b: &str) -> f64 {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        if a.is_empty() || b.is_empty() {
            return if a.is_empty() && b.is_empty() { 1.0 } else { 0.0 };
        }
        let window = (a.len().max(b.len()) / 2).saturating_sub(1);
        let mut a_hit = vec![false; a.len()];
        let mut b_hit = vec![false; b.len()];
        let mut matches = 0.0;
        for i in 0..a.len() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(b.len());
            for j in lo..hi {
                if !b_hit[j] && a[i] == b[j] {
                    a_hit[i] = true;
                    b_hit[j] = true;
                    matches += 1.0;
                    break;
                }
            }
        }
        if matches == 0.0 {
            return 0.0;
        }
        let am: Vec<char> = (0..a.len()).filter(|&i| a_hit[i]).map(|i| a[i]).collect();
        let bm: Vec<char> = (0..b.len()).filter(|&j| b_hit[j]).map(|j| b[j]).collect();
        // Out-of-order matches, halved with integer division as in the common implementations.
        let t = (am.iter().zip(&bm).filter(|(x, y)| x != y).count() / 2) as f64;
        let jaro = (matches / a.len() as f64 + matches / b.len() as f64 + (matches - t) / matches) / 3.0;
        let prefix = a.iter().zip(&b).take(4).take_while(|(x, y)| x == y).count() as f64;
        // Winkler's boost only applies above the 0.7 threshold.
        if jaro > 0.7 {
            jaro + prefix * 0.1 * (1.0 - jaro)
        } else {
            jaro
        }
    }

    fn levenshtein_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    /// Brute force over every pair of token windows.
    fn lcs_oracle(a: &str, b: &str) -> usize {
        let ta = tokenize(a);
        let tb = tokenize(b);
        let mut best = 0;
        for i in 0..ta.len() {
            for j in 0..tb.len() {
                for len in 1..=(ta.len() - i).min(tb.len() - j) {
                    if ta[i..i + len] == tb[j..j + len] {
                        best = best.max(len);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard("fast algorithms", "fast algorithms"), 1.0);
        assert_eq!(jaccard("a b c", "b c d"), 0.5);
        assert_eq!(jaccard("x", "y"), 0.0);
        assert_eq!(jaccard("", ""), 1.0);
    }

    #[test]
    fn jaro_winkler_examples() {
        assert_eq!(jaro_winkler("dixon", "dixon"), 1.0);
        let v = jaro_winkler("MARTHA", "MARHTA");
        assert!((v - jaro_winkler_oracle("MARTHA", "MARHTA")).abs() < 1e-12);
        assert!((v - 0.9611).abs() < 1e-4, "{v}");
        assert_eq!(jaro_winkler("", "abc"), 0.0);
    }

    #[test]
    fn edit_examples() {
        let v = normalized_edit_similarity("kitten", "sitting");
        let oracle = 1.0 - levenshtein_oracle("kitten", "sitting") as f64 / 7.0;
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.5714).abs() < 1e-4);
        assert_eq!(normalized_edit_similarity("venue", "venue"), 1.0);
        assert_eq!(normalized_edit_similarity("a", ""), 0.0);
        assert_eq!(normalized_edit_similarity("", ""), 1.0);
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_tokens("one two three four five", "one two three four five"), 5);
        let a = "a statistical information grid approach";
        let b = "statistical information grid method";
        assert_eq!(lcs_oracle(a, b), 3);
        assert_eq!(lcs_tokens(a, b), 3);
        assert_eq!(lcs_tokens("alpha beta", "gamma delta"), 0);
    }

    #[test]
    fn number_examples() {
        assert_eq!(number_similarity("240", "240"), 1.0);
        assert_eq!(number_similarity("200", "100"), 0.5);
        assert_eq!(number_similarity("n/a", "200"), 0.0);
        assert_eq!(number_similarity("inf", "200"), 0.0);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in SimilarityMetric::ALL {
            assert_eq!(m.name().parse::<SimilarityMetric>().unwrap(), m);
        }
        assert!("soundex".parse::<SimilarityMetric>().is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-cA-C ,.]{0,12}").unwrap()
    }

    proptest! {
        #[test]
        fn metrics_symmetric_in_range(a in text(), b in text()) {
            for m in SimilarityMetric::ALL {
                let ab = m.score(&a, &b);
                let ba = m.score(&b, &a);
                prop_assert!((ab - ba).abs() < 1e-12, "{m} not symmetric on {a:?} {b:?}");
                if m.is_normalized() {
                    prop_assert!((0.0..=1.0).contains(&ab));
                }
            }
        }

        #[test]
        fn identity_on_nonempty(a in "[a-z]{1,6}( [a-z]{1,6}){0,3}") {
            for m in [SimilarityMetric::Jaccard, SimilarityMetric::JaroWinkler, SimilarityMetric::Edit, SimilarityMetric::Hybrid] {
                prop_assert!((m.score(&a, &a) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn jaro_winkler_matches_oracle(a in "[a-d]{0,8}", b in "[a-d]{0,8}") {
            prop_assert!((jaro_winkler(&a, &b) - jaro_winkler_oracle(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn edit_matches_oracle(a in "[a-d]{0,8}", b in "[a-d]{0,8}") {
            let n = a.chars().count().max(b.chars().count());
            let expected = if n == 0 { 1.0 } else { 1.0 - levenshtein_oracle(&a, &b) as f64 / n as f64 };
            prop_assert!((normalized_edit_similarity(&a, &b) - expected).abs() < 1e-12);
        }

        #[test]
        fn lcs_matches_oracle(a in "([a-c] ){0,6}", b in "([a-c] ){0,6}") {
            prop_assert_eq!(lcs_tokens(&a, &b), lcs_oracle(&a, &b));
        }
    }
}
