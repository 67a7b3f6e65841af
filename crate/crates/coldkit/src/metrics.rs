//! From-scratch n-gram metrics (corpus BLEU-1..4, ROUGE-L, CIDEr) plus
//! the spatial-term perturbation harness.
//!
//! BLEU is corpus-level with no smoothing: a zero clipped precision at
//! any order zeroes every higher B-k. CIDEr is the plain variant (no
//! length penalty, no stemming) with the conventional x10 scale.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{evaluate_corpus, GroundingError};
use crate::instruction::Instruction;
use crate::relations::RelationThresholds;
use crate::scene::Scene;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("pair {pair} has no usable reference")]
    EmptyReference { pair: usize },
    #[error("corpus has {actual} pair(s), need at least 2 for document frequencies")]
    TooFewPairs { actual: usize },
    #[error("empty token in pair {pair}")]
    InvalidToken { pair: usize },
    #[error("max_n must be in 1..=4, got {0}")]
    InvalidMaxOrder(usize),
}

/// Lowercase, treat `. , ; ! ?` as separators, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['.', ',', ';', '!', '?'], " ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// A hypothesis/reference corpus, already tokenized. Hypotheses may be
/// empty (they score zero and are counted), references may not.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCorpus {
    pairs: Vec<(Vec<String>, Vec<Vec<String>>)>,
}

impl TokenizedCorpus {
    pub fn from_tokens(pairs: Vec<(Vec<String>, Vec<Vec<String>>)>) -> Result<Self, MetricError> {
        for (i, (hypothesis, references)) in pairs.iter().enumerate() {
            if references.is_empty() || references.iter().any(Vec::is_empty) {
                return Err(MetricError::EmptyReference { pair: i });
            }
            let all_tokens = hypothesis.iter().chain(references.iter().flatten());
            for token in all_tokens {
                if token.is_empty() {
                    return Err(MetricError::InvalidToken { pair: i });
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn from_texts(pairs: &[(&str, Vec<&str>)]) -> Result<Self, MetricError> {
        Self::from_tokens(
            pairs
                .iter()
                .map(|(hyp, refs)| (tokenize(hyp), refs.iter().map(|r| tokenize(r)).collect()))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(Vec<String>, Vec<Vec<String>>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Hypotheses that tokenized to nothing; they contribute zero scores.
    pub fn empty_hypothesis_count(&self) -> usize {
        self.pairs.iter().filter(|(h, _)| h.is_empty()).count()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-1..max_n: clipped n-gram precision aggregated over
/// pairs, geometric mean over orders, times the brevity penalty
/// `min(1, e^(1 - r/c))` with r the closest-length reference total and c
/// the hypothesis total.
pub fn bleu(corpus: &TokenizedCorpus, max_n: usize) -> Result<Vec<f64>, MetricError> {
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::InvalidMaxOrder(max_n));
    }
    let mut clipped = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut hyp_len_total = 0u64;
    let mut ref_len_total = 0u64;

    for (hypothesis, references) in &corpus.pairs {
        hyp_len_total += hypothesis.len() as u64;
        // effective reference length: closest to the hypothesis length,
        // ties broken toward the shorter reference
        let closest = references
            .iter()
            .map(Vec::len)
            .min_by_key(|&len| {
                let diff = (len as i64 - hypothesis.len() as i64).abs();
                (diff, len)
            })
            .expect("references are non-empty");
        ref_len_total += closest as u64;

        for (order, slot) in clipped.iter_mut().enumerate() {
            let n = order + 1;
            let hyp_counts = ngram_counts(hypothesis, n);
            if hyp_counts.is_empty() {
                continue;
            }
            let ref_counts: Vec<HashMap<&[String], u64>> =
                references.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &count) in &hyp_counts {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                *slot += count.min(max_ref);
            }
            totals[order] += hypothesis.len().saturating_sub(n - 1) as u64;
        }
    }

    let precisions: Vec<f64> = (0..max_n)
        .map(|order| {
            if totals[order] == 0 {
                0.0
            } else {
                clipped[order] as f64 / totals[order] as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len_total == 0 {
        0.0
    } else {
        (1.0 - ref_len_total as f64 / hyp_len_total as f64)
            .exp()
            .min(1.0)
    };

    Ok((1..=max_n)
        .map(|k| {
            if precisions[..k].contains(&0.0) {
                0.0
            } else {
                let log_mean = precisions[..k].iter().map(|p| p.ln()).sum::<f64>() / k as f64;
                brevity_penalty * log_mean.exp()
            }
        })
        .collect())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// ROUGE-L: per pair the best LCS F1 over references, averaged over the
/// corpus.
pub fn rouge_l(corpus: &TokenizedCorpus) -> f64 {
    if corpus.pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = corpus
        .pairs
        .iter()
        .map(|(hypothesis, references)| {
            references
                .iter()
                .map(|reference| {
                    let lcs = lcs_len(hypothesis, reference) as f64;
                    if lcs == 0.0 {
                        return 0.0;
                    }
                    let precision = lcs / hypothesis.len() as f64;
                    let recall = lcs / reference.len() as f64;
                    2.0 * precision * recall / (precision + recall)
                })
                .fold(0.0, f64::max)
        })
        .sum();
    total / corpus.pairs.len() as f64
}

/// Cosine with the denominator computed as sqrt(|a|^2 * |b|^2), which is
/// exactly 1.0 for identical vectors.
fn tfidf_cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(gram, &wa)| b.get(gram).map(|&wb| wa * wb))
        .sum();
    let qa: f64 = a.values().map(|w| w * w).sum();
    let qb: f64 = b.values().map(|w| w * w).sum();
    if qa == 0.0 || qb == 0.0 {
        return 0.0;
    }
    dot / (qa * qb).sqrt()
}

/// Per-pair CIDEr: for n = 1..4, TF-IDF n-gram cosine against each
/// reference (df counted over reference sets, min-clamped to 1),
/// averaged over references and orders, times 10.
pub fn cider_per_pair(corpus: &TokenizedCorpus) -> Result<Vec<f64>, MetricError> {
    if corpus.pairs.len() < 2 {
        return Err(MetricError::TooFewPairs {
            actual: corpus.pairs.len(),
        });
    }
    let pair_count = corpus.pairs.len() as f64;
    let mut scores = vec![0.0; corpus.pairs.len()];
    for n in 1..=4 {
        // document frequency: number of pairs whose references contain
        // the n-gram
        let mut df: HashMap<&[String], u64> = HashMap::new();
        for (_, references) in &corpus.pairs {
            let mut seen: HashMap<&[String], ()> = HashMap::new();
            for reference in references {
                for gram in ngram_counts(reference, n).keys() {
                    seen.entry(gram).or_insert(());
                }
            }
            for gram in seen.keys() {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        let idf = |gram: &[String]| -> f64 {
            let d = df.get(gram).copied().unwrap_or(0).max(1);
            (pair_count / d as f64).ln()
        };
        for (pair_idx, (hypothesis, references)) in corpus.pairs.iter().enumerate() {
            let hyp_vec: HashMap<&[String], f64> = ngram_counts(hypothesis, n)
                .into_iter()
                .map(|(gram, count)| (gram, count as f64 * idf(gram)))
                .collect();
            let mut cosine_sum = 0.0;
            for reference in references {
                let ref_vec: HashMap<&[String], f64> = ngram_counts(reference, n)
                    .into_iter()
                    .map(|(gram, count)| (gram, count as f64 * idf(gram)))
                    .collect();
                cosine_sum += tfidf_cosine(&hyp_vec, &ref_vec);
            }
            scores[pair_idx] += cosine_sum / references.len() as f64;
        }
    }
    Ok(scores.into_iter().map(|s| s / 4.0 * 10.0).collect())
}

pub fn cider(corpus: &TokenizedCorpus) -> Result<f64, MetricError> {
    let scores = cider_per_pair(corpus)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub cider: f64,
}

pub fn metric_report(corpus: &TokenizedCorpus) -> Result<MetricReport, MetricError> {
    let bleu_scores = bleu(corpus, 4)?;
    Ok(MetricReport {
        bleu: [
            bleu_scores[0],
            bleu_scores[1],
            bleu_scores[2],
            bleu_scores[3],
        ],
        rouge_l: rouge_l(corpus),
        cider: cider(corpus)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    Far,
    Close,
}

impl PerturbMode {
    fn replacement(self) -> [&'static str; 2] {
        match self {
            PerturbMode::Far => ["far", "from"],
            PerturbMode::Close => ["close", "to"],
        }
    }
}

impl FromStr for PerturbMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "far" => Ok(PerturbMode::Far),
            "close" => Ok(PerturbMode::Close),
            other => Err(format!(
                "perturb mode must be \"far\" or \"close\", got {other:?}"
            )),
        }
    }
}

impl std::fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbMode::Far => "far",
            PerturbMode::Close => "close",
        })
    }
}

/// Two-word spatial phrases recognized by the perturber; matched before
/// the single-word ones.
const SPATIAL_BIGRAMS: [[&str; 2]; 5] = [
    ["closest", "to"],
    ["farthest", "from"],
    ["close", "to"],
    ["far", "from"],
    ["next", "to"],
];
const SPATIAL_UNIGRAMS: [&str; 4] = ["near", "above", "below", "on"];

/// Replace every spatial relation phrase with "far from" or "close to".
/// A "between ... and ..." phrase collapses to the single-anchor form,
/// keeping the first anchor. Idempotent per mode; non-spatial words are
/// untouched (whitespace normalizes to single spaces).
pub fn perturb_spatial_terms(text: &str, mode: PerturbMode) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let replacement = mode.replacement();
    let mut out: Vec<&str> = Vec::with_capacity(words.len() + 1);
    let mut between_at: Option<usize> = None;
    let mut i = 0;
    while i < words.len() {
        let lower = words[i].to_lowercase();
        if i + 1 < words.len() {
            let next_lower = words[i + 1].to_lowercase();
            if SPATIAL_BIGRAMS
                .iter()
                .any(|[a, b]| *a == lower && *b == next_lower)
            {
                out.extend_from_slice(&replacement);
                i += 2;
                continue;
            }
        }
        if SPATIAL_UNIGRAMS.contains(&lower.as_str()) {
            out.extend_from_slice(&replacement);
            i += 1;
            continue;
        }
        if lower == "between" {
            between_at = Some(out.len());
            out.extend_from_slice(&replacement);
            i += 1;
            continue;
        }
        out.push(words[i]);
        i += 1;
    }
    if let Some(from) = between_at {
        if let Some(and_pos) = out[from..]
            .iter()
            .position(|w| w.eq_ignore_ascii_case("and"))
        {
            out.truncate(from + and_pos);
        }
    }
    out.join(" ")
}

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeDelta {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub cider: f64,
    pub grounding_acc: f64,
}

/// Paired comparison of original vs perturbed corpora: n-gram metrics
/// (references are the originals) alongside grounding accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStudy {
    pub mode: PerturbMode,
    pub original: MetricReport,
    pub perturbed: MetricReport,
    pub grounding_acc_original: f64,
    pub grounding_acc_perturbed: f64,
    pub relative_delta: RelativeDelta,
}

fn relative_change(original: f64, new: f64) -> f64 {
    if original == 0.0 {
        0.0
    } else {
        (new - original) / original
    }
}

pub fn perturbation_study(
    instructions: &[Instruction],
    scenes: &BTreeMap<String, Scene>,
    mode: PerturbMode,
    thresholds: &RelationThresholds,
) -> Result<PerturbationStudy, PerturbationError> {
    let originals: Vec<&str> = instructions.iter().map(|i| i.text.as_str()).collect();
    let original_corpus =
        TokenizedCorpus::from_texts(&originals.iter().map(|&t| (t, vec![t])).collect::<Vec<_>>())?;
    let perturbed_texts: Vec<String> = originals
        .iter()
        .map(|t| perturb_spatial_terms(t, mode))
        .collect();
    let perturbed_corpus = TokenizedCorpus::from_texts(
        &perturbed_texts
            .iter()
            .zip(&originals)
            .map(|(p, &o)| (p.as_str(), vec![o]))
            .collect::<Vec<_>>(),
    )?;

    let original = metric_report(&original_corpus)?;
    let perturbed = metric_report(&perturbed_corpus)?;

    let grounding_acc_original = evaluate_corpus(instructions, scenes, thresholds)?.overall_acc;
    let perturbed_instructions: Vec<Instruction> = instructions
        .iter()
        .zip(&perturbed_texts)
        .map(|(instruction, text)| Instruction {
            text: text.clone(),
            ..instruction.clone()
        })
        .collect();
    let grounding_acc_perturbed =
        evaluate_corpus(&perturbed_instructions, scenes, thresholds)?.overall_acc;

    let relative_delta = RelativeDelta {
        bleu: [
            relative_change(original.bleu[0], perturbed.bleu[0]),
            relative_change(original.bleu[1], perturbed.bleu[1]),
            relative_change(original.bleu[2], perturbed.bleu[2]),
            relative_change(original.bleu[3], perturbed.bleu[3]),
        ],
        rouge_l: relative_change(original.rouge_l, perturbed.rouge_l),
        cider: relative_change(original.cider, perturbed.cider),
        grounding_acc: relative_change(grounding_acc_original, grounding_acc_perturbed),
    };

    Ok(PerturbationStudy {
        mode,
        original,
        perturbed,
        grounding_acc_original,
        grounding_acc_perturbed,
        relative_delta,
    })
}
