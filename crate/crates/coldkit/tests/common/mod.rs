//! Independent brute-force oracles for the metric implementations.
//!
//! Everything here is deliberately naive: n-grams as joined strings in
//! plain vectors with linear scans, a full-table quadratic LCS, and
//! TF-IDF vectors assembled by direct enumeration. No code is shared
//! with the implementations under test.

pub type Pair = (Vec<String>, Vec<Vec<String>>);

fn grams(tokens: &[String], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for start in 0..=tokens.len() - n {
        out.push(tokens[start..start + n].join("\u{1}"));
    }
    out
}

fn count_of(haystack: &[String], needle: &str) -> u64 {
    haystack.iter().filter(|g| g.as_str() == needle).count() as u64
}

fn dedup(items: &[String]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for item in items {
        if !seen.contains(item) {
            seen.push(item.clone());
        }
    }
    seen
}

pub fn oracle_bleu(pairs: &[Pair], max_n: usize) -> Vec<f64> {
    let mut numerator = vec![0u64; max_n];
    let mut denominator = vec![0u64; max_n];
    let mut hyp_total = 0u64;
    let mut ref_total = 0u64;

    for (hypothesis, references) in pairs {
        hyp_total += hypothesis.len() as u64;
        let mut best_len = references[0].len();
        for reference in references {
            let diff = |len: usize| (len as i64 - hypothesis.len() as i64).abs();
            if diff(reference.len()) < diff(best_len)
                || (diff(reference.len()) == diff(best_len) && reference.len() < best_len)
            {
                best_len = reference.len();
            }
        }
        ref_total += best_len as u64;

        for n in 1..=max_n {
            let hyp_grams = grams(hypothesis, n);
            denominator[n - 1] += hyp_grams.len() as u64;
            for gram in dedup(&hyp_grams) {
                let hyp_count = count_of(&hyp_grams, &gram);
                let mut best_ref = 0;
                for reference in references {
                    best_ref = best_ref.max(count_of(&grams(reference, n), &gram));
                }
                numerator[n - 1] += hyp_count.min(best_ref);
            }
        }
    }

    let precision: Vec<f64> = (0..max_n)
        .map(|i| {
            if denominator[i] == 0 {
                0.0
            } else {
                numerator[i] as f64 / denominator[i] as f64
            }
        })
        .collect();
    let bp = if hyp_total == 0 {
        0.0
    } else {
        (1.0 - ref_total as f64 / hyp_total as f64).exp().min(1.0)
    };
    (1..=max_n)
        .map(|k| {
            if precision[..k].contains(&0.0) {
                0.0
            } else {
                bp * (precision[..k].iter().map(|p| p.ln()).sum::<f64>() / k as f64).exp()
            }
        })
        .collect()
}

fn lcs_full_table(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

pub fn oracle_rouge_l(pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (hypothesis, references) in pairs {
        let mut best = 0.0f64;
        for reference in references {
            let lcs = lcs_full_table(hypothesis, reference) as f64;
            if lcs > 0.0 {
                let p = lcs / hypothesis.len() as f64;
                let r = lcs / reference.len() as f64;
                best = best.max(2.0 * p * r / (p + r));
            }
        }
        total += best;
    }
    total / pairs.len() as f64
}

pub fn oracle_cider_per_pair(pairs: &[Pair]) -> Vec<f64> {
    assert!(pairs.len() >= 2, "oracle cider needs at least two pairs");
    let mut scores = vec![0.0; pairs.len()];
    for n in 1..=4 {
        let idf = |gram: &str| -> f64 {
            let mut df = 0u64;
            for (_, references) in pairs {
                if references.iter().any(|r| count_of(&grams(r, n), gram) > 0) {
                    df += 1;
                }
            }
            (pairs.len() as f64 / df.max(1) as f64).ln()
        };
        let vector = |tokens: &[String]| -> Vec<(String, f64)> {
            let all = grams(tokens, n);
            dedup(&all)
                .into_iter()
                .map(|g| {
                    let weight = count_of(&all, &g) as f64 * idf(&g);
                    (g, weight)
                })
                .collect()
        };
        for (idx, (hypothesis, references)) in pairs.iter().enumerate() {
            let hyp_vec = vector(hypothesis);
            let mut cosine_sum = 0.0;
            for reference in references {
                let ref_vec = vector(reference);
                let mut dot = 0.0;
                for (gram, w) in &hyp_vec {
                    for (rg, rw) in &ref_vec {
                        if gram == rg {
                            dot += w * rw;
                        }
                    }
                }
                let qa: f64 = hyp_vec.iter().map(|(_, w)| w * w).sum();
                let qb: f64 = ref_vec.iter().map(|(_, w)| w * w).sum();
                if qa > 0.0 && qb > 0.0 {
                    cosine_sum += dot / (qa * qb).sqrt();
                }
            }
            scores[idx] += cosine_sum / references.len() as f64;
        }
    }
    scores.into_iter().map(|s| s / 4.0 * 10.0).collect()
}

pub fn oracle_cider(pairs: &[Pair]) -> f64 {
    let scores = oracle_cider_per_pair(pairs);
    scores.iter().sum::<f64>() / scores.len() as f64
}
