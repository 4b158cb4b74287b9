//! Brute-force reference implementations of the lexical metrics.
//!
//! Deliberately naive: n-grams are materialized as owned strings and counted
//! by linear search. Shared by the metric tests and the acceptance suite.
#![allow(dead_code)]

fn ngram_list(units: &[String], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    if units.len() < n {
        return out;
    }
    for start in 0..=(units.len() - n) {
        out.push(units[start..start + n].join("\u{1}"));
    }
    out
}

fn count_of(list: &[String], item: &str) -> usize {
    list.iter().filter(|x| x.as_str() == item).count()
}

fn clipped_matches(hyp: &[String], reference: &[String]) -> usize {
    let mut distinct: Vec<&String> = Vec::new();
    for g in hyp {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    distinct
        .into_iter()
        .map(|g| count_of(hyp, g).min(count_of(reference, g)))
        .sum()
}

fn chars_without_whitespace(s: &str) -> Vec<String> {
    s.chars().filter(|c| !c.is_whitespace()).map(|c| c.to_string()).collect()
}

/// chrF with beta = 2 over character 1..=6-grams, whitespace removed.
/// Orders with no reference n-grams are left out of the averages.
pub fn chrf(hyp: &str, reference: &str) -> f64 {
    let h = chars_without_whitespace(hyp);
    let r = chars_without_whitespace(reference);
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for n in 1..=6 {
        let hg = ngram_list(&h, n);
        let rg = ngram_list(&r, n);
        if rg.is_empty() {
            continue;
        }
        let m = clipped_matches(&hg, &rg) as f64;
        precisions.push(if hg.is_empty() { 0.0 } else { m / hg.len() as f64 });
        recalls.push(m / rg.len() as f64);
    }
    if precisions.is_empty() {
        return 0.0;
    }
    let p = precisions.iter().sum::<f64>() / precisions.len() as f64;
    let rc = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let b2 = 4.0;
    if b2 * p + rc == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + b2) * p * rc / (b2 * p + rc)
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(|w| w.to_string()).collect()
}

fn bleu_from_counts(matches: &[usize; 4], totals: &[usize; 4], hyp_len: usize, ref_len: usize, floor: Option<f64>) -> f64 {
    if hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..4 {
        if totals[n] == 0 {
            continue;
        }
        orders += 1;
        let p = if matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else {
            match floor {
                Some(f) => f / totals[n] as f64,
                None => return 0.0,
            }
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len >= ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    100.0 * bp * (log_sum / orders as f64).exp()
}

/// Word-level BLEU-4 of one pair; `floor` is the numerator used for zero-match orders.
pub fn sentence_bleu(hyp: &str, reference: &str, floor: Option<f64>) -> f64 {
    corpus_bleu(&[(hyp, reference)], floor)
}

/// Word-level corpus BLEU-4 from summed statistics.
pub fn corpus_bleu(pairs: &[(&str, &str)], floor: Option<f64>) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut hyp_len = 0;
    let mut ref_len = 0;
    for (h, r) in pairs {
        let h = words(h);
        let r = words(r);
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hg = ngram_list(&h, n);
            let rg = ngram_list(&r, n);
            matches[n - 1] += clipped_matches(&hg, &rg);
            totals[n - 1] += hg.len();
        }
    }
    bleu_from_counts(&matches, &totals, hyp_len, ref_len, floor)
}

/// Twenty-five fixed pairs covering identity, disjoint, short, repeated and multilingual text.
pub const FIXED_PAIRS: [(&str, &str); 25] = [
    ("hello there", "hello world"),
    ("the cat sat on the mat", "the cat sat on the mat"),
    ("the cat sat on the mat", "a dog lay under a rug"),
    ("", "non empty reference"),
    ("non empty hypothesis", ""),
    ("ab", "ab"),
    ("abc", "abd"),
    ("the the the the", "the cat"),
    ("der Hund bellt laut", "der Hund bellt"),
    ("der Hund bellt", "der Hund bellt laut"),
    ("e zord kells thi kotc", "e zord kells thi koty"),
    ("a quick brown fox jumps", "the quick brown fox jumped"),
    ("über den Wolken", "über den Wolken muss die Freiheit"),
    ("machine translation is hard", "translation by machine is hard"),
    ("xyz", "abc"),
    ("aaaaaaaaaa", "aaaa"),
    ("one two three four five six", "six five four three two one"),
    ("  padded   spaces  ", "padded spaces"),
    ("日本語の文", "日本語の文章です"),
    ("to be or not to be", "to be or not to be that is the question"),
    ("a", "a b c d e f g"),
    ("the green tree", "the green trees"),
    ("punctuation, matters!", "punctuation matters"),
    ("repeat repeat repeat", "repeat"),
    ("mejis en upin wonduw", "makes an open window"),
];
