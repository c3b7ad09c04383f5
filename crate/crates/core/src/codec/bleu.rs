//! Sentence-level BLEU: clipped n-gram precisions, uniform weights, brevity penalty.

use std::collections::BTreeMap;

use super::vocab::Sentence;
use super::CodecError;

fn ngram_counts(ids: &[u32], n: usize) -> BTreeMap<&[u32], usize> {
    let mut counts = BTreeMap::new();
    for gram in ids.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU of `candidate` against a single `reference` using orders `1..=max_n`.
///
/// Orders longer than the candidate have no n-grams to score and are left out
/// of the geometric mean, so identical short sentences still score 1. No
/// smoothing: a zero precision at any scored order gives 0.
pub fn bleu(candidate: &Sentence, reference: &Sentence, max_n: usize) -> Result<f64, CodecError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(CodecError::EmptySentence);
    }
    let cand = candidate.ids();
    let refr = reference.ids();
    let orders = max_n.max(1).min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand_counts = ngram_counts(cand, n);
        let ref_counts = ngram_counts(refr, n);
        let total: usize = cand_counts.values().sum();
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(brevity * (log_sum / orders as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(ids: &[u32]) -> Sentence {
        Sentence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_one() {
        assert_eq!(
            bleu(&s(&[5, 6, 7, 8, 9]), &s(&[5, 6, 7, 8, 9]), 4).unwrap(),
            1.0
        );
        assert_eq!(bleu(&s(&[5, 6]), &s(&[5, 6]), 4).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(bleu(&s(&[1, 2, 3]), &s(&[4, 5, 6]), 4).unwrap(), 0.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        // "a a b" vs "a b b"
        let v = bleu(&s(&[1, 1, 2]), &s(&[1, 2, 2]), 1).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!((v - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let v = bleu(&s(&[1, 2]), &s(&[1, 2, 3, 4]), 1).unwrap();
        assert!((v - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn bigram_example() {
        // unigrams 3/4, bigrams 1/3 -> sqrt(1/4)
        let v = bleu(&s(&[1, 2, 3, 9]), &s(&[1, 2, 4, 3]), 2).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }
}
