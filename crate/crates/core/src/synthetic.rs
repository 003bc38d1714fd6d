//! Generator for topic-structured synthetic text, used where no real corpus
//! is available. Words belong to topics; each document draws most of its
//! tokens from one topic, so words of a topic share contexts.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br",
    "ch", "cl", "dr", "fl", "gr", "pl", "pr", "sh", "st", "th", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "l", "t", "m", "nd", "st"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub topics: usize,
    /// Words of frequency rank below this have one syllable.
    pub short_words: usize,
    /// Words of rank below this (and not short) have two syllables; the
    /// rest have three.
    pub medium_words: usize,
    /// Tokens per document.
    pub doc_tokens: usize,
    /// Stop once the corpus holds at least this many characters.
    pub target_chars: usize,
    /// Share of a document's tokens drawn from its own topic.
    pub topic_share: f64,
    /// Exponent of the Zipf-like rank weights within a word list.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 1000,
            topics: 20,
            short_words: 100,
            medium_words: 500,
            doc_tokens: 80,
            target_chars: 1_000_000,
            topic_share: 0.8,
            zipf_exponent: 1.0,
            seed: 1,
        }
    }
}

/// The `index`-th pseudo-word of the given syllable count, lowercase ASCII.
/// Distinct indices give distinct words up to `(30 * 8)^syllables * 10`.
pub fn pseudo_word(index: usize, syllables: usize) -> String {
    let mut n = index;
    let mut out = String::new();
    for _ in 0..syllables.max(1) {
        out.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        out.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
    }
    out.push_str(CODAS[n % CODAS.len()]);
    n /= CODAS.len();
    // Indices beyond the syllable space get extra letters.
    while n > 0 {
        out.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
    }
    out
}

/// Vocabulary in frequency-rank order; frequent words are short.
pub fn word_list(spec: &SyntheticSpec) -> Vec<String> {
    let mut seen = HashSet::with_capacity(spec.vocab_size);
    let mut words = Vec::with_capacity(spec.vocab_size);
    let mut next = [0usize; 4];
    for rank in 0..spec.vocab_size {
        let syllables = if rank < spec.short_words {
            1
        } else if rank < spec.medium_words {
            2
        } else {
            3
        };
        loop {
            let word = pseudo_word(next[syllables], syllables);
            next[syllables] += 1;
            if seen.insert(word.clone()) {
                words.push(word);
                break;
            }
        }
    }
    words
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

/// Generates documents until `target_chars` characters are reached.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<String>> {
    if spec.topics == 0 || spec.vocab_size < spec.topics || spec.doc_tokens == 0 {
        return Err(Error::InvalidParameter(
            "need at least one topic, one word per topic and one token per document".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.topic_share) {
        return Err(Error::InvalidParameter("topic_share outside [0, 1]".into()));
    }
    let words = word_list(spec);
    let topic_words: Vec<Vec<usize>> = (0..spec.topics)
        .map(|t| (t..spec.vocab_size).step_by(spec.topics).collect())
        .collect();
    let invalid = |e| Error::InvalidParameter(format!("word weights: {e}"));
    let topic_dists = topic_words
        .iter()
        .map(|ws| WeightedIndex::new(zipf_weights(ws.len(), spec.zipf_exponent)).map_err(invalid))
        .collect::<Result<Vec<_>>>()?;
    let global = WeightedIndex::new(zipf_weights(spec.vocab_size, spec.zipf_exponent)).map_err(invalid)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::new();
    let mut chars = 0;
    while chars < spec.target_chars {
        let topic = rng.gen_range(0..spec.topics);
        let mut doc = String::new();
        for t in 0..spec.doc_tokens {
            let word = if rng.gen_bool(spec.topic_share) {
                topic_words[topic][topic_dists[topic].sample(&mut rng)]
            } else {
                global.sample(&mut rng)
            };
            if t > 0 {
                doc.push(' ');
            }
            doc.push_str(&words[word]);
        }
        chars += doc.chars().count();
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_list_is_distinct_and_short_first() {
        let spec = SyntheticSpec {
            vocab_size: 20_000,
            ..SyntheticSpec::default()
        };
        let words = word_list(&spec);
        let unique: HashSet<&String> = words.iter().collect();
        assert_eq!(unique.len(), words.len());
        assert!(words.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
        let mean_len = |ws: &[String]| ws.iter().map(String::len).sum::<usize>() as f64 / ws.len() as f64;
        assert!(mean_len(&words[..100]) < mean_len(&words[100..500]));
        assert!(mean_len(&words[100..500]) < mean_len(&words[500..]));
    }

    #[test]
    fn pseudo_words_are_injective_per_length() {
        let words: HashSet<String> = (0..5000).map(|i| pseudo_word(i, 2)).collect();
        assert_eq!(words.len(), 5000);
    }

    #[test]
    fn corpus_reaches_target_and_is_seeded() {
        let spec = SyntheticSpec {
            target_chars: 20_000,
            ..SyntheticSpec::default()
        };
        let a = generate_corpus(&spec).unwrap();
        assert!(a.iter().map(|d| d.chars().count()).sum::<usize>() >= 20_000);
        assert_eq!(a, generate_corpus(&spec).unwrap());
        let b = generate_corpus(&SyntheticSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = SyntheticSpec {
            topics: 0,
            ..SyntheticSpec::default()
        };
        assert!(generate_corpus(&spec).is_err());
    }
}
