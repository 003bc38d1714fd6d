//! Text normalisation, tokenisation and frequency-filtered vocabularies.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_general_category::get_general_category;

use crate::corpus::{Language, Version, PADDING};
use crate::error::{Error, Result};

/// Default minimum token frequency for vocabulary membership.
pub const DEFAULT_MIN_COUNT: u64 = 5;

fn is_dropped(c: char) -> bool {
    c == PADDING
        || matches!(
            get_general_category(c).abbreviation().as_bytes()[0],
            b'N' | b'P' | b'S'
        )
}

/// Simple (single character) lowercase mapping.
fn lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Drops numbers, punctuation, symbols and padding, lowercases, and
/// collapses whitespace runs into single spaces with no leading or trailing
/// space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if is_dropped(c) {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(lower(c));
    }
    out
}

/// Splits normalised text on spaces.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(' ').filter(|t| !t.is_empty()).collect()
}

/// `normalize` followed by `tokenize`, owning the tokens.
pub fn normalize_and_tokenize(text: &str) -> Vec<String> {
    tokenize(&normalize(text))
        .into_iter()
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSource {
    pub language: Language,
    pub version: Version,
}

/// Words with frequency at least `min_count`, with ids assigned in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    word_to_id: HashMap<String, u32>,
    frequencies: Vec<u64>,
    min_count: u64,
    source: Option<VocabSource>,
}

impl Vocabulary {
    fn from_sorted(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let word_to_id = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let (words, frequencies) = entries.into_iter().unzip();
        Vocabulary {
            words,
            word_to_id,
            frequencies,
            min_count,
            source: None,
        }
    }

    pub fn with_source(mut self, language: Language, version: Version) -> Self {
        self.source = Some(VocabSource { language, version });
        self
    }

    pub fn source(&self) -> Option<&VocabSource> {
        self.source.as_ref()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.word_to_id.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.frequencies[id as usize]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }

    /// Writes `word<TAB>frequency` lines in id (lexicographic) order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (word, freq) in self.words.iter().zip(&self.frequencies) {
            writeln!(out, "{word}\t{freq}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, min_count: u64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let parse_err = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (word, freq) = line.split_once('\t').ok_or_else(|| parse_err("expected word<TAB>frequency"))?;
            let freq: u64 = freq.parse().map_err(|_| parse_err("invalid frequency"))?;
            entries.push((word.to_string(), freq));
        }
        entries.sort();
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateWord(w[0].0.clone()));
        }
        Ok(Vocabulary::from_sorted(entries, min_count))
    }
}

/// Counts tokens over all documents and keeps words seen at least
/// `min_count` times. Frequencies are the full counts of retained words.
pub fn build_vocabulary<S: AsRef<str> + Sync>(docs: &[Vec<S>], min_count: u64) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidParameter("min_count must be at least 1".into()));
    }
    let counts = docs
        .par_iter()
        .fold(HashMap::<&str, u64>::new, |mut acc, doc| {
            for token in doc {
                *acc.entry(token.as_ref()).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    entries.sort_unstable();
    Ok(Vocabulary::from_sorted(entries, min_count))
}

/// Documents as id sequences over a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCorpus {
    pub documents: Vec<Vec<u32>>,
    pub vocabulary: Vocabulary,
}

impl TokenizedCorpus {
    /// Normalises and tokenises raw texts, builds the vocabulary and drops
    /// out-of-vocabulary tokens.
    pub fn from_texts<S: AsRef<str> + Sync>(texts: &[S], min_count: u64) -> Result<Self> {
        let tokens: Vec<Vec<String>> = texts
            .par_iter()
            .map(|t| normalize_and_tokenize(t.as_ref()))
            .collect();
        let vocabulary = build_vocabulary(&tokens, min_count)?;
        Ok(Self::encode(&tokens, vocabulary))
    }

    pub fn encode<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocabulary: Vocabulary) -> Self {
        let documents = docs.par_iter().map(|d| vocabulary.encode(d)).collect();
        TokenizedCorpus {
            documents,
            vocabulary,
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// Words common to several vocabularies, sorted lexicographically, with the
/// id each source assigns to every shared word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabIntersection {
    pub words: Vec<String>,
    /// `remaps[s][i]` is the id of `words[i]` in source `s`.
    pub remaps: Vec<Vec<u32>>,
}

impl VocabIntersection {
    /// Intersects word lists where a word's id is its position in the list.
    pub fn from_word_lists(lists: &[&[String]]) -> Result<Self> {
        if lists.len() < 2 {
            return Err(Error::InvalidParameter(
                "intersection needs at least two vocabularies".into(),
            ));
        }
        let mut common: HashSet<&str> = lists[0].iter().map(String::as_str).collect();
        for list in &lists[1..] {
            let set: HashSet<&str> = list.iter().map(String::as_str).collect();
            common.retain(|w| set.contains(w));
        }
        if common.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let mut words: Vec<String> = common.into_iter().map(str::to_owned).collect();
        words.sort_unstable();
        let remaps = lists
            .iter()
            .map(|list| {
                let index: HashMap<&str, u32> = list
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (w.as_str(), i as u32))
                    .collect();
                words.iter().map(|w| index[w.as_str()]).collect()
            })
            .collect();
        Ok(VocabIntersection { words, remaps })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn intersect_vocabularies(vocabs: &[&Vocabulary]) -> Result<VocabIntersection> {
    let lists: Vec<&[String]> = vocabs.iter().map(|v| v.words()).collect();
    VocabIntersection::from_word_lists(&lists)
}
