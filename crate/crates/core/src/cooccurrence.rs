//! Windowed word-context co-occurrence counts.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedCorpus;

pub const DEFAULT_WINDOW: usize = 5;

/// Largest window accepted with harmonic weighting; keeps the exact
/// fixed-point accumulator within `u128`.
pub const MAX_HARMONIC_WINDOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every neighbour inside the window counts 1.
    Flat,
    /// A neighbour at distance `d` counts `1 / d`.
    HarmonicDistance,
}

/// Sparse co-occurrence matrix stored as sorted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    rows: Vec<Vec<(u32, f64)>>,
    row_sums: Vec<f64>,
    total: f64,
    window_size: usize,
    weighting: Weighting,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Fixed-point scale making every window weight an integer.
fn weight_unit(window: usize, weighting: Weighting) -> u128 {
    match weighting {
        Weighting::Flat => 1,
        Weighting::HarmonicDistance => (1..=window as u128).fold(1, |l, d| l / gcd(l, d) * d),
    }
}

type Counts = HashMap<u64, u128>;

fn key(w: u32, c: u32) -> u64 {
    (u64::from(w) << 32) | u64::from(c)
}

/// Counts each neighbour within `window_size` positions on either side of
/// every token. Windows never cross document boundaries.
pub fn count_cooccurrences(
    corpus: &TokenizedCorpus,
    window_size: usize,
    weighting: Weighting,
) -> Result<CooccurrenceMatrix> {
    if window_size == 0 {
        return Err(Error::InvalidParameter("window_size must be at least 1".into()));
    }
    if weighting == Weighting::HarmonicDistance && window_size > MAX_HARMONIC_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "harmonic weighting supports windows up to {MAX_HARMONIC_WINDOW}"
        )));
    }
    if corpus.num_tokens() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let unit = weight_unit(window_size, weighting);
    let step: Vec<u128> = (0..=window_size)
        .map(|d| match weighting {
            Weighting::Flat => 1,
            Weighting::HarmonicDistance if d == 0 => 0,
            Weighting::HarmonicDistance => unit / d as u128,
        })
        .collect();

    let counts = corpus
        .documents
        .par_iter()
        .fold(Counts::new, |mut acc, doc| {
            for (i, &w) in doc.iter().enumerate() {
                let lo = i.saturating_sub(window_size);
                let hi = (i + window_size).min(doc.len() - 1);
                for (j, &c) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                    if j != i {
                        *acc.entry(key(w, c)).or_default() += step[i.abs_diff(j)];
                    }
                }
            }
            acc
        })
        .reduce(Counts::new, |a, b| if a.len() >= b.len() { merge(a, b) } else { merge(b, a) });

    let vocab_size = corpus.vocabulary.len();
    let mut exact_rows: Vec<Vec<(u32, u128)>> = vec![Vec::new(); vocab_size];
    for (k, v) in counts {
        exact_rows[(k >> 32) as usize].push((k as u32, v));
    }
    let scale = unit as f64;
    let mut exact_total = 0u128;
    let mut row_sums = Vec::with_capacity(vocab_size);
    let rows = exact_rows
        .into_iter()
        .map(|mut row| {
            row.sort_unstable_by_key(|&(c, _)| c);
            let sum: u128 = row.iter().map(|&(_, v)| v).sum();
            exact_total += sum;
            row_sums.push(sum as f64 / scale);
            row.into_iter().map(|(c, v)| (c, v as f64 / scale)).collect()
        })
        .collect();
    Ok(CooccurrenceMatrix {
        rows,
        row_sums,
        total: exact_total as f64 / scale,
        window_size,
        weighting,
    })
}

fn merge(mut a: Counts, b: Counts) -> Counts {
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DumpHeader {
    vocab_size: usize,
    window_size: usize,
    weighting: Weighting,
    nnz: usize,
}

impl CooccurrenceMatrix {
    /// Builds a matrix from explicit `(word, context, weight)` cells.
    /// Repeated cells are summed; zero weights are dropped.
    pub fn from_triples(
        vocab_size: usize,
        triples: impl IntoIterator<Item = (u32, u32, f64)>,
        window_size: usize,
        weighting: Weighting,
    ) -> Result<Self> {
        let mut cells: HashMap<(u32, u32), f64> = HashMap::new();
        for (w, c, v) in triples {
            if w as usize >= vocab_size || c as usize >= vocab_size {
                return Err(Error::InvalidParameter(format!("cell ({w}, {c}) outside vocabulary")));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("invalid weight {v}")));
            }
            *cells.entry((w, c)).or_default() += v;
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vocab_size];
        for ((w, c), v) in cells {
            if v > 0.0 {
                rows[w as usize].push((c, v));
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
        }
        let row_sums: Vec<f64> = rows.iter().map(|r| r.iter().map(|&(_, v)| v).sum()).collect();
        let total = row_sums.iter().sum();
        Ok(CooccurrenceMatrix {
            rows,
            row_sums,
            total,
            window_size,
            weighting,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, word: u32) -> &[(u32, f64)] {
        &self.rows[word as usize]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn get(&self, word: u32, context: u32) -> f64 {
        let row = self.row(word);
        row.binary_search_by_key(&context, |&(c, _)| c)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Number of stored (nonzero) cells.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(w, row)| row.iter().map(move |&(c, v)| (w as u32, c, v)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.cells().all(|(w, c, v)| self.get(c, w) == v)
    }

    fn header_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes little-endian `(u32 word, u32 context, f64 weight)` triples and
    /// a JSON header next to them at `<path>.json`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (w, c, v) in self.cells() {
            out.write_all(&w.to_le_bytes())
                .and_then(|_| out.write_all(&c.to_le_bytes()))
                .and_then(|_| out.write_all(&v.to_le_bytes()))
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        let header = DumpHeader {
            vocab_size: self.vocab_size(),
            window_size: self.window_size,
            weighting: self.weighting,
            nnz: self.nnz(),
        };
        let header_path = Self::header_path(path);
        fs::write(&header_path, serde_json::to_string_pretty(&header)?)
            .map_err(|e| Error::io(&header_path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let header_path = Self::header_path(path);
        let header: DumpHeader = serde_json::from_str(
            &fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?,
        )?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut triples = Vec::with_capacity(header.nnz);
        let mut buf = [0u8; 16];
        for _ in 0..header.nnz {
            input.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            let w = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes"));
            let c = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
            let v = f64::from_le_bytes(buf[8..16].try_into().expect("8 bytes"));
            triples.push((w, c, v));
        }
        Self::from_triples(header.vocab_size, triples, header.window_size, header.weighting)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{build_vocabulary, TokenizedCorpus};
    use proptest::prelude::*;

    fn corpus(docs: &[&str]) -> TokenizedCorpus {
        let tokens: Vec<Vec<String>> = docs
            .iter()
            .map(|d| d.split(' ').filter(|t| !t.is_empty()).map(String::from).collect())
            .collect();
        let vocab = build_vocabulary(&tokens, 1).unwrap();
        TokenizedCorpus::encode(&tokens, vocab)
    }

    /// Enumerates every (position, offset) pair directly.
    fn brute_force(tc: &TokenizedCorpus, window: usize, weighting: Weighting) -> HashMap<(u32, u32), f64> {
        let mut m = HashMap::new();
        for doc in &tc.documents {
            for i in 0..doc.len() {
                for j in 0..doc.len() {
                    let d = i.abs_diff(j);
                    if d == 0 || d > window {
                        continue;
                    }
                    let w = match weighting {
                        Weighting::Flat => 1.0,
                        Weighting::HarmonicDistance => 1.0 / d as f64,
                    };
                    *m.entry((doc[i], doc[j])).or_insert(0.0) += w;
                }
            }
        }
        m
    }

    #[test]
    fn two_token_document() {
        let tc = corpus(&["a b"]);
        let m = count_cooccurrences(&tc, 1, Weighting::Flat).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(m.total(), 2.0);
    }

    #[test]
    fn aba_window_two() {
        let tc = corpus(&["a b a"]);
        let m = count_cooccurrences(&tc, 2, Weighting::Flat).unwrap();
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        // Three position pairs within the window, each counted in both
        // directions.
        assert_eq!(m.total(), 6.0);
    }

    #[test]
    fn harmonic_distance_two() {
        let tc = corpus(&["a b c"]);
        let m = count_cooccurrences(&tc, 2, Weighting::HarmonicDistance).unwrap();
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(0, 1), 1.0);
    }

    #[test]
    fn windows_stop_at_document_boundaries() {
        let tc = corpus(&["a b", "c d"]);
        let m = count_cooccurrences(&tc, 5, Weighting::Flat).unwrap();
        assert_eq!(m.get(1, 2), 0.0);
    }

    #[test]
    fn errors() {
        let tc = corpus(&["a b"]);
        assert!(count_cooccurrences(&tc, 0, Weighting::Flat).is_err());
        assert!(count_cooccurrences(&tc, 65, Weighting::HarmonicDistance).is_err());
        let empty = TokenizedCorpus {
            documents: vec![vec![]],
            vocabulary: tc.vocabulary.clone(),
        };
        assert!(matches!(count_cooccurrences(&empty, 2, Weighting::Flat), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn binary_dump_round_trip() {
        let tc = corpus(&["a b c a b", "c c a"]);
        let m = count_cooccurrences(&tc, 3, Weighting::HarmonicDistance).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        m.write_binary(&path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len() as usize, m.nnz() * 16);
        let back = CooccurrenceMatrix::read_binary(&path).unwrap();
        assert_eq!(back.rows(), m.rows());
        assert_eq!(back.window_size(), 3);
        assert_eq!(back.weighting(), Weighting::HarmonicDistance);
    }

    fn arb_docs() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::collection::vec("[a-f]", 0..60).prop_map(|t| t.join(" ")),
            1..8,
        )
        .prop_filter("needs a token", |d| d.iter().any(|s| !s.is_empty()))
    }

    proptest! {
        #[test]
        fn matches_brute_force(docs in arb_docs(), window in 1usize..7, harmonic in any::<bool>()) {
            let docs: Vec<&str> = docs.iter().map(String::as_str).collect();
            let tc = corpus(&docs);
            if tc.num_tokens() == 0 {
                return Ok(());
            }
            let weighting = if harmonic { Weighting::HarmonicDistance } else { Weighting::Flat };
            let m = count_cooccurrences(&tc, window, weighting).unwrap();
            let oracle = brute_force(&tc, window, weighting);
            prop_assert_eq!(m.nnz(), oracle.len());
            for ((w, c), v) in &oracle {
                prop_assert!((m.get(*w, *c) - v).abs() < 1e-9);
            }
            let resum: f64 = m.cells().map(|(_, _, v)| v).sum();
            prop_assert!((resum - m.total()).abs() <= 1e-12 * m.total().max(1.0));
            for (w, row) in m.rows().iter().enumerate() {
                let s: f64 = row.iter().map(|&(_, v)| v).sum();
                prop_assert!((s - m.row_sums()[w]).abs() <= 1e-12 * s.max(1.0));
            }
            prop_assert!(m.is_symmetric());
        }

        #[test]
        fn permutation_and_doubling(docs in arb_docs(), window in 1usize..6) {
            let docs: Vec<&str> = docs.iter().map(String::as_str).collect();
            let tc = corpus(&docs);
            if tc.num_tokens() == 0 {
                return Ok(());
            }
            let m = count_cooccurrences(&tc, window, Weighting::HarmonicDistance).unwrap();

            let mut reversed = tc.clone();
            reversed.documents.reverse();
            let r = count_cooccurrences(&reversed, window, Weighting::HarmonicDistance).unwrap();
            prop_assert_eq!(r.rows(), m.rows());

            let mut doubled = tc.clone();
            doubled.documents.extend(tc.documents.clone());
            let d = count_cooccurrences(&doubled, window, Weighting::HarmonicDistance).unwrap();
            for (w, c, v) in m.cells() {
                prop_assert_eq!(d.get(w, c), 2.0 * v);
            }
            prop_assert_eq!(d.total(), 2.0 * m.total());
        }
    }
}
