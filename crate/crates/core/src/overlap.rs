//! Top-k neighbour overlap between two embedding spaces over a shared word
//! list, with percentile bootstrap intervals.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainers::{EmbeddingMatrix, Vectors};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Similarity given to pairs involving an all-zero vector.
const ZERO_VECTOR_SIMILARITY: f64 = -1.0;

/// The fractions 0.01, 0.02, ..., 1.00.
pub fn default_n_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// Neighbourhood size for fraction `n` of an intersection of `size` words:
/// `max(1, floor(n * size))`, capped at `size - 1`.
pub fn k_for_fraction(n: f64, size: usize) -> Result<usize> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!(
            "intersection of {size} word(s) has no neighbours"
        )));
    }
    if !(n > 0.0 && n <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction {n} outside (0, 1]")));
    }
    // The small offset keeps products such as 0.29 * 100 from flooring to 28.
    let k = (n * size as f64 + 1e-9).floor() as usize;
    Ok(k.clamp(1, size - 1))
}

/// A word's other intersection words, most similar first. Ids index the
/// word list the set was computed over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub word: u32,
    pub ranked: Vec<u32>,
}

/// Descending similarity, then ascending id.
fn ranking_order(a: (f64, u32), b: (f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Unit-length vectors for a word list, ready for cosine queries.
enum Space {
    Dense {
        dim: usize,
        rows: Vec<f64>,
        zero: Vec<bool>,
    },
    Sparse {
        rows: Vec<Vec<(u32, f64)>>,
        /// For each column, the `(row, value)` entries holding it.
        columns: Vec<Vec<(u32, f64)>>,
        zero: Vec<bool>,
    },
}

impl Space {
    fn new(emb: &EmbeddingMatrix, words: &[String]) -> Result<Self> {
        let ids = words
            .iter()
            .map(|w| emb.id(w).ok_or_else(|| Error::MissingWord(w.clone())))
            .collect::<Result<Vec<u32>>>()?;
        match emb.vectors() {
            Vectors::Dense { dim, .. } => {
                let dim = *dim;
                let mut rows = Vec::with_capacity(ids.len() * dim);
                let mut zero = Vec::with_capacity(ids.len());
                for &id in &ids {
                    let row = emb.dense_row(id);
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    zero.push(norm == 0.0);
                    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
                    rows.extend(row.iter().map(|v| v * scale));
                }
                Ok(Space::Dense { dim, rows, zero })
            }
            Vectors::Sparse { columns: ncols, rows: all } => {
                let mut rows = Vec::with_capacity(ids.len());
                let mut zero = Vec::with_capacity(ids.len());
                let mut columns = vec![Vec::new(); *ncols];
                for (r, &id) in ids.iter().enumerate() {
                    let row = &all[id as usize];
                    let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                    zero.push(norm == 0.0);
                    let normed: Vec<(u32, f64)> = if norm > 0.0 {
                        row.iter().map(|&(c, v)| (c, v / norm)).collect()
                    } else {
                        Vec::new()
                    };
                    for &(c, v) in &normed {
                        columns[c as usize].push((r as u32, v));
                    }
                    rows.push(normed);
                }
                Ok(Space::Sparse { rows, columns, zero })
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Space::Dense { zero, .. } | Space::Sparse { zero, .. } => zero.len(),
        }
    }

    /// Cosine similarity of word `i` with every word, into `out`.
    fn similarities(&self, i: usize, out: &mut [f64]) {
        match self {
            Space::Dense { dim, rows, zero } => {
                let q = &rows[i * dim..(i + 1) * dim];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = if zero[i] || zero[j] {
                        ZERO_VECTOR_SIMILARITY
                    } else {
                        q.iter().zip(&rows[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum()
                    };
                }
            }
            Space::Sparse { rows, columns, zero } => {
                out.fill(0.0);
                for &(c, v) in &rows[i] {
                    for &(r, w) in &columns[c as usize] {
                        out[r as usize] += v * w;
                    }
                }
                for (j, o) in out.iter_mut().enumerate() {
                    if zero[i] || zero[j] {
                        *o = ZERO_VECTOR_SIMILARITY;
                    }
                }
            }
        }
    }

    /// Other words by descending similarity, ties by ascending id.
    fn rank(&self, i: usize, sims: &mut [f64], ranked: &mut Vec<u32>) {
        self.similarities(i, sims);
        ranked.clear();
        ranked.extend((0..self.len() as u32).filter(|&j| j as usize != i));
        ranked.sort_unstable_by(|&a, &b| ranking_order((sims[a as usize], a), (sims[b as usize], b)));
    }
}

/// Exact cosine neighbour rankings for every word in `words`, which should
/// be sorted so that id order matches lexicographic order.
pub fn neighbor_sets(emb: &EmbeddingMatrix, words: &[String]) -> Result<Vec<NeighborSet>> {
    let space = Space::new(emb, words)?;
    let m = space.len();
    Ok((0..m)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |sims, i| {
                let mut ranked = Vec::with_capacity(m.saturating_sub(1));
                space.rank(i, sims, &mut ranked);
                NeighborSet {
                    word: i as u32,
                    ranked,
                }
            },
        )
        .collect())
}

/// Share of the top-`k` neighbours the two sets have in common.
pub fn overlap_at_k(a: &NeighborSet, b: &NeighborSet, k: usize) -> Result<f64> {
    let candidates = a.ranked.len().min(b.ranked.len());
    if k == 0 || k > candidates {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={candidates}"
        )));
    }
    let top: std::collections::HashSet<u32> = a.ranked[..k].iter().copied().collect();
    let shared = b.ranked[..k].iter().filter(|w| top.contains(w)).count();
    Ok(shared as f64 / k as f64)
}

/// Per-word overlap at each `k`, as `result[g][word]` for `ks[g]`.
///
/// Both rankings of a word are computed, then every shared neighbour is
/// counted for all `k` beyond the later of its two positions, so one pass
/// serves the whole grid and no all-pairs table is kept.
pub fn per_word_overlaps(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    words: &[String],
    ks: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let m = words.len();
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "intersection of {m} word(s) has no neighbours"
        )));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > m - 1) {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={}", m - 1)));
    }
    let space_a = Space::new(a, words)?;
    let space_b = Space::new(b, words)?;

    struct Buffers {
        sims: Vec<f64>,
        ranked_a: Vec<u32>,
        ranked_b: Vec<u32>,
        position_b: Vec<usize>,
        within: Vec<usize>,
    }

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map_init(
            || Buffers {
                sims: vec![0.0; m],
                ranked_a: Vec::with_capacity(m),
                ranked_b: Vec::with_capacity(m),
                position_b: vec![0; m],
                within: vec![0; m],
            },
            |buf, i| {
                space_a.rank(i, &mut buf.sims, &mut buf.ranked_a);
                space_b.rank(i, &mut buf.sims, &mut buf.ranked_b);
                for (pos, &w) in buf.ranked_b.iter().enumerate() {
                    buf.position_b[w as usize] = pos;
                }
                // within[t]: neighbours whose later position is t.
                buf.within.fill(0);
                for (pos_a, &w) in buf.ranked_a.iter().enumerate() {
                    buf.within[pos_a.max(buf.position_b[w as usize])] += 1;
                }
                let mut shared_below = vec![0usize; m];
                for t in 1..m {
                    shared_below[t] = shared_below[t - 1] + buf.within[t - 1];
                }
                ks.iter()
                    .map(|&k| shared_below[k] as f64 / k as f64)
                    .collect()
            },
        )
        .collect();

    Ok((0..ks.len())
        .map(|g| rows.iter().map(|r| r[g]).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: DEFAULT_RESAMPLES,
            confidence: DEFAULT_CONFIDENCE,
            seed: 0,
        }
    }
}

/// Mean taken as an offset from the first value, so a constant column
/// yields that constant exactly.
fn mean(values: &[f64]) -> f64 {
    let base = values[0];
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Percentile bootstrap intervals for the means of several equally long
/// columns. Each resample draws one set of row indices and applies it to
/// every column. Intervals are widened if needed to contain the sample mean.
pub fn bootstrap_columns(columns: &[Vec<f64>], config: &BootstrapConfig) -> Result<Vec<(f64, f64)>> {
    let n = columns.first().map_or(0, Vec::len);
    if n == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter(
            "bootstrap needs non-empty columns of equal length".into(),
        ));
    }
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence {} outside (0, 1)",
            config.confidence
        )));
    }
    if config.resamples == 0 {
        return Err(Error::InvalidParameter("resamples must be positive".into()));
    }
    let resample_means: Vec<Vec<f64>> = (0..config.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let mut sums = vec![0.0; columns.len()];
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                for (s, c) in sums.iter_mut().zip(columns) {
                    *s += c[i] - c[0];
                }
            }
            sums.into_iter()
                .zip(columns)
                .map(|(s, c)| c[0] + s / n as f64)
                .collect()
        })
        .collect();
    let tail = (1.0 - config.confidence) / 2.0;
    Ok(columns
        .iter()
        .enumerate()
        .map(|(g, column)| {
            let mut means: Vec<f64> = resample_means.iter().map(|r| r[g]).collect();
            means.sort_unstable_by(f64::total_cmp);
            let centre = mean(column);
            let low = quantile(&means, tail).min(centre);
            let high = quantile(&means, 1.0 - tail).max(centre);
            (low, high)
        })
        .collect())
}

pub fn bootstrap_ci(values: &[f64], confidence: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    let config = BootstrapConfig {
        resamples,
        confidence,
        seed,
    };
    Ok(bootstrap_columns(&[values.to_vec()], &config)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "N")]
    pub n: f64,
    pub k: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub models: Vec<String>,
    pub language: Option<String>,
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub intersection_size: usize,
    /// How intervals were obtained.
    pub interval_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCurve {
    pub points: Vec<CurvePoint>,
    pub runs_averaged: usize,
    pub bootstrap: BootstrapConfig,
    pub metadata: CurveMetadata,
    /// `per_word[g][w]`: overlap of word `w` at grid point `g`, pooled over
    /// runs.
    #[serde(skip)]
    pub per_word: Vec<Vec<f64>>,
}

const INTERVAL_METHOD: &str = "percentile bootstrap over per-word overlaps, pooled across runs";

impl OverlapCurve {
    fn from_per_word(
        n_grid: &[f64],
        ks: &[usize],
        means: Vec<f64>,
        per_word: Vec<Vec<f64>>,
        runs: usize,
        bootstrap: BootstrapConfig,
        intersection_size: usize,
    ) -> Result<Self> {
        let intervals = bootstrap_columns(&per_word, &bootstrap)?;
        let points = n_grid
            .iter()
            .zip(ks)
            .zip(means)
            .zip(intervals)
            .map(|(((&n, &k), mean), (low, high))| CurvePoint {
                n,
                k,
                mean,
                ci_low: low.min(mean),
                ci_high: high.max(mean),
            })
            .collect();
        Ok(OverlapCurve {
            points,
            runs_averaged: runs,
            bootstrap,
            metadata: CurveMetadata {
                runs,
                intersection_size,
                interval_method: INTERVAL_METHOD.into(),
                ..CurveMetadata::default()
            },
            per_word,
        })
    }

    /// The point whose fraction is closest to `n`.
    pub fn at(&self, n: f64) -> Option<&CurvePoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.n - n).abs().total_cmp(&(b.n - n).abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,k,mean,ci_low,ci_high\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.2},{},{:.8},{:.8},{:.8}",
                p.n, p.k, p.mean, p.ci_low, p.ci_high
            );
        }
        out
    }

    /// Reads the points of a curve written by [`OverlapCurve::to_csv`].
    pub fn points_from_csv(text: &str) -> Result<Vec<CurvePoint>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "N,k,mean,ci_low,ci_high")) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header `N,k,mean,ci_low,ci_high`".into(),
                })
            }
        }
        lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                let bad = |message: String| Error::Parse { line: i + 1, message };
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 5 {
                    return Err(bad(format!("expected 5 fields, found {}", fields.len())));
                }
                let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
                Ok(CurvePoint {
                    n: num(fields[0])?,
                    k: fields[1].trim().parse().map_err(|e| bad(format!("`{}`: {e}", fields[1])))?,
                    mean: num(fields[2])?,
                    ci_low: num(fields[3])?,
                    ci_high: num(fields[4])?,
                })
            })
            .collect()
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let json = serde_json::to_string_pretty(self)?;
        fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
    }
}

/// Overlap curve of two embeddings over a sorted shared word list.
pub fn evaluate_pair(
    emb_ocr: &EmbeddingMatrix,
    emb_truth: &EmbeddingMatrix,
    words: &[String],
    n_grid: &[f64],
    bootstrap: &BootstrapConfig,
) -> Result<OverlapCurve> {
    if n_grid.is_empty() {
        return Err(Error::InvalidParameter("empty N grid".into()));
    }
    let ks = n_grid
        .iter()
        .map(|&n| k_for_fraction(n, words.len()))
        .collect::<Result<Vec<_>>>()?;
    let per_word = per_word_overlaps(emb_ocr, emb_truth, words, &ks)?;
    let means = per_word.iter().map(|c| mean(c)).collect();
    let mut curve = OverlapCurve::from_per_word(n_grid, &ks, means, per_word, 1, *bootstrap, words.len())?;
    curve.metadata.models = vec![
        emb_ocr.metadata.model.as_str().to_owned(),
        emb_truth.metadata.model.as_str().to_owned(),
    ];
    curve.metadata.seeds = vec![emb_ocr.metadata.seed, emb_truth.metadata.seed];
    curve.metadata.language = emb_truth
        .metadata
        .language
        .as_ref()
        .map(|l| l.code().to_owned());
    Ok(curve)
}

/// Mean of the run means at each grid point, with intervals recomputed
/// from the per-word overlaps of all runs pooled together.
pub fn average_runs(curves: &[OverlapCurve]) -> Result<OverlapCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidParameter("no curves to average".into()))?;
    for c in &curves[1..] {
        let same_grid = c.points.len() == first.points.len()
            && c.points
                .iter()
                .zip(&first.points)
                .all(|(a, b)| a.n == b.n && a.k == b.k);
        if !same_grid {
            return Err(Error::MismatchedCurves("N grids or k values differ".into()));
        }
        if c.per_word.len() != first.per_word.len() {
            return Err(Error::MismatchedCurves("per-word data missing".into()));
        }
    }
    if first.per_word.len() != first.points.len() {
        return Err(Error::MismatchedCurves("per-word data missing".into()));
    }
    let n_grid: Vec<f64> = first.points.iter().map(|p| p.n).collect();
    let ks: Vec<usize> = first.points.iter().map(|p| p.k).collect();
    let means = (0..n_grid.len())
        .map(|g| curves.iter().map(|c| c.points[g].mean).sum::<f64>() / curves.len() as f64)
        .collect();
    let pooled = (0..n_grid.len())
        .map(|g| curves.iter().flat_map(|c| c.per_word[g].iter().copied()).collect())
        .collect();
    let runs = curves.iter().map(|c| c.runs_averaged).sum();
    let mut out = OverlapCurve::from_per_word(
        &n_grid,
        &ks,
        means,
        pooled,
        runs,
        first.bootstrap,
        first.metadata.intersection_size,
    )?;
    out.metadata.models = first.metadata.models.clone();
    out.metadata.language = first.metadata.language.clone();
    out.metadata.seeds = curves.iter().flat_map(|c| c.metadata.seeds.iter().copied()).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::{EmbeddingMetadata, ModelKind};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    /// Roughly normal draw: the sum of twelve uniforms, centred.
    fn gaussish(rng: &mut impl Rng) -> f64 {
        (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i:04}")).collect()
    }

    fn dense(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let dim = rows[0].len();
        EmbeddingMatrix::new(
            words(rows.len()),
            Vectors::Dense {
                dim,
                data: rows.concat(),
            },
            EmbeddingMetadata::new(ModelKind::External),
        )
        .unwrap()
    }

    fn random_dense(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| gaussish(&mut rng)).collect())
            .collect();
        dense(&rows)
    }

    fn brute_force_ranking(emb: &EmbeddingMatrix, i: usize) -> Vec<u32> {
        let cos = |a: &[f64], b: &[f64]| {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return -1.0;
            }
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
        };
        let q = emb.dense_row(i as u32);
        let mut pairs: Vec<(f64, u32)> = (0..emb.len() as u32)
            .filter(|&j| j as usize != i)
            .map(|j| (cos(q, emb.dense_row(j)), j))
            .collect();
        pairs.sort_by(|&a, &b| ranking_order(a, b));
        pairs.into_iter().map(|(_, j)| j).collect()
    }

    #[test]
    fn k_examples() {
        assert_eq!(k_for_fraction(0.01, 1000).unwrap(), 10);
        assert_eq!(k_for_fraction(0.29, 100).unwrap(), 29);
        assert_eq!(k_for_fraction(0.001, 50).unwrap(), 1);
        assert_eq!(k_for_fraction(1.0, 50).unwrap(), 49);
        assert!(k_for_fraction(0.5, 1).is_err());
    }

    #[test]
    fn orthonormal_ties_are_lexicographic() {
        let e = dense(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let sets = neighbor_sets(&e, e.words()).unwrap();
        assert_eq!(sets[0].ranked, [1, 2]);
        assert_eq!(sets[2].ranked, [0, 1]);
    }

    #[test]
    fn cosine_order() {
        let e = dense(&[vec![1.0, 0.0], vec![1.0, 0.1], vec![-1.0, 0.0]]);
        assert_eq!(neighbor_sets(&e, e.words()).unwrap()[0].ranked, [1, 2]);
    }

    #[test]
    fn zero_vectors_rank_last() {
        let e = dense(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]);
        // w0002 has cosine -1 as well; the tie goes to the smaller id.
        assert_eq!(neighbor_sets(&e, e.words()).unwrap()[0].ranked, [3, 1, 2]);
    }

    #[test]
    fn missing_word_is_named() {
        let e = dense(&[vec![1.0], vec![2.0]]);
        let err = neighbor_sets(&e, &["w0000".into(), "nope".into()]).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn rankings_match_brute_force() {
        let e = random_dense(200, 16, 9);
        let sets = neighbor_sets(&e, e.words()).unwrap();
        for (i, s) in sets.iter().enumerate() {
            assert_eq!(s.ranked, brute_force_ranking(&e, i));
            assert_eq!(s.ranked.len(), 199);
        }
    }

    #[test]
    fn sparse_and_dense_rank_alike() {
        let rows = vec![
            vec![1.0, 0.0, 2.0, 0.0],
            vec![0.0, 3.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 4.0],
        ];
        let d = dense(&rows);
        let sparse_rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        let s = EmbeddingMatrix::new(
            words(5),
            Vectors::Sparse {
                columns: 4,
                rows: sparse_rows,
            },
            EmbeddingMetadata::new(ModelKind::Ppmi),
        )
        .unwrap();
        assert_eq!(neighbor_sets(&d, d.words()).unwrap(), neighbor_sets(&s, s.words()).unwrap());
    }

    fn set(ranked: &[u32]) -> NeighborSet {
        NeighborSet {
            word: 0,
            ranked: ranked.to_vec(),
        }
    }

    #[test]
    fn overlap_examples() {
        let a = set(&(1..=20).collect::<Vec<_>>());
        assert_eq!(overlap_at_k(&a, &a, 7).unwrap(), 1.0);
        let mut b: Vec<u32> = (1..=5).chain(101..=105).collect();
        b.extend(6..=15);
        assert_eq!(overlap_at_k(&a, &set(&b), 10).unwrap(), 0.5);
        let c: Vec<u32> = (101..=120).collect();
        assert_eq!(overlap_at_k(&a, &set(&c), 10).unwrap(), 0.0);
        assert!(overlap_at_k(&a, &a, 0).is_err());
        assert!(overlap_at_k(&a, &a, 21).is_err());
    }

    #[test]
    fn streaming_overlaps_match_set_oracle() {
        let a = random_dense(120, 6, 1);
        let b = random_dense(120, 6, 2);
        let ks = [1, 5, 12, 60, 119];
        let fast = per_word_overlaps(&a, &b, a.words(), &ks).unwrap();
        let sa = neighbor_sets(&a, a.words()).unwrap();
        let sb = neighbor_sets(&b, b.words()).unwrap();
        for (g, &k) in ks.iter().enumerate() {
            for w in 0..120 {
                assert_eq!(fast[g][w], overlap_at_k(&sa[w], &sb[w], k).unwrap());
            }
        }
    }

    #[test]
    fn self_evaluation_is_identity() {
        let e = random_dense(80, 5, 3);
        let curve = evaluate_pair(&e, &e, e.words(), &default_n_grid(), &BootstrapConfig::default()).unwrap();
        for p in &curve.points {
            assert_eq!((p.mean, p.ci_low, p.ci_high), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn random_spaces_overlap_at_chance() {
        let a = random_dense(500, 10, 4);
        let b = random_dense(500, 10, 5);
        let curve = evaluate_pair(&a, &b, a.words(), &[0.1, 1.0], &BootstrapConfig::default()).unwrap();
        let p = &curve.points[0];
        assert_eq!(p.k, 50);
        let values = &curve.per_word[0];
        let sd = (values.iter().map(|v| (v - p.mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
        let se = sd / (values.len() as f64).sqrt();
        let expected = 50.0 / 499.0;
        assert!((p.mean - expected).abs() < 3.0 * se, "{} vs {expected}", p.mean);
        assert_eq!(curve.points[1].mean, 1.0);
    }

    #[test]
    fn bootstrap_examples() {
        assert_eq!(bootstrap_ci(&[0.3; 50], 0.95, 1000, 1).unwrap(), (0.3, 0.3));
        let values: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_ci(&values, 0.95, 1000, 1).unwrap();
        assert!((lo - 0.49).abs() < 0.003 && (hi - 0.51).abs() < 0.003, "{lo} {hi}");
        assert!(bootstrap_ci(&[], 0.95, 10, 1).is_err());
        assert!(bootstrap_ci(&[1.0], 1.0, 10, 1).is_err());
    }

    #[test]
    fn single_resample_is_degenerate() {
        let values = [0.0, 0.2, 0.9, 0.4];
        let (lo, hi) = bootstrap_ci(&values, 0.95, 1, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        rng.set_stream(0);
        let resample = (0..4).map(|_| values[rng.gen_range(0..4)]).sum::<f64>() / 4.0;
        let m = mean(&values);
        assert_eq!((lo, hi), (resample.min(m), resample.max(m)));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        assert_eq!(
            bootstrap_ci(&values, 0.95, 200, 5).unwrap(),
            bootstrap_ci(&values, 0.95, 200, 5).unwrap()
        );
    }

    fn curve_with_means(means: [f64; 2]) -> OverlapCurve {
        let per_word = means.iter().map(|&m| vec![m; 10]).collect();
        OverlapCurve::from_per_word(&[0.5, 1.0], &[5, 9], means.to_vec(), per_word, 1, BootstrapConfig::default(), 10)
            .unwrap()
    }

    #[test]
    fn averaging_runs() {
        let c = curve_with_means([0.3, 1.0]);
        let avg = average_runs(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert_eq!(avg.points, c.points);
        assert_eq!(avg.runs_averaged, 3);

        let runs: Vec<_> = [0.2, 0.4, 0.6].iter().map(|&m| curve_with_means([m, 1.0])).collect();
        assert!((average_runs(&runs).unwrap().points[0].mean - 0.4).abs() < 1e-15);

        let mut other = curve_with_means([0.2, 1.0]);
        other.points[0].k = 4;
        assert!(matches!(average_runs(&[c, other]), Err(Error::MismatchedCurves(_))));
    }

    #[test]
    fn pooled_interval_not_wider_than_runs() {
        let runs: Vec<OverlapCurve> = (0..3)
            .map(|r| {
                let a = random_dense(150, 8, 100 + r);
                let b = random_dense(150, 8, 200 + r);
                evaluate_pair(&a, &b, a.words(), &[0.05, 0.2], &BootstrapConfig::default()).unwrap()
            })
            .collect();
        let avg = average_runs(&runs).unwrap();
        for g in 0..2 {
            let widest = runs
                .iter()
                .map(|c| c.points[g].ci_high - c.points[g].ci_low)
                .fold(0.0, f64::max);
            assert!(avg.points[g].ci_high - avg.points[g].ci_low <= widest);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = curve_with_means([0.25, 1.0]);
        let csv = c.to_csv();
        assert!(csv.starts_with("N,k,mean,ci_low,ci_high\n0.50,5,0.25000000,"));
        let points = OverlapCurve::points_from_csv(&csv).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[1].k, 9);
        assert!(OverlapCurve::points_from_csv("N,k\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn overlap_invariant_under_rotation_and_scaling(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU, scale in 0.1f64..10.0) {
            let a = random_dense(40, 2, seed);
            let b = random_dense(40, 2, seed + 1);
            let Vectors::Dense { data, .. } = a.vectors() else { unreachable!() };
            let (s, c) = angle.sin_cos();
            let rotated: Vec<Vec<f64>> = data
                .chunks(2)
                .map(|v| vec![scale * (c * v[0] - s * v[1]), scale * (s * v[0] + c * v[1])])
                .collect();
            let r = dense(&rotated);
            let ks = [1, 4, 10, 39];
            let before = per_word_overlaps(&a, &b, a.words(), &ks).unwrap();
            let after = per_word_overlaps(&r, &b, a.words(), &ks).unwrap();
            let swapped = per_word_overlaps(&b, &a, a.words(), &ks).unwrap();
            // Rotation can reorder near-ties, so compare means with a small slack.
            for g in 0..ks.len() {
                prop_assert!((mean(&before[g]) - mean(&after[g])).abs() < 0.02);
                prop_assert_eq!(&before[g], &swapped[g]);
                prop_assert!(before[g].iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            prop_assert!(before[3].iter().all(|&v| v == 1.0));
        }
    }
}
