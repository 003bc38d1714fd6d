//! Character and word error rates, and synthetic OCR-like noise.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{strip_padding, Corpus, PADDING};
use crate::error::{Error, Result};

/// Number of equal-width bins in the error-rate histograms.
pub const HISTOGRAM_BINS: usize = 50;

/// Positional character error rate of an aligned pair.
///
/// Counts positions whose characters differ, divided by the number of
/// positions where the ground truth is not padding.
pub fn character_error_rate(ocr_aligned: &str, gt_aligned: &str) -> Result<f64> {
    let ocr: Vec<char> = ocr_aligned.chars().collect();
    let gt: Vec<char> = gt_aligned.chars().collect();
    if ocr.len() != gt.len() {
        return Err(Error::Misaligned {
            ocr_len: ocr.len(),
            gt_len: gt.len(),
        });
    }
    let mut errors = 0usize;
    let mut reference = 0usize;
    for (&o, &g) in ocr.iter().zip(&gt) {
        if g != PADDING {
            reference += 1;
        }
        if o != g {
            errors += 1;
        }
    }
    match (errors, reference) {
        (0, 0) => Ok(0.0),
        (_, 0) => Err(Error::UndefinedRate("ground truth has no characters")),
        (e, r) => Ok(e as f64 / r as f64),
    }
}

/// Substitution, deletion and insertion counts of a minimum edit alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Unit-cost Levenshtein alignment of a hypothesis against a reference.
/// Deletions are reference items missing from the hypothesis; insertions are
/// extra hypothesis items.
pub fn edit_counts<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> EditCounts {
    let mut prev: Vec<EditCounts> = (0..=hypothesis.len())
        .map(|j| EditCounts {
            insertions: j,
            ..Default::default()
        })
        .collect();
    let mut curr = vec![EditCounts::default(); hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = EditCounts {
            deletions: i + 1,
            ..Default::default()
        };
        for (j, h) in hypothesis.iter().enumerate() {
            let diag = if r == h {
                prev[j]
            } else {
                EditCounts {
                    substitutions: prev[j].substitutions + 1,
                    ..prev[j]
                }
            };
            let del = EditCounts {
                deletions: prev[j + 1].deletions + 1,
                ..prev[j + 1]
            };
            let ins = EditCounts {
                insertions: curr[j].insertions + 1,
                ..curr[j]
            };
            let mut best = diag;
            for candidate in [del, ins] {
                if candidate.total() < best.total() {
                    best = candidate;
                }
            }
            curr[j + 1] = best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[hypothesis.len()]
}

fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| c.is_whitespace() || c == PADDING)
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word error rate: (S + D + I) over the number of ground-truth words, with
/// words split on whitespace (padding symbols are ignored).
pub fn word_error_rate(ocr_text: &str, gt_text: &str) -> Result<f64> {
    let hyp = words(ocr_text);
    let reference = words(gt_text);
    if reference.is_empty() {
        return if hyp.is_empty() {
            Ok(0.0)
        } else {
            Err(Error::UndefinedRate("ground truth has no words"))
        };
    }
    Ok(edit_counts(&hyp, &reference).total() as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentErrorRate {
    pub doc_id: String,
    pub cer: f64,
    pub wer: f64,
}

/// Equal-width histogram over `[0, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub upper: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let max = values.iter().copied().fold(0.0f64, f64::max);
        let upper = if max > 0.0 { max } else { 1.0 };
        let mut counts = vec![0; bins];
        for &v in values {
            let bin = ((v / upper) * bins as f64).floor() as usize;
            counts[bin.min(bins - 1)] += 1;
        }
        Histogram { upper, counts }
    }

    pub fn bin_width(&self) -> f64 {
        self.upper / self.counts.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        let w = self.bin_width();
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.6},{:.6},{}\n", i as f64 * w, (i + 1) as f64 * w, c));
        }
        out
    }
}

/// Per-document and averaged error rates of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub per_document: Vec<DocumentErrorRate>,
    pub language_mean_cer: f64,
    pub language_mean_wer: f64,
    /// Documents left out because their aligned sequences differ in length.
    pub excluded_docs: usize,
    /// Aligned documents left out because a rate has no denominator.
    pub undefined_docs: usize,
    pub cer_histogram: Histogram,
    pub wer_histogram: Histogram,
}

impl ErrorRateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("doc_id,cer,wer\n");
        for d in &self.per_document {
            out.push_str(&format!("{},{:.6},{:.6}\n", d.doc_id, d.cer, d.wer));
        }
        out
    }

    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        let files = [
            (format!("{prefix}error_rates.csv"), self.to_csv()),
            (format!("{prefix}cer_histogram.csv"), self.cer_histogram.to_csv()),
            (format!("{prefix}wer_histogram.csv"), self.wer_histogram.to_csv()),
            (
                format!("{prefix}error_rates.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "documents": self.per_document.len(),
                    "language_mean_cer": self.language_mean_cer,
                    "language_mean_wer": self.language_mean_wer,
                    "excluded_docs": self.excluded_docs,
                    "undefined_docs": self.undefined_docs,
                }))?,
            ),
        ];
        for (name, contents) in files {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

/// Error rates of every aligned document; misaligned documents are excluded.
pub fn corpus_error_rates(corpus: &Corpus) -> Result<ErrorRateReport> {
    let aligned: Vec<_> = corpus.documents().iter().filter(|d| d.is_aligned).collect();
    if aligned.is_empty() {
        return Err(Error::NoAlignedDocuments);
    }
    let rates: Vec<Option<DocumentErrorRate>> = aligned
        .par_iter()
        .map(|d| {
            let cer = character_error_rate(&d.ocr_aligned, &d.gt_aligned).ok()?;
            let wer = word_error_rate(&strip_padding(&d.ocr_aligned), &strip_padding(&d.gt_aligned)).ok()?;
            Some(DocumentErrorRate {
                doc_id: d.id.clone(),
                cer,
                wer,
            })
        })
        .collect();
    let undefined_docs = rates.iter().filter(|r| r.is_none()).count();
    let per_document: Vec<DocumentErrorRate> = rates.into_iter().flatten().collect();
    if per_document.is_empty() {
        return Err(Error::NoAlignedDocuments);
    }
    let cers: Vec<f64> = per_document.iter().map(|d| d.cer).collect();
    let wers: Vec<f64> = per_document.iter().map(|d| d.wer).collect();
    Ok(ErrorRateReport {
        language_mean_cer: mean(cers.iter().copied()),
        language_mean_wer: mean(wers.iter().copied()),
        excluded_docs: corpus.len() - aligned.len(),
        undefined_docs,
        cer_histogram: Histogram::new(&cers, HISTOGRAM_BINS),
        wer_histogram: Histogram::new(&wers, HISTOGRAM_BINS),
        per_document,
    })
}

/// Parameters of the synthetic character noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target_cer: f64,
    pub substitution_weight: f64,
    pub deletion_weight: f64,
    pub insertion_weight: f64,
    pub seed: u64,
    pub alphabet: String,
}

impl NoiseSpec {
    pub fn new(target_cer: f64, seed: u64) -> Self {
        NoiseSpec {
            target_cer,
            substitution_weight: 0.6,
            deletion_weight: 0.2,
            insertion_weight: 0.2,
            seed,
            alphabet: "abcdefghijklmnopqrstuvwxyz".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidNoise(m));
        if !(0.0..1.0).contains(&self.target_cer) {
            return bad(format!("target_cer {} outside [0, 1)", self.target_cer));
        }
        if self.target_cer > 0.9 {
            return bad(format!("target_cer {} above 0.9: padding would dominate", self.target_cer));
        }
        let weights = [self.substitution_weight, self.deletion_weight, self.insertion_weight];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative".into());
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {sum}, expected 1"));
        }
        if self.alphabet.contains(PADDING) {
            return bad("alphabet contains the padding symbol".into());
        }
        let distinct = {
            let mut cs: Vec<char> = self.alphabet.chars().collect();
            cs.sort_unstable();
            cs.dedup();
            cs.len()
        };
        if distinct < 2 && self.substitution_weight > 0.0 {
            return bad("substitution needs at least two alphabet characters".into());
        }
        if distinct == 0 && self.insertion_weight > 0.0 {
            return bad("insertion needs a non-empty alphabet".into());
        }
        Ok(())
    }
}

/// Corrupts `gt_text` into an aligned (ocr, ground truth) pair.
///
/// Exactly `round(target_cer * n)` of the `n` characters receive one edit
/// each, chosen by the spec weights: a substitution by a different alphabet
/// character, a deletion (padding on the OCR side), or an insertion of an
/// alphabet character after it (padding on the ground-truth side). Every
/// edit produces one differing position, so the measured character error
/// rate is `round(target_cer * n) / n`.
pub fn inject_noise(gt_text: &str, spec: &NoiseSpec) -> Result<(String, String)> {
    spec.validate()?;
    if gt_text.is_empty() {
        return Err(Error::InvalidNoise("empty input text".into()));
    }
    if gt_text.contains(PADDING) {
        return Err(Error::InvalidNoise("input contains the padding symbol".into()));
    }
    let chars: Vec<char> = gt_text.chars().collect();
    let n = chars.len();
    let edits = (spec.target_cer * n as f64).round() as usize;
    let alphabet: Vec<char> = spec.alphabet.chars().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edited = vec![false; n];
    for i in index::sample(&mut rng, n, edits).into_vec() {
        edited[i] = true;
    }

    let mut ocr = String::with_capacity(gt_text.len() + edits);
    let mut gt = String::with_capacity(gt_text.len() + edits);
    for (&c, &edit) in chars.iter().zip(&edited) {
        if !edit {
            ocr.push(c);
            gt.push(c);
            continue;
        }
        let u: f64 = rng.gen();
        if u < spec.substitution_weight {
            let replacement = loop {
                let r = alphabet[rng.gen_range(0..alphabet.len())];
                if r != c {
                    break r;
                }
            };
            ocr.push(replacement);
            gt.push(c);
        } else if u < spec.substitution_weight + spec.deletion_weight || spec.insertion_weight == 0.0 {
            ocr.push(PADDING);
            gt.push(c);
        } else {
            ocr.push(c);
            gt.push(c);
            ocr.push(alphabet[rng.gen_range(0..alphabet.len())]);
            gt.push(PADDING);
        }
    }
    Ok((ocr, gt))
}
