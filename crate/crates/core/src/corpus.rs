//! Aligned OCR / ground-truth corpora: loading, splitting and statistics.
//!
//! Two on-disk layouts are understood. The ICDAR post-OCR correction layout
//! stores one document per file with three tagged lines:
//!
//! ```text
//! [OCR_toInput] raw OCR output
//! [OCR_aligned] OCR output padded with '@'
//! [ GS_aligned] ground truth padded with '@'
//! ```
//!
//! The paired layout stores `<id>.ocr.txt` next to `<id>.gt.txt`, both
//! already aligned. An optional `<id>.raw.txt` carries the unpadded OCR text
//! when it differs from the aligned OCR text with padding removed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// Alignment padding symbol used by the ICDAR aligned sequences.
pub const PADDING: char = '@';

/// Chunk length used when counting split documents for corpus statistics.
pub const DEFAULT_SPLIT_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    Dutch,
    English,
    French,
    German,
    Other(String),
}

impl Language {
    /// Short code used in file names and on the command line.
    pub fn code(&self) -> &str {
        match self {
            Language::Dutch => "nl",
            Language::English => "en",
            Language::French => "fr",
            Language::German => "de",
            Language::Other(code) => code,
        }
    }
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.to_lowercase().as_str() {
            "nl" | "dutch" => Language::Dutch,
            "en" | "english" => Language::English,
            "fr" | "french" => Language::French,
            "de" | "german" => Language::German,
            other => Language::Other(other.to_string()),
        })
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::Dutch => f.write_str("Dutch"),
            Language::English => f.write_str("English"),
            Language::French => f.write_str("French"),
            Language::German => f.write_str("German"),
            Language::Other(code) => f.write_str(code),
        }
    }
}

/// Which side of an aligned corpus to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Version {
    Ocr,
    GroundTruth,
}

impl Version {
    pub fn as_str(&self) -> &'static str {
        match self {
            Version::Ocr => "ocr",
            Version::GroundTruth => "gt",
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Icdar,
    PairedFiles,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "icdar" => Ok(CorpusFormat::Icdar),
            "paired" | "paired_files" | "pairedfiles" => Ok(CorpusFormat::PairedFiles),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// One document in its raw OCR, aligned OCR and aligned ground-truth forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedDocument {
    pub id: String,
    pub ocr_raw: String,
    pub ocr_aligned: String,
    pub gt_aligned: String,
    pub language: Language,
    /// Whether both aligned sequences have the same number of characters.
    pub is_aligned: bool,
}

impl AlignedDocument {
    pub fn new(
        id: impl Into<String>,
        ocr_raw: impl Into<String>,
        ocr_aligned: impl Into<String>,
        gt_aligned: impl Into<String>,
        language: Language,
    ) -> Self {
        let ocr_aligned = ocr_aligned.into();
        let gt_aligned = gt_aligned.into();
        let is_aligned = ocr_aligned.chars().count() == gt_aligned.chars().count();
        AlignedDocument {
            id: id.into(),
            ocr_raw: ocr_raw.into(),
            ocr_aligned,
            gt_aligned,
            language,
            is_aligned,
        }
    }

    /// The aligned sequence of one version, padding included.
    pub fn aligned_text(&self, version: Version) -> &str {
        match version {
            Version::Ocr => &self.ocr_aligned,
            Version::GroundTruth => &self.gt_aligned,
        }
    }

    /// The text of one version with alignment padding removed.
    pub fn clean_text(&self, version: Version) -> String {
        strip_padding(self.aligned_text(version))
    }

    /// Number of non-padding characters (Unicode scalar values) in a version.
    pub fn char_count(&self, version: Version) -> usize {
        self.aligned_text(version)
            .chars()
            .filter(|&c| c != PADDING)
            .count()
    }
}

pub fn strip_padding(text: &str) -> String {
    text.chars().filter(|&c| c != PADDING).collect()
}

/// An immutable collection of documents sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<AlignedDocument>,
    language: Language,
    version: Version,
}

impl Corpus {
    /// Builds a corpus, sorting documents by id. Fails on duplicate ids.
    pub fn new(
        mut documents: Vec<AlignedDocument>,
        language: Language,
        version: Version,
    ) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(pair) = documents.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidParameter(format!(
                "duplicate document id `{}`",
                pair[0].id
            )));
        }
        Ok(Corpus {
            documents,
            language,
            version,
        })
    }

    pub fn documents(&self) -> &[AlignedDocument] {
        &self.documents
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn with_version(mut self, version: Version) -> Self {
        self.version = version;
        self
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Padding-free texts of the selected version, in document order.
    pub fn texts(&self) -> Vec<String> {
        self.documents
            .iter()
            .map(|d| d.clean_text(self.version))
            .collect()
    }

    /// Writes the corpus in the paired-files layout.
    pub fn write_paired(&self, dir: &Path) -> Result<()> {
        for doc in &self.documents {
            let base = dir.join(&doc.id);
            if let Some(parent) = base.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_file(&with_suffix(&base, ".ocr.txt"), &doc.ocr_aligned)?;
            write_file(&with_suffix(&base, ".gt.txt"), &doc.gt_aligned)?;
            if doc.ocr_raw != strip_padding(&doc.ocr_aligned) {
                write_file(&with_suffix(&base, ".raw.txt"), &doc.ocr_raw)?;
            }
        }
        Ok(())
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Files that could not be ingested, with reasons.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub root: PathBuf,
    pub loaded: usize,
    pub skipped: Vec<SkippedFile>,
}

impl IngestReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_file(path, &json)
    }
}

/// Loads every document below `root`. Unparseable files are collected in the
/// returned report; only a missing or empty directory is fatal.
pub fn load_corpus(
    root: &Path,
    format: CorpusFormat,
    language: Language,
) -> Result<(Corpus, IngestReport)> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().is_file())
        .filter(|entry| !entry.file_name().to_string_lossy().starts_with('.'))
        .map(|entry| entry.into_path())
        .collect();
    files.sort();

    let mut report = IngestReport {
        root: root.to_path_buf(),
        ..Default::default()
    };
    let parsed: Vec<std::result::Result<AlignedDocument, SkippedFile>> = match format {
        CorpusFormat::Icdar => files
            .par_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .map(|path| parse_icdar_file(root, path, &language))
            .collect(),
        CorpusFormat::PairedFiles => {
            let mut out = Vec::new();
            for path in &files {
                let name = path.to_string_lossy();
                if name.ends_with(".gt.txt") || name.ends_with(".raw.txt") {
                    let stem = name
                        .trim_end_matches(".gt.txt")
                        .trim_end_matches(".raw.txt")
                        .to_string();
                    if !Path::new(&format!("{stem}.ocr.txt")).is_file() {
                        out.push(Err(SkippedFile {
                            path: path.clone(),
                            reason: "no matching .ocr.txt file".into(),
                        }));
                    }
                }
            }
            let ocr_files: Vec<&PathBuf> = files
                .iter()
                .filter(|p| p.to_string_lossy().ends_with(".ocr.txt"))
                .collect();
            out.par_extend(
                ocr_files
                    .par_iter()
                    .map(|path| parse_paired(root, path, &language)),
            );
            out
        }
    };

    let mut documents = Vec::with_capacity(parsed.len());
    for item in parsed {
        match item {
            Ok(doc) => documents.push(doc),
            Err(skip) => {
                log::warn!("skipping {}: {}", skip.path.display(), skip.reason);
                report.skipped.push(skip);
            }
        }
    }
    report.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    if documents.is_empty() {
        return Err(Error::NoDocuments(root.to_path_buf()));
    }
    report.loaded = documents.len();
    let corpus = Corpus::new(documents, language, Version::GroundTruth)?;
    Ok((corpus, report))
}

fn document_id(root: &Path, path: &Path, suffix: &str) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let rel = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    rel.strip_suffix(suffix).unwrap_or(&rel).to_string()
}

fn read_text(path: &Path) -> std::result::Result<String, SkippedFile> {
    let bytes = fs::read(path).map_err(|e| SkippedFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let text = String::from_utf8(bytes).map_err(|_| SkippedFile {
        path: path.to_path_buf(),
        reason: "not valid UTF-8".into(),
    })?;
    Ok(match text.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_string(),
        None => text,
    })
}

fn parse_icdar_file(
    root: &Path,
    path: &Path,
    language: &Language,
) -> std::result::Result<AlignedDocument, SkippedFile> {
    let text = read_text(path)?;
    let (raw, ocr, gt) = parse_icdar(&text).map_err(|reason| SkippedFile {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(AlignedDocument::new(
        document_id(root, path, ".txt"),
        raw,
        ocr,
        gt,
        language.clone(),
    ))
}

/// Splits an ICDAR file into its raw OCR, aligned OCR and aligned
/// ground-truth lines.
pub fn parse_icdar(text: &str) -> std::result::Result<(String, String, String), String> {
    const TAGS: [(&str, usize); 4] = [
        ("[OCR_toInput]", 0),
        ("[OCR_aligned]", 1),
        ("[ GS_aligned]", 2),
        ("[GS_aligned]", 2),
    ];
    let mut fields: [Option<String>; 3] = [None, None, None];
    for line in text.lines() {
        let Some((rest, slot)) = TAGS
            .iter()
            .find_map(|(tag, slot)| line.strip_prefix(tag).map(|rest| (rest, *slot)))
        else {
            continue;
        };
        if fields[slot].is_some() {
            return Err(format!("duplicate line for {}", TAGS[slot].0));
        }
        fields[slot] = Some(rest.strip_prefix(' ').unwrap_or(rest).to_string());
    }
    match fields {
        [Some(raw), Some(ocr), Some(gt)] => Ok((raw, ocr, gt)),
        _ => {
            let missing: Vec<&str> = ["[OCR_toInput]", "[OCR_aligned]", "[ GS_aligned]"]
                .iter()
                .zip(&fields)
                .filter(|(_, f)| f.is_none())
                .map(|(tag, _)| *tag)
                .collect();
            Err(format!("missing {}", missing.join(", ")))
        }
    }
}

fn parse_paired(
    root: &Path,
    ocr_path: &Path,
    language: &Language,
) -> std::result::Result<AlignedDocument, SkippedFile> {
    let name = ocr_path.to_string_lossy();
    let stem = name.strip_suffix(".ocr.txt").unwrap_or(&name);
    let gt_path = PathBuf::from(format!("{stem}.gt.txt"));
    if !gt_path.is_file() {
        return Err(SkippedFile {
            path: ocr_path.to_path_buf(),
            reason: "no matching .gt.txt file".into(),
        });
    }
    let ocr = read_text(ocr_path)?;
    let gt = read_text(&gt_path)?;
    let raw_path = PathBuf::from(format!("{stem}.raw.txt"));
    let raw = if raw_path.is_file() {
        read_text(&raw_path)?
    } else {
        strip_padding(&ocr)
    };
    Ok(AlignedDocument::new(
        document_id(root, ocr_path, ".ocr.txt"),
        raw,
        ocr,
        gt,
        language.clone(),
    ))
}

/// Cuts every document whose selected-version text exceeds `max_chars`
/// characters into consecutive pieces of at most `max_chars` characters.
///
/// Aligned documents are cut in lockstep so every piece stays aligned.
/// Documents already within the limit keep their id, so the operation is
/// idempotent.
pub fn split_documents(corpus: &Corpus, max_chars: usize) -> Result<Corpus> {
    if max_chars == 0 {
        return Err(Error::InvalidParameter("max_chars must be at least 1".into()));
    }
    let version = corpus.version();
    let documents: Vec<AlignedDocument> = corpus
        .documents()
        .par_iter()
        .flat_map_iter(|doc| split_document(doc, version, max_chars))
        .collect();
    Corpus::new(documents, corpus.language().clone(), version)
}

/// Number of documents `split_documents` would produce.
pub fn split_count(corpus: &Corpus, version: Version, max_chars: usize) -> usize {
    let max_chars = max_chars.max(1);
    corpus
        .documents()
        .iter()
        .map(|d| d.char_count(version).div_ceil(max_chars).max(1))
        .sum()
}

fn split_document(doc: &AlignedDocument, version: Version, max_chars: usize) -> Vec<AlignedDocument> {
    let n = doc.char_count(version);
    if n <= max_chars {
        return vec![doc.clone()];
    }
    let parts = n.div_ceil(max_chars);
    let width = (parts - 1).to_string().len();
    let part_id = |i: usize| format!("{}#{:0width$}", doc.id, i);

    if doc.is_aligned {
        let (ocr_chunks, gt_chunks) = lockstep_chunks(doc, version, max_chars);
        ocr_chunks
            .into_iter()
            .zip(gt_chunks)
            .enumerate()
            .map(|(i, (ocr, gt))| {
                AlignedDocument::new(part_id(i), strip_padding(&ocr), ocr, gt, doc.language.clone())
            })
            .collect()
    } else {
        let selected = chunk_by_count(doc.aligned_text(version), max_chars);
        let other_version = match version {
            Version::Ocr => Version::GroundTruth,
            Version::GroundTruth => Version::Ocr,
        };
        let other = chunk_evenly(doc.aligned_text(other_version), selected.len());
        let raw = chunk_evenly(&doc.ocr_raw, selected.len());
        selected
            .into_iter()
            .zip(other)
            .zip(raw)
            .enumerate()
            .map(|(i, ((sel, oth), raw))| {
                let (ocr, gt) = match version {
                    Version::Ocr => (sel, oth),
                    Version::GroundTruth => (oth, sel),
                };
                let mut d = AlignedDocument::new(part_id(i), raw, ocr, gt, doc.language.clone());
                d.is_aligned = false;
                d
            })
            .collect()
    }
}

/// Cuts both aligned strings at the same positions. A new piece starts at
/// the first non-padding character past each `max_chars` boundary, so
/// trailing padding stays with the preceding piece.
fn lockstep_chunks(doc: &AlignedDocument, version: Version, max_chars: usize) -> (Vec<String>, Vec<String>) {
    let mut ocr_chunks = Vec::new();
    let mut gt_chunks = Vec::new();
    let mut ocr = String::new();
    let mut gt = String::new();
    let mut count = 0;
    for (o, g) in doc.ocr_aligned.chars().zip(doc.gt_aligned.chars()) {
        let selected = match version {
            Version::Ocr => o,
            Version::GroundTruth => g,
        };
        if selected != PADDING {
            if count == max_chars {
                ocr_chunks.push(std::mem::take(&mut ocr));
                gt_chunks.push(std::mem::take(&mut gt));
                count = 0;
            }
            count += 1;
        }
        ocr.push(o);
        gt.push(g);
    }
    ocr_chunks.push(ocr);
    gt_chunks.push(gt);
    (ocr_chunks, gt_chunks)
}

fn chunk_by_count(text: &str, max_chars: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut count = 0;
    for c in text.chars() {
        if c != PADDING {
            if count == max_chars {
                chunks.push(std::mem::take(&mut current));
                count = 0;
            }
            count += 1;
        }
        current.push(c);
    }
    chunks.push(current);
    chunks
}

/// Cuts `text` into exactly `parts` pieces of near-equal character length.
fn chunk_evenly(text: &str, parts: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    (0..parts)
        .map(|i| {
            let start = i * chars.len() / parts;
            let end = (i + 1) * chars.len() / parts;
            chars[start..end].iter().collect()
        })
        .collect()
}

/// Document and character counts of one corpus version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_docs: usize,
    pub aligned_docs: usize,
    pub split_docs: usize,
    pub avg_chars: f64,
    pub min_chars: usize,
    pub max_chars: usize,
    pub total_chars: usize,
}

impl CorpusStats {
    pub fn aligned_fraction(&self) -> f64 {
        self.aligned_docs as f64 / self.total_docs as f64
    }
}

/// Character statistics of the selected version, padding removed.
pub fn compute_stats(corpus: &Corpus, version: Version) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts: Vec<usize> = corpus
        .documents()
        .iter()
        .map(|d| d.char_count(version))
        .collect();
    let total_chars: usize = counts.iter().sum();
    Ok(CorpusStats {
        total_docs: counts.len(),
        aligned_docs: corpus.documents().iter().filter(|d| d.is_aligned).count(),
        split_docs: split_count(corpus, version, DEFAULT_SPLIT_CHARS),
        avg_chars: total_chars as f64 / counts.len() as f64,
        min_chars: counts.iter().copied().min().unwrap_or(0),
        max_chars: counts.iter().copied().max().unwrap_or(0),
        total_chars,
    })
}
