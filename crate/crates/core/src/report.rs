//! Experiment orchestration behind the command line: configuration,
//! commands, manifests and SVG figures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cooccurrence::{count_cooccurrences, CooccurrenceMatrix, Weighting, DEFAULT_WINDOW};
use crate::corpus::{
    compute_stats, load_corpus, split_count, split_documents, AlignedDocument, Corpus, CorpusFormat,
    CorpusStats, Language, Version, DEFAULT_SPLIT_CHARS,
};
use crate::error::{Error, Result};
use crate::noise::{corpus_error_rates, inject_noise, NoiseSpec};
use crate::overlap::{
    average_runs, default_n_grid, evaluate_pair, BootstrapConfig, CurvePoint, OverlapCurve,
};
use crate::preprocess::{
    build_vocabulary, normalize_and_tokenize, TokenizedCorpus, VocabIntersection,
    DEFAULT_MIN_COUNT,
};
use crate::synthetic::{generate_corpus, SyntheticSpec};
use crate::trainers::{
    export_embeddings, export_sparse_embeddings, import_embeddings, train_cbow, train_glove,
    train_ppmi, train_sgns, EmbeddingMatrix, ModelKind, RateProfile, TrainConfig,
};

const MANIFEST_FILE: &str = "manifest.json";
const NOISE_DIR: &str = "noise";

fn default_format() -> CorpusFormat {
    CorpusFormat::Icdar
}
fn default_runs() -> usize {
    3
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_min_count() -> u64 {
    DEFAULT_MIN_COUNT
}
fn default_split_chars() -> usize {
    DEFAULT_SPLIT_CHARS
}
fn default_seed() -> u64 {
    1
}

/// One model family to train, with optional overrides of its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: ModelKind,
    #[serde(default)]
    pub rate_profile: Option<RateProfile>,
    /// Seed of run 0; run `r` uses `seed + r`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub negative_samples: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ModelSpec {
    /// Directory and legend name, e.g. `sgns-slow`.
    pub fn label(&self) -> String {
        match self.rate_profile {
            Some(p) => format!("{}-{}", self.model.as_str(), p.as_str()),
            None => self.model.as_str().to_owned(),
        }
    }

    fn train_config(&self, language: &Language, min_count: u64, seed: u64, deterministic: bool) -> TrainConfig {
        let mut c = TrainConfig::new(self.model);
        if let Some(p) = self.rate_profile {
            c = c.with_rate_profile(p);
        }
        c.dim = self
            .dim
            .unwrap_or(if *language == Language::Dutch { 320 } else { 300 });
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if let Some(w) = self.window {
            c.window = w;
        }
        if let Some(n) = self.negative_samples {
            c.negative_samples = n;
        }
        if let Some(lr) = self.learning_rate {
            c.learning_rate = lr;
        }
        c.threads = if deterministic { 1 } else { self.threads.unwrap_or(1) };
        c.min_count = min_count;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Ground truth of a configured corpus.
    Corpus(String),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub source: NoiseSource,
    pub levels: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn label(level: f64) -> String {
        format!("cer_{level:.3}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus directory per language code.
    #[serde(default)]
    pub corpora: BTreeMap<String, PathBuf>,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default = "default_split_chars")]
    pub split_chars: usize,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lang: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.corpora.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            for m in &mut self.models {
                m.seed = seed;
            }
        }
    }

    /// Checks everything that does not depend on earlier commands' output.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| !(n > 0.0 && n <= 1.0)) {
            return Err(Error::Config("n_grid values must lie in (0, 1]".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.split_chars == 0 {
            return Err(Error::Config("split_chars must be at least 1".into()));
        }
        if !(self.bootstrap.confidence > 0.0 && self.bootstrap.confidence < 1.0) || self.bootstrap.resamples == 0 {
            return Err(Error::Config("bootstrap needs resamples >= 1 and confidence in (0, 1)".into()));
        }
        for path in self.corpora.values() {
            if !path.is_dir() {
                return Err(Error::MissingDirectory(path.clone()));
            }
        }
        for m in &self.models {
            match (m.model, m.rate_profile) {
                (ModelKind::Ppmi | ModelKind::Glove, Some(_)) => {
                    return Err(Error::Config(format!("{} takes no rate profile", m.model.as_str())))
                }
                (ModelKind::External, _) => {
                    return Err(Error::Config("external embeddings cannot be trained".into()))
                }
                _ => {}
            }
            if m.dim == Some(0) || m.epochs == Some(0) || m.window == Some(0) {
                return Err(Error::Config(format!("{}: dim, epochs and window must be positive", m.label())));
            }
        }
        let mut labels: Vec<String> = self.models.iter().map(ModelSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("model `{}` listed twice", w[0])));
        }
        if let Some(noise) = &self.noise {
            if noise.levels.is_empty() {
                return Err(Error::Config("noise.levels is empty".into()));
            }
            for &level in &noise.levels {
                NoiseSpec::new(level, 0)
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            if let NoiseSource::Corpus(code) = &noise.source {
                if !self.corpora.contains_key(code) {
                    return Err(Error::Config(format!("noise source `{code}` is not a configured corpus")));
                }
            }
        }
        Ok(())
    }
}

/// A corpus the commands operate on.
#[derive(Debug, Clone)]
struct Source {
    label: String,
    language: Language,
    path: PathBuf,
    format: CorpusFormat,
}

/// Corpora selected by the config and `--lang`. Generated noise corpora
/// are included when `include_noise` is set; when `require_noise` is also
/// set a missing one is an error, otherwise it is skipped.
fn sources(config: &ExperimentConfig, lang: Option<&str>, require_noise: bool) -> Result<Vec<Source>> {
    let mut out: Vec<Source> = config
        .corpora
        .iter()
        .map(|(code, path)| Source {
            label: code.clone(),
            language: code.parse().unwrap_or_else(|e| match e {}),
            path: path.clone(),
            format: config.format,
        })
        .collect();
    if let Some(noise) = &config.noise {
        let language = match &noise.source {
            NoiseSource::Corpus(code) => code.parse().unwrap_or_else(|e| match e {}),
            NoiseSource::Synthetic(_) => Language::Other("synthetic".into()),
        };
        for &level in &noise.levels {
            let label = NoiseConfig::label(level);
            let path = config.output_dir.join(NOISE_DIR).join(&label);
            if !path.is_dir() {
                if require_noise {
                    return Err(Error::MissingArtifact(path));
                }
                continue;
            }
            out.push(Source {
                label,
                language: language.clone(),
                path,
                format: CorpusFormat::PairedFiles,
            });
        }
    }
    if let Some(lang) = lang {
        out.retain(|s| s.label == lang || s.language.code() == lang);
        if out.is_empty() {
            return Err(Error::Config(format!("no corpus matches --lang {lang}")));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no corpora configured".into()));
    }
    Ok(out)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_source(source: &Source, out_dir: &Path) -> Result<Corpus> {
    let (corpus, report) = load_corpus(&source.path, source.format, source.language.clone())?;
    if !report.skipped.is_empty() {
        log::warn!("{}: skipped {} file(s)", source.label, report.skipped.len());
    }
    let dir = out_dir.join("ingest");
    create_dir(&dir)?;
    report.write_json(&dir.join(format!("{}.json", source.label)))?;
    Ok(corpus)
}

#[derive(Debug, Clone, Serialize)]
struct StatsRow {
    corpus: String,
    #[serde(flatten)]
    stats: CorpusStats,
}

/// Ground-truth statistics per corpus, one CSV row each.
pub fn cmd_stats(config: &ExperimentConfig, overrides: &Overrides) -> Result<()> {
    let sources = sources(config, overrides.lang.as_deref(), false)?;
    let dir = config.output_dir.join("stats");
    create_dir(&dir)?;
    let mut rows = Vec::new();
    for source in &sources {
        let corpus = load_source(source, &config.output_dir)?;
        let mut stats = compute_stats(&corpus, Version::GroundTruth)?;
        stats.split_docs = split_count(&corpus, Version::GroundTruth, config.split_chars);
        info!("{}: {} documents", source.label, stats.total_docs);
        rows.push(StatsRow {
            corpus: source.label.clone(),
            stats,
        });
    }
    let mut csv = String::from("corpus,documents,aligned,split,avg_chars,min_chars,max_chars,total_chars\n");
    for r in &rows {
        let s = &r.stats;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.2},{},{},{}",
            r.corpus, s.total_docs, s.aligned_docs, s.split_docs, s.avg_chars, s.min_chars, s.max_chars, s.total_chars
        );
    }
    write(&dir.join("stats.csv"), &csv)?;
    write(&dir.join("stats.json"), &serde_json::to_string_pretty(&rows)?)
}

pub fn cmd_error_rates(config: &ExperimentConfig, overrides: &Overrides) -> Result<()> {
    let sources = sources(config, overrides.lang.as_deref(), false)?;
    let mut summary = String::from("corpus,documents,mean_cer,mean_wer,excluded,undefined\n");
    for source in &sources {
        let corpus = load_source(source, &config.output_dir)?;
        let report = corpus_error_rates(&corpus)?;
        let dir = config.output_dir.join("error_rates").join(&source.label);
        create_dir(&dir)?;
        report.write(&dir, "")?;
        info!(
            "{}: CER {:.4} WER {:.4}",
            source.label, report.language_mean_cer, report.language_mean_wer
        );
        let _ = writeln!(
            summary,
            "{},{},{:.6},{:.6},{},{}",
            source.label,
            report.per_document.len(),
            report.language_mean_cer,
            report.language_mean_wer,
            report.excluded_docs,
            report.undefined_docs
        );
    }
    write(&config.output_dir.join("error_rates").join("summary.csv"), &summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelRecord {
    pub label: String,
    pub target_cer: f64,
    pub seed: u64,
    pub documents: usize,
    pub measured_cer: f64,
    pub measured_wer: f64,
    pub path: PathBuf,
}

/// Seed for document `doc` at noise level `level`.
fn noise_seed(base: u64, level: usize, doc: usize) -> u64 {
    base.wrapping_add((level as u64) << 32).wrapping_add(doc as u64)
}

/// Writes one paired corpus per configured CER level.
pub fn cmd_noise(config: &ExperimentConfig, _overrides: &Overrides) -> Result<()> {
    let noise = config
        .noise
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `noise` section".into()))?;
    let (language, clean): (Language, Vec<(String, String)>) = match &noise.source {
        NoiseSource::Corpus(code) => {
            let source = sources(config, Some(code), false)?
                .into_iter()
                .find(|s| &s.label == code)
                .ok_or_else(|| Error::Config(format!("unknown corpus `{code}`")))?;
            let corpus = load_source(&source, &config.output_dir)?;
            let docs = corpus
                .documents()
                .iter()
                .map(|d| (d.id.clone(), d.clean_text(Version::GroundTruth)))
                .collect();
            (source.language, docs)
        }
        NoiseSource::Synthetic(spec) => {
            let docs = generate_corpus(spec)?;
            let width = docs.len().to_string().len();
            let docs = docs
                .into_iter()
                .enumerate()
                .map(|(i, t)| (format!("doc{i:0width$}"), t))
                .collect();
            (Language::Other("synthetic".into()), docs)
        }
    };
    let clean: Vec<(String, String)> = clean.into_iter().filter(|(_, t)| !t.is_empty()).collect();
    let root = config.output_dir.join(NOISE_DIR);
    let mut records = Vec::new();
    for (li, &level) in noise.levels.iter().enumerate() {
        let label = NoiseConfig::label(level);
        let docs = clean
            .par_iter()
            .enumerate()
            .map(|(d, (id, text))| {
                let spec = NoiseSpec::new(level, noise_seed(noise.seed, li, d));
                let (ocr, gt) = inject_noise(text, &spec)?;
                let raw = crate::corpus::strip_padding(&ocr);
                Ok(AlignedDocument::new(id.clone(), raw, ocr, gt, language.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let corpus = Corpus::new(docs, language.clone(), Version::Ocr)?;
        let dir = root.join(&label);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        create_dir(&dir)?;
        corpus.write_paired(&dir)?;
        let rates = corpus_error_rates(&corpus)?;
        info!("{label}: measured CER {:.4}", rates.language_mean_cer);
        records.push(NoiseLevelRecord {
            label,
            target_cer: level,
            seed: noise_seed(noise.seed, li, 0),
            documents: corpus.len(),
            measured_cer: rates.language_mean_cer,
            measured_wer: rates.language_mean_wer,
            path: dir,
        });
    }
    write(&root.join(MANIFEST_FILE), &serde_json::to_string_pretty(&records)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model: ModelKind,
    pub version: Version,
    pub run: usize,
    pub seed: u64,
    /// Relative to the output directory.
    pub embedding_path: PathBuf,
    pub train_wall_seconds: f64,
    pub language: String,
    pub rate_profile: Option<RateProfile>,
}

impl ManifestEntry {
    fn label(&self) -> String {
        match self.rate_profile {
            Some(p) => format!("{}-{}", self.model.as_str(), p.as_str()),
            None => self.model.as_str().to_owned(),
        }
    }
}

pub fn read_manifest(out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = out_dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct VersionData {
    corpus: TokenizedCorpus,
    flat: Option<CooccurrenceMatrix>,
    harmonic: Option<CooccurrenceMatrix>,
}

fn prepare_version(corpus: &Corpus, version: Version, source: &Source, config: &ExperimentConfig) -> Result<VersionData> {
    let tokens: Vec<Vec<String>> = corpus
        .documents()
        .par_iter()
        .map(|d| normalize_and_tokenize(&d.clean_text(version)))
        .collect();
    let vocabulary = build_vocabulary(&tokens, config.min_count)?.with_source(source.language.clone(), version);
    let corpus = TokenizedCorpus::encode(&tokens, vocabulary);
    let window_of = |kind| {
        config
            .models
            .iter()
            .find(|m| m.model == kind)
            .map(|m| m.window.unwrap_or(DEFAULT_WINDOW))
    };
    let flat = window_of(ModelKind::Ppmi)
        .map(|w| count_cooccurrences(&corpus, w, Weighting::Flat))
        .transpose()?;
    let harmonic = window_of(ModelKind::Glove)
        .map(|w| count_cooccurrences(&corpus, w, Weighting::HarmonicDistance))
        .transpose()?;
    Ok(VersionData { corpus, flat, harmonic })
}

fn train_one(spec: &ModelSpec, data: &VersionData, tc: &TrainConfig) -> Result<EmbeddingMatrix> {
    let vocab = &data.corpus.vocabulary;
    match spec.model {
        ModelKind::Ppmi => train_ppmi(data.flat.as_ref().expect("flat counts prepared"), vocab),
        ModelKind::Sgns => train_sgns(&data.corpus, tc),
        ModelKind::Cbow => train_cbow(&data.corpus, tc),
        ModelKind::Glove => train_glove(data.harmonic.as_ref().expect("harmonic counts prepared"), vocab, tc),
        ModelKind::External => Err(Error::Config("external embeddings cannot be trained".into())),
    }
}

/// Trains every configured model on both versions of every corpus.
pub fn cmd_train(config: &ExperimentConfig, overrides: &Overrides) -> Result<()> {
    if config.models.is_empty() {
        return Err(Error::Config("no models configured".into()));
    }
    let sources = sources(config, overrides.lang.as_deref(), true)?;
    let mut manifest = match read_manifest(&config.output_dir) {
        Ok(m) => m,
        Err(Error::MissingArtifact(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    for source in &sources {
        let corpus = split_documents(&load_source(source, &config.output_dir)?, config.split_chars)?;
        manifest.retain(|e| e.language != source.label);
        for version in [Version::Ocr, Version::GroundTruth] {
            let data = prepare_version(&corpus, version, source, config)?;
            for spec in &config.models {
                for run in 0..config.runs {
                    let seed = spec.seed.wrapping_add(run as u64);
                    let tc = spec.train_config(&source.language, config.min_count, seed, overrides.deterministic);
                    let started = Instant::now();
                    let mut emb = train_one(spec, &data, &tc)?;
                    let seconds = started.elapsed().as_secs_f64();
                    emb.metadata.run_index = run;
                    let rel = PathBuf::from("embeddings")
                        .join(&source.label)
                        .join(spec.label())
                        .join(format!("{}_run{run}.txt", version.as_str()));
                    let path = config.output_dir.join(&rel);
                    if let Some(parent) = path.parent() {
                        create_dir(parent)?;
                    }
                    if emb.is_sparse() {
                        export_sparse_embeddings(&emb, &path)?;
                    } else {
                        export_embeddings(&emb, &path)?;
                    }
                    info!("{} {} {} run {run}: {:.1}s", source.label, spec.label(), version, seconds);
                    manifest.push(ManifestEntry {
                        model: spec.model,
                        version,
                        run,
                        seed,
                        embedding_path: rel,
                        train_wall_seconds: seconds,
                        language: source.label.clone(),
                        rate_profile: spec.rate_profile,
                    });
                }
            }
        }
    }
    manifest.sort_by(|a, b| {
        (&a.language, a.label(), a.version.as_str(), a.run).cmp(&(&b.language, b.label(), b.version.as_str(), b.run))
    });
    write(&config.output_dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)
}

fn curves_dir(out: &Path) -> PathBuf {
    out.join("curves")
}

fn figures_dir(out: &Path) -> PathBuf {
    out.join("figures")
}

/// Overlap curves for every trained model, averaged over runs, plus one
/// figure per corpus.
pub fn cmd_evaluate(config: &ExperimentConfig, overrides: &Overrides) -> Result<()> {
    let manifest = read_manifest(&config.output_dir)?;
    let mut by_language: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest {
        if overrides.lang.as_deref().is_none_or(|l| l == e.language) {
            by_language.entry(&e.language).or_default().push(e);
        }
    }
    if by_language.is_empty() {
        return Err(Error::Config("manifest has no matching embeddings".into()));
    }
    for (language, entries) in by_language {
        let loaded = entries
            .par_iter()
            .map(|e| {
                let path = config.output_dir.join(&e.embedding_path);
                if !path.is_file() {
                    return Err(Error::MissingArtifact(path));
                }
                import_embeddings(&path)
            })
            .collect::<Result<Vec<_>>>()?;
        let lists: Vec<&[String]> = loaded.iter().map(EmbeddingMatrix::words).collect();
        let words = if lists.len() >= 2 {
            VocabIntersection::from_word_lists(&lists)?.words
        } else {
            return Err(Error::MissingArtifact(config.output_dir.join(MANIFEST_FILE)));
        };
        info!("{language}: intersection of {} words", words.len());

        let mut models: BTreeMap<String, BTreeMap<usize, [Option<usize>; 2]>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            let slot = match e.version {
                Version::Ocr => 0,
                Version::GroundTruth => 1,
            };
            models.entry(e.label()).or_default().entry(e.run).or_default()[slot] = Some(i);
        }
        let dir = curves_dir(&config.output_dir).join(language);
        create_dir(&dir)?;
        let mut series = Vec::new();
        for (label, runs) in models {
            let mut curves = Vec::new();
            for (run, pair) in runs {
                let (Some(o), Some(g)) = (pair[0], pair[1]) else {
                    return Err(Error::MissingArtifact(
                        config.output_dir.join(format!("embeddings/{language}/{label} run {run}")),
                    ));
                };
                curves.push(evaluate_pair(&loaded[o], &loaded[g], &words, &config.n_grid, &config.bootstrap)?);
            }
            let mut curve = average_runs(&curves)?;
            curve.metadata.language = Some(language.to_owned());
            curve.write(&dir.join(format!("{label}.csv")), &dir.join(format!("{label}.json")))?;
            series.push((label, curve.points));
        }
        let svg = render_figure(&format!("Neighbourhood overlap, {language}"), &series);
        write(&figures_dir(&config.output_dir).join(format!("{language}.svg")), &svg)?;
    }
    render_noise_figures(&config.output_dir)
}

fn read_curves(dir: &Path) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let label = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((label, OverlapCurve::points_from_csv(&text)?))
        })
        .collect()
}

fn curve_languages(out: &Path) -> Result<Vec<String>> {
    let dir = curves_dir(out);
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir));
    }
    let mut langs: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    langs.sort();
    Ok(langs)
}

/// One figure per model comparing the generated noise levels.
fn render_noise_figures(out: &Path) -> Result<()> {
    let levels: Vec<String> = curve_languages(out)?
        .into_iter()
        .filter(|l| l.starts_with("cer_"))
        .collect();
    if levels.is_empty() {
        return Ok(());
    }
    let mut by_model: BTreeMap<String, Vec<(String, Vec<CurvePoint>)>> = BTreeMap::new();
    for level in &levels {
        for (model, points) in read_curves(&curves_dir(out).join(level))? {
            by_model.entry(model).or_default().push((level.replace('_', " "), points));
        }
    }
    for (model, series) in by_model {
        let svg = render_figure(&format!("Neighbourhood overlap by injected CER, {model}"), &series);
        write(&figures_dir(out).join(format!("noise_{model}.svg")), &svg)?;
    }
    Ok(())
}

/// Redraws all figures from the curve CSVs on disk.
pub fn cmd_report(config: &ExperimentConfig, overrides: &Overrides) -> Result<()> {
    let out = &config.output_dir;
    for language in curve_languages(out)? {
        if overrides.lang.as_deref().is_some_and(|l| l != language) {
            continue;
        }
        let series = read_curves(&curves_dir(out).join(&language))?;
        let svg = render_figure(&format!("Neighbourhood overlap, {language}"), &series);
        write(&figures_dir(out).join(format!("{language}.svg")), &svg)?;
    }
    render_noise_figures(out)
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Axes-to-pixels mapping of one panel.
struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel {
    fn px(&self, n: f64) -> f64 {
        self.x + (n - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.h
    }

    fn draw(&self, svg: &mut String, series: &[(String, Vec<CurvePoint>)], ticks: usize, font: f64) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="#333"/>"##,
            self.x, self.y, self.w, self.h
        );
        for i in 0..=ticks {
            let t = i as f64 / ticks as f64;
            let xv = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + t * (self.y_range.1 - self.y_range.0);
            let (x, y) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" font-size="{font}" text-anchor="middle">{xv:.2}</text>"##,
                self.y,
                self.y + self.h,
                self.y + self.h + font + 2.0
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" font-size="{font}" text-anchor="end">{yv:.2}</text>"##,
                self.x,
                self.x + self.w,
                self.x - 3.0,
                y + font / 3.0
            );
        }
        for (i, (_, points)) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let visible: Vec<&CurvePoint> = points
                .iter()
                .filter(|p| p.n >= self.x_range.0 - 1e-12 && p.n <= self.x_range.1 + 1e-12)
                .collect();
            if visible.is_empty() {
                continue;
            }
            let clamp = |v: f64| v.clamp(self.y_range.0, self.y_range.1);
            let mut band = String::new();
            for p in &visible {
                let _ = write!(band, "{:.2},{:.2} ", self.px(p.n), self.py(clamp(p.ci_high)));
            }
            for p in visible.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", self.px(p.n), self.py(clamp(p.ci_low)));
            }
            let line: String = visible
                .iter()
                .map(|p| format!("{:.2},{:.2}", self.px(p.n), self.py(clamp(p.mean))))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlap curves with shaded intervals over N in [0.01, 1], and an inset
/// for N in [0.01, 0.2].
pub fn render_figure(title: &str, series: &[(String, Vec<CurvePoint>)]) -> String {
    let (width, height) = (760.0, 520.0);
    let main = Panel {
        x: 60.0,
        y: 40.0,
        w: 520.0,
        h: 420.0,
        x_range: (0.01, 1.0),
        y_range: (0.0, 1.0),
    };
    let inset_points = series
        .iter()
        .flat_map(|(_, ps)| ps.iter().filter(|p| p.n <= 0.2 + 1e-12));
    let (lo, hi) = inset_points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.ci_low), hi.max(p.ci_high))
    });
    let (lo, hi) = if lo.is_finite() {
        let pad = ((hi - lo) * 0.1).max(0.01);
        ((lo - pad).max(0.0), (hi + pad).min(1.0))
    } else {
        (0.0, 1.0)
    };
    let inset = Panel {
        x: 340.0,
        y: 250.0,
        w: 220.0,
        h: 170.0,
        x_range: (0.01, 0.2),
        y_range: (lo, hi),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        main.x + main.w / 2.0,
        escape(title)
    );
    main.draw(&mut svg, series, 10, 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">N (fraction of intersection)</text>"#,
        main.x + main.w / 2.0,
        main.y + main.h + 32.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean overlap</text>"#,
        main.y + main.h / 2.0,
        main.y + main.h / 2.0
    );
    inset.draw(&mut svg, series, 4, 8.0);
    for (i, (label, _)) in series.iter().enumerate() {
        let y = main.y + 10.0 + i as f64 * 18.0;
        let x = main.x + main.w + 20.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="14" height="10" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 20.0,
            y,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"models": [{"model": "sgns", "rate_profile": "slow"}]}"#
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(minimal()).unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.n_grid.len(), 100);
        assert_eq!(c.models[0].seed, 1);
        assert_eq!(c.models[0].label(), "sgns-slow");
        c.validate().unwrap();
    }

    #[test]
    fn validation_errors() {
        let bad = [
            r#"{"runs": 0}"#,
            r#"{"n_grid": [0.0]}"#,
            r#"{"models": [{"model": "ppmi", "rate_profile": "fast"}]}"#,
            r#"{"models": [{"model": "sgns"}, {"model": "sgns"}]}"#,
            r#"{"corpora": {"fr": "/definitely/not/here"}}"#,
            r#"{"noise": {"source": {"corpus": "fr"}, "levels": [0.1]}}"#,
            r#"{"noise": {"source": {"synthetic": {}}, "levels": [1.5]}}"#,
        ];
        for text in bad {
            let err = ExperimentConfig::parse(text).and_then(|c| c.validate()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
        assert!(ExperimentConfig::parse(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn missing_corpus_names_path() {
        let c = ExperimentConfig::parse(r#"{"corpora": {"fr": "/no/such/dir"}}"#).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("/no/such/dir"));
    }

    #[test]
    fn seed_override_replaces_base_seeds() {
        let mut c = ExperimentConfig::parse(minimal()).unwrap();
        c.apply(&Overrides {
            seed: Some(40),
            ..Overrides::default()
        });
        assert_eq!(c.models[0].seed, 40);
    }

    #[test]
    fn dutch_default_dimension() {
        let spec = ExperimentConfig::parse(minimal()).unwrap().models.remove(0);
        assert_eq!(spec.train_config(&Language::Dutch, 5, 1, true).dim, 320);
        assert_eq!(spec.train_config(&Language::French, 5, 1, true).dim, 300);
        assert_eq!(spec.train_config(&Language::French, 5, 1, true).learning_rate, 1e-4);
    }

    #[test]
    fn figure_has_main_panel_inset_and_bands() {
        let points: Vec<CurvePoint> = default_n_grid()
            .into_iter()
            .map(|n| CurvePoint {
                n,
                k: 1,
                mean: n,
                ci_low: n * 0.9,
                ci_high: (n * 1.1).min(1.0),
            })
            .collect();
        let svg = render_figure("t <1>", &[("a".into(), points.clone()), ("b".into(), points)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 4);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("t &lt;1&gt;"));
    }
}
