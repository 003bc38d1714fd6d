use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::TokenizedCorpus;

use super::{
    init_word_vector, EmbeddingMatrix, EmbeddingMetadata, InitTable, ModelKind, TrainConfig,
    Vectors,
};

/// Final learning rate as a fraction of the initial one.
const MIN_RATE_FRACTION: f64 = 1e-4;
const UNIGRAM_POWER: f64 = 0.75;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss of one logistic term and its derivative with respect to the score.
/// `label` is true for the observed pair and false for a negative sample.
fn logistic_term(score: f64, label: bool) -> (f64, f64) {
    if label {
        (softplus(-score), sigmoid(score) - 1.0)
    } else {
        (softplus(score), sigmoid(score))
    }
}

/// Loss and gradients of the negative-sampling objective
/// `-ln σ(u·p) - Σ ln σ(-u·n)` for one input vector `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSamplingGradient {
    pub loss: f64,
    pub input: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn sgns_gradient(input: &[f64], positive: &[f64], negatives: &[&[f64]]) -> NegativeSamplingGradient {
    let dim = input.len();
    let mut grad_input = vec![0.0; dim];
    let (mut loss, coef) = logistic_term(dot(input, positive), true);
    for d in 0..dim {
        grad_input[d] += coef * positive[d];
    }
    let grad_positive = input.iter().map(|u| coef * u).collect();
    let grad_negatives = negatives
        .iter()
        .map(|n| {
            let (l, coef) = logistic_term(dot(input, n), false);
            loss += l;
            for d in 0..dim {
                grad_input[d] += coef * n[d];
            }
            input.iter().map(|u| coef * u).collect()
        })
        .collect();
    NegativeSamplingGradient {
        loss,
        input: grad_input,
        positive: grad_positive,
        negatives: grad_negatives,
    }
}

/// CBOW loss and gradients: the mean of the context vectors takes the place
/// of the input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowGradient {
    pub loss: f64,
    pub contexts: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn cbow_gradient(contexts: &[&[f64]], target: &[f64], negatives: &[&[f64]]) -> CbowGradient {
    assert!(!contexts.is_empty(), "CBOW needs at least one context vector");
    let dim = target.len();
    let scale = 1.0 / contexts.len() as f64;
    let mut mean = vec![0.0; dim];
    for c in contexts {
        for d in 0..dim {
            mean[d] += c[d] * scale;
        }
    }
    let g = sgns_gradient(&mean, target, negatives);
    let share: Vec<f64> = g.input.iter().map(|v| v * scale).collect();
    CbowGradient {
        loss: g.loss,
        contexts: vec![share; contexts.len()],
        target: g.positive,
        negatives: g.negatives,
    }
}

/// Row-major parameter table whose cells can be updated from several
/// threads without locking. In single-threaded use the reads and writes are
/// ordinary and results are reproducible.
struct SharedTable {
    dim: usize,
    cells: Vec<AtomicU64>,
}

impl SharedTable {
    fn new(rows: usize, dim: usize, mut init: impl FnMut(usize, &mut [f64])) -> Self {
        let mut cells = Vec::with_capacity(rows * dim);
        let mut row = vec![0.0; dim];
        for r in 0..rows {
            init(r, &mut row);
            cells.extend(row.iter().map(|v| AtomicU64::new(v.to_bits())));
        }
        SharedTable { dim, cells }
    }

    fn load(&self, row: u32, out: &mut [f64]) {
        let start = row as usize * self.dim;
        for (o, c) in out.iter_mut().zip(&self.cells[start..start + self.dim]) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn store(&self, row: u32, values: &[f64]) {
        let start = row as usize * self.dim;
        for (v, c) in values.iter().zip(&self.cells[start..start + self.dim]) {
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn add(&self, row: u32, delta: &[f64]) {
        let start = row as usize * self.dim;
        for (d, c) in delta.iter().zip(&self.cells[start..start + self.dim]) {
            let v = f64::from_bits(c.load(Ordering::Relaxed)) + d;
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_values(self) -> Vec<f64> {
        self.cells
            .into_iter()
            .map(|c| f64::from_bits(c.into_inner()))
            .collect()
    }
}

/// Words within `window` positions of `pos`, excluding `pos` itself.
fn context_ids(doc: &[u32], pos: usize, window: usize) -> impl Iterator<Item = u32> + '_ {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(doc.len());
    (lo..hi).filter(move |&j| j != pos).map(|j| doc[j])
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Architecture {
    SkipGram,
    Cbow,
}

struct Trainer<'a> {
    arch: Architecture,
    config: &'a TrainConfig,
    input: SharedTable,
    output: SharedTable,
    negatives: WeightedIndex<f64>,
    processed: AtomicUsize,
    total_work: usize,
}

/// Per-thread scratch buffers.
struct Scratch {
    hidden: Vec<f64>,
    out_row: Vec<f64>,
    accum: Vec<f64>,
    ctx_row: Vec<f64>,
    contexts: Vec<u32>,
}

impl<'a> Trainer<'a> {
    fn rate(&self) -> f64 {
        let progress = self.processed.load(Ordering::Relaxed) as f64 / self.total_work as f64;
        self.config.learning_rate * (1.0 - (1.0 - MIN_RATE_FRACTION) * progress.min(1.0))
    }

    /// One observed pair plus negatives. `hidden` is the input-side vector;
    /// the accumulated input update is added to `s.accum`.
    fn update_pair(&self, target: u32, rng: &mut ChaCha8Rng, lr: f64, s: &mut Scratch) {
        let draws = self.config.negative_samples;
        for i in 0..=draws {
            let (word, label) = if i == 0 {
                (target, true)
            } else {
                let w = self.negatives.sample(rng) as u32;
                if w == target {
                    continue;
                }
                (w, false)
            };
            self.output.load(word, &mut s.out_row);
            let (_, coef) = logistic_term(dot(&s.hidden, &s.out_row), label);
            let step = -lr * coef;
            for d in 0..s.hidden.len() {
                s.accum[d] += step * s.out_row[d];
                s.out_row[d] += step * s.hidden[d];
            }
            self.output.store(word, &s.out_row);
        }
    }

    fn train_document(&self, doc: &[u32], rng: &mut ChaCha8Rng, s: &mut Scratch) {
        let window = self.config.window;
        for (pos, &word) in doc.iter().enumerate() {
            let lr = self.rate();
            s.contexts.clear();
            s.contexts.extend(context_ids(doc, pos, window));
            if !s.contexts.is_empty() {
                match self.arch {
                    Architecture::SkipGram => {
                        for k in 0..s.contexts.len() {
                            let context = s.contexts[k];
                            self.input.load(word, &mut s.hidden);
                            s.accum.fill(0.0);
                            self.update_pair(context, rng, lr, s);
                            self.input.add(word, &s.accum);
                        }
                    }
                    Architecture::Cbow => {
                        let scale = 1.0 / s.contexts.len() as f64;
                        s.hidden.fill(0.0);
                        for k in 0..s.contexts.len() {
                            self.input.load(s.contexts[k], &mut s.ctx_row);
                            for d in 0..s.hidden.len() {
                                s.hidden[d] += s.ctx_row[d] * scale;
                            }
                        }
                        s.accum.fill(0.0);
                        self.update_pair(word, rng, lr, s);
                        for v in s.accum.iter_mut() {
                            *v *= scale;
                        }
                        for k in 0..s.contexts.len() {
                            self.input.add(s.contexts[k], &s.accum);
                        }
                    }
                }
            }
            self.processed.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn run_shard(&self, docs: &[Vec<u32>], rng: &mut ChaCha8Rng) {
        let dim = self.config.dim;
        let mut scratch = Scratch {
            hidden: vec![0.0; dim],
            out_row: vec![0.0; dim],
            accum: vec![0.0; dim],
            ctx_row: vec![0.0; dim],
            contexts: Vec::with_capacity(2 * self.config.window),
        };
        for doc in docs {
            self.train_document(doc, rng, &mut scratch);
        }
    }
}

fn train(corpus: &TokenizedCorpus, config: &TrainConfig, arch: Architecture) -> Result<EmbeddingMatrix> {
    let kind = match arch {
        Architecture::SkipGram => ModelKind::Sgns,
        Architecture::Cbow => ModelKind::Cbow,
    };
    config.validate(kind)?;
    let tokens = corpus.num_tokens();
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let vocab = &corpus.vocabulary;
    let dim = config.dim;
    let weights: Vec<f64> = vocab
        .frequencies()
        .iter()
        .map(|&f| (f as f64).powf(UNIGRAM_POWER))
        .collect();
    let negatives = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidParameter(format!("negative sampling table: {e}")))?;
    let trainer = Trainer {
        arch,
        config,
        input: SharedTable::new(vocab.len(), dim, |r, row| {
            init_word_vector(vocab.word(r as u32), config.seed, InitTable::Input, dim, row)
        }),
        output: SharedTable::new(vocab.len(), dim, |_, row| row.fill(0.0)),
        negatives,
        processed: AtomicUsize::new(0),
        total_work: tokens * config.epochs,
    };

    let threads = config.threads.max(1).min(corpus.documents.len());
    let mut rngs: Vec<ChaCha8Rng> = (0..threads)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            rng
        })
        .collect();
    let shard_len = corpus.documents.len().div_ceil(threads);
    for _ in 0..config.epochs {
        if threads == 1 {
            trainer.run_shard(&corpus.documents, &mut rngs[0]);
        } else {
            std::thread::scope(|scope| {
                for (docs, rng) in corpus.documents.chunks(shard_len).zip(rngs.iter_mut()) {
                    let trainer = &trainer;
                    scope.spawn(move || trainer.run_shard(docs, rng));
                }
            });
        }
    }

    let mut metadata = EmbeddingMetadata::new(kind);
    metadata.seed = config.seed;
    metadata.learning_rate = Some(config.learning_rate);
    if let Some(source) = vocab.source() {
        metadata.language = Some(source.language.clone());
        metadata.version = Some(source.version);
    }
    EmbeddingMatrix::new(
        vocab.words().to_vec(),
        Vectors::Dense {
            dim,
            data: trainer.input.into_values(),
        },
        metadata,
    )
}

/// Skip-gram with negative sampling. Returns the input-side vectors.
pub fn train_sgns(corpus: &TokenizedCorpus, config: &TrainConfig) -> Result<EmbeddingMatrix> {
    train(corpus, config, Architecture::SkipGram)
}

/// CBOW with negative sampling: the averaged context vectors predict the
/// centre word. Returns the input-side (context) vectors.
pub fn train_cbow(corpus: &TokenizedCorpus, config: &TrainConfig) -> Result<EmbeddingMatrix> {
    train(corpus, config, Architecture::Cbow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vector(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()
    }

    fn cfg(kind: ModelKind) -> TrainConfig {
        let mut c = TrainConfig::new(kind);
        c.dim = 8;
        c.window = 2;
        c.learning_rate = 0.025;
        c.epochs = 2;
        c.min_count = 1;
        c.seed = 11;
        c
    }

    fn alternating(tokens: usize) -> TokenizedCorpus {
        let text: Vec<&str> = (0..tokens).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        TokenizedCorpus::from_texts(&[text.join(" ")], 1).unwrap()
    }

    fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) {
        let h = 1e-6;
        for d in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[d] += h;
            m[d] -= h;
            let numeric = (f(&p) - f(&m)) / (2.0 * h);
            let denom = numeric.abs().max(grad[d].abs()).max(1e-8);
            assert!(
                (numeric - grad[d]).abs() / denom < 1e-4,
                "dim {d}: numeric {numeric} analytic {}",
                grad[d]
            );
        }
    }

    #[test]
    fn sgns_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_vector(&mut rng, 6, 1.0);
        let p = random_vector(&mut rng, 6, 1.0);
        let n1 = random_vector(&mut rng, 6, 1.0);
        let n2 = random_vector(&mut rng, 6, 1.0);
        let g = sgns_gradient(&u, &p, &[&n1, &n2]);
        fd_check(|x| sgns_gradient(x, &p, &[&n1, &n2]).loss, &u, &g.input);
        fd_check(|x| sgns_gradient(&u, x, &[&n1, &n2]).loss, &p, &g.positive);
        fd_check(|x| sgns_gradient(&u, &p, &[x, &n2]).loss, &n1, &g.negatives[0]);
    }

    #[test]
    fn cbow_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c1 = random_vector(&mut rng, 5, 1.0);
        let c2 = random_vector(&mut rng, 5, 1.0);
        let t = random_vector(&mut rng, 5, 1.0);
        let n = random_vector(&mut rng, 5, 1.0);
        let g = cbow_gradient(&[&c1, &c2], &t, &[&n]);
        fd_check(|x| cbow_gradient(&[x, &c2], &t, &[&n]).loss, &c1, &g.contexts[0]);
        fd_check(|x| cbow_gradient(&[&c1, &c2], x, &[&n]).loss, &t, &g.target);
        fd_check(|x| cbow_gradient(&[&c1, &c2], &t, &[x]).loss, &n, &g.negatives[0]);
    }

    #[test]
    fn small_step_lowers_frozen_batch_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut decreased = 0;
        for _ in 0..200 {
            let u = random_vector(&mut rng, 10, 1.0);
            let p = random_vector(&mut rng, 10, 1.0);
            let n = random_vector(&mut rng, 10, 1.0);
            let g = sgns_gradient(&u, &p, &[&n]);
            let step = |x: &[f64], gr: &[f64]| -> Vec<f64> {
                x.iter().zip(gr).map(|(a, b)| a - 1e-4 * b).collect()
            };
            let after = sgns_gradient(&step(&u, &g.input), &step(&p, &g.positive), &[&step(&n, &g.negatives[0])]);
            if after.loss < g.loss {
                decreased += 1;
            }
        }
        assert!(decreased >= 190, "{decreased}/200");
    }

    #[test]
    fn context_window_stays_inside_document() {
        let doc = [4, 5, 6];
        assert_eq!(context_ids(&doc, 1, 10).collect::<Vec<_>>(), [4, 6]);
        assert_eq!(context_ids(&doc, 0, 1).collect::<Vec<_>>(), [5]);
        assert_eq!(context_ids(&[7], 0, 5).count(), 0);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sequential_training_is_reproducible() {
        let corpus = alternating(2000);
        for kind in [ModelKind::Sgns, ModelKind::Cbow] {
            let c = cfg(kind);
            let a = if kind == ModelKind::Sgns { train_sgns(&corpus, &c) } else { train_cbow(&corpus, &c) }.unwrap();
            let b = if kind == ModelKind::Sgns { train_sgns(&corpus, &c) } else { train_cbow(&corpus, &c) }.unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dim(), Some(8));
            assert_eq!(a.words(), corpus.vocabulary.words());
            assert_eq!(a.zero_rows(), 0);
        }
    }

    #[test]
    fn training_moves_vectors() {
        let corpus = alternating(10_000);
        let c = cfg(ModelKind::Sgns);
        let trained = train_sgns(&corpus, &c).unwrap();
        let mut init = vec![0.0; 8];
        init_word_vector("a", c.seed, InitTable::Input, 8, &mut init);
        assert_ne!(trained.dense_row(0), init.as_slice());
    }

    #[test]
    fn threaded_mode_produces_full_matrix() {
        let docs: Vec<String> = (0..8).map(|_| "a b c a b c a b c".to_string()).collect();
        let corpus = TokenizedCorpus::from_texts(&docs, 1).unwrap();
        let mut c = cfg(ModelKind::Sgns);
        c.threads = 4;
        let e = train_sgns(&corpus, &c).unwrap();
        assert_eq!(e.len(), 3);
        let Vectors::Dense { data, .. } = e.vectors() else { unreachable!() };
        assert!(data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_configs_rejected() {
        let corpus = alternating(10);
        let mut c = cfg(ModelKind::Sgns);
        c.dim = 0;
        assert!(train_sgns(&corpus, &c).is_err());
        let mut c = cfg(ModelKind::Sgns);
        c.epochs = 0;
        assert!(train_sgns(&corpus, &c).is_err());
        assert!(train_cbow(&corpus, &cfg(ModelKind::Sgns)).is_err());
    }
}
