use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cooccurrence::{CooccurrenceMatrix, Weighting};
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

use super::{
    init_word_vector, EmbeddingMatrix, EmbeddingMetadata, InitTable, ModelKind, TrainConfig,
    Vectors,
};

/// Cell weight `(x / x_max)^alpha`, capped at 1.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x >= x_max {
        1.0
    } else {
        (x / x_max).powf(alpha)
    }
}

/// Word and context parameters of a GloVe model, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveState {
    pub dim: usize,
    pub word: Vec<f64>,
    pub context: Vec<f64>,
    pub word_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

impl GloveState {
    fn init(vocabulary: &Vocabulary, dim: usize, seed: u64) -> Self {
        let n = vocabulary.len();
        let mut state = GloveState {
            dim,
            word: vec![0.0; n * dim],
            context: vec![0.0; n * dim],
            word_bias: vec![0.0; n],
            context_bias: vec![0.0; n],
        };
        let mut bias = [0.0; 2];
        for (i, w) in vocabulary.words().iter().enumerate() {
            let rows = i * dim..(i + 1) * dim;
            init_word_vector(w, seed, InitTable::Input, dim, &mut state.word[rows.clone()]);
            init_word_vector(w, seed, InitTable::Context, dim, &mut state.context[rows]);
            init_word_vector(w, seed, InitTable::Bias, dim, &mut bias);
            state.word_bias[i] = bias[0];
            state.context_bias[i] = bias[1];
        }
        state
    }

    fn residual(&self, w: usize, c: usize, x: f64) -> f64 {
        let d = self.dim;
        let dot: f64 = self.word[w * d..(w + 1) * d]
            .iter()
            .zip(&self.context[c * d..(c + 1) * d])
            .map(|(a, b)| a * b)
            .sum();
        dot + self.word_bias[w] + self.context_bias[c] - x.ln()
    }

    /// Roles of word and context parameters exchanged.
    pub fn swapped(&self) -> Self {
        GloveState {
            dim: self.dim,
            word: self.context.clone(),
            context: self.word.clone(),
            word_bias: self.context_bias.clone(),
            context_bias: self.word_bias.clone(),
        }
    }
}

/// `Σ f(X_wc) (w·c + b_w + b_c - ln X_wc)²` over the nonzero cells.
pub fn glove_objective(matrix: &CooccurrenceMatrix, state: &GloveState, x_max: f64, alpha: f64) -> f64 {
    matrix
        .cells()
        .map(|(w, c, x)| {
            let r = state.residual(w as usize, c as usize, x);
            glove_weight(x, x_max, alpha) * r * r
        })
        .sum()
}

/// Objective value after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveTrace {
    pub losses: Vec<f64>,
    pub state: GloveState,
}

/// Trains GloVe with AdaGrad and returns the sum of word and context
/// vectors.
pub fn train_glove(
    matrix: &CooccurrenceMatrix,
    vocabulary: &Vocabulary,
    config: &TrainConfig,
) -> Result<EmbeddingMatrix> {
    train_glove_traced(matrix, vocabulary, config).map(|(e, _)| e)
}

pub fn train_glove_traced(
    matrix: &CooccurrenceMatrix,
    vocabulary: &Vocabulary,
    config: &TrainConfig,
) -> Result<(EmbeddingMatrix, GloveTrace)> {
    config.validate(ModelKind::Glove)?;
    if matrix.weighting() != Weighting::HarmonicDistance {
        return Err(Error::InvalidParameter(
            "GloVe needs a harmonic-distance co-occurrence matrix".into(),
        ));
    }
    if matrix.nnz() == 0 {
        return Err(Error::InvalidParameter("co-occurrence matrix has no nonzero cells".into()));
    }
    if matrix.vocab_size() != vocabulary.len() {
        return Err(Error::InvalidParameter(format!(
            "matrix covers {} words, vocabulary has {}",
            matrix.vocab_size(),
            vocabulary.len()
        )));
    }
    let dim = config.dim;
    let (x_max, alpha, lr) = (config.x_max, config.alpha, config.learning_rate);
    let mut state = GloveState::init(vocabulary, dim, config.seed);
    let n = vocabulary.len();
    let mut gsq_word = vec![1.0f64; n * dim];
    let mut gsq_context = vec![1.0f64; n * dim];
    let mut gsq_word_bias = vec![1.0f64; n];
    let mut gsq_context_bias = vec![1.0f64; n];

    let mut cells: Vec<(u32, u32, f64)> = matrix.cells().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        cells.shuffle(&mut rng);
        for &(w, c, x) in &cells {
            let (w, c) = (w as usize, c as usize);
            let fdiff = glove_weight(x, x_max, alpha) * state.residual(w, c, x);
            for d in 0..dim {
                let (i, j) = (w * dim + d, c * dim + d);
                let g_word = fdiff * state.context[j];
                let g_context = fdiff * state.word[i];
                state.word[i] -= lr * g_word / gsq_word[i].sqrt();
                state.context[j] -= lr * g_context / gsq_context[j].sqrt();
                gsq_word[i] += g_word * g_word;
                gsq_context[j] += g_context * g_context;
            }
            state.word_bias[w] -= lr * fdiff / gsq_word_bias[w].sqrt();
            state.context_bias[c] -= lr * fdiff / gsq_context_bias[c].sqrt();
            gsq_word_bias[w] += fdiff * fdiff;
            gsq_context_bias[c] += fdiff * fdiff;
        }
        losses.push(glove_objective(matrix, &state, x_max, alpha));
    }

    let data = state
        .word
        .iter()
        .zip(&state.context)
        .map(|(a, b)| a + b)
        .collect();
    let mut metadata = EmbeddingMetadata::new(ModelKind::Glove);
    metadata.seed = config.seed;
    metadata.learning_rate = Some(lr);
    if let Some(source) = vocabulary.source() {
        metadata.language = Some(source.language.clone());
        metadata.version = Some(source.version);
    }
    let emb = EmbeddingMatrix::new(vocabulary.words().to_vec(), Vectors::Dense { dim, data }, metadata)?;
    Ok((emb, GloveTrace { losses, state }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::count_cooccurrences;
    use crate::preprocess::TokenizedCorpus;
    use rand::Rng;

    fn cfg(dim: usize, epochs: usize) -> TrainConfig {
        let mut c = TrainConfig::new(ModelKind::Glove);
        c.dim = dim;
        c.epochs = epochs;
        c.seed = 5;
        c
    }

    #[test]
    fn weight_is_capped_and_monotone() {
        assert_eq!(glove_weight(100.0, 100.0, 0.75), 1.0);
        assert_eq!(glove_weight(1e6, 100.0, 0.75), 1.0);
        let mut prev = 0.0;
        for i in 1..100 {
            let f = glove_weight(i as f64, 100.0, 0.75);
            assert!(f > prev && f < 1.0);
            prev = f;
        }
    }

    #[test]
    fn single_cell_is_solved() {
        let tc = TokenizedCorpus::from_texts(&["a b"], 1).unwrap();
        let m = CooccurrenceMatrix::from_triples(2, [(0, 1, 100.0)], 5, Weighting::HarmonicDistance).unwrap();
        let (_, trace) = train_glove_traced(&m, &tc.vocabulary, &cfg(10, 500)).unwrap();
        assert!(*trace.losses.last().unwrap() < 1e-6, "{:?}", trace.losses.last());
    }

    fn synthetic_text(words: usize, tokens: usize, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(tokens);
        let mut cur: usize = 0;
        for _ in 0..tokens {
            // Random walk so neighbouring ids co-occur more often.
            cur = (cur + words + rng.gen_range(0..5) - 2) % words;
            out.push(crate::synthetic::pseudo_word(cur, 2));
        }
        out.join(" ")
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let tc = TokenizedCorpus::from_texts(&[synthetic_text(50, 20_000, 1)], 1).unwrap();
        assert_eq!(tc.vocabulary.len(), 50);
        let m = count_cooccurrences(&tc, 5, Weighting::HarmonicDistance).unwrap();
        let (emb, trace) = train_glove_traced(&m, &tc.vocabulary, &cfg(20, 30)).unwrap();
        for pair in trace.losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{pair:?}");
        }
        assert_eq!(emb.dim(), Some(20));
        assert_eq!(emb.len(), 50);
        assert_eq!(emb.zero_rows(), 0);
    }

    #[test]
    fn objective_symmetric_under_role_swap() {
        let tc = TokenizedCorpus::from_texts(&[synthetic_text(30, 3000, 2)], 1).unwrap();
        let m = count_cooccurrences(&tc, 5, Weighting::HarmonicDistance).unwrap();
        assert!(m.is_symmetric());
        let (_, trace) = train_glove_traced(&m, &tc.vocabulary, &cfg(8, 3)).unwrap();
        let a = glove_objective(&m, &trace.state, 100.0, 0.75);
        let b = glove_objective(&m, &trace.state.swapped(), 100.0, 0.75);
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn rejects_flat_and_empty_matrices() {
        let tc = TokenizedCorpus::from_texts(&["a b"], 1).unwrap();
        let flat = count_cooccurrences(&tc, 2, Weighting::Flat).unwrap();
        assert!(train_glove(&flat, &tc.vocabulary, &cfg(4, 1)).is_err());
        let empty = CooccurrenceMatrix::from_triples(2, [], 2, Weighting::HarmonicDistance).unwrap();
        assert!(train_glove(&empty, &tc.vocabulary, &cfg(4, 1)).is_err());
    }
}
