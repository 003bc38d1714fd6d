//! Embedding trainers: PPMI, skip-gram and CBOW with negative sampling, and
//! GloVe, plus text import and export.

mod embedding;
mod glove;
mod ppmi;
mod word2vec;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embedding::{
    export_embeddings, export_sparse_embeddings, import_embeddings, parse_embeddings,
    EmbeddingMatrix, EmbeddingMetadata, ModelKind, Vectors,
};
pub use glove::{glove_objective, glove_weight, train_glove, train_glove_traced, GloveState, GloveTrace};
pub use ppmi::train_ppmi;
pub use word2vec::{
    cbow_gradient, sgns_gradient, train_cbow, train_sgns, CbowGradient, NegativeSamplingGradient,
};

use crate::cooccurrence::DEFAULT_WINDOW;
use crate::error::{Error, Result};
use crate::preprocess::DEFAULT_MIN_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateProfile {
    Fast,
    Slow,
}

impl RateProfile {
    /// Learning rate of the word2vec models under this profile.
    pub fn learning_rate(&self) -> f64 {
        match self {
            RateProfile::Fast => 1e-3,
            RateProfile::Slow => 1e-4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RateProfile::Fast => "fast",
            RateProfile::Slow => "slow",
        }
    }
}

pub const GLOVE_LEARNING_RATE: f64 = 0.05;
pub const GLOVE_X_MAX: f64 = 100.0;
pub const GLOVE_ALPHA: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub min_count: u64,
    pub seed: u64,
    pub rate_profile: Option<RateProfile>,
    /// Worker threads for skip-gram and CBOW. One thread trains
    /// sequentially and is bit-reproducible; more threads update shared
    /// vectors without synchronisation.
    pub threads: usize,
    pub x_max: f64,
    pub alpha: f64,
}

impl TrainConfig {
    pub fn new(model: ModelKind) -> Self {
        let (learning_rate, rate_profile, epochs) = match model {
            ModelKind::Sgns | ModelKind::Cbow => {
                (RateProfile::Slow.learning_rate(), Some(RateProfile::Slow), 5)
            }
            ModelKind::Glove => (GLOVE_LEARNING_RATE, None, 25),
            ModelKind::Ppmi | ModelKind::External => (0.0, None, 1),
        };
        TrainConfig {
            model,
            dim: 300,
            window: DEFAULT_WINDOW,
            learning_rate,
            epochs,
            negative_samples: 5,
            min_count: DEFAULT_MIN_COUNT,
            seed: 1,
            rate_profile,
            threads: 1,
            x_max: GLOVE_X_MAX,
            alpha: GLOVE_ALPHA,
        }
    }

    pub fn with_rate_profile(mut self, profile: RateProfile) -> Self {
        self.rate_profile = Some(profile);
        self.learning_rate = profile.learning_rate();
        self
    }

    pub(crate) fn validate(&self, expected: ModelKind) -> Result<()> {
        if self.model != expected {
            return Err(Error::InvalidParameter(format!(
                "config is for {}, not {}",
                self.model.as_str(),
                expected.as_str()
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Parameter tables that receive their own initialisation stream.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum InitTable {
    Input = 0,
    Context = 1,
    Bias = 2,
}

/// Fills `out` with values uniform in `[-0.5/dim, 0.5/dim]`, seeded by the
/// word itself so a word starts from the same point in every vocabulary.
pub(crate) fn init_word_vector(word: &str, seed: u64, table: InitTable, dim: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(table as u64);
    let bound = 0.5 / dim as f64;
    let dist = Uniform::new_inclusive(-bound, bound);
    for v in out {
        *v = dist.sample(&mut rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_profiles() {
        assert_eq!(RateProfile::Fast.learning_rate(), 1e-3);
        assert_eq!(RateProfile::Slow.learning_rate(), 1e-4);
        let c = TrainConfig::new(ModelKind::Cbow).with_rate_profile(RateProfile::Fast);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(TrainConfig::new(ModelKind::Glove).rate_profile, None);
    }

    #[test]
    fn init_is_word_keyed_and_bounded() {
        let mut a = vec![0.0; 50];
        let mut b = vec![0.0; 50];
        init_word_vector("cat", 3, InitTable::Input, 50, &mut a);
        init_word_vector("cat", 3, InitTable::Input, 50, &mut b);
        assert_eq!(a, b);
        init_word_vector("cat", 3, InitTable::Context, 50, &mut b);
        assert_ne!(a, b);
        init_word_vector("cat", 4, InitTable::Input, 50, &mut b);
        assert_ne!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 0.5 / 50.0));
    }
}
