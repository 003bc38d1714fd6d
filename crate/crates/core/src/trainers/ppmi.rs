use crate::cooccurrence::CooccurrenceMatrix;
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

use super::{EmbeddingMatrix, EmbeddingMetadata, ModelKind, Vectors};

/// Positive pointwise mutual information rows as sparse word vectors.
///
/// Cell `(w, c)` holds `max(log2(X(w,c) * T / (R(w) * R(c))), 0)` where `R`
/// are the row sums and `T` the total; empty and non-positive cells are
/// left out of the row.
pub fn train_ppmi(matrix: &CooccurrenceMatrix, vocabulary: &Vocabulary) -> Result<EmbeddingMatrix> {
    if !(matrix.total() > 0.0) {
        return Err(Error::InvalidParameter("co-occurrence total must be positive".into()));
    }
    if matrix.vocab_size() != vocabulary.len() {
        return Err(Error::InvalidParameter(format!(
            "matrix covers {} words, vocabulary has {}",
            matrix.vocab_size(),
            vocabulary.len()
        )));
    }
    let total = matrix.total();
    let sums = matrix.row_sums();
    let rows = matrix
        .rows()
        .iter()
        .enumerate()
        .map(|(w, row)| {
            row.iter()
                .filter_map(|&(c, x)| {
                    let pmi = (x * total / (sums[w] * sums[c as usize])).log2();
                    (pmi > 0.0).then_some((c, pmi))
                })
                .collect()
        })
        .collect();
    EmbeddingMatrix::new(
        vocabulary.words().to_vec(),
        Vectors::Sparse {
            columns: vocabulary.len(),
            rows,
        },
        EmbeddingMetadata::new(ModelKind::Ppmi),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::{count_cooccurrences, Weighting};
    use crate::preprocess::TokenizedCorpus;

    fn vocab(n: usize) -> Vocabulary {
        let tokens: Vec<Vec<String>> = vec![(0..n).map(|i| format!("w{i:03}")).collect()];
        crate::preprocess::build_vocabulary(&tokens, 1).unwrap()
    }

    #[test]
    fn independent_pair_is_zero() {
        // 2x2 table with P(w,c) = P(w)P(c) everywhere.
        let m = CooccurrenceMatrix::from_triples(
            2,
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
            1,
            Weighting::Flat,
        )
        .unwrap();
        let e = train_ppmi(&m, &vocab(2)).unwrap();
        match e.vectors() {
            Vectors::Sparse { rows, .. } => assert!(rows.iter().all(Vec::is_empty)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn alternating_corpus_matches_dense_formula() {
        let tc = TokenizedCorpus::from_texts(&["a b a b a b"], 1).unwrap();
        let m = count_cooccurrences(&tc, 1, Weighting::Flat).unwrap();
        let e = train_ppmi(&m, &tc.vocabulary).unwrap();
        // counts: (a,b)=5, (b,a)=5, total 10, row sums 5 and 5.
        let expected = (5.0f64 / 10.0 / (0.5 * 0.5)).log2();
        let Vectors::Sparse { rows, .. } = e.vectors() else { unreachable!() };
        assert_eq!(rows[0].len(), 1);
        assert!((rows[0][0].1 - expected).abs() < 1e-12);
        assert!((rows[1][0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_pmi_is_dropped() {
        let m = CooccurrenceMatrix::from_triples(
            2,
            [(0, 0, 10.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 10.0)],
            1,
            Weighting::Flat,
        )
        .unwrap();
        let e = train_ppmi(&m, &vocab(2)).unwrap();
        let Vectors::Sparse { rows, .. } = e.vectors() else { unreachable!() };
        assert_eq!(rows[0].iter().map(|&(c, _)| c).collect::<Vec<_>>(), [0]);
        assert!(rows.iter().flatten().all(|&(_, v)| v > 0.0));
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = CooccurrenceMatrix::from_triples(2, [], 1, Weighting::Flat).unwrap();
        assert!(train_ppmi(&m, &vocab(2)).is_err());
    }
}
