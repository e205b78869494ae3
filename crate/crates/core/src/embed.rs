//! Word co-occurrence statistics, the shifted positive PMI word–context
//! matrix, and a log-bilinear embedding fit used for diagnostics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedCorpus;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextWindow {
    /// Every pair of positions inside one document co-occurs.
    Document,
    /// Positions at most this far apart co-occur.
    Positions(usize),
}

/// Symmetric word–word counts with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    counts: SparseMatrix,
    window: ContextWindow,
}

impl CooccurrenceMatrix {
    /// Wraps externally built counts after checking shape, symmetry, sign and
    /// the zero diagonal.
    pub fn from_counts(counts: SparseMatrix, window: ContextWindow) -> Result<Self> {
        if counts.rows() != counts.cols() {
            return Err(Error::DimensionMismatch(format!(
                "co-occurrence matrix must be square, got {}x{}",
                counts.rows(),
                counts.cols()
            )));
        }
        for (r, c, v) in counts.triplets() {
            if r == c || v < 0.0 || counts.get(c, r) != v {
                return Err(Error::InvalidParameter(format!(
                    "co-occurrence entry ({r}, {c}) = {v} breaks symmetry, sign or zero diagonal"
                )));
            }
        }
        Ok(CooccurrenceMatrix { counts, window })
    }

    pub fn counts(&self) -> &SparseMatrix {
        &self.counts
    }

    pub fn window(&self) -> ContextWindow {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.counts.rows()
    }
}

pub fn cooccurrence_counts(corpus: &TokenizedCorpus, window: ContextWindow) -> Result<CooccurrenceMatrix> {
    if window == ContextWindow::Positions(0) {
        return Err(Error::InvalidParameter("window must be at least 1".into()));
    }
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for doc in &corpus.docs {
        for (p, &a) in doc.iter().enumerate() {
            let end = match window {
                ContextWindow::Document => doc.len(),
                ContextWindow::Positions(w) => (p + w + 1).min(doc.len()),
            };
            for &b in &doc[p + 1..end] {
                if a != b {
                    *acc.entry((a, b)).or_insert(0.0) += 1.0;
                    *acc.entry((b, a)).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    let m = corpus.vocabulary.len();
    Ok(CooccurrenceMatrix {
        counts: SparseMatrix::from_sorted_map(m, m, acc),
        window,
    })
}

/// Shifted positive PMI matrix S; `kappa` plays the role of the negative
/// sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct WordContextMatrix {
    values: SparseMatrix,
    kappa: f64,
}

impl WordContextMatrix {
    pub fn new(values: SparseMatrix, kappa: f64) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::DimensionMismatch("word-context matrix must be square".into()));
        }
        if values.values().iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter("word-context entries must be finite and >= 0".into()));
        }
        Ok(WordContextMatrix { values, kappa })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.values
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.values.rows()
    }
}

/// One entry of the shifted positive PMI transform.
pub fn shifted_ppmi(xij: f64, row_i: f64, row_j: f64, total: f64, kappa: f64) -> f64 {
    ((xij * total / (row_i * row_j)).ln() - kappa.ln()).max(0.0)
}

/// `S[i][j] = max(ln(X_ij·T / (X_i·X_j)) − ln κ, 0)` over the nonzero
/// entries of X.
pub fn sppmi_matrix(x: &CooccurrenceMatrix, kappa: f64) -> Result<WordContextMatrix> {
    if !(kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    let counts = x.counts();
    let total = counts.sum();
    if counts.nnz() == 0 || total <= 0.0 {
        return Err(Error::ZeroCooccurrence);
    }
    let row_sums = counts.row_sums();
    let values = counts.map_entries(|i, j, xij| {
        shifted_ppmi(xij, row_sums[i], row_sums[j], total, kappa)
    });
    Ok(WordContextMatrix { values, kappa })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub weight_power: f64,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dim: 50,
            epochs: 25,
            learning_rate: 0.05,
            x_max: 100.0,
            weight_power: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    /// M×d word vectors.
    pub word_vectors: DMatrix<f64>,
    /// M×d context vectors.
    pub context_vectors: DMatrix<f64>,
    pub word_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
    pub initial_loss: f64,
    /// Weighted squared error averaged over nonzero entries, after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.word_vectors.ncols()
    }

    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

fn weight(x: f64, params: &EmbeddingParams) -> f64 {
    (x / params.x_max).powf(params.weight_power).min(1.0)
}

struct Entry {
    word: usize,
    context: usize,
    log_x: f64,
    weight: f64,
}

fn mean_loss(model: &EmbeddingModel, entries: &[Entry]) -> f64 {
    let total: f64 = entries
        .iter()
        .map(|e| {
            let diff = model.word_vectors.row(e.word).dot(&model.context_vectors.row(e.context))
                + model.word_bias[e.word]
                + model.context_bias[e.context]
                - e.log_x;
            e.weight * diff * diff
        })
        .sum();
    total / entries.len() as f64
}

/// Fits `w_iᵀw̃_k + b_i + b̃_k ≈ ln X_ik` by AdaGrad over the nonzero
/// entries, visiting them in a seeded shuffled order each epoch.
pub fn fit_embedding(x: &CooccurrenceMatrix, params: &EmbeddingParams) -> Result<EmbeddingModel> {
    if params.dim == 0 {
        return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
    }
    if !(params.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("learning rate must be positive".into()));
    }
    if x.counts().nnz() == 0 {
        return Err(Error::ZeroCooccurrence);
    }
    let m = x.dim();
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(m, d, |_, _| (rng.random::<f64>() - 0.5) / d as f64)
    };
    let word_vectors = init(&mut rng);
    let context_vectors = init(&mut rng);
    let mut model = EmbeddingModel {
        word_vectors,
        context_vectors,
        word_bias: vec![0.0; m],
        context_bias: vec![0.0; m],
        initial_loss: 0.0,
        epoch_losses: Vec::with_capacity(params.epochs),
    };

    let entries: Vec<Entry> = x
        .counts()
        .triplets()
        .map(|(word, context, v)| Entry {
            word,
            context,
            log_x: v.ln(),
            weight: weight(v, params),
        })
        .collect();
    model.initial_loss = mean_loss(&model, &entries);

    let mut grad_w = DMatrix::from_element(m, d, 1.0f64);
    let mut grad_c = DMatrix::from_element(m, d, 1.0f64);
    let mut grad_bw = vec![1.0f64; m];
    let mut grad_bc = vec![1.0f64; m];
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let lr = params.learning_rate;

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let e = &entries[idx];
            let (i, k) = (e.word, e.context);
            let diff = model.word_vectors.row(i).dot(&model.context_vectors.row(k))
                + model.word_bias[i]
                + model.context_bias[k]
                - e.log_x;
            let g = e.weight * diff;
            for c in 0..d {
                let gw = g * model.context_vectors[(k, c)];
                let gc = g * model.word_vectors[(i, c)];
                model.word_vectors[(i, c)] -= lr * gw / grad_w[(i, c)].sqrt();
                model.context_vectors[(k, c)] -= lr * gc / grad_c[(k, c)].sqrt();
                grad_w[(i, c)] += gw * gw;
                grad_c[(k, c)] += gc * gc;
            }
            model.word_bias[i] -= lr * g / grad_bw[i].sqrt();
            model.context_bias[k] -= lr * g / grad_bc[k].sqrt();
            grad_bw[i] += g * g;
            grad_bc[k] += g * g;
        }
        let loss = mean_loss(&model, &entries);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        model.epoch_losses.push(loss);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, TokenizedCorpus};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn corpus(m: usize, docs: Vec<Vec<usize>>) -> TokenizedCorpus {
        let counts = (0..m).map(|i| (format!("w{i:02}"), 1)).collect();
        let n = docs.len();
        TokenizedCorpus {
            vocabulary: Vocabulary::from_counts(counts),
            docs,
            dates: vec![NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(); n],
        }
    }

    #[test]
    fn document_window_counts_all_pairs() {
        let x = cooccurrence_counts(&corpus(3, vec![vec![0, 1, 2]]), ContextWindow::Document).unwrap();
        let c = x.counts();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(c.get(a, b), 1.0);
            assert_eq!(c.get(b, a), 1.0);
        }
        assert_eq!(c.nnz(), 6);
    }

    #[test]
    fn repeated_word_has_zero_diagonal() {
        let x = cooccurrence_counts(&corpus(1, vec![vec![0, 0]]), ContextWindow::Document).unwrap();
        assert_eq!(x.counts().get(0, 0), 0.0);
        assert_eq!(x.counts().nnz(), 0);
    }

    #[test]
    fn positional_window_counts_adjacent_pairs() {
        let x = cooccurrence_counts(&corpus(4, vec![vec![0, 1, 2, 3]]), ContextWindow::Positions(1)).unwrap();
        let c = x.counts();
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(1, 2), 1.0);
        assert_eq!(c.get(2, 3), 1.0);
        assert_eq!(c.get(0, 2), 0.0);
        assert!(cooccurrence_counts(&corpus(1, vec![]), ContextWindow::Positions(0)).is_err());
    }

    #[test]
    fn sppmi_two_words_exclusive() {
        // four documents "a b": X_ab = 4, X_a = X_b = 4, T = 8
        let x = cooccurrence_counts(&corpus(2, vec![vec![0, 1]; 4]), ContextWindow::Document).unwrap();
        let s = sppmi_matrix(&x, 1.0).unwrap();
        assert!((s.matrix().get(0, 1) - 2f64.ln()).abs() < 1e-15);
        let s = sppmi_matrix(&x, 3.0).unwrap();
        assert_eq!(s.matrix().nnz(), 0);
    }

    #[test]
    fn independent_entry_has_zero_score() {
        // P(i,j) = 2/8 = P(i)·P(j) = (4/8)·(4/8)
        assert_eq!(shifted_ppmi(2.0, 4.0, 4.0, 8.0, 1.0), 0.0);
        assert!((shifted_ppmi(4.0, 4.0, 4.0, 8.0, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sppmi_rejects_zero_matrix() {
        let x = cooccurrence_counts(&corpus(1, vec![vec![0]]), ContextWindow::Document).unwrap();
        assert!(matches!(sppmi_matrix(&x, 1.0), Err(Error::ZeroCooccurrence)));
        assert!(matches!(
            fit_embedding(&x, &EmbeddingParams::default()),
            Err(Error::ZeroCooccurrence)
        ));
    }

    #[test]
    fn from_counts_validates() {
        let asym = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        assert!(CooccurrenceMatrix::from_counts(asym, ContextWindow::Document).is_err());
        let diag = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0)]).unwrap();
        assert!(CooccurrenceMatrix::from_counts(diag, ContextWindow::Document).is_err());
    }

    fn rank_one(m: usize) -> CooccurrenceMatrix {
        let u: Vec<f64> = (0..m).map(|i| 0.5 + 0.3 * i as f64).collect();
        let trip = (0..m)
            .flat_map(|i| (0..m).map(move |k| (i, k)))
            .filter(|(i, k)| i != k)
            .map(|(i, k)| (i, k, (u[i] + u[k]).exp()));
        let counts = SparseMatrix::from_triplets(m, m, trip.collect::<Vec<_>>()).unwrap();
        CooccurrenceMatrix::from_counts(counts, ContextWindow::Document).unwrap()
    }

    #[test]
    fn rank_one_log_counts_are_fit() {
        let params = EmbeddingParams {
            dim: 1,
            epochs: 300,
            learning_rate: 0.1,
            seed: 3,
            ..Default::default()
        };
        let model = fit_embedding(&rank_one(8), &params).unwrap();
        assert!(model.final_loss() < 1e-3 * model.initial_loss, "{} vs {}", model.final_loss(), model.initial_loss);
        for w in model.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9, "loss rose: {} -> {}", w[0], w[1]);
        }
        assert!(model.word_vectors.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn embedding_is_deterministic() {
        let params = EmbeddingParams { dim: 3, epochs: 5, seed: 11, ..Default::default() };
        let a = fit_embedding(&rank_one(5), &params).unwrap();
        let b = fit_embedding(&rank_one(5), &params).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn sppmi_symmetric_and_monotone_in_kappa(
            docs in prop::collection::vec(prop::collection::vec(0usize..6, 0..6), 1..10),
            k1 in 1.0f64..4.0, dk in 0.0f64..4.0,
        ) {
            let x = cooccurrence_counts(&corpus(6, docs), ContextWindow::Document).unwrap();
            prop_assume!(x.counts().nnz() > 0);
            let s1 = sppmi_matrix(&x, k1).unwrap();
            let s2 = sppmi_matrix(&x, k1 + dk).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert_eq!(s1.matrix().get(i, j), s1.matrix().get(j, i));
                    prop_assert!(s2.matrix().get(i, j) <= s1.matrix().get(i, j));
                    prop_assert!(s1.matrix().get(i, j) >= 0.0);
                    if x.counts().get(i, j) == 0.0 {
                        prop_assert_eq!(s1.matrix().get(i, j), 0.0);
                    }
                }
            }
        }
    }
}
