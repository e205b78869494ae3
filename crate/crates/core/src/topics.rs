//! Semantics-assisted NMF topic model, keyword extraction, PMI coherence,
//! topic-count selection and daily topic intensities.
//!
//! The model jointly factorizes the word–document matrix `A ≈ W Hᵀ` and the
//! word–context matrix `S ≈ W Wcᵀ`, sharing the word factor `W`. All three
//! factors are updated multiplicatively, which keeps them nonnegative and
//! makes the objective
//!
//! ```text
//! ‖A − W Hᵀ‖²_F + α ‖S − W Wcᵀ‖²_F
//! ```
//!
//! non-increasing from one iteration to the next.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TermDocMatrix, TokenizedCorpus, Vocabulary};
use crate::embed::WordContextMatrix;
use crate::error::{Error, Result};
use crate::sparse::{dense_from_triplet_text, dense_to_triplet_text, SparseMatrix};

/// Floor applied to every multiplicative-update denominator.
pub const DENOMINATOR_FLOOR: f64 = 1e-10;

pub const DEFAULT_COHERENCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeanmfParams {
    pub k: usize,
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop once the relative objective decrease of one iteration drops
    /// below this value. Zero runs all `max_iter` iterations.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SeanmfParams {
    fn default() -> Self {
        SeanmfParams {
            k: 4,
            alpha: 1.0,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeanmfModel {
    /// M×K word–topic factor.
    pub w: DMatrix<f64>,
    /// M×K context–topic factor.
    pub wc: DMatrix<f64>,
    /// N×K document–topic factor.
    pub h: DMatrix<f64>,
    pub alpha: f64,
    pub seed: u64,
    /// Objective after initialization followed by one value per iteration.
    pub objective_trace: Vec<f64>,
}

impl SeanmfModel {
    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    /// Document–topic weights with every row scaled to sum to one. Rows
    /// that are entirely zero become the uniform distribution.
    pub fn normalized_doc_topics(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut out = self.h.clone();
        for mut row in out.row_iter_mut() {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row /= total;
            } else {
                row.fill(1.0 / k as f64);
            }
        }
        out
    }

    /// `(file name, contents)` pairs making up the on-disk model directory.
    pub fn to_files(&self) -> Vec<(String, String)> {
        let mut meta = String::new();
        let _ = writeln!(meta, "k = {}", self.k());
        let _ = writeln!(meta, "alpha = {}", self.alpha);
        let _ = writeln!(meta, "seed = {}", self.seed);
        let trace: Vec<String> = self.objective_trace.iter().map(f64::to_string).collect();
        let _ = writeln!(meta, "objective_trace = {}", trace.join(","));
        vec![
            ("W.txt".to_string(), dense_to_triplet_text(&self.w)),
            ("Wc.txt".to_string(), dense_to_triplet_text(&self.wc)),
            ("H.txt".to_string(), dense_to_triplet_text(&self.h)),
            ("meta.txt".to_string(), meta),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, contents) in self.to_files() {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let w = dense_from_triplet_text(&read("W.txt")?, "W.txt")?;
        let wc = dense_from_triplet_text(&read("Wc.txt")?, "Wc.txt")?;
        let h = dense_from_triplet_text(&read("H.txt")?, "H.txt")?;
        let meta_text = read("meta.txt")?;
        let bad = |line: usize, message: String| Error::BadLine {
            source_name: "meta.txt".into(),
            line,
            message,
        };
        let mut alpha = None;
        let mut seed = None;
        let mut trace = None;
        for (i, line) in meta_text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(i + 1, "expected `key = value`".into()))?;
            let value = value.trim();
            match key.trim() {
                "alpha" => alpha = Some(value.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(i + 1, e.to_string()))?),
                "objective_trace" => {
                    trace = Some(
                        value
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(|s| s.trim().parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| bad(i + 1, e.to_string()))?,
                    )
                }
                _ => {}
            }
        }
        let missing = |what: &str| bad(0, format!("missing `{what}`"));
        let trace: Vec<f64> = trace.ok_or_else(|| missing("objective_trace"))?;
        if trace.is_empty() {
            return Err(missing("objective_trace"));
        }
        Ok(SeanmfModel {
            w,
            wc,
            h,
            alpha: alpha.ok_or_else(|| missing("alpha"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            objective_trace: trace,
        })
    }
}

/// `‖X − U Vᵀ‖²_F = ‖X‖² − 2⟨XV, U⟩ + ⟨UᵀU, VᵀV⟩`.
fn residual_sq(x_norm_sq: f64, xv: &DMatrix<f64>, u: &DMatrix<f64>, utu: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let vtv = v.transpose() * v;
    let cross = xv.component_mul(u).sum();
    (x_norm_sq - 2.0 * cross + utu.component_mul(&vtv).sum()).max(0.0)
}

fn objective(
    a: &SparseMatrix,
    s: &SparseMatrix,
    a_norm: f64,
    s_norm: f64,
    alpha: f64,
    m: &SeanmfModel,
) -> f64 {
    let wtw = m.w.transpose() * &m.w;
    let doc_term = residual_sq(a_norm, &a.mul_dense(&m.h), &m.w, &wtw, &m.h);
    let ctx_term = if alpha > 0.0 {
        residual_sq(s_norm, &s.mul_dense(&m.wc), &m.w, &wtw, &m.wc)
    } else {
        0.0
    };
    doc_term + alpha * ctx_term
}

fn multiplicative_step(factor: &mut DMatrix<f64>, numerator: &DMatrix<f64>, denominator: &DMatrix<f64>) {
    for ((x, n), d) in factor.iter_mut().zip(numerator.iter()).zip(denominator.iter()) {
        *x *= n / d.max(DENOMINATOR_FLOOR);
    }
}

pub fn fit_seanmf(a: &TermDocMatrix, s: &WordContextMatrix, params: &SeanmfParams) -> Result<SeanmfModel> {
    let a = a.matrix();
    let s = s.matrix();
    let (m, n, k) = (a.rows(), a.cols(), params.k);
    if s.rows() != m || s.cols() != m {
        return Err(Error::DimensionMismatch(format!(
            "A has {m} terms but S is {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if k < 2 || k >= m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "topic count {k} must satisfy 2 <= K < min(M={m}, N={n})"
        )));
    }
    if !(params.alpha >= 0.0) || !params.alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", params.alpha)));
    }

    let scale = (a.sum() / (m as f64 * n as f64) / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut init = |rows: usize| DMatrix::from_fn(rows, k, |_, _| rng.random::<f64>() * scale);
    let w = init(m);
    let wc = init(m);
    let h = init(n);
    let mut model = SeanmfModel {
        w,
        wc,
        h,
        alpha: params.alpha,
        seed: params.seed,
        objective_trace: Vec::with_capacity(params.max_iter + 1),
    };

    let alpha = params.alpha;
    let a_norm = a.frobenius_sq();
    let s_norm = s.frobenius_sq();
    let first = objective(a, s, a_norm, s_norm, alpha, &model);
    if !first.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    model.objective_trace.push(first);

    for iteration in 1..=params.max_iter {
        // W ← W ∘ (A H + α S Wc) / (W HᵀH + α W WcᵀWc)
        let hth = model.h.transpose() * &model.h;
        let mut num = a.mul_dense(&model.h);
        let mut gram = hth;
        if alpha > 0.0 {
            num += s.mul_dense(&model.wc) * alpha;
            gram += (model.wc.transpose() * &model.wc) * alpha;
        }
        let den = &model.w * gram;
        multiplicative_step(&mut model.w, &num, &den);

        // Wc ← Wc ∘ (Sᵀ W) / (Wc WᵀW)
        let wtw = model.w.transpose() * &model.w;
        if alpha > 0.0 {
            let num = s.tr_mul_dense(&model.w);
            let den = &model.wc * &wtw;
            multiplicative_step(&mut model.wc, &num, &den);
        }

        // H ← H ∘ (Aᵀ W) / (H WᵀW)
        let num = a.tr_mul_dense(&model.w);
        let den = &model.h * &wtw;
        multiplicative_step(&mut model.h, &num, &den);

        debug_assert!(
            model.w.iter().chain(model.wc.iter()).chain(model.h.iter()).all(|v| *v >= 0.0),
            "negative factor entry after iteration {iteration}"
        );

        let value = objective(a, s, a_norm, s_norm, alpha, &model);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { iteration });
        }
        let prev = *model.objective_trace.last().unwrap();
        model.objective_trace.push(value);
        let converged = if prev > 0.0 {
            (prev - value) / prev < params.tol
        } else {
            true
        };
        if converged {
            break;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicKeywords {
    pub term_ids: Vec<usize>,
    pub terms: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceScores {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topics: Vec<TopicKeywords>,
    pub coherence: Option<CoherenceScores>,
}

impl TopicSummary {
    pub fn with_coherence(mut self, scores: CoherenceScores) -> Self {
        self.coherence = Some(scores);
        self
    }

    /// `topic,rank,term,weight` rows; topics and ranks count from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topic,rank,term,weight\n");
        for (t, topic) in self.topics.iter().enumerate() {
            for (r, (term, weight)) in topic.terms.iter().zip(&topic.weights).enumerate() {
                let _ = writeln!(out, "{},{},{},{}", t + 1, r + 1, term, weight);
            }
        }
        out
    }
}

/// Top `top_n` terms per topic by descending `W` weight; ties go to the lower
/// term index.
pub fn topic_keywords(model: &SeanmfModel, vocab: &Vocabulary, top_n: usize) -> Result<TopicSummary> {
    let m = model.w.nrows();
    if vocab.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} terms, model has {m}",
            vocab.len()
        )));
    }
    if top_n > m {
        return Err(Error::InvalidParameter(format!("top_n {top_n} exceeds vocabulary size {m}")));
    }
    let topics = (0..model.k())
        .map(|k| {
            let col = model.w.column(k);
            let mut ids: Vec<usize> = (0..m).collect();
            ids.sort_by(|&i, &j| col[j].total_cmp(&col[i]).then(i.cmp(&j)));
            ids.truncate(top_n);
            TopicKeywords {
                terms: ids.iter().map(|&i| vocab.term(i).to_string()).collect(),
                weights: ids.iter().map(|&i| col[i]).collect(),
                term_ids: ids,
            }
        })
        .collect();
    Ok(TopicSummary {
        topics,
        coherence: None,
    })
}

/// Average over keyword pairs of `ln((D(w₁,w₂) + ε)·N / (D(w₁)·D(w₂)))`
/// using document-level occurrence counts.
pub fn pmi_coherence(summary: &TopicSummary, corpus: &TokenizedCorpus, epsilon: f64) -> Result<CoherenceScores> {
    let n_docs = corpus.num_docs() as f64;
    let vocab = &corpus.vocabulary;
    let mut doc_sets: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    let mut per_topic = Vec::with_capacity(summary.topics.len());
    for topic in &summary.topics {
        if topic.terms.is_empty() {
            return Err(Error::EmptyInput("topic with no keywords"));
        }
        let mut ids = Vec::with_capacity(topic.terms.len());
        for term in &topic.terms {
            let id = vocab.id(term).ok_or_else(|| Error::UnknownKeyword(term.clone()))?;
            doc_sets.entry(id).or_insert_with(|| {
                corpus.docs.iter().map(|d| d.contains(&id)).collect()
            });
            ids.push(id);
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                let (si, sj) = (&doc_sets[&i], &doc_sets[&j]);
                let di = si.iter().filter(|b| **b).count() as f64;
                let dj = sj.iter().filter(|b| **b).count() as f64;
                if di == 0.0 || dj == 0.0 {
                    let missing = if di == 0.0 { i } else { j };
                    return Err(Error::UnknownKeyword(vocab.term(missing).to_string()));
                }
                let dij = si.iter().zip(sj).filter(|(a, b)| **a && **b).count() as f64;
                total += ((dij + epsilon) * n_docs / (di * dj)).ln();
                pairs += 1;
            }
        }
        per_topic.push(if pairs == 0 { 0.0 } else { total / pairs as f64 });
    }
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.iter().sum::<f64>() / per_topic.len() as f64
    };
    Ok(CoherenceScores { per_topic, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCountSelection {
    pub chosen_k: usize,
    /// `(K, mean coherence)` for every candidate, in the order given.
    pub scores: Vec<(usize, f64)>,
    pub model: SeanmfModel,
    pub summary: TopicSummary,
}

impl TopicCountSelection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,coherence,chosen\n");
        for (k, score) in &self.scores {
            let _ = writeln!(out, "{k},{score},{}", u8::from(*k == self.chosen_k));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub top_n: usize,
    pub epsilon: f64,
}

/// Fits one model per candidate K (seed derived from the base seed and K),
/// scores each by mean PMI coherence of its top keywords and keeps the best;
/// ties go to the smaller K.
pub fn select_topic_count(
    a: &TermDocMatrix,
    s: &WordContextMatrix,
    corpus: &TokenizedCorpus,
    k_range: &[usize],
    params: &SelectionParams,
) -> Result<TopicCountSelection> {
    if k_range.is_empty() {
        return Err(Error::EmptyInput("topic-count range"));
    }
    let top_n = params.top_n.min(corpus.vocabulary.len());
    let fits: Vec<Result<(usize, SeanmfModel, TopicSummary)>> = k_range
        .par_iter()
        .map(|&k| {
            let fit_params = SeanmfParams {
                k,
                alpha: params.alpha,
                max_iter: params.max_iter,
                tol: params.tol,
                seed: crate::derive_seed(params.seed, k as u64),
            };
            let model = fit_seanmf(a, s, &fit_params)?;
            let summary = topic_keywords(&model, &corpus.vocabulary, top_n)?;
            let scores = pmi_coherence(&summary, corpus, params.epsilon)?;
            Ok((k, model, summary.with_coherence(scores)))
        })
        .collect();

    let mut scores = Vec::with_capacity(fits.len());
    let mut best: Option<(usize, SeanmfModel, TopicSummary)> = None;
    for fit in fits {
        let (k, model, summary) = fit?;
        let score = summary.coherence.as_ref().map_or(0.0, |c| c.mean);
        scores.push((k, score));
        let better = match &best {
            None => true,
            Some((bk, _, bs)) => {
                let bscore = bs.coherence.as_ref().map_or(0.0, |c| c.mean);
                score > bscore || (score == bscore && k < *bk)
            }
        };
        if better {
            best = Some((k, model, summary));
        }
    }
    let (chosen_k, model, summary) = best.expect("nonempty range");
    Ok(TopicCountSelection {
        chosen_k,
        scores,
        model,
        summary,
    })
}

/// Daily averages of normalized document–topic weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicIntensitySeries {
    pub dates: Vec<NaiveDate>,
    /// One row of K intensities per date.
    pub values: Vec<Vec<f64>>,
    /// Headlines per date.
    pub counts: Vec<usize>,
}

impl TopicIntensitySeries {
    pub fn k(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,n_docs");
        for k in 1..=self.k() {
            let _ = write!(out, ",topic{k}");
        }
        out.push('\n');
        for ((date, row), n) in self.dates.iter().zip(&self.values).zip(&self.counts) {
            let _ = write!(out, "{date},{n}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Reads the `date,n_docs,topic1..topicK` layout written by [`Self::to_csv`].
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        let missing = |column: &str| Error::MissingColumn {
            path: path.to_path_buf(),
            column: column.into(),
        };
        if headers.get(0) != Some("date") {
            return Err(missing("date"));
        }
        if headers.get(1) != Some("n_docs") {
            return Err(missing("n_docs"));
        }
        let k = headers.len() - 2;
        let mut series = TopicIntensitySeries {
            dates: Vec::new(),
            values: Vec::new(),
            counts: Vec::new(),
        };
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let bad = |message: String| Error::BadRow {
                path: path.to_path_buf(),
                row: i + 1,
                message,
            };
            let date = crate::corpus::parse_date(&record[0]).map_err(|e| bad(e.to_string()))?;
            let n = record[1].parse().map_err(|_| bad(format!("bad count `{}`", &record[1])))?;
            let row = (0..k)
                .map(|c| record[c + 2].parse::<f64>().map_err(|_| bad(format!("bad value `{}`", &record[c + 2]))))
                .collect::<Result<Vec<_>>>()?;
            series.dates.push(date);
            series.counts.push(n);
            series.values.push(row);
        }
        Ok(series)
    }
}

/// `TI_it` = mean over the documents dated `t` of the row-normalized weight
/// of topic `i`. Days without documents are absent.
pub fn topic_intensity_series(model: &SeanmfModel, dates: &[NaiveDate]) -> Result<TopicIntensitySeries> {
    if model.h.nrows() != dates.len() {
        return Err(Error::DimensionMismatch(format!(
            "H has {} rows but {} document dates were given",
            model.h.nrows(),
            dates.len()
        )));
    }
    let k = model.k();
    let weights = model.normalized_doc_topics();
    let mut days: BTreeMap<NaiveDate, (Vec<f64>, usize)> = BTreeMap::new();
    for (j, date) in dates.iter().enumerate() {
        let (sum, n) = days.entry(*date).or_insert_with(|| (vec![0.0; k], 0));
        for (s, w) in sum.iter_mut().zip(weights.row(j).iter()) {
            *s += w;
        }
        *n += 1;
    }
    let mut out = TopicIntensitySeries {
        dates: Vec::with_capacity(days.len()),
        values: Vec::with_capacity(days.len()),
        counts: Vec::with_capacity(days.len()),
    };
    for (date, (sum, n)) in days {
        out.dates.push(date);
        out.values.push(sum.into_iter().map(|s| s / n as f64).collect());
        out.counts.push(n);
    }
    Ok(out)
}
