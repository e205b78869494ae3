//! Headline and price ingestion, tokenization, vocabulary construction and
//! the word–document count matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const DEFAULT_STOP_WORDS: &str = include_str!("../data/stopwords_en.txt");

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, chrono::ParseError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub date: NaiveDate,
    pub raw_text: String,
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::Fields)
        .from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Reads one [`Document`] per data row, in file order; `#` lines are skipped.
/// Row numbers in errors count data rows from 1.
pub fn load_headlines(path: &Path, date_column: &str, text_column: &str) -> Result<Vec<Document>> {
    let mut reader = open_csv(path)?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let date_idx = column_index(&headers, date_column, path)?;
    let text_idx = column_index(&headers, text_column, path)?;

    let mut docs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        let raw_date = record.get(date_idx).unwrap_or_default();
        let date = parse_date(raw_date).map_err(|e| Error::BadRow {
            path: path.to_path_buf(),
            row,
            message: format!("unparseable date `{raw_date}`: {e}"),
        })?;
        docs.push(Document {
            id: docs.len(),
            date,
            raw_text: record.get(text_idx).unwrap_or_default().to_string(),
        });
    }
    Ok(docs)
}

/// Daily closing prices sorted by date.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(mut points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(format!(
                "duplicate price date {}",
                w[0].0
            )));
        }
        let (dates, values) = points.into_iter().unzip();
        Ok(PriceSeries { dates, values })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceLoad {
    pub series: PriceSeries,
    /// Rows skipped because the price cell was empty or a missing marker.
    pub skipped: usize,
}

/// Reads a `date,price` CSV. Empty cells and the `.`/`NA` markers count as
/// missing and are skipped.
pub fn load_prices(path: &Path, date_column: &str, price_column: &str) -> Result<PriceLoad> {
    let mut reader = open_csv(path)?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let date_idx = column_index(&headers, date_column, path)?;
    let price_idx = column_index(&headers, price_column, path)?;

    let mut points = Vec::new();
    let mut skipped = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        let bad = |message: String| Error::BadRow {
            path: path.to_path_buf(),
            row,
            message,
        };
        let raw_date = record.get(date_idx).unwrap_or_default();
        let date =
            parse_date(raw_date).map_err(|e| bad(format!("unparseable date `{raw_date}`: {e}")))?;
        let raw_price = record.get(price_idx).unwrap_or_default();
        if matches!(raw_price, "" | "." | "NA" | "NaN") {
            skipped += 1;
            continue;
        }
        let price: f64 = raw_price
            .parse()
            .map_err(|_| bad(format!("unparseable price `{raw_price}`")))?;
        if !price.is_finite() {
            return Err(bad(format!("non-finite price `{raw_price}`")));
        }
        points.push((date, price));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} rows with missing price", path.display());
    }
    let series = PriceSeries::new(points).map_err(|e| Error::BadRow {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    Ok(PriceLoad { series, skipped })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOP_WORDS)
    }

    pub fn none() -> Self {
        StopWords(HashSet::new())
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        StopWords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Lowercases, splits on every non-letter character, then drops fragments
/// shorter than two characters and stop words. Order is preserved.
pub fn tokenize(raw_text: &str, stop_words: &StopWords) -> Vec<String> {
    raw_text
        .to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= 2 && !stop_words.contains(t))
        .map(str::to_string)
        .collect()
}

/// Strips a handful of common English inflection suffixes. No exception
/// lists; the stem keeps at least three characters.
pub fn naive_stem(token: &str) -> String {
    const SUFFIXES: [&str; 6] = ["ings", "ing", "ies", "ed", "es", "s"];
    for suffix in SUFFIXES {
        let Some(stem) = token.strip_suffix(suffix) else {
            continue;
        };
        let sibilant = ["s", "x", "z", "ch", "sh"].iter().any(|e| stem.ends_with(e));
        let skip = stem.chars().count() < 3
            || (suffix == "es" && !sibilant)
            || (suffix == "s" && stem.ends_with('s'));
        if skip {
            continue;
        }
        return if suffix == "ies" {
            format!("{stem}y")
        } else {
            stem.to_string()
        };
    }
    token.to_string()
}

#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    pub stop_words: StopWords,
    pub stem: bool,
}

impl Tokenizer {
    pub fn new(stop_words: StopWords) -> Self {
        Tokenizer {
            stop_words,
            stem: false,
        }
    }

    pub fn with_stemming(mut self, stem: bool) -> Self {
        self.stem = stem;
        self
    }

    pub fn tokenize(&self, raw_text: &str) -> Vec<String> {
        let tokens = tokenize(raw_text, &self.stop_words);
        if self.stem {
            tokens.iter().map(|t| naive_stem(t)).collect()
        } else {
            tokens
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    /// Terms are stored in ascending lexical order.
    pub fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let mut terms = Vec::with_capacity(counts.len());
        let mut doc_freq = Vec::with_capacity(counts.len());
        for (t, df) in counts {
            terms.push(t);
            doc_freq.push(df);
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            index,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }
}

#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub vocabulary: Vocabulary,
    /// Token ids per document; empty vectors mark documents with no
    /// surviving tokens.
    pub docs: Vec<Vec<usize>>,
    pub dates: Vec<NaiveDate>,
}

impl TokenizedCorpus {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty_doc(&self, doc: usize) -> bool {
        self.docs[doc].is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

/// Tokenizes every document and keeps the terms that occur in at least
/// `min_df` documents.
pub fn build_corpus(docs: &[Document], tokenizer: &Tokenizer, min_df: usize) -> Result<TokenizedCorpus> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("no documents"));
    }
    if min_df == 0 {
        return Err(Error::InvalidParameter("min_df must be at least 1".into()));
    }
    let token_lists: Vec<Vec<String>> = docs.iter().map(|d| tokenizer.tokenize(&d.raw_text)).collect();

    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for tokens in &token_lists {
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        for t in distinct {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    df.retain(|_, n| *n >= min_df);
    if df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vocabulary = Vocabulary::from_counts(df);
    let encoded = token_lists
        .iter()
        .map(|tokens| tokens.iter().filter_map(|t| vocabulary.id(t)).collect())
        .collect();
    Ok(TokenizedCorpus {
        vocabulary,
        docs: encoded,
        dates: docs.iter().map(|d| d.date).collect(),
    })
}

/// Sparse M×N term-frequency counts; rows are terms, columns documents.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocMatrix(pub SparseMatrix);

impl TermDocMatrix {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.0
    }

    pub fn num_terms(&self) -> usize {
        self.0.rows()
    }

    pub fn num_docs(&self) -> usize {
        self.0.cols()
    }
}

pub fn term_document_matrix(corpus: &TokenizedCorpus) -> TermDocMatrix {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (j, doc) in corpus.docs.iter().enumerate() {
        for &t in doc {
            *acc.entry((t, j)).or_insert(0.0) += 1.0;
        }
    }
    TermDocMatrix(SparseMatrix::from_sorted_map(
        corpus.vocabulary.len(),
        corpus.num_docs(),
        acc,
    ))
}
