//! Lexicon headline polarity, daily sentiment values and the exponentially
//! decayed sentiment intensity.
//!
//! Lexicon files are UTF-8 and tab separated. Lines before any section
//! header, or under `[polarity]`, are `term<TAB>polarity` with polarity in
//! [−1, 1]. Under `[negations]` each line is a single term; under
//! `[intensifiers]` lines are `term<TAB>multiplier` with a positive
//! multiplier. `#` starts a comment line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon_en.tsv");

pub const DEFAULT_TAU: f64 = 7.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    polarity: HashMap<String, f64>,
    negations: HashSet<String>,
    intensifiers: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn new(
        polarity: HashMap<String, f64>,
        negations: HashSet<String>,
        intensifiers: HashMap<String, f64>,
    ) -> Result<Self> {
        if let Some((t, p)) = polarity.iter().find(|(_, p)| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!("polarity of `{t}` is {p}, outside [-1, 1]")));
        }
        if let Some((t, m)) = intensifiers.iter().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter(format!("multiplier of `{t}` is {m}, must be > 0")));
        }
        Ok(SentimentLexicon {
            polarity,
            negations,
            intensifiers,
        })
    }

    /// The bundled finance-oriented English lexicon.
    pub fn english() -> Self {
        Self::parse(DEFAULT_LEXICON, "lexicon_en.tsv").expect("bundled lexicon is valid")
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            Polarity,
            Negations,
            Intensifiers,
        }
        let bad = |line: usize, message: String| Error::BadLine {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut section = Section::Polarity;
        let mut lex = SentimentLexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[polarity]" => {
                    section = Section::Polarity;
                    continue;
                }
                "[negations]" => {
                    section = Section::Negations;
                    continue;
                }
                "[intensifiers]" => {
                    section = Section::Intensifiers;
                    continue;
                }
                _ if line.starts_with('[') => {
                    return Err(bad(line_no, format!("unknown section `{line}`")));
                }
                _ => {}
            }
            if section == Section::Negations {
                if line.contains('\t') {
                    return Err(bad(line_no, "negation lines hold a single term".into()));
                }
                lex.negations.insert(line.to_lowercase());
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(term), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad(line_no, "expected `term<TAB>value`".into()));
            };
            let term = term.trim().to_lowercase();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(line_no, format!("unparseable number `{}`", value.trim())))?;
            if term.is_empty() {
                return Err(bad(line_no, "empty term".into()));
            }
            match section {
                Section::Polarity => {
                    if !(-1.0..=1.0).contains(&value) {
                        return Err(bad(line_no, format!("polarity {value} outside [-1, 1]")));
                    }
                    lex.polarity.insert(term, value);
                }
                Section::Intensifiers => {
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(bad(line_no, format!("multiplier {value} must be > 0")));
                    }
                    lex.intensifiers.insert(term, value);
                }
                Section::Negations => unreachable!(),
            }
        }
        Ok(lex)
    }

    pub fn polarity(&self, term: &str) -> Option<f64> {
        self.polarity.get(term).copied()
    }

    pub fn is_negation(&self, term: &str) -> bool {
        self.negations.contains(term)
    }

    pub fn intensifier(&self, term: &str) -> Option<f64> {
        self.intensifiers.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.polarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarity.is_empty()
    }
}

pub fn load_lexicon(path: &Path) -> Result<SentimentLexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SentimentLexicon::parse(&text, &path.display().to_string())
}

/// Mean adjusted polarity of the lexicon-matched tokens, clamped to [−1, 1].
///
/// A matched token's polarity is multiplied by the intensifier immediately
/// before it, if any, and flipped when a negation term appears among the two
/// preceding tokens. Headlines without matches score 0.
pub fn headline_polarity<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> f64 {
    let mut total = 0.0;
    let mut matched = 0usize;
    for (i, token) in tokens.iter().enumerate() {
        let Some(mut score) = lexicon.polarity(token.as_ref()) else {
            continue;
        };
        if i >= 1 {
            if let Some(mult) = lexicon.intensifier(tokens[i - 1].as_ref()) {
                score *= mult;
            }
        }
        if tokens[i.saturating_sub(2)..i].iter().any(|t| lexicon.is_negation(t.as_ref())) {
            score = -score;
        }
        total += score;
        matched += 1;
    }
    if matched == 0 {
        0.0
    } else {
        (total / matched as f64).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySentiment {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

/// `SV_t` = mean headline polarity over the headlines dated `t`.
pub fn daily_sentiment(scored: &[(NaiveDate, f64)]) -> DailySentiment {
    let mut days: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for (date, pv) in scored {
        let e = days.entry(*date).or_insert((0.0, 0));
        e.0 += pv;
        e.1 += 1;
    }
    let mut out = DailySentiment {
        dates: Vec::with_capacity(days.len()),
        values: Vec::with_capacity(days.len()),
        counts: Vec::with_capacity(days.len()),
    };
    for (date, (sum, n)) in days {
        out.dates.push(date);
        out.values.push(sum / n as f64);
        out.counts.push(n);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentIntensitySeries {
    pub dates: Vec<NaiveDate>,
    pub sv: Vec<f64>,
    pub si: Vec<f64>,
    pub tau: f64,
}

impl SentimentIntensitySeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,sv,si\n");
        for ((d, sv), si) in self.dates.iter().zip(&self.sv).zip(&self.si) {
            let _ = writeln!(out, "{d},{sv},{si}");
        }
        out
    }

    /// Reads the `date,sv,si` layout written by [`Self::to_csv`].
    pub fn from_csv_path(path: &Path, tau: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        for (i, col) in ["date", "sv", "si"].iter().enumerate() {
            if headers.get(i) != Some(*col) {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: col.to_string(),
                });
            }
        }
        let mut out = SentimentIntensitySeries {
            dates: Vec::new(),
            sv: Vec::new(),
            si: Vec::new(),
            tau,
        };
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let bad = |message: String| Error::BadRow {
                path: path.to_path_buf(),
                row: i + 1,
                message,
            };
            out.dates.push(crate::corpus::parse_date(&record[0]).map_err(|e| bad(e.to_string()))?);
            out.sv.push(record[1].parse().map_err(|_| bad(format!("bad sv `{}`", &record[1])))?);
            out.si.push(record[2].parse().map_err(|_| bad(format!("bad si `{}`", &record[2])))?);
        }
        Ok(out)
    }
}

/// Weight `e^{−m/τ}` of news released `m` days earlier.
pub fn decay_weight(days_after: f64, tau: f64) -> f64 {
    (-days_after / tau).exp()
}

/// `SI_t = SV_t + Σ_{i<t} e^{−(t−i)/τ}·SV_i` over calendar days, computed by
/// the recursion `SI_t = SV_t + e^{−gap/τ}·SI_prev`. Newsless days count as
/// `SV = 0`, so a gap of `g` days decays the carried history by `e^{−g/τ}`.
pub fn decayed_sentiment_intensity(sv: &DailySentiment, tau: f64) -> Result<SentimentIntensitySeries> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if sv.dates.len() != sv.values.len() {
        return Err(Error::DimensionMismatch("sentiment dates and values differ in length".into()));
    }
    if let Some(pos) = sv.dates.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedDates(pos + 1));
    }
    let mut si = Vec::with_capacity(sv.values.len());
    let mut carried = 0.0;
    let mut prev: Option<NaiveDate> = None;
    for (date, value) in sv.dates.iter().zip(&sv.values) {
        let decayed = match prev {
            Some(p) => carried * decay_weight((*date - p).num_days() as f64, tau),
            None => 0.0,
        };
        carried = value + decayed;
        si.push(carried);
        prev = Some(*date);
    }
    Ok(SentimentIntensitySeries {
        dates: sv.dates.clone(),
        sv: sv.values.clone(),
        si,
        tau,
    })
}
