//! Run configuration: `key = value` files overridden by command-line flags.
//!
//! Every key has a textual default. Values are parsed on assignment and the
//! accepted text is kept, so the canonical rendering (and therefore the
//! fingerprint) reflects exactly what was configured.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use textcast_core::corpus::parse_date;
use textcast_core::embed::ContextWindow;
use textcast_core::eval::Loss;
use textcast_core::learn::{AdaBoostParams, ForestParams, ModelSpec, RfeParams, TreeParams};

/// Bad configuration or unusable input paths. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

type Parsed<T> = std::result::Result<T, InputError>;

fn bad(key: &str, value: &str, why: impl fmt::Display) -> InputError {
    InputError(format!("`{key} = {value}`: {why}"))
}

/// Keys in canonical order with their defaults. An empty value means unset.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("headlines", ""),
    ("prices", ""),
    ("lexicon", ""),
    ("stopwords", ""),
    ("topic_intensity", ""),
    ("sentiment_series", ""),
    ("date_column", "date"),
    ("text_column", "headline"),
    ("price_column", "price"),
    ("min_df", "2"),
    ("stem", "false"),
    ("window", "doc"),
    ("kappa", "1"),
    ("topics_k", "2..10"),
    ("alpha", "1.0"),
    ("max_iter", "300"),
    ("tol", "1e-6"),
    ("top_n", "10"),
    ("embedding_dim", "0"),
    ("embedding_epochs", "25"),
    ("tau", "7"),
    ("p_max", "10"),
    ("difference", "true"),
    ("train_end", ""),
    ("train_fraction", "0.8"),
    ("horizons", "1,2,3"),
    ("models", "ada,rf,arx"),
    ("variants", "text,notext"),
    ("tree_max_depth", "none"),
    ("rf_trees", "100"),
    ("rf_feature_fraction", "1.0"),
    ("rf_max_depth", "none"),
    ("ada_estimators", "30"),
    ("ada_phi", "0.05"),
    ("ada_power", "2"),
    ("ada_learning_rate", "0.01"),
    ("ada_max_depth", "3"),
    ("rfe", "true"),
    ("rfe_normalize", "false"),
    ("rfe_tolerance", "0.01"),
    ("rfe_validation", "0.2"),
    ("baseline", ""),
    ("dm_loss", "squared"),
    ("synth_days", "730"),
    ("seed", "42"),
    ("out", "out"),
];

/// Keys left out of the fingerprint.
const UNFINGERPRINTED: &[&str] = &["out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Text,
    NoText,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Text => "text",
            Variant::NoText => "notext",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    raw: BTreeMap<&'static str, String>,
    pub headlines: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub topic_intensity: Option<PathBuf>,
    pub sentiment_series: Option<PathBuf>,
    pub date_column: String,
    pub text_column: String,
    pub price_column: String,
    pub min_df: usize,
    pub stem: bool,
    pub window: ContextWindow,
    pub kappa: f64,
    pub topics_k: Vec<usize>,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub top_n: usize,
    pub embedding_dim: usize,
    pub embedding_epochs: usize,
    pub tau: f64,
    pub p_max: usize,
    pub difference: bool,
    pub train_end: Option<NaiveDate>,
    pub train_fraction: f64,
    pub horizons: Vec<usize>,
    pub models: Vec<String>,
    pub variants: Vec<Variant>,
    pub tree_max_depth: Option<usize>,
    pub rf_trees: usize,
    pub rf_feature_fraction: f64,
    pub rf_max_depth: Option<usize>,
    pub ada_estimators: usize,
    pub ada_phi: f64,
    pub ada_power: f64,
    pub ada_learning_rate: f64,
    pub ada_max_depth: Option<usize>,
    pub rfe: bool,
    pub rfe_normalize: bool,
    pub rfe_tolerance: f64,
    pub rfe_validation: f64,
    pub baseline: Option<String>,
    pub dm_loss: Loss,
    pub synth_days: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            raw: BTreeMap::new(),
            headlines: None,
            prices: None,
            lexicon: None,
            stopwords: None,
            topic_intensity: None,
            sentiment_series: None,
            date_column: String::new(),
            text_column: String::new(),
            price_column: String::new(),
            min_df: 0,
            stem: false,
            window: ContextWindow::Document,
            kappa: 0.0,
            topics_k: Vec::new(),
            alpha: 0.0,
            max_iter: 0,
            tol: 0.0,
            top_n: 0,
            embedding_dim: 0,
            embedding_epochs: 0,
            tau: 0.0,
            p_max: 0,
            difference: false,
            train_end: None,
            train_fraction: 0.0,
            horizons: Vec::new(),
            models: Vec::new(),
            variants: Vec::new(),
            tree_max_depth: None,
            rf_trees: 0,
            rf_feature_fraction: 0.0,
            rf_max_depth: None,
            ada_estimators: 0,
            ada_phi: 0.0,
            ada_power: 0.0,
            ada_learning_rate: 0.0,
            ada_max_depth: None,
            rfe: false,
            rfe_normalize: false,
            rfe_tolerance: 0.0,
            rfe_validation: 0.0,
            baseline: None,
            dm_loss: Loss::Squared,
            synth_days: 0,
            seed: 0,
            out: PathBuf::new(),
        };
        for (key, value) in DEFAULTS {
            cfg.set(key, value).expect("defaults parse");
        }
        cfg
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Parsed<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn parse_positive(key: &str, value: &str) -> Parsed<f64> {
    let v: f64 = parse_num(key, value)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(bad(key, value, "must be a positive number"));
    }
    Ok(v)
}

fn parse_at_least(key: &str, value: &str, min: usize) -> Parsed<usize> {
    let v: usize = parse_num(key, value)?;
    if v < min {
        return Err(bad(key, value, format!("must be at least {min}")));
    }
    Ok(v)
}

fn parse_fraction(key: &str, value: &str) -> Parsed<f64> {
    let v: f64 = parse_num(key, value)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(bad(key, value, "must lie strictly between 0 and 1"));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Parsed<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_depth(key: &str, value: &str) -> Parsed<Option<usize>> {
    if value == "none" {
        return Ok(None);
    }
    parse_at_least(key, value, 1).map(Some)
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn parse_list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// `a..b` (inclusive), a single count, or a comma list.
pub fn parse_k_range(key: &str, value: &str) -> Parsed<Vec<usize>> {
    let ks: Vec<usize> = if let Some((lo, hi)) = value.split_once("..") {
        let lo = parse_at_least(key, lo.trim(), 1)?;
        let hi = parse_at_least(key, hi.trim().trim_start_matches('='), 1)?;
        if hi < lo {
            return Err(bad(key, value, "empty range"));
        }
        (lo..=hi).collect()
    } else {
        parse_list(value)
            .into_iter()
            .map(|v| parse_at_least(key, v, 1))
            .collect::<Parsed<_>>()?
    };
    if ks.is_empty() {
        return Err(bad(key, value, "no topic counts"));
    }
    let mut sorted = ks.clone();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted)
}

fn parse_horizons(key: &str, value: &str) -> Parsed<Vec<usize>> {
    let mut hs: Vec<usize> = parse_list(value)
        .into_iter()
        .map(|v| parse_at_least(key, v, 1))
        .collect::<Parsed<_>>()?;
    hs.sort_unstable();
    hs.dedup();
    if hs.is_empty() {
        return Err(bad(key, value, "no horizons"));
    }
    Ok(hs)
}

impl RunConfig {
    /// Parses a config file, then applies `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Parsed<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Parsed<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| InputError(format!("{source}: line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| InputError(format!("{source}: line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Parsed<()> {
        let normalized = key.replace('-', "_");
        let Some(&(key, _)) = DEFAULTS.iter().find(|(k, _)| *k == normalized) else {
            return Err(InputError(format!("unknown config key `{key}`")));
        };
        let value = value.trim();
        match key {
            "headlines" => self.headlines = parse_path(value),
            "prices" => self.prices = parse_path(value),
            "lexicon" => self.lexicon = parse_path(value),
            "stopwords" => self.stopwords = parse_path(value),
            "topic_intensity" => self.topic_intensity = parse_path(value),
            "sentiment_series" => self.sentiment_series = parse_path(value),
            "date_column" | "text_column" | "price_column" => {
                if value.is_empty() {
                    return Err(bad(key, value, "column name is empty"));
                }
                let slot = match key {
                    "date_column" => &mut self.date_column,
                    "text_column" => &mut self.text_column,
                    _ => &mut self.price_column,
                };
                *slot = value.to_string();
            }
            "min_df" => self.min_df = parse_at_least(key, value, 1)?,
            "stem" => self.stem = parse_bool(key, value)?,
            "window" => {
                self.window = if value == "doc" {
                    ContextWindow::Document
                } else {
                    ContextWindow::Positions(parse_at_least(key, value, 1)?)
                }
            }
            "kappa" => {
                let v = parse_positive(key, value)?;
                if v < 1.0 {
                    return Err(bad(key, value, "must be at least 1"));
                }
                self.kappa = v;
            }
            "topics_k" => self.topics_k = parse_k_range(key, value)?,
            "alpha" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(key, value, "must be nonnegative"));
                }
                self.alpha = v;
            }
            "max_iter" => self.max_iter = parse_at_least(key, value, 1)?,
            "tol" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(key, value, "must be nonnegative"));
                }
                self.tol = v;
            }
            "top_n" => self.top_n = parse_at_least(key, value, 2)?,
            "embedding_dim" => self.embedding_dim = parse_num(key, value)?,
            "embedding_epochs" => self.embedding_epochs = parse_at_least(key, value, 1)?,
            "tau" => self.tau = parse_positive(key, value)?,
            "p_max" => self.p_max = parse_at_least(key, value, 1)?,
            "difference" => self.difference = parse_bool(key, value)?,
            "train_end" => {
                self.train_end = if value.is_empty() {
                    None
                } else {
                    Some(parse_date(value).map_err(|e| bad(key, value, e))?)
                }
            }
            "train_fraction" => self.train_fraction = parse_fraction(key, value)?,
            "horizons" => self.horizons = parse_horizons(key, value)?,
            "models" => {
                let names: Vec<String> = parse_list(value).into_iter().map(String::from).collect();
                if names.is_empty() {
                    return Err(bad(key, value, "no models"));
                }
                if let Some(unknown) = names.iter().find(|n| ModelSpec::from_name(n).is_none()) {
                    return Err(bad(key, value, format!("unknown model `{unknown}` (tree, rf, ada, arx)")));
                }
                self.models = names;
            }
            "variants" => {
                let mut vs = parse_list(value)
                    .into_iter()
                    .map(|v| match v {
                        "text" => Ok(Variant::Text),
                        "notext" => Ok(Variant::NoText),
                        _ => Err(bad(key, value, format!("unknown variant `{v}` (text, notext)"))),
                    })
                    .collect::<Parsed<Vec<_>>>()?;
                vs.sort_unstable();
                vs.dedup();
                if vs.is_empty() {
                    return Err(bad(key, value, "no variants"));
                }
                self.variants = vs;
            }
            "tree_max_depth" => self.tree_max_depth = parse_depth(key, value)?,
            "rf_trees" => self.rf_trees = parse_at_least(key, value, 1)?,
            "rf_feature_fraction" => {
                let v = parse_positive(key, value)?;
                if v > 1.0 {
                    return Err(bad(key, value, "must be at most 1"));
                }
                self.rf_feature_fraction = v;
            }
            "rf_max_depth" => self.rf_max_depth = parse_depth(key, value)?,
            "ada_estimators" => self.ada_estimators = parse_at_least(key, value, 1)?,
            "ada_phi" => self.ada_phi = parse_num::<f64>(key, value).and_then(|v| {
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(bad(key, value, "must be positive"))
                }
            })?,
            "ada_power" => self.ada_power = parse_positive(key, value)?,
            "ada_learning_rate" => self.ada_learning_rate = parse_positive(key, value)?,
            "ada_max_depth" => self.ada_max_depth = parse_depth(key, value)?,
            "rfe" => self.rfe = parse_bool(key, value)?,
            "rfe_normalize" => self.rfe_normalize = parse_bool(key, value)?,
            "rfe_tolerance" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(key, value, "must be nonnegative"));
                }
                self.rfe_tolerance = v;
            }
            "rfe_validation" => self.rfe_validation = parse_fraction(key, value)?,
            "baseline" => self.baseline = (!value.is_empty()).then(|| value.to_string()),
            "dm_loss" => {
                self.dm_loss = match value {
                    "squared" => Loss::Squared,
                    "absolute" => Loss::Absolute,
                    _ => return Err(bad(key, value, "expected squared or absolute")),
                }
            }
            "synth_days" => self.synth_days = parse_at_least(key, value, 30)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => {
                if value.is_empty() {
                    return Err(bad(key, value, "output directory is empty"));
                }
                self.out = PathBuf::from(value);
            }
            _ => unreachable!("key listed in DEFAULTS"),
        }
        self.raw.insert(key, value.to_string());
        Ok(())
    }

    /// `key = value` lines in canonical key order, without the output
    /// directory.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (key, _) in DEFAULTS {
            if UNFINGERPRINTED.contains(key) {
                continue;
            }
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.raw[key]);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Checks that each named path key is set and points at an existing file.
    pub fn require_files(&self, keys: &[&str]) -> Parsed<()> {
        for key in keys {
            let path = match *key {
                "headlines" => &self.headlines,
                "prices" => &self.prices,
                "lexicon" => &self.lexicon,
                "stopwords" => &self.stopwords,
                "topic_intensity" => &self.topic_intensity,
                "sentiment_series" => &self.sentiment_series,
                _ => unreachable!("not a path key: {key}"),
            };
            match path {
                None => return Err(InputError(format!("`{key}` is required (--{} PATH)", key.replace('_', "-")))),
                Some(p) if !p.is_file() => {
                    return Err(InputError(format!("{key}: {} does not exist or is not a file", p.display())))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Optional path keys must exist when set.
    pub fn check_optional_files(&self) -> Parsed<()> {
        for (key, path) in [("lexicon", &self.lexicon), ("stopwords", &self.stopwords)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(InputError(format!("{key}: {} does not exist or is not a file", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn model_spec(&self, name: &str) -> ModelSpec {
        match name {
            "tree" => ModelSpec::Tree(TreeParams {
                max_depth: self.tree_max_depth,
                ..TreeParams::default()
            }),
            "rf" => ModelSpec::Forest(ForestParams {
                n_trees: self.rf_trees,
                feature_fraction: self.rf_feature_fraction,
                tree: TreeParams {
                    max_depth: self.rf_max_depth,
                    ..TreeParams::default()
                },
                ..ForestParams::default()
            }),
            "ada" => {
                let base = AdaBoostParams::default();
                ModelSpec::Ada(AdaBoostParams {
                    n_estimators: self.ada_estimators,
                    phi: self.ada_phi,
                    power: self.ada_power,
                    learning_rate: self.ada_learning_rate,
                    tree: TreeParams {
                        max_depth: self.ada_max_depth,
                        ..base.tree
                    },
                    ..base
                })
            }
            "arx" => ModelSpec::Arx,
            _ => unreachable!("model names are validated on assignment"),
        }
    }

    pub fn rfe_params(&self) -> RfeParams {
        RfeParams {
            validation_fraction: self.rfe_validation,
            normalize: self.rfe_normalize,
            tie_tolerance: self.rfe_tolerance,
            ..RfeParams::default()
        }
    }

    /// Report label of the DM baseline: the configured one, else the first
    /// model under the first variant.
    pub fn baseline_label(&self) -> String {
        self.baseline
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.models[0], self.variants[0].name()))
    }
}
