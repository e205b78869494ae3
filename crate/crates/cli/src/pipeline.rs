//! Pipeline stages. Each stage reads what it needs, adds its artifacts to an
//! [`Outputs`] buffer and hands its result to the next stage.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use log::info;
use textcast_core::corpus::{
    build_corpus, load_headlines, load_prices, term_document_matrix, Document, PriceSeries, StopWords,
    Tokenizer,
};
use textcast_core::derive_seed;
use textcast_core::embed::{cooccurrence_counts, fit_embedding, sppmi_matrix, EmbeddingParams};
use textcast_core::eval::{backtest, compare_models, dm_csv, dm_test, results_csv, BacktestParams, ForecastReport};
use textcast_core::sentiment::{
    daily_sentiment, decayed_sentiment_intensity, headline_polarity, load_lexicon, SentimentIntensitySeries,
    SentimentLexicon,
};
use textcast_core::synth::{synthetic_dataset, DatasetParams};
use textcast_core::topics::{
    select_topic_count, topic_intensity_series, SelectionParams, TopicIntensitySeries, DEFAULT_COHERENCE_EPSILON,
};
use textcast_core::tsfeat::{align_panel, select_lags, transform_series, IndicatorPanel, LagSelection};

use crate::config::{InputError, RunConfig, Variant};
use crate::output::Outputs;

const TOPIC_STREAM: u64 = 1;
const EMBEDDING_STREAM: u64 = 2;
const FORECAST_STREAM: u64 = 3;

pub const TOPIC_INTENSITY_FILE: &str = "topic_intensity.csv";
pub const SENTIMENT_FILE: &str = "sentiment.csv";

fn input(message: String) -> anyhow::Error {
    InputError(message).into()
}

pub fn load_documents(cfg: &RunConfig) -> Result<Vec<Document>> {
    let path = cfg.headlines.as_ref().expect("validated");
    let docs = load_headlines(path, &cfg.date_column, &cfg.text_column)?;
    if docs.is_empty() {
        return Err(input(format!("{}: no headlines", path.display())));
    }
    info!("{} headlines from {}", docs.len(), path.display());
    Ok(docs)
}

pub fn load_price_series(cfg: &RunConfig) -> Result<PriceSeries> {
    let path = cfg.prices.as_ref().expect("validated");
    let series = load_prices(path, &cfg.date_column, &cfg.price_column)?.series;
    if series.is_empty() {
        return Err(input(format!("{}: no prices", path.display())));
    }
    Ok(series)
}

/// Corpus → co-occurrence → SPPMI → SeaNMF for every K, then keywords,
/// coherence table, model files and daily topic intensity.
pub fn stage_topics(cfg: &RunConfig, docs: &[Document], out: &mut Outputs) -> Result<TopicIntensitySeries> {
    let stop_words = match &cfg.stopwords {
        Some(path) => StopWords::load(path)?,
        None => StopWords::english(),
    };
    let tokenizer = Tokenizer::new(stop_words).with_stemming(cfg.stem);
    let corpus = build_corpus(docs, &tokenizer, cfg.min_df).context("building corpus")?;
    info!(
        "vocabulary {} terms over {} documents",
        corpus.vocabulary.len(),
        corpus.num_docs()
    );
    let a = term_document_matrix(&corpus);
    let x = cooccurrence_counts(&corpus, cfg.window).context("counting co-occurrences")?;
    let s = sppmi_matrix(&x, cfg.kappa).context("building the word-context matrix")?;

    if cfg.embedding_dim > 0 {
        let params = EmbeddingParams {
            dim: cfg.embedding_dim,
            epochs: cfg.embedding_epochs,
            seed: derive_seed(cfg.seed, EMBEDDING_STREAM),
            ..EmbeddingParams::default()
        };
        let emb = fit_embedding(&x, &params).context("fitting the embedding")?;
        let mut csv = String::from("epoch,loss\n");
        let _ = writeln!(csv, "0,{}", emb.initial_loss);
        for (i, loss) in emb.epoch_losses.iter().enumerate() {
            let _ = writeln!(csv, "{},{loss}", i + 1);
        }
        out.text("embedding_loss.csv", &csv);
    }

    let params = SelectionParams {
        alpha: cfg.alpha,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        seed: derive_seed(cfg.seed, TOPIC_STREAM),
        top_n: cfg.top_n,
        epsilon: DEFAULT_COHERENCE_EPSILON,
    };
    let selection = select_topic_count(&a, &s, &corpus, &cfg.topics_k, &params).context("fitting topics")?;
    info!("chose K = {}", selection.chosen_k);

    out.text("topics.csv", &selection.summary.to_csv());
    out.text("coherence.csv", &selection.to_csv());
    for (name, contents) in selection.model.to_files() {
        out.text(PathBuf::from("model").join(name), &contents);
    }
    let mut vocab = String::new();
    for term in corpus.vocabulary.terms() {
        vocab.push_str(term);
        vocab.push('\n');
    }
    out.text("model/vocabulary.txt", &vocab);

    let intensity = topic_intensity_series(&selection.model, &corpus.dates).context("topic intensity")?;
    out.text(TOPIC_INTENSITY_FILE, &intensity.to_csv());
    Ok(intensity)
}

/// Headline polarity → daily SV → decayed SI.
pub fn stage_sentiment(cfg: &RunConfig, docs: &[Document], out: &mut Outputs) -> Result<SentimentIntensitySeries> {
    let lexicon = match &cfg.lexicon {
        Some(path) => load_lexicon(path)?,
        None => SentimentLexicon::english(),
    };
    let tokenizer = Tokenizer::new(StopWords::none());
    let scored: Vec<(NaiveDate, f64)> = docs
        .iter()
        .map(|d| (d.date, headline_polarity(&tokenizer.tokenize(&d.raw_text), &lexicon)))
        .collect();
    let daily = daily_sentiment(&scored);
    let si = decayed_sentiment_intensity(&daily, cfg.tau).context("sentiment intensity")?;
    out.text(SENTIMENT_FILE, &si.to_csv());
    Ok(si)
}

pub struct Features {
    pub panel: IndicatorPanel,
    pub lags: LagSelection,
    pub train_end: NaiveDate,
}

/// The configured training cut-off, or the date at `train_fraction` of the
/// aligned panel.
pub fn resolve_train_end(cfg: &RunConfig, panel: &IndicatorPanel) -> Result<NaiveDate> {
    let (first, last) = (panel.dates[0], panel.dates[panel.len() - 1]);
    match cfg.train_end {
        Some(d) if d < first || d >= last => Err(input(format!(
            "train_end {d} must fall within the aligned panel [{first}, {last})"
        ))),
        Some(d) => Ok(d),
        None => {
            let idx = ((panel.len() as f64 * cfg.train_fraction).floor() as usize).clamp(1, panel.len() - 1);
            Ok(panel.dates[idx - 1])
        }
    }
}

/// Alignment, differencing and scaling, and lag selection on training rows.
pub fn stage_features(
    cfg: &RunConfig,
    prices: &PriceSeries,
    topics: &TopicIntensitySeries,
    si: &SentimentIntensitySeries,
    out: &mut Outputs,
) -> Result<Features> {
    let aligned = align_panel(prices, topics, si).context("aligning indicators with prices")?;
    let train_end = resolve_train_end(cfg, &aligned)?;
    let panel = transform_series(&aligned, train_end, cfg.difference).context("transforming the panel")?;
    let lags = select_lags(&panel, cfg.p_max).context("selecting lags")?;
    info!(
        "panel {} rows ({} training), train_end {train_end}",
        panel.len(),
        panel.train_rows()
    );
    out.text("panel.csv", &panel.to_csv());
    out.text("lags.csv", &lags.to_csv());
    Ok(Features { panel, lags, train_end })
}

/// Backtests every (variant, model) over all horizons, then writes reports,
/// the results tables and the DM grid.
pub fn stage_forecast(cfg: &RunConfig, features: &Features, out: &mut Outputs) -> Result<Vec<ForecastReport>> {
    let params = BacktestParams {
        rfe: cfg.rfe_params(),
        skip_rfe: !cfg.rfe,
    };
    let seed = derive_seed(cfg.seed, FORECAST_STREAM);
    let mut reports = Vec::new();
    for &variant in &cfg.variants {
        let lags = match variant {
            Variant::Text => features.lags.clone(),
            Variant::NoText => features.lags.target_only(),
        };
        for name in &cfg.models {
            let spec = cfg.model_spec(name);
            let mut batch = backtest(
                &features.panel,
                &lags,
                &spec,
                variant.name(),
                features.train_end,
                &cfg.horizons,
                &params,
                seed,
            )
            .with_context(|| format!("backtesting {name} ({})", variant.name()))?;
            for r in &mut batch {
                r.fingerprint = out.fingerprint().to_string();
                info!("{} h={}: rmse {:.6}", r.label(), r.horizon, r.metrics.rmse);
            }
            reports.extend(batch);
        }
    }

    for r in &reports {
        let stem = format!("{}-h{}", r.label(), r.horizon);
        out.json(format!("reports/{stem}.json"), r.to_json()?);
        if let Some(rfe) = &r.rfe {
            out.text(format!("rfe/{stem}.csv"), &rfe.to_csv());
        }
    }
    out.text("results.csv", &results_csv(&reports, false));
    out.text("results_raw.csv", &results_csv(&reports, true));

    let baseline = cfg.baseline_label();
    if !reports.iter().any(|r| r.label() == baseline) {
        return Err(input(format!("DM baseline `{baseline}` is not among the fitted models")));
    }
    let rows = compare_models(&reports, &baseline, &cfg.horizons, cfg.dm_loss).context("DM comparisons")?;
    out.text("dm.csv", &dm_csv(&rows));
    Ok(reports)
}

fn indicator_path(explicit: &Option<PathBuf>, cfg: &RunConfig, file: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out.join(file))
}

fn require_indicator_files(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let ti = indicator_path(&cfg.topic_intensity, cfg, TOPIC_INTENSITY_FILE);
    let si = indicator_path(&cfg.sentiment_series, cfg, SENTIMENT_FILE);
    for (key, path) in [("topic_intensity", &ti), ("sentiment_series", &si)] {
        if !path.is_file() {
            return Err(input(format!(
                "{key}: {} does not exist (run `topics` and `sentiment` first, or pass --full)",
                path.display()
            )));
        }
    }
    Ok((ti, si))
}

fn commit(out: Outputs) -> Result<Vec<PathBuf>> {
    let written = out.commit()?;
    for path in &written {
        println!("{}", path.display());
    }
    Ok(written)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let params = DatasetParams {
        calendar_days: cfg.synth_days,
        ..DatasetParams::default()
    };
    let data = synthetic_dataset(&params, cfg.seed);
    let mut out = Outputs::new(&cfg.out, &cfg.fingerprint());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([cfg.date_column.as_str(), cfg.text_column.as_str()])?;
    for d in &data.headlines {
        w.write_record([d.date.to_string(), d.raw_text.clone()])?;
    }
    out.text("headlines.csv", &String::from_utf8(w.into_inner()?)?);

    let mut prices = format!("{},{}\n", cfg.date_column, cfg.price_column);
    for (d, p) in data.prices.dates.iter().zip(&data.prices.values) {
        let _ = writeln!(prices, "{d},{p}");
    }
    out.text("prices.csv", &prices);

    let mut latent = String::from("date,mix1,mix2,mix3,mix4,sentiment\n");
    for (i, (mix, s)) in data.topic_mixture.iter().zip(&data.sentiment).enumerate() {
        let d = params.start + chrono::Duration::days(i as i64);
        let _ = writeln!(latent, "{d},{},{},{},{},{s}", mix[0], mix[1], mix[2], mix[3]);
    }
    out.text("latent.csv", &latent);
    commit(out)
}

pub fn cmd_topics(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require_files(&["headlines"])?;
    cfg.check_optional_files()?;
    let docs = load_documents(cfg)?;
    let mut out = Outputs::new(&cfg.out, &cfg.fingerprint());
    stage_topics(cfg, &docs, &mut out)?;
    commit(out)
}

pub fn cmd_sentiment(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require_files(&["headlines"])?;
    cfg.check_optional_files()?;
    let docs = load_documents(cfg)?;
    let mut out = Outputs::new(&cfg.out, &cfg.fingerprint());
    stage_sentiment(cfg, &docs, &mut out)?;
    commit(out)
}

fn features_from_files(cfg: &RunConfig, out: &mut Outputs) -> Result<Features> {
    cfg.require_files(&["prices"])?;
    let (ti_path, si_path) = require_indicator_files(cfg)?;
    let prices = load_price_series(cfg)?;
    let topics = TopicIntensitySeries::from_csv_path(&ti_path)?;
    let si = SentimentIntensitySeries::from_csv_path(&si_path, cfg.tau)?;
    stage_features(cfg, &prices, &topics, &si, out)
}

pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.out, &cfg.fingerprint());
    features_from_files(cfg, &mut out)?;
    commit(out)
}

/// `full` runs topics, sentiment and features in-process first.
pub fn cmd_forecast(cfg: &RunConfig, full: bool) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.out, &cfg.fingerprint());
    let features = if full {
        cfg.require_files(&["headlines", "prices"])?;
        cfg.check_optional_files()?;
        let docs = load_documents(cfg)?;
        let prices = load_price_series(cfg)?;
        let topics = stage_topics(cfg, &docs, &mut out)?;
        let si = stage_sentiment(cfg, &docs, &mut out)?;
        stage_features(cfg, &prices, &topics, &si, &mut out)?
    } else {
        features_from_files(cfg, &mut out)?
    };
    stage_forecast(cfg, &features, &mut out)?;
    commit(out)
}

/// DM test between two saved reports for the same horizon and test dates.
pub fn cmd_dmtest(cfg: &RunConfig, report_a: &PathBuf, report_b: &PathBuf) -> Result<Vec<PathBuf>> {
    let read = |path: &PathBuf| -> Result<ForecastReport> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        ForecastReport::from_json(&text).map_err(|e| input(format!("{}: {e}", path.display())))
    };
    let a = read(report_a)?;
    let b = read(report_b)?;
    if a.horizon != b.horizon {
        return Err(input(format!("reports have different horizons ({} vs {})", a.horizon, b.horizon)));
    }
    if a.dates() != b.dates() {
        return Err(input("reports cover different test dates".to_string()));
    }
    let result = dm_test(&a.errors(), &b.errors(), a.horizon, cfg.dm_loss)?;
    let mut canonical = cfg.canonical();
    let _ = writeln!(canonical, "report_a = {}", report_a.display());
    let _ = writeln!(canonical, "report_b = {}", report_b.display());
    let fingerprint = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(canonical.as_bytes()))
    };
    let doc = serde_json::json!({
        "a": a.label(),
        "b": b.label(),
        "h": a.horizon,
        "result": result,
        "fingerprint": fingerprint,
    });
    let mut out = Outputs::new(&cfg.out, &fingerprint);
    out.json("dmtest.json", serde_json::to_string_pretty(&doc)?);
    println!(
        "{} vs {} h={}: statistic {} p(two-sided) {} p(a better) {}",
        a.label(),
        b.label(),
        a.horizon,
        result.statistic,
        result.two_sided_p,
        result.p_better
    );
    commit(out)
}
