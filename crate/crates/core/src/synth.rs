//! Synthetic headlines and prices with known structure.
//!
//! [`planted_topic_corpus`] draws headlines from disjoint per-topic
//! vocabularies plus a pool of shared noise words. [`synthetic_dataset`]
//! adds a latent daily topic mixture and sentiment process and builds a
//! trading-day price series whose daily change is driven by the previous
//! trading day's indicators.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Document, PriceSeries};

pub const TOPIC_WORDS: [[&str; 15]; 4] = [
    [
        "crude", "barrel", "opec", "brent", "refinery", "drilling", "output", "wti",
        "shale", "rig", "petroleum", "tanker", "cushing", "inventory", "pipeline",
    ],
    [
        "gold", "bullion", "silver", "ounce", "mint", "jewelry", "platinum", "vault",
        "karat", "miner", "palladium", "bars", "hallmark", "spot", "copper",
    ],
    [
        "natural", "gas", "lng", "heating", "winter", "storage", "henry", "hub",
        "propane", "cold", "furnace", "terminal", "cargo", "utility", "degree",
    ],
    [
        "fed", "rate", "treasury", "yield", "inflation", "payrolls", "dollar", "bond",
        "powell", "minutes", "policy", "hike", "fomc", "economy", "jobs",
    ],
];

pub const NOISE_WORDS: [&str; 30] = [
    "report", "update", "week", "monday", "tuesday", "today", "analysts", "traders",
    "market", "session", "early", "late", "asia", "europe", "news", "latest", "brief",
    "desk", "outlook", "review", "global", "sources", "exclusive", "quarter", "month",
    "daily", "wrap", "focus", "snapshot", "watch",
];

pub const POSITIVE_WORDS: [&str; 8] = [
    "gains", "rally", "surge", "strong", "rebound", "boost", "optimism", "record",
];

pub const NEGATIVE_WORDS: [&str; 8] = [
    "falls", "slump", "weak", "losses", "plunge", "fears", "glut", "crisis",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedCorpusParams {
    pub n_docs: usize,
    pub docs_per_day: usize,
    pub topic_words_per_doc: usize,
    pub noise_words_per_doc: usize,
    pub start: NaiveDate,
}

impl Default for PlantedCorpusParams {
    fn default() -> Self {
        PlantedCorpusParams {
            n_docs: 2000,
            docs_per_day: 5,
            topic_words_per_doc: 4,
            noise_words_per_doc: 1,
            start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub docs: Vec<Document>,
    /// Planted topic of every document.
    pub topic_of_doc: Vec<usize>,
}

impl PlantedCorpus {
    /// Planted topic owning `term`, or `None` for noise and unknown terms.
    pub fn planted_topic(term: &str) -> Option<usize> {
        TOPIC_WORDS.iter().position(|words| words.contains(&term))
    }
}

fn headline(rng: &mut ChaCha8Rng, topic: usize, topic_words: usize, noise_words: usize) -> String {
    let mut words: Vec<&str> = TOPIC_WORDS[topic]
        .choose_multiple(rng, topic_words)
        .copied()
        .collect();
    for _ in 0..noise_words {
        words.push(NOISE_WORDS.choose(rng).copied().unwrap());
    }
    words.join(" ")
}

/// Headlines cycling through the planted topics at random, `docs_per_day`
/// per calendar day.
pub fn planted_topic_corpus(params: &PlantedCorpusParams, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(params.n_docs);
    let mut topic_of_doc = Vec::with_capacity(params.n_docs);
    let per_day = params.docs_per_day.max(1);
    for id in 0..params.n_docs {
        let topic = rng.random_range(0..TOPIC_WORDS.len());
        docs.push(Document {
            id,
            date: params.start + Duration::days((id / per_day) as i64),
            raw_text: headline(
                &mut rng,
                topic,
                params.topic_words_per_doc,
                params.noise_words_per_doc,
            ),
        });
        topic_of_doc.push(topic);
    }
    PlantedCorpus { docs, topic_of_doc }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub calendar_days: usize,
    pub min_headlines_per_day: usize,
    pub max_headlines_per_day: usize,
    pub start: NaiveDate,
    pub start_price: f64,
    pub noise_std: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            calendar_days: 730,
            min_headlines_per_day: 6,
            max_headlines_per_day: 12,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            start_price: 80.0,
            noise_std: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub headlines: Vec<Document>,
    pub prices: PriceSeries,
    /// Latent topic mixture per calendar day.
    pub topic_mixture: Vec<[f64; 4]>,
    /// Latent sentiment per calendar day, in (−1, 1).
    pub sentiment: Vec<f64>,
}

fn is_trading_day(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Headlines over `calendar_days` days plus weekday prices.
///
/// Each day has a persistent latent topic mixture and sentiment level.
/// Headlines pick their topic from the mixture and carry a positive or
/// negative word with probability tied to the sentiment. The price change on
/// trading day `t` is a linear function of the latent indicators averaged
/// over the calendar days folded into trading day `t − 1`, plus Gaussian
/// noise.
pub fn synthetic_dataset(params: &DatasetParams, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = params.calendar_days;
    let mut z = [0.0f64; 4];
    let mut s_latent = 0.0f64;
    let mut topic_mixture = Vec::with_capacity(days);
    let mut sentiment = Vec::with_capacity(days);
    let mut headlines = Vec::new();

    for day in 0..days {
        for zk in z.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *zk = 0.85 * *zk + 0.6 * e;
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        s_latent = 0.9 * s_latent + 0.35 * e;
        let exp: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let total: f64 = exp.iter().sum();
        let mix = [exp[0] / total, exp[1] / total, exp[2] / total, exp[3] / total];
        let sent = s_latent.tanh();
        topic_mixture.push(mix);
        sentiment.push(sent);

        let date = params.start + Duration::days(day as i64);
        let n = rng.random_range(params.min_headlines_per_day..=params.max_headlines_per_day);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut topic = 0;
            let mut acc = mix[0];
            while u > acc && topic < 3 {
                topic += 1;
                acc += mix[topic];
            }
            let noise = usize::from(rng.random_bool(0.5));
            let mut text = headline(&mut rng, topic, 3, noise);
            if rng.random_bool(0.8) {
                let positive = rng.random_bool((1.0 + sent) / 2.0);
                let pool = if positive { &POSITIVE_WORDS } else { &NEGATIVE_WORDS };
                text.push(' ');
                text.push_str(pool.choose(&mut rng).unwrap());
            }
            headlines.push(Document {
                id: headlines.len(),
                date,
                raw_text: text,
            });
        }
    }

    // Fold calendar days into trading days: a trading day absorbs itself and
    // the non-trading days right before it.
    let mut windows: Vec<(NaiveDate, [f64; 4], f64)> = Vec::new();
    let mut acc_mix = [0.0; 4];
    let mut acc_sent = 0.0;
    let mut acc_n = 0usize;
    for day in 0..days {
        for k in 0..4 {
            acc_mix[k] += topic_mixture[day][k];
        }
        acc_sent += sentiment[day];
        acc_n += 1;
        let date = params.start + Duration::days(day as i64);
        if is_trading_day(date) {
            let n = acc_n as f64;
            windows.push((date, acc_mix.map(|v| v / n), acc_sent / n));
            acc_mix = [0.0; 4];
            acc_sent = 0.0;
            acc_n = 0;
        }
    }

    let mut price = params.start_price;
    let mut points = Vec::with_capacity(windows.len());
    for (t, (date, _, _)) in windows.iter().enumerate() {
        if t > 0 {
            let (_, mix, sent) = windows[t - 1];
            let e: f64 = StandardNormal.sample(&mut rng);
            let drive = 4.0 * (mix[0] - 0.25) - 3.0 * (mix[3] - 0.25) + 1.5 * sent;
            let revert = 0.02 * (params.start_price - price);
            price += drive + revert + params.noise_std * e;
        }
        points.push((*date, (price * 1e4).round() / 1e4));
    }

    SyntheticDataset {
        headlines,
        prices: PriceSeries::new(points).expect("trading days are distinct"),
        topic_mixture,
        sentiment,
    }
}
