use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use textcast_cli::{exit_code, pipeline, RunConfig};

#[derive(Parser)]
#[command(name = "textcast", version, about = "Forecast prices from news-headline topics and sentiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic headline corpus and price series.
    Synth {
        #[command(flatten)]
        common: ConfigArgs,
        /// Calendar days to simulate.
        #[arg(long)]
        days: Option<String>,
    },
    /// Fit topic models and write keywords, coherence and topic intensity.
    Topics(ConfigArgs),
    /// Score headlines and write the sentiment-intensity series.
    Sentiment(ConfigArgs),
    /// Align indicators with prices and select lags.
    Features(ConfigArgs),
    /// Backtest every model and horizon, then compare them.
    Forecast {
        #[command(flatten)]
        common: ConfigArgs,
        /// Run topics, sentiment and features in-process first.
        #[arg(long)]
        full: bool,
        /// Only the price-lag variant.
        #[arg(long)]
        no_text: bool,
    },
    /// Diebold–Mariano test between two saved forecast reports.
    Dmtest {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        report_a: PathBuf,
        #[arg(long)]
        report_b: PathBuf,
        /// `squared` or `absolute`.
        #[arg(long)]
        loss: Option<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key, as `KEY=VALUE`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Headlines CSV.
    #[arg(long)]
    headlines: Option<String>,
    /// Prices CSV.
    #[arg(long)]
    prices: Option<String>,
    /// Sentiment lexicon TSV (bundled English list by default).
    #[arg(long)]
    lexicon: Option<String>,
    /// Stop-word list, one word per line (bundled English list by default).
    #[arg(long)]
    stopwords: Option<String>,
    /// Topic-intensity CSV (default `<out>/topic_intensity.csv`).
    #[arg(long)]
    topic_intensity: Option<String>,
    /// Sentiment CSV (default `<out>/sentiment.csv`).
    #[arg(long)]
    sentiment_series: Option<String>,
    /// Last training date, YYYY-MM-DD.
    #[arg(long)]
    train_end: Option<String>,
    /// Forecast horizons, e.g. `1,2,3`.
    #[arg(long)]
    horizons: Option<String>,
    /// Topic counts: `2..10`, `4` or `3,5,8`.
    #[arg(long)]
    topics_k: Option<String>,
    /// Weight of the word-context term.
    #[arg(long)]
    alpha: Option<String>,
    /// Sentiment decay time constant in days.
    #[arg(long)]
    tau: Option<String>,
    /// Largest lag considered.
    #[arg(long)]
    p_max: Option<String>,
    /// Models to backtest: tree, rf, ada, arx.
    #[arg(long)]
    models: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut overrides = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| textcast_cli::InputError(format!("--set expects KEY=VALUE, got `{item}`")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("out", &self.out),
            ("headlines", &self.headlines),
            ("prices", &self.prices),
            ("lexicon", &self.lexicon),
            ("stopwords", &self.stopwords),
            ("topic_intensity", &self.topic_intensity),
            ("sentiment_series", &self.sentiment_series),
            ("train_end", &self.train_end),
            ("horizons", &self.horizons),
            ("topics_k", &self.topics_k),
            ("alpha", &self.alpha),
            ("tau", &self.tau),
            ("p_max", &self.p_max),
            ("models", &self.models),
            ("seed", &self.seed),
        ];
        for (key, value) in named.into_iter().chain(extra.iter().map(|(k, v)| (*k, v))) {
            if let Some(v) = value {
                overrides.push((key.to_string(), v.clone()));
            }
        }
        Ok(RunConfig::load(self.config.as_deref(), &overrides)?)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, days } => pipeline::cmd_synth(&common.load(&[("synth_days", days)])?),
        Command::Topics(common) => pipeline::cmd_topics(&common.load(&[])?),
        Command::Sentiment(common) => pipeline::cmd_sentiment(&common.load(&[])?),
        Command::Features(common) => pipeline::cmd_features(&common.load(&[])?),
        Command::Forecast { common, full, no_text } => {
            let variants = no_text.then(|| "notext".to_string());
            pipeline::cmd_forecast(&common.load(&[("variants", variants)])?, full)
        }
        Command::Dmtest {
            common,
            report_a,
            report_b,
            loss,
        } => pipeline::cmd_dmtest(&common.load(&[("dm_loss", loss)])?, &report_a, &report_b),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
