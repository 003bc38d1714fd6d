use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocrlm::report::{
    cmd_error_rates, cmd_evaluate, cmd_noise, cmd_report, cmd_stats, cmd_train, ExperimentConfig,
    Overrides,
};

#[derive(Parser, Debug)]
#[command(name = "ocrlm", version, about = "Measure how OCR noise changes word embeddings")]
struct Cli {
    /// Experiment configuration (JSON)
    #[arg(long, global = true, default_value = "experiment.json")]
    config: PathBuf,

    /// Restrict to one corpus label or language code
    #[arg(long, global = true)]
    lang: Option<String>,

    /// Output directory, overriding the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed for every model, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Single-threaded training so reruns are bit-identical
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground-truth corpus statistics
    Stats,
    /// Character and word error rates of the OCR side
    ErrorRates,
    /// Generate corpora with injected character noise
    Noise,
    /// Train every configured model on OCR and ground truth
    Train,
    /// Neighbourhood overlap curves and figures
    Evaluate,
    /// Redraw figures from existing curves
    Report,
}

fn run(cli: Cli) -> ocrlm::Result<()> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    let overrides = Overrides {
        lang: cli.lang,
        out: cli.out,
        seed: cli.seed,
        deterministic: cli.deterministic,
    };
    config.apply(&overrides);
    config.validate()?;
    match cli.command {
        Command::Stats => cmd_stats(&config, &overrides),
        Command::ErrorRates => cmd_error_rates(&config, &overrides),
        Command::Noise => cmd_noise(&config, &overrides),
        Command::Train => cmd_train(&config, &overrides),
        Command::Evaluate => cmd_evaluate(&config, &overrides),
        Command::Report => cmd_report(&config, &overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
