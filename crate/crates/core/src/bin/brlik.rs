use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use brlik::io::{self, ReportFormat, RunConfig, RunOutput};
use brlik::{Error, Result};

#[derive(Parser)]
#[command(name = "brlik", version, about = "Restricted-likelihood posteriors for linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior draws for one dataset (or one per group).
    Fit,
    /// Contaminated grouped-data study scored by KL divergence.
    Simulate,
    /// Trimmed held-out log predictive scores.
    Evaluate,
    /// Run a named study: newcomb, phones or simulation.
    Reproduce { name: String },
    /// Internal consistency checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    io::verify_embedded()?;
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let format = ReportFormat::from(cli.format);

    let (config, name) = match &cli.command {
        Command::Selftest => {
            let report = io::selftest()?;
            for row in report.rows.iter().filter(|r| r.metric == "pass") {
                let value = report.find("selftest", &row.group, "value").map_or(f64::NAN, |r| r.value);
                let verdict = if row.value == 1.0 { "PASS" } else { "FAIL" };
                println!("{verdict} {} ({value:e})", row.group);
            }
            return if io::selftest_passed(&report) {
                Ok(())
            } else {
                let failed: Vec<String> = report
                    .rows
                    .iter()
                    .filter(|r| r.metric == "pass" && r.value != 1.0)
                    .map(|r| r.group.clone())
                    .collect();
                Err(Error::SelfTestFailed(failed.join(", ")))
            };
        }
        Command::Reproduce { name } => {
            let config = match &cli.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::canonical(name)?,
            };
            (config, name.clone())
        }
        Command::Fit => (required_config(cli)?, "fit".to_string()),
        Command::Simulate => (required_config(cli)?, "simulate".to_string()),
        Command::Evaluate => (required_config(cli)?, "evaluate".to_string()),
    };

    let mut config = config;
    config.resolve_seed(cli.seed)?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&name));

    let result: RunOutput = match &cli.command {
        Command::Fit => io::fit(&config, &out, format)?,
        Command::Simulate => io::simulate(&config, &out, format, "simulate")?,
        Command::Evaluate => io::evaluate(&config, &out, format)?,
        Command::Reproduce { name } => io::reproduce(name, &config, &out, format)?,
        Command::Selftest => unreachable!("handled above"),
    };
    for f in &result.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn required_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Err(Error::Config("--config is required".into())),
    }
}
