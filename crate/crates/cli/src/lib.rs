//! `pearl` command-line driver. Each subcommand runs one pipeline stage
//! and writes its artifacts; see [`Command`].

pub mod commands;
pub mod config;
mod error;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use pearl_core::eval::significance::DEFAULT_RESAMPLES;
use pearl_core::Method;
use tracing_subscriber::EnvFilter;

pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pearl", version, about = "Plan-and-execute question answering over long documents")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// OpenAI-compatible base URL (live backend).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Replay transcript (JSON lines) instead of a live backend.
    #[arg(long = "replay", global = true)]
    pub replay_path: Option<PathBuf>,
    #[arg(long, global = true)]
    pub rpm_limit: Option<u32>,
    #[arg(long, global = true)]
    pub retry_limit: Option<u32>,
    #[arg(long, global = true)]
    pub concat_separator: Option<String>,
    #[arg(long, global = true)]
    pub demo_cap: Option<usize>,
    #[arg(long = "registry", global = true)]
    pub registry_path: Option<PathBuf>,
    #[arg(long = "demos", global = true)]
    pub demos_path: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Registry preset: `full` or `minimal`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Label each question's reasoning types (one extra call per question).
    #[arg(long, global = true)]
    pub label_types: bool,
    /// Append JSON-lines logs to this file instead of stderr.
    #[arg(long, global = true)]
    pub log_file: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a QuALITY JSON-lines file into examples and articles.
    Import {
        input: PathBuf,
        /// Output directory for examples.jsonl and articles.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Propose new actions from training questions.
    Mine {
        #[arg(long)]
        examples: PathBuf,
        /// Registry file to write; the log goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Merge and generalize a mined registry.
    Reduce {
        /// Registry to read (defaults to the configured registry).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        rounds: u32,
        /// Advisory size mentioned in the prompt.
        #[arg(long, default_value_t = 80)]
        target: usize,
    },
    /// Generate plans, or with --refine build demonstrations.
    Plan {
        #[arg(long)]
        examples: PathBuf,
        /// Directory of plans, or the demonstrations file with --refine.
        #[arg(long)]
        out: PathBuf,
        /// Execute candidate plans and keep those reaching the gold answer.
        #[arg(long)]
        refine: bool,
        /// Articles file; required with --refine.
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Full pipeline per question: plan, execute, map, score.
    Run {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one method (a baseline or an ablation).
    Eval {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a run, optionally against a baseline run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, alias = "compare")]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn needs_backend(&self) -> bool {
        !matches!(self, Command::Import { .. } | Command::Report { .. })
    }
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            cache_dir: self.cache_dir.clone(),
            replay_path: self.replay_path.clone(),
            rpm_limit: self.rpm_limit,
            retry_limit: self.retry_limit,
            concat_separator: self.concat_separator.clone(),
            demo_cap: self.demo_cap,
            registry_path: self.registry_path.clone(),
            demos_path: self.demos_path.clone(),
            seed: self.seed,
            parallelism: self.parallelism,
            preset: self.preset.clone(),
            label_types: self.label_types,
        }
    }

    /// Loads the config file (if any), applies flags and validates.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.overrides());
        cfg.validate(self.command.needs_backend())?;
        Ok(cfg)
    }
}

/// Sets up logging: JSON lines to `--log-file` when given, else compact
/// text on stderr. `RUST_LOG` picks the level (default `info` for files,
/// `warn` for stderr).
pub fn init_logging(cli: &Cli) -> anyhow::Result<()> {
    match &cli.log_file {
        Some(path) => {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            tracing_subscriber::fmt()
                .json()
                .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
                .with_writer(std::sync::Mutex::new(file))
                .init();
        }
        None => {
            tracing_subscriber::fmt()
                .compact()
                .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
                .with_writer(std::io::stderr)
                .init();
        }
    }
    Ok(())
}

/// Runs one command. Human-readable summaries go to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Import { input, out } => commands::import(input, out, stdout),
        Command::Mine { examples, out, limit } => commands::mine(&cfg, examples, out, *limit, stdout),
        Command::Reduce {
            input,
            out,
            rounds,
            target,
        } => commands::reduce(&cfg, input.as_deref(), out, *rounds, *target, stdout),
        Command::Plan {
            examples,
            out,
            refine,
            articles,
            limit,
        } => {
            if *refine {
                let Some(articles) = articles else {
                    return Err(CliError::Config(vec!["plan --refine needs --articles".into()]));
                };
                commands::refine(&cfg, examples, articles, out, *limit, stdout)
            } else {
                commands::plan(&cfg, examples, out, *limit, stdout)
            }
        }
        Command::Run { examples, articles, out } => {
            commands::evaluate(&cfg, Method::Pearl, examples, articles, out, stdout)
        }
        Command::Eval {
            method,
            examples,
            articles,
            out,
        } => commands::evaluate(&cfg, *method, examples, articles, out, stdout),
        Command::Report {
            run,
            baseline,
            resamples,
            out,
        } => commands::report(&cfg, run, baseline.as_deref(), *resamples, out.as_deref(), stdout),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    run(&cli, stdout)
}
