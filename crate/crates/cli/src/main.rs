mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

/// Radial neighbors Gaussian process fitting, prediction and diagnostics.
///
/// Any option of the configuration file can also be given on the command line
/// by its dotted name, e.g. `--mcmc.l1 500` or `--set mcmc.l1=500`.
#[derive(Debug, Parser)]
#[command(name = "radgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Approximation radius, or `auto` for the recommended value.
    #[arg(long, global = true, value_name = "X|auto")]
    rho: Option<String>,

    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw training and test data from a Gaussian process with nugget.
    Simulate,
    /// Run the latent-effects sampler.
    FitLatent,
    /// Run the sampler with latent effects integrated out.
    FitResponse,
    /// Predict at test locations from a finished chain.
    Predict,
    /// Wasserstein, MSE and coverage diagnostics.
    Diagnose,
    /// Dump the partition and DAG of the training locations.
    Partition,
}

/// Error reported as one `error: module=<m> message=<text>` line.
#[derive(Debug)]
pub struct CliError {
    module: &'static str,
    message: String,
}

impl CliError {
    pub fn new(module: &'static str, message: impl Into<String>) -> Self {
        CliError {
            module,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        if self.module == "cli" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error: module={} message={msg}", self.module)
    }
}

impl From<radgp::Error> for CliError {
    fn from(e: radgp::Error) -> Self {
        CliError::new(e.module(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

/// Pulls `--section.key value` and `--section.key=value` out of the argument
/// list; clap sees the rest.
fn split_dotted(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut dotted = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| CliError::new("cli", format!("--{name} needs a value")))?,
        };
        dotted.push((name, value));
    }
    Ok((rest, dotted))
}

fn run() -> Result<(), CliError> {
    let (args, dotted) = split_dotted(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::new("cli", first.trim_start_matches("error: ")));
        }
    };

    let mut cfg = Config::load(cli.config.as_deref())?;
    for (k, v) in &dotted {
        cfg.set(k, v)?;
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("run.seed", &s.to_string())?;
    }
    if let Some(r) = &cli.rho {
        cfg.set("model.rho", r)?;
    }
    if let Some(t) = cli.threads {
        cfg.set("run.threads", &t.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.set("run.out", &o.to_string_lossy())?;
    }

    if let Some(n) = cfg.get_opt::<usize>("run.threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("cli", format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(cfg.out_dir())?;

    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::FitLatent => commands::fit(&cfg, radgp::inference::ModelKind::Latent),
        Command::FitResponse => commands::fit(&cfg, radgp::inference::ModelKind::Response),
        Command::Predict => commands::predict(&cfg),
        Command::Diagnose => commands::diagnose(&cfg),
        Command::Partition => commands::partition(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RADGP_LOG", "warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
