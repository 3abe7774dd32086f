mod commands;
mod visualize;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use echowall::Error;
use serde_json::{json, Value};

pub const DEFAULT_SEED: u64 = 20_211_001;

#[derive(Parser, Debug)]
#[command(name = "echowall", version, about = "LV wall segmentation, wall-motion features and MI detection")]
struct Cli {
    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for frame/echo parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: commands::Command,
}

/// Error plus the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config { .. } | Error::Stratification { .. } => 2,
            Error::Io { .. } | Error::Image { .. } | Error::Format { .. } | Error::EmptyDataset | Error::ReviewTimeout { .. } => 3,
            Error::Divergence { .. }
            | Error::EmptyMask
            | Error::Geometry(_)
            | Error::AmbiguousCavity { .. }
            | Error::DegenerateBoundary { .. }
            | Error::MissingSegment { .. }
            | Error::SingleClass
            | Error::Shape { .. }
            | Error::EmptyLabeledPool => 4,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    pub fn missing(what: impl Into<String>) -> Self {
        Failure { code: 3, message: what.into() }
    }

    pub fn config(what: impl Into<String>) -> Self {
        Failure { code: 2, message: what.into() }
    }

    pub fn numeric(what: impl Into<String>) -> Self {
        Failure { code: 4, message: what.into() }
    }
}

fn write_manifest(dir: &Path, cli: &Cli, settings: &Value, status: &Result<(), Failure>) {
    let (status, code, message) = match status {
        Ok(()) => ("ok", 0, Value::Null),
        Err(f) => ("error", f.code, Value::String(f.message.clone())),
    };
    let manifest = json!({
        "tool": "echowall",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": std::env::args().collect::<Vec<_>>(),
        "command": cli.command.name(),
        "seed": cli.seed,
        "threads": cli.threads,
        "out_dir": cli.out_dir,
        "settings": settings,
        "status": status,
        "exit_code": code,
        "error": message,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)).is_err() {
        log::warn!("could not write {}", path.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::new();
    match cli.log_level.parse::<log::LevelFilter>() {
        Ok(level) => logger.filter_level(level),
        Err(_) => {
            eprintln!("error: --log-level must be one of off, error, warn, info, debug, trace");
            return ExitCode::from(2);
        }
    };
    logger.format_timestamp(None).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let mut settings = json!({});
    let result = commands::run(&cli.command, cli.seed, &cli.out_dir, &mut settings);
    write_manifest(&cli.out_dir, &cli, &settings, &result);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
