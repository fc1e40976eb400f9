//! Command line driver: flat config files, flag overrides, CSV/JSON outputs
//! and a manifest that is enough to rerun any command.

pub mod commands;
pub mod config;
pub mod output;
pub mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, Command};
use thiserror::Error;

use crate::config::{Config, ConfigError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the CSV and JSON layouts written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const THREADS_ENV: &str = "CERTLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] output::OutputError),
    #[error("{0}")]
    Core(#[from] certlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("certlab")
        .version(TOOL_VERSION)
        .about("Quadratic certificates and GD dynamics experiments")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for s in commands::SUBCOMMANDS {
        let help = format!(
            "{}\nAlso: --config FILE reads `key = value` lines; flags given after it win.\n",
            config::keys_help(s.keys)
        );
        cmd = cmd.subcommand(
            Command::new(s.name).about(s.about).after_help(help).arg(
                Arg::new("settings")
                    .value_name("--KEY VALUE")
                    .help("Settings as --key value or --key=value")
                    .num_args(0..)
                    .trailing_var_arg(true)
                    .allow_hyphen_values(true)
                    .action(ArgAction::Append),
            ),
        );
    }
    cmd
}

/// Resolves defaults, the optional `--config` file and flag overrides.
pub fn resolve(sub: &commands::Subcommand, settings: &[String]) -> Result<Config, ConfigError> {
    let mut flags = config::parse_flags(settings)?;
    let mut file = Vec::new();
    if let Some(i) = flags.iter().position(|(k, _)| k == "config") {
        let (_, path) = flags.remove(i);
        if flags.iter().any(|(k, _)| k == "config") {
            return Err(ConfigError::Duplicate("config".into()));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| config::invalid("config", &path, e.to_string()))?;
        file = config::parse_kv(&text)?;
    }
    Config::build(sub.keys, &file, &flags)
}

fn thread_pool() -> Result<rayon::ThreadPool, ConfigError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => b = b.num_threads(n),
            _ => return Err(commands::config_error_for_threads(&v)),
        }
    }
    b.build().map_err(|e| config::invalid(THREADS_ENV, "", e.to_string()))
}

fn execute(sub: &commands::Subcommand, settings: &[String]) -> Result<i32, CliError> {
    let cfg = resolve(sub, settings)?;
    let pool = thread_pool()?;
    let out = PathBuf::from(cfg.str("out"));
    output::create_dir(&out)?;
    let outcome = pool.install(|| (sub.run)(&cfg, &out))?;
    output::write_text(&out.join("resolved.conf"), &cfg.to_kv())?;
    let mut files = outcome.files;
    files.push("resolved.conf".into());
    let manifest = output::Manifest { subcommand: sub.name, config: &cfg, seed: outcome.seed, files };
    output::write_json(&out.join("manifest.json"), &manifest.to_json())?;
    Ok(if outcome.failed { EXIT_FAILURE } else { EXIT_OK })
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, sm) = matches.subcommand().expect("subcommand is required");
    let sub = commands::find(name).expect("clap only accepts known subcommands");
    let settings: Vec<String> = sm.get_many::<String>("settings").map(|v| v.cloned().collect()).unwrap_or_default();
    // the settings list swallows everything after the first flag, help included
    if settings.iter().any(|a| a == "--help" || a == "-h") {
        let mut c = cli();
        let _ = c.find_subcommand_mut(name).expect("registered above").print_long_help();
        return EXIT_OK;
    }
    match execute(sub, &settings) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("certlab {name}: {e}");
            e.exit_code()
        }
    }
}
