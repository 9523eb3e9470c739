//! `fracfou`: command-line experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical or acceptance failure.

mod args;
mod output;
mod run;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use clap::error::ErrorKind;

use args::{Cli, ExperimentConfig};
use run::RunError;

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURE: u8 = 2;

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn echo_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.toml");
    PathBuf::from(name)
}

fn emit(cfg: &ExperimentConfig, report: &output::Report) -> anyhow::Result<()> {
    let echo = toml::to_string(cfg).context("cannot serialise the config echo")?;
    match &cfg.out {
        Some(path) => {
            let mut file = io::BufWriter::new(
                fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
            );
            report.write(cfg, &mut file)?;
            file.flush()?;
            fs::write(echo_path(path), echo)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write(cfg, &mut lock)?;
            eprint!("{echo}");
        }
    }
    Ok(())
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    println!("{}", output::error_report("usage", msg));
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let threads = cli.threads;
    let file = match cli.config.as_deref().map(load_config).transpose() {
        Ok(f) => f,
        Err(e) => return usage(&format!("{e:#}")),
    };
    let cfg = match ExperimentConfig::resolve(cli, file) {
        Ok(c) => c,
        Err(e) => return usage(&e),
    };
    match fracfou::mc::with_threads(threads, || run::run(&cfg)) {
        Ok(report) => {
            if let Err(e) = emit(&cfg, &report) {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_FAILURE);
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
        Err(RunError::Usage(msg)) => usage(&msg),
        Err(RunError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            println!("{}", output::error_report("numerical", &msg));
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
