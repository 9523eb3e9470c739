use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20240101;

#[derive(Debug, Parser)]
#[command(name = "fracfou", version, about = "Fast fractional processes, their functional limits and homogenization")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo replicas (each command has its own default).
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Write data here instead of stdout; the config echo goes to `<out>.config.toml`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Run the experiment described by a config echo.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "FRACFOU_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fractional Brownian motion paths.
    SampleFbm(SampleFbm),
    /// Stationary fractional Ornstein-Uhlenbeck paths.
    SampleFou(SampleFou),
    /// Autocorrelation of the unit-scale fast process.
    Rho(Rho),
    /// Hermite rank, scaling regime and normalisation of a function.
    Chaos(Chaos),
    /// Limit covariance matrix and constants.
    Constants(Constants),
    /// Hermite process paths.
    HermiteSample(HermiteSample),
    /// Variance of the integrated functional along decreasing scales.
    CltScan(CltScan),
    /// Coupled L2 distance to the Hermite-process limit.
    L2Hermite(L2Hermite),
    /// Error of the kinetic approximation of fractional Brownian motion.
    KineticScan(KineticScan),
    /// Endpoints of the slow/fast system against its limit equation.
    Homogenize(Homogenize),
    /// Acceptance suite.
    Verify(Verify),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SampleFbm(_) => "sample-fbm",
            Command::SampleFou(_) => "sample-fou",
            Command::Rho(_) => "rho",
            Command::Chaos(_) => "chaos",
            Command::Constants(_) => "constants",
            Command::HermiteSample(_) => "hermite-sample",
            Command::CltScan(_) => "clt-scan",
            Command::L2Hermite(_) => "l2-hermite",
            Command::KineticScan(_) => "kinetic-scan",
            Command::Homogenize(_) => "homogenize",
            Command::Verify(_) => "verify",
        }
    }

    pub fn default_replicas(&self) -> usize {
        match self {
            Command::SampleFbm(_) | Command::SampleFou(_) | Command::HermiteSample(_) => 1,
            Command::CltScan(_) => 2000,
            Command::L2Hermite(_) => 500,
            Command::KineticScan(_) => 200,
            Command::Homogenize(_) => 2000,
            Command::Rho(_) | Command::Chaos(_) | Command::Constants(_) | Command::Verify(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleFbm {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleFou {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Rho {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Smallest lag.
    #[arg(long, default_value_t = 0.01)]
    pub from: f64,
    /// Largest lag.
    #[arg(long, default_value_t = 100.0)]
    pub to: f64,
    /// Log-spaced lags between `from` and `to`.
    #[arg(long, default_value_t = 41)]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Chaos {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Hermite coefficients `c_0,c_1,...`.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    /// Scale at which to evaluate the normalisation.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Constants {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Hermite coefficients of one component, e.g. `0,0,1`; repeat for a family.
    #[arg(long = "coeffs", required = true, allow_negative_numbers = true)]
    pub coeffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct HermiteSample {
    /// Self-similarity index of the process, in (1/2, 1).
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Noise cells on `[0, horizon]`.
    #[arg(long, default_value_t = 512)]
    pub n_xi: usize,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

fn default_scan() -> Vec<f64> {
    vec![0.1, 0.05, 0.02, 0.01]
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CltScan {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.0, 1.0], allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = default_scan())]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Multiply the variance by the squared normalisation.
    #[arg(long)]
    #[serde(default)]
    pub scaled: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct L2Hermite {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0], allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05])]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    pub n_xi: usize,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KineticScan {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, value_delimiter = ',', default_values_t = default_scan())]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Hoelder exponent of the seminorm (default H/2).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Homogenize {
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    /// Coefficient of the fast forcing: `zero`, `const:v`, `affine:a,b`, `sine:a,k,b`, `cosine:a,k,b`.
    #[arg(long, default_value = "sine:1,1,2")]
    pub f: String,
    /// Coefficient of the averaged forcing.
    #[arg(long, default_value = "zero")]
    pub h: String,
    /// Averaged forcing as a function of the fast variable.
    #[arg(long, default_value = "zero")]
    pub g: String,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.0, 1.0], allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 512)]
    pub limit_steps: usize,
    #[arg(long, default_value_t = 512)]
    pub n_xi: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteArg {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Verify {
    #[arg(long, value_enum, default_value_t = SuiteArg::Quick)]
    pub suite: SuiteArg,
    /// Criteria to run (default: all).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub criteria: Vec<usize>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub replicas: usize,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub experiment: Command,
}

impl ExperimentConfig {
    /// Merges a config file (if any) with explicit command-line values, which win.
    pub fn resolve(cli: Cli, file: Option<ExperimentConfig>) -> Result<Self, String> {
        let experiment = match (cli.command, &file) {
            (Some(c), _) => c,
            (None, Some(f)) => f.experiment.clone(),
            (None, None) => return Err("a subcommand or --config is required".into()),
        };
        let base = file.filter(|f| f.experiment == experiment);
        if let Some(f) = &base {
            if f.schema_version != SCHEMA_VERSION {
                return Err(format!("config schema {} is not {SCHEMA_VERSION}", f.schema_version));
            }
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed: cli.seed.or(base.as_ref().map(|f| f.seed)).unwrap_or(DEFAULT_SEED),
            replicas: cli
                .replicas
                .or(base.as_ref().map(|f| f.replicas))
                .unwrap_or_else(|| experiment.default_replicas()),
            format: cli.format.or(base.as_ref().map(|f| f.format)).unwrap_or_default(),
            out: cli.out.or(base.and_then(|f| f.out)),
            experiment,
        })
    }
}
