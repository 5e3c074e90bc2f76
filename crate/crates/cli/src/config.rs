//! Command-line arguments, the TOML run configuration and their merge.
//!
//! Every key of the config file can also be given as a flag; flags win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "leraylab", version, about = "Fractional Navier-Stokes self-similar profiles and Littlewood-Paley checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one verification suite and write JSON-lines reports.
    Verify(VerifyArgs),
    /// Time-march or Picard-solve a self-similar profile.
    Solve(SolveArgs),
    /// Fit radial decay of snapshot/profile files.
    Decay(DecayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Bernstein,
    NewBernstein,
    CommutatorX,
    WeightedCommutator,
    RieszWeight,
    Compactness,
    KernelDecay,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Bernstein => "bernstein",
            Suite::NewBernstein => "new_bernstein",
            Suite::CommutatorX => "commutator_x",
            Suite::WeightedCommutator => "weighted_commutator",
            Suite::RieszWeight => "riesz_weight",
            Suite::Compactness => "compactness",
            Suite::KernelDecay => "kernel_decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Evolve,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Pure,
    Log,
    Both,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with run parameters; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Grid points per axis (even).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Box side length; accepts numbers and multiples of pi ("16pi").
    #[arg(long = "box")]
    pub box_length: Option<String>,
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Smoothness / derivative order (bernstein, weighted_commutator).
    #[arg(long)]
    pub s: Option<f64>,
    /// Weight exponent (weighted_commutator, riesz_weight).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Dyadic indices to sweep (comma separated); defaults to the representable range.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Option<Vec<i32>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    /// Lower cutoff of the Duhamel integral.
    #[arg(long)]
    pub s_min: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DecayArgs {
    /// Snapshot/profile files to fit.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Option<Vec<PathBuf>>,
    /// Annulus as fractions of L: "lo,hi".
    #[arg(long, value_delimiter = ',')]
    pub annulus: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Box length as written in a config file: a number or a string like "16pi".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxLength {
    Value(f64),
    Text(String),
}

impl BoxLength {
    pub fn resolve(&self) -> Result<f64, CliError> {
        match self {
            BoxLength::Value(v) => Ok(*v),
            BoxLength::Text(s) => parse_length(s),
        }
    }
}

/// Parse `"12.5"`, `"pi"`, `"16pi"`, `"16*pi"` or `"2π"`.
pub fn parse_length(s: &str) -> Result<f64, CliError> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    let bad = || CliError::Config(format!("cannot parse box length {s:?}"));
    let v = if let Some(head) = t.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        let factor = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|_| bad())? };
        factor * std::f64::consts::PI
    } else {
        t.parse::<f64>().map_err(|_| bad())?
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("box length must be positive, got {s:?}")));
    }
    Ok(v)
}

/// Parameters from a config file (all optional).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite: Option<Suite>,
    pub mode: Option<Mode>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    #[serde(rename = "box")]
    pub box_length: Option<BoxLength>,
    pub amp: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub p: Option<f64>,
    pub out: Option<PathBuf>,
    pub s: Option<f64>,
    pub beta: Option<f64>,
    pub trials: Option<usize>,
    pub q: Option<Vec<i32>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub max_iter: Option<usize>,
    pub damping: Option<f64>,
    pub s_min: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub inputs: Option<Vec<PathBuf>>,
    pub annulus: Option<Vec<f64>>,
    pub model: Option<ModelChoice>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    fn base(common: &CommonArgs) -> Result<Self, CliError> {
        let mut c = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if common.$f.is_some() { c.$f = common.$f.clone(); } )* };
        }
        over!(alpha, n, dim, amp, seed, tol, p, out);
        if let Some(b) = &common.box_length {
            c.box_length = Some(BoxLength::Text(b.clone()));
        }
        Ok(c)
    }

    pub fn for_verify(a: &VerifyArgs) -> Result<Self, CliError> {
        let mut c = Self::base(&a.common)?;
        if a.suite.is_some() {
            c.suite = a.suite;
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if a.$f.is_some() { c.$f = a.$f.clone(); } )* };
        }
        over!(s, beta, trials, q);
        Ok(c)
    }

    pub fn for_solve(a: &SolveArgs) -> Result<Self, CliError> {
        let mut c = Self::base(&a.common)?;
        if a.mode.is_some() {
            c.mode = a.mode;
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if a.$f.is_some() { c.$f = a.$f.clone(); } )* };
        }
        over!(t_end, dt, max_iter, damping, s_min, snapshot_times);
        Ok(c)
    }

    pub fn for_decay(a: &DecayArgs) -> Result<Self, CliError> {
        let mut c = Self::base(&a.common)?;
        if a.model.is_some() {
            c.model = a.model;
        }
        if a.inputs.is_some() {
            c.inputs = a.inputs.clone();
        }
        if a.annulus.is_some() {
            c.annulus = a.annulus.clone();
        }
        Ok(c)
    }

    pub fn box_or(&self, default: f64) -> Result<f64, CliError> {
        self.box_length.as_ref().map_or(Ok(default), BoxLength::resolve)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("leraylab-out"))
    }
}
