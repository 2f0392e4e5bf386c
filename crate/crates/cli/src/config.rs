use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use jdx_core::harness::{check_spec, Fault, ParitySelection, VerifyConfig};
use serde::Deserialize;

use crate::error::CliError;
use crate::output::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParityArg {
    Even,
    Odd,
    Both,
}

impl From<ParityArg> for ParitySelection {
    fn from(p: ParityArg) -> Self {
        match p {
            ParityArg::Even => ParitySelection::Even,
            ParityArg::Odd => ParitySelection::Odd,
            ParityArg::Both => ParitySelection::Both,
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// First factorization energy (negative)
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,

    /// Second factorization energy (negative)
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,

    /// Parity class of the oscillator basis
    #[arg(long, value_enum)]
    pub parity: Option<ParityArg>,

    /// Largest basis index n
    #[arg(long)]
    pub nmax: Option<usize>,

    /// Scattering energy (repeatable)
    #[arg(long = "energy", allow_hyphen_values = true)]
    pub energies: Vec<f64>,

    /// Energies of the two traveling waves in the P matrix (one value sets both)
    #[arg(long = "p-energy", allow_hyphen_values = true, num_args = 1)]
    pub p_energies: Vec<f64>,

    /// Incoming channel of the transformed state (1 or 2)
    #[arg(long)]
    pub channel: Option<usize>,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// JSON config file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Tolerance override for a named check (repeatable)
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tolerances: Vec<String>,

    /// Perturb one input of a check (testing hook)
    #[arg(long, hide = true, value_name = "CHECK:INDEX:FACTOR")]
    pub fault: Option<String>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub parity: Option<ParityArg>,
    pub nmax: Option<usize>,
    pub energies: Option<Vec<f64>>,
    pub p_energies: Option<Vec<f64>>,
    pub channel: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tolerances: Option<BTreeMap<String, f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub parity: ParitySelection,
    pub nmax: usize,
    pub energies: Vec<f64>,
    pub p_energies: (f64, f64),
    pub channel: usize,
    pub out: PathBuf,
    pub format: Format,
    pub tolerances: BTreeMap<String, f64>,
    pub fault: Option<Fault>,
}

impl RunConfig {
    /// Merge flags over the config file over defaults, then validate.
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let defaults = VerifyConfig::default();
        let mut tolerances = file.tolerances.unwrap_or_default();
        for entry in &args.tolerances {
            let (name, value) = parse_tolerance(entry)?;
            tolerances.insert(name, value);
        }
        let p_energies = if args.p_energies.is_empty() {
            file.p_energies
        } else {
            Some(args.p_energies.clone())
        };
        let p_energies = match p_energies.as_deref() {
            None => defaults.p_energies,
            Some(&[e]) => (e, e),
            Some(&[e1, e2]) => (e1, e2),
            Some(_) => return Err(CliError::config("p_energies", "expected one or two values")),
        };
        let config = RunConfig {
            lambda1: args.lambda1.or(file.lambda1).unwrap_or(defaults.lambda1),
            lambda2: args.lambda2.or(file.lambda2).unwrap_or(defaults.lambda2),
            parity: args.parity.or(file.parity).map_or(defaults.parity, Into::into),
            nmax: args.nmax.or(file.nmax).unwrap_or(defaults.nmax),
            energies: if args.energies.is_empty() {
                file.energies.unwrap_or(defaults.energies)
            } else {
                args.energies.clone()
            },
            p_energies,
            channel: args.channel.or(file.channel).unwrap_or(1),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            format: args.format.or(file.format).unwrap_or(Format::Csv),
            tolerances,
            fault: args.fault.as_deref().map(parse_fault).transpose()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (field, lambda) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(lambda < 0.0 && lambda.is_finite()) {
                return Err(CliError::config(
                    field,
                    format!("must be a finite negative number, got {lambda}"),
                ));
            }
        }
        if self.nmax < 8 {
            return Err(CliError::config(
                "nmax",
                format!("must be at least 8, got {}", self.nmax),
            ));
        }
        for &e in &self.energies {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::config(
                    "energies",
                    format!("must be finite and positive, got {e}"),
                ));
            }
        }
        for e in [self.p_energies.0, self.p_energies.1] {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::config(
                    "p_energies",
                    format!("must be finite and positive, got {e}"),
                ));
            }
        }
        if self.channel != 1 && self.channel != 2 {
            return Err(CliError::config(
                "channel",
                format!("must be 1 or 2, got {}", self.channel),
            ));
        }
        for (name, &tol) in &self.tolerances {
            if check_spec(name).is_none() {
                return Err(CliError::config("tolerances", format!("unknown check `{name}`")));
            }
            if tol.is_nan() || tol < 0.0 {
                return Err(CliError::config("tolerances", format!("`{name}` must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            parity: self.parity,
            nmax: self.nmax,
            energies: self.energies.clone(),
            p_energies: self.p_energies,
            tolerances: self.tolerances.clone(),
            fault: self.fault.clone(),
            ..VerifyConfig::default()
        }
    }
}

fn parse_tolerance(entry: &str) -> Result<(String, f64), CliError> {
    let (name, value) = entry
        .split_once('=')
        .ok_or_else(|| CliError::config("tolerances", format!("expected NAME=VALUE, got `{entry}`")))?;
    let value = value
        .trim()
        .parse::<f64>()
        .map_err(|e| CliError::config("tolerances", format!("`{entry}`: {e}")))?;
    Ok((name.trim().to_string(), value))
}

fn parse_fault(spec: &str) -> Result<Fault, CliError> {
    let bad = || CliError::config("fault", format!("expected CHECK:INDEX:FACTOR, got `{spec}`"));
    let mut parts = spec.split(':');
    let (Some(check), Some(index), Some(factor), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    if check_spec(check).is_none() {
        return Err(CliError::config("fault", format!("unknown check `{check}`")));
    }
    Ok(Fault {
        check: check.to_string(),
        index: index.parse().map_err(|_| bad())?,
        factor: factor.parse().map_err(|_| bad())?,
    })
}
