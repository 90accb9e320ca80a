use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qpmeas::measurement::{uniform_nu_grid, ModelFamily};
use qpmeas::quadrature::MinUncertaintyParams;
use serde::Deserialize;

use crate::AppError;

/// Relative `--out` paths are resolved against this directory when set.
pub const OUTPUT_DIR_ENV: &str = "QPMEAS_OUTPUT_DIR";

pub const DEFAULT_GRID_POINTS: usize = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Options shared by every subcommand. Anything left unset falls back to the
/// config file, then to the built-in default.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON file with any of the option names below as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// X, Y2, Y0, Z or AK.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    /// Comma-separated list of nu values in (0, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub nu_grid: Option<String>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    family: Option<String>,
    nu: Option<f64>,
    nu_grid: Option<Vec<f64>>,
    hbar: Option<f64>,
    sigma1: Option<f64>,
    q1: Option<f64>,
    p1: Option<f64>,
    seed: Option<u64>,
    n: Option<usize>,
    format: Option<Format>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub psi: MinUncertaintyParams,
    pub family: ModelFamily,
    pub nu: Option<f64>,
    pub nu_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub n: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// The explicit grid, a single `--nu`, or `default_points` uniform points.
    pub fn grid_or(&self, default_points: usize) -> Vec<f64> {
        match (&self.nu_grid, self.nu) {
            (Some(g), _) => g.clone(),
            (None, Some(nu)) => vec![nu],
            (None, None) => uniform_nu_grid(default_points),
        }
    }

    /// The single `nu` a point command runs at.
    pub fn single_nu(&self) -> Result<f64, AppError> {
        match (&self.nu_grid, self.nu) {
            (_, Some(nu)) => Ok(nu),
            (Some(g), None) if g.len() == 1 => Ok(g[0]),
            (Some(_), None) => Err(AppError::usage("this command takes a single --nu, not a grid")),
            (None, None) => Err(AppError::usage("--nu is required")),
        }
    }
}

pub fn parse_list(name: &str, s: &str, len: Option<usize>) -> Result<Vec<f64>, AppError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| AppError::usage(format!("--{name}: `{t}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(AppError::usage(format!("--{name} is empty")));
    }
    if let Some(len) = len {
        if values.len() != len {
            return Err(AppError::usage(format!("--{name} expects {len} values, got {}", values.len())));
        }
    }
    Ok(values)
}

fn check_nu_value(nu: f64) -> Result<(), AppError> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(AppError::usage(format!("nu must lie in (0, 1), got {nu}")));
    }
    Ok(())
}

fn read_file_config(path: &Path) -> Result<FileConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::usage(format!("bad config {}: {e}", path.display())))
}

fn resolve_out(out: Option<PathBuf>) -> Option<PathBuf> {
    let out = out?;
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if out.is_relative() => Some(PathBuf::from(dir).join(out)),
        _ => Some(out),
    }
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, AppError> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let family = match self.family.as_deref().or(file.family.as_deref()) {
            Some(s) => s.parse::<ModelFamily>().map_err(|e| AppError::usage(e.to_string()))?,
            None => ModelFamily::X,
        };
        let nu_grid = match &self.nu_grid {
            Some(s) => Some(parse_list("nu-grid", s, None)?),
            None if self.nu.is_some() => None,
            None => file.nu_grid,
        };
        if let Some(g) = &nu_grid {
            if g.is_empty() {
                return Err(AppError::usage("nu grid is empty"));
            }
            g.iter().try_for_each(|&nu| check_nu_value(nu))?;
        }
        let nu = if self.nu_grid.is_some() { self.nu } else { self.nu.or(file.nu) };
        if let Some(nu) = nu {
            check_nu_value(nu)?;
        }
        let psi = MinUncertaintyParams::new(
            self.q1.or(file.q1).unwrap_or(0.0),
            self.p1.or(file.p1).unwrap_or(0.0),
            self.sigma1.or(file.sigma1).unwrap_or(1.0),
            self.hbar.or(file.hbar).unwrap_or(1.0),
        )
        .map_err(|e| AppError::usage(e.to_string()))?;
        Ok(RunConfig {
            psi,
            family,
            nu,
            nu_grid,
            seed: self.seed.or(file.seed).unwrap_or(0),
            n: self.n.or(file.n).unwrap_or(10_000),
            format: self.format.or(file.format).unwrap_or(Format::Csv),
            out: resolve_out(self.out.clone().or(file.out)),
        })
    }
}
