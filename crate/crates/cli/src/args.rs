use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::report::CliError;

#[derive(Debug, Parser)]
#[command(name = "translab", version, about = "Translating space-like graphs in Lorentz products")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Integrate the radial translator ODE and write its profile as CSV.
    Soliton(SolitonArgs),
    /// Check geometric identities on a stored graph under grid refinement.
    Verify(VerifyArgs),
    /// Evaluate the weighted-area second variation on seeded test functions.
    SecondVariation(VariationArgs),
    /// Run the graphical mean curvature flow and write diagnostics.
    Flow(FlowArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SolitonArgs {
    /// euclidean, spherical or hyperbolic
    #[arg(long, default_value = "euclidean")]
    pub profile: String,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 10.0)]
    pub r_max: f64,
    /// Output spacing in r.
    #[arg(long, default_value_t = 1e-3)]
    pub dr: f64,
    /// Integrator tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the profile lifted to a warped_2d graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Chart for the lifted graph (inline JSON or a file path).
    #[arg(long)]
    pub base: Option<String>,
    /// Radial nodes of the default lift chart.
    #[arg(long, default_value_t = 201)]
    pub nx: usize,
    /// Angular nodes of the default lift chart.
    #[arg(long, default_value_t = 64)]
    pub ny: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Comma-separated subset of jacobi, translator, routes, ricci.
    #[arg(long, default_value = "jacobi,translator")]
    pub checks: String,
    /// Number of dyadic grid levels.
    #[arg(long, default_value_t = 2)]
    pub refine: usize,
    /// Expected chart; a mismatch with the stored chart is a usage error.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VariationArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// bump or trig
    #[arg(long, default_value = "bump")]
    pub eta: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative tolerance on |Q - closed form|.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long, default_value = "variations.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    /// Initial graph; without it, seeded random data on a flat torus.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Flat torus chart for the random initial data.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub ny: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub safety: f64,
    /// Stop once max |H - c/W| reaches this value.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value = "flow.csv")]
    pub out: PathBuf,
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name}: must be positive, got {v}")))
    }
}

fn grid_size(name: &str, v: usize) -> Result<(), CliError> {
    if v >= 8 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name}: grid sizes must be at least 8, got {v}")))
    }
}

impl SolitonArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        positive("r-max", self.r_max)?;
        positive("dr", self.dr)?;
        positive("tol", self.tol)?;
        if !self.c.is_finite() {
            return Err(CliError::Usage("--c: must be finite".into()));
        }
        if self.n == 0 {
            return Err(CliError::Usage("--n: must be at least 1".into()));
        }
        grid_size("nx", self.nx)?;
        grid_size("ny", self.ny)
    }
}

impl VerifyArgs {
    pub fn check_list(&self) -> Result<Vec<String>, CliError> {
        let mut out: Vec<String> = Vec::new();
        for name in self.checks.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if !["jacobi", "translator", "routes", "ricci"].contains(&name) {
                return Err(CliError::Usage(format!("--checks: unknown check `{name}`")));
            }
            if !out.iter().any(|c| c == name) {
                out.push(name.to_string());
            }
        }
        if out.is_empty() {
            return Err(CliError::Usage("--checks: no checks given".into()));
        }
        if self.refine == 0 {
            return Err(CliError::Usage("--refine: needs at least one level".into()));
        }
        Ok(out)
    }
}

impl VariationArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        if !["bump", "trig"].contains(&self.eta.as_str()) {
            return Err(CliError::Usage(format!("--eta: expected bump or trig, got `{}`", self.eta)));
        }
        if self.trials == 0 {
            return Err(CliError::Usage("--trials: must be at least 1".into()));
        }
        positive("tol", self.tol)
    }
}

impl FlowArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(CliError::Usage(format!("--t-max: must be non-negative, got {}", self.t_max)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(CliError::Usage(format!("--safety: must lie in (0, 1], got {}", self.safety)));
        }
        if let Some(tol) = self.tol {
            positive("tol", tol)?;
        }
        if !self.c.is_finite() {
            return Err(CliError::Usage("--c: must be finite".into()));
        }
        grid_size("nx", self.nx)?;
        grid_size("ny", self.ny)
    }
}
