//! Scenario-driven front end for `nlqf-core`: parse a TOML scenario, run the
//! requested products and write CSV tables plus a JSON manifest.

pub mod overrides;
pub mod run;
pub mod scenario;
pub mod table;

use nlqf_core::densities::{g_deformed_density, DensitySpec, GDescriptor, PreparedDensity};
use num_complex::Complex64;
use thiserror::Error;

pub use run::{execute, run_scenario, write_run, RunManifest, RunOptions, RunResult};
pub use scenario::{load_scenario, parse_scenario, Scenario};

pub const EXIT_SCENARIO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    /// Bad input: parse errors, unknown names, invalid parameters, I/O.
    #[error("scenario error: {0}")]
    Scenario(String),
    /// PSD violation, singular geometry, failed dual-path checks.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => EXIT_SCENARIO,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<nlqf_core::Error> for CliError {
    fn from(e: nlqf_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Scenario(e.to_string())
        }
    }
}

/// Density from an explicit geometry: `F` (n×n), optional one-particle `S`,
/// optional deformation (n = 1 only, variance `F_11`).
pub fn density_at(
    f: Vec<Vec<f64>>,
    s: Option<Vec<Complex64>>,
    deformation: Option<GDescriptor>,
    x: &[f64],
) -> Result<(f64, Vec<String>), CliError> {
    let n = f.len();
    if n == 0 || f.iter().any(|r| r.len() != n) || x.len() != n {
        return Err(CliError::Scenario(format!("density needs a square F and a point of the same dimension, got n = {n}")));
    }
    let num = |e: nlqf_core::error::DensityError| CliError::from(nlqf_core::Error::from(e));
    if let Some(g) = deformation {
        if n != 1 || s.is_some() {
            return Err(CliError::Scenario("a deformed density is one-dimensional and has no S".into()));
        }
        return Ok((g_deformed_density(&g, f[0][0], x[0]).map_err(num)?, Vec::new()));
    }
    let spec = match s {
        None => DensitySpec::VacuumGaussian { f },
        Some(s) => DensitySpec::OneParticle { f, s },
    };
    let p = PreparedDensity::new(&spec, 0.0).map_err(num)?;
    let mut warnings = Vec::new();
    if p.exceeds_unit_norm() {
        warnings.push("S^dagger F^-1 S exceeds 1: the density is negative near the origin".to_string());
    }
    Ok((p.eval(x).map_err(num)?, warnings))
}
