//! Scenario files: TOML documents naming a grid, test functions, a model,
//! probes, a state and the requested outputs. See `docs/scenario.md`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nlqf_core::algebra::StatePrep;
use nlqf_core::densities::GDescriptor;
use nlqf_core::em_scenarios::{build_em_model, EmFlags, EmModelParams};
use nlqf_core::functionals::SlotTable;
use nlqf_core::lattice::make_grid;
use nlqf_core::testfunctions::{bump, gaussian_packet, scaled, sum, translate};
use nlqf_core::{Evaluator, Grid, GridSpec, Kernel, NonlinearModel, Probe, TensorRank, TestFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::overrides::apply_overrides;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSection,
    #[serde(default)]
    pub functions: BTreeMap<String, FunctionSpec>,
    pub model: ModelSpec,
    /// Probe name to `slot = function` bindings.
    #[serde(default)]
    pub probes: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_t: usize,
    pub n_s: usize,
    pub dt: f64,
    pub dx: f64,
    /// Grid corner; centred on the origin when absent.
    pub origin: Option<[f64; 4]>,
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        let mut s = GridSpec::centered(self.n_t, self.n_s, self.dt, self.dx);
        if let Some(o) = self.origin {
            s.origin = o;
        }
        s
    }
}

fn one() -> f64 {
    1.0
}

fn scalar_rank() -> TensorRank {
    TensorRank::Scalar
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Gaussian {
        #[serde(default)]
        center: [f64; 4],
        sigma: f64,
        #[serde(default)]
        q: [f64; 4],
        #[serde(default = "scalar_rank")]
        rank: TensorRank,
        profile: Option<Vec<f64>>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Bump {
        #[serde(default)]
        center: [f64; 4],
        radius: f64,
        #[serde(default = "scalar_rank")]
        rank: TensorRank,
        profile: Option<Vec<f64>>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Sum {
        terms: Vec<String>,
    },
    Scaled {
        of: String,
        factor: f64,
    },
    Translate {
        of: String,
        shift: [f64; 4],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub expr: String,
    pub kernel: Kernel,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Terms {
        terms: Vec<TermSpec>,
        /// Extra slot declarations on top of `f, g, h` (scalar), `J, S`
        /// (vector) and `F` (antisym2).
        #[serde(default)]
        slots: BTreeMap<String, TensorRank>,
    },
    Em {
        #[serde(default)]
        params: EmModelParams,
        #[serde(default)]
        flags: EmFlags,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    #[default]
    Vacuum,
    Excited {
        creators: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputSpec {
    Gram {
        name: Option<String>,
        probes: Vec<String>,
        tol: Option<f64>,
    },
    /// `⟨0|φ_1 … φ_k|0⟩` for the first `k` probes, `k = 1..=max_n`.
    Wightman {
        name: Option<String>,
        probes: Vec<String>,
        max_n: Option<usize>,
        #[serde(default)]
        oracle: bool,
    },
    Commutator {
        name: Option<String>,
        pairs: Vec<[String; 2]>,
    },
    /// Commutator of `a` with `b` displaced by `s·direction`.
    CommutatorSweep {
        name: Option<String>,
        a: String,
        b: String,
        direction: [f64; 4],
        start: f64,
        stop: f64,
        step: f64,
    },
    Density {
        name: Option<String>,
        probes: Vec<String>,
        /// `[lo, hi, count]` per measured probe.
        ranges: Vec<(f64, f64, usize)>,
        deformation: Option<GDescriptor>,
        #[serde(default)]
        ridge: f64,
    },
    /// `ξ(f, f_a)` by the phase method and by explicit translation.
    TranslationSweep {
        name: Option<String>,
        probe: String,
        direction: [f64; 4],
        start: f64,
        stop: f64,
        step: f64,
    },
    /// `ξ((J,0,0), (0,0,F))` for `[current, field]` function pairs.
    EmCross {
        name: Option<String>,
        pairs: Vec<[String; 2]>,
    },
}

impl OutputSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OutputSpec::Gram { .. } => "gram",
            OutputSpec::Wightman { .. } => "wightman",
            OutputSpec::Commutator { .. } => "commutator",
            OutputSpec::CommutatorSweep { .. } => "commutator_sweep",
            OutputSpec::Density { .. } => "density",
            OutputSpec::TranslationSweep { .. } => "translation_sweep",
            OutputSpec::EmCross { .. } => "em_cross",
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            OutputSpec::Gram { name, .. }
            | OutputSpec::Wightman { name, .. }
            | OutputSpec::Commutator { name, .. }
            | OutputSpec::CommutatorSweep { name, .. }
            | OutputSpec::Density { name, .. }
            | OutputSpec::TranslationSweep { name, .. }
            | OutputSpec::EmCross { name, .. } => name.as_deref(),
        }
    }
}

/// Scenario text after overrides, with its canonical hash.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
}

pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<LoadedScenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Scenario(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<LoadedScenario, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Scenario(format!("scenario: {e}")))?;
    apply_overrides(&mut table, overrides)?;
    let canonical = toml::to_string(&table).map_err(|e| CliError::Scenario(e.to_string()))?;
    let sha256 = hex::encode(Sha256::digest(canonical.as_bytes()));
    let scenario: Scenario =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Scenario(format!("scenario: {e}")))?;
    Ok(LoadedScenario { scenario, sha256 })
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Scenario objects turned into core types.
pub struct Resolved {
    pub grid: Arc<Grid>,
    pub evaluator: Evaluator,
    pub functions: BTreeMap<String, TestFunction>,
    pub is_em: bool,
    pub scenario: Scenario,
}

impl Resolved {
    pub fn new(scenario: Scenario) -> Result<Self, CliError> {
        let grid = make_grid(scenario.grid.spec()).map_err(|e| CliError::Scenario(format!("grid: {e}")))?;
        let mut functions = BTreeMap::new();
        for name in scenario.functions.keys() {
            build_function(name, &scenario.functions, &mut functions, &mut Vec::new())?;
        }
        let (model, is_em) = build_model(&scenario.model)?;
        let evaluator = Evaluator::new(grid.clone(), model);
        Ok(Resolved { grid, evaluator, functions, is_em, scenario })
    }

    pub fn function(&self, name: &str) -> Result<&TestFunction, CliError> {
        self.functions.get(name).ok_or_else(|| CliError::Scenario(format!("unknown function `{name}`")))
    }

    /// A declared probe, or a function bound to the unique model slot of its rank.
    pub fn probe(&self, name: &str) -> Result<Probe, CliError> {
        if let Some(b) = self.scenario.probes.get(name) {
            let mut p = Probe::new();
            for (slot, f) in b {
                p = p.with(slot, self.function(f)?.clone());
            }
            if b.is_empty() {
                return Err(CliError::Scenario(format!("probe `{name}` binds no slot")));
            }
            return Ok(p);
        }
        let f = self
            .functions
            .get(name)
            .ok_or_else(|| CliError::Scenario(format!("`{name}` is neither a probe nor a function")))?;
        let slots: Vec<&String> =
            self.evaluator.model().slots().iter().filter(|(_, r)| **r == f.rank()).map(|(s, _)| s).collect();
        match slots.as_slice() {
            [s] => Ok(Probe::new().with(s, f.clone())),
            [] => Err(CliError::Scenario(format!("function `{name}` ({}) matches no model slot", f.rank().name()))),
            _ => Err(CliError::Scenario(format!(
                "function `{name}` ({}) matches several model slots; declare it under [probes]",
                f.rank().name()
            ))),
        }
    }

    pub fn probes(&self, names: &[String]) -> Result<Vec<Probe>, CliError> {
        names.iter().map(|n| self.probe(n)).collect()
    }

    pub fn state(&self) -> Result<StatePrep, CliError> {
        Ok(match &self.scenario.state {
            StateSpec::Vacuum => StatePrep::Vacuum,
            StateSpec::Excited { creators } => StatePrep::Excited { creators: self.probes(creators)? },
        })
    }

    /// Every declared probe, or every function when none are declared.
    pub fn all_probe_names(&self) -> Vec<String> {
        if self.scenario.probes.is_empty() {
            self.functions.keys().cloned().collect()
        } else {
            self.scenario.probes.keys().cloned().collect()
        }
    }
}

fn build_function(
    name: &str,
    specs: &BTreeMap<String, FunctionSpec>,
    done: &mut BTreeMap<String, TestFunction>,
    stack: &mut Vec<String>,
) -> Result<TestFunction, CliError> {
    if let Some(f) = done.get(name) {
        return Ok(f.clone());
    }
    if !valid_name(name) {
        return Err(CliError::Scenario(format!("function name `{name}` must be alphanumeric, `_` or `-`")));
    }
    if stack.iter().any(|s| s == name) {
        return Err(CliError::Scenario(format!("function `{name}` refers to itself")));
    }
    let spec = specs.get(name).ok_or_else(|| CliError::Scenario(format!("unknown function `{name}`")))?;
    stack.push(name.to_string());
    let err = |e: nlqf_core::error::TestFunctionError| CliError::Scenario(format!("function `{name}`: {e}"));
    let default_profile = |rank: TensorRank, p: &Option<Vec<f64>>| {
        p.clone().unwrap_or_else(|| {
            let mut v = vec![0.0; rank.components()];
            v[0] = 1.0;
            v
        })
    };
    let f = match spec {
        FunctionSpec::Gaussian { center, sigma, q, rank, profile, amplitude } => {
            gaussian_packet(*center, *sigma, *q, *rank, &default_profile(*rank, profile)).map_err(err)?.with_amplitude(*amplitude)
        }
        FunctionSpec::Bump { center, radius, rank, profile, amplitude } => {
            bump(*center, *radius, *rank, &default_profile(*rank, profile)).map_err(err)?.with_amplitude(*amplitude)
        }
        FunctionSpec::Sum { terms } => {
            let parts = terms.iter().map(|t| build_function(t, specs, done, stack)).collect::<Result<Vec<_>, _>>()?;
            sum(parts).map_err(err)?
        }
        FunctionSpec::Scaled { of, factor } => scaled(build_function(of, specs, done, stack)?, *factor).map_err(err)?,
        FunctionSpec::Translate { of, shift } => translate(&build_function(of, specs, done, stack)?, *shift),
    };
    stack.pop();
    done.insert(name.to_string(), f.clone());
    Ok(f)
}

fn build_model(spec: &ModelSpec) -> Result<(NonlinearModel, bool), CliError> {
    match spec {
        ModelSpec::Terms { terms, slots } => {
            let mut table = SlotTable::default();
            for (s, r) in slots {
                table.insert(s, *r);
            }
            let specs: Vec<(&str, Kernel, f64)> = terms.iter().map(|t| (t.expr.as_str(), t.kernel, t.weight)).collect();
            let m = NonlinearModel::from_specs(&specs, &table).map_err(|e| CliError::Scenario(format!("model: {e}")))?;
            Ok((m, false))
        }
        ModelSpec::Em { params, flags } => {
            let m = build_em_model(params, *flags).map_err(|e| CliError::Scenario(format!("EM model: {e}")))?;
            Ok((m, true))
        }
    }
}
