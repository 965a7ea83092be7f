//! Deformed electromagnetism: models over a current `J`, an axial vector
//! `S` and a field strength `F`, and their current-field correlations.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{Evaluator, ModelTerm, NonlinearModel, Probe};
use crate::conventions::TensorRank;
use crate::error::{AlgebraError, Error, FunctionalError};
use crate::functionals::{parse_with_slots, SlotTable};
use crate::kernels::Kernel;
use crate::testfunctions::TestFunction;

/// Parameters of the EM family. Defaults are arbitrary illustration values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmModelParams {
    /// `λ_1 … λ_7`.
    pub lambda: [f64; 7],
    /// `κ_1, κ_2, κ_3`.
    pub kappa: [f64; 3],
    pub m_v: f64,
    pub sigma_t: f64,
    pub sigma_s: f64,
    /// Mass per term name (see [`term_names`]); EM-kernel terms are massless.
    pub mass_overrides: BTreeMap<String, f64>,
    /// Weights of the two derivative terms.
    pub derivative_weights: [f64; 2],
    /// Weights of `(J·J)_S, (S·S)_S, (J·S)_S, (F·F)_S` and `(J + κ_p S)_V`.
    pub extended_weights: [f64; 5],
    pub kappa_parity: f64,
    /// Mass of the scalar kernel used by the extended terms.
    pub m_s: f64,
}

impl Default for EmModelParams {
    fn default() -> Self {
        EmModelParams {
            lambda: [0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0],
            kappa: [1.0, 1.0, 1.0],
            m_v: 1.0,
            sigma_t: 1.0,
            sigma_s: 0.5,
            mass_overrides: BTreeMap::new(),
            derivative_weights: [0.1, 0.1],
            extended_weights: [0.0; 5],
            kappa_parity: 0.0,
            m_s: 1.0,
        }
    }
}

impl EmModelParams {
    /// All couplings zero: the free `(F)_EM + (J)_V (+ (S)_V)` model.
    pub fn free() -> Self {
        EmModelParams { lambda: [0.0; 7], derivative_weights: [0.0; 2], ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        let bad = |m: String| Err(AlgebraError::InvalidModel(m));
        if let Some(i) = self.lambda.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad(format!("lambda{} must be finite and >= 0, got {}", i + 1, self.lambda[i]));
        }
        if self.kappa.iter().chain([&self.kappa_parity]).any(|k| !k.is_finite()) {
            return bad("kappa values must be finite".into());
        }
        if !(self.m_v > 0.0 && self.m_v.is_finite()) {
            return bad(format!("m_v must be > 0, got {}", self.m_v));
        }
        if !(self.sigma_t >= self.sigma_s && self.sigma_s >= 0.0 && self.sigma_t.is_finite()) {
            return bad(format!("need sigma_t >= sigma_s >= 0, got {} and {}", self.sigma_t, self.sigma_s));
        }
        let weights = self.derivative_weights.iter().chain(&self.extended_weights);
        if weights.clone().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("derivative and extended weights must be finite and >= 0".into());
        }
        for (name, m) in &self.mass_overrides {
            if !term_names().contains(&name.as_str()) {
                return bad(format!("mass override for unknown term `{name}`"));
            }
            if !(*m > 0.0 && m.is_finite()) {
                return bad(format!("mass override for `{name}` must be > 0, got {m}"));
            }
        }
        Ok(())
    }
}

/// Which optional term groups to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EmFlags {
    pub axial: bool,
    pub derivative: bool,
    pub extended: bool,
}

enum K {
    V,
    Em,
    S,
}

struct TermSpec {
    name: &'static str,
    expr: String,
    kernel: K,
    weight: f64,
}

/// Names accepted as mass-override keys.
pub fn term_names() -> &'static [&'static str] {
    &[
        "em", "j", "s", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6", "lambda7", "deriv_v",
        "deriv_em", "jj", "ss", "js", "ff", "parity",
    ]
}

fn specs(p: &EmModelParams, flags: EmFlags) -> Vec<TermSpec> {
    let [l1, l2, l3, l4, l5, l6, l7] = p.lambda;
    let [k1, k2, k3] = p.kappa;
    let t = |name, expr: String, kernel, weight| TermSpec { name, expr, kernel, weight };
    let mut out = vec![
        t("em", "F".into(), K::Em, 1.0),
        t("j", "J".into(), K::V, 1.0),
        t("lambda1", format!("J + {k1:?}*eta(J,F)"), K::V, l1),
        t("lambda2", "eta(J,F)".into(), K::V, l2),
        t("lambda3", "eps(J,F)".into(), K::V, l3),
    ];
    if flags.axial {
        out.insert(2, t("s", "S".into(), K::V, 1.0));
        out.extend([
            t("lambda4", "eta(S,F)".into(), K::V, l4),
            t("lambda5", format!("eta(S,F) + {k2:?}*eps(J,F)"), K::V, l5),
            t("lambda6", format!("wedge(S,J) + {k3:?}*eps(F)"), K::Em, l6),
            t("lambda7", "wedge(S,J)".into(), K::Em, l7),
        ]);
    }
    if flags.derivative {
        let [w1, w2] = p.derivative_weights;
        out.push(t("deriv_v", format!("J + {k2:?}*div(F)"), K::V, w1));
        out.push(t("deriv_em", format!("dwedge(J) + {k3:?}*F"), K::Em, w2));
    }
    if flags.extended {
        let [jj, ss, js, ff, par] = p.extended_weights;
        out.push(t("jj", "eta(J,J)".into(), K::S, jj));
        out.push(t("ff", "eta(F,F)".into(), K::S, ff));
        if flags.axial {
            out.push(t("ss", "eta(S,S)".into(), K::S, ss));
            out.push(t("js", "eta(J,S)".into(), K::S, js));
            out.push(t("parity", format!("J + {:?}*S", p.kappa_parity), K::V, par));
        }
    }
    out
}

/// Assemble the EM model. Zero-weight couplings are kept out of the term
/// list so the free model has exactly the base terms.
pub fn build_em_model(params: &EmModelParams, flags: EmFlags) -> Result<NonlinearModel, Error> {
    params.validate()?;
    if !flags.axial {
        if let Some(i) = (3..7).find(|&i| params.lambda[i] > 0.0) {
            return Err(AlgebraError::InvalidModel(format!(
                "lambda{} couples the axial vector S, but the axial flag is off",
                i + 1
            ))
            .into());
        }
    }
    let table = em_slots(flags.axial);
    let mut terms = Vec::new();
    for spec in specs(params, flags) {
        let base = matches!(spec.name, "em" | "j" | "s");
        if !base && spec.weight == 0.0 {
            continue;
        }
        let functional = parse_with_slots(&spec.expr, &table)?;
        let mass = |default: f64| params.mass_overrides.get(spec.name).copied().unwrap_or(default);
        let kernel = match spec.kernel {
            K::V => Kernel::vector(mass(params.m_v), params.sigma_t, params.sigma_s)?,
            K::S => Kernel::scalar(mass(params.m_s))?,
            K::Em => Kernel::EmTensor,
        };
        terms.push(ModelTerm::new(functional, kernel, spec.weight).with_label(format!("{}: {}", spec.name, spec.expr)));
    }
    Ok(NonlinearModel::new(terms)?)
}

fn em_slots(axial: bool) -> SlotTable {
    let mut t = SlotTable::empty();
    t.insert("J", TensorRank::Vector);
    t.insert("F", TensorRank::Antisym2);
    if axial {
        t.insert("S", TensorRank::Vector);
    }
    t
}

/// A `(J, S, F)` triple of test functions; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmProbe {
    pub j: Option<TestFunction>,
    pub s: Option<TestFunction>,
    pub f: Option<TestFunction>,
}

impl EmProbe {
    pub fn current(j: TestFunction) -> Self {
        EmProbe { j: Some(j), ..Default::default() }
    }

    pub fn field(f: TestFunction) -> Self {
        EmProbe { f: Some(f), ..Default::default() }
    }

    pub fn to_probe(&self) -> Result<Probe, Error> {
        let mut p = Probe::new();
        for (slot, tf, rank) in [
            ("J", &self.j, TensorRank::Vector),
            ("S", &self.s, TensorRank::Vector),
            ("F", &self.f, TensorRank::Antisym2),
        ] {
            if let Some(tf) = tf {
                if tf.rank() != rank {
                    return Err(FunctionalError::BindingRank { slot: slot.into(), expected: rank, got: tf.rank() }.into());
                }
                p = p.with(slot, tf.clone());
            }
        }
        if p.bindings().is_empty() {
            return Err(AlgebraError::InvalidModel("an EM probe needs at least one of J, S, F".into()).into());
        }
        Ok(p)
    }
}

/// `ξ((J, 0, 0), (0, 0, F))`: the vacuum two-point correlation between a
/// current observable and a field-strength observable.
pub fn vacuum_cross_correlation(ev: &Evaluator, j: &TestFunction, f: &TestFunction) -> Result<Complex64, Error> {
    let pj = EmProbe::current(j.clone()).to_probe()?;
    let pf = EmProbe::field(f.clone()).to_probe()?;
    ev.xi(&pj, &pf)
}
