use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::conventions::TensorRank;
use crate::error::{AlgebraError, Error, FunctionalError, KernelError};
use crate::functionals::{parse_with_slots, LocalFunctional, SlotTable};
use crate::kernels::{project_many, shell_ip, shell_ip_translated, Kernel, ShellField, ShellValue};
use crate::lattice::Grid;
use crate::testfunctions::{FunctionKey, TestFunction};

/// One `(𝒫_i, kernel_i, λ_i)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTerm {
    pub functional: LocalFunctional,
    pub kernel: Kernel,
    pub weight: f64,
    pub label: String,
}

impl ModelTerm {
    pub fn new(functional: LocalFunctional, kernel: Kernel, weight: f64) -> Self {
        let label = format!("({})_{}", functional.canonical(), kernel.name());
        ModelTerm { functional, kernel, weight, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// `ξ(f, g) = Σ_i λ_i (𝒫_i[f], 𝒫_i[g])_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearModel {
    terms: Vec<ModelTerm>,
    slots: BTreeMap<String, TensorRank>,
}

impl NonlinearModel {
    pub fn new(terms: Vec<ModelTerm>) -> Result<Self, AlgebraError> {
        if terms.is_empty() {
            return Err(AlgebraError::InvalidModel("a model needs at least one term".into()));
        }
        let mut slots = BTreeMap::new();
        for (i, t) in terms.iter().enumerate() {
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(AlgebraError::InvalidModel(format!("term {i} ({}) has weight {}", t.label, t.weight)));
            }
            t.kernel
                .validate()
                .map_err(|source| AlgebraError::Term { term: i, label: t.label.clone(), source })?;
            if t.functional.rank() != t.kernel.input_rank() {
                return Err(AlgebraError::Term {
                    term: i,
                    label: t.label.clone(),
                    source: KernelError::RankMismatch { expected: t.kernel.input_rank(), got: t.functional.rank() },
                });
            }
            for (name, rank) in t.functional.slots() {
                if let Some(prev) = slots.insert(name.clone(), *rank) {
                    if prev != *rank {
                        return Err(AlgebraError::InvalidModel(format!("slot `{name}` used as {prev} and {rank}")));
                    }
                }
            }
        }
        Ok(NonlinearModel { terms, slots })
    }

    /// Build from `(expression, kernel, weight)` triples.
    pub fn from_specs(specs: &[(&str, Kernel, f64)], table: &SlotTable) -> Result<Self, Error> {
        let terms = specs
            .iter()
            .map(|(text, k, w)| Ok(ModelTerm::new(parse_with_slots(text, table)?, *k, *w)))
            .collect::<Result<Vec<_>, FunctionalError>>()?;
        Ok(NonlinearModel::new(terms)?)
    }

    /// Single identity term: the free scalar field of mass `m`.
    pub fn free_scalar(m: f64) -> Result<Self, Error> {
        NonlinearModel::from_specs(&[("f", Kernel::scalar(m)?, 1.0)], &SlotTable::default())
    }

    pub fn terms(&self) -> &[ModelTerm] {
        &self.terms
    }

    pub fn slots(&self) -> &BTreeMap<String, TensorRank> {
        &self.slots
    }
}

/// Test functions bound to model slots. Slots left unbound are the zero
/// field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Probe {
    bindings: BTreeMap<String, TestFunction>,
}

/// Cache identity of a probe.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProbeKey(Vec<(String, FunctionKey)>);

impl Probe {
    pub fn new() -> Self {
        Probe::default()
    }

    /// Probe binding the scalar slot `f`.
    pub fn scalar(f: TestFunction) -> Self {
        Probe::new().with("f", f)
    }

    pub fn with(mut self, slot: &str, f: TestFunction) -> Self {
        self.bindings.insert(slot.to_string(), f);
        self
    }

    pub fn get(&self, slot: &str) -> Option<&TestFunction> {
        self.bindings.get(slot)
    }

    pub fn bindings(&self) -> &BTreeMap<String, TestFunction> {
        &self.bindings
    }

    pub fn key(&self) -> ProbeKey {
        ProbeKey(self.bindings.iter().map(|(k, v)| (k.clone(), v.fingerprint())).collect())
    }

    /// Translate every bound function, `f_a(x) = f(x + a)`.
    pub fn translate(&self, a: [f64; 4]) -> Probe {
        Probe { bindings: self.bindings.iter().map(|(k, v)| (k.clone(), crate::testfunctions::translate(v, a))).collect() }
    }
}

/// `ξ` with its per-term parts and shell diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct XiValue {
    pub value: Complex64,
    /// Weighted contribution of each term.
    pub terms: Vec<Complex64>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

type ShellKey = (ProbeKey, String, u64);

/// Evaluates `ξ` for a model on a grid, caching on-shell spectra per
/// (probe, functional, mass).
pub struct Evaluator {
    grid: Arc<Grid>,
    model: NonlinearModel,
    cache: Mutex<HashMap<ShellKey, Option<Arc<ShellField>>>>,
}

impl Evaluator {
    pub fn new(grid: Arc<Grid>, model: NonlinearModel) -> Self {
        Evaluator { grid, model, cache: Mutex::new(HashMap::new()) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn model(&self) -> &NonlinearModel {
        &self.model
    }

    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }

    fn term_error(&self, i: usize, e: Error) -> Error {
        let label = self.model.terms[i].label.clone();
        match e {
            Error::Kernel(source) => AlgebraError::Term { term: i, label, source }.into(),
            other => other,
        }
    }

    fn check_probe(&self, p: &Probe) -> Result<(), Error> {
        if p.bindings.is_empty() {
            return Err(FunctionalError::UnboundSlot("<probe binds no slot>".into()).into());
        }
        for (name, f) in &p.bindings {
            match self.model.slots.get(name) {
                None => return Err(FunctionalError::UnknownSlot(name.clone()).into()),
                Some(r) if *r != f.rank() => {
                    return Err(FunctionalError::BindingRank { slot: name.clone(), expected: *r, got: f.rank() }.into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// On-shell spectra of every term for one probe; `None` marks a term
    /// that vanishes identically because none of its slots is bound.
    pub fn shells(&self, p: &Probe) -> Result<Vec<Option<Arc<ShellField>>>, Error> {
        self.check_probe(p)?;
        let pkey = p.key();
        let keys: Vec<ShellKey> = self
            .model
            .terms
            .iter()
            .map(|t| (pkey.clone(), t.functional.canonical(), t.kernel.mass().to_bits()))
            .collect();
        let missing: Vec<usize> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = Vec::new();
            for (i, k) in keys.iter().enumerate() {
                if !cache.contains_key(k) && !seen.iter().any(|j: &usize| keys[*j] == *k) {
                    seen.push(i);
                }
            }
            seen
        };
        let mut fresh: Vec<(usize, Option<Arc<ShellField>>)> = Vec::new();
        let mut to_project: Vec<usize> = Vec::new();
        for &i in &missing {
            let f = &self.model.terms[i].functional;
            let any_bound = f.slots().keys().any(|s| p.bindings.contains_key(s));
            if !any_bound && f.preserves_zero() {
                fresh.push((i, None));
            } else {
                to_project.push(i);
            }
        }
        if !to_project.is_empty() {
            let specs: Vec<(&LocalFunctional, f64)> = to_project
                .iter()
                .map(|&i| (&self.model.terms[i].functional, self.model.terms[i].kernel.mass()))
                .collect();
            let bindings = self.bindings_with_zeros(p, &to_project);
            let fields = project_many(&self.grid, &specs, &bindings).map_err(|e| self.term_error(to_project[0], e))?;
            for (i, f) in to_project.iter().zip(fields) {
                fresh.push((*i, Some(Arc::new(f))));
            }
        }
        let mut cache = self.cache.lock().unwrap();
        for (i, f) in fresh {
            cache.insert(keys[i].clone(), f);
        }
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    /// Bindings with unbound slots replaced by zero functions.
    fn bindings_with_zeros(&self, p: &Probe, terms: &[usize]) -> BTreeMap<String, TestFunction> {
        let mut b = p.bindings.clone();
        for &i in terms {
            for (name, rank) in self.model.terms[i].functional.slots() {
                b.entry(name.clone()).or_insert_with(|| zero_function(*rank));
            }
        }
        b
    }

    pub fn xi_detailed(&self, f: &Probe, g: &Probe) -> Result<XiValue, Error> {
        let (sf, sg) = (self.shells(f)?, self.shells(g)?);
        self.combine(&sf, &sg, |k, a, b| shell_ip(k, a, b))
    }

    fn combine<F>(&self, sf: &[Option<Arc<ShellField>>], sg: &[Option<Arc<ShellField>>], ip: F) -> Result<XiValue, Error>
    where
        F: Fn(&Kernel, &ShellField, &ShellField) -> Result<ShellValue, KernelError>,
    {
        let mut out = XiValue { value: Complex64::default(), terms: Vec::new(), dropped: 0, warnings: Vec::new() };
        for (i, t) in self.model.terms.iter().enumerate() {
            let v = match (&sf[i], &sg[i]) {
                (Some(a), Some(b)) => {
                    let sv = ip(&t.kernel, a, b).map_err(|source| AlgebraError::Term {
                        term: i,
                        label: t.label.clone(),
                        source,
                    })?;
                    out.dropped = out.dropped.max(sv.dropped);
                    for w in sv.warnings {
                        out.warnings.push(format!("term {i} ({}): {w}", t.label));
                    }
                    sv.value * t.weight
                }
                _ => Complex64::default(),
            };
            out.terms.push(v);
        }
        // fixed left-to-right order over terms
        out.value = out.terms.iter().fold(Complex64::default(), |a, b| a + b);
        Ok(out)
    }

    pub fn xi(&self, f: &Probe, g: &Probe) -> Result<Complex64, Error> {
        Ok(self.xi_detailed(f, g)?.value)
    }

    /// Matrix `X[i][j] = ξ(p_i, p_j)`.
    pub fn xi_matrix(&self, probes: &[Probe]) -> Result<Vec<Vec<Complex64>>, Error> {
        let shells = probes.iter().map(|p| self.shells(p)).collect::<Result<Vec<_>, _>>()?;
        let n = probes.len();
        let entries: Vec<Result<Complex64, Error>> = (0..n * n)
            .into_par_iter()
            .map(|ij| self.combine(&shells[ij / n], &shells[ij % n], |k, a, b| shell_ip(k, a, b)).map(|v| v.value))
            .collect();
        let mut m = vec![vec![Complex64::default(); n]; n];
        for (ij, e) in entries.into_iter().enumerate() {
            m[ij / n][ij % n] = e?;
        }
        Ok(m)
    }

    /// `ξ(f, f_a)` by the on-shell phase method.
    pub fn translated_autocorrelation(&self, f: &Probe, a: [f64; 4]) -> Result<XiValue, Error> {
        let s = self.shells(f)?;
        self.combine(&s, &s, |k, x, y| shell_ip_translated(k, x, y, a))
    }

    /// `[φ_f, φ_g] = ξ(g, f) - ξ(f, g)`.
    pub fn commutator(&self, f: &Probe, g: &Probe) -> Result<Commutator, Error> {
        let fg = self.xi(f, g)?;
        let gf = self.xi(g, f)?;
        let ff = self.xi(f, f)?.re;
        let gg = self.xi(g, g)?.re;
        let value = gf - fg;
        let scale = (ff * gg).sqrt();
        let normalized = if scale > 0.0 { value.norm() / scale } else { f64::INFINITY };
        Ok(Commutator { value, normalized })
    }
}

/// The zero test function of a given rank.
fn zero_function(rank: TensorRank) -> TestFunction {
    let profile = vec![0.0; rank.components()];
    crate::testfunctions::gaussian_packet([0.0; 4], 1.0, [0.0; 4], rank, &profile).expect("valid zero packet")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commutator {
    pub value: Complex64,
    /// `|value| / √(ξ(f,f) ξ(g,g))`.
    pub normalized: f64,
}
