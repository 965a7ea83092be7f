//! Executing scenario outputs and writing the run directory.

use std::collections::BTreeMap;
use std::path::Path;

use nlqf_core::algebra::{geometry, gram_psd, wightman, StatePrep, PSD_TOL, WIGHTMAN_CAP};
use nlqf_core::densities::{g_deformed_density, DensitySpec, PreparedDensity};
use nlqf_core::em_scenarios::vacuum_cross_correlation;
use nlqf_core::lattice::{boundary_leakage, LEAKAGE_WARN};
use nlqf_core::oracles::{wightman_oracle_table, WIGHTMAN_ORACLE_CAP};
use nlqf_core::testfunctions::{causal_relation, Relation};
use nlqf_core::{Probe, CONVENTIONS};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{load_scenario, valid_name, OutputSpec, Resolved, Scenario};
use crate::table::{Cell, Table};
use crate::CliError;

/// Default relative tolerance of the Wightman dual-path comparison.
pub const WIGHTMAN_ORACLE_TOL: f64 = 1e-9;

/// Largest number of rows a single sweep or density slice may request.
pub const MAX_ROWS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides every tolerance that an output leaves unset.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub name: String,
    pub kind: String,
    pub file: String,
    pub rows: usize,
    pub summary: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario_sha256: String,
    pub overrides: Vec<String>,
    pub conventions: String,
    pub grid: Value,
    pub diagnostics: Value,
    pub outputs: Vec<OutputRecord>,
    pub warnings: Vec<String>,
    /// `"ok"` or the first numerical failure.
    pub status: String,
}

/// Outcome of a run: the manifest, the tables in output order, and the
/// first numerical failure if any.
pub struct RunResult {
    pub manifest: RunManifest,
    pub tables: Vec<(String, Table)>,
    pub failure: Option<String>,
}

impl RunResult {
    /// `Ok` for a clean run, otherwise the numerical failure.
    pub fn into_result(self) -> Result<RunManifest, CliError> {
        match self.failure {
            None => Ok(self.manifest),
            Some(f) => Err(CliError::Numerical(f)),
        }
    }
}

/// Run every output of the scenario at `path` and write CSVs plus
/// `manifest.json` into `out_dir`.
pub fn run_scenario(path: &Path, out_dir: &Path, overrides: &[String]) -> Result<RunManifest, CliError> {
    let loaded = load_scenario(path, overrides)?;
    let r = execute(loaded.scenario, &loaded.sha256, overrides, RunOptions::default())?;
    write_run(&r, out_dir)?;
    r.into_result()
}

/// Run the scenario's outputs in memory.
pub fn execute(scenario: Scenario, sha256: &str, overrides: &[String], opts: RunOptions) -> Result<RunResult, CliError> {
    let resolved = Resolved::new(scenario)?;
    let mut names: Vec<String> = Vec::new();
    for (i, o) in resolved.scenario.outputs.iter().enumerate() {
        let name = o.name().map(str::to_string).unwrap_or_else(|| format!("{}_{i}", o.kind()));
        if !valid_name(&name) {
            return Err(CliError::Scenario(format!("output name `{name}` must be alphanumeric, `_` or `-`")));
        }
        if names.contains(&name) || name == "manifest" {
            return Err(CliError::Scenario(format!("duplicate output name `{name}`")));
        }
        names.push(name);
    }
    let mut used_probes: Vec<String> = Vec::new();
    let mut warnings = Vec::new();
    let mut outputs = Vec::new();
    let mut tables = Vec::new();
    let mut failure = None;
    for (o, name) in resolved.scenario.outputs.iter().zip(names) {
        let mut out = run_output(&resolved, o, opts)?;
        out.table.comments.insert(0, format!("output {name} ({})", o.kind()));
        for p in out.probes.drain(..) {
            if !used_probes.contains(&p) {
                used_probes.push(p);
            }
        }
        warnings.extend(out.warnings.iter().map(|w| format!("{name}: {w}")));
        if failure.is_none() {
            failure = out.failure.map(|f| format!("{name}: {f}"));
        }
        outputs.push(OutputRecord {
            name: name.clone(),
            kind: o.kind().to_string(),
            file: format!("{name}.csv"),
            rows: out.table.rows.len(),
            summary: out.summary,
        });
        tables.push((name, out.table));
    }
    let diagnostics = diagnostics(&resolved, &used_probes, &mut warnings)?;
    let g = resolved.grid.as_ref();
    let spec = g.spec();
    let grid = json!({
        "n_t": spec.n_t,
        "n_s": spec.n_s,
        "dt": spec.dt,
        "dx": spec.dx,
        "origin": spec.origin,
        "points": spec.points(),
        "k0_nyquist": g.k0_nyquist(),
        "momentum_cell": g.momentum_cell(),
    });
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_sha256: sha256.to_string(),
        overrides: overrides.to_vec(),
        conventions: CONVENTIONS.to_string(),
        grid,
        diagnostics,
        outputs,
        warnings,
        status: failure.clone().unwrap_or_else(|| "ok".to_string()),
    };
    Ok(RunResult { manifest, tables, failure })
}

/// Write each table and the manifest.
pub fn write_run(r: &RunResult, out_dir: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Scenario(format!("output directory {}: {e}", out_dir.display()));
    std::fs::create_dir_all(out_dir).map_err(io)?;
    for (name, t) in &r.tables {
        std::fs::write(out_dir.join(format!("{name}.csv")), t.to_csv()).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(&r.manifest).map_err(|e| CliError::Scenario(e.to_string()))?;
    text.push('\n');
    std::fs::write(out_dir.join("manifest.json"), text).map_err(io)
}

struct OutputData {
    table: Table,
    summary: BTreeMap<String, Value>,
    warnings: Vec<String>,
    failure: Option<String>,
    probes: Vec<String>,
}

impl OutputData {
    fn new(table: Table, probes: Vec<String>) -> Self {
        OutputData { table, summary: BTreeMap::new(), warnings: Vec::new(), failure: None, probes }
    }
}

fn core(e: nlqf_core::Error) -> CliError {
    CliError::from(e)
}

fn run_output(r: &Resolved, o: &OutputSpec, opts: RunOptions) -> Result<OutputData, CliError> {
    match o {
        OutputSpec::Gram { probes, tol, .. } => gram(r, probes, tol.or(opts.tol).unwrap_or(PSD_TOL)),
        OutputSpec::Wightman { probes, max_n, oracle, .. } => {
            wightman_output(r, probes, max_n.unwrap_or(probes.len()), *oracle, opts.tol.unwrap_or(WIGHTMAN_ORACLE_TOL))
        }
        OutputSpec::Commutator { pairs, .. } => commutator(r, pairs),
        OutputSpec::CommutatorSweep { a, b, direction, start, stop, step, .. } => {
            commutator_sweep(r, a, b, *direction, &sweep_values(*start, *stop, *step)?)
        }
        OutputSpec::Density { probes, ranges, deformation, ridge, .. } => {
            density(r, probes, ranges, deformation.as_ref(), *ridge)
        }
        OutputSpec::TranslationSweep { probe, direction, start, stop, step, .. } => {
            translation_sweep(r, probe, *direction, &sweep_values(*start, *stop, *step)?)
        }
        OutputSpec::EmCross { pairs, .. } => em_cross(r, pairs),
    }
}

/// `start, start + step, …` up to `stop` inclusive (to rounding).
pub fn sweep_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(CliError::Scenario(format!("sweep needs step > 0 and stop >= start, got {start}..{stop} by {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > MAX_ROWS {
        return Err(CliError::Scenario(format!("sweep has {n} rows, more than {MAX_ROWS}")));
    }
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn gram(r: &Resolved, names: &[String], tol: f64) -> Result<OutputData, CliError> {
    if names.is_empty() {
        return Err(CliError::Scenario("gram needs at least one probe".into()));
    }
    let probes = r.probes(names)?;
    let rep = gram_psd(&r.evaluator, &probes, tol).map_err(core)?;
    let mut t = Table::new(&["i", "j", "probe_i", "probe_j", "re", "im"]);
    t.comment("xi(f_i, f_j)");
    for (i, row) in rep.matrix.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            t.push(vec![i.into(), j.into(), names[i].as_str().into(), names[j].as_str().into(), z.re.into(), z.im.into()]);
        }
    }
    let mut d = OutputData::new(t, names.to_vec());
    d.summary.insert("eigenvalues".into(), json!(rep.eigenvalues));
    d.summary.insert("min_eigenvalue".into(), json!(rep.min_eigenvalue));
    d.summary.insert("trace".into(), json!(rep.trace));
    d.summary.insert("hermiticity_residual".into(), json!(rep.hermiticity_residual));
    d.summary.insert("tol".into(), json!(tol));
    d.summary.insert("psd_certified".into(), json!(rep.psd_certified));
    if !rep.psd_certified {
        d.failure = Some(format!(
            "Gram matrix is not PSD: min eigenvalue {:e} < -{tol:e} * trace {:e}",
            rep.min_eigenvalue, rep.trace
        ));
    }
    Ok(d)
}

fn sub_matrix(m: &[Vec<Complex64>], k: usize) -> Vec<Vec<Complex64>> {
    m[..k].iter().map(|row| row[..k].to_vec()).collect()
}

fn wightman_output(r: &Resolved, names: &[String], max_n: usize, oracle: bool, tol: f64) -> Result<OutputData, CliError> {
    if max_n == 0 || max_n > names.len() {
        return Err(CliError::Scenario(format!("wightman max_n must be in 1..={}, got {max_n}", names.len())));
    }
    if max_n > WIGHTMAN_CAP {
        return Err(CliError::Scenario(format!("wightman max_n {max_n} exceeds the cap {WIGHTMAN_CAP}")));
    }
    if oracle && max_n > WIGHTMAN_ORACLE_CAP {
        return Err(CliError::Scenario(format!("wightman oracle is capped at n = {WIGHTMAN_ORACLE_CAP}, got {max_n}")));
    }
    let probes = r.probes(&names[..max_n])?;
    let xi = r.evaluator.xi_matrix(&probes).map_err(core)?;
    let cols: &[&str] =
        if oracle { &["n", "re", "im", "oracle_re", "oracle_im", "rel_diff"] } else { &["n", "re", "im"] };
    let mut t = Table::new(cols);
    t.comment(format!("<0| phi_1 ... phi_n |0> for probes {}", names[..max_n].join(" ")));
    let mut worst: f64 = 0.0;
    for k in 1..=max_n {
        let sub = sub_matrix(&xi, k);
        let w = wightman(&sub).map_err(|e| core(e.into()))?;
        let mut row: Vec<Cell> = vec![k.into(), w.re.into(), w.im.into()];
        if oracle {
            let o = wightman_oracle_table(&sub).map_err(core)?.value;
            let scale = w.norm().max(o.norm());
            let rel = if scale > 0.0 { (w - o).norm() / scale } else { 0.0 };
            worst = worst.max(rel);
            row.extend([o.re.into(), o.im.into(), rel.into()]);
        }
        t.push(row);
    }
    let mut d = OutputData::new(t, names[..max_n].to_vec());
    if oracle {
        d.summary.insert("oracle_max_rel_diff".into(), json!(worst));
        d.summary.insert("tol".into(), json!(tol));
        if worst > tol {
            d.failure = Some(format!("pairing sum and oracle differ by {worst:e} > {tol:e}"));
        }
    }
    Ok(d)
}

/// Joint causal relation of every function bound in either probe.
fn probe_relation(a: &Probe, b: &Probe) -> &'static str {
    let mut rel = "spacelike";
    for fa in a.bindings().values() {
        for fb in b.bindings().values() {
            match causal_relation(fa, fb).relation {
                Relation::Indeterminate => return "indeterminate",
                Relation::NotSpacelikeSeparated => rel = "not_spacelike",
                Relation::SpacelikeSeparated => {}
            }
        }
    }
    rel
}

fn commutator(r: &Resolved, pairs: &[[String; 2]]) -> Result<OutputData, CliError> {
    let mut t = Table::new(&["a", "b", "re", "im", "normalized", "relation"]);
    t.comment("[phi_a, phi_b] = xi(b, a) - xi(a, b); normalized by sqrt(xi(a,a) xi(b,b))");
    let mut probes = Vec::new();
    for [a, b] in pairs {
        let (pa, pb) = (r.probe(a)?, r.probe(b)?);
        let c = r.evaluator.commutator(&pa, &pb).map_err(core)?;
        t.push(vec![
            a.as_str().into(),
            b.as_str().into(),
            c.value.re.into(),
            c.value.im.into(),
            c.normalized.into(),
            probe_relation(&pa, &pb).into(),
        ]);
        probes.extend([a.clone(), b.clone()]);
    }
    Ok(OutputData::new(t, probes))
}

fn shift(direction: [f64; 4], s: f64) -> [f64; 4] {
    direction.map(|d| d * s)
}

fn commutator_sweep(r: &Resolved, a: &str, b: &str, direction: [f64; 4], values: &[f64]) -> Result<OutputData, CliError> {
    let (pa, pb) = (r.probe(a)?, r.probe(b)?);
    let mut t = Table::new(&["s", "d0", "d1", "d2", "d3", "re", "im", "normalized", "relation"]);
    t.comment(format!("[phi_{a}, phi_{b} with its centre displaced by d = s*direction], direction = {direction:?}"));
    for &s in values {
        let sh = shift(direction, s);
        // f_a(x) = f(x + a) moves the centre by -a
        let moved = pb.translate(sh.map(|c| -c));
        let c = r.evaluator.commutator(&pa, &moved).map_err(core)?;
        t.push(vec![
            s.into(),
            sh[0].into(),
            sh[1].into(),
            sh[2].into(),
            sh[3].into(),
            c.value.re.into(),
            c.value.im.into(),
            c.normalized.into(),
            probe_relation(&pa, &moved).into(),
        ]);
    }
    Ok(OutputData::new(t, vec![a.to_string(), b.to_string()]))
}

fn translation_sweep(r: &Resolved, probe: &str, direction: [f64; 4], values: &[f64]) -> Result<OutputData, CliError> {
    let p = r.probe(probe)?;
    let mut t = Table::new(&[
        "s",
        "a0",
        "a1",
        "a2",
        "a3",
        "phase_re",
        "phase_im",
        "explicit_re",
        "explicit_im",
        "rel_diff",
    ]);
    t.comment(format!("xi({probe}, {probe} translated by a = s*direction), direction = {direction:?}"));
    t.comment("phase: on-shell phase factor; explicit: translate then evaluate");
    let mut worst: f64 = 0.0;
    for &s in values {
        let a = shift(direction, s);
        let ph = r.evaluator.translated_autocorrelation(&p, a).map_err(core)?.value;
        let ex = r.evaluator.xi(&p, &p.translate(a)).map_err(core)?;
        let scale = ph.norm().max(ex.norm());
        let rel = if scale > 0.0 { (ph - ex).norm() / scale } else { 0.0 };
        worst = worst.max(rel);
        t.push(vec![
            s.into(),
            a[0].into(),
            a[1].into(),
            a[2].into(),
            a[3].into(),
            ph.re.into(),
            ph.im.into(),
            ex.re.into(),
            ex.im.into(),
            rel.into(),
        ]);
    }
    let mut d = OutputData::new(t, vec![probe.to_string()]);
    d.summary.insert("max_rel_diff".into(), json!(worst));
    Ok(d)
}

fn em_cross(r: &Resolved, pairs: &[[String; 2]]) -> Result<OutputData, CliError> {
    if !r.is_em {
        return Err(CliError::Scenario("em_cross needs an `em` model".into()));
    }
    let mut t = Table::new(&["current", "field", "re", "im", "normalized"]);
    t.comment("xi((J, 0, 0), (0, 0, F)); normalized by sqrt(xi(J,J) xi(F,F))");
    for [j, f] in pairs {
        let (jf, ff) = (r.function(j)?, r.function(f)?);
        let v = vacuum_cross_correlation(&r.evaluator, jf, ff).map_err(core)?;
        let pj = Probe::new().with("J", jf.clone());
        let pf = Probe::new().with("F", ff.clone());
        let jj = r.evaluator.xi(&pj, &pj).map_err(core)?.re;
        let fff = r.evaluator.xi(&pf, &pf).map_err(core)?.re;
        let scale = (jj * fff).sqrt();
        let norm = if scale > 0.0 { v.norm() / scale } else { f64::INFINITY };
        t.push(vec![j.as_str().into(), f.as_str().into(), v.re.into(), v.im.into(), norm.into()]);
    }
    Ok(OutputData::new(t, Vec::new()))
}

/// Trapezoid weights of `count` equally spaced points on `[lo, hi]`.
fn trapezoid(lo: f64, hi: f64, count: usize) -> Vec<(f64, f64)> {
    if count == 1 {
        return vec![(lo, 0.0)];
    }
    let h = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| (lo + i as f64 * h, if i == 0 || i == count - 1 { h / 2.0 } else { h })).collect()
}

fn density(
    r: &Resolved,
    names: &[String],
    ranges: &[(f64, f64, usize)],
    deformation: Option<&nlqf_core::densities::GDescriptor>,
    ridge: f64,
) -> Result<OutputData, CliError> {
    let n = names.len();
    if !(1..=3).contains(&n) || ranges.len() != n {
        return Err(CliError::Scenario(format!(
            "density needs 1 to 3 probes and one range per probe, got {n} probes and {} ranges",
            ranges.len()
        )));
    }
    let mut total = 1usize;
    for &(lo, hi, c) in ranges {
        if c == 0 || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(CliError::Scenario(format!("bad density range [{lo}, {hi}, {c}]")));
        }
        total = total.saturating_mul(c);
    }
    if total > MAX_ROWS {
        return Err(CliError::Scenario(format!("density slice has {total} points, more than {MAX_ROWS}")));
    }
    let probes = r.probes(names)?;
    let state = r.state()?;
    let mut d_warnings = Vec::new();
    let mut summary = BTreeMap::new();
    let eval: Box<dyn Fn(&[f64]) -> Result<f64, CliError>> = if let Some(g) = deformation {
        if n != 1 || !matches!(state, StatePrep::Vacuum) {
            return Err(CliError::Scenario("a deformed density needs one probe and the vacuum state".into()));
        }
        let v = r.evaluator.xi(&probes[0], &probes[0]).map_err(core)?.re;
        summary.insert("variance".into(), json!(v));
        let g = g.clone();
        Box::new(move |x: &[f64]| g_deformed_density(&g, v, x[0]).map_err(|e| core(e.into())))
    } else {
        let geo = geometry(&r.evaluator, &state, &probes).map_err(core)?;
        summary.insert("f".into(), json!(geo.f));
        let spec = match (&state, geo.s) {
            (StatePrep::Vacuum, _) => DensitySpec::VacuumGaussian { f: geo.f },
            (StatePrep::Excited { .. }, Some(s)) => {
                summary.insert("s".into(), json!(s.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));
                DensitySpec::OneParticle { f: geo.f, s }
            }
            (StatePrep::Excited { .. }, None) => {
                return Err(CliError::Scenario("densities are available for the vacuum and one-creator states".into()))
            }
        };
        let p = PreparedDensity::new(&spec, ridge).map_err(|e| core(e.into()))?;
        if p.exceeds_unit_norm() {
            d_warnings.push(format!(
                "S^dagger F^-1 S = {:e} exceeds 1: the density is negative near the origin",
                p.s_norm().unwrap_or(f64::NAN)
            ));
        }
        Box::new(move |x: &[f64]| p.eval(x).map_err(|e| core(e.into())))
    };
    let axes: Vec<Vec<(f64, f64)>> = ranges.iter().map(|&(lo, hi, c)| trapezoid(lo, hi, c)).collect();
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    cols.push("p".into());
    let mut t = Table::new(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    t.comment(format!("joint density of {}", names.join(" ")));
    let mut integral = 0.0;
    let mut idx = vec![0usize; n];
    loop {
        let x: Vec<f64> = (0..n).map(|a| axes[a][idx[a]].0).collect();
        let w: f64 = (0..n).map(|a| axes[a][idx[a]].1).product();
        let p = eval(&x)?;
        integral += w * p;
        let mut row: Vec<Cell> = x.iter().map(|v| Cell::Num(*v)).collect();
        row.push(p.into());
        t.push(row);
        let mut a = n;
        loop {
            if a == 0 {
                let mut out = OutputData::new(t, names.to_vec());
                summary.insert("trapezoid_integral".into(), json!(integral));
                out.summary = summary;
                out.warnings = d_warnings;
                return Ok(out);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Boundary leakage of every function and shell coverage of the used probes.
fn diagnostics(r: &Resolved, probes: &[String], warnings: &mut Vec<String>) -> Result<Value, CliError> {
    let mut functions = serde_json::Map::new();
    for (name, f) in &r.functions {
        let field = f.sample(&r.grid).map_err(|e| core(e.into()))?;
        let leak = boundary_leakage(&field);
        if leak > LEAKAGE_WARN {
            warnings.push(format!("function {name}: boundary leakage {leak:e} exceeds {LEAKAGE_WARN:e}"));
        }
        functions.insert(name.clone(), json!({ "boundary_leakage": leak }));
    }
    let mut shells = serde_json::Map::new();
    let terms = r.evaluator.model().terms();
    for name in probes {
        let p = r.probe(name)?;
        let fields = r.evaluator.shells(&p).map_err(core)?;
        let per: Vec<Value> = terms
            .iter()
            .zip(fields)
            .map(|(t, s)| match s {
                Some(s) => json!({
                    "term": t.label,
                    "in_band": s.in_band(),
                    "dropped": s.dropped(),
                    "leakage": s.leakage(),
                }),
                None => json!({ "term": t.label, "identically_zero": true }),
            })
            .collect();
        shells.insert(name.clone(), Value::Array(per));
    }
    Ok(json!({ "functions": functions, "shell_coverage": shells }))
}
