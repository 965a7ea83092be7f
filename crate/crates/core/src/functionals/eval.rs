//! Pointwise evaluation of expression trees on blocks of samples.

use std::collections::HashMap;

use super::Expr;
use crate::conventions::{antisym_slot, levi_civita, ANTISYM_PAIRS, METRIC};
use crate::lattice::{central_difference, Grid};

/// Shape of a sample block: `dims[0]` time slices of `n_s³` points.
///
/// Space is always periodic. A full grid is periodic in time too; a slab
/// cut from a longer time axis is not, and its outermost `depth` slices are
/// invalid after `depth` nested derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockShape {
    pub dims: [usize; 4],
    pub spacing: [f64; 4],
    pub periodic_time: bool,
}

impl BlockShape {
    pub fn full(grid: &Grid) -> Self {
        let n = grid.n_s();
        BlockShape {
            dims: [grid.n_t(), n, n, n],
            spacing: [grid.spacing(0), grid.spacing(1), grid.spacing(2), grid.spacing(3)],
            periodic_time: true,
        }
    }

    pub fn slab(grid: &Grid, slices: usize) -> Self {
        let n = grid.n_s();
        BlockShape {
            dims: [slices, n, n, n],
            spacing: [grid.spacing(0), grid.spacing(1), grid.spacing(2), grid.spacing(3)],
            periodic_time: false,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn diff(&self, src: &[f64], mu: usize) -> Vec<f64> {
        central_difference(src, self.dims, mu, self.spacing[mu], mu != 0 || self.periodic_time)
    }
}

type Data = Vec<Vec<f64>>;

pub(super) fn eval(e: &Expr, shape: &BlockShape, env: &HashMap<&str, &[Vec<f64>]>) -> Data {
    let len = shape.len();
    match e {
        Expr::Var(n) => env[n.as_str()].to_vec(),
        Expr::Const(c) => vec![vec![*c; len]],
        Expr::Power(x, n) => {
            let mut v = eval(x, shape, env);
            let n = *n as i32;
            v[0].iter_mut().for_each(|s| *s = s.powi(n));
            v
        }
        Expr::Scale(c, x) => {
            let mut v = eval(x, shape, env);
            v.iter_mut().flatten().for_each(|s| *s *= c);
            v
        }
        Expr::Sum(xs) => {
            let mut acc = eval(&xs[0], shape, env);
            for x in &xs[1..] {
                let v = eval(x, shape, env);
                for (a, b) in acc.iter_mut().zip(&v) {
                    a.iter_mut().zip(b).for_each(|(p, q)| *p += q);
                }
            }
            acc
        }
        Expr::Product(xs) => {
            // scalar factors multiply pointwise; at most one tensor factor
            let mut scalar: Option<Vec<f64>> = None;
            let mut tensor: Option<Data> = None;
            for x in xs {
                let v = eval(x, shape, env);
                if v.len() == 1 {
                    match &mut scalar {
                        None => scalar = v.into_iter().next(),
                        Some(s) => s.iter_mut().zip(&v[0]).for_each(|(p, q)| *p *= q),
                    }
                } else {
                    tensor = Some(v);
                }
            }
            match (scalar, tensor) {
                (Some(s), None) => vec![s],
                (None, Some(t)) => t,
                (Some(s), Some(mut t)) => {
                    for comp in t.iter_mut() {
                        comp.iter_mut().zip(&s).for_each(|(p, q)| *p *= q);
                    }
                    t
                }
                (None, None) => unreachable!("empty product"),
            }
        }
        Expr::Deriv(x, Some(mu)) => eval(x, shape, env).iter().map(|c| shape.diff(c, *mu)).collect(),
        Expr::Deriv(x, None) => {
            let v = eval(x, shape, env);
            (0..4)
                .map(|mu| {
                    let mut d = shape.diff(&v[0], mu);
                    if METRIC[mu] < 0.0 {
                        d.iter_mut().for_each(|s| *s = -*s);
                    }
                    d
                })
                .collect()
        }
        Expr::Div(x) => {
            let v = eval(x, shape, env);
            if v.len() == 4 {
                let mut out = vec![0.0; len];
                for (mu, comp) in v.iter().enumerate() {
                    add_scaled(&mut out, &shape.diff(comp, mu), 1.0);
                }
                vec![out]
            } else {
                // (∂_μ F^{μα}) for each α
                let mut out = vec![vec![0.0; len]; 4];
                for (slot, &(a, b)) in ANTISYM_PAIRS.iter().enumerate() {
                    // F^{ab} contributes ∂_a F^{ab} to α=b and -∂_b F^{ab} to α=a
                    add_scaled(&mut out[b], &shape.diff(&v[slot], a), 1.0);
                    add_scaled(&mut out[a], &shape.diff(&v[slot], b), -1.0);
                }
                out
            }
        }
        Expr::DWedge(x) => {
            let v = eval(x, shape, env);
            ANTISYM_PAIRS
                .iter()
                .map(|&(a, b)| {
                    // ½(∂^a V^b - ∂^b V^a) with ∂^a = η^{aa} ∂_a
                    let mut out = vec![0.0; len];
                    add_scaled(&mut out, &shape.diff(&v[b], a), 0.5 * METRIC[a]);
                    add_scaled(&mut out, &shape.diff(&v[a], b), -0.5 * METRIC[b]);
                    out
                })
                .collect()
        }
        Expr::Raise(x) | Expr::Lower(x) => eval(x, shape, env),
        Expr::Eta(a, b) => {
            let (va, vb) = (eval(a, shape, env), eval(b, shape, env));
            let table = match (va.len(), vb.len()) {
                (4, 4) => eta_vv(),
                (4, 6) => eta_vf(),
                (6, 4) => eta_fv(),
                _ => eta_ff(),
            };
            bilinear(&va, &vb, &table, len)
        }
        Expr::Wedge(a, b) => {
            let (va, vb) = (eval(a, shape, env), eval(b, shape, env));
            bilinear(&va, &vb, &wedge_table(), len)
        }
        Expr::Eps(xs) => {
            let vs: Vec<Data> = xs.iter().map(|x| eval(x, shape, env)).collect();
            match vs.len() {
                1 => linear(&vs[0], &eps_f(), len),
                2 if vs[1].len() == 6 => bilinear(&vs[0], &vs[1], &eps_vf(), len),
                2 => bilinear(&vs[0], &vs[1], &eps_vv(), len),
                _ => trilinear(&vs[0], &vs[1], &vs[2], &eps_vvv(), len),
            }
        }
    }
}

fn add_scaled(out: &mut [f64], src: &[f64], c: f64) {
    out.iter_mut().zip(src).for_each(|(o, s)| *o += c * s);
}

/// Sparse coefficient table `out[o] += c · a[i] · b[j]`.
struct Table2 {
    nout: usize,
    entries: Vec<(usize, usize, usize, f64)>,
}

impl Table2 {
    fn new(nout: usize) -> Self {
        Table2 { nout, entries: Vec::new() }
    }

    fn add(&mut self, o: usize, i: usize, j: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == o && e.1 == i && e.2 == j) {
            e.3 += c;
        } else {
            self.entries.push((o, i, j, c));
        }
    }
}

fn bilinear(a: &Data, b: &Data, t: &Table2, len: usize) -> Data {
    let mut out = vec![vec![0.0; len]; t.nout];
    for &(o, i, j, c) in &t.entries {
        if c == 0.0 {
            continue;
        }
        let (ai, bj) = (&a[i], &b[j]);
        out[o].iter_mut().zip(ai.iter().zip(bj)).for_each(|(r, (x, y))| *r += c * x * y);
    }
    out
}

fn linear(a: &Data, t: &[(usize, usize, f64)], len: usize) -> Data {
    let nout = t.iter().map(|e| e.0).max().unwrap_or(0) + 1;
    let mut out = vec![vec![0.0; len]; nout];
    for &(o, i, c) in t {
        add_scaled(&mut out[o], &a[i], c);
    }
    out
}

fn trilinear(a: &Data, b: &Data, cc: &Data, t: &[(usize, usize, usize, usize, f64)], len: usize) -> Data {
    let mut out = vec![vec![0.0; len]; 4];
    for &(o, i, j, k, c) in t {
        for p in 0..len {
            out[o][p] += c * a[i][p] * b[j][p] * cc[k][p];
        }
    }
    out
}

/// `F^{μν}` from stored slots as (slot, sign), or `None` on the diagonal.
fn slot(mu: usize, nu: usize) -> Option<(usize, f64)> {
    antisym_slot(mu, nu)
}

fn eta_vv() -> Table2 {
    let mut t = Table2::new(1);
    for mu in 0..4 {
        t.add(0, mu, mu, METRIC[mu]);
    }
    t
}

/// `a_μ F^{μα}`.
fn eta_vf() -> Table2 {
    let mut t = Table2::new(4);
    for alpha in 0..4 {
        for mu in 0..4 {
            if let Some((s, sign)) = slot(mu, alpha) {
                t.add(alpha, mu, s, METRIC[mu] * sign);
            }
        }
    }
    t
}

/// `F^{αμ} b_μ`.
fn eta_fv() -> Table2 {
    let mut t = Table2::new(4);
    for alpha in 0..4 {
        for mu in 0..4 {
            if let Some((s, sign)) = slot(alpha, mu) {
                t.add(alpha, s, mu, METRIC[mu] * sign);
            }
        }
    }
    t
}

/// `F^{μν} G_{μν}`.
fn eta_ff() -> Table2 {
    let mut t = Table2::new(1);
    for mu in 0..4 {
        for nu in 0..4 {
            if let Some((s, _)) = slot(mu, nu) {
                t.add(0, s, s, METRIC[mu] * METRIC[nu]);
            }
        }
    }
    t
}

/// `½(a^μ b^ν - a^ν b^μ)`.
fn wedge_table() -> Table2 {
    let mut t = Table2::new(6);
    for (s, &(mu, nu)) in ANTISYM_PAIRS.iter().enumerate() {
        t.add(s, mu, nu, 0.5);
        t.add(s, nu, mu, -0.5);
    }
    t
}

/// `ε^{μρσα} J_μ F_{ρσ}`.
fn eps_vf() -> Table2 {
    let mut t = Table2::new(4);
    for alpha in 0..4 {
        for mu in 0..4 {
            for rho in 0..4 {
                for sigma in 0..4 {
                    let e = levi_civita(mu, rho, sigma, alpha);
                    if e == 0.0 {
                        continue;
                    }
                    let (s, sign) = slot(rho, sigma).unwrap();
                    t.add(alpha, mu, s, e * METRIC[mu] * METRIC[rho] * METRIC[sigma] * sign);
                }
            }
        }
    }
    t
}

/// Dual `ε^{μαρσ} F_{ρσ}`.
fn eps_f() -> Vec<(usize, usize, f64)> {
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    for (o, &(mu, alpha)) in ANTISYM_PAIRS.iter().enumerate() {
        for rho in 0..4 {
            for sigma in 0..4 {
                let e = levi_civita(mu, alpha, rho, sigma);
                if e == 0.0 {
                    continue;
                }
                let (s, sign) = slot(rho, sigma).unwrap();
                let c = e * METRIC[rho] * METRIC[sigma] * sign;
                match t.iter_mut().find(|x| x.0 == o && x.1 == s) {
                    Some(x) => x.2 += c,
                    None => t.push((o, s, c)),
                }
            }
        }
    }
    t
}

/// `ε^{μαρσ} a_ρ b_σ`.
fn eps_vv() -> Table2 {
    let mut t = Table2::new(6);
    for (o, &(mu, alpha)) in ANTISYM_PAIRS.iter().enumerate() {
        for rho in 0..4 {
            for sigma in 0..4 {
                let e = levi_civita(mu, alpha, rho, sigma);
                t.add(o, rho, sigma, e * METRIC[rho] * METRIC[sigma]);
            }
        }
    }
    t
}

/// `ε^{αμρσ} a_μ b_ρ c_σ`.
fn eps_vvv() -> Vec<(usize, usize, usize, usize, f64)> {
    let mut t = Vec::new();
    for alpha in 0..4 {
        for mu in 0..4 {
            for rho in 0..4 {
                for sigma in 0..4 {
                    let e = levi_civita(alpha, mu, rho, sigma);
                    if e != 0.0 {
                        t.push((alpha, mu, rho, sigma, e * METRIC[mu] * METRIC[rho] * METRIC[sigma]));
                    }
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conventions::expand_antisym;
    use crate::functionals::{parse_functional, LocalFunctional};

    fn point(p: &LocalFunctional, bindings: &[(&str, Vec<f64>)]) -> Vec<f64> {
        let shape = BlockShape { dims: [1, 1, 1, 1], spacing: [1.0; 4], periodic_time: true };
        let store: Vec<(&str, Data)> = bindings.iter().map(|(n, v)| (*n, v.iter().map(|x| vec![*x]).collect())).collect();
        let env: HashMap<&str, &[Vec<f64>]> = store.iter().map(|(n, d)| (*n, d.as_slice())).collect();
        p.eval_block(&shape, &env).unwrap().into_iter().map(|c| c[0]).collect()
    }

    fn lower_full(f: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                out[m][n] = METRIC[m] * METRIC[n] * f[m][n];
            }
        }
        out
    }

    const J: [f64; 4] = [0.7, -1.3, 0.4, 2.1];
    const K: [f64; 4] = [-0.2, 0.9, 1.7, -0.6];
    const F: [f64; 6] = [0.3, -0.8, 1.1, 0.5, -1.4, 0.9];
    const G: [f64; 6] = [1.2, 0.1, -0.7, -0.3, 0.6, 2.0];

    #[test]
    fn contractions_match_full_index_loops() {
        let ff = expand_antisym(&F);
        let fl = lower_full(&ff);
        let jl: Vec<f64> = (0..4).map(|m| METRIC[m] * J[m]).collect();
        let kl: Vec<f64> = (0..4).map(|m| METRIC[m] * K[m]).collect();

        let b = [("J", J.to_vec()), ("S", K.to_vec()), ("F", F.to_vec())];

        let v = point(&parse_functional("eta(J, S)").unwrap(), &b);
        assert!((v[0] - (0..4).map(|m| jl[m] * K[m]).sum::<f64>()).abs() < 1e-14);

        let v = point(&parse_functional("eta(J, F)").unwrap(), &b);
        for a in 0..4 {
            let want: f64 = (0..4).map(|m| jl[m] * ff[m][a]).sum();
            assert!((v[a] - want).abs() < 1e-14);
        }

        let v = point(&parse_functional("eta(F, J)").unwrap(), &b);
        for a in 0..4 {
            let want: f64 = (0..4).map(|m| ff[a][m] * jl[m]).sum();
            assert!((v[a] - want).abs() < 1e-14);
        }

        let v = point(&parse_functional("eps(J, F)").unwrap(), &b);
        for a in 0..4 {
            let mut want = 0.0;
            for m in 0..4 {
                for r in 0..4 {
                    for s in 0..4 {
                        want += levi_civita(m, r, s, a) * jl[m] * fl[r][s];
                    }
                }
            }
            assert!((v[a] - want).abs() < 1e-13);
        }

        let v = point(&parse_functional("eps(F)").unwrap(), &b);
        for (o, &(m, a)) in ANTISYM_PAIRS.iter().enumerate() {
            let mut want = 0.0;
            for r in 0..4 {
                for s in 0..4 {
                    want += levi_civita(m, a, r, s) * fl[r][s];
                }
            }
            assert!((v[o] - want).abs() < 1e-13);
        }

        let v = point(&parse_functional("wedge(J, S)").unwrap(), &b);
        for (o, &(m, n)) in ANTISYM_PAIRS.iter().enumerate() {
            assert!((v[o] - 0.5 * (J[m] * K[n] - J[n] * K[m])).abs() < 1e-14);
        }

        let v = point(&parse_functional("eps(J, S)").unwrap(), &b);
        for (o, &(m, a)) in ANTISYM_PAIRS.iter().enumerate() {
            let mut want = 0.0;
            for r in 0..4 {
                for s in 0..4 {
                    want += levi_civita(m, a, r, s) * jl[r] * kl[s];
                }
            }
            assert!((v[o] - want).abs() < 1e-13);
        }

        let v = point(&parse_functional("eps(J, S, J)").unwrap(), &b);
        assert!(v.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn full_tensor_contraction() {
        let mut table = crate::functionals::SlotTable::default();
        table.insert("G", crate::conventions::TensorRank::Antisym2);
        let p = crate::functionals::parse_with_slots("eta(F, G)", &table).unwrap();
        let v = point(&p, &[("F", F.to_vec()), ("G", G.to_vec())]);
        let (ff, gg) = (expand_antisym(&F), lower_full(&expand_antisym(&G)));
        let want: f64 = (0..4).flat_map(|m| (0..4).map(move |n| (m, n))).map(|(m, n)| ff[m][n] * gg[m][n]).sum();
        assert!((v[0] - want).abs() < 1e-13);
    }

    #[test]
    fn dual_of_dual_is_minus_identity() {
        let once = point(&parse_functional("eps(F)").unwrap(), &[("F", F.to_vec())]);
        let twice = point(&parse_functional("eps(F)").unwrap(), &[("F", once)]);
        // in (+,-,-,-) the double dual is -4 F with this unnormalised dual
        for (a, b) in twice.iter().zip(&F) {
            assert!((a + 4.0 * b).abs() < 1e-12, "{a} {b}");
        }
    }
}
