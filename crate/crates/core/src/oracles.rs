//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the code paths it is used to check: the Fourier
//! transforms, kernel forms, permanents and operator orderings are all
//! written out again from their definitions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use crate::algebra::{Evaluator, Probe};
use crate::conventions::TensorRank;
use crate::error::Error;
use crate::kernels::Kernel;
use crate::testfunctions::{Family, TestFunction};

/// Largest matrix accepted by [`permanent_naive`].
pub const NAIVE_PERMANENT_CAP: usize = 9;

/// Largest product accepted by [`wightman_oracle`].
pub const WIGHTMAN_ORACLE_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub value: Complex64,
    pub method: String,
    /// Error estimate where the method has one.
    pub error_estimate: f64,
    pub evaluations: usize,
    pub elapsed_ms: f64,
}

fn report(value: Complex64, method: &str, err: f64, evals: usize, t0: Instant) -> OracleReport {
    OracleReport {
        value,
        method: method.to_string(),
        error_estimate: err,
        evaluations: evals,
        elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
    }
}

/// Sum over all `n!` permutations of `Π M[i][σ(i)]` (Heap's algorithm).
pub fn permanent_naive(m: &[Vec<Complex64>]) -> Result<Complex64, Error> {
    let n = m.len();
    if n > NAIVE_PERMANENT_CAP {
        return Err(Error::Oracle(format!("naive permanent capped at n = {NAIVE_PERMANENT_CAP}, got {n}")));
    }
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::Oracle("matrix is not square".into()));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let term = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[i][j]).product::<Complex64>();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut total = term(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += term(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(total)
}

/// `⟨0|word|0⟩` by normal ordering: every `a_f a†_g` is rewritten as
/// `a†_g a_f + ξ(g, f)` until each surviving word is a scalar.
/// `word` holds `(is_creator, index)`; `xi[i][j] = ξ(f_i, f_j)`.
pub fn vacuum_expectation_oracle(word: &[(bool, usize)], xi: &[Vec<Complex64>]) -> Complex64 {
    if word.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    // a|0⟩ = 0 on the right, ⟨0|a† = 0 on the left
    if !word[word.len() - 1].0 || word[0].0 {
        return Complex64::default();
    }
    let p = word.windows(2).position(|w| !w[0].0 && w[1].0).expect("word is not normal ordered");
    let (f, g) = (word[p].1, word[p + 1].1);
    let mut swapped = word.to_vec();
    swapped.swap(p, p + 1);
    let mut contracted = word.to_vec();
    contracted.drain(p..p + 2);
    vacuum_expectation_oracle(&swapped, xi) + xi[g][f] * vacuum_expectation_oracle(&contracted, xi)
}

/// `⟨0|φ_{f_1}…φ_{f_n}|0⟩` by expanding `Π(a_{f_i} + a†_{f_i})` into all
/// `2ⁿ` words and normal ordering each one.
pub fn wightman_oracle_table(xi: &[Vec<Complex64>]) -> Result<OracleReport, Error> {
    let t0 = Instant::now();
    let n = xi.len();
    if n > WIGHTMAN_ORACLE_CAP {
        return Err(Error::Oracle(format!("Wightman oracle capped at n = {WIGHTMAN_ORACLE_CAP}, got {n}")));
    }
    let mut total = Complex64::default();
    for mask in 0u32..(1 << n) {
        let word: Vec<(bool, usize)> = (0..n).map(|i| (mask >> i & 1 == 1, i)).collect();
        total += vacuum_expectation_oracle(&word, xi);
    }
    Ok(report(total, "normal-ordering rewrite over all words", 0.0, 1 << n, t0))
}

pub fn wightman_oracle(ev: &Evaluator, probes: &[Probe]) -> Result<OracleReport, Error> {
    if probes.len() > WIGHTMAN_ORACLE_CAP {
        return Err(Error::Oracle(format!(
            "Wightman oracle capped at n = {WIGHTMAN_ORACLE_CAP}, got {}",
            probes.len()
        )));
    }
    let mut xi = vec![vec![Complex64::default(); probes.len()]; probes.len()];
    for i in 0..probes.len() {
        for j in 0..probes.len() {
            xi[i][j] = ev.xi(&probes[i], &probes[j])?;
        }
    }
    wightman_oracle_table(&xi)
}

/// Closed-form transform `∫ f(x) e^{i(k⁰t - k⃗·x⃗)} d⁴x` of a Gaussian-family
/// function, one component at a time.
fn transform(f: &TestFunction, k: [f64; 4]) -> Option<Vec<Complex64>> {
    let nc = f.profile().len();
    let mut out = vec![Complex64::default(); nc];
    add_transform(f, k, 1.0, &mut out)?;
    Some(out)
}

fn add_transform(f: &TestFunction, k: [f64; 4], scale: f64, out: &mut [Complex64]) -> Option<()> {
    match f.family() {
        Family::GaussianPacket { center, sigma, q, amplitude, phase } => {
            // cos(q·x + φ) = ½(e^{i(q·x+φ)} + e^{-i(q·x+φ)}); each exponential
            // shifts the Gaussian transform. The four axes factorise.
            let sign = [1.0, -1.0, -1.0, -1.0];
            let mut v = Complex64::default();
            for (s, ph) in [(1.0, *phase), (-1.0, -*phase)] {
                let mut prod = Complex64::from_polar(1.0, ph);
                for mu in 0..4 {
                    // 1D: ∫ e^{-(x-c)²/2σ²} e^{i sign(k+s q) x} dx
                    let p = k[mu] + s * q[mu];
                    prod *= Complex64::from_polar(
                        (2.0 * PI).sqrt() * sigma * (-0.5 * sigma * sigma * p * p).exp(),
                        sign[mu] * p * center[mu],
                    );
                }
                v += 0.5 * prod;
            }
            for (o, p) in out.iter_mut().zip(f.profile()) {
                *o += scale * amplitude * p * v;
            }
            Some(())
        }
        Family::Bump { .. } => None,
        Family::Sum(ts) => ts.iter().try_for_each(|t| add_transform(t, k, scale, out)),
        Family::Scaled(c, inner) => add_transform(inner, k, scale * c, out),
    }
}

fn lower(v: &[Complex64; 4]) -> [Complex64; 4] {
    [v[0], -v[1], -v[2], -v[3]]
}

/// Kernel integrand at on-shell `k` from the textbook index expressions.
fn form(kernel: &Kernel, k: [f64; 4], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    match *kernel {
        Kernel::ScalarMass { .. } => a[0].conj() * b[0],
        Kernel::Vector { m, sigma_t, sigma_s } => {
            let av = [a[0], a[1], a[2], a[3]];
            let bv = [b[0], b[1], b[2], b[3]];
            let (al, bl) = (lower(&av), lower(&bv));
            let ka: Complex64 = (0..4).map(|i| al[i] * k[i]).sum();
            let kb: Complex64 = (0..4).map(|i| bl[i] * k[i]).sum();
            let ab: Complex64 = (0..4).map(|i| al[i].conj() * bv[i]).sum();
            sigma_t * ka.conj() * kb - sigma_s * m * m * ab
        }
        Kernel::EmTensor => {
            let full = |s: &[Complex64]| {
                let mut t = [[Complex64::default(); 4]; 4];
                let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
                for (c, &(i, j)) in pairs.iter().enumerate() {
                    t[i][j] = s[c];
                    t[j][i] = -s[c];
                }
                t
            };
            let eta = [1.0, -1.0, -1.0, -1.0];
            let (fa, fb) = (full(a), full(b));
            // v_β = k^μ F_{μβ}, with F_{μβ} = η_μμ η_ββ F^{μβ}
            let v = |f: &[[Complex64; 4]; 4], beta: usize| -> Complex64 {
                (0..4).map(|mu| k[mu] * eta[mu] * eta[beta] * f[mu][beta]).sum()
            };
            let mut total = Complex64::default();
            for beta in 0..4 {
                // raise the second factor: v^β = η^ββ v_β
                total += v(&fa, beta).conj() * eta[beta] * v(&fb, beta);
            }
            -total
        }
    }
}

/// Kronrod 15-point nodes on `[0, 1]` (the rule is symmetric); the odd
/// entries are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Interval {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Interval {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Interval {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn gk15<F: FnMut(f64) -> Result<Complex64, Error>>(f: &mut F, a: f64, b: f64) -> Result<Interval, Error> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mid = f(c)?;
    let mut k = mid * WGK[7];
    let mut g = mid * WG[3];
    for j in 0..7 {
        let pair = f(c - h * XGK[j])? + f(c + h * XGK[j])?;
        k += pair * WGK[j];
        if j % 2 == 1 {
            g += pair * WG[j / 2];
        }
    }
    Ok(Interval { a, b, value: k * h, err: ((k - g) * h).norm() })
}

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature on `[a, b]`.
fn quad<F: FnMut(f64) -> Result<Complex64, Error>>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(Complex64, f64), Error> {
    let mut heap = BinaryHeap::new();
    let pieces = 4;
    for i in 0..pieces {
        let lo = a + (b - a) * i as f64 / pieces as f64;
        let hi = a + (b - a) * (i + 1) as f64 / pieces as f64;
        heap.push(gk15(&mut f, lo, hi)?);
    }
    loop {
        let value: Complex64 = heap.iter().map(|r| r.value).sum();
        let err: f64 = heap.iter().map(|r| r.err).sum();
        if err <= abs_tol.max(rel_tol * value.norm()) {
            return Ok((value, err));
        }
        if heap.len() >= max_intervals {
            return Err(Error::Oracle(format!(
                "quadrature did not converge: error estimate {err:e} with {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(gk15(&mut f, worst.a, mid)?);
        heap.push(gk15(&mut f, mid, worst.b)?);
    }
}

fn gaussian_extent(f: &TestFunction) -> Option<(f64, f64)> {
    // (|q⃗|, σ) per packet; the integrand is negligible beyond |q⃗| + √80/σ
    match f.family() {
        Family::GaussianPacket { sigma, q, .. } => Some(((q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt(), *sigma)),
        Family::Bump { .. } => None,
        Family::Sum(ts) => ts
            .iter()
            .map(gaussian_extent)
            .try_fold((0.0f64, f64::INFINITY), |acc, e| e.map(|(q, s)| (acc.0.max(q), acc.1.min(s)))),
        Family::Scaled(_, inner) => gaussian_extent(inner),
    }
}

/// `∫ d³k / ((2π)³ 2ω) form(f̃(ω, k⃗), g̃(ω, k⃗))` by nested adaptive
/// quadrature in spherical coordinates, using closed-form transforms. Default tolerance
/// `1e-8` absolute.
pub fn analytic_ip_oracle(kernel: &Kernel, f: &TestFunction, g: &TestFunction) -> Result<OracleReport, Error> {
    analytic_ip_oracle_with(kernel, f, g, 1e-8, 0.0, 2000)
}

pub fn analytic_ip_oracle_with(
    kernel: &Kernel,
    f: &TestFunction,
    g: &TestFunction,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<OracleReport, Error> {
    let t0 = Instant::now();
    let want = match kernel {
        Kernel::ScalarMass { .. } => TensorRank::Scalar,
        Kernel::Vector { .. } => TensorRank::Vector,
        Kernel::EmTensor => TensorRank::Antisym2,
    };
    if f.rank() != want || g.rank() != want {
        return Err(Error::Oracle(format!("kernel expects {want} functions")));
    }
    let (ef, eg) = match (gaussian_extent(f), gaussian_extent(g)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Oracle("analytic oracle needs Gaussian-family functions".into())),
    };
    let kmax = (ef.0 + 80f64.sqrt() / ef.1).max(eg.0 + 80f64.sqrt() / eg.1);
    let m = kernel.mass();
    let integrand = |f: &TestFunction, g: &TestFunction, p: [f64; 3]| -> Complex64 {
        let (r, u, phi) = (p[0], p[1], p[2]);
        let st = (1.0 - u * u).max(0.0).sqrt();
        let kv = [r * st * phi.cos(), r * st * phi.sin(), r * u];
        let w = (r * r + m * m).sqrt();
        if w == 0.0 {
            return Complex64::default();
        }
        let k = [w, kv[0], kv[1], kv[2]];
        let a = transform(f, k).expect("checked closed form");
        let b = transform(g, k).expect("checked closed form");
        form(kernel, k, &a, &b) * (r * r / (2.0 * w * (2.0 * PI).powi(3)))
    };
    let mut evals = 0usize;
    // φ innermost, then u = cos θ, then r. Self-products have a non-negative
    // integrand, so relative tolerances are safe at every level.
    let mut nested = |f: &TestFunction, g: &TestFunction, tol: [(f64, f64); 3]| {
        quad(
            |r| {
                let (v, _) = quad(
                    |u| {
                        let (v, _) = quad(
                            |phi| {
                                evals += 1;
                                Ok(integrand(f, g, [r, u, phi]))
                            },
                            0.0,
                            2.0 * PI,
                            tol[2].0,
                            tol[2].1,
                            max_intervals,
                        )?;
                        Ok(v)
                    },
                    -1.0,
                    1.0,
                    tol[1].0,
                    tol[1].1,
                    max_intervals,
                )?;
                Ok(v)
            },
            0.0,
            kmax,
            tol[0].0,
            tol[0].1,
            max_intervals,
        )
    };
    let inner_rel = (rel_tol * 1e-2).max(1e-14);
    let self_tol = |abs: f64| [(abs, rel_tol), (abs * 1e-3, inner_rel), (abs * 1e-3, inner_rel)];
    let (value, err) = if f == g {
        nested(f, g, self_tol(abs_tol))?
    } else {
        // a cross integrand can cancel, so the inner levels get absolute
        // tolerances scaled by the Cauchy-Schwarz bound √((f,f)(g,g))
        // scale only: a loose relative tolerance suffices
        let scale = [(0.0, rel_tol.max(1e-10)), (0.0, inner_rel.max(1e-12)), (0.0, inner_rel.max(1e-12))];
        let ff = nested(f, f, scale)?.0.re;
        let gg = nested(g, g, scale)?.0.re;
        let target = abs_tol.max(rel_tol * (ff * gg).sqrt());
        let u_abs = 0.1 * target / kmax;
        nested(f, g, [(target, 0.0), (u_abs, 0.0), (0.1 * u_abs / 2.0, 0.0)])?
    };
    Ok(report(value, "nested adaptive Gauss-Kronrod 7/15, spherical coordinates", err, evals, t0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfunctions::scalar_gaussian;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn naive_permanent_small_cases() {
        assert_eq!(permanent_naive(&[vec![c(2.0, 1.0)]]).unwrap(), c(2.0, 1.0));
        let (a, b, cc, d) = (c(1.0, 2.0), c(0.5, -1.0), c(3.0, 0.0), c(-2.0, 0.5));
        let p = permanent_naive(&[vec![a, b], vec![cc, d]]).unwrap();
        assert!((p - (a * d + b * cc)).norm() < 1e-15);
        let ones = vec![vec![c(1.0, 0.0); 4]; 4];
        assert_eq!(permanent_naive(&ones).unwrap(), c(24.0, 0.0));
        assert!(permanent_naive(&vec![vec![c(1.0, 0.0); 10]; 10]).is_err());
    }

    #[test]
    fn wightman_oracle_low_orders() {
        let xi = vec![vec![c(1.0, 0.0), c(0.3, 0.2)], vec![c(0.3, -0.2), c(2.0, 0.0)]];
        assert_eq!(wightman_oracle_table(&xi).unwrap().value, xi[1][0]);
        let three = vec![vec![c(1.0, 0.0); 3]; 3];
        assert_eq!(wightman_oracle_table(&three).unwrap().value, c(0.0, 0.0));
    }

    #[test]
    fn kronrod_rule_is_exact_for_degree_22() {
        for deg in 0..=22 {
            let (v, _) = quad(|x| Ok(c(x.powi(deg), 0.0)), -1.0, 1.0, 1.0, 0.0, 10).unwrap();
            let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            assert!((v.re - want).abs() < 1e-14, "degree {deg}");
        }
        // the embedded Gauss rule integrates degree 13 exactly
        let iv = gk15(&mut |x: f64| Ok(c(x.powi(12), 0.0)), -1.0, 1.0).unwrap();
        assert!(iv.err < 1e-14);
    }

    #[test]
    fn quadrature_of_a_gaussian() {
        let (v, _) = quad(|x| Ok(c((-x * x).exp(), 0.0)), -9.0, 9.0, 1e-14, 0.0, 200).unwrap();
        assert!((v.re - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn self_value_is_real_positive_and_separated_packets_vanish() {
        let k = Kernel::scalar(1.0).unwrap();
        let f = scalar_gaussian([0.0; 4], 1.0, [0.0; 4]).unwrap();
        let v = analytic_ip_oracle(&k, &f, &f).unwrap().value;
        assert!(v.re > 0.0 && v.im.abs() < 1e-12 * v.re);
        let g = scalar_gaussian([0.0, 20.0, 0.0, 0.0], 1.0, [0.0; 4]).unwrap();
        let cross = analytic_ip_oracle_with(&k, &f, &g, 1e-7 * v.re, 0.0, 2000).unwrap().value;
        assert!(cross.norm() < 1e-6 * v.re);
    }
}
