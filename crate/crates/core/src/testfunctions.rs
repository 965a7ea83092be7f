//! Analytic test functions: modulated Gaussian packets, compact bumps, and
//! their sums and rescalings.
//!
//! Tensor-valued functions are a scalar profile times a constant vector of
//! component amplitudes.

use std::sync::Arc;

use num_complex::Complex64;

use crate::conventions::{minkowski_dot, TensorRank, METRIC};
use crate::error::{LatticeError, TestFunctionError};
use crate::lattice::{Grid, RealField4};

/// Support bound of a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Unbounded,
    /// Axis-aligned bound `|x^μ - center^μ| <= radius[μ]`.
    Ball { center: [f64; 4], radius: [f64; 4] },
}

impl Support {
    fn bounds(&self) -> Option<([f64; 4], [f64; 4])> {
        match self {
            Support::Unbounded => None,
            Support::Ball { center, radius } => {
                let mut lo = [0.0; 4];
                let mut hi = [0.0; 4];
                for mu in 0..4 {
                    lo[mu] = center[mu] - radius[mu];
                    hi[mu] = center[mu] + radius[mu];
                }
                Some((lo, hi))
            }
        }
    }

    fn from_bounds(lo: [f64; 4], hi: [f64; 4]) -> Self {
        let mut center = [0.0; 4];
        let mut radius = [0.0; 4];
        for mu in 0..4 {
            center[mu] = 0.5 * (lo[mu] + hi[mu]);
            radius[mu] = 0.5 * (hi[mu] - lo[mu]);
        }
        Support::Ball { center, radius }
    }

    pub fn contains(&self, x: [f64; 4]) -> bool {
        match self.bounds() {
            None => true,
            Some((lo, hi)) => (0..4).all(|mu| x[mu] >= lo[mu] && x[mu] <= hi[mu]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `A·exp(-|x-x0|²_E/(2σ²))·cos(q·x + φ)`.
    GaussianPacket { center: [f64; 4], sigma: f64, q: [f64; 4], amplitude: f64, phase: f64 },
    /// `A·exp(-1/(1-ρ²))` for `ρ = |x-x0|_E/r < 1`.
    Bump { center: [f64; 4], radius: f64, amplitude: f64 },
    Sum(Vec<TestFunction>),
    Scaled(f64, Box<TestFunction>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    family: Family,
    rank: TensorRank,
    /// Component amplitudes; all ones for `Sum` and `Scaled`.
    profile: Vec<f64>,
}

/// Exact identity of a test function, used as a cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionKey(Vec<u64>);

fn check_profile(rank: TensorRank, profile: &[f64]) -> Result<Vec<f64>, TestFunctionError> {
    if profile.len() != rank.components() {
        return Err(TestFunctionError::ProfileLength { rank, expected: rank.components(), got: profile.len() });
    }
    if profile.iter().any(|v| !v.is_finite()) {
        return Err(TestFunctionError::NonFinite);
    }
    Ok(profile.to_vec())
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

pub fn gaussian_packet(
    x0: [f64; 4],
    sigma: f64,
    q: [f64; 4],
    rank: TensorRank,
    profile: &[f64],
) -> Result<TestFunction, TestFunctionError> {
    if !(sigma > 0.0) {
        return Err(TestFunctionError::NonPositiveWidth(sigma));
    }
    if !all_finite(&x0) || !all_finite(&q) || !sigma.is_finite() {
        return Err(TestFunctionError::NonFinite);
    }
    Ok(TestFunction {
        family: Family::GaussianPacket { center: x0, sigma, q, amplitude: 1.0, phase: 0.0 },
        rank,
        profile: check_profile(rank, profile)?,
    })
}

pub fn bump(x0: [f64; 4], r: f64, rank: TensorRank, profile: &[f64]) -> Result<TestFunction, TestFunctionError> {
    if !(r > 0.0) {
        return Err(TestFunctionError::NonPositiveRadius(r));
    }
    if !all_finite(&x0) || !r.is_finite() {
        return Err(TestFunctionError::NonFinite);
    }
    Ok(TestFunction {
        family: Family::Bump { center: x0, radius: r, amplitude: 1.0 },
        rank,
        profile: check_profile(rank, profile)?,
    })
}

/// Scalar Gaussian packet with unit amplitude.
pub fn scalar_gaussian(x0: [f64; 4], sigma: f64, q: [f64; 4]) -> Result<TestFunction, TestFunctionError> {
    gaussian_packet(x0, sigma, q, TensorRank::Scalar, &[1.0])
}

/// Scalar bump with unit amplitude.
pub fn scalar_bump(x0: [f64; 4], r: f64) -> Result<TestFunction, TestFunctionError> {
    bump(x0, r, TensorRank::Scalar, &[1.0])
}

pub fn sum(terms: Vec<TestFunction>) -> Result<TestFunction, TestFunctionError> {
    let rank = terms.first().ok_or(TestFunctionError::EmptySum)?.rank;
    if let Some(t) = terms.iter().find(|t| t.rank != rank) {
        return Err(TestFunctionError::RankMismatch(rank, t.rank));
    }
    Ok(TestFunction { family: Family::Sum(terms), rank, profile: vec![1.0; rank.components()] })
}

pub fn scaled(f: TestFunction, c: f64) -> Result<TestFunction, TestFunctionError> {
    if !c.is_finite() {
        return Err(TestFunctionError::NonFinite);
    }
    let rank = f.rank;
    Ok(TestFunction { family: Family::Scaled(c, Box::new(f)), rank, profile: vec![1.0; rank.components()] })
}

/// `f_a(x) = f(x + a)`; support moves by `-a`.
pub fn translate(f: &TestFunction, a: [f64; 4]) -> TestFunction {
    let family = match &f.family {
        Family::GaussianPacket { center, sigma, q, amplitude, phase } => Family::GaussianPacket {
            center: sub(center, &a),
            sigma: *sigma,
            q: *q,
            amplitude: *amplitude,
            phase: phase + minkowski_dot(q, &a),
        },
        Family::Bump { center, radius, amplitude } => {
            Family::Bump { center: sub(center, &a), radius: *radius, amplitude: *amplitude }
        }
        Family::Sum(terms) => Family::Sum(terms.iter().map(|t| translate(t, a)).collect()),
        Family::Scaled(c, inner) => Family::Scaled(*c, Box::new(translate(inner, a))),
    };
    TestFunction { family, rank: f.rank, profile: f.profile.clone() }
}

fn sub(x: &[f64; 4], a: &[f64; 4]) -> [f64; 4] {
    [x[0] - a[0], x[1] - a[1], x[2] - a[2], x[3] - a[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    SpacelikeSeparated,
    NotSpacelikeSeparated,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalRelation {
    pub relation: Relation,
    /// Worst case of `(Δt)² - |Δx⃗|²` over the support boxes; NaN when
    /// either support is unbounded.
    pub margin: f64,
}

/// Certified causal relation between two supports by interval arithmetic.
pub fn causal_relation(f: &TestFunction, g: &TestFunction) -> CausalRelation {
    let (Some((flo, fhi)), Some((glo, ghi))) = (f.support().bounds(), g.support().bounds()) else {
        return CausalRelation { relation: Relation::Indeterminate, margin: f64::NAN };
    };
    let dt_max = (fhi[0] - glo[0]).abs().max((flo[0] - ghi[0]).abs());
    let mut gap2 = 0.0;
    for mu in 1..4 {
        let gap = (flo[mu] - ghi[mu]).max(glo[mu] - fhi[mu]).max(0.0);
        gap2 += gap * gap;
    }
    let margin = dt_max * dt_max - gap2;
    let relation = if margin < 0.0 { Relation::SpacelikeSeparated } else { Relation::NotSpacelikeSeparated };
    CausalRelation { relation, margin }
}

impl TestFunction {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn rank(&self) -> TensorRank {
        self.rank
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Multiply by a constant; leaf families absorb it into the amplitude.
    pub fn with_amplitude(mut self, a: f64) -> Self {
        match &mut self.family {
            Family::GaussianPacket { amplitude, .. } | Family::Bump { amplitude, .. } => {
                *amplitude *= a;
                self
            }
            _ => {
                let rank = self.rank;
                TestFunction { family: Family::Scaled(a, Box::new(self)), rank, profile: vec![1.0; rank.components()] }
            }
        }
    }

    pub fn support(&self) -> Support {
        match &self.family {
            Family::GaussianPacket { .. } => Support::Unbounded,
            Family::Bump { center, radius, .. } => Support::Ball { center: *center, radius: [*radius; 4] },
            Family::Scaled(_, inner) => inner.support(),
            Family::Sum(terms) => {
                let mut lo = [f64::INFINITY; 4];
                let mut hi = [f64::NEG_INFINITY; 4];
                for t in terms {
                    let Some((tlo, thi)) = t.support().bounds() else {
                        return Support::Unbounded;
                    };
                    for mu in 0..4 {
                        lo[mu] = lo[mu].min(tlo[mu]);
                        hi[mu] = hi[mu].max(thi[mu]);
                    }
                }
                Support::from_bounds(lo, hi)
            }
        }
    }

    /// True when every leaf has a closed-form Fourier transform.
    pub fn has_closed_form(&self) -> bool {
        match &self.family {
            Family::GaussianPacket { .. } => true,
            Family::Bump { .. } => false,
            Family::Sum(terms) => terms.iter().all(|t| t.has_closed_form()),
            Family::Scaled(_, inner) => inner.has_closed_form(),
        }
    }

    /// Evaluate all components at `x`.
    pub fn value(&self, x: [f64; 4], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.accumulate(x, 1.0, out);
    }

    fn accumulate(&self, x: [f64; 4], scale: f64, out: &mut [f64]) {
        let s = match &self.family {
            Family::GaussianPacket { center, sigma, q, amplitude, phase } => {
                let r2: f64 = (0..4).map(|mu| (x[mu] - center[mu]).powi(2)).sum();
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp() * (minkowski_dot(q, &x) + phase).cos()
            }
            Family::Bump { center, radius, amplitude } => {
                let r2: f64 = (0..4).map(|mu| (x[mu] - center[mu]).powi(2)).sum();
                amplitude * bump_profile(r2 / (radius * radius))
            }
            Family::Sum(terms) => {
                for t in terms {
                    t.accumulate(x, scale, out);
                }
                return;
            }
            Family::Scaled(c, inner) => {
                inner.accumulate(x, scale * c, out);
                return;
            }
        };
        for (o, p) in out.iter_mut().zip(&self.profile) {
            *o += scale * p * s;
        }
    }

    /// Closed-form `f~(k)` per component, or `false` if unavailable.
    pub fn fourier_into(&self, k: [f64; 4], out: &mut [Complex64]) -> bool {
        if !self.has_closed_form() {
            return false;
        }
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.fourier_accumulate(k, 1.0, out);
        true
    }

    fn fourier_accumulate(&self, k: [f64; 4], scale: f64, out: &mut [Complex64]) {
        let s = match &self.family {
            Family::GaussianPacket { center, sigma, q, amplitude, phase } => {
                let plus = [k[0] + q[0], k[1] + q[1], k[2] + q[2], k[3] + q[3]];
                let minus = [k[0] - q[0], k[1] - q[1], k[2] - q[2], k[3] - q[3]];
                let e = Complex64::from_polar(1.0, *phase);
                0.5 * amplitude * (e * gaussian_ft(center, *sigma, &plus) + e.conj() * gaussian_ft(center, *sigma, &minus))
            }
            Family::Bump { .. } => unreachable!("bump has no closed-form transform"),
            Family::Sum(terms) => {
                for t in terms {
                    t.fourier_accumulate(k, scale, out);
                }
                return;
            }
            Family::Scaled(c, inner) => {
                inner.fourier_accumulate(k, scale * c, out);
                return;
            }
        };
        for (o, p) in out.iter_mut().zip(&self.profile) {
            *o += scale * p * s;
        }
    }

    /// Sample on the full grid.
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<RealField4, LatticeError> {
        let nc = self.rank.components();
        let s = grid.slice_len();
        let mut data = vec![vec![0.0; grid.len()]; nc];
        let mut slice = vec![vec![0.0; s]; nc];
        for it in 0..grid.n_t() {
            self.sample_slice(grid, grid.coords(0)[it], &mut slice);
            for c in 0..nc {
                data[c][it * s..(it + 1) * s].copy_from_slice(&slice[c]);
            }
        }
        RealField4::new(grid.clone(), self.rank, data)
    }

    /// Sample the spatial slice at time `t`; `out` holds one `n_s³` buffer
    /// per component and is overwritten.
    pub fn sample_slice(&self, grid: &Grid, t: f64, out: &mut [Vec<f64>]) {
        for o in out.iter_mut() {
            o.iter_mut().for_each(|v| *v = 0.0);
        }
        self.slice_accumulate(grid, t, 1.0, out);
    }

    fn slice_accumulate(&self, grid: &Grid, t: f64, scale: f64, out: &mut [Vec<f64>]) {
        let n = grid.n_s();
        match &self.family {
            Family::GaussianPacket { center, sigma, q, amplitude, phase } => {
                // separable: Re(A e^{iφ} Π_μ exp(-(x_μ-c_μ)²/2σ²) e^{i η_μμ q_μ x_μ})
                let factor = |mu: usize, x: f64| -> Complex64 {
                    let g = (-(x - center[mu]).powi(2) / (2.0 * sigma * sigma)).exp();
                    Complex64::from_polar(g, METRIC[mu] * q[mu] * x)
                };
                let c0 = Complex64::from_polar(scale * amplitude, *phase) * factor(0, t);
                if c0.norm() == 0.0 {
                    return;
                }
                let axes: Vec<Vec<Complex64>> =
                    (1..4).map(|mu| grid.coords(mu).iter().map(|&x| factor(mu, x)).collect()).collect();
                for ix in 0..n {
                    let a = c0 * axes[0][ix];
                    for iy in 0..n {
                        let b = a * axes[1][iy];
                        let base = (ix * n + iy) * n;
                        for iz in 0..n {
                            let v = (b * axes[2][iz]).re;
                            for (o, p) in out.iter_mut().zip(&self.profile) {
                                o[base + iz] += p * v;
                            }
                        }
                    }
                }
            }
            Family::Bump { center, radius, amplitude } => {
                let r2 = radius * radius;
                let dt2 = (t - center[0]).powi(2);
                if dt2 >= r2 {
                    return;
                }
                let d2: Vec<Vec<f64>> =
                    (1..4).map(|mu| grid.coords(mu).iter().map(|&x| (x - center[mu]).powi(2)).collect()).collect();
                for ix in 0..n {
                    let a = dt2 + d2[0][ix];
                    if a >= r2 {
                        continue;
                    }
                    for iy in 0..n {
                        let b = a + d2[1][iy];
                        if b >= r2 {
                            continue;
                        }
                        let base = (ix * n + iy) * n;
                        for iz in 0..n {
                            let v = scale * amplitude * bump_profile((b + d2[2][iz]) / r2);
                            if v != 0.0 {
                                for (o, p) in out.iter_mut().zip(&self.profile) {
                                    o[base + iz] += p * v;
                                }
                            }
                        }
                    }
                }
            }
            Family::Sum(terms) => {
                for term in terms {
                    term.slice_accumulate(grid, t, scale, out);
                }
            }
            Family::Scaled(c, inner) => inner.slice_accumulate(grid, t, scale * c, out),
        }
    }

    /// Exact parameter encoding, suitable as a cache key.
    pub fn fingerprint(&self) -> FunctionKey {
        let mut words = Vec::new();
        self.encode(&mut words);
        FunctionKey(words)
    }

    fn encode(&self, w: &mut Vec<u64>) {
        w.push(self.rank.components() as u64);
        w.extend(self.profile.iter().map(|v| v.to_bits()));
        match &self.family {
            Family::GaussianPacket { center, sigma, q, amplitude, phase } => {
                w.push(1);
                w.extend(center.iter().chain(q).chain([sigma, amplitude, phase]).map(|v| v.to_bits()));
            }
            Family::Bump { center, radius, amplitude } => {
                w.push(2);
                w.extend(center.iter().chain([radius, amplitude]).map(|v| v.to_bits()));
            }
            Family::Sum(terms) => {
                w.push(3);
                w.push(terms.len() as u64);
                for t in terms {
                    t.encode(w);
                }
            }
            Family::Scaled(c, inner) => {
                w.push(4);
                w.push(c.to_bits());
                inner.encode(w);
            }
        }
    }
}

/// `exp(-1/(1-ρ²))` inside the unit ball, taking `ρ²`.
fn bump_profile(rho2: f64) -> f64 {
    if rho2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - rho2)).exp()
    }
}

/// Transform of the unit Gaussian centred at `x0`:
/// `(2πσ²)² e^{i p·x0} e^{-σ²|p|²_E/2}`.
fn gaussian_ft(x0: &[f64; 4], sigma: f64, p: &[f64; 4]) -> Complex64 {
    let s2 = sigma * sigma;
    let p2: f64 = p.iter().map(|v| v * v).sum();
    let norm = (2.0 * std::f64::consts::PI * s2).powi(2) * (-0.5 * s2 * p2).exp();
    Complex64::from_polar(norm, minkowski_dot(p, x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{fft4, make_grid_with_cap, GridSpec, DEFAULT_MEMORY_CAP};

    fn val(f: &TestFunction, x: [f64; 4]) -> f64 {
        let mut out = vec![0.0; f.rank().components()];
        f.value(x, &mut out);
        out[0]
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(matches!(scalar_gaussian([0.0; 4], 0.0, [0.0; 4]), Err(TestFunctionError::NonPositiveWidth(_))));
        assert!(matches!(scalar_bump([0.0; 4], -1.0), Err(TestFunctionError::NonPositiveRadius(_))));
        assert!(matches!(
            gaussian_packet([0.0; 4], 1.0, [0.0; 4], TensorRank::Vector, &[1.0]),
            Err(TestFunctionError::ProfileLength { .. })
        ));
    }

    #[test]
    fn gaussian_at_centre_and_parity() {
        let f = scalar_gaussian([0.0; 4], 1.3, [0.0; 4]).unwrap();
        assert_eq!(val(&f, [0.0; 4]), 1.0);
        let x = [0.3, -0.7, 1.1, 0.2];
        assert_eq!(val(&f, x), val(&f, [-0.3, 0.7, -1.1, -0.2]));
    }

    #[test]
    fn bump_centre_and_edge() {
        let f = scalar_bump([1.0, 0.0, 0.0, 0.0], 2.0).unwrap();
        assert!((val(&f, [1.0, 0.0, 0.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(val(&f, [1.0, 2.0, 0.0, 0.0]), 0.0);
        assert_eq!(val(&f, [3.5, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn translate_moves_centre_backwards() {
        let q = [0.4, 0.2, -0.1, 0.3];
        let f = scalar_gaussian([0.5, 0.0, 1.0, 0.0], 1.2, q).unwrap();
        let a = [0.25, -1.0, 0.5, 2.0];
        let fa = translate(&f, a);
        for x in [[0.0; 4], [0.3, 1.0, -0.4, 0.2], [1.0, -2.0, 0.0, 1.5]] {
            let xa = [x[0] + a[0], x[1] + a[1], x[2] + a[2], x[3] + a[3]];
            assert!((val(&fa, x) - val(&f, xa)).abs() < 1e-14);
        }
        let back = translate(&fa, [-a[0], -a[1], -a[2], -a[3]]);
        for x in [[0.1, 0.2, 0.3, 0.4], [-1.0, 0.0, 2.0, 0.5]] {
            assert!((val(&back, x) - val(&f, x)).abs() < 1e-14);
        }
        assert_eq!(translate(&f, [0.0; 4]), f);
    }

    #[test]
    fn translated_packet_is_packet_at_shifted_centre() {
        let x0 = [0.0, 1.0, 0.0, -1.0];
        let a = [0.5, 0.5, -1.0, 0.0];
        let f = scalar_gaussian(x0, 1.0, [0.0; 4]).unwrap();
        let g = scalar_gaussian(sub(&x0, &a), 1.0, [0.0; 4]).unwrap();
        assert_eq!(translate(&f, a), g);
    }

    #[test]
    fn causal_relation_examples() {
        let f = scalar_bump([0.0; 4], 1.0).unwrap();
        let g = scalar_bump([0.0, 5.0, 0.0, 0.0], 1.0).unwrap();
        let r = causal_relation(&f, &g);
        assert_eq!(r.relation, Relation::SpacelikeSeparated);
        assert!((r.margin + 5.0).abs() < 1e-12);
        assert_eq!(causal_relation(&f, &f).relation, Relation::NotSpacelikeSeparated);
        let h = scalar_gaussian([0.0; 4], 1.0, [0.0; 4]).unwrap();
        assert_eq!(causal_relation(&f, &h).relation, Relation::Indeterminate);
        assert_eq!(causal_relation(&g, &f), r);
    }

    #[test]
    fn slice_sampling_matches_pointwise() {
        let g = make_grid_with_cap(GridSpec::centered(8, 8, 0.5, 0.5), DEFAULT_MEMORY_CAP).unwrap();
        let f = sum(vec![
            gaussian_packet([0.1, 0.2, -0.3, 0.0], 0.9, [0.5, 0.3, 0.0, -0.2], TensorRank::Vector, &[1.0, 0.5, 0.0, -2.0])
                .unwrap(),
            bump([0.0; 4], 1.7, TensorRank::Vector, &[0.0, 1.0, 1.0, 0.0]).unwrap(),
        ])
        .unwrap()
        .with_amplitude(1.5);
        let field = f.sample(&g).unwrap();
        let mut out = [0.0; 4];
        for it in [0, 3, 5] {
            for (ix, iy, iz) in [(0, 0, 0), (4, 3, 5), (7, 2, 4)] {
                let x = [g.coords(0)[it], g.coords(1)[ix], g.coords(2)[iy], g.coords(3)[iz]];
                f.value(x, &mut out);
                for c in 0..4 {
                    let s = field.component(c)[g.index(it, ix, iy, iz)];
                    assert!((s - out[c]).abs() < 1e-14, "{s} vs {}", out[c]);
                }
            }
        }
    }

    #[test]
    fn spectrum_peaks_at_modulation() {
        let g = make_grid_with_cap(GridSpec::centered(32, 8, 0.5, 1.0), DEFAULT_MEMORY_CAP).unwrap();
        let q0 = 2.0 * std::f64::consts::PI / 16.0 * 5.0;
        let f = scalar_gaussian([0.0; 4], 2.5, [q0, 0.0, 0.0, 0.0]).unwrap();
        let spec = fft4(&f.sample(&g).unwrap());
        let (mut best, mut arg) = (0.0, 0);
        for it in 0..32 {
            let v = spec.component(0)[g.index(it, 0, 0, 0)].norm();
            if v > best {
                best = v;
                arg = it;
            }
        }
        let k = g.momenta(0)[arg].abs();
        assert!((k - q0).abs() <= g.momenta(0)[1] + 1e-12);
    }

    #[test]
    fn fingerprint_distinguishes_parameters() {
        let f = scalar_gaussian([0.0; 4], 1.0, [0.0; 4]).unwrap();
        let g = scalar_gaussian([0.0; 4], 1.0 + 1e-15, [0.0; 4]).unwrap();
        assert_ne!(f.fingerprint(), g.fingerprint());
        assert_eq!(f.fingerprint(), f.clone().fingerprint());
    }
}
