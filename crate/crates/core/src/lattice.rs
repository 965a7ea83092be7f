//! Uniform 4D spacetime grid, sampled fields, the 4D discrete Fourier
//! transform and finite-difference derivatives.
//!
//! Samples are stored time-major: the flat index of `(it, ix, iy, iz)` is
//! `((it * n_s + ix) * n_s + iy) * n_s + iz`, so one time slice is a
//! contiguous block of `n_s³` values.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::conventions::TensorRank;
use crate::error::LatticeError;

/// Default cap on the bytes of one complex field component.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// Environment variable overriding [`DEFAULT_MEMORY_CAP`]; accepts a plain
/// byte count or a `KiB`/`MiB`/`GiB` suffix.
pub const MEMORY_CAP_ENV: &str = "NLQF_MEMORY_CAP";

/// Fraction of the field maximum above which [`boundary_leakage`] warns.
pub const LEAKAGE_WARN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_s: usize,
    pub dt: f64,
    pub dx: f64,
    /// Coordinates of the grid corner `(t, x, y, z)`.
    pub origin: [f64; 4],
}

impl GridSpec {
    /// Grid whose sample points are symmetric about the spacetime origin
    /// (the corner sits at `-n/2` steps on every axis).
    pub fn centered(n_t: usize, n_s: usize, dt: f64, dx: f64) -> Self {
        let ot = -(n_t as f64 / 2.0) * dt;
        let os = -(n_s as f64 / 2.0) * dx;
        GridSpec { n_t, n_s, dt, dx, origin: [ot, os, os, os] }
    }

    /// Total number of sample points.
    pub fn points(&self) -> u64 {
        self.n_t as u64 * (self.n_s as u64).pow(3)
    }

    pub fn validate(&self, memory_cap: u64) -> Result<(), LatticeError> {
        for (axis, n) in [("time", self.n_t), ("space", self.n_s)] {
            if n % 2 != 0 {
                return Err(LatticeError::OddGridSize { axis, n });
            }
            if n < 8 {
                return Err(LatticeError::GridTooSmall { axis, n });
            }
        }
        for (axis, value) in [("dt", self.dt), ("dx", self.dx)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(LatticeError::NonPositiveSpacing { axis, value });
            }
        }
        let bytes = self.points().saturating_mul(16);
        if bytes > memory_cap {
            return Err(LatticeError::MemoryCap { bytes, cap: memory_cap });
        }
        Ok(())
    }
}

/// Memory cap from [`MEMORY_CAP_ENV`], falling back to the default.
pub fn memory_cap_from_env() -> u64 {
    std::env::var(MEMORY_CAP_ENV)
        .ok()
        .and_then(|s| parse_byte_size(&s))
        .unwrap_or(DEFAULT_MEMORY_CAP)
}

pub fn parse_byte_size(text: &str) -> Option<u64> {
    let t = text.trim();
    let (num, mult) = if let Some(v) = t.strip_suffix("GiB") {
        (v, 1u64 << 30)
    } else if let Some(v) = t.strip_suffix("MiB") {
        (v, 1u64 << 20)
    } else if let Some(v) = t.strip_suffix("KiB") {
        (v, 1u64 << 10)
    } else {
        (t, 1)
    };
    num.trim().parse::<u64>().ok().map(|n| n.saturating_mul(mult))
}

/// Validated grid with coordinate and momentum axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    t: Vec<f64>,
    x: [Vec<f64>; 3],
    k0: Vec<f64>,
    ks: Vec<f64>,
}

/// Build a grid, enforcing the memory cap from the environment.
pub fn make_grid(spec: GridSpec) -> Result<Arc<Grid>, LatticeError> {
    make_grid_with_cap(spec, memory_cap_from_env())
}

pub fn make_grid_with_cap(spec: GridSpec, memory_cap: u64) -> Result<Arc<Grid>, LatticeError> {
    spec.validate(memory_cap)?;
    let axis = |n: usize, d: f64, o: f64| (0..n).map(|i| o + i as f64 * d).collect::<Vec<_>>();
    let t = axis(spec.n_t, spec.dt, spec.origin[0]);
    let x = [
        axis(spec.n_s, spec.dx, spec.origin[1]),
        axis(spec.n_s, spec.dx, spec.origin[2]),
        axis(spec.n_s, spec.dx, spec.origin[3]),
    ];
    Ok(Arc::new(Grid {
        spec,
        t,
        x,
        k0: dft_frequencies(spec.n_t, spec.dt),
        ks: dft_frequencies(spec.n_s, spec.dx),
    }))
}

/// Angular DFT frequencies `2π·fftfreq(n, d)`.
pub fn dft_frequencies(n: usize, d: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * d);
    (0..n)
        .map(|i| {
            let j = if i < n / 2 { i as isize } else { i as isize - n as isize };
            j as f64 * scale
        })
        .collect()
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n_t(&self) -> usize {
        self.spec.n_t
    }

    pub fn n_s(&self) -> usize {
        self.spec.n_s
    }

    /// Points in one time slice.
    pub fn slice_len(&self) -> usize {
        self.spec.n_s.pow(3)
    }

    pub fn len(&self) -> usize {
        self.spec.n_t * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample coordinates along axis `mu` (0 = time).
    pub fn coords(&self, mu: usize) -> &[f64] {
        if mu == 0 {
            &self.t
        } else {
            &self.x[mu - 1]
        }
    }

    /// Angular momenta along axis `mu` in DFT order.
    pub fn momenta(&self, mu: usize) -> &[f64] {
        if mu == 0 {
            &self.k0
        } else {
            &self.ks
        }
    }

    pub fn spacing(&self, mu: usize) -> f64 {
        if mu == 0 {
            self.spec.dt
        } else {
            self.spec.dx
        }
    }

    pub fn extent(&self, mu: usize) -> usize {
        if mu == 0 {
            self.spec.n_t
        } else {
            self.spec.n_s
        }
    }

    /// Position-space volume element `dt·dx³`.
    pub fn cell_volume(&self) -> f64 {
        self.spec.dt * self.spec.dx.powi(3)
    }

    /// Momentum-space measure `d⁴k/(2π)⁴` of one DFT cell.
    pub fn momentum_cell(&self) -> f64 {
        1.0 / (self.spec.n_t as f64 * self.spec.dt * (self.spec.n_s as f64 * self.spec.dx).powi(3))
    }

    /// Positive k0 Nyquist limit `π/dt`.
    pub fn k0_nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spec.dt
    }

    pub fn index(&self, it: usize, ix: usize, iy: usize, iz: usize) -> usize {
        let n = self.spec.n_s;
        ((it * n + ix) * n + iy) * n + iz
    }

    /// Spatial momentum `(k1, k2, k3)` of flat spatial index `s`.
    pub fn spatial_momentum(&self, s: usize) -> [f64; 3] {
        let n = self.spec.n_s;
        let (ix, iy, iz) = (s / (n * n), (s / n) % n, s % n);
        [self.ks[ix], self.ks[iy], self.ks[iz]]
    }

    /// Phase `e^{-i k⃗·o⃗}` that turns a raw spatial FFT into the physical
    /// transform for a grid whose corner is at `o⃗`.
    pub(crate) fn spatial_phase(&self) -> Vec<Complex64> {
        let n = self.spec.n_s;
        let o = &self.spec.origin;
        let axis = |a: usize| -> Vec<Complex64> {
            self.ks.iter().map(|k| Complex64::from_polar(1.0, -k * o[a])).collect()
        };
        let (p1, p2, p3) = (axis(1), axis(2), axis(3));
        let mut out = Vec::with_capacity(n * n * n);
        for a in &p1 {
            for b in &p2 {
                for c in &p3 {
                    out.push(a * b * c);
                }
            }
        }
        out
    }
}

/// Real-valued sampled field with 1, 4 or 6 components.
#[derive(Debug, Clone)]
pub struct RealField4 {
    grid: Arc<Grid>,
    rank: TensorRank,
    data: Vec<Vec<f64>>,
}

impl RealField4 {
    pub fn new(grid: Arc<Grid>, rank: TensorRank, data: Vec<Vec<f64>>) -> Result<Self, LatticeError> {
        assert_eq!(data.len(), rank.components(), "component count does not match rank");
        for c in &data {
            assert_eq!(c.len(), grid.len(), "component length does not match grid");
            if c.iter().any(|v| !v.is_finite()) {
                return Err(LatticeError::NonFinite);
            }
        }
        Ok(RealField4 { grid, rank, data })
    }

    pub fn zeros(grid: Arc<Grid>, rank: TensorRank) -> Self {
        let data = vec![vec![0.0; grid.len()]; rank.components()];
        RealField4 { grid, rank, data }
    }

    /// Sample `f(x)` at every grid point; `f` writes one value per component.
    pub fn from_fn<F>(grid: Arc<Grid>, rank: TensorRank, f: F) -> Result<Self, LatticeError>
    where
        F: Fn([f64; 4], &mut [f64]),
    {
        let nc = rank.components();
        let mut data = vec![vec![0.0; grid.len()]; nc];
        let mut buf = vec![0.0; nc];
        let n = grid.n_s();
        for it in 0..grid.n_t() {
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let x = [grid.coords(0)[it], grid.coords(1)[ix], grid.coords(2)[iy], grid.coords(3)[iz]];
                        f(x, &mut buf);
                        let idx = grid.index(it, ix, iy, iz);
                        for c in 0..nc {
                            data[c][idx] = buf[c];
                        }
                    }
                }
            }
        }
        RealField4::new(grid, rank, data)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rank(&self) -> TensorRank {
        self.rank
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `Σ|f|²·dt·dx³` summed over components.
    pub fn norm2(&self) -> f64 {
        let w = self.grid.cell_volume();
        self.data.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() * w
    }
}

/// Complex spectrum of a [`RealField4`] on the DFT momentum grid.
#[derive(Debug, Clone)]
pub struct SpectralField4 {
    grid: Arc<Grid>,
    rank: TensorRank,
    data: Vec<Vec<Complex64>>,
}

impl SpectralField4 {
    /// Sign convention of the stored spectrum.
    pub const CONVENTION: &'static str = "e^{+ik.x}, signature (+,-,-,-)";

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rank(&self) -> TensorRank {
        self.rank
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.data[c]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    /// `Σ|f~|²·d⁴k/(2π)⁴` summed over components.
    pub fn norm2(&self) -> f64 {
        let w = self.grid.momentum_cell();
        self.data.iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum::<f64>() * w
    }

    /// Flat index of the momentum `-k` for the momentum at `idx`.
    pub fn negated_index(&self, idx: usize) -> usize {
        let g = &self.grid;
        let n = g.n_s();
        let nt = g.n_t();
        let s = g.slice_len();
        let (it, rest) = (idx / s, idx % s);
        let (ix, iy, iz) = (rest / (n * n), (rest / n) % n, rest % n);
        g.index((nt - it) % nt, (n - ix) % n, (n - iy) % n, (n - iz) % n)
    }
}

/// Plan cache for the transforms along one axis length.
struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AxisPlans {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        AxisPlans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn get(&self, dir: FftDirection) -> &Arc<dyn Fft<f64>> {
        match dir {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        }
    }
}

/// Unnormalised in-place DFT of `data` (shape `dims`, row-major) along `axis`.
fn transform_axis(data: &mut [Complex64], dims: [usize; 4], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = n * stride;
    if stride == 1 {
        data.par_chunks_mut(n).for_each(|line| fft.process(line));
        return;
    }
    data.par_chunks_mut(block).for_each(|blk| {
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..stride {
            for i in 0..n {
                line[i] = blk[i * stride + j];
            }
            fft.process(&mut line);
            for i in 0..n {
                blk[i * stride + j] = line[i];
            }
        }
    });
}

/// Spatial 3D transform of one time slice, `Σ_x e^{-ik⃗·x⃗}` without phase or
/// measure factors.
pub(crate) struct SpatialFft {
    n: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl SpatialFft {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        SpatialFft { n, plan: planner.plan_fft_forward(n) }
    }

    pub(crate) fn forward(&self, slice: &mut [Complex64]) {
        let n = self.n;
        let dims = [1, n, n, n];
        for axis in 1..4 {
            transform_axis(slice, dims, axis, &self.plan);
        }
    }
}

/// Forward 4D transform `f~(k) = Σ_x dt·dx³ e^{i(k0 t - k⃗·x⃗)} f(x)`.
pub fn fft4(field: &RealField4) -> SpectralField4 {
    let grid = field.grid.clone();
    let (nt, ns) = (grid.n_t(), grid.n_s());
    let dims = [nt, ns, ns, ns];
    let mut planner = FftPlanner::new();
    let tplans = AxisPlans::new(&mut planner, nt);
    let splans = AxisPlans::new(&mut planner, ns);
    let phase = full_phase(&grid);
    let measure = grid.cell_volume();
    let data = field
        .data
        .iter()
        .map(|comp| {
            let mut buf: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            transform_axis(&mut buf, dims, 0, tplans.get(FftDirection::Inverse));
            for axis in 1..4 {
                transform_axis(&mut buf, dims, axis, splans.get(FftDirection::Forward));
            }
            apply_phase(&mut buf, &grid, &phase, measure, false);
            buf
        })
        .collect();
    SpectralField4 { grid, rank: field.rank, data }
}

/// Inverse of [`fft4`]; the imaginary residue of the result is discarded.
pub fn ifft4(spec: &SpectralField4) -> RealField4 {
    let grid = spec.grid.clone();
    let (nt, ns) = (grid.n_t(), grid.n_s());
    let dims = [nt, ns, ns, ns];
    let mut planner = FftPlanner::new();
    let tplans = AxisPlans::new(&mut planner, nt);
    let splans = AxisPlans::new(&mut planner, ns);
    let phase = full_phase(&grid);
    let measure = grid.cell_volume() * grid.len() as f64;
    let data = spec
        .data
        .iter()
        .map(|comp| {
            let mut buf = comp.clone();
            apply_phase(&mut buf, &grid, &phase, measure, true);
            transform_axis(&mut buf, dims, 0, tplans.get(FftDirection::Forward));
            for axis in 1..4 {
                transform_axis(&mut buf, dims, axis, splans.get(FftDirection::Inverse));
            }
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect();
    RealField4 { grid, rank: spec.rank, data }
}

/// Per-axis phase factors `e^{+i k0 o_t}` and `e^{-i k_j o_j}`.
fn full_phase(grid: &Grid) -> [Vec<Complex64>; 4] {
    let o = grid.spec().origin;
    let mk = |mu: usize, sign: f64| -> Vec<Complex64> {
        grid.momenta(mu).iter().map(|k| Complex64::from_polar(1.0, sign * k * o[mu])).collect()
    };
    [mk(0, 1.0), mk(1, -1.0), mk(2, -1.0), mk(3, -1.0)]
}

fn apply_phase(buf: &mut [Complex64], grid: &Grid, phase: &[Vec<Complex64>; 4], scale: f64, inverse: bool) {
    let ns = grid.n_s();
    let s = grid.slice_len();
    buf.par_chunks_mut(s).enumerate().for_each(|(it, slice)| {
        for ix in 0..ns {
            for iy in 0..ns {
                let p = phase[0][it] * phase[1][ix] * phase[2][iy];
                let row = &mut slice[(ix * ns + iy) * ns..(ix * ns + iy + 1) * ns];
                for (iz, v) in row.iter_mut().enumerate() {
                    let q = p * phase[3][iz];
                    if inverse {
                        *v = *v * q.conj() / scale;
                    } else {
                        *v = *v * q * scale;
                    }
                }
            }
        }
    });
}

/// Centered second-order difference along axis `mu`, periodic wrap.
pub fn gradient4(field: &RealField4, mu: usize) -> Result<RealField4, LatticeError> {
    if mu > 3 {
        return Err(LatticeError::InvalidAxis(mu));
    }
    let grid = field.grid.clone();
    let dims = [grid.n_t(), grid.n_s(), grid.n_s(), grid.n_s()];
    let h = grid.spacing(mu);
    let data = field.data.iter().map(|c| central_difference(c, dims, mu, h, true)).collect();
    Ok(RealField4 { grid, rank: field.rank, data })
}

/// Central difference of a row-major block along `axis`.
///
/// With `periodic = false` the first and last planes along `axis` are set to
/// zero; callers that stream time slabs discard them.
pub(crate) fn central_difference(src: &[f64], dims: [usize; 4], axis: usize, h: f64, periodic: bool) -> Vec<f64> {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = n * stride;
    let inv = 0.5 / h;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(block).zip(src.par_chunks(block)).for_each(|(o, s)| {
        for i in 0..n {
            let (lo, hi) = if periodic {
                ((i + n - 1) % n, (i + 1) % n)
            } else if i == 0 || i == n - 1 {
                continue;
            } else {
                (i - 1, i + 1)
            };
            let (ob, hb, lb) = (i * stride, hi * stride, lo * stride);
            for j in 0..stride {
                o[ob + j] = (s[hb + j] - s[lb + j]) * inv;
            }
        }
    });
    out
}

/// Largest `|f|` on the faces of the box relative to the field maximum.
pub fn boundary_leakage(field: &RealField4) -> f64 {
    let g = &field.grid;
    let (nt, n) = (g.n_t(), g.n_s());
    let max = field.max_abs();
    if max == 0.0 {
        return 0.0;
    }
    let mut face: f64 = 0.0;
    for comp in &field.data {
        for it in 0..nt {
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let on_face = it == 0
                            || it == nt - 1
                            || ix == 0
                            || ix == n - 1
                            || iy == 0
                            || iy == n - 1
                            || iz == 0
                            || iz == n - 1;
                        if on_face {
                            face = face.max(comp[g.index(it, ix, iy, iz)].abs());
                        }
                    }
                }
            }
        }
    }
    face / max
}
