//! Joint quasiprobability densities of field measurements.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DensityError;

/// Slack allowed on `S†F⁻¹S <= 1` before a one-particle spec is flagged.
pub const ONE_PARTICLE_SLACK: f64 = 1e-8;

/// Boundary-to-peak ratio above which an integration box is rejected.
pub const BOX_TAIL: f64 = 1e-12;

/// Invertible deformation `G` of the field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GDescriptor {
    Identity,
    /// `G(y) = y - tanh y`, `G'(y) = tanh² y`.
    XMinusTanh,
    /// Monotone piecewise-cubic (Fritsch-Carlson) through the knots, linear
    /// beyond the ends.
    MonotoneTable { knots: Vec<(f64, f64)> },
}

impl GDescriptor {
    pub fn validate(&self) -> Result<(), DensityError> {
        if let GDescriptor::MonotoneTable { knots } = self {
            let ok = knots.len() >= 2
                && knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1)
                && knots.iter().all(|k| k.0.is_finite() && k.1.is_finite());
            if !ok {
                return Err(DensityError::NotMonotone);
            }
        }
        Ok(())
    }

    /// `(G(y), G'(y))`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            GDescriptor::Identity => (y, 1.0),
            GDescriptor::XMinusTanh => {
                let t = y.tanh();
                (y - t, t * t)
            }
            GDescriptor::MonotoneTable { knots } => pchip(knots, y),
        }
    }
}

/// Fritsch-Carlson tangents for a strictly increasing table.
fn pchip_slopes(knots: &[(f64, f64)]) -> Vec<f64> {
    let n = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let d: Vec<f64> = knots.windows(2).zip(&h).map(|(w, h)| (w[1].1 - w[0].1) / h).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        return vec![d[0], d[0]];
    }
    for k in 1..n - 1 {
        // weighted harmonic mean keeps the interpolant monotone
        let (w1, w2) = (2.0 * h[k] + h[k - 1], h[k] + 2.0 * h[k - 1]);
        m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

fn pchip(knots: &[(f64, f64)], y: f64) -> (f64, f64) {
    let m = pchip_slopes(knots);
    let n = knots.len();
    // beyond the table: continue with the secant slope so G stays onto
    if y <= knots[0].0 {
        let s = (knots[1].1 - knots[0].1) / (knots[1].0 - knots[0].0);
        return (knots[0].1 + s * (y - knots[0].0), s);
    }
    if y >= knots[n - 1].0 {
        let s = (knots[n - 1].1 - knots[n - 2].1) / (knots[n - 1].0 - knots[n - 2].0);
        return (knots[n - 1].1 + s * (y - knots[n - 1].0), s);
    }
    let k = knots.partition_point(|p| p.0 <= y) - 1;
    let (x0, y0) = knots[k];
    let (x1, y1) = knots[k + 1];
    let h = x1 - x0;
    let t = (y - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m[k]
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m[k + 1];
    let dv = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m[k]
        + (3.0 * t2 - 2.0 * t) * m[k + 1];
    (v, dv)
}

/// `exp(-G(y)²/(2v)) G'(y) / √(2πv)`.
pub fn g_deformed_density(g: &GDescriptor, variance: f64, y: f64) -> Result<f64, DensityError> {
    if !(variance > 0.0) {
        return Err(DensityError::NonPositiveVariance(variance));
    }
    g.validate()?;
    let (gy, dg) = g.eval(y);
    Ok((-gy * gy / (2.0 * variance)).exp() * dg / (2.0 * std::f64::consts::PI * variance).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    /// `exp(-½xᵀF⁻¹x)/√((2π)ⁿ det F)`.
    VacuumGaussian { f: Vec<Vec<f64>> },
    /// The vacuum density times `|xᵀF⁻¹S|² + (1 - S†F⁻¹S)`.
    OneParticle { f: Vec<Vec<f64>>, s: Vec<Complex64> },
    GDeformed { g: GDescriptor, variance: f64 },
}

/// A density with its factorisation done once.
#[derive(Debug, Clone)]
pub struct PreparedDensity {
    kind: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Gaussian {
        chol: Cholesky<f64, nalgebra::Dyn>,
        norm: f64,
        /// `F⁻¹S` and `S†F⁻¹S`.
        one: Option<(DVector<Complex64>, f64)>,
    },
    G {
        g: GDescriptor,
        variance: f64,
    },
}

fn factor(f: &[Vec<f64>], ridge: f64) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64), DensityError> {
    let n = f.len();
    if let Some(row) = f.iter().find(|r| r.len() != n) {
        return Err(DensityError::DimensionMismatch { expected: n, got: row.len() });
    }
    let scale = f.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (f[i][j] - f[j][i]).abs() > 1e-8 * scale {
                return Err(DensityError::NotSymmetric);
            }
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (f[i][j] + f[j][i]) + if i == j { ridge } else { 0.0 });
    let chol = Cholesky::new(m).ok_or(DensityError::SingularGeometry { ridge })?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(DensityError::SingularGeometry { ridge });
    }
    let norm = (-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet)).exp();
    Ok((chol, norm))
}

impl PreparedDensity {
    /// Factorise `F` (plus `ridge·I` when `ridge > 0`).
    pub fn new(spec: &DensitySpec, ridge: f64) -> Result<Self, DensityError> {
        let kind = match spec {
            DensitySpec::VacuumGaussian { f } => {
                let (chol, norm) = factor(f, ridge)?;
                Prepared::Gaussian { chol, norm, one: None }
            }
            DensitySpec::OneParticle { f, s } => {
                if s.len() != f.len() {
                    return Err(DensityError::DimensionMismatch { expected: f.len(), got: s.len() });
                }
                let (chol, norm) = factor(f, ridge)?;
                let re = chol.solve(&DVector::from_iterator(s.len(), s.iter().map(|z| z.re)));
                let im = chol.solve(&DVector::from_iterator(s.len(), s.iter().map(|z| z.im)));
                let finv_s = DVector::from_fn(s.len(), |i, _| Complex64::new(re[i], im[i]));
                let sfs: f64 = s.iter().zip(finv_s.iter()).map(|(a, b)| (a.conj() * b).re).sum();
                Prepared::Gaussian { chol, norm, one: Some((finv_s, sfs)) }
            }
            DensitySpec::GDeformed { g, variance } => {
                if !(*variance > 0.0) {
                    return Err(DensityError::NonPositiveVariance(*variance));
                }
                g.validate()?;
                Prepared::G { g: g.clone(), variance: *variance }
            }
        };
        Ok(PreparedDensity { kind })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Prepared::Gaussian { chol, .. } => chol.l().nrows(),
            Prepared::G { .. } => 1,
        }
    }

    /// `S†F⁻¹S` for one-particle densities.
    pub fn s_norm(&self) -> Option<f64> {
        match &self.kind {
            Prepared::Gaussian { one: Some((_, v)), .. } => Some(*v),
            _ => None,
        }
    }

    /// True when `S†F⁻¹S > 1 + slack`: the prefactor can then go negative
    /// everywhere near the origin.
    pub fn exceeds_unit_norm(&self) -> bool {
        self.s_norm().is_some_and(|v| v > 1.0 + ONE_PARTICLE_SLACK)
    }

    /// The one-particle prefactor at `x` (1 for other kinds).
    pub fn prefactor(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Prepared::Gaussian { one: Some((finv_s, sfs)), .. } => {
                let xs: Complex64 = x.iter().zip(finv_s.iter()).map(|(a, b)| b * *a).sum();
                xs.norm_sqr() + (1.0 - sfs)
            }
            _ => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, DensityError> {
        if x.len() != self.dim() {
            return Err(DensityError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(match &self.kind {
            Prepared::Gaussian { chol, norm, .. } => {
                let v = DVector::from_column_slice(x);
                let q = v.dot(&chol.solve(&v));
                norm * (-0.5 * q).exp() * self.prefactor(x)
            }
            Prepared::G { g, variance } => {
                let (gy, dg) = g.eval(x[0]);
                (-gy * gy / (2.0 * variance)).exp() * dg / (2.0 * std::f64::consts::PI * variance).sqrt()
            }
        })
    }
}

pub fn joint_density(spec: &DensitySpec, x: &[f64]) -> Result<f64, DensityError> {
    PreparedDensity::new(spec, 0.0)?.eval(x)
}

/// Trapezoidal tensor-grid integral of `p` over `bounds` with `resolution`
/// points per axis (`n <= 3`). Rejects boxes whose boundary values exceed
/// [`BOX_TAIL`] of the interior peak.
pub fn integrate_density<F>(p: F, bounds: &[(f64, f64)], resolution: usize) -> Result<f64, DensityError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = bounds.len();
    if n == 0 || n > 3 {
        return Err(DensityError::TooManyDimensions(n));
    }
    if resolution < 2 {
        return Err(DensityError::Resolution);
    }
    let h: Vec<f64> = bounds.iter().map(|(a, b)| (b - a) / (resolution - 1) as f64).collect();
    let total_points = resolution.pow(n as u32);
    // one slab per index of the first axis, summed in order
    let slabs: Vec<(f64, f64, f64)> = (0..resolution)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![0.0; n];
            let (mut sum, mut peak, mut edge) = (0.0, 0.0f64, 0.0f64);
            let per = total_points / resolution;
            for rest in 0..per {
                let mut idx = vec![i0; n];
                let mut r = rest;
                for axis in (1..n).rev() {
                    idx[axis] = r % resolution;
                    r /= resolution;
                }
                let mut w = 1.0;
                let mut on_edge = false;
                for axis in 0..n {
                    x[axis] = bounds[axis].0 + idx[axis] as f64 * h[axis];
                    if idx[axis] == 0 || idx[axis] == resolution - 1 {
                        w *= 0.5;
                        on_edge = true;
                    }
                }
                let v = p(&x);
                sum += w * v;
                peak = peak.max(v.abs());
                if on_edge {
                    edge = edge.max(v.abs());
                }
            }
            (sum, peak, edge)
        })
        .collect();
    let mut sum = 0.0;
    let (mut peak, mut edge) = (0.0f64, 0.0f64);
    for (s, p, e) in slabs {
        sum += s;
        peak = peak.max(p);
        edge = edge.max(e);
    }
    if edge > BOX_TAIL * peak {
        return Err(DensityError::BoxTooSmall { boundary: edge, max: peak });
    }
    Ok(sum * h.iter().product::<f64>())
}

/// Integrate a density spec over `bounds`.
pub fn integrate_spec(spec: &DensitySpec, bounds: &[(f64, f64)], resolution: usize) -> Result<f64, DensityError> {
    let d = PreparedDensity::new(spec, 0.0)?;
    if bounds.len() != d.dim() {
        return Err(DensityError::DimensionMismatch { expected: d.dim(), got: bounds.len() });
    }
    integrate_density(|x| d.eval(x).unwrap_or(f64::NAN), bounds, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.3989422804014327;

    #[test]
    fn standard_normal_values() {
        let v = DensitySpec::VacuumGaussian { f: vec![vec![1.0]] };
        assert!((joint_density(&v, &[0.0]).unwrap() - INV_SQRT_2PI).abs() < 1e-15);
        let v2 = DensitySpec::VacuumGaussian { f: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        assert!((joint_density(&v2, &[0.0, 0.0]).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn one_particle_matches_hand_substitution() {
        let spec = DensitySpec::OneParticle { f: vec![vec![1.0]], s: vec![Complex64::new(1.0, 0.0)] };
        let d = PreparedDensity::new(&spec, 0.0).unwrap();
        for x in [-3.0f64, -1.2, 0.0, 0.4, 2.5] {
            let want = x * x * (-0.5 * x * x).exp() * INV_SQRT_2PI;
            assert!((d.eval(&[x]).unwrap() - want).abs() <= 1e-10 * want.max(1e-300) + 1e-300);
        }
        assert!(!d.exceeds_unit_norm());
    }

    #[test]
    fn singular_geometry_and_ridge() {
        let f = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let spec = DensitySpec::VacuumGaussian { f };
        assert!(matches!(joint_density(&spec, &[0.0, 0.0]), Err(DensityError::SingularGeometry { .. })));
        assert!(PreparedDensity::new(&spec, 1e-6).is_ok());
        let bad = DensitySpec::VacuumGaussian { f: vec![vec![1.0, 0.5], vec![0.0, 1.0]] };
        assert!(matches!(joint_density(&bad, &[0.0, 0.0]), Err(DensityError::NotSymmetric)));
        assert!(matches!(
            joint_density(&DensitySpec::VacuumGaussian { f: vec![vec![1.0]] }, &[0.0, 1.0]),
            Err(DensityError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn g_deformed_values() {
        let id = g_deformed_density(&GDescriptor::Identity, 1.0, 0.0).unwrap();
        assert!((id - INV_SQRT_2PI).abs() < 1e-15);
        assert_eq!(g_deformed_density(&GDescriptor::XMinusTanh, 0.5, 0.0).unwrap(), 0.0);
        assert!(g_deformed_density(&GDescriptor::Identity, 0.0, 0.0).is_err());
    }

    #[test]
    fn monotone_table_interpolates_and_is_increasing() {
        let knots: Vec<(f64, f64)> = (-8..=8).map(|i| i as f64 * 0.5).map(|y| (y, y - y.tanh())).collect();
        let g = GDescriptor::MonotoneTable { knots: knots.clone() };
        g.validate().unwrap();
        for (x, y) in &knots {
            assert!((g.eval(*x).0 - y).abs() < 1e-14);
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..2000 {
            let y = -6.0 + i as f64 * 0.006;
            let (v, d) = g.eval(y);
            assert!(v >= prev && d >= 0.0);
            prev = v;
        }
        // derivative is the derivative of the interpolant
        let (a, _) = g.eval(1.3 - 1e-6);
        let (b, _) = g.eval(1.3 + 1e-6);
        assert!(((b - a) / 2e-6 - g.eval(1.3).1).abs() < 1e-6);
        assert!(GDescriptor::MonotoneTable { knots: vec![(0.0, 1.0), (1.0, 0.5)] }.validate().is_err());
    }

    #[test]
    fn integration_rejects_small_box() {
        let spec = DensitySpec::VacuumGaussian { f: vec![vec![1.0]] };
        assert!(matches!(integrate_spec(&spec, &[(-2.0, 2.0)], 101), Err(DensityError::BoxTooSmall { .. })));
        let v = integrate_spec(&spec, &[(-9.0, 9.0)], 401).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        assert!(matches!(integrate_density(|_| 0.0, &[(0.0, 1.0); 4], 3), Err(DensityError::TooManyDimensions(4))));
    }
}
