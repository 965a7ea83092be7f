use nalgebra::DMatrix;
use num_complex::Complex64;

use super::model::{Evaluator, Probe};
use crate::error::Error;

/// Default PSD tolerance relative to the trace.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    /// `matrix[i][j] = ξ(f_i, f_j)`.
    pub matrix: Vec<Vec<Complex64>>,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub trace: f64,
    /// `max |M - M†| / max |M|`.
    pub hermiticity_residual: f64,
    pub tol: f64,
    pub psd_certified: bool,
}

/// Certify a hermitian matrix as PSD: `min eigenvalue >= -tol·trace`.
pub fn certify(matrix: Vec<Vec<Complex64>>, tol: f64) -> GramReport {
    let n = matrix.len();
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            residual = residual.max((matrix[i][j] - matrix[j][i].conj()).norm());
            scale = scale.max(matrix[i][j].norm());
        }
    }
    let herm = DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[i][j] + matrix[j][i].conj()));
    let mut eigenvalues: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        herm.symmetric_eigenvalues().iter().copied().collect()
    };
    eigenvalues.sort_by(f64::total_cmp);
    let trace: f64 = (0..n).map(|i| matrix[i][i].re).sum();
    let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
    GramReport {
        psd_certified: min_eigenvalue >= -tol * trace.abs(),
        matrix,
        eigenvalues,
        min_eigenvalue,
        trace,
        hermiticity_residual: if scale > 0.0 { residual / scale } else { 0.0 },
        tol,
    }
}

/// Gram matrix of `ξ` over `probes` with its PSD certificate. A failed
/// certificate is a report outcome, not an error.
pub fn gram_psd(ev: &Evaluator, probes: &[Probe], tol: f64) -> Result<GramReport, Error> {
    Ok(certify(ev.xi_matrix(probes)?, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_deficient_matrix_has_zero_eigenvalue() {
        let v = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 2.0)];
        let m: Vec<Vec<Complex64>> = (0..2).map(|i| (0..2).map(|j| v[i] * v[j].conj()).collect()).collect();
        let r = certify(m, PSD_TOL);
        assert!(r.psd_certified);
        assert!(r.min_eigenvalue.abs() < 1e-12 * r.trace);
        assert!(r.hermiticity_residual < 1e-15);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)],
            vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)],
        ];
        let r = certify(m, PSD_TOL);
        assert!(!r.psd_certified);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-12);
    }
}
