use num_complex::Complex64;

use super::model::{Evaluator, Probe};
use super::permanent::permanent;
use crate::error::{AlgebraError, Error};

/// State in which measurements are made.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePrep {
    Vacuum,
    /// `a†_{g_1}…a†_{g_J}|0⟩`, normalised by `per[ξ(g_j, g_k)]`.
    Excited { creators: Vec<Probe> },
}

/// `F_ij = Re ξ(f_i, f_j)` and, for a one-creator state,
/// `S_i = ξ(f_i, g)/√ξ(g, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGeometry {
    pub f: Vec<Vec<f64>>,
    pub s: Option<Vec<Complex64>>,
    /// State normalisation `per[ξ(g_j, g_k)]` (1 for the vacuum).
    pub normalization: f64,
}

pub fn geometry(ev: &Evaluator, state: &StatePrep, functions: &[Probe]) -> Result<MeasurementGeometry, Error> {
    let xi = ev.xi_matrix(functions)?;
    let f: Vec<Vec<f64>> = xi.iter().map(|row| row.iter().map(|z| z.re).collect()).collect();
    match state {
        StatePrep::Vacuum => Ok(MeasurementGeometry { f, s: None, normalization: 1.0 }),
        StatePrep::Excited { creators } => {
            let gram = ev.xi_matrix(creators)?;
            let norm = permanent(&gram)?.re;
            if !(norm > 0.0) {
                return Err(AlgebraError::NullState(norm).into());
            }
            if creators.len() != 1 {
                return Ok(MeasurementGeometry { f, s: None, normalization: norm });
            }
            let g = &creators[0];
            let root = norm.sqrt();
            let s = functions.iter().map(|fi| Ok(ev.xi(fi, g)? / root)).collect::<Result<Vec<_>, Error>>()?;
            Ok(MeasurementGeometry { f, s: Some(s), normalization: norm })
        }
    }
}

/// Closed-form characteristic function: `exp(-½λᵀFλ)` in the vacuum and
/// `(1 - |λ·S|²) exp(-½λᵀFλ)` in a one-particle state.
pub fn characteristic_from(f: &[Vec<f64>], s: Option<&[Complex64]>, lambda: &[f64]) -> Result<Complex64, AlgebraError> {
    let n = f.len();
    if lambda.len() != n {
        return Err(AlgebraError::DimensionMismatch { expected: n, got: lambda.len() });
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += lambda[i] * f[i][j] * lambda[j];
        }
    }
    let gauss = (-0.5 * q).exp();
    let pre = match s {
        None => 1.0,
        Some(s) => {
            let ls: Complex64 = lambda.iter().zip(s).map(|(l, si)| si * *l).sum();
            1.0 - ls.norm_sqr()
        }
    };
    Ok(Complex64::new(pre * gauss, 0.0))
}

/// `⟨exp(i Σ λ_i φ_{f_i})⟩` in `state`.
pub fn characteristic_function(
    ev: &Evaluator,
    state: &StatePrep,
    functions: &[Probe],
    lambda: &[f64],
) -> Result<Complex64, Error> {
    if let StatePrep::Excited { creators } = state {
        if creators.len() != 1 {
            return Err(AlgebraError::UnsupportedState.into());
        }
    }
    if lambda.len() != functions.len() {
        return Err(AlgebraError::DimensionMismatch { expected: functions.len(), got: lambda.len() }.into());
    }
    let geo = geometry(ev, state, functions)?;
    Ok(characteristic_from(&geo.f, geo.s.as_deref(), lambda)?)
}
