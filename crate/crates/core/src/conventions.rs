//! Fixed sign and index conventions shared by every module.
//!
//! * metric signature `(+,-,-,-)`, so `k.x = k0 t - k.x`
//! * Fourier transform `f~(k) = ∫ d⁴x e^{+i k0 t - i k⃗·x⃗} f(x)`
//! * Levi-Civita symbol with `ε^{0123} = +1`
//! * `ħ = 1`
//!
//! Tensor-valued quantities are stored with upper (contravariant) indices.
//! Antisymmetric rank-2 tensors keep the six independent components in the
//! order `01, 02, 03, 12, 13, 23`.

use serde::{Deserialize, Serialize};

/// One-line conventions string written into every output file header.
pub const CONVENTIONS: &str =
    "metric (+,-,-,-); k.x = k0*t - kvec.xvec; FT f~(k) = int d4x exp(+i k0 t - i kvec.xvec) f(x); eps^{0123} = +1; hbar = 1";

/// Diagonal of the Minkowski metric.
pub const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

/// Index pairs of the stored antisymmetric components.
pub const ANTISYM_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Minkowski product of two real 4-vectors given with upper indices.
pub fn minkowski_dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
}

/// Euclidean squared length of a 4-vector.
pub fn euclidean_norm2(a: &[f64; 4]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `ε^{μνρσ}` with `ε^{0123} = +1`.
pub fn levi_civita(mu: usize, nu: usize, rho: usize, sigma: usize) -> f64 {
    let idx = [mu, nu, rho, sigma];
    for i in 0..4 {
        if idx[i] > 3 {
            return 0.0;
        }
        for j in (i + 1)..4 {
            if idx[i] == idx[j] {
                return 0.0;
            }
        }
    }
    // parity by counting inversions
    let mut inversions = 0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if idx[i] > idx[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Storage slot and sign of `F^{μν}` within the six-component layout.
///
/// Returns `None` on the diagonal.
pub fn antisym_slot(mu: usize, nu: usize) -> Option<(usize, f64)> {
    if mu == nu {
        return None;
    }
    let (a, b, sign) = if mu < nu { (mu, nu, 1.0) } else { (nu, mu, -1.0) };
    ANTISYM_PAIRS
        .iter()
        .position(|&p| p == (a, b))
        .map(|slot| (slot, sign))
}

/// Expand six stored components into the full 4×4 antisymmetric matrix.
pub fn expand_antisym<T>(stored: &[T]) -> [[T; 4]; 4]
where
    T: Copy + Default + std::ops::Neg<Output = T>,
{
    let mut out = [[T::default(); 4]; 4];
    for (slot, &(a, b)) in ANTISYM_PAIRS.iter().enumerate() {
        out[a][b] = stored[slot];
        out[b][a] = -stored[slot];
    }
    out
}

/// Lorentz tensor type of a field or test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRank {
    Scalar,
    Vector,
    Antisym2,
}

impl TensorRank {
    /// Number of stored real components.
    pub fn components(self) -> usize {
        match self {
            TensorRank::Scalar => 1,
            TensorRank::Vector => 4,
            TensorRank::Antisym2 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorRank::Scalar => "scalar",
            TensorRank::Vector => "vector",
            TensorRank::Antisym2 => "antisym2",
        }
    }
}

impl std::fmt::Display for TensorRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
