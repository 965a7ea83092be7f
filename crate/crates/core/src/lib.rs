//! Nonlinear quantum-field inner products on a discretised spacetime.
//!
//! A model is a list of local functionals `𝒫_i` paired with mass-shell
//! kernels and non-negative weights; `ξ(f, g) = Σ_i λ_i (𝒫_i[f], 𝒫_i[g])_i`
//! replaces the commutator of a free field. Everything else (Wightman
//! functions, commutators, characteristic functions, densities) is read off
//! `ξ`.

pub mod algebra;
pub mod conventions;
pub mod densities;
pub mod em_scenarios;
pub mod error;
pub mod functionals;
pub mod kernels;
pub mod lattice;
pub mod oracles;
pub mod testfunctions;

pub use algebra::{Evaluator, ModelTerm, NonlinearModel, Probe};
pub use conventions::{TensorRank, CONVENTIONS};
pub use error::{Error, Result};
pub use functionals::{parse_functional, LocalFunctional};
pub use kernels::Kernel;
pub use lattice::{make_grid, Grid, GridSpec};
pub use testfunctions::TestFunction;
