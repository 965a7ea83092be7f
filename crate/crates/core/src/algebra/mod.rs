//! Operator algebra of the nonlinear field: `ξ`, Gram matrices,
//! permanents, vacuum expectations, commutators and characteristic
//! functions.

mod characteristic;
mod gram;
mod model;
mod permanent;
mod wick;

pub use characteristic::{characteristic_from, characteristic_function, geometry, MeasurementGeometry, StatePrep};
pub use gram::{certify, gram_psd, GramReport, PSD_TOL};
pub use model::{Commutator, Evaluator, ModelTerm, NonlinearModel, Probe, ProbeKey, XiValue};
pub use permanent::{permanent, permanent_with_cap, PERMANENT_CAP};
pub use wick::{vacuum_expectation, wightman, OpKind, OperatorMonomial, MONOMIAL_CAP, WIGHTMAN_CAP};
