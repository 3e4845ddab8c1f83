//! The renormalization map on kernel families and its iteration.

pub mod check;
pub mod cutoff;
pub mod energy;
pub mod iterate;
pub mod params;
pub mod step;

pub use cutoff::{CutoffPair, CutoffProfile};
pub use energy::{energy_map, invert_energy_map};
pub use iterate::{iterate, RgState};
pub use params::RgParams;
pub use step::{contraction_report, renormalize, renormalize_sharp, ContractionReport, SharpReport, StepReport};

use crate::fock::dilation::DilationError;
use crate::kernel::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum RgError {
    #[error("inadmissible parameters: {0:?}")]
    Params(Vec<String>),
    #[error("ball violation: {what} = {value:e} exceeds {bound:e}")]
    Ball { what: &'static str, value: f64, bound: f64 },
    #[error("invertibility gate: min |w_00| on [3rho/4, 1] is {min:e}, below {bound:e}")]
    Gate { min: f64, bound: f64 },
    #[error("Feshbach pair gate: {0}")]
    Pair(String),
    #[error("Neumann tail bound {tail:e} above {tol:e} at depth {depth}")]
    Tail { tail: f64, tol: f64, depth: usize },
    #[error("energy map: {0}")]
    Energy(String),
    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<RgError> },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dilation(#[from] DilationError),
}
