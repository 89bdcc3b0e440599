//! The descent flow
//!
//! ```text
//! dθᵢ/dt = −(eᵢ − ē)
//! dU/dt  = −2·skew((∂F/∂U) Uᵀ) U
//! dV/dt  = −2·skew((∂F/∂V) Vᵀ) V
//! ```
//!
//! integrated with an embedded Dormand–Prince 4(5) pair. Weights that decay to
//! the discard threshold are removed together with their columns.

mod config;
mod dopri;
mod integrate;
mod rhs;
mod state;
mod trajectory;

pub use config::FlowConfig;
pub use dopri::{DenseStep, DormandPrince, StepControl};
pub use integrate::integrate;
pub use rhs::rhs;
pub use state::{FlowDims, FlowState};
pub use trajectory::{Event, EventKind, Sample, Termination, Trajectory};
