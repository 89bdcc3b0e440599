use alloc::boxed::Box;
use alloc::string::String;

use crate::flow::Trajectory;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("size mismatch in {op}: {detail}")]
    Size { op: &'static str, detail: String },

    #[error("degenerate input in {op}: {detail}")]
    Degenerate { op: &'static str, detail: String },

    /// An invariant check failed. `value` is the measured quantity and
    /// `tolerance` the bound it had to meet.
    #[error("invariant `{invariant}` violated: value {value:e}, tolerance {tolerance:e}")]
    Validation {
        invariant: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("non-finite value in {context} at t = {t}")]
    NonFinite {
        context: &'static str,
        t: f64,
        /// Samples and events recorded up to the last finite state.
        trajectory: Option<Box<Trajectory>>,
    },

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: &'static str },

    #[error("all {restarts} restarts failed; first error: {first}")]
    AllRestartsFailed { restarts: usize, first: Box<Error> },
}

impl Error {
    pub(crate) fn size(op: &'static str, detail: String) -> Self {
        Error::Size { op, detail }
    }
}
