use crate::error::{Error, Result};

/// Tolerances and limits for [`integrate`](super::integrate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_max: f64,
    /// Stop once the norm of the flow velocity is at or below this value.
    pub grad_tol: f64,
    /// A weight at or below this value is discarded.
    pub discard_eps: f64,
    /// Reorthonormalise `U` or `V` when `‖YᵀY − I‖_F` exceeds this value.
    pub drift_tol: f64,
    /// Record every `record_stride`-th accepted step. Event and final states
    /// are always recorded.
    pub record_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            t_max: 5000.0,
            grad_tol: 1e-10,
            discard_eps: 1e-10,
            drift_tol: 1e-8,
            record_stride: 1,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("abs_tol > 0", self.abs_tol),
            ("rel_tol > 0", self.rel_tol),
            ("t_max > 0", self.t_max),
            ("grad_tol > 0", self.grad_tol),
            ("discard_eps > 0", self.discard_eps),
            ("drift_tol > 0", self.drift_tol),
        ];
        for (invariant, value) in checks {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Validation {
                    invariant,
                    value,
                    tolerance: 0.0,
                });
            }
        }
        if self.record_stride == 0 {
            return Err(Error::Validation {
                invariant: "record_stride >= 1",
                value: 0.0,
                tolerance: 1.0,
            });
        }
        Ok(())
    }

    /// Allowed increase of the objective between consecutive samples.
    pub fn descent_slack(&self, objective: f64) -> f64 {
        10.0 * self.abs_tol.max(self.rel_tol * objective)
    }
}
