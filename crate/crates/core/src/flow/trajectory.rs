use alloc::vec::Vec;

use super::FlowConfig;

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The flow velocity fell to `grad_tol`.
    Stationarity,
    /// `t` reached `t_max`.
    Horizon,
    /// The step controller asked for a step below `1e-14·t`; the problem is
    /// likely stiff at these tolerances.
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Stationarity => "stationarity",
            Termination::Horizon => "horizon",
            Termination::Stalled => "stalled",
        }
    }
}

impl core::fmt::Display for Termination {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// State summary at one accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub objective: f64,
    pub theta_sum: f64,
    pub theta: Vec<f64>,
    /// Original column index of each entry of `theta`.
    pub slots: Vec<usize>,
    pub ortho_u: f64,
    pub ortho_v: f64,
    /// Euclidean norm of the flow velocity.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    /// Column `slot` (original index) was removed at weight `theta`; the
    /// remaining weights were rescaled by `1 / (1 − removed mass)`.
    Discard { slot: usize, theta: f64, rescale: f64 },
    /// Drift repair; residuals measured before the repair.
    Reorthonormalize { ortho_u: f64, ortho_v: f64 },
    Terminate(Termination),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub initial_rank: usize,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

impl Trajectory {
    pub fn termination(&self) -> Option<Termination> {
        self.events.iter().rev().find_map(|e| match e.kind {
            EventKind::Terminate(r) => Some(r),
            _ => None,
        })
    }

    pub fn discard_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Discard { .. })).count()
    }

    pub fn repair_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Reorthonormalize { .. }))
            .count()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// `max |Σθ(t) − 1|` over all samples.
    pub fn max_theta_sum_deviation(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max((s.theta_sum - 1.0).abs()))
    }

    /// Largest orthonormality residual of `U` or `V` over all samples.
    pub fn max_ortho_residual(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.ortho_u).max(s.ortho_v))
    }

    /// First sample index `k` with `objective[k] > objective[k−1] + slack`.
    pub fn first_ascent(&self, cfg: &FlowConfig) -> Option<usize> {
        self.samples
            .windows(2)
            .position(|w| w[1].objective > w[0].objective + cfg.descent_slack(w[0].objective))
            .map(|k| k + 1)
    }
}
