use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use super::dopri::{DenseStep, DormandPrince, StepControl};
use super::rhs::eval;
use super::state::{raw_u, raw_v, FlowDims, FlowState};
use super::trajectory::{Event, EventKind, Sample, Termination, Trajectory};
use super::FlowConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::objective::{value_raw, CCFactorization};
use crate::states::DensityMatrix;
use crate::stiefel;

const BISECTION_STEPS: usize = 80;

/// Integrates the descent flow from `init` until the velocity norm reaches
/// `cfg.grad_tol`, `t` reaches `cfg.t_max`, or the step size stalls.
///
/// Weights crossing `cfg.discard_eps` are located by bisection on the dense
/// output; the column is removed from `U` and `V` and the remaining weights
/// are rescaled to sum to one. `U` and `V` are repaired by polar
/// decomposition if their orthonormality residual exceeds `cfg.drift_tol`.
pub fn integrate(
    rho: &DensityMatrix,
    init: &CCFactorization,
    cfg: &FlowConfig,
) -> Result<(CCFactorization, Trajectory)> {
    cfg.validate()?;
    if rho.dims() != (init.n(), init.m()) {
        return Err(Error::size(
            "integrate",
            format!("state on {:?} but factorization on ({}, {})", rho.dims(), init.n(), init.m()),
        ));
    }
    let mut run = Run {
        rho: rho.as_matrix(),
        cfg,
        dims: FlowState::pack(init).dims(),
        slots: (0..init.rank()).collect(),
        traj: Trajectory {
            initial_rank: init.rank(),
            ..Trajectory::default()
        },
    };
    match run.drive(FlowState::pack(init).as_slice().to_vec()) {
        Ok(y) => {
            let state = FlowState::from_packed(run.dims, y)?;
            Ok((state.unpack(cfg.drift_tol)?, run.traj))
        }
        Err(Error::NonFinite { context, t, .. }) => Err(Error::NonFinite {
            context,
            t,
            trajectory: Some(Box::new(run.traj)),
        }),
        Err(e) => Err(e),
    }
}

struct Run<'a> {
    rho: &'a Matrix,
    cfg: &'a FlowConfig,
    dims: FlowDims,
    slots: Vec<usize>,
    traj: Trajectory,
}

impl Run<'_> {
    fn drive(&mut self, y0: Vec<f64>) -> Result<Vec<f64>> {
        let cfg = *self.cfg;
        let rho = self.rho;
        let mut y0 = y0;
        self.discard_below_threshold(0.0, &mut y0);

        let mut dp = DormandPrince::new(StepControl::new(cfg.abs_tol, cfg.rel_tol), 0.0, y0);
        let mut grad_norm = self.velocity_norm(&mut dp)?;
        self.record(&dp, grad_norm)?;
        let mut since_record = 0usize;

        let reason = loop {
            if grad_norm <= cfg.grad_tol {
                break Termination::Stationarity;
            }
            if dp.t() >= cfg.t_max {
                break Termination::Horizon;
            }
            let dims = self.dims;
            let mut f = move |y: &[f64], out: &mut [f64]| eval(rho, dims, y, out).map(|_| ());
            let h_min = 1e-14 * dp.t();
            let step = match dp.step(&mut f, cfg.t_max, h_min).map_err(|e| with_time(e, dp.t()))? {
                Some(step) => step,
                None => break Termination::Stalled,
            };
            if !dp.y().iter().all(|x| x.is_finite()) {
                return Err(with_time(
                    Error::NonFinite {
                        context: "flow state",
                        t: f64::NAN,
                        trajectory: None,
                    },
                    dp.t(),
                ));
            }

            let mut event = false;
            if let Some((t_star, y_star)) = self.locate_discard(&step, dp.y()) {
                let mut y_star = y_star;
                self.discard_below_threshold(t_star, &mut y_star);
                dp.reset(t_star, y_star);
                event = true;
            }
            if let Some(repaired) = self.repair_drift(dp.t(), dp.y())? {
                dp.reset(dp.t(), repaired);
                event = true;
            }

            grad_norm = self.velocity_norm(&mut dp)?;
            since_record += 1;
            if event || since_record >= cfg.record_stride || grad_norm <= cfg.grad_tol || dp.t() >= cfg.t_max {
                self.record(&dp, grad_norm)?;
                since_record = 0;
            }
        };

        self.traj.accepted_steps = dp.accepted;
        self.traj.rejected_steps = dp.rejected;
        self.traj.rhs_evals = dp.evals;
        if self.traj.last().map(|s| s.t) != Some(dp.t()) {
            self.record(&dp, grad_norm)?;
        }
        self.traj.events.push(Event {
            t: dp.t(),
            kind: EventKind::Terminate(reason),
        });
        Ok(dp.y().to_vec())
    }

    fn velocity_norm(&self, dp: &mut DormandPrince) -> Result<f64> {
        let (rho, dims) = (self.rho, self.dims);
        let mut f = move |y: &[f64], out: &mut [f64]| eval(rho, dims, y, out).map(|_| ());
        let t = dp.t();
        let v = dp.derivative(&mut f).map_err(|e| with_time(e, t))?;
        Ok(linalg::norm2(v))
    }

    fn record(&mut self, dp: &DormandPrince, grad_norm: f64) -> Result<()> {
        let y = dp.y();
        let u = raw_u(self.dims, y);
        let v = raw_v(self.dims, y);
        let theta = &y[self.dims.theta_range()];
        let sample = Sample {
            t: dp.t(),
            objective: value_raw(self.rho, &u, &v, theta)?,
            theta_sum: theta.iter().sum(),
            theta: theta.to_vec(),
            slots: self.slots.clone(),
            ortho_u: u.orthonormality_residual(),
            ortho_v: v.orthonormality_residual(),
            grad_norm,
        };
        match self.traj.samples.last_mut() {
            // An event at the time of the previous sample replaces it.
            Some(last) if last.t == sample.t => *last = sample,
            _ => self.traj.samples.push(sample),
        }
        Ok(())
    }

    /// Earliest downward crossing of `discard_eps` within the step, if any.
    fn locate_discard(&self, step: &DenseStep, y1: &[f64]) -> Option<(f64, Vec<f64>)> {
        let eps = self.cfg.discard_eps;
        let offset = self.dims.theta_range().start;
        let mut earliest: Option<f64> = None;
        for (i, &th) in y1[self.dims.theta_range()].iter().enumerate() {
            if th > eps {
                continue;
            }
            let idx = offset + i;
            // θ(0) > eps holds because sub-threshold weights are removed
            // before every step.
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if step.component(idx, mid) <= eps {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            earliest = Some(earliest.map_or(hi, |e: f64| e.min(hi)));
        }
        earliest.map(|s| {
            let t = if s >= 1.0 { step.t1() } else { step.t0 + s * step.h };
            (t, if s >= 1.0 { y1.to_vec() } else { step.state(s) })
        })
    }

    /// Removes every column whose weight is at or below `discard_eps`,
    /// smallest first, keeping at least one column.
    fn discard_below_threshold(&mut self, t: f64, y: &mut Vec<f64>) {
        let eps = self.cfg.discard_eps;
        loop {
            let theta = &y[self.dims.theta_range()];
            if theta.len() <= 1 {
                return;
            }
            let Some((i, &removed)) = theta
                .iter()
                .enumerate()
                .filter(|(_, &th)| th <= eps)
                .min_by(|a, b| a.1.total_cmp(b.1))
            else {
                return;
            };
            let keep: Vec<usize> = (0..self.dims.rank).filter(|&j| j != i).collect();
            let u = raw_u(self.dims, y).select_cols(&keep);
            let v = raw_v(self.dims, y).select_cols(&keep);
            let mut theta: Vec<f64> = keep.iter().map(|&j| theta[j]).collect();
            let total: f64 = theta.iter().sum();
            let rescale = 1.0 / total;
            theta.iter_mut().for_each(|x| *x *= rescale);

            let slot = self.slots.remove(i);
            self.dims.rank -= 1;
            y.clear();
            y.extend_from_slice(u.as_slice());
            y.extend_from_slice(v.as_slice());
            y.extend_from_slice(&theta);
            self.traj.events.push(Event {
                t,
                kind: EventKind::Discard {
                    slot,
                    theta: removed,
                    rescale,
                },
            });
        }
    }

    fn repair_drift(&mut self, t: f64, y: &[f64]) -> Result<Option<Vec<f64>>> {
        let u = raw_u(self.dims, y);
        let v = raw_v(self.dims, y);
        let (ou, ov) = (u.orthonormality_residual(), v.orthonormality_residual());
        if ou <= self.cfg.drift_tol && ov <= self.cfg.drift_tol {
            return Ok(None);
        }
        let u = stiefel::reorthonormalize(&u)?;
        let v = stiefel::reorthonormalize(&v)?;
        let mut out = Vec::with_capacity(y.len());
        out.extend_from_slice(u.as_matrix().as_slice());
        out.extend_from_slice(v.as_matrix().as_slice());
        out.extend_from_slice(&y[self.dims.theta_range()]);
        self.traj.events.push(Event {
            t,
            kind: EventKind::Reorthonormalize { ortho_u: ou, ortho_v: ov },
        });
        Ok(Some(out))
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::NonFinite { context, trajectory, .. } => Error::NonFinite { context, t, trajectory },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{objective_value, stationarity_residual};
    use crate::states::{random_cc_state, random_density};
    use crate::stiefel::random_stiefel;
    use crate::testutil::test_rng;
    use alloc::vec;

    #[test]
    fn exact_fit_stops_immediately() {
        let mut rng = test_rng(1);
        let (rho, f) = random_cc_state(4, 3, 2, &mut rng).unwrap();
        let (out, traj) = integrate(&rho, &f, &FlowConfig::default()).unwrap();
        assert_eq!(traj.termination(), Some(Termination::Stationarity));
        assert_eq!(traj.discard_count(), 0);
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.samples[0].t, 0.0);
        assert!(traj.samples[0].grad_norm <= 1e-10);
        assert_eq!(out, f);
    }

    #[test]
    fn short_run_descends_and_keeps_invariants() {
        let mut rng = test_rng(2);
        let rho = random_density(4, 3, 12, &mut rng).unwrap();
        let u = random_stiefel(4, 3, &mut rng).unwrap();
        let v = random_stiefel(3, 3, &mut rng).unwrap();
        let init = CCFactorization::new(u, v, vec![0.5, 0.3, 0.2]).unwrap();
        let cfg = FlowConfig { t_max: 20.0, ..FlowConfig::default() };
        let (out, traj) = integrate(&rho, &init, &cfg).unwrap();
        assert_eq!(traj.termination(), Some(Termination::Horizon));
        assert_eq!(traj.last().unwrap().t, 20.0);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(traj.first_ascent(&cfg), None);
        assert!(traj.max_theta_sum_deviation() <= 1e-10);
        assert!(traj.max_ortho_residual() <= 1e-8);
        assert_eq!(traj.repair_count(), 0);
        assert!(objective_value(&rho, &out).unwrap() <= objective_value(&rho, &init).unwrap());
    }

    #[test]
    fn tiny_initial_weight_is_discarded_at_start() {
        let mut rng = test_rng(3);
        let (rho, f) = random_cc_state(3, 3, 2, &mut rng).unwrap();
        let (u, v, theta) = f.into_parts();
        let extra_u = random_stiefel(3, 3, &mut rng).unwrap();
        // keep the true columns and add a third orthonormal column
        let q = crate::linalg::gram_schmidt_qr(&Matrix::from_fn(3, 3, |i, j| {
            if j < 2 { u.as_matrix()[(i, j)] } else { extra_u.as_matrix()[(i, 0)] }
        }))
        .unwrap()
        .0;
        let q2 = crate::linalg::gram_schmidt_qr(&Matrix::from_fn(3, 3, |i, j| {
            if j < 2 { v.as_matrix()[(i, j)] } else { extra_u.as_matrix()[(i, 1)] }
        }))
        .unwrap()
        .0;
        let w = 1e-12;
        let init = CCFactorization::new(
            crate::StiefelPoint::new(q).unwrap(),
            crate::StiefelPoint::new(q2).unwrap(),
            vec![theta[0] * (1.0 - w), theta[1] * (1.0 - w), w],
        )
        .unwrap();
        let (out, traj) = integrate(&rho, &init, &FlowConfig { t_max: 10.0, ..FlowConfig::default() }).unwrap();
        assert_eq!(traj.discard_count(), 1);
        assert_eq!(traj.events[0].t, 0.0);
        assert!(matches!(traj.events[0].kind, EventKind::Discard { slot: 2, .. }));
        assert_eq!(out.rank(), 2);
        assert_eq!(traj.samples[0].slots, [0, 1]);
    }

    #[test]
    fn stationarity_exit_has_small_residual() {
        let mut rng = test_rng(4);
        let rho = random_density(3, 2, 3, &mut rng).unwrap();
        let u = random_stiefel(3, 2, &mut rng).unwrap();
        let v = random_stiefel(2, 2, &mut rng).unwrap();
        let init = CCFactorization::new(u, v, vec![0.6, 0.4]).unwrap();
        let cfg = FlowConfig { t_max: 1e5, ..FlowConfig::default() };
        let (out, traj) = integrate(&rho, &init, &cfg).unwrap();
        if traj.termination() == Some(Termination::Stationarity) {
            assert!(stationarity_residual(&rho, &out).unwrap() <= 10.0 * cfg.grad_tol);
        }
        assert_eq!(traj.first_ascent(&cfg), None);
    }

    #[test]
    fn invalid_config_and_dims_are_rejected() {
        let mut rng = test_rng(5);
        let (rho, f) = random_cc_state(3, 3, 2, &mut rng).unwrap();
        let bad = FlowConfig { abs_tol: -1.0, ..FlowConfig::default() };
        assert!(matches!(integrate(&rho, &f, &bad), Err(Error::Validation { .. })));
        let other = random_density(2, 4, 8, &mut rng).unwrap();
        assert!(matches!(integrate(&other, &f, &FlowConfig::default()), Err(Error::Size { .. })));
    }
}
