use alloc::vec;
use alloc::vec::Vec;

use super::state::{raw_u, raw_v, FlowDims, FlowState};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objective::{centered, partials_raw, Partials};
use crate::states::DensityMatrix;
use crate::stiefel::skew_action;

/// Velocity of the descent flow at `state`, packed like the state.
pub fn rhs(state: &FlowState, rho: &DensityMatrix) -> Result<Vec<f64>> {
    let dims = state.dims();
    if rho.dims() != (dims.n, dims.m) {
        return Err(Error::size(
            "rhs",
            alloc::format!("state on {:?} but flow on ({}, {})", rho.dims(), dims.n, dims.m),
        ));
    }
    let mut out = vec![0.0; dims.len()];
    eval(rho.as_matrix(), dims, state.as_slice(), &mut out)?;
    Ok(out)
}

/// Writes the velocity at `y` into `out` and returns the partials it used.
pub(crate) fn eval(rho: &Matrix, dims: FlowDims, y: &[f64], out: &mut [f64]) -> Result<Partials> {
    let u = raw_u(dims, y);
    let v = raw_v(dims, y);
    let theta = &y[dims.theta_range()];
    let parts = partials_raw(rho, &u, &v, theta)?;

    let vu = skew_action(&parts.du(), &u)?;
    let vv = skew_action(&parts.dv(), &v)?;
    for (o, x) in out[dims.u_range()].iter_mut().zip(vu.as_slice()) {
        *o = -x;
    }
    for (o, x) in out[dims.v_range()].iter_mut().zip(vv.as_slice()) {
        *o = -x;
    }
    for (o, x) in out[dims.theta_range()].iter_mut().zip(centered(&parts.e)) {
        *o = -x;
    }
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite {
            context: "flow velocity",
            t: f64::NAN,
            trajectory: None,
        });
    }
    Ok(parts)
}
