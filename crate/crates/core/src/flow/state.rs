use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objective::CCFactorization;
use crate::stiefel::StiefelPoint;

/// `(n, m, N)`: factor dimensions and number of product terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowDims {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
}

impl FlowDims {
    pub fn len(&self) -> usize {
        (self.n + self.m + 1) * self.rank
    }

    pub fn is_empty(&self) -> bool {
        self.rank == 0
    }

    pub(crate) fn u_range(&self) -> core::ops::Range<usize> {
        0..self.n * self.rank
    }

    pub(crate) fn v_range(&self) -> core::ops::Range<usize> {
        self.n * self.rank..(self.n + self.m) * self.rank
    }

    pub(crate) fn theta_range(&self) -> core::ops::Range<usize> {
        (self.n + self.m) * self.rank..self.len()
    }
}

/// ODE state vector: `vec(U)`, then `vec(V)`, then `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    dims: FlowDims,
    packed: Vec<f64>,
}

impl FlowState {
    pub fn pack(f: &CCFactorization) -> Self {
        let dims = FlowDims {
            n: f.n(),
            m: f.m(),
            rank: f.rank(),
        };
        let mut packed = Vec::with_capacity(dims.len());
        packed.extend_from_slice(f.u().as_matrix().as_slice());
        packed.extend_from_slice(f.v().as_matrix().as_slice());
        packed.extend_from_slice(f.theta());
        FlowState { dims, packed }
    }

    pub fn from_packed(dims: FlowDims, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != dims.len() {
            return Err(Error::size(
                "FlowState",
                format!("{} entries for dims {dims:?} (expected {})", packed.len(), dims.len()),
            ));
        }
        Ok(FlowState { dims, packed })
    }

    pub fn dims(&self) -> FlowDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.packed
    }

    pub fn theta(&self) -> &[f64] {
        &self.packed[self.dims.theta_range()]
    }

    pub(crate) fn u_matrix(&self) -> Matrix {
        raw_u(self.dims, &self.packed)
    }

    pub(crate) fn v_matrix(&self) -> Matrix {
        raw_v(self.dims, &self.packed)
    }

    /// Rebuilds the factorization, requiring orthonormality residuals of at
    /// most `drift_tol` and `θ` on the simplex.
    pub fn unpack(&self, drift_tol: f64) -> Result<CCFactorization> {
        let u = StiefelPoint::with_tolerance(self.u_matrix(), drift_tol)?;
        let v = StiefelPoint::with_tolerance(self.v_matrix(), drift_tol)?;
        CCFactorization::new(u, v, self.theta().to_vec())
    }
}

pub(crate) fn raw_u(d: FlowDims, y: &[f64]) -> Matrix {
    Matrix::from_col_major(d.n, d.rank, y[d.u_range()].to_vec()).unwrap_or_else(|_| nan_matrix(d.n, d.rank))
}

pub(crate) fn raw_v(d: FlowDims, y: &[f64]) -> Matrix {
    Matrix::from_col_major(d.m, d.rank, y[d.v_range()].to_vec()).unwrap_or_else(|_| nan_matrix(d.m, d.rank))
}

// Non-finite entries are reported by the caller's finiteness check.
fn nan_matrix(r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| f64::NAN)
}
