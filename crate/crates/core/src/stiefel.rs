//! Geometry of the Stiefel manifold `S_{p,N} = { Y ∈ ℝ^{p×N} : YᵀY = I }`
//! under the canonical metric `⟨X₁, (I − ½YYᵀ)X₂⟩`.

use alloc::format;

// Unused when a dependency links std.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::standard_normal;

/// Orthonormality tolerance applied by [`StiefelPoint::new`].
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// A matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint(Matrix);

impl StiefelPoint {
    pub fn new(value: Matrix) -> Result<Self> {
        Self::with_tolerance(value, CONSTRUCTION_TOL)
    }

    /// Accepts `value` if `‖valueᵀvalue − I‖_F ≤ tol`.
    pub fn with_tolerance(value: Matrix, tol: f64) -> Result<Self> {
        if value.rows() < value.cols() {
            return Err(Error::size(
                "StiefelPoint",
                format!("{:?} has more columns than rows", value.shape()),
            ));
        }
        let residual = value.orthonormality_residual();
        if !(residual <= tol) {
            return Err(Error::Validation {
                invariant: "orthonormal columns",
                value: residual,
                tolerance: tol,
            });
        }
        Ok(StiefelPoint(value))
    }

    #[inline]
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `(p, N)`.
    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.0.orthonormality_residual()
    }

    pub fn select_cols(&self, keep: &[usize]) -> StiefelPoint {
        StiefelPoint(self.0.select_cols(keep))
    }
}

/// Draws a point by orthonormalising a `p × N` standard-normal matrix, with
/// the triangular factor's diagonal positive. Deterministic for a given
/// generator state.
pub fn random_stiefel<R: Rng + ?Sized>(p: usize, cols: usize, rng: &mut R) -> Result<StiefelPoint> {
    if p < cols || cols == 0 {
        return Err(Error::size(
            "random_stiefel",
            format!("need p >= N >= 1, got p = {p}, N = {cols}"),
        ));
    }
    loop {
        let g = Matrix::from_fn(p, cols, |_, _| standard_normal(rng));
        // Dependent Gaussian columns have probability zero; redraw if it happens.
        if let Ok((q, _)) = linalg::gram_schmidt_qr(&g) {
            return Ok(StiefelPoint(q));
        }
    }
}

/// Canonical-metric Riemannian gradient `2·skew(G·Yᵀ)·Y`.
///
/// Evaluated as `(G·Yᵀ − Y·Gᵀ)·Y`, a skew-symmetric matrix acting on `Y`, so
/// the induced flow `Ẏ = −ΩY` preserves `YᵀY` exactly even off the manifold.
pub fn riemannian_gradient(euclidean_grad: &Matrix, y: &StiefelPoint) -> Result<Matrix> {
    let y = y.as_matrix();
    if euclidean_grad.shape() != y.shape() {
        return Err(Error::size(
            "riemannian_gradient",
            format!("gradient {:?} vs point {:?}", euclidean_grad.shape(), y.shape()),
        ));
    }
    skew_action(euclidean_grad, y)
}

// (G Yᵀ − Y Gᵀ) Y computed as G (YᵀY) − Y (GᵀY), which avoids the p × p product.
pub(crate) fn skew_action(g: &Matrix, y: &Matrix) -> Result<Matrix> {
    let yty = y.tr_matmul(y)?;
    let gty = g.tr_matmul(y)?;
    g.matmul(&yty)?.sub(&y.matmul(&gty)?)
}

/// `‖XᵀY + YᵀX‖_F`; zero exactly on the tangent space at `Y`.
pub fn tangency_residual(x: &Matrix, y: &StiefelPoint) -> Result<f64> {
    let y = y.as_matrix();
    if x.shape() != y.shape() {
        return Err(Error::size(
            "tangency_residual",
            format!("{:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    let xty = x.tr_matmul(y)?;
    Ok(xty.add(&xty.transpose())?.frobenius_norm())
}

/// Frobenius-nearest matrix with orthonormal columns: the orthogonal polar
/// factor of `y`.
pub fn reorthonormalize(y: &Matrix) -> Result<StiefelPoint> {
    let q = linalg::polar_factor(y).map_err(|e| match e {
        Error::Degenerate { detail, .. } => Error::Degenerate { op: "reorthonormalize", detail },
        Error::Size { detail, .. } => Error::Size { op: "reorthonormalize", detail },
        e => e,
    })?;
    Ok(StiefelPoint(q))
}
