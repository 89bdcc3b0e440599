//! Nearest classical-classical state to a real bipartite density matrix.
//!
//! A candidate classical-classical state is parameterised as
//! `(U ⊙ V) diag(θ) (U ⊙ V)ᵀ` with `U`, `V` on Stiefel manifolds and `θ` on the
//! probability simplex. [`flow::integrate`] drives `(U, V, θ)` along the
//! negative Riemannian gradient of `½‖ρ − σ‖²_F` while the mean-centred
//! `θ`-flow keeps `Σθ = 1`; weights that decay to zero are discarded, which
//! lets the candidate rank shrink during the run.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command line
//! and parallel restarts live in the `qnflow` companion crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x <= tol)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod flow;
pub mod linalg;
pub mod objective;
pub mod rng;
pub mod states;
pub mod stiefel;

pub use error::{Error, Result};
pub use flow::{integrate, FlowConfig, FlowState, Termination, Trajectory};
pub use linalg::Matrix;
pub use objective::{CCFactorization, GradientBundle};
pub use states::{DensityMatrix, QuantumnessResult};
pub use stiefel::StiefelPoint;

#[cfg(test)]
pub(crate) mod testutil {
    use alloc::vec::Vec;
    // Unused when a dependency links std.
    #[allow(unused_imports)]
    use num_traits::Float;
    use rand::Rng;

    use crate::linalg::Matrix;
    use crate::rng::{stream, StreamRng};

    pub fn test_rng(id: u64) -> StreamRng {
        stream(0x5eed, id)
    }

    pub fn rand_vec(rng: &mut StreamRng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    pub fn rand_matrix(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_col_major(rows, cols, rand_vec(rng, rows * cols)).unwrap()
    }

    /// `‖a − b‖ / max(‖b‖, 1e-300)`.
    pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let base: f64 = b.iter().map(|y| y * y).sum();
        diff.sqrt() / base.sqrt().max(1e-300)
    }
}
