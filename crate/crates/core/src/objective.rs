//! The objective `F(U, V, θ) = ½‖ρ − (U⊙V) diag(θ) (U⊙V)ᵀ‖²_F` and its
//! derivatives.
//!
//! With `K = U⊙V`, `Σ = diag(θ)` and `D = ρKΣ − KΣ²`, the Euclidean partials
//! are
//!
//! ```text
//! ∂F/∂U = −2·reshape(Mᵀ vec D, n, N)      vec(X⊙V) = M vec X
//! ∂F/∂V = −2·reshape(Nᵀ vec D, m, N)      vec(U⊙Y) = N vec Y
//! ∂F/∂θᵢ = eᵢ = θᵢ − zᵢᵀ ρ zᵢ               zᵢ = xᵢ ⊗ yᵢ
//! ```
//!
//! The `Σ²` and `eᵢ` forms use `KᵀK = I`, which holds whenever `U` and `V`
//! have orthonormal columns. During integration that is true only up to the
//! drift tolerance of the flow.

use alloc::format;
use alloc::vec::Vec;

// Unused when a dependency links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::states::DensityMatrix;
use crate::stiefel::{self, StiefelPoint};

/// Tolerance on `|Σθ − 1|` accepted by [`CCFactorization::new`].
pub const SIMPLEX_TOL: f64 = 1e-10;

/// A candidate classical-classical state `(U⊙V) diag(θ) (U⊙V)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CCFactorization {
    u: StiefelPoint,
    v: StiefelPoint,
    theta: Vec<f64>,
}

impl CCFactorization {
    pub fn new(u: StiefelPoint, v: StiefelPoint, theta: Vec<f64>) -> Result<Self> {
        let rank = u.shape().1;
        if v.shape().1 != rank || theta.len() != rank {
            return Err(Error::size(
                "CCFactorization",
                format!(
                    "U has {rank} columns, V has {}, theta has {} entries",
                    v.shape().1,
                    theta.len()
                ),
            ));
        }
        check_simplex(&theta)?;
        Ok(CCFactorization { u, v, theta })
    }

    pub fn u(&self) -> &StiefelPoint {
        &self.u
    }

    pub fn v(&self) -> &StiefelPoint {
        &self.v
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Dimension of the first factor space.
    pub fn n(&self) -> usize {
        self.u.shape().0
    }

    /// Dimension of the second factor space.
    pub fn m(&self) -> usize {
        self.v.shape().0
    }

    /// Number of product terms.
    pub fn rank(&self) -> usize {
        self.theta.len()
    }

    pub fn into_parts(self) -> (StiefelPoint, StiefelPoint, Vec<f64>) {
        (self.u, self.v, self.theta)
    }

    /// Reorders the product terms; `order` must be a permutation.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = alloc::vec![false; self.rank()];
        for &i in order {
            if i >= self.rank() || core::mem::replace(&mut seen[i], true) {
                return Err(Error::size("permuted", format!("{order:?} is not a permutation")));
            }
        }
        if order.len() != self.rank() {
            return Err(Error::size("permuted", format!("{order:?} is not a permutation")));
        }
        Ok(CCFactorization {
            u: self.u.select_cols(order),
            v: self.v.select_cols(order),
            theta: order.iter().map(|&i| self.theta[i]).collect(),
        })
    }
}

pub(crate) fn check_simplex(theta: &[f64]) -> Result<()> {
    if let Some(&bad) = theta.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::Validation {
            invariant: "theta in (0, 1]",
            value: bad,
            tolerance: 0.0,
        });
    }
    let dev = (theta.iter().sum::<f64>() - 1.0).abs();
    if !(dev <= SIMPLEX_TOL) {
        return Err(Error::Validation {
            invariant: "theta sums to one",
            value: dev,
            tolerance: SIMPLEX_TOL,
        });
    }
    Ok(())
}

/// Derivatives of `F` at a factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub du: Matrix,
    pub dv: Matrix,
    pub dtheta: Vec<f64>,
    pub value: f64,
}

impl GradientBundle {
    pub fn norm(&self) -> f64 {
        let t: f64 = self.dtheta.iter().map(|x| x * x).sum();
        (self.du.frobenius_norm().powi(2) + self.dv.frobenius_norm().powi(2) + t).sqrt()
    }
}

/// `Σᵢ θᵢ zᵢzᵢᵀ` from the columns `zᵢ` of `k`; exactly symmetric.
pub(crate) fn weighted_gram(k: &Matrix, theta: &[f64]) -> Matrix {
    let d = k.rows();
    let mut s = Matrix::zeros(d, d);
    for b in 0..d {
        for a in 0..=b {
            let mut acc = 0.0;
            for (i, &t) in theta.iter().enumerate() {
                let z = k.col(i);
                acc += t * z[a] * z[b];
            }
            s[(a, b)] = acc;
            s[(b, a)] = acc;
        }
    }
    s
}

/// `(U⊙V) diag(θ) (U⊙V)ᵀ`.
pub fn cc_state(f: &CCFactorization) -> Matrix {
    let k = linalg::khatri_rao(f.u.as_matrix(), f.v.as_matrix()).expect("column counts agree");
    weighted_gram(&k, &f.theta)
}

fn check_dims(rho: &DensityMatrix, n: usize, m: usize) -> Result<()> {
    if rho.dims() != (n, m) {
        return Err(Error::size(
            "objective",
            format!("state on {:?} but factorization on ({n}, {m})", rho.dims()),
        ));
    }
    Ok(())
}

/// `½‖ρ − σ‖²_F` with `σ` formed from raw factors.
pub(crate) fn value_raw(rho: &Matrix, u: &Matrix, v: &Matrix, theta: &[f64]) -> Result<f64> {
    let k = linalg::khatri_rao(u, v)?;
    let sigma = weighted_gram(&k, theta);
    Ok(0.5 * rho.sub(&sigma)?.frobenius_norm().powi(2))
}

/// `½‖ρ − cc_state(f)‖²_F`.
pub fn objective_value(rho: &DensityMatrix, f: &CCFactorization) -> Result<f64> {
    check_dims(rho, f.n(), f.m())?;
    value_raw(rho.as_matrix(), f.u.as_matrix(), f.v.as_matrix(), &f.theta)
}

/// Intermediate quantities of one gradient evaluation on raw factors.
pub(crate) struct Partials {
    /// `M̃ − M̂`, shape `n × N`.
    pub m_diff: Matrix,
    /// `Ñ − N̂`, shape `m × N`.
    pub n_diff: Matrix,
    /// `eᵢ = θᵢ − zᵢᵀρzᵢ`.
    pub e: Vec<f64>,
}

impl Partials {
    pub fn du(&self) -> Matrix {
        self.m_diff.scale(-2.0)
    }

    pub fn dv(&self) -> Matrix {
        self.n_diff.scale(-2.0)
    }
}

pub(crate) fn partials_raw(rho: &Matrix, u: &Matrix, v: &Matrix, theta: &[f64]) -> Result<Partials> {
    let (n, m, rank) = (u.rows(), v.rows(), theta.len());
    let k = linalg::khatri_rao(u, v)?;
    let p = rho.matmul(&k)?;
    let mut d = Matrix::zeros(n * m, rank);
    let mut e = Vec::with_capacity(rank);
    for (i, &t) in theta.iter().enumerate() {
        let (z, pz) = (k.col(i), p.col(i));
        e.push(t - linalg::dot(z, pz));
        for ((dst, &a), &b) in d.col_mut(i).iter_mut().zip(pz).zip(z) {
            *dst = t * (a - t * b);
        }
    }
    let w = d.as_slice();
    Ok(Partials {
        m_diff: Matrix::from_col_major(n, rank, linalg::apply_m_transpose(v, w)?)?,
        n_diff: Matrix::from_col_major(m, rank, linalg::apply_n_transpose(u, w)?)?,
        e,
    })
}

/// Euclidean partial derivatives of `F` and its value.
pub fn gradient(rho: &DensityMatrix, f: &CCFactorization) -> Result<GradientBundle> {
    check_dims(rho, f.n(), f.m())?;
    let (u, v) = (f.u.as_matrix(), f.v.as_matrix());
    let parts = partials_raw(rho.as_matrix(), u, v, &f.theta)?;
    Ok(GradientBundle {
        du: parts.du(),
        dv: parts.dv(),
        dtheta: parts.e,
        value: value_raw(rho.as_matrix(), u, v, &f.theta)?,
    })
}

/// Same as [`gradient`] but applies dense `Mᵀ` and `Nᵀ` matrices. Quadratic
/// in memory; kept as a reference for validating the implicit path.
pub fn gradient_explicit(rho: &DensityMatrix, f: &CCFactorization) -> Result<GradientBundle> {
    check_dims(rho, f.n(), f.m())?;
    let (u, v, theta) = (f.u.as_matrix(), f.v.as_matrix(), &f.theta);
    let (n, m, rank) = (f.n(), f.m(), f.rank());
    let k = linalg::khatri_rao(u, v)?;
    let rho_k_sigma = rho.as_matrix().matmul(&k)?.scale_cols(theta)?;
    let sq: Vec<f64> = theta.iter().map(|t| t * t).collect();
    let k_sigma2 = k.scale_cols(&sq)?;
    let tilde = Matrix::column_vector(&linalg::vec(&rho_k_sigma));
    let hat = Matrix::column_vector(&linalg::vec(&k_sigma2));

    let big_m = linalg::build_m_explicit(v, n);
    let big_n = linalg::build_n_explicit(u, m);
    let m_tilde = linalg::reshape(big_m.tr_matmul(&tilde)?.as_slice(), n, rank)?;
    let m_hat = linalg::reshape(big_m.tr_matmul(&hat)?.as_slice(), n, rank)?;
    let n_tilde = linalg::reshape(big_n.tr_matmul(&tilde)?.as_slice(), m, rank)?;
    let n_hat = linalg::reshape(big_n.tr_matmul(&hat)?.as_slice(), m, rank)?;

    let dtheta = (0..rank)
        .map(|i| {
            let z = k.col(i);
            let rz = rho.as_matrix().matmul(&Matrix::column_vector(z)).expect("shapes agree");
            theta[i] - linalg::dot(z, rz.as_slice())
        })
        .collect();
    Ok(GradientBundle {
        du: m_tilde.sub(&m_hat)?.scale(-2.0),
        dv: n_tilde.sub(&n_hat)?.scale(-2.0),
        dtheta,
        value: value_raw(rho.as_matrix(), u, v, theta)?,
    })
}

/// Canonical-metric Riemannian gradients for `U` and `V`, and the raw
/// residuals `eᵢ` for `θ`. The flow centres `e` with [`centered`] and negates
/// everything.
pub fn riemannian_bundle(rho: &DensityMatrix, f: &CCFactorization) -> Result<GradientBundle> {
    let g = gradient(rho, f)?;
    Ok(GradientBundle {
        du: stiefel::riemannian_gradient(&g.du, &f.u)?,
        dv: stiefel::riemannian_gradient(&g.dv, &f.v)?,
        dtheta: g.dtheta,
        value: g.value,
    })
}

/// `x − mean(x)`.
pub fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

pub(crate) fn stationarity_raw(u: &Matrix, v: &Matrix, parts: &Partials) -> Result<f64> {
    let asym = |y: &Matrix, d: &Matrix| -> Result<f64> {
        let a = y.tr_matmul(d)?;
        Ok(a.sub(&a.transpose())?.frobenius_norm())
    };
    let ru = asym(u, &parts.m_diff)?;
    let rv = asym(v, &parts.n_diff)?;
    let rt = linalg::norm2(&centered(&parts.e));
    Ok(ru.max(rv).max(rt))
}

/// Largest of `‖Uᵀ(M̃−M̂) − (M̃−M̂)ᵀU‖_F`, `‖Vᵀ(Ñ−N̂) − (Ñ−N̂)ᵀV‖_F` and
/// `‖e − ē·1‖₂`. Zero exactly at stationary points of the flow.
pub fn stationarity_residual(rho: &DensityMatrix, f: &CCFactorization) -> Result<f64> {
    check_dims(rho, f.n(), f.m())?;
    let (u, v) = (f.u.as_matrix(), f.v.as_matrix());
    let parts = partials_raw(rho.as_matrix(), u, v, &f.theta)?;
    stationarity_raw(u, v, &parts)
}
