use alloc::format;
use alloc::vec::Vec;

// Unused when a dependency links std.
#[allow(unused_imports)]
use num_traits::Float;

use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Thin QR by modified Gram-Schmidt with one reorthogonalisation pass.
///
/// Returns `(Q, R)` with `Q` of shape `p × N`, `R` upper triangular and
/// `diag(R) > 0`. Fails when a column is (numerically) dependent on the
/// previous ones.
pub fn gram_schmidt_qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (p, cols) = a.shape();
    if p < cols {
        return Err(Error::size(
            "gram_schmidt_qr",
            format!("{p} rows cannot hold {cols} orthonormal columns"),
        ));
    }
    let mut q = a.clone();
    let mut r = Matrix::zeros(cols, cols);
    for j in 0..cols {
        let original = super::norm2(a.col(j));
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = q.as_mut_slice().split_at_mut(j * p);
                let qk = &done[k * p..(k + 1) * p];
                let qj = &mut rest[..p];
                let c = dot(qk, qj);
                r[(k, j)] += c;
                for (x, y) in qj.iter_mut().zip(qk) {
                    *x -= c * y;
                }
            }
        }
        let norm = super::norm2(q.col(j));
        if !(norm > 1e-13 * original.max(f64::MIN_POSITIVE)) {
            return Err(Error::Degenerate {
                op: "gram_schmidt_qr",
                detail: format!("column {j} is linearly dependent"),
            });
        }
        r[(j, j)] = norm;
        q.col_mut(j).iter_mut().for_each(|x| *x /= norm);
    }
    Ok((q, r))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigen-solver for a symmetric matrix. Only the symmetric part
/// of `a` is used.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::size("sym_eigen", format!("non-square {:?}", a.shape())));
    }
    let n = a.rows();
    let mut s = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut vecs = Matrix::identity(n);
    let scale = s.frobenius_norm();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += s[(i, j)] * s[(i, j)];
            }
        }
        if off.sqrt() <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for q in 1..n {
            for p in 0..q {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut s, p, q, c, sn);
                for k in 0..n {
                    let vp = vecs[(k, p)];
                    let vq = vecs[(k, q)];
                    vecs[(k, p)] = c * vp - sn * vq;
                    vecs[(k, q)] = sn * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]));
    Ok(SymEigen {
        values: order.iter().map(|&i| s[(i, i)]).collect(),
        vectors: vecs.select_cols(&order),
    })
}

/// Orthogonal polar factor `U·Vᵀ` of a `p × N` matrix (`p >= N`) with SVD
/// `A = U·Σ·Vᵀ`, by one-sided Jacobi.
///
/// Orthogonalising the columns directly keeps the result orthonormal to
/// rounding level even for ill-conditioned `A`, unlike `A·(AᵀA)^{-1/2}` whose
/// error grows with the square of the condition number. Fails when
/// `σ_min <= 1e-12·σ_max`.
pub fn polar_factor(a: &Matrix) -> Result<Matrix> {
    let (p, n) = a.shape();
    if p < n {
        return Err(Error::size("polar_factor", format!("{:?} has more columns than rows", a.shape())));
    }
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for j in 1..n {
            for i in 0..j {
                let alpha = dot(w.col(i), w.col(i));
                let beta = dot(w.col(j), w.col(j));
                let gamma = dot(w.col(i), w.col(j));
                if !(gamma.abs() > f64::EPSILON * (alpha * beta).sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate_cols(&mut w, i, j, c, sn);
                rotate_cols(&mut v, i, j, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j)).sqrt()).collect();
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    let smallest = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if !(largest > 0.0) || !(smallest > largest * 1e-12) {
        return Err(Error::Degenerate {
            op: "polar_factor",
            detail: format!("rank-deficient input, singular values in [{smallest:e}, {largest:e}]"),
        });
    }
    for (j, s) in sigma.iter().enumerate() {
        w.col_mut(j).iter_mut().for_each(|x| *x /= s);
    }
    w.matmul(&v.transpose())
}

// Rotates columns `i` and `j` in place.
fn rotate_cols(a: &mut Matrix, i: usize, j: usize, c: f64, sn: f64) {
    for k in 0..a.rows() {
        let x = a[(k, i)];
        let y = a[(k, j)];
        a[(k, i)] = c * x - sn * y;
        a[(k, j)] = sn * x + c * y;
    }
}

// Applies Jᵀ S J for the Jacobi rotation in the (p, q) plane.
fn rotate(s: &mut Matrix, p: usize, q: usize, c: f64, sn: f64) {
    let n = s.rows();
    for k in 0..n {
        let skp = s[(k, p)];
        let skq = s[(k, q)];
        s[(k, p)] = c * skp - sn * skq;
        s[(k, q)] = sn * skp + c * skq;
    }
    for k in 0..n {
        let spk = s[(p, k)];
        let sqk = s[(q, k)];
        s[(p, k)] = c * spk - sn * sqk;
        s[(q, k)] = sn * spk + c * sqk;
    }
}
