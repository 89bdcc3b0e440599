use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

/// Stacks the columns of `a`: entry `k·rows + i` is `a[i, k]`.
pub fn vec(a: &Matrix) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Inverse of [`vec`]: fills a `rows × cols` matrix column by column.
pub fn reshape(v: &[f64], rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(Error::size(
            "reshape",
            format!("length {} cannot fill {rows}x{cols}", v.len()),
        ));
    }
    Matrix::from_col_major(rows, cols, v.to_vec())
}

/// Kronecker product of two vectors: entry `i·len(b) + j` is `a[i]·b[j]`.
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

fn kron_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let m = b.len();
    for (i, &x) in a.iter().enumerate() {
        for (o, &y) in out[i * m..(i + 1) * m].iter_mut().zip(b) {
            *o = x * y;
        }
    }
}

/// Column-wise Kronecker product: column `i` is `kron(u_i, v_i)`.
pub fn khatri_rao(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    if u.cols() != v.cols() {
        return Err(Error::size(
            "khatri_rao",
            format!("{} vs {} columns", u.cols(), v.cols()),
        ));
    }
    let (n, m) = (u.rows(), v.rows());
    let mut out = Matrix::zeros(n * m, u.cols());
    for j in 0..u.cols() {
        kron_into(u.col(j), v.col(j), out.col_mut(j));
    }
    Ok(out)
}

/// `(A − Aᵀ) / 2`.
pub fn skew(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::size("skew", format!("non-square {:?}", a.shape())));
    }
    let mut s = Matrix::zeros(a.rows(), a.cols());
    for j in 0..a.cols() {
        for i in 0..j {
            let x = 0.5 * (a[(i, j)] - a[(j, i)]);
            s[(i, j)] = x;
            s[(j, i)] = -x;
        }
    }
    Ok(s)
}

/// `Σ A[i,j]·B[i,j]`.
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::size(
            "frobenius_inner",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(super::dot(a.as_slice(), b.as_slice()))
}

fn split_blocks(op: &'static str, w: &[f64], other_rows: usize, cols: usize) -> Result<usize> {
    let stride = other_rows * cols;
    if stride == 0 || !w.len().is_multiple_of(stride) {
        return Err(Error::size(
            op,
            format!("length {} is not a multiple of {other_rows}·{cols}", w.len()),
        ));
    }
    Ok(w.len() / stride)
}

/// Applies `Mᵀ` where `vec(X ⊙ V) = M vec(X)`, without forming `M`.
///
/// `w` holds `N` segments of length `n·m`; segment `i` viewed as an `m × n`
/// matrix `Wᵢ` contributes `Wᵢᵀ vᵢ` as block `i` of the result. `n` is
/// inferred from `len(w) / (m·N)`.
pub fn apply_m_transpose(v: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    let (m, cols) = v.shape();
    let n = split_blocks("apply_m_transpose", w, m, cols)?;
    let mut out = vec![0.0; n * cols];
    for i in 0..cols {
        let seg = &w[i * n * m..(i + 1) * n * m];
        let vi = v.col(i);
        for (a, o) in out[i * n..(i + 1) * n].iter_mut().enumerate() {
            *o = super::dot(&seg[a * m..(a + 1) * m], vi);
        }
    }
    Ok(out)
}

/// Applies `Nᵀ` where `vec(U ⊙ Y) = N vec(Y)`, without forming `N`.
///
/// Block `i` of the result is `Wᵢ uᵢ` with `Wᵢ` the `m × n` view of segment `i`.
pub fn apply_n_transpose(u: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    let (n, cols) = u.shape();
    let m = split_blocks("apply_n_transpose", w, n, cols)?;
    let mut out = vec![0.0; m * cols];
    for i in 0..cols {
        let seg = &w[i * n * m..(i + 1) * n * m];
        let dst = &mut out[i * m..(i + 1) * m];
        for (a, &ua) in u.col(i).iter().enumerate() {
            for (o, &x) in dst.iter_mut().zip(&seg[a * m..(a + 1) * m]) {
                *o += ua * x;
            }
        }
    }
    Ok(out)
}

/// Dense `M = blockdiag(I_n ⊗ vᵢ)` of size `nmN × nN`. Reference only; the
/// gradient uses [`apply_m_transpose`].
pub fn build_m_explicit(v: &Matrix, n: usize) -> Matrix {
    let (m, cols) = v.shape();
    let mut out = Matrix::zeros(n * m * cols, n * cols);
    for i in 0..cols {
        for a in 0..n {
            for b in 0..m {
                out[(i * n * m + a * m + b, i * n + a)] = v[(b, i)];
            }
        }
    }
    out
}

/// Dense `N = blockdiag(uᵢ ⊗ I_m)` of size `nmN × mN`. Reference only.
pub fn build_n_explicit(u: &Matrix, m: usize) -> Matrix {
    let (n, cols) = u.shape();
    let mut out = Matrix::zeros(n * m * cols, m * cols);
    for i in 0..cols {
        for a in 0..n {
            for b in 0..m {
                out[(i * n * m + a * m + b, i * m + b)] = u[(a, i)];
            }
        }
    }
    out
}
