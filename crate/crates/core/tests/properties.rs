use proptest::prelude::*;

use qnflow_core::flow::{rhs, FlowState};
use qnflow_core::linalg::{
    apply_m_transpose, apply_n_transpose, build_m_explicit, build_n_explicit, kron, khatri_rao, reshape, skew, vec,
    Matrix,
};
use qnflow_core::objective::{centered, gradient, riemannian_bundle, CCFactorization};
use qnflow_core::rng::stream;
use qnflow_core::states::{random_density, random_simplex};
use qnflow_core::stiefel::{random_stiefel, reorthonormalize, riemannian_gradient, tangency_residual};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |data| Matrix::from_col_major(rows, cols, data).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

/// `(n, m, N, seed)` with `N ≤ min(n, m)`.
fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=6, 1usize..=5)
        .prop_flat_map(|(n, m)| (Just(n), Just(m), 1..=n.min(m).min(4), any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vec_reshape_round_trip(a in sized_matrix(7, 7)) {
        let back = reshape(&vec(&a), a.rows(), a.cols()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn skew_is_antisymmetric_and_idempotent(a in (1usize..=6).prop_flat_map(|n| matrix(n, n))) {
        let s = skew(&a).unwrap();
        prop_assert!(s.add(&s.transpose()).unwrap().max_abs() == 0.0);
        prop_assert!(skew(&s).unwrap().sub(&s).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn khatri_rao_columns_are_kronecker_products(
        (u, v) in (1usize..=4).prop_flat_map(|c| (sized_matrix(5, 1).prop_flat_map(move |x| matrix(x.rows(), c)),
                                               sized_matrix(5, 1).prop_flat_map(move |x| matrix(x.rows(), c))))
    ) {
        let k = khatri_rao(&u, &v).unwrap();
        for i in 0..u.cols() {
            prop_assert_eq!(k.col(i), &kron(u.col(i), v.col(i))[..]);
        }
        let gram = k.tr_matmul(&k).unwrap();
        let (gu, gv) = (u.tr_matmul(&u).unwrap(), v.tr_matmul(&v).unwrap());
        for i in 0..u.cols() {
            for j in 0..u.cols() {
                prop_assert!((gram[(i, j)] - gu[(i, j)] * gv[(i, j)]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn implicit_transposes_match_explicit((n, m, cols, seed) in dims()) {
        let mut rng = stream(seed, 0);
        let u = random_stiefel(n, cols, &mut rng).unwrap().into_matrix();
        let v = random_stiefel(m, cols, &mut rng).unwrap().into_matrix();
        let w: Vec<f64> = (0..n * m * cols).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let wm = Matrix::column_vector(&w);
        let ex_m = build_m_explicit(&v, n).tr_matmul(&wm).unwrap();
        let ex_n = build_n_explicit(&u, m).tr_matmul(&wm).unwrap();
        let im_m = apply_m_transpose(&v, &w).unwrap();
        let im_n = apply_n_transpose(&u, &w).unwrap();
        for (a, b) in im_m.iter().zip(ex_m.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in im_n.iter().zip(ex_n.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn m_and_n_realise_their_defining_identities((n, m, cols, seed) in dims()) {
        let mut rng = stream(seed, 1);
        let u = random_stiefel(n, cols, &mut rng).unwrap().into_matrix();
        let v = random_stiefel(m, cols, &mut rng).unwrap().into_matrix();
        let x = Matrix::from_fn(n, cols, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let y = Matrix::from_fn(m, cols, |i, j| (j as f64 + 0.5) * 0.2 - i as f64 * 0.1);
        // vec(X ⊙ V) = M vec(X) and vec(U ⊙ Y) = N vec(Y)
        let lhs = vec(&khatri_rao(&x, &v).unwrap());
        let rhs_m = build_m_explicit(&v, n).matmul(&Matrix::column_vector(&vec(&x))).unwrap();
        for (a, b) in lhs.iter().zip(rhs_m.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
        let lhs = vec(&khatri_rao(&u, &y).unwrap());
        let rhs_n = build_n_explicit(&u, m).matmul(&Matrix::column_vector(&vec(&y))).unwrap();
        for (a, b) in lhs.iter().zip(rhs_n.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn riemannian_gradient_is_tangent(p in 1usize..=8, c in 1usize..=4, seed in any::<u64>()) {
        prop_assume!(c <= p);
        let mut rng = stream(seed, 2);
        let y = random_stiefel(p, c, &mut rng).unwrap();
        let g = Matrix::from_fn(p, c, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let r = riemannian_gradient(&g, &y).unwrap();
        prop_assert!(tangency_residual(&r, &y).unwrap() <= 1e-10 * g.frobenius_norm().max(1.0));
    }

    #[test]
    fn polar_factor_is_orthonormal(a in (1usize..=6).prop_flat_map(|c| (c..=8).prop_flat_map(move |p| matrix(p, c)))) {
        // random Gaussian-like matrices are full rank with probability one;
        // skip the measure-zero degenerate draws
        if let Ok(q) = reorthonormalize(&a) {
            prop_assert!(q.orthonormality_residual() <= 1e-12);
        }
    }

    #[test]
    fn centering_sums_to_zero(x in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let c = centered(&x);
        let s: f64 = c.iter().sum();
        prop_assert!(s.abs() <= 1e-14 * x.len() as f64 * 10.0);
    }

    #[test]
    fn flow_velocity_is_a_descent_direction((n, m, cols, seed) in dims()) {
        let mut rng = stream(seed, 3);
        let rho = random_density(n, m, n * m, &mut rng).unwrap();
        let u = random_stiefel(n, cols, &mut rng).unwrap();
        let v = random_stiefel(m, cols, &mut rng).unwrap();
        let f = CCFactorization::new(u, v, random_simplex(cols, &mut rng)).unwrap();
        let vel = rhs(&FlowState::pack(&f), &rho).unwrap();
        let g = gradient(&rho, &f).unwrap();
        let flat: Vec<f64> = g.du.as_slice().iter().chain(g.dv.as_slice()).chain(&g.dtheta).copied().collect();
        let inner: f64 = flat.iter().zip(&vel).map(|(a, b)| a * b).sum();
        prop_assert!(inner <= 1e-15, "⟨∇F, rhs⟩ = {inner:e}");
        let theta_sum: f64 = vel[vel.len() - cols..].iter().sum();
        prop_assert!(theta_sum.abs() <= 1e-14 * cols as f64);
        // the velocity is the negated projected gradient
        let r = riemannian_bundle(&rho, &f).unwrap();
        let proj: Vec<f64> = r.du.as_slice().iter().chain(r.dv.as_slice()).copied()
            .chain(centered(&r.dtheta)).collect();
        for (a, b) in proj.iter().zip(&vel) {
            prop_assert!((a + b).abs() <= 1e-14);
        }
    }
}
