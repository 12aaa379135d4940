use crate::numerics::{axpy, dot, Mat};

/// `Σ_{i<j} ⟨e_i, e_j⟩` over the rows of `x0`, evaluated in `O(mD)` as
/// `½(‖Σ e_i‖² − Σ ‖e_i‖²)`.
pub fn fm_pairwise(x0: &Mat) -> f64 {
    let mut sum = vec![0.0; x0.cols()];
    let mut squares = 0.0;
    for i in 0..x0.rows() {
        let e = x0.row(i);
        axpy(1.0, e, &mut sum);
        squares += dot(e, e);
    }
    0.5 * (dot(&sum, &sum) - squares)
}

/// Gradient of `upstream · fm_pairwise(x0)` with respect to `x0`:
/// row `i` is `upstream · (Σ_j e_j − e_i)`.
pub fn fm_backward(x0: &Mat, upstream: f64) -> Mat {
    let mut sum = vec![0.0; x0.cols()];
    for i in 0..x0.rows() {
        axpy(1.0, x0.row(i), &mut sum);
    }
    let mut grad = Mat::zeros(x0.rows(), x0.cols());
    for i in 0..x0.rows() {
        let e = x0.row(i);
        for (d, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = upstream * (sum[d] - e[d]);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng, DEFAULT_FD_EPS};
    use proptest::prelude::*;

    fn brute_force(x0: &Mat) -> f64 {
        let mut total = 0.0;
        for i in 0..x0.rows() {
            for j in i + 1..x0.rows() {
                total += dot(x0.row(i), x0.row(j));
            }
        }
        total
    }

    #[test]
    fn examples() {
        assert_eq!(fm_pairwise(&Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]])), 0.0);
        assert_eq!(fm_pairwise(&Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]])), 11.0);
        let x = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0], [-1.0, 0.5]]);
        // 11 + (-1 + 1) + (-3 + 2)
        assert_eq!(brute_force(&x), 10.0);
        assert!((fm_pairwise(&x) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let x0 = Mat::random_normal(4, 3, 1.0, &mut rng);
        let numeric = finite_diff_grad(
            |p| 1.7 * fm_pairwise(&Mat::from_vec(4, 3, p.to_vec()).unwrap()),
            x0.as_slice(),
            DEFAULT_FD_EPS,
        )
        .unwrap();
        let analytic = fm_backward(&x0, 1.7);
        for (a, n) in analytic.as_slice().iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn identity_matches_pair_sum(m in 2usize..7, d in 1usize..6, seed in any::<u64>()) {
            let x0 = Mat::random_normal(m, d, 1.0, &mut Rng::new(seed));
            prop_assert!((fm_pairwise(&x0) - brute_force(&x0)).abs() < 1e-10);
        }
    }
}
