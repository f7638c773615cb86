//! Small dense least-squares helpers shared by the smoother and the sparse
//! regression.

use nalgebra::{DMatrix, DVector};

/// Relative threshold on singular values / `R` diagonal below which a
/// column is treated as linearly dependent.
pub const RANK_RTOL: f64 = 1e-12;

/// Least-squares solution of `a x ≈ b`, with a flag set when `a` was
/// numerically rank deficient and the minimum-norm solution was returned.
pub struct LstsqSolution {
    pub x: DMatrix<f64>,
    pub rank_deficient: bool,
}

/// Solves `min ‖a x − b‖₂` column by column of `b`.
///
/// Householder QR when `a` has full column rank; truncated SVD (minimum-norm
/// solution) otherwise, including the underdetermined case.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> LstsqSolution {
    let (m, n) = a.shape();
    assert_eq!(m, b.nrows(), "row mismatch in lstsq");
    if n == 0 {
        return LstsqSolution {
            x: DMatrix::zeros(0, b.ncols()),
            rank_deficient: false,
        };
    }
    if m >= n {
        let qr = a.clone().qr();
        let r = qr.r();
        let max_diag = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let full_rank = max_diag > 0.0
            && r.diagonal()
                .iter()
                .all(|v| v.abs() > RANK_RTOL * max_diag * (m as f64).sqrt());
        if full_rank {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            let top = qtb.rows(0, n).clone_owned();
            if let Some(x) = r.solve_upper_triangular(&top) {
                if x.iter().all(|v| v.is_finite()) {
                    return LstsqSolution {
                        x,
                        rank_deficient: false,
                    };
                }
            }
        }
    }
    LstsqSolution {
        x: min_norm_svd(a, b),
        rank_deficient: true,
    }
}

fn min_norm_svd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v));
    let (m, n) = a.shape();
    let eps = RANK_RTOL * smax * (m.max(n) as f64).sqrt();
    svd.solve(b, eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

/// Squared Euclidean norm of a vector.
pub fn sq_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_square_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, 5.0]);
        let sol = lstsq(&a, &b);
        assert!(!sol.rank_deficient);
        assert!((sol.x[0] - 0.8).abs() < 1e-14);
        assert!((sol.x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_gives_min_norm() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let sol = lstsq(&a, &b);
        assert!(sol.rank_deficient);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_uses_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[2.0]);
        let sol = lstsq(&a, &b);
        assert!(sol.rank_deficient);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }
}
