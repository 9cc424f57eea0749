//! Small dense helpers used for the q×q and m×m algebra of the emulator and
//! for the adaptation factor of the sampler.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("cholesky", n, a.ncols()));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `log|A|` from the lower Cholesky factor of `A`.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    let n = l.nrows();
    for c in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    let n = l.nrows();
    for c in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Inverse of a symmetric positive definite matrix, returned symmetric.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky(a)?;
    let id = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let mut inv = solve_lower_transpose(&l, &solve_lower(&l, &id));
    symmetrize(&mut inv);
    Ok(inv)
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Largest absolute difference between `a` and `aᵀ`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// In-place rank-one modification of a lower Cholesky factor so that the
/// result factors `L Lᵀ + sign·x xᵀ` (`sign` is `+1` or `-1`).
///
/// Returns `false`, leaving `l` partially modified, when a downdate would
/// produce a non-positive pivot.
pub fn cholesky_rank_one(l: &mut DMatrix<f64>, x: &DVector<f64>, sign: f64) -> bool {
    let n = l.nrows();
    let mut x = x.clone();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r2 = lkk * lkk + sign * x[k] * x[k];
        if !(r2 > 0.0) || !r2.is_finite() {
            return false;
        }
        let r = libm::sqrt(r2);
        let c = r / lkk;
        let s = x[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            l[(i, k)] = (l[(i, k)] + sign * s * x[i]) / c;
            x[i] = c * x[i] - s * l[(i, k)];
        }
    }
    true
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        });
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let a = spd(6, 3);
        let l = cholesky(&a).unwrap();
        assert_relative_eq!(&l * l.transpose(), a, epsilon = 1e-10);
        let det = a.clone().determinant();
        assert_relative_eq!(log_det_from_cholesky(&l), libm::log(det), epsilon = 1e-10);
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn inverse_is_symmetric_and_correct() {
        let a = spd(5, 9);
        let inv = spd_inverse(&a).unwrap();
        assert_eq!(symmetry_defect(&inv), 0.0);
        assert_relative_eq!(&a * inv, DMatrix::identity(5, 5), epsilon = 1e-10);
    }

    #[test]
    fn rank_one_update_and_downdate() {
        let a = spd(4, 1);
        let x = DVector::from_vec(alloc::vec![0.3, -0.2, 0.5, 0.1]);
        let mut l = cholesky(&a).unwrap();
        assert!(cholesky_rank_one(&mut l, &x, 1.0));
        assert_relative_eq!(&l * l.transpose(), &a + &x * x.transpose(), epsilon = 1e-10);
        assert!(cholesky_rank_one(&mut l, &x, -1.0));
        assert_relative_eq!(&l * l.transpose(), a, epsilon = 1e-10);
    }

    #[test]
    fn downdate_to_singular_fails() {
        let mut l = DMatrix::<f64>::identity(2, 2);
        let x = DVector::from_vec(alloc::vec![1.0, 0.0]);
        assert!(!cholesky_rank_one(&mut l, &x, -1.0));
    }
}
