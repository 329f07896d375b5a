//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Pivot ratio below which an LU factorization is treated as singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-14;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn is_finite(a: &Matrix) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub(crate) fn ensure_finite(name: &str, a: &Matrix) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} contains NaN or Inf")))
    }
}

pub(crate) fn ensure_square(name: &str, a: &Matrix) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigenvalues of a symmetric matrix in ascending order with matching eigenvectors.
pub fn sym_eigen_sorted(a: &Matrix) -> (Vector, Matrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vector::zeros(0), Matrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Raises every eigenvalue of the symmetric part of `a` below `floor` to `floor`.
///
/// Inputs already above the floor are returned symmetrized but otherwise untouched.
pub(crate) fn clip_spectrum(a: &Matrix, floor: f64) -> Matrix {
    let sym = symmetrize(a);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    symmetrize(&(q * Matrix::from_diagonal(&clipped) * q.transpose()))
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_number(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// LU factorization that rejects numerically singular matrices.
pub(crate) fn factor(a: &Matrix, what: &str) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().map(f64::abs);
    let max = diag.max();
    let min = diag.min();
    if !(max > 0.0) || !(min / max > PIVOT_RATIO_FLOOR) || !min.is_finite() {
        return Err(Error::SingularOperator(format!(
            "{what} is singular to working precision"
        )));
    }
    Ok(lu)
}

/// Solves `A X = B` for square `A`.
pub(crate) fn solve(a: &Matrix, b: &Matrix, what: &str) -> Result<Matrix> {
    let lu = factor(a, what)?;
    lu.solve(b)
        .ok_or_else(|| Error::SingularOperator(format!("{what} is singular")))
}

/// Solves `X A = B` for square `A`.
pub(crate) fn solve_right(b: &Matrix, a: &Matrix, what: &str) -> Result<Matrix> {
    Ok(solve(&a.transpose(), &b.transpose(), what)?.transpose())
}

/// Relative Frobenius distance `‖a - b‖ / max(‖b‖, tiny)`.
pub fn relative_distance(a: &Matrix, b: &Matrix) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_leaves_spd_untouched() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        assert_eq!(clip_spectrum(&a, 0.0), a);
    }

    #[test]
    fn clip_raises_negative_eigenvalue() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let c = clip_spectrum(&a, 0.0);
        assert!((c - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn singular_factor_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(factor(&a, "A"), Err(Error::SingularOperator(_))));
    }

    #[test]
    fn sorted_eigen_ascending() {
        let a = Matrix::from_row_slice(3, 3, &[5.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sym_eigen_sorted(&a);
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 5.0]);
        let recon = &vecs * Matrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - a).norm() < 1e-13);
    }
}
