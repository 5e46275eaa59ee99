//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, Scalar};

/// Largest singular value; 0 for an empty matrix.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    crate::tensor::left_singular(m, crate::tensor::Truncation::Rank(1)).sigma.iter().copied().next().unwrap_or(T::zero())
}

/// Largest eigenvalue of the symmetric part `(A + Aᵀ)/2`.
pub fn sym_part_max_eig<T: Scalar>(a: &DMatrix<T>) -> Result<T> {
    if !a.is_square() {
        return Err(Error::mismatch("sym_part_max_eig", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    let s = (a + a.transpose()) * T::lit(0.5);
    let eig = s.symmetric_eigenvalues();
    Ok(eig.max())
}

/// `max |A_ij - A_ji|` relative to `max |A_ij|`.
pub fn asymmetry<T: Scalar>(a: &DMatrix<T>) -> T {
    let scale = a.amax();
    if scale == T::zero() {
        return T::zero();
    }
    (a - a.transpose()).amax() / scale
}

/// `‖QᵀQ − I‖_max`.
pub fn orthonormality_defect<T: Scalar>(q: &DMatrix<T>) -> T {
    let g = q.transpose() * q;
    let k = g.nrows();
    (g - DMatrix::<T>::identity(k, k)).amax()
}

/// Pivot order of a column-pivoted QR factorization of `m`, truncated to the
/// first `count` pivots.
///
/// Householder reflections with column-norm downdating and recomputation when
/// cancellation is detected. Returns an error if a pivot column is numerically
/// zero.
pub fn column_pivots<T: Scalar>(m: &DMatrix<T>, count: usize) -> Result<Vec<usize>> {
    let (rows, cols) = m.shape();
    if count > rows.min(cols) {
        return Err(Error::Argument(format!(
            "cannot select {count} pivots from a {rows}x{cols} matrix"
        )));
    }
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut norms: Vec<T> = (0..cols).map(|j| a.column(j).norm_squared()).collect();
    let mut reference = norms.clone();
    let scale = norms.iter().fold(T::zero(), |acc, &v| if v > acc { v } else { acc });
    let rel = T::epsilon() * T::from_count(rows.max(cols)) * T::lit(10.0);
    let tiny = scale * rel * rel;
    for k in 0..count {
        let (mut best, mut best_val) = (k, -T::one());
        for j in k..cols {
            if norms[j] > best_val {
                best = j;
                best_val = norms[j];
            }
        }
        if best_val <= tiny {
            return Err(Error::Numerical(format!(
                "rank-deficient input: pivot {k} has squared norm {best_val}"
            )));
        }
        a.swap_columns(k, best);
        perm.swap(k, best);
        norms.swap(k, best);
        reference.swap(k, best);

        // Householder vector for column k below the diagonal.
        let x = a.view((k, k), (rows - k, 1)).clone_owned();
        let alpha = x.norm();
        let sign = if x[0] >= T::zero() { T::one() } else { -T::one() };
        let mut v = x.clone();
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > T::zero() {
            let mut tail = a.view_mut((k, k), (rows - k, cols - k));
            let w = v.transpose() * &tail;
            tail -= (&v * w) * (T::lit(2.0) / vnorm2);
        }
        for j in (k + 1)..cols {
            let r = a[(k, j)];
            norms[j] -= r * r;
            if norms[j] <= reference[j] * T::lit(1e-8) {
                norms[j] = a.view((k + 1, j), (rows - k - 1, 1)).norm_squared();
                reference[j] = norms[j];
            }
        }
    }
    perm.truncate(count);
    Ok(perm)
}

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::Numerical("singular matrix in dense solve".into()))
}

/// Inverse of a square matrix.
pub fn inverse<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}
