//! Explicit Kronecker products, used as a dense reference at small sizes.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, Scalar};

/// Default cap on the number of entries of an explicitly formed Kronecker
/// matrix.
pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

/// `M_d ⊗ ⋯ ⊗ M_1` for `mats = [M_1, …, M_d]`.
pub fn kron_matrix<T: Scalar>(mats: &[DMatrix<T>], cap: usize) -> Result<DMatrix<T>> {
    let Some((last, rest)) = mats.split_last() else {
        return Err(Error::Argument("empty Kronecker factor list".into()));
    };
    let rows = mats.iter().try_fold(1usize, |acc, m| acc.checked_mul(m.nrows()));
    let cols = mats.iter().try_fold(1usize, |acc, m| acc.checked_mul(m.ncols()));
    let size = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c)).unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::OracleCap { size, cap });
    }
    let mut k = last.clone();
    for m in rest.iter().rev() {
        k = k.kronecker(m);
    }
    Ok(k)
}

/// `(M_d ⊗ ⋯ ⊗ M_1) x` with the Kronecker matrix formed explicitly.
pub fn kron_apply_oracle<T: Scalar>(mats: &[DMatrix<T>], x: &DVector<T>, cap: usize) -> Result<DVector<T>> {
    let cols: usize = mats.iter().map(|m| m.ncols()).product();
    if cols != x.len() {
        return Err(Error::mismatch("kron_apply_oracle", cols, x.len()));
    }
    Ok(kron_matrix(mats, cap)? * x)
}

/// Kronecker sum `Σ_m I ⊗ ⋯ ⊗ A_m ⊗ ⋯ ⊗ I`: the matrix of
/// `X ↦ Σ_m X ×_m A_m` acting on `vec(X)`.
pub fn kron_sum_matrix<T: Scalar>(mats: &[DMatrix<T>], cap: usize) -> Result<DMatrix<T>> {
    let n: usize = mats.iter().map(|m| m.nrows()).product();
    if n.saturating_mul(n) > cap {
        return Err(Error::OracleCap { size: n.saturating_mul(n), cap });
    }
    let mut total = DMatrix::zeros(n, n);
    for m in 0..mats.len() {
        let factors: Vec<DMatrix<T>> = mats
            .iter()
            .enumerate()
            .map(|(i, a)| if i == m { a.clone() } else { DMatrix::identity(a.nrows(), a.nrows()) })
            .collect();
        total += kron_matrix(&factors, cap)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use crate::tensor::DenseTensor;
    use rand::{Rng, SeedableRng};

    fn rand_mat(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_factors() {
        let x = DVector::from_fn(6, |i, _| i as f64);
        let mats = vec![DMatrix::identity(2, 2), DMatrix::identity(3, 3)];
        assert_eq!(kron_apply_oracle(&mats, &x, DEFAULT_ORACLE_CAP).unwrap(), x);
    }

    #[test]
    fn two_factor_vec_identity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let m = rand_mat(&mut rng, 3, 4);
        let n = rand_mat(&mut rng, 2, 5);
        let x = rand_mat(&mut rng, 5, 4);
        let lhs = kron_apply_oracle(&[n.clone(), m.clone()], &DVector::from_column_slice(x.as_slice()), DEFAULT_ORACLE_CAP).unwrap();
        let rhs = &n * &x * m.transpose();
        assert!((lhs - DVector::from_column_slice(rhs.as_slice())).amax() < 1e-12);
    }

    #[test]
    fn three_mode_chain_matches() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let x = DenseTensor::from_fn(&[2, 2, 2], |_| rng.gen_range(-1.0..1.0));
        let n = rand_mat(&mut rng, 2, 2);
        let m = rand_mat(&mut rng, 2, 2);
        let l = rand_mat(&mut rng, 2, 2);
        let chain = x.mode_products(&[n.clone(), m.clone(), l.clone()]).unwrap();
        let dense = kron_apply_oracle(&[n, m, l], &x.vec(), DEFAULT_ORACLE_CAP).unwrap();
        assert!((chain.vec() - dense).amax() < 1e-12);
    }

    #[test]
    fn kron_norm_is_product_of_norms() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let m = rand_mat(&mut rng, 3, 3);
        let n = rand_mat(&mut rng, 3, 3);
        let k = kron_matrix(&[n.clone(), m.clone()], DEFAULT_ORACLE_CAP).unwrap();
        let lhs = spectral_norm(&k);
        let rhs = spectral_norm(&m) * spectral_norm(&n);
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn cap_is_enforced() {
        let mats = vec![DMatrix::<f64>::identity(100, 100); 2];
        assert!(matches!(kron_matrix(&mats, 1000), Err(Error::OracleCap { .. })));
    }
}
