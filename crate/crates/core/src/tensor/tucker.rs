use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::svd::{left_singular, truncated_svd, Truncation};
use super::DenseTensor;
use crate::{Result, Scalar};

/// Tucker decomposition `core ×_1 U_1 ⋯ ×_d U_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactors<T: Scalar> {
    pub core: DenseTensor<T>,
    /// `n_m × k_m` factors with orthonormal columns.
    pub factors: Vec<DMatrix<T>>,
    /// Retained singular values per mode.
    pub sigmas: Vec<DVector<T>>,
}

impl<T: Scalar> TuckerFactors<T> {
    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.ncols()).collect()
    }

    pub fn full_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Dense tensor represented by the decomposition.
    pub fn reconstruct(&self) -> Result<DenseTensor<T>> {
        self.core.mode_products(&self.factors)
    }

    /// Number of stored reals: `Σ n_m k_m + ∏ k_m`.
    pub fn storage(&self) -> usize {
        self.factors.iter().map(|f| f.len()).sum::<usize>() + self.core.len()
    }
}

/// Sequentially truncated HOSVD keeping at most `kappa` vectors per mode.
///
/// Modes are processed in increasing order; each factor holds the leading
/// left singular vectors of the current partially projected unfolding.
/// Order-2 inputs use a single SVD.
pub fn sthosvd<T: Scalar>(t: &DenseTensor<T>, kappa: usize) -> Result<TuckerFactors<T>> {
    sthosvd_truncated(t, Truncation::Rank(kappa))
}

/// STHOSVD with a per-mode truncation rule.
pub fn sthosvd_truncated<T: Scalar>(t: &DenseTensor<T>, trunc: Truncation<T>) -> Result<TuckerFactors<T>> {
    if t.order() == 2 {
        let m = t.to_matrix()?;
        let s = truncated_svd(&m, trunc);
        let k = s.rank();
        let core = DenseTensor::from_matrix(&DMatrix::from_diagonal(&s.sigma));
        let w = s.w.expect("right factor requested");
        debug_assert_eq!(w.ncols(), k);
        return Ok(TuckerFactors {
            core,
            factors: vec![s.u, w],
            sigmas: vec![s.sigma.clone(), s.sigma],
        });
    }
    let mut core = t.clone();
    let mut factors = Vec::with_capacity(t.order());
    let mut sigmas = Vec::with_capacity(t.order());
    for m in 0..t.order() {
        let s = left_singular(&core.unfold(m)?, trunc);
        core = core.mode_product(&s.u.transpose(), m)?;
        factors.push(s.u);
        sigmas.push(s.sigma);
    }
    Ok(TuckerFactors { core, factors, sigmas })
}

/// `sqrt(Σ_m Σ_{i>k_m} σ_i(T_(m))²)`: the quasi-optimality bound on the
/// truncation error of a multilinear rank-`ranks` STHOSVD.
pub fn hosvd_tail_bound<T: Scalar>(t: &DenseTensor<T>, ranks: &[usize]) -> Result<T> {
    let mut acc = T::zero();
    for (m, &k) in ranks.iter().enumerate() {
        let s = left_singular(&t.unfold(m)?, Truncation::Full);
        for &x in s.sigma.iter().skip(k) {
            acc += x * x;
        }
    }
    Ok(acc.sqrt())
}
