//! HO-DEIM: mode-wise interpolation of a nonlinear term.

use nalgebra::DMatrix;

use crate::linalg::{column_pivots, inverse, spectral_norm};
use crate::{Error, Result, Scalar};

/// Interpolation rows of `Φ` from a column-pivoted QR of `Φᵀ`.
pub fn qdeim_select<T: Scalar>(phi: &DMatrix<T>) -> Result<Vec<usize>> {
    let p = phi.ncols();
    if p == 0 || p > phi.nrows() {
        return Err(Error::Argument(format!("cannot interpolate a {}x{} basis", phi.nrows(), p)));
    }
    column_pivots(&phi.transpose(), p)
}

/// `P_mᵀ M`: the rows `rows` of `m`.
pub fn select_rows<T: Scalar>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Interpolation data of one tensor field.
#[derive(Clone, Debug)]
pub struct HoDeim<T: Scalar> {
    phi: Vec<DMatrix<T>>,
    pivots: Vec<Vec<usize>>,
    /// `(P_mᵀΦ_m)^{-1}`.
    inv: Vec<DMatrix<T>>,
    c_const: T,
}

impl<T: Scalar> HoDeim<T> {
    /// Selects interpolation rows for every `Φ_m`.
    pub fn new(phi: Vec<DMatrix<T>>) -> Result<Self> {
        let pivots = phi.iter().map(qdeim_select).collect::<Result<Vec<_>>>()?;
        Self::with_pivots(phi, pivots)
    }

    /// Uses given rows, e.g. read back from a basis file.
    pub fn with_pivots(phi: Vec<DMatrix<T>>, pivots: Vec<Vec<usize>>) -> Result<Self> {
        if phi.len() != pivots.len() {
            return Err(Error::mismatch("HoDeim", phi.len(), pivots.len()));
        }
        let mut inv = Vec::with_capacity(phi.len());
        let mut c_const = T::one();
        for (m, (f, p)) in phi.iter().zip(&pivots).enumerate() {
            if p.len() != f.ncols() || p.iter().any(|&r| r >= f.nrows()) {
                return Err(Error::Argument(format!("invalid interpolation rows in mode {m}")));
            }
            let sq = select_rows(f, p);
            let i = inverse(&sq).map_err(|_| Error::Numerical(format!("P^T Phi is singular in mode {m}")))?;
            c_const *= spectral_norm(&i);
            inv.push(i);
        }
        if !c_const.is_finite_value() {
            return Err(Error::Numerical("interpolation constant is not finite".into()));
        }
        Ok(Self { phi, pivots, inv, c_const })
    }

    pub fn phi(&self) -> &[DMatrix<T>] {
        &self.phi
    }

    pub fn pivots(&self) -> &[Vec<usize>] {
        &self.pivots
    }

    /// `p_m` per mode.
    pub fn sizes(&self) -> Vec<usize> {
        self.phi.iter().map(|m| m.ncols()).collect()
    }

    /// `∏_m ‖(P_mᵀΦ_m)^{-1}‖₂`.
    pub fn c_const(&self) -> T {
        self.c_const
    }

    /// `Φ_m (P_mᵀΦ_m)^{-1}`: maps sampled values to the interpolant.
    pub fn interpolators(&self) -> Vec<DMatrix<T>> {
        self.phi.iter().zip(&self.inv).map(|(f, i)| f * i).collect()
    }

    /// `V_mᵀ Φ_m (P_mᵀΦ_m)^{-1}` for a state basis `v`.
    pub fn small_factors(&self, v: &[DMatrix<T>]) -> Result<Vec<DMatrix<T>>> {
        if v.len() != self.phi.len() {
            return Err(Error::mismatch("small_factors", self.phi.len(), v.len()));
        }
        Ok(v.iter().zip(self.interpolators()).map(|(vm, g)| vm.transpose() * g).collect())
    }

    /// `F_m = V_mᵀ Φ_m (P_mᵀΦ_m)^{-1} P_mᵀ` as dense `k_m × n_m` matrices.
    pub fn f_mats(&self, v: &[DMatrix<T>]) -> Result<Vec<DMatrix<T>>> {
        let g = self.small_factors(v)?;
        Ok(g.iter()
            .zip(&self.pivots)
            .zip(v)
            .map(|((gm, p), vm)| {
                let mut f = DMatrix::zeros(gm.nrows(), vm.nrows());
                for (j, &r) in p.iter().enumerate() {
                    f.column_mut(r).copy_from(&gm.column(j));
                }
                f
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unit_columns_select_their_rows() {
        let mut phi = DMatrix::<f64>::zeros(6, 2);
        phi[(1, 0)] = 1.0;
        phi[(4, 1)] = 1.0;
        let mut p = qdeim_select(&phi).unwrap();
        p.sort();
        assert_eq!(p, vec![1, 4]);
    }

    #[test]
    fn growth_bound_and_constant() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let n = 20;
        let p = 4;
        let phi = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q().columns(0, p).into_owned();
        let d = HoDeim::new(vec![phi.clone(), phi.clone()]).unwrap();
        let inv_norm = spectral_norm(&inverse(&select_rows(&phi, &d.pivots()[0])).unwrap());
        assert!(inv_norm <= ((n - p + 1) as f64).sqrt() * 2f64.powi(p as i32));
        assert!((d.c_const() - inv_norm * inv_norm).abs() < 1e-12 * inv_norm * inv_norm);
    }

    #[test]
    fn interpolation_is_exact_on_span() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let p1 = DMatrix::from_fn(7, 7, |_, _| rng.gen_range(-1.0..1.0)).qr().q().columns(0, 3).into_owned();
        let p2 = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0)).qr().q().columns(0, 2).into_owned();
        let d = HoDeim::new(vec![p1.clone(), p2.clone()]).unwrap();
        let core = DenseTensor::from_fn(&[3, 2], |_| rng.gen_range(-1.0..1.0));
        let f = core.mode_products(&[p1, p2]).unwrap();
        let sampled = f.mode_products(&[
            select_rows(&DMatrix::identity(7, 7), &d.pivots()[0]),
            select_rows(&DMatrix::identity(5, 5), &d.pivots()[1]),
        ]).unwrap();
        let rebuilt = sampled.mode_products(&d.interpolators()).unwrap();
        assert!(rebuilt.sub(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let phi = DMatrix::<f64>::from_fn(5, 2, |i, _| i as f64);
        assert!(matches!(qdeim_select(&phi), Err(Error::Numerical(_))));
    }
}
