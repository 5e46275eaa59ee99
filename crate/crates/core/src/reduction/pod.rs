//! HO-POD: mode-wise bases built from a stream of tensor snapshots.
//!
//! Each mode keeps at most `κ` singular vectors `Ṽ_m` with their singular
//! values `Σ̃_m`. An included snapshot appends the factors and singular
//! values of its STHOSVD; the pairs are sorted jointly by singular value and
//! the largest `κ` are kept. The basis is the leading part of the left
//! singular vectors of `Ṽ_m`, cut by the relative tail criterion.

use nalgebra::{DMatrix, DVector};

use crate::tensor::{left_singular, kselect, sthosvd, DenseTensor, Truncation, TuckerFactors};
use crate::{Error, Result, Scalar};

/// Incrementally built HO-POD basis of one tensor field.
#[derive(Clone, Debug)]
pub struct HoPodBasis<T: Scalar> {
    dims: Vec<usize>,
    kappa: usize,
    tau_trunc: T,
    tau_snap: T,
    acc_v: Vec<DMatrix<T>>,
    acc_sigma: Vec<DVector<T>>,
    /// Truncated SVD of each `Ṽ_m`: the current basis and its singular values.
    current: Vec<DMatrix<T>>,
    current_sigma: Vec<DVector<T>>,
    /// Relative tail left out by the truncation of each `Ṽ_m`.
    tails: Vec<T>,
    finalized: bool,
    updates: usize,
    log: Option<Vec<DenseTensor<T>>>,
}

impl<T: Scalar> HoPodBasis<T> {
    pub fn new(dims: &[usize], kappa: usize, tau_trunc: T, tau_snap: T) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Argument(format!("invalid dims {dims:?}")));
        }
        if kappa == 0 {
            return Err(Error::Argument("kappa must be at least 1".into()));
        }
        if !(tau_trunc >= T::zero()) || !(tau_snap >= T::zero()) {
            return Err(Error::Argument("tolerances must be nonnegative".into()));
        }
        let d = dims.len();
        Ok(Self {
            dims: dims.to_vec(),
            kappa,
            tau_trunc,
            tau_snap,
            acc_v: dims.iter().map(|&n| DMatrix::zeros(n, 0)).collect(),
            acc_sigma: vec![DVector::zeros(0); d],
            current: dims.iter().map(|&n| DMatrix::zeros(n, 0)).collect(),
            current_sigma: vec![DVector::zeros(0); d],
            tails: vec![T::zero(); d],
            finalized: false,
            updates: 0,
            log: None,
        })
    }

    /// Finalized basis with the given orthonormal factors.
    pub fn from_factors(v: Vec<DMatrix<T>>) -> Result<Self> {
        let dims: Vec<usize> = v.iter().map(|m| m.nrows()).collect();
        let kappa = v.iter().map(|m| m.ncols()).max().unwrap_or(1).max(1);
        let mut b = Self::new(&dims, kappa, T::zero(), T::zero())?;
        b.acc_sigma = v.iter().map(|m| DVector::from_element(m.ncols(), T::one())).collect();
        b.current_sigma = b.acc_sigma.clone();
        b.acc_v = v.clone();
        b.current = v;
        b.finalized = true;
        Ok(b)
    }

    /// `V_m = I` in every mode.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        Self::from_factors(dims.iter().map(|&n| DMatrix::identity(n, n)).collect())
    }

    /// Keeps a copy of every included snapshot for later checks.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn tau_trunc(&self) -> T {
        self.tau_trunc
    }

    pub fn tau_snap(&self) -> T {
        self.tau_snap
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Number of snapshots merged into the accumulators.
    pub fn update_count(&self) -> usize {
        self.updates
    }

    /// `(Ṽ_m, Σ̃_m)` per mode.
    pub fn accumulators(&self) -> (&[DMatrix<T>], &[DVector<T>]) {
        (&self.acc_v, &self.acc_sigma)
    }

    /// Finalized factors `V_m`.
    pub fn factors(&self) -> Result<&[DMatrix<T>]> {
        if !self.finalized {
            return Err(Error::Argument("basis is not finalized".into()));
        }
        Ok(&self.current)
    }

    /// Singular values of `Ṽ_m` that belong to the retained vectors.
    pub fn basis_sigma(&self) -> &[DVector<T>] {
        &self.current_sigma
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.current.iter().map(|m| m.ncols()).collect()
    }

    pub fn snapshot_log(&self) -> Option<&[DenseTensor<T>]> {
        self.log.as_deref()
    }

    /// `‖Y − Y ×_m V_mV_mᵀ‖_F / ‖Y‖_F` against the current basis; 0 for the
    /// zero tensor.
    pub fn snapshot_projection_error(&self, y: &DenseTensor<T>) -> Result<T> {
        self.check(y)?;
        let norm = y.norm();
        if norm == T::zero() {
            return Ok(T::zero());
        }
        let p = projector_apply(&self.current, y)?;
        Ok(y.sub(&p)?.norm() / norm)
    }

    /// Merges `y` if its projection error exceeds `τ_snap` (or if nothing
    /// has been merged yet). Returns whether it was included.
    pub fn consider(&mut self, y: &DenseTensor<T>) -> Result<bool> {
        self.consider_with(y, None)
    }

    /// As [`consider`](Self::consider), reusing a precomputed STHOSVD of `y`.
    pub fn consider_with(&mut self, y: &DenseTensor<T>, tucker: Option<&TuckerFactors<T>>) -> Result<bool> {
        if self.finalized {
            return Err(Error::Argument("basis is finalized".into()));
        }
        if y.norm() == T::zero() {
            return Ok(false);
        }
        if self.updates > 0 && self.snapshot_projection_error(y)? <= self.tau_snap {
            return Ok(false);
        }
        match tucker {
            Some(t) => self.merge(y, t)?,
            None => self.update(y)?,
        }
        Ok(true)
    }

    /// Unconditionally merges the STHOSVD of `y` at cap `κ`.
    pub fn update(&mut self, y: &DenseTensor<T>) -> Result<()> {
        self.check(y)?;
        if y.norm() == T::zero() {
            return Ok(());
        }
        let t = sthosvd(y, self.kappa)?;
        self.merge(y, &t)
    }

    fn merge(&mut self, y: &DenseTensor<T>, t: &TuckerFactors<T>) -> Result<()> {
        if self.finalized {
            return Err(Error::Argument("basis is finalized".into()));
        }
        self.check(y)?;
        if t.full_dims() != self.dims {
            return Err(Error::mismatch("HoPodBasis::merge", format!("{:?}", self.dims), format!("{:?}", t.full_dims())));
        }
        for m in 0..self.dims.len() {
            let u = &t.factors[m];
            let s = &t.sigmas[m];
            // numerically zero singular values carry no direction
            let floor = s.iter().fold(T::zero(), |a, &x| a.max(x)) * T::epsilon() * T::from_count(self.dims[m]);
            let mut pairs: Vec<(T, DVector<T>)> = (0..self.acc_v[m].ncols())
                .map(|j| (self.acc_sigma[m][j], self.acc_v[m].column(j).into_owned()))
                .collect();
            pairs.extend(
                (0..s.len().min(u.ncols()).min(self.kappa))
                    .filter(|&j| s[j] > floor)
                    .map(|j| (s[j], u.column(j).into_owned())),
            );
            // stable: on ties the older vector stays ahead
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            pairs.truncate(self.kappa);
            let cols: Vec<DVector<T>> = pairs.iter().map(|p| p.1.clone()).collect();
            self.acc_v[m] = if cols.is_empty() { DMatrix::zeros(self.dims[m], 0) } else { DMatrix::from_columns(&cols) };
            self.acc_sigma[m] = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.0));
            self.reduce(m);
        }
        self.updates += 1;
        if let Some(log) = self.log.as_mut() {
            log.push(y.clone());
        }
        Ok(())
    }

    /// Orthogonal reduction of `Ṽ_m`: leading left singular vectors chosen
    /// by the relative tail criterion at `τ_trunc`.
    fn reduce(&mut self, m: usize) {
        let svd = left_singular(&self.acc_v[m], Truncation::Full);
        let s = svd.sigma.as_slice();
        let k = kselect(s, self.tau_trunc).max(1).min(svd.u.ncols());
        let total: T = s.iter().fold(T::zero(), |a, &x| a + x * x);
        let tail: T = s.iter().skip(k).fold(T::zero(), |a, &x| a + x * x);
        self.tails[m] = if total > T::zero() { (tail / total).sqrt() } else { T::zero() };
        self.current[m] = svd.u.columns(0, k).into_owned();
        self.current_sigma[m] = svd.sigma.rows(0, k).into_owned();
    }

    /// Fixes `V_m` as the current truncated SVD of `Ṽ_m`.
    pub fn finalize(&mut self) -> Result<()> {
        if self.finalized {
            return Ok(());
        }
        if self.updates == 0 {
            return Err(Error::Argument("cannot finalize a basis without snapshots".into()));
        }
        self.finalized = true;
        Ok(())
    }

    /// Largest relative tail `sqrt(Σ_{i>k} σ̄_i²) / sqrt(Σ_i σ̄_i²)` dropped
    /// from the singular values `σ̄` of any `Ṽ_m`.
    pub fn tail_level(&self) -> T {
        self.tails.iter().fold(T::zero(), |a, &x| a.max(x))
    }

    /// `Y ×_m V_mᵀ`.
    pub fn project(&self, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        self.check(y)?;
        y.mode_products_transposed(self.factors()?)
    }

    /// `Ŷ ×_m V_m`.
    pub fn lift(&self, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let v = self.factors()?;
        let ranks: Vec<usize> = v.iter().map(|m| m.ncols()).collect();
        if y.dims() != ranks.as_slice() {
            return Err(Error::mismatch("lift", format!("{ranks:?}"), format!("{:?}", y.dims())));
        }
        y.mode_products(v)
    }

    fn check(&self, y: &DenseTensor<T>) -> Result<()> {
        if y.dims() != self.dims.as_slice() {
            return Err(Error::mismatch("HoPodBasis", format!("{:?}", self.dims), format!("{:?}", y.dims())));
        }
        Ok(())
    }
}

/// `Y ×_m V_mV_mᵀ`.
pub fn projector_apply<T: Scalar>(v: &[DMatrix<T>], y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    y.mode_products_transposed(v)?.mode_products(v)
}

/// Vector POD of vectorized snapshots: leading left singular vectors of
/// `[vec(Y_1), …, vec(Y_s)]` chosen by the relative tail criterion.
pub fn vector_pod<T: Scalar>(snapshots: &[DenseTensor<T>], tau: T) -> Result<DMatrix<T>> {
    let Some(first) = snapshots.first() else {
        return Err(Error::Argument("no snapshots".into()));
    };
    let n = first.len();
    let mut s = DMatrix::zeros(n, snapshots.len());
    for (j, y) in snapshots.iter().enumerate() {
        if y.len() != n {
            return Err(Error::mismatch("vector_pod", n, y.len()));
        }
        s.column_mut(j).copy_from_slice(y.as_slice());
    }
    Ok(left_singular(&s, Truncation::Tolerance(tau)).u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use crate::tensor::{kron_matrix, DEFAULT_ORACLE_CAP};
    use rand::{Rng, SeedableRng};

    fn rank_one(a: &[f64], b: &[f64], c: &[f64]) -> DenseTensor<f64> {
        DenseTensor::from_fn(&[a.len(), b.len(), c.len()], |i| a[i[0]] * b[i[1]] * c[i[2]])
    }

    #[test]
    fn first_update_reproduces_sthosvd() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let y = DenseTensor::from_fn(&[6, 5, 4], |_| rng.gen_range(-1.0f64..1.0));
        let mut b = HoPodBasis::new(&[6, 5, 4], 3, 1e-12, 1e-3).unwrap();
        b.update(&y).unwrap();
        let t = sthosvd(&y, 3).unwrap();
        let (v, s) = b.accumulators();
        for m in 0..3 {
            assert!((&v[m] - &t.factors[m]).amax() < 1e-10);
            assert!((&s[m] - &t.sigmas[m]).amax() < 1e-10);
        }
    }

    #[test]
    fn repeated_snapshot_keeps_span() {
        // mode ranks 2 with κ = 4: both copies fit in the accumulators
        let y = rank_one(&[1.0, 2.0, 0.5, -1.0], &[1.0, 0.0, 1.0], &[2.0, 1.0])
            .add(&rank_one(&[0.0, 1.0, -1.0, 1.0], &[1.0, 1.0, -1.0], &[-1.0, 1.0]))
            .unwrap();
        let mut b = HoPodBasis::new(&[4, 3, 2], 4, 1e-12, 0.0).unwrap();
        b.update(&y).unwrap();
        let before = b.accumulators().0.to_vec();
        b.update(&y).unwrap();
        let after = b.accumulators().0;
        for m in 0..3 {
            // every accumulated direction lies in the old span
            let resid = &after[m] - &before[m] * (before[m].transpose() * &after[m]);
            assert!(resid.amax() < 1e-10);
            assert_eq!(after[m].ncols(), 2 * before[m].ncols());
        }
        b.finalize().unwrap();
        assert_eq!(b.ranks(), vec![2, 2, 2]);
    }

    #[test]
    fn zero_snapshot_is_a_no_op() {
        let mut b = HoPodBasis::<f64>::new(&[4, 4], 2, 1e-3, 1e-3).unwrap();
        assert!(!b.consider(&DenseTensor::zeros(&[4, 4])).unwrap());
        b.update(&DenseTensor::zeros(&[4, 4])).unwrap();
        assert_eq!(b.update_count(), 0);
        assert_eq!(b.snapshot_projection_error(&DenseTensor::zeros(&[4, 4])).unwrap(), 0.0);
    }

    #[test]
    fn finalize_tolerance_extremes() {
        let y = rank_one(&[1.0, 2.0, 3.0], &[1.0, -1.0, 0.5], &[2.0, 1.0]);
        let z = rank_one(&[0.0, 1.0, -1.0], &[1.0, 1.0, 1.0], &[1.0, -2.0]);
        let sum = y.add(&z).unwrap();
        let mut b = HoPodBasis::new(&[3, 3, 2], 3, 1e-14, 0.0).unwrap();
        b.update(&sum).unwrap();
        b.finalize().unwrap();
        assert_eq!(b.ranks(), vec![2, 2, 2]);
        let mut b = HoPodBasis::new(&[3, 3, 2], 3, 1.0, 0.0).unwrap();
        b.update(&sum).unwrap();
        b.finalize().unwrap();
        assert_eq!(b.ranks(), vec![1, 1, 1]);
    }

    #[test]
    fn projection_error_cases_and_dense_oracle() {
        let v1 = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])]);
        let v2 = DMatrix::from_columns(&[DVector::from_vec(vec![0.0, 1.0, 0.0])]);
        let b = HoPodBasis::from_factors(vec![v1.clone(), v2.clone()]).unwrap();
        let inside = DenseTensor::from_fn(&[4, 3], |i| if i == [0, 1] { 2.0 } else { 0.0 });
        assert!(b.snapshot_projection_error(&inside).unwrap() < 1e-12);
        let outside = DenseTensor::from_fn(&[4, 3], |i| if i == [2, 0] { 1.0 } else { 0.0 });
        assert_eq!(b.snapshot_projection_error(&outside).unwrap(), 1.0);

        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let q1 = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0f64..1.0)).qr().q().columns(0, 2).into_owned();
        let q2 = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0f64..1.0)).qr().q().columns(0, 3).into_owned();
        let b = HoPodBasis::from_factors(vec![q1.clone(), q2.clone()]).unwrap();
        let y = DenseTensor::from_fn(&[5, 4], |_| rng.gen_range(-1.0f64..1.0));
        let vy = kron_matrix(&[q1.clone(), q2.clone()], DEFAULT_ORACLE_CAP).unwrap();
        let p = &vy * vy.transpose();
        let dense = (y.vec() - p * y.vec()).norm() / y.norm();
        assert!((b.snapshot_projection_error(&y).unwrap() - dense).abs() < 1e-12);
    }

    #[test]
    fn included_snapshots_respect_tail_level_without_eviction() {
        // rank-one snapshots: six directions per mode fit under κ
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let dims = [8, 7, 6];
        let mut b = HoPodBasis::new(&dims, 12, 1e-2, 1e-3).unwrap().with_log();
        for _ in 0..6 {
            let f: Vec<Vec<f64>> = dims.iter().map(|&n| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let y = DenseTensor::from_fn(&dims, |i| f[0][i[0]] * f[1][i[1]] * f[2][i[2]]);
            b.consider(&y).unwrap();
        }
        b.finalize().unwrap();
        for v in b.factors().unwrap() {
            assert!(orthonormality_defect(v) < 1e-12);
        }
        // a unit column of Ṽ_m leaves at most the absolute tail outside V_m
        let cols: usize = b.acc_v.iter().map(|v| v.ncols()).sum();
        let level = b.tail_level() * (cols as f64).sqrt();
        assert!(b.tail_level() < 1e-2);
        for y in b.snapshot_log().unwrap() {
            assert!(b.snapshot_projection_error(y).unwrap() <= level + 1e-12);
        }
    }

    #[test]
    fn lift_project_roundtrip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let q1 = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0f64..1.0)).qr().q().columns(0, 3).into_owned();
        let q2 = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0f64..1.0)).qr().q().columns(0, 2).into_owned();
        let b = HoPodBasis::from_factors(vec![q1, q2]).unwrap();
        let yh = DenseTensor::from_fn(&[3, 2], |_| rng.gen_range(-1.0f64..1.0));
        let lifted = b.lift(&yh).unwrap();
        assert!((lifted.norm() - yh.norm()).abs() < 1e-12);
        assert!(b.project(&lifted).unwrap().sub(&yh).unwrap().max_abs() < 1e-12);
        let y = DenseTensor::from_fn(&[6, 5], |_| rng.gen_range(-1.0f64..1.0));
        let p1 = b.lift(&b.project(&y).unwrap()).unwrap();
        let p2 = b.lift(&b.project(&p1).unwrap()).unwrap();
        assert!(p1.sub(&p2).unwrap().max_abs() < 1e-12);
    }
}
