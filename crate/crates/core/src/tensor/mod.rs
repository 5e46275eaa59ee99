//! Dense order-d tensors.
//!
//! Storage is mode-1-major: the index of the first mode varies fastest, so the
//! flat data buffer is `vec(T)`, the column-stacking of the mode-1 unfolding.
//!
//! The mode-`m` unfolding `T_(m)` is the `n_m × ∏_{i≠m} n_i` matrix whose
//! columns are indexed by the remaining modes in increasing order with the
//! first-listed remaining mode varying fastest. With this convention
//! `(T ×_m M)_(m) = M·T_(m)` and
//! `vec(X ×_1 M_1 ⋯ ×_d M_d) = (M_d ⊗ ⋯ ⊗ M_1) vec(X)`.
//!
//! Mode indices are 0-based throughout the API.

mod kron;
mod svd;
mod tucker;

pub use kron::{kron_apply_oracle, kron_matrix, kron_sum_matrix, DEFAULT_ORACLE_CAP};
pub use svd::{kselect, left_singular, truncated_svd, Svd, Truncation};
pub use tucker::{hosvd_tail_bound, sthosvd, sthosvd_truncated, TuckerFactors};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Order-d real tensor with mode-1-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Wraps a mode-1-major buffer.
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Argument("tensor needs at least one mode".into()));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::mismatch("DenseTensor::new", len, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for (i, n) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < *n {
                    break;
                }
                *i = 0;
            }
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// Order-2 tensor equal to the matrix.
    pub fn from_matrix(m: &DMatrix<T>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// Order-1 tensor holding the vector.
    pub fn from_vector(v: &DVector<T>) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    /// Order-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<T>> {
        if self.order() != 2 {
            return Err(Error::mismatch("to_matrix", "order 2", self.order()));
        }
        Ok(DMatrix::from_column_slice(self.dims[0], self.dims[1], &self.data))
    }

    /// `vec(T)` as a column vector.
    pub fn vec(&self) -> DVector<T> {
        DVector::from_column_slice(&self.data)
    }

    /// Same data with new dims of equal total size.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Flat position of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for (i, n) in idx.iter().zip(&self.dims) {
            off += i * stride;
            stride *= n;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn norm_squared(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn scale(&mut self, a: T) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: T, other: &Self) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite_value())
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::mismatch(op, format!("{:?}", self.dims), format!("{:?}", other.dims)));
        }
        Ok(())
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        if m >= self.order() {
            return Err(Error::Argument(format!(
                "mode {m} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    fn split(&self, m: usize) -> (usize, usize, usize) {
        let left = self.dims[..m].iter().product();
        let right = self.dims[m + 1..].iter().product();
        (left, self.dims[m], right)
    }

    /// Mode-`m` unfolding.
    pub fn unfold(&self, m: usize) -> Result<DMatrix<T>> {
        self.check_mode(m)?;
        let (left, nm, right) = self.split(m);
        if m == 0 {
            return Ok(DMatrix::from_column_slice(nm, right, &self.data));
        }
        let mut out = DMatrix::zeros(nm, left * right);
        for r in 0..right {
            for i in 0..nm {
                let src = &self.data[left * (i + nm * r)..left * (i + nm * r) + left];
                for (l, &v) in src.iter().enumerate() {
                    out[(i, l + left * r)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`unfold`](Self::unfold): rebuilds the tensor with `dims`
    /// from its mode-`m` unfolding.
    pub fn fold(mat: &DMatrix<T>, m: usize, dims: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(dims);
        out.check_mode(m)?;
        let (left, nm, right) = out.split(m);
        if mat.nrows() != nm || mat.ncols() != left * right {
            return Err(Error::mismatch(
                "fold",
                format!("{}x{}", nm, left * right),
                format!("{}x{}", mat.nrows(), mat.ncols()),
            ));
        }
        for r in 0..right {
            for i in 0..nm {
                for l in 0..left {
                    out.data[l + left * (i + nm * r)] = mat[(i, l + left * r)];
                }
            }
        }
        Ok(out)
    }

    /// `T ×_m M`: multiplies every mode-`m` fiber by `M` (`p × n_m`).
    pub fn mode_product(&self, mat: &DMatrix<T>, m: usize) -> Result<Self> {
        self.check_mode(m)?;
        let (_, nm, _) = self.split(m);
        if mat.ncols() != nm {
            return Err(Error::mismatch(
                "mode_product",
                format!("{nm} columns"),
                format!("{} columns", mat.ncols()),
            ));
        }
        let mut dims = self.dims.clone();
        dims[m] = mat.nrows();
        let data = mode_product_raw(&self.data, &self.dims, mat, m);
        Ok(Self { dims, data })
    }

    /// `T ×_1 M_1 ×_2 ⋯ ×_d M_d`, skipping modes whose entry is `None`.
    pub fn multi_mode_product(&self, mats: &[Option<&DMatrix<T>>]) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(Error::mismatch("multi_mode_product", self.order(), mats.len()));
        }
        let mut out = self.clone();
        for (m, mat) in mats.iter().enumerate() {
            if let Some(mat) = mat {
                out = out.mode_product(mat, m)?;
            }
        }
        Ok(out)
    }

    /// `T ×_1 M_1 ⋯ ×_d M_d` with every mode transformed.
    pub fn mode_products(&self, mats: &[DMatrix<T>]) -> Result<Self> {
        let refs: Vec<Option<&DMatrix<T>>> = mats.iter().map(Some).collect();
        self.multi_mode_product(&refs)
    }

    /// `T ×_1 M_1ᵀ ⋯ ×_d M_dᵀ`.
    pub fn mode_products_transposed(&self, mats: &[DMatrix<T>]) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(Error::mismatch("mode_products_transposed", self.order(), mats.len()));
        }
        let mut out = self.clone();
        for (m, mat) in mats.iter().enumerate() {
            out = out.mode_product(&mat.transpose(), m)?;
        }
        Ok(out)
    }

    /// Converts the scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// Mode-`m` product on a raw mode-1-major buffer of any nalgebra field.
pub(crate) fn mode_product_raw<N>(data: &[N], dims: &[usize], mat: &DMatrix<N>, m: usize) -> Vec<N>
where
    N: nalgebra::ComplexField + Copy,
{
    let left: usize = dims[..m].iter().product();
    let right: usize = dims[m + 1..].iter().product();
    let nm = dims[m];
    let p = mat.nrows();
    let mut out = vec![N::zero(); left * p * right];
    if out.is_empty() || nm == 0 {
        return out;
    }
    if m == 0 {
        let x = DMatrixView::from_slice(data, nm, right);
        let mut y = DMatrixViewMut::from_slice(&mut out, p, right);
        y.gemm(N::one(), mat, &x, N::zero());
    } else {
        let mt = mat.transpose();
        for r in 0..right {
            let x = DMatrixView::from_slice(&data[left * nm * r..left * nm * (r + 1)], left, nm);
            let mut y = DMatrixViewMut::from_slice(&mut out[left * p * r..left * p * (r + 1)], left, p);
            y.gemm(N::one(), &x, &mt, N::zero());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dims: &[usize]) -> DenseTensor<f64> {
        DenseTensor::from_fn(dims, |idx| {
            idx.iter()
                .enumerate()
                .map(|(k, &i)| ((k + 2) * (i + 1)) as f64 * 0.37)
                .sum::<f64>()
                .sin()
        })
    }

    #[test]
    fn matrix_unfoldings() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = DenseTensor::from_matrix(&m);
        assert_eq!(t.unfold(0).unwrap(), m);
        assert_eq!(t.unfold(1).unwrap(), m.transpose());
    }

    #[test]
    fn unfold_fold_round_trip() {
        let t = sample(&[2, 3, 4]);
        for m in 0..3 {
            let u = t.unfold(m).unwrap();
            assert_eq!(DenseTensor::fold(&u, m, t.dims()).unwrap(), t);
        }
    }

    #[test]
    fn bad_mode_is_rejected() {
        let t = sample(&[2, 2]);
        assert!(matches!(t.unfold(2), Err(Error::Argument(_))));
        assert!(t.mode_product(&DMatrix::identity(3, 3), 0).is_err());
    }

    #[test]
    fn matrix_mode_products() {
        let y = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let a = DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 - 1.0);
        let b = DMatrix::from_fn(5, 4, |i, j| (i as f64) * 0.5 - j as f64);
        let t = DenseTensor::from_matrix(&y);
        assert_eq!(t.mode_product(&a, 0).unwrap().to_matrix().unwrap(), &a * &y);
        let got = t.mode_product(&b, 1).unwrap().to_matrix().unwrap();
        assert!((got - &y * b.transpose()).amax() < 1e-12);
    }

    #[test]
    fn mode_product_unfolding_identity() {
        let t = sample(&[3, 4, 2]);
        for m in 0..3 {
            let mat = DMatrix::from_fn(5, t.dims()[m], |i, j| ((i + 1) * (j + 3)) as f64 % 7.0 - 3.0);
            let lhs = t.mode_product(&mat, m).unwrap().unfold(m).unwrap();
            let rhs = &mat * t.unfold(m).unwrap();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn identity_mode_product() {
        let t = sample(&[3, 2, 4]);
        for m in 0..3 {
            let i = DMatrix::identity(t.dims()[m], t.dims()[m]);
            assert_eq!(t.mode_product(&i, m).unwrap(), t);
        }
    }

    #[test]
    fn from_fn_is_mode_one_major() {
        let t = DenseTensor::<f64>::from_fn(&[2, 3], |idx| (idx[0] + 10 * idx[1]) as f64);
        assert_eq!(t.as_slice(), &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        assert_eq!(t.get(&[1, 2]), 21.0);
    }
}
