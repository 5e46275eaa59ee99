use nalgebra::{DMatrix, DVector, SVD};

use crate::Scalar;

/// How many singular triplets to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation<T> {
    /// Keep the full numerical rank.
    Full,
    /// Keep at most this many.
    Rank(usize),
    /// Keep the smallest count whose discarded tail satisfies [`kselect`].
    Tolerance(T),
    /// Apply the tolerance rule, then cap at `rank`.
    RankTolerance { rank: usize, tol: T },
}

/// Thin SVD `M ≈ U diag(σ) Wᵀ` with nonincreasing `σ`.
#[derive(Clone, Debug)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    /// Right singular vectors as columns; present when requested.
    pub w: Option<DMatrix<T>>,
}

impl<T: Scalar> Svd<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(σ) Wᵀ`; needs the right factor.
    pub fn reconstruct(&self) -> Option<DMatrix<T>> {
        let w = self.w.as_ref()?;
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        Some(us * w.transpose())
    }
}

/// Smallest `k ≥ 1` with `sqrt(Σ_{i>k} σ_i²) < τ·sqrt(Σ_i σ_i²)`.
///
/// Returns 0 when all values are zero and `σ.len()` when no `k` qualifies
/// (`τ ≤ 0`).
pub fn kselect<T: Scalar>(sigma: &[T], tau: T) -> usize {
    let total: T = sigma.iter().fold(T::zero(), |acc, &s| acc + s * s);
    if total == T::zero() {
        return 0;
    }
    let bound = tau * tau * total;
    // tail[k] = Σ_{i≥k} σ_i², accumulated from the smallest values upward
    let mut tail = vec![T::zero(); sigma.len() + 1];
    for i in (0..sigma.len()).rev() {
        tail[i] = tail[i + 1] + sigma[i] * sigma[i];
    }
    for k in 1..=sigma.len() {
        if tail[k] < bound {
            return k;
        }
    }
    sigma.len()
}

fn keep_count<T: Scalar>(sigma: &[T], trunc: Truncation<T>) -> usize {
    match trunc {
        Truncation::Full => sigma.len(),
        Truncation::Rank(k) => k.min(sigma.len()),
        Truncation::Tolerance(tol) => kselect(sigma, tol),
        Truncation::RankTolerance { rank, tol } => kselect(sigma, tol).min(rank),
    }
}

fn compute<T: Scalar>(m: &DMatrix<T>, trunc: Truncation<T>, want_w: bool) -> Svd<T> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            sigma: DVector::zeros(0),
            w: want_w.then(|| DMatrix::zeros(cols, 0)),
        };
    }
    // reduce to a square factor first: nalgebra's SVD of rank deficient
    // rectangular input can return singular values above the norm
    let (u_full, sig, w_full) = if rows >= cols {
        let qr = m.clone().qr();
        let (uc, sig, wc) = square_svd(&qr.r());
        (qr.q() * uc, sig, wc)
    } else {
        let qr = m.transpose().qr();
        let (uc, sig, wc) = square_svd(&qr.r().transpose());
        (uc, sig, qr.q() * wc)
    };
    // numerical rank
    let top = if sig.is_empty() { T::zero() } else { sig[0] };
    let floor = top * T::epsilon() * T::from_count(rows.max(cols));
    let rank = sig.iter().take_while(|&&s| s > floor && s > T::zero()).count();
    let kept: Vec<T> = sig.iter().take(rank).copied().collect();
    let k = keep_count(&kept, trunc);

    let mut u = u_full.columns(0, k).into_owned();
    let mut w = want_w.then(|| w_full.columns(0, k).into_owned());
    // deterministic signs: first significant entry of each left vector positive
    for j in 0..k {
        let col = u.column(j);
        let big = col.amax();
        let thresh = big * T::epsilon().sqrt();
        let first = col.iter().copied().find(|x| x.abs() > thresh).unwrap_or(T::zero());
        if first < T::zero() {
            u.column_mut(j).neg_mut();
            if let Some(w) = w.as_mut() {
                w.column_mut(j).neg_mut();
            }
        }
    }
    Svd {
        u,
        sigma: DVector::from_vec(kept[..k].to_vec()),
        w,
    }
}

/// `(U, σ, W)` of a square matrix with `σ` nonincreasing. The library SVD is
/// checked against the norm, the reconstruction and orthogonality, and
/// replaced by one-sided Jacobi when a check fails.
fn square_svd<T: Scalar>(a: &DMatrix<T>) -> (DMatrix<T>, Vec<T>, DMatrix<T>) {
    let n = a.nrows();
    let norm = a.norm();
    if norm == T::zero() {
        return (DMatrix::identity(n, n), vec![T::zero(); n], DMatrix::identity(n, n));
    }
    let svd = SVD::new(a.clone(), true, true);
    if let (Some(u), Some(vt)) = (svd.u, svd.v_t) {
        let mut order: Vec<usize> = (0..n).collect();
        let sv = &svd.singular_values;
        order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
        let sig: Vec<T> = order.iter().map(|&i| sv[i]).collect();
        let u = DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
        let w = DMatrix::from_fn(n, n, |r, c| vt[(order[c], r)]);
        let tol = T::epsilon() * T::from_count(64 * n);
        let energy: T = sig.iter().fold(T::zero(), |acc, &s| acc + s * s);
        let mut us = u.clone();
        for (j, &s) in sig.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        let eye = DMatrix::<T>::identity(n, n);
        let ok = sig.iter().all(|s| s.is_finite_value() && *s >= T::zero())
            && (energy - norm * norm).abs() <= tol * norm * norm
            && (a - &us * w.transpose()).norm() <= tol * norm
            && (u.transpose() * &u - &eye).amax() <= tol
            && (w.transpose() * &w - &eye).amax() <= tol;
        if ok {
            return (u, sig, w);
        }
    }
    jacobi_svd(a)
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
fn jacobi_svd<T: Scalar>(a: &DMatrix<T>) -> (DMatrix<T>, Vec<T>, DMatrix<T>) {
    let n = a.ncols();
    let mut b = a.clone();
    let mut w = DMatrix::<T>::identity(n, n);
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = b.column(i).norm_squared();
                let beta = b.column(j).norm_squared();
                let gamma = b.column(i).dot(&b.column(j));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for mat in [&mut b, &mut w] {
                    for r in 0..n {
                        let (p, q) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * p - s * q;
                        mat[(r, j)] = s * p + c * q;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..n).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let sig: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let u = DMatrix::from_fn(n, n, |r, c| {
        let s = norms[order[c]];
        if s > T::zero() {
            b[(r, order[c])] / s
        } else {
            T::zero()
        }
    });
    let w = DMatrix::from_fn(n, n, |r, c| w[(r, order[c])]);
    (u, sig, w)
}

/// Truncated SVD with both singular factors.
pub fn truncated_svd<T: Scalar>(m: &DMatrix<T>, trunc: Truncation<T>) -> Svd<T> {
    compute(m, trunc, true)
}

/// Truncated SVD without the right factor.
pub fn left_singular<T: Scalar>(m: &DMatrix<T>, trunc: Truncation<T>) -> Svd<T> {
    compute(m, trunc, false)
}
