//! Tree nodes stored as truncated Tucker decompositions.

use crate::tensor::{sthosvd, DenseTensor, TuckerFactors};
use crate::{Result, Scalar};

/// STHOSVD of a node state at cap `κ`, with the discarded norm and an
/// optional cached cost.
#[derive(Clone, Debug)]
pub struct LowRankNode<T: Scalar> {
    pub tucker: TuckerFactors<T>,
    /// `‖Y − reconstruct()‖_F`.
    pub discarded: T,
    pub cost: Option<T>,
}

impl<T: Scalar> LowRankNode<T> {
    /// Number of stored reals: `Σ_m n_m k_m + ∏ k_m`.
    pub fn storage(&self) -> usize {
        self.tucker.storage()
    }

    pub fn decompress(&self) -> Result<DenseTensor<T>> {
        self.tucker.reconstruct()
    }
}

pub fn compress_node<T: Scalar>(y: &DenseTensor<T>, kappa: usize) -> Result<LowRankNode<T>> {
    let tucker = sthosvd(y, kappa)?;
    // orthogonal projection: the error energy is the energy lost by the core
    let lost = y.norm_squared() - tucker.core.norm_squared();
    let discarded = if lost > T::zero() { lost.sqrt() } else { T::zero() };
    Ok(LowRankNode { tucker, discarded, cost: None })
}

pub fn decompress_node<T: Scalar>(node: &LowRankNode<T>) -> Result<DenseTensor<T>> {
    node.decompress()
}
