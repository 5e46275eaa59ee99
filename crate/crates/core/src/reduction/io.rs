//! Basis container.
//!
//! Layout: the 8 bytes `HJBBASIS`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a UTF-8 JSON header describing shapes,
//! interpolation rows and free-form metadata, then every matrix (column-major)
//! and singular-value vector as little-endian `f64`, in header order.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::deim::HoDeim;
use super::pod::HoPodBasis;
use super::reduced::ComponentReduction;
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 8] = b"HJBBASIS";
pub const FORMAT_VERSION: u32 = 1;

/// Factors of one state component.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentFactors<T: Scalar> {
    pub state: Vec<DMatrix<T>>,
    pub state_sigma: Vec<DVector<T>>,
    pub phi: Option<Vec<DMatrix<T>>>,
    pub phi_sigma: Option<Vec<DVector<T>>>,
    pub pivots: Option<Vec<Vec<usize>>>,
}

impl<T: Scalar> ComponentFactors<T> {
    /// Extracts the factors of finalized bases.
    pub fn from_bases(state: &HoPodBasis<T>, nonlinear: Option<(&HoPodBasis<T>, &HoDeim<T>)>) -> Result<Self> {
        let sigma = |b: &HoPodBasis<T>| -> Vec<DVector<T>> { b.basis_sigma().to_vec() };
        Ok(Self {
            state: state.factors()?.to_vec(),
            state_sigma: sigma(state),
            phi: nonlinear.map(|(_, d)| d.phi().to_vec()),
            phi_sigma: nonlinear.map(|(b, _)| sigma(b)),
            pivots: nonlinear.map(|(_, d)| d.pivots().to_vec()),
        })
    }

    /// Rebuilds the finalized state basis and interpolation data.
    pub fn to_reduction(&self) -> Result<ComponentReduction<T>> {
        let state = HoPodBasis::from_factors(self.state.clone())?;
        let deim = match (&self.phi, &self.pivots) {
            (Some(phi), Some(piv)) => Some(HoDeim::with_pivots(phi.clone(), piv.clone())?),
            _ => None,
        };
        Ok(ComponentReduction { state, deim })
    }
}

/// Everything the online phase needs from the offline phase.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisBundle<T: Scalar> {
    pub components: Vec<ComponentFactors<T>>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    components: Vec<ComponentHeader>,
}

#[derive(Serialize, Deserialize)]
struct ComponentHeader {
    state: Vec<(usize, usize)>,
    state_sigma: Vec<usize>,
    phi: Option<Vec<(usize, usize)>>,
    phi_sigma: Option<Vec<usize>>,
    pivots: Option<Vec<Vec<usize>>>,
}

fn shapes<T: Scalar>(m: &[DMatrix<T>]) -> Vec<(usize, usize)> {
    m.iter().map(|x| x.shape()).collect()
}

pub fn write_basis<T: Scalar, W: Write>(bundle: &BasisBundle<T>, mut w: W) -> Result<()> {
    let header = Header {
        meta: bundle.meta.clone(),
        components: bundle
            .components
            .iter()
            .map(|c| ComponentHeader {
                state: shapes(&c.state),
                state_sigma: c.state_sigma.iter().map(|s| s.len()).collect(),
                phi: c.phi.as_deref().map(shapes),
                phi_sigma: c.phi_sigma.as_ref().map(|v| v.iter().map(|s| s.len()).collect()),
                pivots: c.pivots.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut put = |xs: &[T]| -> Result<()> {
        for x in xs {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    };
    for c in &bundle.components {
        for m in &c.state {
            put(m.as_slice())?;
        }
        for s in &c.state_sigma {
            put(s.as_slice())?;
        }
        for m in c.phi.iter().flatten() {
            put(m.as_slice())?;
        }
        for s in c.phi_sigma.iter().flatten() {
            put(s.as_slice())?;
        }
    }
    Ok(())
}

pub fn read_basis<T: Scalar, R: Read>(mut r: R) -> Result<BasisBundle<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a basis file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported basis format version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("header too large".into()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut components = Vec::with_capacity(header.components.len());
    for h in header.components {
        let state = read_mats(&mut r, &h.state)?;
        let state_sigma = read_vecs(&mut r, &h.state_sigma)?;
        let phi = h.phi.as_deref().map(|s| read_mats(&mut r, s)).transpose()?;
        let phi_sigma = h.phi_sigma.as_deref().map(|s| read_vecs(&mut r, s)).transpose()?;
        components.push(ComponentFactors {
            state,
            state_sigma,
            phi,
            phi_sigma,
            pivots: h.pivots,
        });
    }
    Ok(BasisBundle {
        components,
        meta: header.meta,
    })
}

fn read_vals<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut b8 = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        out.push(T::lit(f64::from_le_bytes(b8)));
    }
    Ok(out)
}

fn read_mats<T: Scalar, R: Read>(r: &mut R, shapes: &[(usize, usize)]) -> Result<Vec<DMatrix<T>>> {
    shapes.iter().map(|&(rr, cc)| Ok(DMatrix::from_vec(rr, cc, read_vals(r, rr * cc)?))).collect()
}

fn read_vecs<T: Scalar, R: Read>(r: &mut R, lens: &[usize]) -> Result<Vec<DVector<T>>> {
    lens.iter().map(|&n| Ok(DVector::from_vec(read_vals(r, n)?))).collect()
}
