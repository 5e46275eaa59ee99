//! HO-POD bases, HO-DEIM interpolation, reduced models, low-rank node
//! storage and basis files.

pub mod deim;
pub mod io;
pub mod lowrank;
pub mod pod;
pub mod reduced;

pub use deim::{qdeim_select, select_rows, HoDeim};
pub use io::{read_basis, write_basis, BasisBundle, ComponentFactors};
pub use lowrank::{compress_node, decompress_node, LowRankNode};
pub use pod::{projector_apply, vector_pod, HoPodBasis};
pub use reduced::{reduce_operators, ComponentReduction, NonlinearTreatment, ReducedModel, ReducedStepper};
