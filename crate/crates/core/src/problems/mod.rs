//! Forward models shipped with the crate.

pub mod deconvolution;
pub mod phase_retrieval;

pub use deconvolution::DeconvolutionModel;
pub use phase_retrieval::{make_cell_phantom, PhaseRetrievalModel};
