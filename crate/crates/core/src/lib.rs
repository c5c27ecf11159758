//! Quantify and visualize electronic charge localization and transfer
//! between molecular subgroups from hole/particle NTO scalar fields.
//!
//! The pipeline: parse the two cube files, segment the grid by the power
//! diagram of the atoms, integrate squared amplitudes into per-atom and
//! per-subgroup charges, reconstruct the subgroup-to-subgroup transfer
//! matrix under marginal constraints, and emit transition diagrams and
//! tabular reports.

pub mod charge;
pub mod cube;
pub mod diagram;
mod error;
pub mod molecule;
pub mod segmentation;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
