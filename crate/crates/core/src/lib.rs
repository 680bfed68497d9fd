//! Maximal entropy random walk (MERW) on cubic lattices.
//!
//! The crate follows one chain of computations: a symmetric step matrix on a
//! lattice ([`lattice`]), its dominant and first excited eigenpairs
//! ([`spectral`]), amplitude evolution, Born-rule densities and stochastic
//! matrices ([`walk`]), entropy production ([`entropy`]), and the map from
//! step-matrix eigenvalues to Schrödinger energies and their second-order
//! corrections ([`bridge`]). [`experiment`] and [`verify`] drive it from the
//! command line.
//!
//! Natural units are used throughout: `ħ = m = c = 1`, one walk step lasts one
//! reduced Compton time, lengths are in reduced Compton wavelengths and
//! potentials and energies are in units of `mc²`.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod spectral;
pub mod verify;
pub mod walk;

pub use error::{MerwError, Result};
pub use lattice::{build_box_step_matrix, build_potential_step_matrix, Boundary, LatticeSpec, Potential, StepMatrix};
pub use spectral::{dense_oracle, dominant_eigenpair, top_k_eigenpairs, SpectralBasis, SpectralPair};
