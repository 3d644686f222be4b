//! Resonant normal forms and growth of Sobolev norms for the transport
//! equation `∂_t u = (m + εV)∂_x u + (ε/2)(∂_x V)u` on the circle.
//!
//! Every object is a finite Fourier truncation; see [`spectral`] for the
//! shared convention.

pub mod classical_dynamics;
pub mod error;
pub mod evolve;
pub mod linalg;
pub mod normal_form;
pub mod ode;
pub mod resonance;
pub mod spectral;
pub mod weyl_calculus;

pub use error::{Error, Result};
pub use num_complex;
