//! Identification of moving, time-varying contaminant sources from sparse
//! sensor data.
//!
//! The crate couples a streamline-stabilized P1 finite-element solver for the
//! advection-diffusion equation with a point-source inversion that greedily
//! inserts source atoms where the adjoint-based dual field is largest and
//! re-solves a nonnegative lasso over the active set. On top of the inverse
//! solver sit forecasting (forward propagation of the reconstructed source
//! beyond the observation window) and a diffusion-coefficient calibration
//! sweep against steady-state line measurements.

pub mod calibration;
pub mod error;
pub mod fem;
pub mod lasso;
pub mod linalg;
pub mod mesh;
pub mod pdap;
pub mod sensing;
pub mod source;
pub mod sparse;
pub mod transport;
pub mod vtk;
pub mod wind;

pub use error::{Error, Result};
