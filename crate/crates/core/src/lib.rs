//! Finite-dimensional output-feedback H∞ control of dissipative PDEs observed
//! by a sensor network.
//!
//! The pipeline has four stages:
//!
//! * [`spectral`] reduces the PDE (Kuramoto–Sivashinsky is built in) to a
//!   slow/fast modal system.
//! * [`network`] describes the sensor graph, its point sensors and the gain
//!   sparsity pattern induced by the topology.
//! * [`design`] assembles the augmented closed loop and runs the alternating
//!   double-LMI procedure on the embedded SDP solver in [`lmi`].
//! * [`simulate`] integrates the truncated PDE together with the observer bank
//!   and reports the empirical attenuation ratio.
//!
//! [`config`] and [`cli`] tie the stages together for batch use.

pub mod cli;
pub mod config;
pub mod design;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lmi;
pub mod network;
pub mod quadrature;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
