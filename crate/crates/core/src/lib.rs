//! Simulation and verification toolkit for a rate-5/4, low-complexity
//! decodable 4x4 space-time block code that embeds the rate-3/4 complex
//! orthogonal design.
//!
//! * [`linalg`]: complex/real dense matrices, `vec`, Kronecker product, real
//!   embedding, Householder thin QR.
//! * [`codes`]: code constructions and their linear-dispersion weights.
//! * [`channel`]: quasi-static Rayleigh channel, random streams, real model.
//! * [`detector`]: QR reduction, PAM slicing, conditional ML, sphere decoding
//!   and an exhaustive oracle.
//! * [`metrics`]: minimum determinant, PAPR, worst-case complexity and the
//!   Monte Carlo CER / complexity harness.
//! * [`nvdproof`]: grid checks of the non-vanishing determinant argument.
//! * [`cli`]: argument parsing and command execution for the `stbc54` binary.

pub mod channel;
pub mod cli;
pub mod codes;
pub mod detector;
pub mod linalg;
pub mod metrics;
pub mod nvdproof;
