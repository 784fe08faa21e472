//! Simulation and analysis of (1+1)-dimensional quantum cellular automata
//! whose local gates interpolate between a commuting contact-process rule and
//! non-commuting (asynchronous) updates.
//!
//! * [`gates`]: flip unitaries and the four-qubit local gates.
//! * [`exact`]: the exact row channel for small rows, dense and stochastic.
//! * [`meanfield`]: the homogeneous product-state map and its coefficients.
//! * [`classical`]: the synchronous limit as a probabilistic automaton and the
//!   continuous-time contact process.
//! * [`qcp`]: the dictionary to quantum contact process rates.
//! * [`analysis`]: phase diagrams, critical lines and transition order.
//! * [`output`]: CSV, JSON manifest and PGM writers.

pub mod analysis;
pub mod classical;
pub mod error;
pub mod exact;
pub mod gates;
pub mod kernel;
pub mod meanfield;
pub mod output;
pub mod qcp;

pub use error::{QcaError, Result};
pub use exact::{Boundary, EvolutionConfig, Mode, RowDensity, RowObservables, UpdateOrder};
pub use gates::{FlipKind, GateParams, LocalGate, Unitary2, C64};
pub use meanfield::{MFCoefficients, MFState};
