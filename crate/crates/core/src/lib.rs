//! Coherent propagation of four resonant pulses through a double-Lambda
//! medium: a Maxwell-von Neumann solver in retarded coordinates, the exact
//! four-pulse soliton it is validated against, and area diagnostics.

pub mod analytic;
pub mod bloch;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod medium;
pub mod output;
pub mod pulse;
pub mod solver;
pub mod validation;

pub use analytic::{SolitonParams, GroupVelocities};
pub use config::{Resolution, RunConfig};
pub use bloch::{DetuningEnsemble, StabilityPolicy};
pub use diagnostics::{AreaRecord, PeakSample, Regime, SechFit};
pub use error::{Error, Result};
pub use grid::{Channel, FieldSnapshot, RetardedGrid};
pub use medium::{make_seed_state, DensityMatrix4, LineShape, MediumSpec};
pub use pulse::{generate_pulse, PulseShape, PulseSpec};
pub use solver::{propagate, PropagationResult, Scheme, SolverConfig};

pub use num_complex::Complex64 as C64;
