//! Error, resolution and disturbance of indirect quantum measurements.
//!
//! A measuring process couples an object to a probe by a unitary
//! interaction and reads the outcome from a meter observable on the probe.
//! This crate models such processes on finite position grids and computes
//! the rms measurement error `epsilon`, the predictive error `delta` and the
//! momentum disturbance `eta`, the POVM of the process, and the least-squares
//! search for a meter function that makes the measurement unbiased.
//!
//! Module map:
//!
//! * [`hilbert`]: states, observables, unitaries, tensor products, partial
//!   inner products and spectral calculus.
//! * [`grid`]: discretized position and momentum and Gaussian states.
//! * [`process`]: [`MeasurementProcess`] and the [`EdrReport`].
//! * [`povm`]: POVM extraction, moment operators and the Born check.
//! * [`meter`]: meter functions and the unbiasing solvers.
//! * [`models`]: von Neumann, swap, identity and file-backed processes.
//! * [`cli`]: the `edrlab` command line.

pub mod cli;
pub mod error;
pub mod grid;
pub mod hilbert;
pub mod meter;
pub mod models;
pub mod povm;
pub mod process;
pub mod tolerances;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use hilbert::{Dims, Observable, QState, Slot, UnitaryOp, Units};
pub use meter::MeterFunction;
pub use models::{ModelKind, ModelSpec, ProbeSpec};
pub use povm::{BornCheck, MomentOperators, PovmSet};
pub use process::{EdrReport, MeasurementProcess, ProcessParts, Rms};
pub use tolerances::Tolerances;
