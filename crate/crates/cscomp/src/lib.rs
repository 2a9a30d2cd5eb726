//! Row-sparse multiple-measurement-vector (MMV) compressed sensing for
//! explicit CSI feedback compression.
//!
//! A base station reports the downlink channel on M = 52 pilot subcarriers
//! for P antenna ports. In the delay domain the channel is approximately
//! row-sparse: all ports share a small set of significant delay taps. This
//! crate recovers that row-sparse delay-domain matrix X (N×P, N = 256·os+1
//! grid points) from Y = F·X + η, where F is a partial oversampled DFT:
//!
//! * [`model`] — sensing-matrix construction, synthetic on-grid training
//!   samples, and an off-grid channel surrogate for testing.
//! * [`solvers`] — OMP, NIHT, FISTA (λ-continuation + restarts), and
//!   AMP/AMP-MMV baselines.
//! * [`lamp`] — L-AMP-MMV, the AMP-MMV iteration unrolled into a trainable
//!   network with analytic backpropagation and ADAM training.
//! * [`postprocess`] — support pruning plus least-squares refitting.
//! * [`bench`] — paired benchmark sweeps with CSV reports; [`cli`] wires
//!   everything into the `cscomp` binary.
//!
//! All randomness is seeded explicitly; identical seeds give identical
//! results, including byte-identical CSV reports.

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod lamp;
pub mod linalg;
pub mod model;
pub mod postprocess;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{build_sensing_matrix, CsiMatrix, MeasurementMatrix, SensingMatrix};
pub use solvers::SolverResult;
