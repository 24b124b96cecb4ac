//! Physics-informed neural solver for the equilibrium electrostatics of a
//! gated silicon nanowire.
//!
//! The pipeline: a finite-volume Newton solver ([`oracle`]) produces ground
//! truth potential/density snapshots over a gate sweep; a linear surrogate
//! ([`surrogate`]) learns the density → potential map from the low-bias
//! snapshots only; and [`pinn`] solves any requested gate bias by training a
//! small generator network against two physics losses.

pub mod autodiff;
pub mod banded;
pub mod error;
pub mod fermi;
pub mod io;
pub mod mesh;
pub mod oracle;
pub mod pinn;
pub mod surrogate;

pub use error::{Error, Result};
pub use fermi::SemiconductorParams;
pub use mesh::{build_device_mesh, DeviceConfig, TensorMesh};
pub use autodiff::Architecture;
pub use oracle::{Snapshot, SweepDataset};
pub use pinn::{ErrorReport, PinnProblem, SolveOptions};
pub use surrogate::LinearSurrogate;
