//! Spherically symmetric nonlinear wave evolution on a Schwarzschild-cone
//! foliation of Minkowski space, with cone energies, decay fits,
//! functional-inequality probes and blow-up localisation.

pub mod diagnostics;
pub mod equations;
pub mod error;
pub mod geometry;
pub mod initial_data;
pub mod numerics;
pub mod oracles;
pub mod probes;
pub mod runner;
pub mod solver;

pub use equations::{Catalog, Derivs, EquationSpec, MetricComponents, PotentialKind, PotentialSpec};
pub use error::{Error, Result};
pub use geometry::{ConePoint, FoliationChart, FrameWeights};
pub use initial_data::{make_data, weighted_norm, DataFamily, DataPair, RadialGrid};
pub use oracles::{PulseProfile, PulseShape};
pub use solver::{evolve, BlowupCause, BlowupReport, FieldState, SolverSettings, Trajectory};
