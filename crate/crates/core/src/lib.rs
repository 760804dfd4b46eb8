//! Globally coupled map lattices and the extreme-value statistics of their
//! synchronization events.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: the local map, the coupled lattice and its trajectories.
//! - [`observables`]: localization and synchronization observables, running
//!   maxima and quantile thresholds.
//! - [`evt`]: GEV/GPD likelihood fits, extremal-index estimators, cluster
//!   statistics and (compound) Poisson visit laws.
//! - [`theory`]: closed-form extremal indices, bounds and probability
//!   calculators.
//! - [`density`]: histogram estimates of the invariant density and its
//!   diagonal trace.
//! - [`spectral`]: Ulam discretization of the transfer operator and the
//!   eigenvalue route to the extremal index.
//! - [`experiment`]: declarative sweeps that tie everything together and emit
//!   plot-ready CSV/JSON.

pub mod density;
pub mod error;
pub mod evt;
pub mod experiment;
pub mod lattice;
pub mod observables;
pub mod rng;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
pub use evt::{EiEstimate, EiMethod, EvtFitResult};
pub use lattice::{LatticeState, LocalMap, MapSpec, NoiseSpec, Trajectory, TrajectoryConfig};
pub use observables::{ObservableSeries, ObservableSpec};
