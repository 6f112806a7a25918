//! Discrete-time packet transport on hybrid networks.
//!
//! A fixed square lattice of base stations forms the backbone; mobile users
//! roam the lattice's square, attach to their nearest station, and act as the
//! sources and sinks of packets. The crate measures network capacity as the
//! critical packet generation rate at which the backbone stops draining the
//! packets injected into it.
//!
//! Modules:
//! - [`topology`]: lattice construction, direction-based rewiring, hop
//!   distances, betweenness, degree distribution.
//! - [`mobility`]: user motion inside the square and gateway attachment.
//! - [`traffic`]: packet generation, FIFO forwarding, per-run metrics.
//! - [`capacity`]: analytic capacity estimate and bisection search.
//! - [`expcli`]: sweep orchestration, CSV output, command-line entry point.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod capacity;
pub mod error;
pub mod expcli;
pub mod mobility;
pub mod rng;
pub mod stats;
pub mod topology;
pub mod traffic;

pub use capacity::{estimate_rho_c, find_rho_c, BisectionSettings, CapacityMethod, CapacityResult};
pub use error::{Error, Result};
pub use mobility::{BoundaryRule, UserState};
pub use topology::{Backbone, Graph};
pub use traffic::{MetricsRecord, SimConfig, Simulation, Strategy};
