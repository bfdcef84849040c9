//! Spectral deferred corrections and two-level PFASST for finite-element
//! discretisations of 1D reaction–diffusion equations.
//!
//! The semi-discrete system is `M u' = −A u + M g(u)` with Lagrange elements
//! of order 1–3. Time stepping uses right Gauss–Radau collocation solved by
//! SDC sweeps, either serially or in blocks of steps by PFASST with spatial
//! coarsening.

pub mod collocation;
pub mod fem;
pub mod harness;
pub mod numerics;
pub mod pfasst;
pub mod problems;
pub mod sdc;

pub use collocation::CollocationTable;
pub use fem::{BcMode, LagrangeSpace, Mesh1D, Reaction, SpatialOperators};
pub use pfasst::{BlockState, TwoLevelHierarchy};
pub use sdc::{Formulation, NodeVector, StepProblem, SweepMode};
