//! Lock-and-Folner random walks on lamplighter-type groups.
//!
//! The crate builds the level sequence `(A_i, F_i, D_i, b_i)`, samples the
//! heavy-tailed step law, reads off the tail invariant of a trajectory and
//! computes the diagnostics around it. It needs only `alloc`; the `std`
//! feature is reserved for callers that want it.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod construction;
pub mod diagnostics;
pub mod group;
pub mod heavy_tail;
pub mod measure;
pub mod sampler;
pub mod set;
pub mod tail;

pub use construction::{build_levels, Construction, ConstructionLevel, GrowthSchedule, Limits, Tolerance};
pub use group::{FactorMap, GroupElement, GroupFamily, GroupSpec};
pub use heavy_tail::{LevelLaw, LevelSampler};
pub use measure::{measure_atoms, TruncatedMeasure};
pub use sampler::{sample_trajectory, Color, Step, StepTable, Trajectory, TrajectorySeed};
pub use set::{CapExceeded, ElementSet};
pub use tail::{tau, TailValue, TauOutcome, WSets};
