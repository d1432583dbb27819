//! Two-level model-order reduction for parametrized 2D linear elastodynamics.
//!
//! Level 1 solves frequency-domain problems with a port-reduced static
//! condensation reduced-basis element method (component bubbles, port modes,
//! Schur complement). Level 2 compresses those frequency snapshots with a
//! strong greedy into a time-domain Galerkin model marched with Newmark.

pub mod bench;
pub mod element;
pub mod error;
pub mod fespace;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod multicomp;
pub mod offline;
pub mod online;
pub mod truth;
pub mod twolevel;

pub use error::{Error, Result};
