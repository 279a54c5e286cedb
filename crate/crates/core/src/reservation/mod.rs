//! Desired-cell computation, coordination grouping and the safety arbiter.

mod arbiter;
mod desired;
mod groups;

pub use arbiter::{envelope, Arbiter, Claimant, Envelope, GrantTable, ReservationTable};
pub use desired::{desired_cells, ds_cells, ds_meters, DesiredCellSet};
pub use groups::{classify_transition, detect_conflicts, CoordinationGroup, TransitionType};

use thiserror::Error;

use crate::geometry::CellId;

/// Tolerance used to keep interval ends off exact cell boundaries.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservationError {
    #[error("vehicle {vehicle} needs cell {cell:?} for braking but it was not granted to it")]
    StopEnvelope { vehicle: u32, cell: CellId },
    #[error("vehicles {a} and {b} both hold cell {cell:?}")]
    Overlap { a: u32, b: u32, cell: CellId },
    #[error("vehicle {0} appears twice")]
    DuplicateVehicle(u32),
    #[error("vehicle {0} is missing from a grouping snapshot")]
    MissingVehicle(u32),
    #[error("position {position} m lies outside the trip [0, {total}]")]
    OffRoute { position: f64, total: f64 },
}
