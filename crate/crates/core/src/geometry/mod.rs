//! Intersection rasters, movement paths and the corridor network.

mod corridor;
mod grid;
mod path;
mod trip;

pub use corridor::{build_corridor, CorridorConfig, CorridorNetwork, EntryPoint, Link, Strip, StripKind};
pub use grid::{Approach, CellIndex, GridConfig, IntersectionGrid, Movement, Turn};
pub use path::{cells_occupied, movement_path, movements_conflict, ConflictTable, RoutePath};
pub use trip::{CellId, CellSpace, GridVisit, Segment, Trip, TripCell};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("movement {0} is not permitted by the lane channelisation")]
    InvalidMovement(Movement),
    #[error("position {position} m lies outside the route [0, {total}]")]
    OffRoute { position: f64, total: f64 },
    #[error("duplicate intersection id {0}")]
    DuplicateId(u16),
    #[error("network is disconnected: {0}")]
    Disconnected(String),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("no route: {0}")]
    NoRoute(String),
    #[error("grid text: {0}")]
    Parse(String),
}
