//! Vehicle kinematics, arrivals and the per-step world update.

mod arrivals;
mod kinematics;
mod log;
mod world;

pub use arrivals::{build_schedule, generate_arrivals, headway_shift, Arrival, ArrivalSchedule, DemandConfig, Regime, MIN_HEADWAY};
pub use kinematics::{follower_action, Action, KinematicsParams};
pub use log::{EpisodeLog, LogDetail, LogHeader, LogLine, StepRecord, VehicleSummary, LOG_SCHEMA_VERSION};
pub use world::{
    follower_update, run_episode, Controller, Decision, EpisodeConfig, LaneKey, LeaderView, Observation, SignalState,
    SimParams, StepOutcome, VehicleState, World,
};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::reservation::ReservationError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("arbiter invariant violated at step {step}: {source}")]
    Reservation { step: u64, source: ReservationError },
    #[error("vehicles {a} and {b} co-occupy a cell at step {step}")]
    CoOccupancy { step: u64, a: u32, b: u32 },
    #[error("controller failure: {0}")]
    Controller(String),
    #[error("log: {0}")]
    Log(String),
}
