//! Evaluation measures computed from episode logs.

mod delay;
mod pet;
mod stats;
mod summary;

use thiserror::Error;

pub use delay::{delay_from_travel, throughput, vehicle_delay, vehicle_records, Throughput, VehicleRecord};
pub use pet::{box_occupancies, compute_pet, pet_events, summarize_pet, CellOccupancy, PetEvent, PetSummary, DEFAULT_PET_MAX};
pub use stats::{mean_sd, welch_test, WelchResult};
pub use summary::{
    compare, episode_metrics, read_metrics_csv, summarize, write_comparison_csv, write_metrics_csv, write_summary_csv,
    ComparisonReport, ComparisonRow, EpisodeMetrics, MetricStat, MetricsSummary, METRICS_SCHEMA, METRIC_NAMES,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(u32),
    #[error("no logs given")]
    Empty,
    #[error("logs disagree: {0}")]
    Inconsistent(String),
    #[error("need at least {need} samples per side, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("bad metrics table: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
