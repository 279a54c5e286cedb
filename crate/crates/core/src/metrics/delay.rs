use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::sim::{EpisodeLog, LogDetail, VehicleSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u32,
    pub entry_time: f64,
    pub exit_time: Option<f64>,
    pub total_delay: f64,
    pub route_length: f64,
}

pub fn vehicle_records(log: &EpisodeLog) -> Vec<VehicleRecord> {
    log.vehicles
        .iter()
        .map(|v| VehicleRecord {
            id: v.id,
            entry_time: v.release_time,
            exit_time: v.exit_time,
            total_delay: v.delay,
            route_length: v.route_length,
        })
        .collect()
}

/// Σ(dt − L/vmax) over the vehicle's steps. Full logs sum the step records;
/// other detail levels fall back to the accumulated summary.
pub fn vehicle_delay(log: &EpisodeLog, id: u32) -> Result<f64, MetricsError> {
    let v = log.vehicle(id).ok_or(MetricsError::UnknownVehicle(id))?;
    if log.header.detail == LogDetail::Full {
        Ok(-log.records_of(id).map(|r| r.reward_share).sum::<f64>())
    } else {
        Ok(v.delay)
    }
}

/// Travel time minus free-flow time, defined for completed vehicles.
pub fn delay_from_travel(v: &VehicleSummary, vmax: f64) -> Option<f64> {
    v.travel_time().map(|t| t - v.route_length / vmax)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Throughput {
    /// Vehicles whose arrival time has passed.
    pub released: usize,
    pub inserted: usize,
    pub exited: usize,
    /// Inserted but not yet exited.
    pub in_network: usize,
    /// Released but still waiting to enter.
    pub waiting: usize,
}

pub fn throughput(log: &EpisodeLog) -> Throughput {
    let mut t = Throughput { released: log.vehicles.len(), inserted: 0, exited: 0, in_network: 0, waiting: 0 };
    for v in &log.vehicles {
        match (v.insert_time, v.exit_time) {
            (Some(_), Some(_)) => {
                t.inserted += 1;
                t.exited += 1;
            }
            (Some(_), None) => {
                t.inserted += 1;
                t.in_network += 1;
            }
            _ => t.waiting += 1,
        }
    }
    t
}
