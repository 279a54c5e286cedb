use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{CellIndex, ConflictTable, CorridorNetwork, Movement};
use crate::sim::EpisodeLog;

pub const DEFAULT_PET_MAX: f64 = 5.0;

/// One vehicle's stay on one box cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOccupancy {
    pub cell: CellIndex,
    pub vehicle: u32,
    pub movement: Movement,
    pub arrival: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetEvent {
    pub cell: CellIndex,
    pub first_vehicle: u32,
    pub second_vehicle: u32,
    pub first_movement: Movement,
    pub second_movement: Movement,
    /// Departure of the encroaching vehicle.
    pub exit_time: f64,
    /// Arrival of the following conflicting vehicle.
    pub arrival_time: f64,
    pub pet: f64,
}

/// Box cell stays reconstructed from step records. A record at time t
/// covers [t, t + dt).
pub fn box_occupancies(log: &EpisodeLog, net: &CorridorNetwork) -> Vec<CellOccupancy> {
    let dt = log.header.dt;
    let mut stays: BTreeMap<(CellIndex, u32), CellOccupancy> = BTreeMap::new();
    for r in &log.steps {
        let (Some(id), Some(movement)) = (r.intersection, r.movement) else { continue };
        for &cell in &r.cells {
            if cell.intersection != id {
                continue;
            }
            let Some(gi) = net.index_of(cell.intersection) else { continue };
            if !net.grids[gi].in_box(cell.row, cell.col) {
                continue;
            }
            stays
                .entry((cell, r.id))
                .and_modify(|o| {
                    o.arrival = o.arrival.min(r.time);
                    o.exit = o.exit.max(r.time + dt);
                })
                .or_insert(CellOccupancy { cell, vehicle: r.id, movement, arrival: r.time, exit: r.time + dt });
        }
    }
    stays.into_values().collect()
}

/// Events between consecutive visitors of each cell whose movements conflict.
pub fn pet_events(occupancies: &[CellOccupancy], conflicts: &ConflictTable, pet_max: f64) -> Vec<PetEvent> {
    let mut by_cell: BTreeMap<CellIndex, Vec<&CellOccupancy>> = BTreeMap::new();
    for o in occupancies {
        by_cell.entry(o.cell).or_default().push(o);
    }
    let mut out = Vec::new();
    for (cell, mut stays) in by_cell {
        stays.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.vehicle.cmp(&b.vehicle)));
        for w in stays.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.movement.approach == b.movement.approach || !conflicts.conflict(a.movement, b.movement) {
                continue;
            }
            let pet = b.arrival - a.exit;
            if pet <= pet_max + 1e-9 {
                out.push(PetEvent {
                    cell,
                    first_vehicle: a.vehicle,
                    second_vehicle: b.vehicle,
                    first_movement: a.movement,
                    second_movement: b.movement,
                    exit_time: a.exit,
                    arrival_time: b.arrival,
                    pet,
                });
            }
        }
    }
    out
}

pub fn compute_pet(log: &EpisodeLog, net: &CorridorNetwork, pet_max: f64) -> Vec<PetEvent> {
    pet_events(&box_occupancies(log, net), &net.conflicts, pet_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetSummary {
    pub count: usize,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub p15: Option<f64>,
    pub median: Option<f64>,
}

pub fn summarize_pet(events: &[PetEvent]) -> PetSummary {
    if events.is_empty() {
        return PetSummary { count: 0, min: None, mean: None, p15: None, median: None };
    }
    let mut v: Vec<f64> = events.iter().map(|e| e.pet).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    PetSummary {
        count: v.len(),
        min: Some(v[0]),
        mean: Some(v.iter().sum::<f64>() / v.len() as f64),
        p15: Some(q(0.15)),
        median: Some(q(0.5)),
    }
}
