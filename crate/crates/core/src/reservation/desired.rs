use super::ReservationError;
use crate::geometry::{CellId, Trip};
use crate::sim::KinematicsParams;

/// Cells a vehicle wants for its next step, beyond the cells it occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredCellSet {
    pub vehicle_id: u32,
    pub step: u64,
    /// Cell containing the nose.
    pub current: CellId,
    pub cells: Vec<CellId>,
    pub ds_cells: usize,
}

/// Reservation distance: the larger of the stop distance and the distance
/// that can be surveyed in one step.
pub fn ds_meters(speed: f64, k: &KinematicsParams) -> f64 {
    let stop = k.stop_distance(speed);
    let survey = if speed < k.vmax {
        speed * k.dt + 0.5 * k.a_acc * k.dt * k.dt
    } else {
        speed * k.dt
    };
    stop.max(survey)
}

pub fn ds_cells(speed: f64, k: &KinematicsParams, cell_size: f64) -> usize {
    // guard against 5.000000001 style round-off turning into an extra cell
    let cells = ds_meters(speed, k) / cell_size;
    (cells - 1e-9).ceil().max(0.0) as usize
}

pub fn desired_cells(
    vehicle_id: u32,
    step: u64,
    trip: &Trip,
    position: f64,
    speed: f64,
    k: &KinematicsParams,
    cell_size: f64,
) -> Result<DesiredCellSet, ReservationError> {
    if !(0.0..=trip.total_length).contains(&position) {
        return Err(ReservationError::OffRoute { position, total: trip.total_length });
    }
    let n = ds_cells(speed, k, cell_size);
    let nose = trip.cell_range(position, position).start;
    let nose = if position > 0.0 && (trip.cells[nose].start - position).abs() < 1e-12 && nose > 0 {
        // a nose resting exactly on a boundary still belongs to the cell behind
        nose - 1
    } else {
        nose
    };
    let end = (nose + 1 + n).min(trip.cells.len());
    Ok(DesiredCellSet {
        vehicle_id,
        step,
        current: trip.cells[nose].id,
        cells: trip.cells[nose + 1..end].iter().map(|c| c.id).collect(),
        ds_cells: n,
    })
}
