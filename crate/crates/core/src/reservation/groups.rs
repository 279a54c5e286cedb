use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DesiredCellSet, ReservationError};
use crate::geometry::CellId;

/// A connected component of leaders linked by shared desired cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationGroup {
    /// Smallest member id.
    pub id: u32,
    /// Ascending.
    pub members: Vec<u32>,
    pub shared_cells: Vec<CellId>,
}

impl CoordinationGroup {
    pub fn is_coordinated(&self) -> bool {
        self.members.len() >= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionType {
    SameKind,
    CoordinatedToIndependent,
    IndependentToCoordinated,
}

impl TransitionType {
    pub fn from_sizes(prev: usize, next: usize) -> Self {
        match (prev >= 2, next >= 2) {
            (true, false) => TransitionType::CoordinatedToIndependent,
            (false, true) => TransitionType::IndependentToCoordinated,
            _ => TransitionType::SameKind,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Partition leaders into groups by the transitive closure of "shares a desired cell".
pub fn detect_conflicts(all: &[DesiredCellSet]) -> Result<Vec<CoordinationGroup>, ReservationError> {
    let mut seen = BTreeSet::new();
    for d in all {
        if !seen.insert(d.vehicle_id) {
            return Err(ReservationError::DuplicateVehicle(d.vehicle_id));
        }
    }
    let mut parent: Vec<usize> = (0..all.len()).collect();
    let mut first_claim: BTreeMap<CellId, usize> = BTreeMap::new();
    let mut shared: BTreeSet<CellId> = BTreeSet::new();
    for (i, d) in all.iter().enumerate() {
        for &c in &d.cells {
            match first_claim.get(&c) {
                Some(&j) => {
                    shared.insert(c);
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
                None => {
                    first_claim.insert(c, i);
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, (Vec<u32>, BTreeSet<CellId>)> = BTreeMap::new();
    for (i, d) in all.iter().enumerate() {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().0.push(d.vehicle_id);
    }
    for &c in &shared {
        let r = find(&mut parent, first_claim[&c]);
        comps.get_mut(&r).expect("component").1.insert(c);
    }
    let mut groups: Vec<CoordinationGroup> = comps
        .into_values()
        .map(|(mut members, cells)| {
            members.sort_unstable();
            CoordinationGroup { id: members[0], members, shared_cells: cells.into_iter().collect() }
        })
        .collect();
    groups.sort_by_key(|g| g.id);
    Ok(groups)
}

fn group_size(groups: &[CoordinationGroup], v: u32) -> Option<usize> {
    groups.iter().find(|g| g.members.binary_search(&v).is_ok()).map(|g| g.members.len())
}

pub fn classify_transition(
    prev: &[CoordinationGroup],
    next: &[CoordinationGroup],
    vehicle: u32,
) -> Result<TransitionType, ReservationError> {
    let a = group_size(prev, vehicle).ok_or(ReservationError::MissingVehicle(vehicle))?;
    let b = group_size(next, vehicle).ok_or(ReservationError::MissingVehicle(vehicle))?;
    Ok(TransitionType::from_sizes(a, b))
}
