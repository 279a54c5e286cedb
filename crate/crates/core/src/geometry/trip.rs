use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::corridor::{CorridorNetwork, EntryPoint};
use super::grid::{CellIndex, Movement};
use super::GeometryError;

/// Dense identifier of a reservable cell anywhere in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Maps dense cell ids back to grid coordinates.
#[derive(Debug, Clone)]
pub struct CellSpace {
    /// (first id, grid id, side length) per grid, ascending.
    grids: Vec<(u32, u16, u16)>,
    grid_end: u32,
    total: u32,
}

impl CellSpace {
    pub fn new(net: &CorridorNetwork) -> Self {
        let grids: Vec<(u32, u16, u16)> = net
            .grids
            .iter()
            .enumerate()
            .map(|(i, g)| (net.grid_cell_base(i), g.id, g.n_rows))
            .collect();
        let grid_end = net
            .grids
            .last()
            .map_or(0, |g| net.grid_cell_base(net.grids.len() - 1) + g.n_cells() as u32);
        CellSpace { grids, grid_end, total: net.n_cells() }
    }

    pub fn len(&self) -> usize {
        self.total as usize
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn grid_cell(&self, id: CellId) -> Option<CellIndex> {
        if id.0 >= self.grid_end {
            return None;
        }
        let i = self.grids.partition_point(|g| g.0 <= id.0) - 1;
        let (base, gid, n) = self.grids[i];
        let off = id.0 - base;
        Some(CellIndex { intersection: gid, row: (off / u32::from(n)) as u16, col: (off % u32::from(n)) as u16 })
    }
}

/// One grid traversal within a trip, in trip arc coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridVisit {
    /// Intersection index in west-to-east order.
    pub intersection: usize,
    pub movement: Movement,
    pub start: f64,
    pub box_entry: f64,
    pub box_exit: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Strip { strip: usize, start: f64, end: f64 },
    Grid { visit: usize, start: f64, end: f64 },
}

impl Segment {
    pub fn start(&self) -> f64 {
        match *self {
            Segment::Strip { start, .. } | Segment::Grid { start, .. } => start,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            Segment::Strip { end, .. } | Segment::Grid { end, .. } => end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripCell {
    pub start: f64,
    pub end: f64,
    pub id: CellId,
}

/// The full origin-to-exit route of one vehicle as a sequence of cells.
///
/// A vehicle switches to the lane of its next movement where a link or entry
/// leg begins; inside grids it follows the rasterised movement path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub entry: EntryPoint,
    pub segments: Vec<Segment>,
    pub visits: Vec<GridVisit>,
    pub cells: Vec<TripCell>,
    pub total_length: f64,
}

impl Trip {
    pub fn build(net: &CorridorNetwork, entry: EntryPoint, movements: &[Movement]) -> Result<Trip, GeometryError> {
        let first = movements
            .first()
            .ok_or_else(|| GeometryError::NoRoute("a trip needs at least one movement".into()))?;
        if first.approach != entry.approach || entry.intersection >= net.n_intersections() {
            return Err(GeometryError::NoRoute(format!("movement {first} does not start at the entry point")));
        }
        let cs = net.cell_size();
        let mut t = Trip { entry, segments: vec![], visits: vec![], cells: vec![], total_length: 0.0 };
        let mut s = 0.0;

        let push_strip = |t: &mut Trip, s: &mut f64, strip: usize| {
            let st = &net.strips[strip];
            let start = *s;
            for c in 0..st.n_cells {
                let a = start + f64::from(c) * cs;
                let b = (start + f64::from(c + 1) * cs).min(start + st.length);
                t.cells.push(TripCell { start: a, end: b, id: CellId(st.first_cell + c) });
            }
            *s += st.length;
            t.segments.push(Segment::Strip { strip, start, end: *s });
        };

        if let Some(strip) = net.entry_strip(entry.intersection, entry.approach, first.lane) {
            push_strip(&mut t, &mut s, strip);
        }
        let mut here = entry.intersection;
        for (j, &m) in movements.iter().enumerate() {
            let path = net.path(here, m)?;
            let grid = &net.grids[here];
            let base = net.grid_cell_base(here);
            let start = s;
            for (w, &(a, cell)) in path.waypoints.iter().enumerate() {
                let (_, b) = path.span(w);
                let id = base + u32::from(cell.row) * u32::from(grid.n_cols) + u32::from(cell.col);
                t.cells.push(TripCell { start: start + a, end: start + b, id: CellId(id) });
            }
            s += path.total_length;
            t.visits.push(GridVisit {
                intersection: here,
                movement: m,
                start,
                box_entry: start + path.box_entry,
                box_exit: start + path.box_exit,
                end: s,
            });
            t.segments.push(Segment::Grid { visit: j, start, end: s });
            match net.neighbour(here, path.exit_side) {
                Some((next, approach)) => {
                    let nm = movements.get(j + 1).ok_or_else(|| {
                        GeometryError::NoRoute(format!("trip ends inside the network after {m}"))
                    })?;
                    if nm.approach != approach {
                        return Err(GeometryError::NoRoute(format!("{nm} cannot follow {m}")));
                    }
                    let strip = net
                        .link_strip(next, approach, nm.lane)
                        .ok_or_else(|| GeometryError::NoRoute(format!("no link lane for {nm}")))?;
                    push_strip(&mut t, &mut s, strip);
                    here = next;
                }
                None => {
                    if j + 1 != movements.len() {
                        return Err(GeometryError::NoRoute(format!("{m} leaves the network")));
                    }
                    if let Some(strip) = net.exit_strip(here, path.exit_side, path.exit_lane) {
                        push_strip(&mut t, &mut s, strip);
                    }
                }
            }
        }
        t.total_length = s;
        Ok(t)
    }

    /// Indices of the trip cells touched by the closed interval `[a, b]`,
    /// clipped to the trip, using half-open cell spans.
    pub fn cell_range(&self, a: f64, b: f64) -> Range<usize> {
        let a = a.clamp(0.0, self.total_length);
        let b = b.clamp(a, self.total_length);
        let first = self.cells.partition_point(|c| c.start <= a).saturating_sub(1);
        let last = if b > a { self.cells.partition_point(|c| c.start < b).saturating_sub(1) } else { first };
        first..last.max(first) + 1
    }

    /// Index of the trip cell containing `s`.
    pub fn cell_at(&self, s: f64) -> usize {
        self.cells.partition_point(|c| c.start <= s).saturating_sub(1)
    }

    /// Segment containing arc position `s` (the last one at the trip end).
    pub fn segment_at(&self, s: f64) -> usize {
        self.segments.partition_point(|g| g.start() <= s).saturating_sub(1)
    }

    /// First grid visit whose box has not been fully passed by position `s`.
    pub fn next_visit(&self, s: f64) -> Option<&GridVisit> {
        self.visits.iter().find(|v| v.box_exit > s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_corridor, Approach, CorridorConfig, Turn};

    #[test]
    fn arterial_through_trip() {
        let net = build_corridor(&CorridorConfig::chain(2, 100.0)).unwrap();
        let entry = EntryPoint { intersection: 0, approach: Approach::West };
        let m0 = Movement::new(Approach::West, 1, Turn::Through);
        let trip = Trip::build(&net, entry, &[m0, m0]).unwrap();
        assert_eq!(trip.visits.len(), 2);
        assert_eq!(trip.segments.len(), 4);
        let expect = 150.0 + 40.0 + 100.0 + 40.0;
        assert!((trip.total_length - expect).abs() < 1e-9);
        for w in trip.cells.windows(2) {
            assert!((w[0].end - w[1].start).abs() < 1e-9);
        }
        assert!(trip.cells.iter().all(|c| c.end > c.start));
        let space = CellSpace::new(&net);
        let g = trip.cells.iter().filter_map(|c| space.grid_cell(c.id)).count();
        assert_eq!(g, 32);
        for w in trip.cells.windows(2) {
            assert_ne!(w[0].id, w[1].id);
        }
    }

    #[test]
    fn inconsistent_routes_rejected() {
        let net = build_corridor(&CorridorConfig::chain(2, 100.0)).unwrap();
        let entry = EntryPoint { intersection: 0, approach: Approach::West };
        let t = Movement::new(Approach::West, 1, Turn::Through);
        assert!(Trip::build(&net, entry, &[t]).is_err());
        let wrong = Movement::new(Approach::North, 1, Turn::Through);
        assert!(Trip::build(&net, entry, &[t, wrong]).is_err());
        let left = Movement::new(Approach::West, 0, Turn::Left);
        assert!(Trip::build(&net, entry, &[left, t]).is_err());
        assert!(Trip::build(&net, entry, &[left]).is_ok());
    }

    #[test]
    fn cell_range_semantics() {
        let net = build_corridor(&CorridorConfig::chain(1, 100.0)).unwrap();
        let entry = EntryPoint { intersection: 0, approach: Approach::North };
        let trip = Trip::build(&net, entry, &[Movement::new(Approach::North, 1, Turn::Through)]).unwrap();
        assert_eq!(trip.cell_range(0.0, 0.0).len(), 1);
        assert_eq!(trip.cell_range(2.5, 7.4).len(), 2);
        assert_eq!(trip.cell_range(2.5, 7.5).len(), 2);
        assert_eq!(trip.cell_range(2.4, 7.6).len(), 4);
        assert_eq!(trip.cell_range(-10.0, 0.1), 0..1);
        let n = trip.cells.len();
        assert_eq!(trip.cell_range(trip.total_length, trip.total_length + 5.0), n - 1..n);
    }
}
