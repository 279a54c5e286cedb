use std::f64::consts::{FRAC_PI_2, PI};

use super::grid::{Approach, CellIndex, IntersectionGrid, Movement, Turn};
use super::GeometryError;

/// A movement rasterised onto its grid.
///
/// `waypoints[i] = (s, cell)` means the path enters `cell` at arc length `s`
/// and stays in it until the next waypoint (or `total_length`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    pub intersection: u16,
    pub movement: Movement,
    pub waypoints: Vec<(f64, CellIndex)>,
    pub total_length: f64,
    /// Arc length at which the path crosses into the box.
    pub box_entry: f64,
    pub box_exit: f64,
    /// Side of the grid the path leaves through.
    pub exit_side: Approach,
    /// Index of the receiving lane on the exit side, 0 at the median.
    pub exit_lane: u16,
}

impl RoutePath {
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.waypoints.iter().map(|w| w.1)
    }

    /// Arc range `[start, end)` covered by waypoint `i`.
    pub fn span(&self, i: usize) -> (f64, f64) {
        let start = self.waypoints[i].0;
        let end = self.waypoints.get(i + 1).map_or(self.total_length, |w| w.0);
        (start, end)
    }

    /// Index of the waypoint whose half-open span contains `s` (the last one at `s = total`).
    fn index_at(&self, s: f64) -> usize {
        let i = self.waypoints.partition_point(|w| w.0 <= s);
        i.saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { x0: f64, y0: f64, x1: f64, y1: f64 },
    Arc { cx: f64, cy: f64, r: f64, th0: f64, th1: f64 },
}

impl Piece {
    /// Length in cell units.
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { x0, y0, x1, y1 } => (x1 - x0).hypot(y1 - y0),
            Piece::Arc { r, th0, th1, .. } => r * (th1 - th0).abs(),
        }
    }

    fn point(&self, u: f64) -> (f64, f64) {
        match *self {
            Piece::Line { x0, y0, x1, y1 } => (x0 + (x1 - x0) * u, y0 + (y1 - y0) * u),
            Piece::Arc { cx, cy, r, th0, th1 } => {
                let th = th0 + (th1 - th0) * u;
                (cx + r * th.cos(), cy + r * th.sin())
            }
        }
    }

    /// Normalised parameters in (0, 1) at which the piece crosses a grid line.
    fn crossings(&self, n: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match *self {
            Piece::Line { x0, y0, x1, y1 } => {
                for (a, b) in [(x0, x1), (y0, y1)] {
                    if (b - a).abs() < 1e-12 {
                        continue;
                    }
                    let (lo, hi) = (a.min(b), a.max(b));
                    let mut m = lo.floor() + 1.0;
                    while m < hi && m <= n {
                        out.push((m - a) / (b - a));
                        m += 1.0;
                    }
                }
            }
            Piece::Arc { cx, cy, r, th0, th1 } => {
                let (lo, hi) = (th0.min(th1), th0.max(th1));
                let mut push = |th: f64| {
                    if th > lo + 1e-12 && th < hi - 1e-12 {
                        out.push((th - th0) / (th1 - th0));
                    }
                };
                let mut m = 0.0;
                while m <= n {
                    let cx_ratio = (m - cx) / r;
                    if cx_ratio.abs() <= 1.0 {
                        let a = cx_ratio.acos();
                        push(a);
                        push(-a);
                        push(2.0 * PI - a);
                    }
                    let cy_ratio = (m - cy) / r;
                    if cy_ratio.abs() <= 1.0 {
                        let a = cy_ratio.asin();
                        push(a);
                        push(PI - a);
                        push(a + 2.0 * PI);
                    }
                    m += 1.0;
                }
            }
        }
        out
    }
}

/// Pieces of the movement in the frame where it approaches from the north.
fn canonical_pieces(grid: &IntersectionGrid, lane: u16, turn: Turn) -> (Vec<Piece>, u16) {
    let e = f64::from(grid.extension_cells);
    let l = f64::from(grid.lanes_per_approach);
    let n = f64::from(grid.n_rows);
    let k = f64::from(lane);
    let x0 = e + l - 1.0 - k + 0.5;
    let mut pieces = vec![Piece::Line { x0, y0: 0.0, x1: x0, y1: e }];
    match turn {
        Turn::Through => pieces.push(Piece::Line { x0, y0: e, x1: x0, y1: n - e }),
        Turn::Left => {
            let (cx, cy) = (e + 2.0 * l, e);
            let r = cx - x0;
            pieces.push(Piece::Arc { cx, cy, r, th0: PI, th1: FRAC_PI_2 });
        }
        Turn::Right => {
            let (cx, cy) = (e, e);
            let r = x0 - e;
            pieces.push(Piece::Arc { cx, cy, r, th0: 0.0, th1: FRAC_PI_2 });
        }
    }
    let (xe, ye) = match pieces[1] {
        p @ Piece::Arc { .. } => p.point(1.0),
        Piece::Line { x1, y1, .. } => (x1, y1),
    };
    let exit = match turn {
        Turn::Through => Piece::Line { x0: xe, y0: ye, x1: xe, y1: n },
        Turn::Left => Piece::Line { x0: xe, y0: ye, x1: n, y1: ye },
        Turn::Right => Piece::Line { x0: xe, y0: ye, x1: 0.0, y1: ye },
    };
    pieces.push(exit);
    // receiving lane keeps the entry lane index under every turn
    (pieces, lane)
}

/// Rotate a canonical (north-approach) cell clockwise `times` quarter turns.
fn rotate_cell(n: u16, col: u16, row: u16, times: usize) -> (u16, u16) {
    let (mut c, mut r) = (col, row);
    for _ in 0..times {
        (c, r) = (n - 1 - r, c);
    }
    (c, r)
}

/// Rasterise a movement onto the grid.
pub fn movement_path(grid: &IntersectionGrid, movement: Movement) -> Result<RoutePath, GeometryError> {
    grid.validate_movement(movement)?;
    let n = grid.n_rows;
    let nf = f64::from(n);
    let cs = grid.cell_size;
    let (pieces, exit_lane) = canonical_pieces(grid, movement.lane, movement.turn);

    // breakpoints as (global arc in cell units)
    let mut starts = Vec::with_capacity(pieces.len());
    let mut acc = 0.0;
    for p in &pieces {
        starts.push(acc);
        acc += p.length();
    }
    let total_units = acc;
    let mut breaks: Vec<f64> = vec![0.0, total_units];
    for (p, &s0) in pieces.iter().zip(&starts) {
        let len = p.length();
        if len <= 0.0 {
            continue;
        }
        breaks.push(s0);
        breaks.extend(p.crossings(nf).into_iter().map(|u| s0 + u * len));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let point_at = |s: f64| -> (f64, f64) {
        let mut idx = 0;
        for (i, &s0) in starts.iter().enumerate() {
            if s >= s0 && pieces[i].length() > 0.0 {
                idx = i;
            }
        }
        let p = &pieces[idx];
        p.point(((s - starts[idx]) / p.length()).clamp(0.0, 1.0))
    };

    let max = f64::from(n - 1);
    let mut waypoints: Vec<(f64, CellIndex)> = Vec::new();
    for w in breaks.windows(2) {
        let (x, y) = point_at(0.5 * (w[0] + w[1]));
        let col = x.floor().clamp(0.0, max) as u16;
        let row = y.floor().clamp(0.0, max) as u16;
        let (c, r) = rotate_cell(n, col, row, movement.approach.index());
        let cell = grid.cell(r, c);
        if waypoints.last().map(|w| w.1) != Some(cell) {
            waypoints.push((w[0] * cs, cell));
        }
    }
    let total_length = total_units * cs;
    let ext = grid.extension_length();
    Ok(RoutePath {
        intersection: grid.id,
        movement,
        waypoints,
        total_length,
        box_entry: ext,
        box_exit: total_length - ext,
        exit_side: movement.approach.exit_side(movement.turn),
        exit_lane,
    })
}

/// Cells touched by a vehicle body spanning `[position - length, position]`,
/// clipped to the path. Cell spans are half-open, so a body ending exactly on
/// a boundary does not touch the next cell.
pub fn cells_occupied(position: f64, length: f64, path: &RoutePath) -> Result<Vec<CellIndex>, GeometryError> {
    if !(0.0..=path.total_length).contains(&position) || position.is_nan() {
        return Err(GeometryError::OffRoute { position, total: path.total_length });
    }
    let rear = (position - length.max(0.0)).max(0.0);
    let first = path.index_at(rear);
    let last = if position > rear {
        // last waypoint starting strictly before the nose
        path.waypoints.partition_point(|w| w.0 < position).saturating_sub(1)
    } else {
        first
    };
    Ok(path.waypoints[first..=last.max(first)].iter().map(|w| w.1).collect())
}

/// Two movements conflict when they come from different approaches and
/// share at least one box cell.
pub fn movements_conflict(a: &RoutePath, b: &RoutePath, grid: &IntersectionGrid) -> bool {
    if a.movement.approach == b.movement.approach {
        return false;
    }
    a.cells()
        .filter(|c| grid.in_box(c.row, c.col))
        .any(|c| b.cells().any(|d| d == c))
}

/// Pairwise movement conflict lookup for one grid layout.
#[derive(Debug, Clone)]
pub struct ConflictTable {
    movements: Vec<Movement>,
    conflicts: Vec<bool>,
}

impl ConflictTable {
    pub fn build(grid: &IntersectionGrid) -> Self {
        let movements = grid.movements();
        let paths: Vec<RoutePath> = movements
            .iter()
            .map(|&m| movement_path(grid, m).expect("channelised movement"))
            .collect();
        let k = movements.len();
        let mut conflicts = vec![false; k * k];
        for i in 0..k {
            for j in 0..k {
                conflicts[i * k + j] = movements_conflict(&paths[i], &paths[j], grid);
            }
        }
        ConflictTable { movements, conflicts }
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn index(&self, m: Movement) -> Option<usize> {
        self.movements.iter().position(|&x| x == m)
    }

    pub fn conflict(&self, a: Movement, b: Movement) -> bool {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.conflicts[i * self.movements.len() + j],
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridConfig;

    fn grid(lanes: u16) -> IntersectionGrid {
        IntersectionGrid::build(0, &GridConfig { lanes_per_approach: lanes, ..Default::default() }).unwrap()
    }

    #[test]
    fn through_path_is_straight_across_the_raster() {
        let g = grid(6);
        assert_eq!(g.box_size(), 12);
        let p = movement_path(&g, Movement::new(Approach::North, 2, Turn::Through)).unwrap();
        assert_eq!(p.waypoints.len(), 12 + 2 * 5);
        let col = p.waypoints[0].1.col;
        assert!(p.cells().all(|c| c.col == col));
        for (i, w) in p.waypoints.iter().enumerate() {
            assert_eq!(w.1.row as usize, i);
            assert!((w.0 - 2.5 * i as f64).abs() < 1e-9);
        }
        assert!((p.total_length - 55.0).abs() < 1e-9);
    }

    #[test]
    fn right_turn_from_curb_lane_stays_in_corner_quadrant() {
        let g = grid(3);
        let half = g.extension_cells + g.lanes_per_approach;
        for a in Approach::ALL {
            let p = movement_path(&g, Movement::new(a, 2, Turn::Right)).unwrap();
            // quadrant on the approach's right-hand side
            let (rows, cols) = match a {
                Approach::North => (0..half, 0..half),
                Approach::East => (0..half, half..g.n_cols),
                Approach::South => (half..g.n_rows, half..g.n_cols),
                Approach::West => (half..g.n_rows, 0..half),
            };
            assert!(p.cells().all(|c| rows.contains(&c.row) && cols.contains(&c.col)), "{a:?}");
        }
    }

    #[test]
    fn identical_movements_give_identical_paths() {
        let g = grid(3);
        let m = Movement::new(Approach::West, 1, Turn::Through);
        assert_eq!(movement_path(&g, m).unwrap(), movement_path(&g, m).unwrap());
    }

    #[test]
    fn invalid_channelisation_is_rejected() {
        let g = grid(3);
        let m = Movement::new(Approach::North, 1, Turn::Left);
        assert_eq!(movement_path(&g, m), Err(GeometryError::InvalidMovement(m)));
    }

    #[test]
    fn all_paths_are_connected_and_land_in_receiving_lane() {
        for lanes in 1..=4 {
            let g = grid(lanes);
            for m in g.movements() {
                let p = movement_path(&g, m).unwrap();
                for w in p.waypoints.windows(2) {
                    assert!(w[1].0 > w[0].0);
                    let dr = (i32::from(w[0].1.row) - i32::from(w[1].1.row)).abs();
                    let dc = (i32::from(w[0].1.col) - i32::from(w[1].1.col)).abs();
                    assert!(dr <= 1 && dc <= 1 && dr + dc > 0, "{m}: {:?}", w);
                }
                let last = p.waypoints.last().unwrap().1;
                let ext = g.extension_cells;
                let e = ext + g.lanes_per_approach;
                // exit cell sits on the outer edge of the receiving side, in
                // the outbound half of that leg
                let expect = match p.exit_side {
                    Approach::North => (0, e + p.exit_lane),
                    Approach::East => (e + p.exit_lane, g.n_cols - 1),
                    Approach::South => (g.n_rows - 1, e - 1 - p.exit_lane),
                    Approach::West => (e - 1 - p.exit_lane, 0),
                };
                assert_eq!((last.row, last.col), expect, "{m}");
                assert!((p.box_exit - p.box_entry - (p.total_length - 2.0 * g.extension_length())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn occupied_cell_counts() {
        let g = grid(3);
        let p = movement_path(&g, Movement::new(Approach::North, 1, Turn::Through)).unwrap();
        // rear exactly on a boundary
        assert_eq!(cells_occupied(5.0 + 4.9, 4.9, &p).unwrap().len(), 2);
        // straddling two boundaries
        assert_eq!(cells_occupied(5.3 + 4.9, 4.9, &p).unwrap().len(), 3);
        assert_eq!(cells_occupied(0.0, 4.9, &p).unwrap().len(), 1);
        assert_eq!(cells_occupied(p.total_length, 4.9, &p).unwrap().len(), 2);
        assert!(matches!(cells_occupied(-0.1, 4.9, &p), Err(GeometryError::OffRoute { .. })));
        assert!(cells_occupied(p.total_length + 0.1, 4.9, &p).is_err());
    }

    #[test]
    fn conflict_table_basics() {
        let g = grid(3);
        let t = ConflictTable::build(&g);
        let nt = Movement::new(Approach::North, 1, Turn::Through);
        let et = Movement::new(Approach::East, 1, Turn::Through);
        let st = Movement::new(Approach::South, 1, Turn::Through);
        let sl = Movement::new(Approach::South, 0, Turn::Left);
        let nl = Movement::new(Approach::North, 0, Turn::Left);
        let nr = Movement::new(Approach::North, 2, Turn::Right);
        assert!(t.conflict(nt, et));
        assert!(!t.conflict(nt, st));
        assert!(t.conflict(nt, sl));
        assert!(!t.conflict(nl, sl));
        assert!(!t.conflict(nr, st));
        for &a in t.movements() {
            for &b in t.movements() {
                assert_eq!(t.conflict(a, b), t.conflict(b, a));
            }
        }
    }
}
