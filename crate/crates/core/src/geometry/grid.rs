use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use super::GeometryError;

/// One square tile of an intersection grid.
///
/// Ordering is lexicographic over `(intersection, row, col)` and is used as
/// the deterministic tie-break wherever cells are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub intersection: u16,
    pub row: u16,
    pub col: u16,
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{},{}", self.intersection, self.row, self.col)
    }
}

/// Side of the intersection a vehicle arrives from, clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    North,
    East,
    South,
    West,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::North, Approach::East, Approach::South, Approach::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Approach {
        Self::ALL[i % 4]
    }

    pub fn opposite(self) -> Approach {
        Self::from_index(self.index() + 2)
    }

    /// Side of the box a vehicle leaves through after making `turn`.
    pub fn exit_side(self, turn: Turn) -> Approach {
        match turn {
            Turn::Left => Self::from_index(self.index() + 1),
            Turn::Through => Self::from_index(self.index() + 2),
            Turn::Right => Self::from_index(self.index() + 3),
        }
    }

    /// East and west legs carry the arterial.
    pub fn is_major(self) -> bool {
        matches!(self, Approach::East | Approach::West)
    }

    pub fn letter(self) -> char {
        match self {
            Approach::North => 'N',
            Approach::East => 'E',
            Approach::South => 'S',
            Approach::West => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A lane-level movement through one intersection. Lane 0 is the median-side lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Movement {
    pub approach: Approach,
    pub lane: u16,
    pub turn: Turn,
}

impl Movement {
    pub fn new(approach: Approach, lane: u16, turn: Turn) -> Self {
        Movement { approach, lane, turn }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.turn {
            Turn::Left => 'L',
            Turn::Through => 'T',
            Turn::Right => 'R',
        };
        write!(f, "{}{}{}", self.approach.letter(), self.lane, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Edge length of one cell in metres.
    pub cell_size: f64,
    pub lanes_per_approach: u16,
    /// Cells of approach (and departure) extension outside the box.
    pub extension_cells: u16,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cell_size: 2.5, lanes_per_approach: 3, extension_cells: 5 }
    }
}

/// Square cell raster of one intersection.
///
/// Each approach leg has `lanes_per_approach` inbound and as many outbound
/// lanes, one cell wide each, so the box is `2·lanes` cells across and the
/// full raster adds `extension_cells` on every side. Rows grow southward and
/// columns eastward; traffic keeps right.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionGrid {
    pub id: u16,
    pub cell_size: f64,
    pub lanes_per_approach: u16,
    pub extension_cells: u16,
    pub n_rows: u16,
    pub n_cols: u16,
}

const TEXT_HEADER: &str = "intersection-grid v1";

impl IntersectionGrid {
    pub fn build(id: u16, config: &GridConfig) -> Result<Self, GeometryError> {
        if !(config.cell_size.is_finite() && config.cell_size > 0.0) {
            return Err(GeometryError::InvalidDimension(format!(
                "cell_size must be positive, got {}",
                config.cell_size
            )));
        }
        if config.lanes_per_approach == 0 {
            return Err(GeometryError::InvalidDimension(
                "lanes_per_approach must be at least 1".into(),
            ));
        }
        let n = 2 * u32::from(config.lanes_per_approach) + 2 * u32::from(config.extension_cells);
        if n > u32::from(u16::MAX) {
            return Err(GeometryError::InvalidDimension("grid too large".into()));
        }
        Ok(IntersectionGrid {
            id,
            cell_size: config.cell_size,
            lanes_per_approach: config.lanes_per_approach,
            extension_cells: config.extension_cells,
            n_rows: n as u16,
            n_cols: n as u16,
        })
    }

    pub fn config(&self) -> GridConfig {
        GridConfig {
            cell_size: self.cell_size,
            lanes_per_approach: self.lanes_per_approach,
            extension_cells: self.extension_cells,
        }
    }

    pub fn n_cells(&self) -> usize {
        usize::from(self.n_rows) * usize::from(self.n_cols)
    }

    pub fn box_size(&self) -> u16 {
        2 * self.lanes_per_approach
    }

    pub fn extension_length(&self) -> f64 {
        f64::from(self.extension_cells) * self.cell_size
    }

    pub fn in_box(&self, row: u16, col: u16) -> bool {
        let lo = self.extension_cells;
        let hi = lo + self.box_size();
        (lo..hi).contains(&row) && (lo..hi).contains(&col)
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.intersection == self.id && cell.row < self.n_rows && cell.col < self.n_cols
    }

    pub fn cell(&self, row: u16, col: u16) -> CellIndex {
        CellIndex { intersection: self.id, row, col }
    }

    /// Turns permitted from `lane` under the channelisation: with three or
    /// more lanes the median lane is a dedicated left and the curb lane a
    /// dedicated right.
    pub fn lane_turns(&self, lane: u16) -> &'static [Turn] {
        let n = self.lanes_per_approach;
        if lane >= n {
            return &[];
        }
        match n {
            1 => &[Turn::Left, Turn::Through, Turn::Right],
            2 if lane == 0 => &[Turn::Left, Turn::Through],
            2 => &[Turn::Through, Turn::Right],
            _ if lane == 0 => &[Turn::Left],
            _ if lane == n - 1 => &[Turn::Right],
            _ => &[Turn::Through],
        }
    }

    pub fn lanes_for(&self, turn: Turn) -> Vec<u16> {
        (0..self.lanes_per_approach).filter(|&l| self.lane_turns(l).contains(&turn)).collect()
    }

    pub fn validate_movement(&self, m: Movement) -> Result<(), GeometryError> {
        if self.lane_turns(m.lane).contains(&m.turn) {
            Ok(())
        } else {
            Err(GeometryError::InvalidMovement(m))
        }
    }

    /// Every channelisation-valid movement, in (approach, lane, turn) order.
    pub fn movements(&self) -> Vec<Movement> {
        let mut out = Vec::new();
        for a in Approach::ALL {
            for lane in 0..self.lanes_per_approach {
                for &t in self.lane_turns(lane) {
                    out.push(Movement::new(a, lane, t));
                }
            }
        }
        out
    }

    /// Versioned text form used for fixtures and fingerprints.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(TEXT_HEADER);
        s.push('\n');
        s.push_str(&format!("id {}\n", self.id));
        s.push_str(&format!("cell_size {:?}\n", self.cell_size));
        s.push_str(&format!("lanes_per_approach {}\n", self.lanes_per_approach));
        s.push_str(&format!("extension_cells {}\n", self.extension_cells));
        s.push_str(&format!("n_rows {}\nn_cols {}\n", self.n_rows, self.n_cols));
        // 'B' box, 'x' approach extension, '.' outside the plus shape
        for r in 0..self.n_rows {
            let line: String = (0..self.n_cols)
                .map(|c| {
                    if self.in_box(r, c) {
                        'B'
                    } else {
                        let ext = self.extension_cells;
                        let hi = ext + self.box_size();
                        let in_rows = (ext..hi).contains(&r);
                        let in_cols = (ext..hi).contains(&c);
                        if in_rows || in_cols {
                            'x'
                        } else {
                            '.'
                        }
                    }
                })
                .collect();
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GeometryError> {
        let mut lines = text.lines();
        if lines.next() != Some(TEXT_HEADER) {
            return Err(GeometryError::Parse("missing or unsupported grid header".into()));
        }
        let mut field = |name: &str| -> Result<String, GeometryError> {
            let line = lines.next().ok_or_else(|| GeometryError::Parse(format!("missing {name}")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| GeometryError::Parse(format!("malformed line {line:?}")))?;
            if k != name {
                return Err(GeometryError::Parse(format!("expected {name}, found {k}")));
            }
            Ok(v.to_string())
        };
        let parse_err = |e: &dyn fmt::Display| GeometryError::Parse(e.to_string());
        let id: u16 = field("id")?.parse().map_err(|e| parse_err(&e))?;
        let cell_size: f64 = field("cell_size")?.parse().map_err(|e| parse_err(&e))?;
        let lanes: u16 = field("lanes_per_approach")?.parse().map_err(|e| parse_err(&e))?;
        let ext: u16 = field("extension_cells")?.parse().map_err(|e| parse_err(&e))?;
        let grid = IntersectionGrid::build(
            id,
            &GridConfig { cell_size, lanes_per_approach: lanes, extension_cells: ext },
        )?;
        if grid.to_text() != text {
            return Err(GeometryError::Parse("grid body does not match its header".into()));
        }
        Ok(grid)
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
