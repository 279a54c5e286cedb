use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{Approach, GridConfig, IntersectionGrid, Movement};
use super::path::{movement_path, ConflictTable, RoutePath};
use super::GeometryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// Western end.
    pub from: u16,
    /// Eastern end.
    pub to: u16,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorConfig {
    pub grid: GridConfig,
    /// Intersection ids. Their west-to-east order is taken from `links`.
    pub intersections: Vec<u16>,
    pub links: Vec<LinkSpec>,
    /// Upstream roadway in front of every entry approach, metres.
    pub entry_leg_length: f64,
    /// Downstream roadway after every exit side without a neighbour, metres.
    pub exit_leg_length: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        CorridorConfig::chain(4, 300.0)
    }
}

impl CorridorConfig {
    /// `n` intersections with ids `0..n` joined west to east by equal links.
    pub fn chain(n: u16, link_length: f64) -> Self {
        CorridorConfig {
            grid: GridConfig::default(),
            intersections: (0..n).collect(),
            links: (1..n).map(|i| LinkSpec { from: i - 1, to: i, length: link_length }).collect(),
            entry_leg_length: 150.0,
            exit_leg_length: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// Index (not id) of the western intersection.
    pub west: usize,
    pub east: usize,
    pub length: f64,
}

/// An approach where demand enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EntryPoint {
    pub intersection: usize,
    pub approach: Approach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripKind {
    /// Feeds `approach` of `intersection` from outside the network.
    Entry { intersection: usize, approach: Approach },
    /// Carries traffic from one grid into `approach` of `intersection`.
    Link { link: usize, intersection: usize, approach: Approach },
    /// Leaves the network from `side` of `intersection`.
    Exit { intersection: usize, side: Approach },
}

/// A one-lane roadway outside any grid, rasterised into cells along its length.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub kind: StripKind,
    pub lane: u16,
    pub length: f64,
    pub n_cells: u32,
    pub first_cell: u32,
}

#[derive(Debug, Clone)]
pub struct CorridorNetwork {
    pub config: CorridorConfig,
    /// Grids in west-to-east order.
    pub grids: Vec<IntersectionGrid>,
    pub links: Vec<Link>,
    pub entry_points: Vec<EntryPoint>,
    pub strips: Vec<Strip>,
    /// Movement paths per grid, in `ConflictTable::movements` order.
    pub paths: Vec<Vec<RoutePath>>,
    pub conflicts: ConflictTable,
    grid_cell_base: Vec<u32>,
    strip_lookup: BTreeMap<(u8, usize, usize, u16), usize>,
    n_cells: u32,
}

fn strip_key(kind: StripKind) -> (u8, usize, usize) {
    match kind {
        StripKind::Entry { intersection, approach } => (0, intersection, approach.index()),
        StripKind::Link { intersection, approach, .. } => (1, intersection, approach.index()),
        StripKind::Exit { intersection, side } => (2, intersection, side.index()),
    }
}

pub fn build_corridor(config: &CorridorConfig) -> Result<CorridorNetwork, GeometryError> {
    CorridorNetwork::build(config)
}

impl CorridorNetwork {
    pub fn build(config: &CorridorConfig) -> Result<Self, GeometryError> {
        if config.intersections.is_empty() {
            return Err(GeometryError::InvalidDimension("at least one intersection is required".into()));
        }
        for (name, v) in [("entry_leg_length", config.entry_leg_length), ("exit_leg_length", config.exit_leg_length)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GeometryError::InvalidDimension(format!("{name} must be non-negative, got {v}")));
            }
        }
        let mut position: BTreeMap<u16, usize> = BTreeMap::new();
        for (i, &id) in config.intersections.iter().enumerate() {
            if position.insert(id, i).is_some() {
                return Err(GeometryError::DuplicateId(id));
            }
        }
        let k = config.intersections.len();
        let mut east_of: Vec<Option<(usize, f64)>> = vec![None; k];
        let mut west_of: Vec<Option<usize>> = vec![None; k];
        for l in &config.links {
            let (&a, &b) = match (position.get(&l.from), position.get(&l.to)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(GeometryError::InvalidLink(format!(
                        "{} -> {} references an unknown intersection",
                        l.from, l.to
                    )))
                }
            };
            if !(l.length.is_finite() && l.length > 0.0) {
                return Err(GeometryError::InvalidLink(format!("{} -> {} has length {}", l.from, l.to, l.length)));
            }
            if a == b || east_of[a].is_some() || west_of[b].is_some() {
                return Err(GeometryError::InvalidLink(format!(
                    "{} -> {} breaks the west-to-east chain",
                    l.from, l.to
                )));
            }
            east_of[a] = Some((b, l.length));
            west_of[b] = Some(a);
        }
        let heads: Vec<usize> = (0..k).filter(|&i| west_of[i].is_none()).collect();
        if heads.len() != 1 {
            return Err(GeometryError::Disconnected(format!(
                "{} intersections have no western neighbour",
                heads.len()
            )));
        }
        let mut order = vec![heads[0]];
        while let Some((next, _)) = east_of[*order.last().unwrap()] {
            if order.len() > k {
                break;
            }
            order.push(next);
        }
        if order.len() != k {
            return Err(GeometryError::Disconnected("links do not reach every intersection".into()));
        }

        let mut grids = Vec::with_capacity(k);
        for &i in &order {
            grids.push(IntersectionGrid::build(config.intersections[i], &config.grid)?);
        }
        let links: Vec<Link> = (1..k)
            .map(|j| Link { west: j - 1, east: j, length: east_of[order[j - 1]].unwrap().1 })
            .collect();
        let conflicts = ConflictTable::build(&grids[0]);
        let paths = grids
            .iter()
            .map(|g| conflicts.movements().iter().map(|&m| movement_path(g, m)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;

        let mut entry_points = Vec::new();
        for i in 0..k {
            for a in Approach::ALL {
                let has_neighbour = match a {
                    Approach::West => i > 0,
                    Approach::East => i + 1 < k,
                    _ => false,
                };
                if !has_neighbour {
                    entry_points.push(EntryPoint { intersection: i, approach: a });
                }
            }
        }

        let mut grid_cell_base = Vec::with_capacity(k);
        let mut next: u32 = 0;
        for g in &grids {
            grid_cell_base.push(next);
            next += g.n_cells() as u32;
        }
        let lanes = config.grid.lanes_per_approach;
        let cs = config.grid.cell_size;
        let mut strips = Vec::new();
        let add = |kind: StripKind, length: f64, next: &mut u32, strips: &mut Vec<Strip>| {
            if length <= 0.0 {
                return;
            }
            for lane in 0..lanes {
                let n_cells = (length / cs).ceil() as u32;
                strips.push(Strip { kind, lane, length, n_cells, first_cell: *next });
                *next += n_cells;
            }
        };
        for ep in &entry_points {
            add(
                StripKind::Entry { intersection: ep.intersection, approach: ep.approach },
                config.entry_leg_length,
                &mut next,
                &mut strips,
            );
        }
        for (li, l) in links.iter().enumerate() {
            add(StripKind::Link { link: li, intersection: l.east, approach: Approach::West }, l.length, &mut next, &mut strips);
            add(StripKind::Link { link: li, intersection: l.west, approach: Approach::East }, l.length, &mut next, &mut strips);
        }
        for i in 0..k {
            for side in Approach::ALL {
                let has_neighbour = match side {
                    Approach::West => i > 0,
                    Approach::East => i + 1 < k,
                    _ => false,
                };
                if !has_neighbour {
                    add(StripKind::Exit { intersection: i, side }, config.exit_leg_length, &mut next, &mut strips);
                }
            }
        }
        let strip_lookup = strips
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (a, b, c) = strip_key(s.kind);
                ((a, b, c, s.lane), i)
            })
            .collect();

        Ok(CorridorNetwork {
            config: config.clone(),
            grids,
            links,
            entry_points,
            strips,
            paths,
            conflicts,
            grid_cell_base,
            strip_lookup,
            n_cells: next,
        })
    }

    pub fn n_intersections(&self) -> usize {
        self.grids.len()
    }

    pub fn lanes(&self) -> u16 {
        self.config.grid.lanes_per_approach
    }

    pub fn cell_size(&self) -> f64 {
        self.config.grid.cell_size
    }

    /// Total number of reservable cells, grids and strips together.
    pub fn n_cells(&self) -> u32 {
        self.n_cells
    }

    pub fn grid_cell_base(&self, intersection: usize) -> u32 {
        self.grid_cell_base[intersection]
    }

    pub fn path(&self, intersection: usize, movement: Movement) -> Result<&RoutePath, GeometryError> {
        let i = self.conflicts.index(movement).ok_or(GeometryError::InvalidMovement(movement))?;
        Ok(&self.paths[intersection][i])
    }

    /// Grid reached by leaving `intersection` through `side`, with the
    /// approach it is entered from.
    pub fn neighbour(&self, intersection: usize, side: Approach) -> Option<(usize, Approach)> {
        match side {
            Approach::East if intersection + 1 < self.grids.len() => Some((intersection + 1, Approach::West)),
            Approach::West if intersection > 0 => Some((intersection - 1, Approach::East)),
            _ => None,
        }
    }

    pub fn entry_strip(&self, intersection: usize, approach: Approach, lane: u16) -> Option<usize> {
        self.strip_lookup.get(&(0, intersection, approach.index(), lane)).copied()
    }

    pub fn link_strip(&self, intersection: usize, approach: Approach, lane: u16) -> Option<usize> {
        self.strip_lookup.get(&(1, intersection, approach.index(), lane)).copied()
    }

    pub fn exit_strip(&self, intersection: usize, side: Approach, lane: u16) -> Option<usize> {
        self.strip_lookup.get(&(2, intersection, side.index(), lane)).copied()
    }

    /// Intersection index for a grid id.
    pub fn index_of(&self, id: u16) -> Option<usize> {
        self.grids.iter().position(|g| g.id == id)
    }
}
