use std::collections::BTreeMap;
use std::ops::Range;

use super::{ReservationError, EPS};
use crate::geometry::{CellId, GridVisit, Trip, TripCell};
use crate::sim::{Action, KinematicsParams};

/// Hops followed when deciding whether a cell owner is ahead on the same path.
const AHEAD_CHAIN: usize = 8;

/// Space a vehicle needs for one step under one action: its current body,
/// the swept distance and the stop distance after the move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub rear: f64,
    pub p_after: f64,
    pub v_after: f64,
    /// Stopping point after the move; the exclusive part ends here.
    pub e_raw: f64,
    /// Front end after the box-clearing extension.
    pub end: f64,
}

impl Envelope {
    /// Whole envelope, extension included.
    pub fn cells(&self, trip: &Trip) -> Range<usize> {
        trip.cell_range(self.rear + EPS, self.end - EPS)
    }

    /// Body plus braking distance, held exclusively.
    pub fn hard_cells(&self, trip: &Trip) -> Range<usize> {
        trip.cell_range(self.rear + EPS, self.e_raw.min(self.end) - EPS)
    }

    /// Cells past the stopping point up to the extension end.
    pub fn extension_cells(&self, trip: &Trip) -> Range<usize> {
        let all = self.cells(trip);
        self.hard_cells(trip).end.max(all.start)..all.end
    }

    pub fn committed(&self) -> bool {
        self.end > self.e_raw.min(self.end) + EPS
    }
}

/// Envelope of `action`. Once the stopping point lies past a box entry, the
/// envelope is stretched until the body has cleared that box. The stretch is
/// claimed softly: free cells are taken, cells held by vehicles ahead on the
/// same path are left to them.
pub fn envelope(trip: &Trip, position: f64, speed: f64, length: f64, action: Action, k: &KinematicsParams) -> Envelope {
    let (d, v_after) = k.advance(speed, action);
    let p_after = (position + d).min(trip.total_length);
    let e_raw = p_after + k.stop_distance(v_after);
    let mut end = e_raw;
    for v in &trip.visits {
        if v.box_entry > e_raw {
            break;
        }
        if e_raw > v.box_entry + EPS && p_after - length < v.box_exit {
            end = end.max(v.box_exit + length);
        }
    }
    Envelope { rear: position - length, p_after, v_after, e_raw, end: end.min(trip.total_length) }
}

/// A vehicle taking part in arbitration.
#[derive(Debug, Clone, Copy)]
pub struct Claimant<'a> {
    pub id: u32,
    pub trip: &'a Trip,
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    pub entry_time: f64,
    /// Tie-break after entry time: (intersection, row, col) of the nose cell.
    pub cell_key: (u32, u32, u32),
    pub proposal: Action,
    /// Nearest vehicle ahead on this claimant's own path.
    pub ahead: Option<u32>,
}

/// Dense cell → owner map, cleared in O(1) by bumping a stamp.
#[derive(Debug, Clone)]
pub struct GrantTable {
    owner: Vec<u32>,
    stamp: Vec<u32>,
    current: u32,
}

impl GrantTable {
    pub fn new(n_cells: usize) -> Self {
        GrantTable { owner: vec![0; n_cells], stamp: vec![0; n_cells], current: 1 }
    }

    pub fn get(&self, c: CellId) -> Option<u32> {
        let i = c.index();
        (self.stamp[i] == self.current).then(|| self.owner[i])
    }

    pub fn set(&mut self, c: CellId, owner: u32) {
        let i = c.index();
        self.owner[i] = owner;
        self.stamp[i] = self.current;
    }

    pub fn remove(&mut self, c: CellId) {
        self.stamp[c.index()] = 0;
    }

    pub fn clear(&mut self) {
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.stamp.fill(0);
            self.current = 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellId, u32)> + '_ {
        (0..self.owner.len())
            .filter(|&i| self.stamp[i] == self.current)
            .map(|i| (CellId(i as u32), self.owner[i]))
    }
}

/// Claims and grants of one step, for inspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReservationTable {
    pub step: u64,
    pub claims: BTreeMap<CellId, Vec<u32>>,
    pub grants: BTreeMap<CellId, u32>,
}

/// Grants cells in priority order and downgrades actions that need cells
/// held by someone else.
#[derive(Debug, Clone)]
pub struct Arbiter {
    prev: GrantTable,
    cur: GrantTable,
    order: Vec<usize>,
    record: bool,
    last: Option<ReservationTable>,
}

impl Arbiter {
    pub fn new(n_cells: usize) -> Self {
        Arbiter { prev: GrantTable::new(n_cells), cur: GrantTable::new(n_cells), order: Vec::new(), record: false, last: None }
    }

    /// Keep a `ReservationTable` of every arbitration pass.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    pub fn last_table(&self) -> Option<&ReservationTable> {
        self.last.as_ref()
    }

    /// Grants in force after the latest pass (plus any seeded vehicles).
    pub fn grants(&self) -> &GrantTable {
        &self.prev
    }

    /// True when no cell of `range` is currently granted.
    pub fn can_seed(&self, trip: &Trip, range: Range<usize>) -> bool {
        trip.cells[range].iter().all(|c| self.prev.get(c.id).is_none())
    }

    /// Grant `range` to a vehicle that has just entered the network.
    pub fn seed(&mut self, id: u32, trip: &Trip, range: Range<usize>) {
        for c in &trip.cells[range] {
            self.prev.set(c.id, id);
        }
    }

    /// Drop whatever `id` still holds in `range`.
    pub fn release(&mut self, id: u32, trip: &Trip, range: Range<usize>) {
        for c in &trip.cells[range] {
            if self.prev.get(c.id) == Some(id) {
                self.prev.remove(c.id);
            }
        }
    }

    /// Decide the action of every claimant. `red(i, visit)` tells whether
    /// claimant `i` faces a stop indication at `visit`.
    pub fn arbitrate<F>(
        &mut self,
        step: u64,
        claimants: &[Claimant<'_>],
        k: &KinematicsParams,
        red: F,
    ) -> Result<Vec<Action>, ReservationError>
    where
        F: Fn(usize, &GridVisit) -> bool,
    {
        self.cur.clear();
        let mut table = self.record.then(|| ReservationTable { step, ..Default::default() });

        let mut baselines = Vec::with_capacity(claimants.len());
        for c in claimants {
            let env = envelope(c.trip, c.position, c.speed, c.length, Action::Decelerate, k);
            for tc in &c.trip.cells[env.hard_cells(c.trip)] {
                if self.prev.get(tc.id) != Some(c.id) {
                    return Err(ReservationError::StopEnvelope { vehicle: c.id, cell: tc.id });
                }
                if let Some(other) = self.cur.get(tc.id) {
                    if other != c.id {
                        return Err(ReservationError::Overlap { a: other, b: c.id, cell: tc.id });
                    }
                }
                self.cur.set(tc.id, c.id);
            }
            baselines.push(env);
        }
        let index_of: BTreeMap<u32, usize> = claimants.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let ahead_of: BTreeMap<u32, u32> = claimants.iter().filter_map(|c| c.ahead.map(|a| (c.id, a))).collect();
        // A cell held by a vehicle ahead on the same path is as good as free when
        // that vehicle cannot come to rest on it.
        let vacated = |me: u32, owner: u32, cell: CellId| {
            let mut cur = me;
            for _ in 0..AHEAD_CHAIN {
                match ahead_of.get(&cur) {
                    Some(&a) if a == owner => {
                        let Some(&j) = index_of.get(&owner) else { return false };
                        let (o, b) = (&claimants[j], &baselines[j]);
                        let rest = o.trip.cell_range(b.e_raw - o.length + EPS, b.end - EPS);
                        return o.trip.cells[rest].iter().all(|tc| tc.id != cell);
                    }
                    Some(&a) => cur = a,
                    None => return false,
                }
            }
            false
        };

        // committed vehicles first so they keep the box they are clearing
        self.order.clear();
        self.order.extend(0..claimants.len());
        self.order.sort_by(|&i, &j| {
            let (a, b) = (&claimants[i], &claimants[j]);
            baselines[j]
                .committed()
                .cmp(&baselines[i].committed())
                .then(a.entry_time.total_cmp(&b.entry_time))
                .then(a.cell_key.cmp(&b.cell_key))
                .then(a.id.cmp(&b.id))
        });

        let mut actions = vec![Action::Decelerate; claimants.len()];
        for &i in &self.order {
            let c = &claimants[i];
            let base = &baselines[i];
            let mut a = c.proposal;
            if let Some(t) = table.as_mut() {
                let env = envelope(c.trip, c.position, c.speed, c.length, a, k);
                for tc in &c.trip.cells[env.cells(c.trip)] {
                    t.claims.entry(tc.id).or_default().push(c.id);
                }
            }
            while a != Action::Decelerate {
                let env = envelope(c.trip, c.position, c.speed, c.length, a, k);
                let stop_line_ok = c
                    .trip
                    .visits
                    .iter()
                    .find(|v| v.box_exit > c.position && base.e_raw <= v.box_entry + EPS)
                    .is_none_or(|v| env.e_raw <= v.box_entry + EPS || !red(i, v));
                let mine = |tc: &TripCell| self.cur.get(tc.id).is_none_or(|o| o == c.id);
                let hard_ok = stop_line_ok && c.trip.cells[env.hard_cells(c.trip)].iter().all(mine);
                let commit_ok = base.committed()
                    || !env.committed()
                    || c.trip.cells[env.extension_cells(c.trip)]
                        .iter()
                        .all(|tc| mine(tc) || vacated(c.id, self.cur.get(tc.id).expect("owned"), tc.id));
                if hard_ok && commit_ok {
                    break;
                }
                a = a.downgrade().unwrap_or(Action::Decelerate);
            }
            let env = envelope(c.trip, c.position, c.speed, c.length, a, k);
            for tc in &c.trip.cells[env.hard_cells(c.trip)] {
                self.cur.set(tc.id, c.id);
            }
            for tc in &c.trip.cells[env.extension_cells(c.trip)] {
                if self.cur.get(tc.id).is_none() {
                    self.cur.set(tc.id, c.id);
                }
            }
            actions[i] = a;
        }

        std::mem::swap(&mut self.prev, &mut self.cur);
        if let Some(mut t) = table {
            t.grants = self.prev.iter().collect();
            self.last = Some(t);
        }
        Ok(actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_corridor, Approach, CorridorConfig, CorridorNetwork, EntryPoint, Movement, Turn};

    fn net() -> CorridorNetwork {
        let mut cfg = CorridorConfig::chain(1, 100.0);
        cfg.entry_leg_length = 50.0;
        build_corridor(&cfg).unwrap()
    }

    fn trip(net: &CorridorNetwork, a: Approach) -> Trip {
        Trip::build(net, EntryPoint { intersection: 0, approach: a }, &[Movement::new(a, 1, Turn::Through)]).unwrap()
    }

    fn claimant<'a>(id: u32, trip: &'a Trip, position: f64, speed: f64, entry_time: f64, proposal: Action) -> Claimant<'a> {
        Claimant { id, trip, position, speed, length: 4.9, entry_time, cell_key: (0, 0, 0), proposal, ahead: None }
    }

    fn seed(arb: &mut Arbiter, c: &Claimant<'_>, k: &KinematicsParams) {
        let env = envelope(c.trip, c.position, c.speed, c.length, Action::Decelerate, k);
        assert!(arb.can_seed(c.trip, env.cells(c.trip)));
        arb.seed(c.id, c.trip, env.cells(c.trip));
    }

    #[test]
    fn envelopes_are_nested() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        for p in [0.0, 20.0, 45.0, 52.0, 60.0] {
            for v in [0.0, 4.0, 11.17] {
                let e: Vec<_> = Action::ALL.iter().map(|&a| envelope(&t, p, v, 4.9, a, &k)).collect();
                assert!(e[0].end <= e[1].end && e[1].end <= e[2].end);
            }
        }
    }

    #[test]
    fn lone_vehicle_keeps_its_proposal() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        for a in Action::ALL {
            let mut arb = Arbiter::new(n.n_cells() as usize);
            let c = claimant(1, &t, 30.0, 6.0, 0.0, a);
            seed(&mut arb, &c, &k);
            assert_eq!(arb.arbitrate(0, &[c], &k, |_, _| false).unwrap(), vec![a]);
        }
    }

    #[test]
    fn earlier_vehicle_wins_contested_cell() {
        let n = net();
        let (tn, te) = (trip(&n, Approach::North), trip(&n, Approach::East));
        let k = KinematicsParams::default();
        // both 14.5 m short of the box at full speed
        let a = claimant(1, &tn, 48.0, 11.17, 1.0, Action::Maintain);
        let b = claimant(2, &te, 48.0, 11.17, 2.0, Action::Maintain);
        let mut arb = Arbiter::new(n.n_cells() as usize);
        seed(&mut arb, &a, &k);
        seed(&mut arb, &b, &k);
        let out = arb.arbitrate(0, &[a, b], &k, |_, _| false).unwrap();
        assert_eq!(out[0], Action::Maintain);
        // oracle: B's best action whose envelope avoids A's granted cells
        let taken: Vec<CellId> = tn.cells[envelope(&tn, 48.0, 11.17, 4.9, Action::Maintain, &k).cells(&tn)]
            .iter()
            .map(|c| c.id)
            .collect();
        let expect = [Action::Maintain, Action::Decelerate]
            .into_iter()
            .find(|&x| {
                te.cells[envelope(&te, 48.0, 11.17, 4.9, x, &k).cells(&te)].iter().all(|c| !taken.contains(&c.id))
            })
            .unwrap();
        assert_eq!(out[1], expect);
        assert_eq!(out[1], Action::Decelerate);
    }

    #[test]
    fn braking_always_fits_previous_grant() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        let mut arb = Arbiter::new(n.n_cells() as usize);
        let mut p = 0.0;
        let mut v = 11.17;
        seed(&mut arb, &claimant(1, &t, p, v, 0.0, Action::Decelerate), &k);
        for step in 0..10 {
            let c = claimant(1, &t, p, v, 0.0, Action::Decelerate);
            let out = arb.arbitrate(step, &[c], &k, |_, _| false).unwrap();
            assert_eq!(out, vec![Action::Decelerate]);
            let (d, v1) = k.advance(v, Action::Decelerate);
            p += d;
            v = v1;
        }
    }

    #[test]
    fn missing_stop_envelope_is_reported() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        let mut arb = Arbiter::new(n.n_cells() as usize);
        let c = claimant(4, &t, 10.0, 5.0, 0.0, Action::Maintain);
        assert!(matches!(arb.arbitrate(0, &[c], &k, |_, _| false), Err(ReservationError::StopEnvelope { vehicle: 4, .. })));
    }

    #[test]
    fn red_indication_holds_uncommitted_vehicle() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        let mut arb = Arbiter::new(n.n_cells() as usize);
        // 20 m before the stop line, stopped
        let box_entry = t.visits[0].box_entry;
        let c = claimant(1, &t, box_entry - 20.0, 0.0, 0.0, Action::Accelerate);
        seed(&mut arb, &c, &k);
        let out = arb.arbitrate(0, &[c], &k, |_, _| true).unwrap();
        assert_eq!(out, vec![Action::Accelerate]);
        // 2 m before the line at speed: cannot stop short, so it is committed
        let mut arb = Arbiter::new(n.n_cells() as usize);
        let c = claimant(1, &t, box_entry - 2.0, 11.17, 0.0, Action::Maintain);
        seed(&mut arb, &c, &k);
        assert_eq!(arb.arbitrate(0, &[c], &k, |_, _| true).unwrap(), vec![Action::Maintain]);
        // 15 m before the line at speed: maintain would overrun it
        let mut arb = Arbiter::new(n.n_cells() as usize);
        let c = claimant(1, &t, box_entry - 15.0, 11.17, 0.0, Action::Maintain);
        seed(&mut arb, &c, &k);
        assert_eq!(arb.arbitrate(0, &[c], &k, |_, _| true).unwrap(), vec![Action::Decelerate]);
    }

    #[test]
    fn recording_captures_claims_and_grants() {
        let n = net();
        let t = trip(&n, Approach::North);
        let k = KinematicsParams::default();
        let mut arb = Arbiter::new(n.n_cells() as usize);
        arb.set_recording(true);
        let c = claimant(1, &t, 30.0, 6.0, 0.0, Action::Accelerate);
        seed(&mut arb, &c, &k);
        arb.arbitrate(3, &[c], &k, |_, _| false).unwrap();
        let tab = arb.last_table().unwrap();
        assert_eq!(tab.step, 3);
        assert!(!tab.grants.is_empty());
        assert!(tab.grants.keys().all(|c| tab.claims.contains_key(c)));
        assert!(tab.grants.values().all(|&o| o == 1));
    }
}
