use std::collections::VecDeque;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smallvec::SmallVec;

use super::arrivals::{build_schedule, Arrival, DemandConfig};
use super::kinematics::{follower_action, Action, KinematicsParams};
use super::log::{EpisodeLog, LogDetail, LogHeader, StepRecord, VehicleSummary, LOG_SCHEMA_VERSION};
use super::SimError;
use crate::geometry::{Approach, CellSpace, CorridorConfig, CorridorNetwork, Segment, StripKind, Trip};
use crate::reservation::{
    desired_cells, detect_conflicts, envelope, Arbiter, Claimant, CoordinationGroup, GrantTable, EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub kinematics: KinematicsParams,
    pub vehicle_length: f64,
    /// Gap kept to the vehicle ahead when stopped.
    pub standstill_margin: f64,
    /// Vehicles slower than this count as queued.
    pub queue_speed: f64,
    /// Length of the stop-bar detector zone used by actuated signals.
    pub detector_length: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            kinematics: KinematicsParams::default(),
            vehicle_length: 4.9,
            standstill_margin: 1.0,
            queue_speed: 2.0,
            detector_length: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub network: CorridorConfig,
    pub demand: DemandConfig,
    pub sim: SimParams,
    pub steps: u64,
    /// Arrival generation window in seconds; defaults to the episode length.
    pub window: Option<f64>,
    pub log: LogDetail,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            network: CorridorConfig::default(),
            demand: DemandConfig::default(),
            sim: SimParams { kinematics: KinematicsParams::default().with_dt(0.5), ..Default::default() },
            steps: 7200,
            window: None,
            log: LogDetail::Grid,
        }
    }
}

impl EpisodeConfig {
    pub fn dt(&self) -> f64 {
        self.sim.kinematics.dt
    }

    pub fn window(&self) -> f64 {
        self.window.unwrap_or(self.steps as f64 * self.dt())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.sim.kinematics.validate()?;
        self.demand.validate()?;
        let s = &self.sim;
        for (name, v) in [
            ("vehicle_length", s.vehicle_length),
            ("standstill_margin", s.standstill_margin),
            ("queue_speed", s.queue_speed),
            ("detector_length", s.detector_length),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if s.vehicle_length <= 0.0 {
            return Err(SimError::InvalidParameter("vehicle_length must be positive".into()));
        }
        if self.window() <= 0.0 && self.steps > 0 {
            return Err(SimError::InvalidParameter("arrival window must be positive".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Approach lane of one intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneKey {
    pub intersection: usize,
    pub approach: Approach,
    pub lane: u16,
}

#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: u32,
    pub trip: Trip,
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    /// Scheduled arrival instant; first key of the grant priority.
    pub entry_time: f64,
    pub release_time: f64,
    pub insert_time: Option<f64>,
    pub is_leader: bool,
    pub cumulative_delay: f64,
    pub distance: f64,
    pub last_action: Action,
}

impl VehicleState {
    pub fn apply_action(&self, a: Action, k: &KinematicsParams) -> VehicleState {
        let (d, v) = k.advance(self.speed, a);
        VehicleState { position: self.position + d, speed: v, last_action: a, ..self.clone() }
    }

    fn summary(&self, exit_time: Option<f64>) -> VehicleSummary {
        VehicleSummary {
            id: self.id,
            entry_intersection: self.trip.entry.intersection as u16,
            entry_approach: self.trip.entry.approach,
            movements: self.trip.visits.iter().map(|v| v.movement).collect(),
            arrival_time: self.entry_time,
            release_time: self.release_time,
            insert_time: self.insert_time,
            exit_time,
            route_length: self.trip.total_length,
            distance: self.distance,
            delay: self.cumulative_delay,
        }
    }
}

/// Safe-following action against a vehicle ahead on the same trip.
pub fn follower_update(v: &VehicleState, leader: &VehicleState, k: &KinematicsParams, margin: f64) -> Action {
    let gap = leader.position - leader.length - v.position;
    follower_action(v.speed, gap, leader.speed, k, margin)
}

/// A lane's first vehicle inside a grid, the unit the learning controller acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderView {
    pub vehicle: u32,
    pub lane: LaneKey,
    pub speed: f64,
    /// Fraction of the current grid path already covered.
    pub progress: f64,
    /// Queued vehicles behind the leader on its lane.
    pub queue: u32,
    pub group: u32,
    pub group_size: usize,
    /// Index of the leader's (intersection, approach) direction.
    pub direction: usize,
}

/// Per-movement go indications for every intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalState {
    n_movements: usize,
    go: Vec<bool>,
}

impl SignalState {
    pub fn all_stop(n_intersections: usize, n_movements: usize) -> Self {
        SignalState { n_movements, go: vec![false; n_intersections * n_movements] }
    }

    pub fn set(&mut self, intersection: usize, movement: usize, go: bool) {
        self.go[intersection * self.n_movements + movement] = go;
    }

    pub fn go(&self, intersection: usize, movement: usize) -> bool {
        self.go[intersection * self.n_movements + movement]
    }
}

/// What a controller sees at the start of a step.
pub struct Observation<'a> {
    pub step: u64,
    pub time: f64,
    pub kinematics: &'a KinematicsParams,
    pub net: &'a CorridorNetwork,
    pub leaders: &'a [LeaderView],
    /// Queued vehicles per approach lane, see [`Observation::lane_index`].
    pub lane_queue: &'a [u32],
    /// Stop-bar detector occupancy per approach lane.
    pub detector: &'a [bool],
    pub groups: &'a [CoordinationGroup],
}

impl Observation<'_> {
    pub fn lane_index(&self, key: &LaneKey) -> usize {
        let l = usize::from(self.net.lanes());
        (key.intersection * 4 + key.approach.index()) * l + usize::from(key.lane)
    }

    pub fn queue(&self, key: &LaneKey) -> u32 {
        self.lane_queue[self.lane_index(key)]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Decision {
    /// Aligned with `Observation::leaders`; `None` falls back to safe following.
    pub leader_actions: Vec<Option<Action>>,
    /// `None` leaves the network unsignalised.
    pub signals: Option<SignalState>,
}

pub trait Controller {
    fn name(&self) -> String;
    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError>;
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        (**self).decide(obs, decision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub leaders: Vec<LeaderView>,
    /// Action each leader asked for before arbitration.
    pub proposals: Vec<Action>,
    /// Reward of every (intersection, approach) direction.
    pub direction_rewards: Vec<f64>,
    pub global_reward: f64,
    pub groups: Vec<CoordinationGroup>,
    pub exited: Vec<u32>,
    /// Vehicles that were inside the network this step.
    pub vehicle_steps: usize,
}

const SPAWN_SPEEDS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];

/// One episode's mutable state.
pub struct World {
    net: Arc<CorridorNetwork>,
    space: CellSpace,
    config: EpisodeConfig,
    k: KinematicsParams,
    seed: u64,
    schedule: Vec<Arrival>,
    next_arrival: usize,
    next_id: u32,
    step: u64,
    vehicles: Vec<VehicleState>,
    waiting: Vec<VecDeque<VehicleState>>,
    finished: Vec<VehicleSummary>,
    arbiter: Arbiter,
    bodies: GrantTable,
    lane_of: Vec<Option<usize>>,
    dir_of: Vec<usize>,
    leader_of: Vec<Option<usize>>,
    lane_queue: Vec<u32>,
    detector: Vec<bool>,
    records: Vec<StepRecord>,
    rewards: Vec<f64>,
    controller: String,
}

impl World {
    pub fn new(config: &EpisodeConfig, seed: u64) -> Result<World, SimError> {
        config.validate()?;
        let net = Arc::new(CorridorNetwork::build(&config.network)?);
        World::with_network(config, net, seed)
    }

    /// Share an already built network between episodes of the same layout.
    pub fn with_network(config: &EpisodeConfig, net: Arc<CorridorNetwork>, seed: u64) -> Result<World, SimError> {
        config.validate()?;
        let schedule = if config.steps == 0 {
            Vec::new()
        } else {
            build_schedule(&net, &config.demand, config.window(), seed)?.arrivals
        };
        let n_cells = net.n_cells() as usize;
        let lanes = usize::from(net.lanes());
        let n_lane_keys = net.n_intersections() * 4 * lanes;
        Ok(World {
            space: CellSpace::new(&net),
            k: config.sim.kinematics,
            config: config.clone(),
            seed,
            schedule,
            next_arrival: 0,
            next_id: 0,
            step: 0,
            vehicles: Vec::new(),
            waiting: (0..net.entry_points.len() * lanes).map(|_| VecDeque::new()).collect(),
            finished: Vec::new(),
            arbiter: Arbiter::new(n_cells),
            bodies: GrantTable::new(n_cells),
            lane_of: Vec::new(),
            dir_of: Vec::new(),
            leader_of: vec![None; n_lane_keys],
            lane_queue: vec![0; n_lane_keys],
            detector: vec![false; n_lane_keys],
            records: Vec::new(),
            rewards: Vec::new(),
            controller: String::new(),
            net,
        })
    }

    pub fn network(&self) -> &CorridorNetwork {
        &self.net
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.k.dt
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn waiting_count(&self) -> usize {
        self.waiting.iter().map(VecDeque::len).sum()
    }

    pub fn arbiter_mut(&mut self) -> &mut Arbiter {
        &mut self.arbiter
    }

    fn lane_index(&self, key: LaneKey) -> usize {
        (key.intersection * 4 + key.approach.index()) * usize::from(self.net.lanes()) + usize::from(key.lane)
    }

    fn release_and_insert(&mut self) {
        let dt = self.k.dt;
        let lanes = usize::from(self.net.lanes());
        while let Some(a) = self.schedule.get(self.next_arrival) {
            let release_step = (a.time / dt - 1e-9).ceil().max(0.0) as u64;
            if release_step > self.step {
                break;
            }
            let trip = Trip::build(&self.net, a.entry, &a.movements).expect("scheduled routes follow the topology");
            let ep = self.net.entry_points.iter().position(|e| *e == a.entry).expect("entry point");
            let q = ep * lanes + usize::from(a.movements[0].lane);
            self.waiting[q].push_back(VehicleState {
                id: self.next_id,
                trip,
                position: 0.0,
                speed: 0.0,
                length: self.config.sim.vehicle_length,
                entry_time: a.time,
                release_time: self.step as f64 * dt,
                insert_time: None,
                is_leader: false,
                cumulative_delay: 0.0,
                distance: 0.0,
                last_action: Action::Maintain,
            });
            self.next_id += 1;
            self.next_arrival += 1;
        }
        for q in 0..self.waiting.len() {
            let Some(head) = self.waiting[q].front() else { continue };
            let first_box = head.trip.visits[0].box_entry;
            let chosen = SPAWN_SPEEDS.iter().map(|f| f * self.k.vmax).find(|&v| {
                let env = envelope(&head.trip, 0.0, v, head.length, Action::Decelerate, &self.k);
                env.e_raw <= first_box + EPS && self.arbiter.can_seed(&head.trip, env.cells(&head.trip))
            });
            if let Some(v) = chosen {
                let mut veh = self.waiting[q].pop_front().expect("head");
                let env = envelope(&veh.trip, 0.0, v, veh.length, Action::Decelerate, &self.k);
                self.arbiter.seed(veh.id, &veh.trip, env.cells(&veh.trip));
                veh.speed = v;
                veh.insert_time = Some(self.time());
                self.vehicles.push(veh);
            }
        }
    }

    /// Lane key, direction and whether the nose is inside a grid.
    fn classify(&self, v: &VehicleState) -> (Option<LaneKey>, usize, bool) {
        let trip = &v.trip;
        let si = trip.segment_at(v.position);
        let visit_key = |vi: usize| {
            let g = &trip.visits[vi];
            LaneKey { intersection: g.intersection, approach: g.movement.approach, lane: g.movement.lane }
        };
        let dir = |k: &LaneKey| k.intersection * 4 + k.approach.index();
        match trip.segments[si] {
            Segment::Grid { visit, .. } => {
                let k = visit_key(visit);
                (Some(k), dir(&k), true)
            }
            Segment::Strip { strip, .. } => match self.net.strips[strip].kind {
                StripKind::Exit { .. } => {
                    let k = visit_key(trip.visits.len() - 1);
                    (None, dir(&k), false)
                }
                _ => {
                    let next = match trip.segments.get(si + 1) {
                        Some(Segment::Grid { visit, .. }) => *visit,
                        _ => unreachable!("entry and link strips lead into a grid"),
                    };
                    let k = visit_key(next);
                    (Some(k), dir(&k), false)
                }
            },
        }
    }

    fn observe(&mut self) -> Result<(Vec<LeaderView>, Vec<CoordinationGroup>), SimError> {
        let n = self.vehicles.len();
        self.bodies.clear();
        for (slot, v) in self.vehicles.iter().enumerate() {
            for c in &v.trip.cells[v.trip.cell_range(v.position - v.length + EPS, v.position - EPS)] {
                if let Some(other) = self.bodies.get(c.id) {
                    return Err(SimError::CoOccupancy { step: self.step, a: self.vehicles[other as usize].id, b: v.id });
                }
                self.bodies.set(c.id, slot as u32);
            }
        }
        self.lane_of.clear();
        self.dir_of.clear();
        self.leader_of.fill(None);
        self.lane_queue.fill(0);
        self.detector.fill(false);
        let mut in_grid = Vec::with_capacity(n);
        for slot in 0..n {
            let (key, dir, grid) = self.classify(&self.vehicles[slot]);
            let li = key.map(|k| self.lane_index(k));
            self.lane_of.push(li);
            self.dir_of.push(dir);
            in_grid.push(grid);
            let v = &self.vehicles[slot];
            if let (Some(li), Some(key)) = (li, key) {
                if v.speed < self.config.sim.queue_speed {
                    self.lane_queue[li] += 1;
                }
                if grid {
                    let better = self.leader_of[li].is_none_or(|o| self.vehicles[o].position < v.position);
                    if better {
                        self.leader_of[li] = Some(slot);
                    }
                }
                let visit = v.trip.visits.iter().find(|g| g.intersection == key.intersection).expect("visit");
                let zone = visit.box_entry - self.config.sim.detector_length;
                if v.position > zone && v.position - v.length < visit.box_entry {
                    self.detector[li] = true;
                }
            }
        }
        for q in &self.waiting {
            for v in q {
                let g = &v.trip.visits[0];
                let li = self.lane_index(LaneKey {
                    intersection: g.intersection,
                    approach: g.movement.approach,
                    lane: g.movement.lane,
                });
                self.lane_queue[li] += 1;
            }
        }
        for v in self.vehicles.iter_mut() {
            v.is_leader = false;
        }
        let mut leader_slots: Vec<usize> = self.leader_of.iter().flatten().copied().collect();
        leader_slots.sort_unstable();
        let cs = self.net.cell_size();
        let mut desired = Vec::with_capacity(leader_slots.len());
        for &slot in &leader_slots {
            let v = &mut self.vehicles[slot];
            v.is_leader = true;
            desired.push(
                desired_cells(v.id, self.step, &v.trip, v.position, v.speed, &self.k, cs)
                    .map_err(|e| SimError::Reservation { step: self.step, source: e })?,
            );
        }
        let groups = detect_conflicts(&desired).map_err(|e| SimError::Reservation { step: self.step, source: e })?;
        let mut group_of = std::collections::BTreeMap::new();
        for g in &groups {
            for &m in &g.members {
                group_of.insert(m, (g.id, g.members.len()));
            }
        }
        let leaders = leader_slots
            .iter()
            .map(|&slot| {
                let v = &self.vehicles[slot];
                let li = self.lane_of[slot].expect("leaders have a lane");
                let (key, _, _) = self.classify(v);
                let key = key.expect("lane");
                let visit = v.trip.visits.iter().find(|g| g.intersection == key.intersection).expect("visit");
                let progress = ((v.position - visit.start) / (visit.end - visit.start)).clamp(0.0, 1.0);
                let queued_self = u32::from(v.speed < self.config.sim.queue_speed);
                let (group, group_size) = group_of[&v.id];
                LeaderView {
                    vehicle: v.id,
                    lane: key,
                    speed: v.speed,
                    progress,
                    queue: self.lane_queue[li] - queued_self,
                    group,
                    group_size,
                    direction: self.dir_of[slot],
                }
            })
            .collect();
        Ok((leaders, groups))
    }

    /// Nearest other body ahead along the trip within `horizon`: its slot and the gap to it.
    fn body_ahead(&self, slot: usize, horizon: f64) -> Option<(usize, f64)> {
        let v = &self.vehicles[slot];
        let start = v.trip.cell_at((v.position - EPS).max(0.0)) + 1;
        for c in &v.trip.cells[start.min(v.trip.cells.len())..] {
            if c.start - v.position > horizon {
                break;
            }
            if let Some(o) = self.bodies.get(c.id) {
                if o as usize != slot {
                    return Some((o as usize, c.start - v.position));
                }
            }
        }
        None
    }

    /// Gap to the nearest cell ahead held by another body, with that vehicle's speed.
    fn gap_ahead(&self, slot: usize) -> (f64, f64) {
        let horizon = self.k.stop_distance(self.k.vmax)
            + self.k.max_step_distance()
            + self.config.sim.standstill_margin
            + 2.0 * self.net.cell_size();
        match self.body_ahead(slot, horizon) {
            Some((o, gap)) => (gap, self.vehicles[o].speed),
            None => (f64::INFINITY, 0.0),
        }
    }

    pub fn step(&mut self, controller: &mut dyn Controller) -> Result<StepOutcome, SimError> {
        if self.step == 0 {
            self.controller = controller.name();
        }
        let dt = self.k.dt;
        let vmax = self.k.vmax;
        let time = self.time();
        self.release_and_insert();
        let (leaders, groups) = self.observe()?;

        let mut decision = Decision { leader_actions: vec![None; leaders.len()], signals: None };
        {
            let obs = Observation {
                step: self.step,
                time,
                kinematics: &self.k,
                net: &self.net,
                leaders: &leaders,
                lane_queue: &self.lane_queue,
                detector: &self.detector,
                groups: &groups,
            };
            controller.decide(&obs, &mut decision)?;
        }
        if decision.leader_actions.len() != leaders.len() {
            return Err(SimError::Controller("decision does not match the leader list".into()));
        }

        let margin = self.config.sim.standstill_margin;
        let mut proposals = Vec::with_capacity(self.vehicles.len());
        let mut leader_pos = 0;
        for slot in 0..self.vehicles.len() {
            let v = &self.vehicles[slot];
            let mut chosen = None;
            if v.is_leader {
                chosen = decision.leader_actions[leader_pos];
                leader_pos += 1;
            }
            let a = chosen.unwrap_or_else(|| {
                let (gap, lead_speed) = self.gap_ahead(slot);
                follower_action(v.speed, gap, lead_speed, &self.k, margin)
            });
            proposals.push(a);
        }
        let leader_proposals: Vec<Action> =
            self.vehicles.iter().zip(&proposals).filter(|(v, _)| v.is_leader).map(|(_, &a)| a).collect();

        let reach = self.k.stop_distance(self.k.vmax)
            + self.k.max_step_distance()
            + self.config.sim.vehicle_length
            + f64::from(self.net.grids[0].box_size() + 2) * self.net.cell_size();
        let ahead: Vec<Option<u32>> =
            (0..self.vehicles.len()).map(|s| self.body_ahead(s, reach).map(|(o, _)| self.vehicles[o].id)).collect();
        let actions = {
            let space = &self.space;
            let claimants: Vec<Claimant<'_>> = self
                .vehicles
                .iter()
                .zip(&proposals)
                .zip(&ahead)
                .map(|((v, &proposal), &ahead)| {
                    let nose = v.trip.cells[v.trip.cell_at((v.position - EPS).max(0.0))].id;
                    let cell_key = match space.grid_cell(nose) {
                        Some(c) => (u32::from(c.intersection), u32::from(c.row), u32::from(c.col)),
                        None => (u32::MAX, nose.0, 0),
                    };
                    Claimant {
                        id: v.id,
                        trip: &v.trip,
                        position: v.position,
                        speed: v.speed,
                        length: v.length,
                        entry_time: v.entry_time,
                        cell_key,
                        proposal,
                        ahead,
                    }
                })
                .collect();
            let conflicts = &self.net.conflicts;
            let signals = decision.signals.as_ref();
            self.arbiter
                .arbitrate(self.step, &claimants, &self.k, |_, visit| {
                    signals.is_some_and(|s| {
                        let m = conflicts.index(visit.movement).expect("known movement");
                        !s.go(visit.intersection, m)
                    })
                })
                .map_err(|e| SimError::Reservation { step: self.step, source: e })?
        };

        let mut direction_rewards = vec![0.0; self.net.n_intersections() * 4];
        let detail = self.config.log;
        let group_of: std::collections::BTreeMap<u32, u32> =
            leaders.iter().map(|l| (l.vehicle, l.group)).collect();
        let mut granted: Vec<Range<usize>> = Vec::with_capacity(self.vehicles.len());
        for (slot, &a) in actions.iter().enumerate() {
            let v = &self.vehicles[slot];
            let env = envelope(&v.trip, v.position, v.speed, v.length, a, &self.k);
            granted.push(env.cells(&v.trip));
            let travelled = env.p_after - v.position;
            let share = -(dt - travelled / vmax);
            direction_rewards[self.dir_of[slot]] += share;
            if detail != LogDetail::Summary {
                let body = v.trip.cell_range(v.position - v.length + EPS, v.position - EPS);
                let cells: SmallVec<[_; 4]> =
                    v.trip.cells[body].iter().filter_map(|c| self.space.grid_cell(c.id)).collect();
                if detail == LogDetail::Full || !cells.is_empty() {
                    let intersection = cells.first().map(|c| c.intersection);
                    let movement = intersection.and_then(|id| {
                        v.trip.visits.iter().find(|g| self.net.grids[g.intersection].id == id).map(|g| g.movement)
                    });
                    self.records.push(StepRecord {
                        step: self.step,
                        time,
                        id: v.id,
                        intersection,
                        movement,
                        position: v.position,
                        speed: v.speed,
                        action: a,
                        cells,
                        group: group_of.get(&v.id).copied(),
                        reward_share: share,
                        inserted: true,
                    });
                }
            }
            let v = &mut self.vehicles[slot];
            v.position = env.p_after;
            v.speed = env.v_after;
            v.distance += travelled;
            v.cumulative_delay += dt - travelled / vmax;
            v.last_action = a;
        }
        for q in self.waiting.iter_mut() {
            for v in q.iter_mut() {
                let g = &v.trip.visits[0];
                direction_rewards[g.intersection * 4 + g.movement.approach.index()] -= dt;
                v.cumulative_delay += dt;
                if detail == LogDetail::Full {
                    self.records.push(StepRecord {
                        step: self.step,
                        time,
                        id: v.id,
                        intersection: None,
                        movement: None,
                        position: 0.0,
                        speed: 0.0,
                        action: Action::Decelerate,
                        cells: SmallVec::new(),
                        group: None,
                        reward_share: -dt,
                        inserted: false,
                    });
                }
            }
        }
        let global_reward: f64 = direction_rewards.iter().sum();
        self.rewards.push(global_reward);
        let vehicle_steps = self.vehicles.len();

        let mut exited = Vec::new();
        let exit_time = time + dt;
        let mut keep = Vec::with_capacity(self.vehicles.len());
        for (slot, v) in self.vehicles.drain(..).enumerate() {
            if v.position >= v.trip.total_length - EPS {
                self.arbiter.release(v.id, &v.trip, granted[slot].clone());
                exited.push(v.id);
                self.finished.push(v.summary(Some(exit_time)));
            } else {
                keep.push(v);
            }
        }
        self.vehicles = keep;
        let step = self.step;
        self.step += 1;
        Ok(StepOutcome {
            step,
            leaders,
            proposals: leader_proposals,
            direction_rewards,
            global_reward,
            groups,
            exited,
            vehicle_steps,
        })
    }

    /// Log with the controller name set even when no step ran.
    pub fn into_log_named(mut self, controller: &str) -> EpisodeLog {
        self.controller = controller.to_string();
        self.into_log()
    }

    pub fn into_log(self) -> EpisodeLog {
        let mut vehicles = self.finished;
        vehicles.extend(self.vehicles.iter().map(|v| v.summary(None)));
        vehicles.extend(self.waiting.iter().flatten().map(|v| v.summary(None)));
        vehicles.sort_by_key(|v| v.id);
        EpisodeLog {
            header: LogHeader {
                schema: LOG_SCHEMA_VERSION,
                config_fingerprint: self.config.fingerprint(),
                seed: self.seed,
                controller: self.controller,
                dt: self.k.dt,
                vmax: self.k.vmax,
                steps: self.step,
                detail: self.config.log,
            },
            steps: self.records,
            rewards: self.rewards,
            vehicles,
        }
    }
}

/// Run a fixed-length episode and return its log.
pub fn run_episode(config: &EpisodeConfig, controller: &mut dyn Controller, seed: u64) -> Result<EpisodeLog, SimError> {
    let mut world = World::new(config, seed)?;
    for _ in 0..config.steps {
        world.step(controller)?;
    }
    Ok(world.into_log_named(&controller.name()))
}
