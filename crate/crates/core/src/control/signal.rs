use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geometry::{Approach, ConflictTable, Movement, Turn};
use crate::sim::{Controller, Decision, Observation, SignalState, SimError};

/// A set of (approach, turn) pairs released together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    mask: u16,
}

impl Phase {
    pub fn new(pairs: &[(Approach, Turn)]) -> Self {
        let mut mask = 0;
        for &(a, t) in pairs {
            mask |= 1 << (a.index() * 3 + t.index());
        }
        Phase { mask }
    }

    pub fn serves(&self, approach: Approach, turn: Turn) -> bool {
        self.mask & (1 << (approach.index() * 3 + turn.index())) != 0
    }

    pub fn serves_movement(&self, m: Movement) -> bool {
        self.serves(m.approach, m.turn)
    }

    /// Whether any turn permitted from this lane is released.
    pub fn serves_lane(&self, approach: Approach, turns: &[Turn]) -> bool {
        turns.iter().any(|&t| self.serves(approach, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    /// Split per phase including its all-red; `None` uses the layout default.
    pub splits: Option<Vec<f64>>,
    /// Cycle offset per intersection, west to east. Missing entries are 0.
    pub offsets: Vec<f64>,
    pub all_red: f64,
    pub min_green: f64,
    pub max_green: f64,
    pub gap_time: f64,
    /// Minimum time a longest-queue selection is held.
    pub lqf_min_service: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            splits: None,
            offsets: Vec::new(),
            all_red: 2.0,
            min_green: 8.0,
            max_green: 40.0,
            gap_time: 3.0,
            lqf_min_service: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlan {
    pub phases: Vec<Phase>,
    pub splits: Vec<f64>,
    pub cycle: f64,
    pub offsets: Vec<f64>,
    pub all_red: f64,
    pub min_green: f64,
    pub max_green: f64,
    pub gap_time: f64,
    pub lqf_min_service: f64,
}

/// Phase layout for a lane count. With dedicated turn lanes the arterial
/// runs a protected-left four-phase ring; shared lanes get one phase per approach.
pub fn default_phases(lanes: u16) -> (Vec<Phase>, Vec<f64>) {
    use Approach::*;
    use Turn::*;
    if lanes >= 3 {
        (
            vec![
                Phase::new(&[(East, Through), (East, Right), (West, Through), (West, Right)]),
                Phase::new(&[(East, Left), (West, Left)]),
                Phase::new(&[(North, Through), (North, Right), (South, Through), (South, Right)]),
                Phase::new(&[(North, Left), (South, Left)]),
            ],
            vec![36.0, 12.0, 30.0, 12.0],
        )
    } else {
        let all = |a| Phase::new(&[(a, Left), (a, Through), (a, Right)]);
        (vec![all(West), all(East), all(North), all(South)], vec![27.0, 27.0, 18.0, 18.0])
    }
}

impl SignalPlan {
    pub fn build(config: &SignalConfig, conflicts: &ConflictTable, lanes: u16) -> Result<Self, ControlError> {
        let (phases, default_splits) = default_phases(lanes);
        let splits = config.splits.clone().unwrap_or(default_splits);
        let plan = SignalPlan {
            cycle: splits.iter().sum(),
            phases,
            splits,
            offsets: config.offsets.clone(),
            all_red: config.all_red,
            min_green: config.min_green,
            max_green: config.max_green,
            gap_time: config.gap_time,
            lqf_min_service: config.lqf_min_service,
        };
        plan.validate(conflicts)?;
        Ok(plan)
    }

    pub fn validate(&self, conflicts: &ConflictTable) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidPlan(m));
        if self.splits.len() != self.phases.len() {
            return bad(format!("{} splits for {} phases", self.splits.len(), self.phases.len()));
        }
        if self.all_red.is_nan() || self.all_red < 0.0 {
            return bad("all-red must be non-negative".into());
        }
        if self.splits.iter().any(|&s| !(s.is_finite() && s > self.all_red)) {
            return bad("every split must exceed the all-red clearance".into());
        }
        if (self.splits.iter().sum::<f64>() - self.cycle).abs() > 1e-9 {
            return bad("splits must sum to the cycle".into());
        }
        if !(self.min_green > 0.0 && self.min_green <= self.max_green) {
            return bad("need 0 < min_green <= max_green".into());
        }
        if !(self.gap_time > 0.0 && self.lqf_min_service >= 0.0) {
            return bad("gap_time must be positive and lqf_min_service non-negative".into());
        }
        let moves = conflicts.movements();
        for m in moves {
            if !self.phases.iter().any(|p| p.serves_movement(*m)) {
                return bad(format!("movement {m} is never served"));
            }
        }
        for (i, p) in self.phases.iter().enumerate() {
            for a in moves.iter().filter(|m| p.serves_movement(**m)) {
                for b in moves.iter().filter(|m| p.serves_movement(**m)) {
                    if conflicts.conflict(*a, *b) {
                        return bad(format!("phase {i} releases conflicting {a} and {b}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn offset(&self, intersection: usize) -> f64 {
        self.offsets.get(intersection).copied().unwrap_or(0.0)
    }

    /// Green phase at time `t`, or `None` during all-red.
    pub fn fixed_phase_at(&self, t: f64, intersection: usize) -> Option<usize> {
        let c = (t + self.offset(intersection)).rem_euclid(self.cycle);
        let mut start = 0.0;
        for (i, &s) in self.splits.iter().enumerate() {
            if c < start + s - 1e-9 {
                return (c < start + s - self.all_red - 1e-9).then_some(i);
            }
            start += s;
        }
        Some(0)
    }

    /// Write the indications of `phase` for one intersection.
    pub fn apply(&self, phase: Option<usize>, intersection: usize, conflicts: &ConflictTable, state: &mut SignalState) {
        for (mi, m) in conflicts.movements().iter().enumerate() {
            let go = phase.is_some_and(|p| self.phases[p].serves_movement(*m));
            state.set(intersection, mi, go);
        }
    }
}

/// Pretimed control: the cycle is walked from each intersection's offset.
pub struct FixedSignal {
    config: SignalConfig,
    plan: Option<SignalPlan>,
}

impl FixedSignal {
    pub fn new(config: SignalConfig) -> Self {
        FixedSignal { config, plan: None }
    }
}

pub(super) fn plan_for<'a>(
    slot: &'a mut Option<SignalPlan>,
    config: &SignalConfig,
    obs: &Observation<'_>,
) -> Result<&'a SignalPlan, SimError> {
    if slot.is_none() {
        let plan = SignalPlan::build(config, &obs.net.conflicts, obs.net.lanes())
            .map_err(|e| SimError::Controller(e.to_string()))?;
        *slot = Some(plan);
    }
    Ok(slot.as_ref().expect("plan"))
}

impl Controller for FixedSignal {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        let plan = plan_for(&mut self.plan, &self.config, obs)?;
        let conflicts = &obs.net.conflicts;
        let mut state = SignalState::all_stop(obs.net.n_intersections(), conflicts.movements().len());
        for i in 0..obs.net.n_intersections() {
            plan.apply(plan.fixed_phase_at(obs.time, i), i, conflicts, &mut state);
        }
        decision.signals = Some(state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridConfig, IntersectionGrid};

    fn table(lanes: u16) -> ConflictTable {
        ConflictTable::build(&IntersectionGrid::build(0, &GridConfig { lanes_per_approach: lanes, ..Default::default() }).unwrap())
    }

    #[test]
    fn default_plans_are_compatible_and_complete() {
        for lanes in 1..=4 {
            let plan = SignalPlan::build(&SignalConfig::default(), &table(lanes), lanes).unwrap();
            assert_eq!(plan.cycle, 90.0);
        }
    }

    #[test]
    fn conflicting_phase_rejected() {
        let t = table(3);
        let mut plan = SignalPlan::build(&SignalConfig::default(), &t, 3).unwrap();
        plan.phases[0] = Phase::new(&[(Approach::East, Turn::Through), (Approach::North, Turn::Through)]);
        assert!(plan.validate(&t).is_err());
        let mut cfg = SignalConfig { splits: Some(vec![30.0, 30.0, 30.0]), ..Default::default() };
        assert!(SignalPlan::build(&cfg, &t, 3).is_err());
        cfg.splits = Some(vec![36.0, 12.0, 30.0, 1.0]);
        assert!(SignalPlan::build(&cfg, &t, 3).is_err());
        let cfg = SignalConfig { min_green: 50.0, ..Default::default() };
        assert!(SignalPlan::build(&cfg, &t, 3).is_err());
    }

    #[test]
    fn fixed_cycle_walk() {
        let plan = SignalPlan::build(&SignalConfig::default(), &table(3), 3).unwrap();
        assert_eq!(plan.fixed_phase_at(0.0, 0), Some(0));
        assert_eq!(plan.fixed_phase_at(33.9, 0), Some(0));
        // clearance at the end of the first split
        assert_eq!(plan.fixed_phase_at(34.0, 0), None);
        assert_eq!(plan.fixed_phase_at(36.0, 0), Some(1));
        assert_eq!(plan.fixed_phase_at(48.0, 0), Some(2));
        assert_eq!(plan.fixed_phase_at(78.0, 0), Some(3));
        for t in [0.0, 13.5, 35.0, 47.0, 89.5] {
            assert_eq!(plan.fixed_phase_at(t + 90.0, 0), plan.fixed_phase_at(t, 0));
        }
        let no_clear = SignalPlan::build(&SignalConfig { all_red: 0.0, ..Default::default() }, &table(3), 3).unwrap();
        assert_eq!(no_clear.fixed_phase_at(36.0, 0), Some(1));
        let shifted = SignalPlan::build(&SignalConfig { offsets: vec![0.0, 36.0], ..Default::default() }, &table(3), 3).unwrap();
        assert_eq!(shifted.fixed_phase_at(0.0, 1), Some(1));
    }
}
