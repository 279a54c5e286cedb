use super::signal::{plan_for, SignalConfig, SignalPlan};
use crate::geometry::Approach;
use crate::sim::{Controller, Decision, LaneKey, Observation, SignalState, SimError};

const TIME_EPS: f64 = 1e-9;

/// Gap-out / max-out state of one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatedState {
    pub phase: usize,
    pub green_start: f64,
    pub last_actuation: f64,
    /// End of the running clearance and the phase it leads to.
    pub clearing: Option<(f64, usize)>,
}

impl Default for ActuatedState {
    fn default() -> Self {
        ActuatedState { phase: 0, green_start: 0.0, last_actuation: 0.0, clearing: None }
    }
}

impl ActuatedState {
    /// Advance to time `t` given which phases have a detector call.
    /// Returns the green phase, or `None` during clearance.
    pub fn step(&mut self, plan: &SignalPlan, t: f64, calls: &[bool]) -> Option<usize> {
        if let Some((until, next)) = self.clearing {
            if t < until - TIME_EPS {
                return None;
            }
            self.start_green(next, t);
        }
        if calls[self.phase] {
            self.last_actuation = t;
        }
        let green = t - self.green_start;
        if green < plan.min_green - TIME_EPS {
            return Some(self.phase);
        }
        let n = plan.phases.len();
        let Some(next) = (1..n).map(|k| (self.phase + k) % n).find(|&p| calls[p]) else {
            return Some(self.phase);
        };
        let maxed = green >= plan.max_green - TIME_EPS;
        let gapped = t - self.last_actuation >= plan.gap_time - TIME_EPS;
        if !(maxed || gapped) {
            return Some(self.phase);
        }
        if plan.all_red > 0.0 {
            self.clearing = Some((t + plan.all_red, next));
            None
        } else {
            self.start_green(next, t);
            Some(next)
        }
    }

    fn start_green(&mut self, phase: usize, t: f64) {
        self.phase = phase;
        self.green_start = t;
        self.last_actuation = t;
        self.clearing = None;
    }
}

/// Detector-actuated control, resting in the arterial through phase.
pub struct ActuatedSignal {
    config: SignalConfig,
    plan: Option<SignalPlan>,
    states: Vec<ActuatedState>,
}

impl ActuatedSignal {
    pub fn new(config: SignalConfig) -> Self {
        ActuatedSignal { config, plan: None, states: Vec::new() }
    }
}

/// Per-phase sums of `score` over the approach lanes each phase serves.
pub(super) fn phase_flags(
    plan: &SignalPlan,
    obs: &Observation<'_>,
    intersection: usize,
    mut score: impl FnMut(usize) -> u32,
) -> Vec<u32> {
    let grid = &obs.net.grids[intersection];
    let mut out = vec![0; plan.phases.len()];
    for approach in Approach::ALL {
        for lane in 0..grid.lanes_per_approach {
            let li = obs.lane_index(&LaneKey { intersection, approach, lane });
            let turns = grid.lane_turns(lane);
            let s = score(li);
            for (p, phase) in plan.phases.iter().enumerate() {
                if phase.serves_lane(approach, turns) {
                    out[p] += s;
                }
            }
        }
    }
    out
}

impl Controller for ActuatedSignal {
    fn name(&self) -> String {
        "actuated".into()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        let plan = plan_for(&mut self.plan, &self.config, obs)?;
        let n = obs.net.n_intersections();
        if self.states.len() != n {
            self.states = vec![ActuatedState::default(); n];
        }
        let conflicts = &obs.net.conflicts;
        let mut state = SignalState::all_stop(n, conflicts.movements().len());
        for i in 0..n {
            let calls: Vec<bool> =
                phase_flags(plan, obs, i, |li| u32::from(obs.detector[li])).iter().map(|&c| c > 0).collect();
            let phase = self.states[i].step(plan, obs.time, &calls);
            plan.apply(phase, i, conflicts, &mut state);
        }
        decision.signals = Some(state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConflictTable, GridConfig, IntersectionGrid};

    fn plan() -> SignalPlan {
        let grid = IntersectionGrid::build(0, &GridConfig::default()).unwrap();
        SignalPlan::build(&SignalConfig::default(), &ConflictTable::build(&grid), 3).unwrap()
    }

    /// Length of the first green given the current phase's call pattern.
    fn first_green(plan: &SignalPlan, dt: f64, own_call: impl Fn(f64) -> bool) -> f64 {
        let mut s = ActuatedState::default();
        let mut t = 0.0;
        loop {
            let calls = [own_call(t), true, false, false];
            if s.step(plan, t, &calls) != Some(0) {
                return t;
            }
            t += dt;
        }
    }

    #[test]
    fn continuous_actuation_maxes_out() {
        let p = plan();
        assert_eq!(first_green(&p, 0.5, |_| true), p.max_green);
        assert_eq!(first_green(&p, 1.0, |_| true), p.max_green);
    }

    #[test]
    fn single_actuation_gaps_out() {
        let p = plan();
        for last in [0.0, 2.0, 5.5, 6.0, 7.5] {
            let g = first_green(&p, 0.5, |t| t == last);
            assert_eq!(g, f64::max(p.min_green, last + p.gap_time), "actuation at {last}");
        }
    }

    #[test]
    fn rests_without_demand() {
        let p = plan();
        let mut s = ActuatedState::default();
        for k in 0..400 {
            assert_eq!(s.step(&p, k as f64 * 0.5, &[false; 4]), Some(0));
        }
    }

    #[test]
    fn clearance_then_next_called_phase() {
        let p = plan();
        let mut s = ActuatedState::default();
        let calls = [false, false, true, false];
        let mut t = 0.0;
        while s.step(&p, t, &calls) == Some(0) {
            t += 0.5;
        }
        assert_eq!(t, p.min_green);
        // phase 1 has no call and is skipped
        assert_eq!(s.step(&p, t + 1.5, &calls), None);
        assert_eq!(s.step(&p, t + 2.0, &calls), Some(2));
    }
}
