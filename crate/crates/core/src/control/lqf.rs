use super::actuated::phase_flags;
use super::signal::{plan_for, SignalConfig, SignalPlan};
use crate::sim::{Controller, Decision, Observation, SignalState, SimError};

/// Index of the largest queue sum; ties go to the lowest index, all-zero holds `current`.
pub fn select_phase(queues: &[u32], current: usize) -> usize {
    let mut best = current;
    let mut best_q = 0;
    for (p, &q) in queues.iter().enumerate() {
        if q > best_q {
            best = p;
            best_q = q;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqfState {
    pub phase: usize,
    pub since: f64,
}

impl LqfState {
    pub fn step(&mut self, plan: &SignalPlan, t: f64, queues: &[u32]) -> usize {
        if t - self.since >= plan.lqf_min_service - 1e-9 {
            let next = select_phase(queues, self.phase);
            if next != self.phase {
                self.phase = next;
                self.since = t;
            }
        }
        self.phase
    }
}

/// Serves the compatible movement set holding the most queued vehicles.
/// Clearance is left to the reservation arbiter.
pub struct Lqf {
    config: SignalConfig,
    plan: Option<SignalPlan>,
    states: Vec<LqfState>,
}

impl Lqf {
    pub fn new(config: SignalConfig) -> Self {
        Lqf { config, plan: None, states: Vec::new() }
    }
}

impl Controller for Lqf {
    fn name(&self) -> String {
        "lqf".into()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        let plan = plan_for(&mut self.plan, &self.config, obs)?;
        let n = obs.net.n_intersections();
        if self.states.len() != n {
            self.states = vec![LqfState { phase: 0, since: obs.time }; n];
        }
        let conflicts = &obs.net.conflicts;
        let mut state = SignalState::all_stop(n, conflicts.movements().len());
        for i in 0..n {
            let queues = phase_flags(plan, obs, i, |li| obs.lane_queue[li]);
            let phase = self.states[i].step(plan, obs.time, &queues);
            plan.apply(Some(phase), i, conflicts, &mut state);
        }
        decision.signals = Some(state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConflictTable, GridConfig, IntersectionGrid};

    #[test]
    fn argmax_and_ties() {
        // NS through set (index 2) holds 7 against 3 on the EW through set
        assert_eq!(select_phase(&[3, 0, 7, 0], 0), 2);
        assert_eq!(select_phase(&[5, 0, 5, 0], 3), 0);
        assert_eq!(select_phase(&[0; 4], 3), 3);
        assert_eq!(select_phase(&[30, 0, 70, 0], 0), select_phase(&[3, 0, 7, 0], 0));
    }

    #[test]
    fn minimum_service_holds() {
        let grid = IntersectionGrid::build(0, &GridConfig::default()).unwrap();
        let plan = SignalPlan::build(&SignalConfig::default(), &ConflictTable::build(&grid), 3).unwrap();
        let mut s = LqfState { phase: 0, since: 0.0 };
        assert_eq!(s.step(&plan, 1.0, &[0, 0, 9, 0]), 0);
        assert_eq!(s.step(&plan, 5.0, &[0, 0, 9, 0]), 2);
        assert_eq!(s.step(&plan, 6.0, &[9, 0, 0, 0]), 2);
        assert_eq!(s.step(&plan, 10.0, &[9, 0, 0, 0]), 0);
    }
}
