use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ControlError;
use crate::approximator::DenseNet;
use crate::learn::{encode_state, EncodedState, N_FEATURES};
use crate::sim::{Action, Controller, Decision, Observation, SimError};

/// Index of the first maximal Q-value.
pub fn greedy_action(q: &[f64]) -> Action {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("three outputs")
}

/// Epsilon-greedy leader policy over a shared Q-network.
pub struct DsclsPolicy {
    net: DenseNet,
    epsilon: f64,
    queue_cap: u32,
    rng: ChaCha8Rng,
}

impl DsclsPolicy {
    pub fn new(net: DenseNet, epsilon: f64, queue_cap: u32, seed: u64) -> Result<Self, ControlError> {
        if net.n_inputs() != N_FEATURES || net.n_outputs() != Action::ALL.len() {
            return Err(ControlError::ModelShape { inputs: net.n_inputs(), outputs: net.n_outputs() });
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ControlError::InvalidEpsilon(epsilon));
        }
        Ok(DsclsPolicy { net, epsilon, queue_cap, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn queue_cap(&self) -> u32 {
        self.queue_cap
    }

    pub fn act(&mut self, state: &EncodedState) -> Result<Action, SimError> {
        if self.epsilon > 0.0 && self.rng.random::<f64>() < self.epsilon {
            return Ok(Action::from_index(self.rng.random_range(0..3)).expect("in range"));
        }
        let q = self.net.forward(state.as_slice()).map_err(|e| SimError::Controller(e.to_string()))?;
        Ok(greedy_action(&q))
    }
}

impl Controller for DsclsPolicy {
    fn name(&self) -> String {
        "dscls".into()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        for (slot, leader) in obs.leaders.iter().enumerate() {
            let s = encode_state(leader, obs.kinematics.vmax, self.queue_cap);
            decision.leader_actions[slot] = Some(self.act(&s)?);
        }
        Ok(())
    }
}

/// Uniformly random leader actions, a floor for the learned policy.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        for slot in 0..obs.leaders.len() {
            decision.leader_actions[slot] = Action::from_index(self.rng.random_range(0..3));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_first_max() {
        assert_eq!(greedy_action(&[0.0, 2.0, 1.0]), Action::Maintain);
        assert_eq!(greedy_action(&[3.0, 3.0, 1.0]), Action::Decelerate);
        assert_eq!(greedy_action(&[-3.0, -2.0, -1.0]), Action::Accelerate);
    }

    #[test]
    fn shape_and_epsilon_checked() {
        assert!(DsclsPolicy::new(DenseNet::zeros(&[4, 3]).unwrap(), 0.0, 20, 0).is_err());
        assert!(DsclsPolicy::new(DenseNet::zeros(&[3, 2]).unwrap(), 0.0, 20, 0).is_err());
        assert!(DsclsPolicy::new(DenseNet::zeros(&[3, 3]).unwrap(), 1.5, 20, 0).is_err());
    }
}
