use serde::{Deserialize, Serialize};

use super::{EncodedState, LearnError};
use crate::approximator::DenseNet;
use crate::reservation::TransitionType;
use crate::sim::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NextState {
    Terminal,
    State(EncodedState),
}

/// Reward and successor of one group member, kept for the joint targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub reward: f64,
    pub next: NextState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: EncodedState,
    pub action: Action,
    pub reward: f64,
    pub next: NextState,
    pub ttype: TransitionType,
    /// Size of the coordinated group the joint term spans; 1 when independent.
    pub h: usize,
    /// Coordinated to independent: the old group's members.
    /// Independent to coordinated: the new group's members.
    pub group: Vec<MemberOutcome>,
}

/// Largest Q-value of a successor, 0 past the end of the agent's episode.
pub fn max_next_q(net: &DenseNet, next: &NextState) -> Result<f64, LearnError> {
    match next {
        NextState::Terminal => Ok(0.0),
        NextState::State(s) => Ok(net.forward(s.as_slice())?.into_iter().fold(f64::NEG_INFINITY, f64::max)),
    }
}

pub fn td_target(rec: &TransitionRecord, target_net: &DenseNet, gamma: f64) -> Result<f64, LearnError> {
    match rec.ttype {
        TransitionType::SameKind => Ok(rec.reward + gamma * max_next_q(target_net, &rec.next)?),
        TransitionType::CoordinatedToIndependent => {
            if rec.group.is_empty() {
                return Err(LearnError::MissingSnapshot);
            }
            let mut sum = 0.0;
            for m in &rec.group {
                sum += m.reward + gamma * max_next_q(target_net, &m.next)?;
            }
            Ok(sum)
        }
        TransitionType::IndependentToCoordinated => {
            if rec.group.is_empty() || rec.h == 0 {
                return Err(LearnError::MissingSnapshot);
            }
            let mut joint = 0.0;
            for m in &rec.group {
                joint += max_next_q(target_net, &m.next)?;
            }
            Ok(rec.reward + gamma * joint / rec.h as f64)
        }
    }
}
