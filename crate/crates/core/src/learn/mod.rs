//! Multi-agent DQN training of the shared leader network.

mod replay;
mod reward;
mod schedule;
mod state;
mod td;
mod trainer;

use thiserror::Error;

pub use replay::ReplayMemory;
pub use reward::compute_reward;
pub use schedule::EpsilonSchedule;
pub use state::{encode_state, EncodedState, DEFAULT_QUEUE_CAP, N_FEATURES};
pub use td::{max_next_q, td_target, MemberOutcome, NextState, TransitionRecord};
pub use trainer::{build_transitions, mean_reward, run_training, train_step, EpochStats, TrainerConfig, TrainingReport};

use crate::approximator::ApproxError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("joint transition without its group snapshot")]
    MissingSnapshot,
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
