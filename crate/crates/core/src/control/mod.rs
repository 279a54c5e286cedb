//! Signal baselines and the learned leader policy, all behind [`Controller`].

mod actuated;
mod lqf;
mod policy;
mod queue;
mod signal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actuated::{ActuatedSignal, ActuatedState};
pub use lqf::{select_phase, Lqf, LqfState};
pub use policy::{greedy_action, DsclsPolicy, RandomPolicy};
pub use queue::{count_queued, queue_length, QueueMeasure};
pub use signal::{default_phases, FixedSignal, Phase, SignalConfig, SignalPlan};

use crate::approximator::DenseNet;
use crate::sim::Controller;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid signal plan: {0}")]
    InvalidPlan(String),
    #[error("model must map 3 features to 3 actions, got {inputs} -> {outputs}")]
    ModelShape { inputs: usize, outputs: usize },
    #[error("epsilon {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("the dscls controller needs a model")]
    MissingModel,
    #[error("unknown controller {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    #[serde(rename = "fixed")]
    FixedSignal,
    #[serde(rename = "actuated")]
    ActuatedSignal,
    Lqf,
    Dscls,
    #[serde(rename = "random")]
    RandomPolicy,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::FixedSignal,
        ControllerKind::ActuatedSignal,
        ControllerKind::Lqf,
        ControllerKind::Dscls,
        ControllerKind::RandomPolicy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::FixedSignal => "fixed",
            ControllerKind::ActuatedSignal => "actuated",
            ControllerKind::Lqf => "lqf",
            ControllerKind::Dscls => "dscls",
            ControllerKind::RandomPolicy => "random",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ControlError::UnknownKind(s.to_string()))
    }
}

/// Build a controller for one episode. `seed` drives any exploration.
pub fn build_controller(
    kind: ControllerKind,
    signal: &SignalConfig,
    model: Option<&DenseNet>,
    queue_cap: u32,
    seed: u64,
) -> Result<Box<dyn Controller + Send>, ControlError> {
    Ok(match kind {
        ControllerKind::FixedSignal => Box::new(FixedSignal::new(signal.clone())),
        ControllerKind::ActuatedSignal => Box::new(ActuatedSignal::new(signal.clone())),
        ControllerKind::Lqf => Box::new(Lqf::new(signal.clone())),
        ControllerKind::Dscls => {
            let net = model.ok_or(ControlError::MissingModel)?.clone();
            Box::new(DsclsPolicy::new(net, 0.0, queue_cap, seed)?)
        }
        ControllerKind::RandomPolicy => Box::new(RandomPolicy::new(seed)),
    })
}
