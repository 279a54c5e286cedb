use serde::{Deserialize, Serialize};

use crate::sim::LeaderView;

pub const N_FEATURES: usize = 3;
pub const DEFAULT_QUEUE_CAP: u32 = 20;

/// Normalised (speed, progress, queue) features of one leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodedState {
    pub features: [f64; N_FEATURES],
}

impl EncodedState {
    pub fn as_slice(&self) -> &[f64] {
        &self.features
    }
}

pub fn encode_state(leader: &LeaderView, vmax: f64, queue_cap: u32) -> EncodedState {
    let cap = f64::from(queue_cap.max(1));
    EncodedState {
        features: [
            (leader.speed / vmax).clamp(0.0, 1.0),
            leader.progress.clamp(0.0, 1.0),
            (f64::from(leader.queue) / cap).min(1.0),
        ],
    }
}
