use crate::sim::{LaneKey, Observation};

/// Queued vehicles on one approach lane at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueMeasure {
    pub lane: LaneKey,
    pub queued_count: u32,
    pub step: u64,
}

/// Number of speeds strictly below the queue threshold.
pub fn count_queued(speeds: impl IntoIterator<Item = f64>, threshold: f64) -> u32 {
    speeds.into_iter().filter(|&v| v < threshold).count() as u32
}

/// Queue on `lane` as counted by the world, vehicles waiting to enter included.
pub fn queue_length(lane: LaneKey, obs: &Observation<'_>) -> QueueMeasure {
    QueueMeasure { lane, queued_count: obs.queue(&lane), step: obs.step }
}
