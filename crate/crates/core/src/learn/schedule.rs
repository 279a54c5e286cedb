use serde::{Deserialize, Serialize};

/// Per-epoch exploration rate `max(floor, initial * decay^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { initial: 1.0, decay: 0.999, floor: 0.01 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, epoch: u64) -> f64 {
        let k = i32::try_from(epoch).unwrap_or(i32::MAX);
        (self.initial * self.decay.powi(k)).max(self.floor)
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.initial) && unit(self.floor) && self.decay > 0.0 && self.decay <= 1.0) {
            return Err(format!("invalid epsilon schedule {self:?}"));
        }
        Ok(())
    }
}
