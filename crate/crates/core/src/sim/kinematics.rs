use serde::{Deserialize, Serialize};

use super::SimError;

/// Longitudinal control input. The integer encoding indexes the Q-network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Decelerate = 0,
    Maintain = 1,
    Accelerate = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Decelerate, Action::Maintain, Action::Accelerate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Next less aggressive action, `None` once fully braking.
    pub fn downgrade(self) -> Option<Action> {
        match self {
            Action::Accelerate => Some(Action::Maintain),
            Action::Maintain => Some(Action::Decelerate),
            Action::Decelerate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicsParams {
    pub a_acc: f64,
    /// Braking magnitude, applied as a negative acceleration.
    pub a_dec: f64,
    pub vmax: f64,
    pub dt: f64,
}

impl Default for KinematicsParams {
    fn default() -> Self {
        KinematicsParams { a_acc: 3.5, a_dec: 7.0, vmax: 11.17, dt: 1.0 }
    }
}

impl KinematicsParams {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("a_acc", self.a_acc), ("a_dec", self.a_dec), ("vmax", self.vmax), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn signed_accel(&self, a: Action) -> f64 {
        match a {
            Action::Decelerate => -self.a_dec,
            Action::Maintain => 0.0,
            Action::Accelerate => self.a_acc,
        }
    }

    /// Distance needed to stop from `v` under full braking.
    pub fn stop_distance(&self, v: f64) -> f64 {
        v * v / (2.0 * self.a_dec)
    }

    /// Distance travelled and final speed over one step. Acceleration is
    /// held constant until the speed reaches 0 or `vmax`, then dropped to 0.
    pub fn advance(&self, speed: f64, a: Action) -> (f64, f64) {
        let acc = self.signed_accel(a);
        let dt = self.dt;
        let v = speed.clamp(0.0, self.vmax);
        if acc == 0.0 {
            return (v * dt, v);
        }
        let limit = if acc > 0.0 { self.vmax } else { 0.0 };
        let t_clamp = (limit - v) / acc;
        if t_clamp >= dt {
            let v1 = v + acc * dt;
            (v * dt + 0.5 * acc * dt * dt, v1)
        } else {
            let d = v * t_clamp + 0.5 * acc * t_clamp * t_clamp;
            (d + limit * (dt - t_clamp), limit)
        }
    }

    /// Upper bound on the distance covered in one step.
    pub fn max_step_distance(&self) -> f64 {
        self.vmax * self.dt + 0.5 * self.a_acc * self.dt * self.dt
    }
}

/// Most aggressive action that keeps stopping-distance separation from the
/// vehicle ahead, assuming it brakes as hard as possible this step.
pub fn follower_action(speed: f64, gap: f64, leader_speed: f64, k: &KinematicsParams, margin: f64) -> Action {
    if !gap.is_finite() {
        return if speed < k.vmax { Action::Accelerate } else { Action::Maintain };
    }
    let (d_lead, v_lead) = k.advance(leader_speed, Action::Decelerate);
    let stop_lead = k.stop_distance(v_lead);
    for a in [Action::Accelerate, Action::Maintain] {
        let (d, v) = k.advance(speed, a);
        let gap_after = gap - d + d_lead;
        if gap_after >= margin + (k.stop_distance(v) - stop_lead).max(0.0) {
            return a;
        }
    }
    Action::Decelerate
}
