//! Deterministic cell-reservation traffic simulation with a multi-agent
//! Q-learning controller and signal baselines.

pub mod geometry;
pub mod reservation;
pub mod sim;
pub mod approximator;
pub mod control;
pub mod io;
pub mod learn;
pub mod metrics;
