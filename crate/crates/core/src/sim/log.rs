use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{Action, SimError};
use crate::geometry::{Approach, CellIndex, Movement};

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Which per-vehicle step records an episode keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogDetail {
    /// Header, vehicle summaries and rewards only.
    Summary,
    /// Records for vehicles whose body touches a grid.
    #[default]
    Grid,
    /// Records for every released vehicle, queued ones included.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: u32,
    pub config_fingerprint: String,
    pub seed: u64,
    pub controller: String,
    pub dt: f64,
    pub vmax: f64,
    pub steps: u64,
    pub detail: LogDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary {
    pub id: u32,
    pub entry_intersection: u16,
    pub entry_approach: Approach,
    pub movements: Vec<Movement>,
    /// Scheduled arrival instant.
    pub arrival_time: f64,
    /// Start of the first step the vehicle existed in.
    pub release_time: f64,
    pub insert_time: Option<f64>,
    pub exit_time: Option<f64>,
    pub route_length: f64,
    pub distance: f64,
    /// Accumulated Σ(dt − L/vmax).
    pub delay: f64,
}

impl VehicleSummary {
    pub fn completed(&self) -> bool {
        self.exit_time.is_some()
    }

    pub fn travel_time(&self) -> Option<f64> {
        self.exit_time.map(|e| e - self.release_time)
    }
}

/// State of one vehicle at the start of a step, with the action it then took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub id: u32,
    /// Grid id of the first grid cell under the body.
    pub intersection: Option<u16>,
    pub movement: Option<Movement>,
    pub position: f64,
    pub speed: f64,
    pub action: Action,
    pub cells: SmallVec<[CellIndex; 4]>,
    pub group: Option<u32>,
    /// −(dt − L/vmax) for this step.
    pub reward_share: f64,
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogLine {
    Header(LogHeader),
    Step(StepRecord),
    Reward { step: u64, global: f64 },
    Vehicle(VehicleSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
    /// Global reward per step.
    pub rewards: Vec<f64>,
    /// Ascending by id.
    pub vehicles: Vec<VehicleSummary>,
}

impl EpisodeLog {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleSummary> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok().map(|i| &self.vehicles[i])
    }

    pub fn records_of(&self, id: u32) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |r| r.id == id)
    }

    /// Line-delimited JSON, one record per line, header first.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let err = |e: &dyn std::fmt::Display| SimError::Log(e.to_string());
        let line = |l: &LogLine, w: &mut W| -> Result<(), SimError> {
            serde_json::to_writer(&mut *w, l).map_err(|e| err(&e))?;
            w.write_all(b"\n").map_err(|e| err(&e))
        };
        line(&LogLine::Header(self.header.clone()), &mut w)?;
        let mut records = self.steps.iter().peekable();
        for (step, &global) in self.rewards.iter().enumerate() {
            while let Some(r) = records.next_if(|r| r.step == step as u64) {
                line(&LogLine::Step(r.clone()), &mut w)?;
            }
            line(&LogLine::Reward { step: step as u64, global }, &mut w)?;
        }
        for r in records {
            line(&LogLine::Step(r.clone()), &mut w)?;
        }
        for v in &self.vehicles {
            line(&LogLine::Vehicle(v.clone()), &mut w)?;
        }
        w.flush().map_err(|e| err(&e))
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EpisodeLog, SimError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut rewards = Vec::new();
        let mut vehicles = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|e| SimError::Log(format!("line {}: {e}", n + 1)))?;
            match parsed {
                LogLine::Header(h) => {
                    if header.is_some() {
                        return Err(SimError::Log(format!("line {}: second header", n + 1)));
                    }
                    if h.schema != LOG_SCHEMA_VERSION {
                        return Err(SimError::Log(format!("unsupported log schema {}", h.schema)));
                    }
                    header = Some(h);
                }
                _ if header.is_none() => return Err(SimError::Log("log does not start with a header".into())),
                LogLine::Step(s) => steps.push(s),
                LogLine::Reward { step, global } => {
                    if step != rewards.len() as u64 {
                        return Err(SimError::Log(format!("line {}: reward for step {step} out of order", n + 1)));
                    }
                    rewards.push(global);
                }
                LogLine::Vehicle(v) => vehicles.push(v),
            }
        }
        let header = header.ok_or_else(|| SimError::Log("empty log".into()))?;
        vehicles.sort_by_key(|v: &VehicleSummary| v.id);
        Ok(EpisodeLog { header, steps, rewards, vehicles })
    }
}
