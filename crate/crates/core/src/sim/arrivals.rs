use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Approach, CorridorNetwork, EntryPoint, Movement, Turn};

/// Minimum headway between consecutive arrivals of one stream, seconds.
pub const MIN_HEADWAY: f64 = 1.2;

/// Shift of the headway distribution for a stream with mean headway `mean`.
/// Dense streams get a smaller shift so the mean stays attainable.
pub fn headway_shift(mean: f64) -> f64 {
    MIN_HEADWAY.min(0.5 * mean)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Arrival instants of one stream over `[0, window)` from shifted-exponential headways.
pub fn generate_arrivals(demand_vph: f64, window: f64, seed: u64) -> Result<Vec<f64>, SimError> {
    stream_arrivals(demand_vph, window, &mut stream_rng(seed, 0))
}

fn stream_arrivals(demand_vph: f64, window: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimError> {
    if !(demand_vph.is_finite() && demand_vph >= 0.0) {
        return Err(SimError::InvalidParameter(format!("demand must be non-negative, got {demand_vph}")));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(SimError::InvalidParameter(format!("window must be positive, got {window}")));
    }
    if demand_vph == 0.0 {
        return Ok(Vec::new());
    }
    let mean = 3600.0 / demand_vph;
    let shift = headway_shift(mean);
    let exp = Exp::new(1.0 / (mean - shift)).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += shift + exp.sample(rng);
        if t >= window {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Two-way hourly volumes per street; each direction receives half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandConfig {
    pub major_vph: f64,
    pub minor_vph: f64,
    /// Left, through and right shares at every intersection.
    pub turn_split: [f64; 3],
}

impl Default for DemandConfig {
    fn default() -> Self {
        Regime::Moderate.demand()
    }
}

impl DemandConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for v in [self.major_vph, self.minor_vph] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidParameter(format!("demand must be non-negative, got {v}")));
            }
        }
        let s: f64 = self.turn_split.iter().sum();
        if self.turn_split.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidParameter(format!("turn split must be a distribution, got {:?}", self.turn_split)));
        }
        Ok(())
    }

    /// Per-direction demand of an entry approach.
    pub fn stream_vph(&self, approach: Approach) -> f64 {
        if approach.is_major() {
            self.major_vph / 2.0
        } else {
            self.minor_vph / 2.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Moderate,
    High,
    Extreme,
    Training,
}

impl Regime {
    pub fn demand(self) -> DemandConfig {
        let (major_vph, minor_vph) = match self {
            Regime::Moderate => (1150.0, 850.0),
            Regime::High => (1600.0, 1100.0),
            Regime::Extreme => (2000.0, 1300.0),
            Regime::Training => (2500.0, 1500.0),
        };
        DemandConfig { major_vph, minor_vph, turn_split: [0.1, 0.8, 0.1] }
    }

    pub fn parse(name: &str) -> Option<Regime> {
        match name {
            "moderate" => Some(Regime::Moderate),
            "high" => Some(Regime::High),
            "extreme" => Some(Regime::Extreme),
            "training" => Some(Regime::Training),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub entry: EntryPoint,
    /// One movement per intersection visited.
    pub movements: Vec<Movement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSchedule {
    pub seed: u64,
    pub window: f64,
    pub arrivals: Vec<Arrival>,
}

fn choose_turn(split: &[f64; 3], rng: &mut ChaCha8Rng) -> Turn {
    let u: f64 = rng.random();
    if u < split[0] {
        Turn::Left
    } else if u < split[0] + split[1] {
        Turn::Through
    } else {
        Turn::Right
    }
}

/// Seeded arrivals for every entry point, each with a sampled route.
pub fn build_schedule(
    net: &CorridorNetwork,
    demand: &DemandConfig,
    window: f64,
    seed: u64,
) -> Result<ArrivalSchedule, SimError> {
    demand.validate()?;
    let mut arrivals = Vec::new();
    for (s, &entry) in net.entry_points.iter().enumerate() {
        let mut headways = stream_rng(seed, 2 * s as u64 + 1);
        let mut routes = stream_rng(seed, 2 * s as u64 + 2);
        for time in stream_arrivals(demand.stream_vph(entry.approach), window, &mut headways)? {
            let mut movements = Vec::new();
            let (mut here, mut approach) = (entry.intersection, entry.approach);
            loop {
                let turn = choose_turn(&demand.turn_split, &mut routes);
                let lanes = net.grids[here].lanes_for(turn);
                let lane = lanes[routes.random_range(0..lanes.len())];
                movements.push(Movement::new(approach, lane, turn));
                match net.neighbour(here, approach.exit_side(turn)) {
                    Some((next, a)) => {
                        here = next;
                        approach = a;
                    }
                    None => break,
                }
            }
            arrivals.push(Arrival { time, entry, movements });
        }
    }
    arrivals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.entry.cmp(&b.entry)));
    Ok(ArrivalSchedule { seed, window, arrivals })
}
