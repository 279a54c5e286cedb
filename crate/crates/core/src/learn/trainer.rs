use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    encode_state, td_target, EpsilonSchedule, LearnError, MemberOutcome, NextState, ReplayMemory,
    TransitionRecord, DEFAULT_QUEUE_CAP, N_FEATURES,
};
use crate::approximator::{DenseNet, Optimizer, OptimizerConfig};
use crate::control::DsclsPolicy;
use crate::geometry::CorridorNetwork;
use crate::io::write_atomic;
use crate::reservation::TransitionType;
use crate::sim::{Action, DemandConfig, EpisodeConfig, LeaderView, LogDetail, Regime, StepOutcome, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epochs: u64,
    pub steps_per_epoch: u64,
    pub dt: f64,
    pub gamma: f64,
    pub target_update_epochs: u64,
    pub demand: DemandConfig,
    /// Arrival generation window, s.
    pub window: f64,
    pub optimizer: OptimizerConfig,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub warmup: usize,
    /// Simulation steps between gradient steps.
    pub train_every: u64,
    pub epsilon: EpsilonSchedule,
    pub queue_cap: u32,
    /// Arrival seed, the same for every epoch.
    pub arrival_seed: u64,
    /// Seed of weight initialisation, exploration and minibatch sampling.
    pub seed: u64,
    /// Checkpoint cadence in epochs, 0 for the final model only.
    pub checkpoint_every: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epochs: 100,
            steps_per_epoch: 1500,
            dt: 1.0,
            gamma: 0.9,
            target_update_epochs: 5,
            demand: Regime::Training.demand(),
            window: 900.0,
            optimizer: OptimizerConfig::default(),
            hidden: vec![64, 64],
            replay_capacity: 10_000,
            batch_size: 32,
            warmup: 500,
            train_every: 1,
            epsilon: EpsilonSchedule::default(),
            queue_cap: DEFAULT_QUEUE_CAP,
            arrival_seed: 0,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.optimizer.learning_rate.is_finite() && self.optimizer.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.window.is_finite() && self.window >= 0.0) {
            return bad("dt must be positive and window non-negative");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if self.target_update_epochs == 0 || self.train_every == 0 {
            return bad("target_update_epochs and train_every must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        self.epsilon.validate().map_err(LearnError::InvalidConfig)?;
        self.demand.validate().map_err(|e| LearnError::InvalidConfig(e.to_string()))
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![N_FEATURES];
        d.extend(&self.hidden);
        d.push(Action::ALL.len());
        d
    }

    /// Episode settings of one training epoch.
    pub fn episode(&self, base: &EpisodeConfig) -> EpisodeConfig {
        let mut cfg = base.clone();
        cfg.demand = self.demand;
        cfg.sim.kinematics.dt = self.dt;
        cfg.steps = self.steps_per_epoch;
        cfg.window = Some(self.window);
        cfg.log = LogDetail::Summary;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub epsilon: f64,
    pub global_reward: f64,
    /// NaN when no gradient step ran.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub curve: Vec<EpochStats>,
    pub net: DenseNet,
}

/// Turn one step's leaders and the next step's leaders into transitions,
/// one per leader.
pub fn build_transitions(prev: &StepOutcome, next: &[LeaderView], vmax: f64, queue_cap: u32) -> Vec<TransitionRecord> {
    let next_of: BTreeMap<u32, &LeaderView> = next.iter().map(|l| (l.vehicle, l)).collect();
    let successor = |id: u32| match next_of.get(&id) {
        Some(l) => NextState::State(encode_state(l, vmax, queue_cap)),
        None => NextState::Terminal,
    };
    let reward_of = |l: &LeaderView| prev.direction_rewards[l.direction];
    let mut out = Vec::with_capacity(prev.leaders.len());
    for (l, &action) in prev.leaders.iter().zip(&prev.proposals) {
        let state = encode_state(l, vmax, queue_cap);
        let reward = reward_of(l);
        let after = next_of.get(&l.vehicle);
        let next_size = after.map_or(l.group_size, |n| n.group_size);
        let ttype = TransitionType::from_sizes(l.group_size, next_size);
        let (h, group) = match ttype {
            TransitionType::SameKind => (l.group_size, Vec::new()),
            TransitionType::CoordinatedToIndependent => (
                l.group_size,
                prev.leaders
                    .iter()
                    .filter(|m| m.group == l.group)
                    .map(|m| MemberOutcome { reward: reward_of(m), next: successor(m.vehicle) })
                    .collect(),
            ),
            TransitionType::IndependentToCoordinated => {
                let g = after.expect("coordinated successor exists").group;
                (
                    next_size,
                    next.iter()
                        .filter(|m| m.group == g)
                        .map(|m| MemberOutcome { reward: 0.0, next: successor(m.vehicle) })
                        .collect(),
                )
            }
        };
        out.push(TransitionRecord { state, action, reward, next: successor(l.vehicle), ttype, h, group });
    }
    out
}

/// One minibatch step against the lagged target. `None` while the memory is underfull.
pub fn train_step<R: rand::Rng + ?Sized>(
    memory: &ReplayMemory,
    net: &mut DenseNet,
    target: &DenseNet,
    opt: &mut Optimizer,
    gamma: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Option<f64>, LearnError> {
    let Some(batch) = memory.sample(batch_size, rng) else { return Ok(None) };
    let mut inputs = Vec::with_capacity(batch.len());
    let mut actions = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for rec in batch {
        inputs.push(rec.state.features.to_vec());
        actions.push(rec.action.index());
        targets.push(td_target(rec, target, gamma)?);
    }
    Ok(Some(net.fit_batch(opt, &inputs, &actions, &targets)?))
}

fn write_curve(path: &Path, curve: &[EpochStats]) -> Result<(), LearnError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "epsilon", "global_reward", "mean_loss"])?;
    for s in curve {
        w.write_record([s.epoch.to_string(), s.epsilon.to_string(), s.global_reward.to_string(), s.mean_loss.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| LearnError::Io(e.into_error()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Train the shared leader network. With `out_dir` set, writes the reward
/// curve, periodic checkpoints and `model.qnet`.
pub fn run_training(
    base: &EpisodeConfig,
    cfg: &TrainerConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainingReport, LearnError> {
    cfg.validate()?;
    let episode = cfg.episode(base);
    episode.validate()?;
    let net = Arc::new(CorridorNetwork::build(&episode.network).map_err(crate::sim::SimError::from)?);
    let vmax = episode.sim.kinematics.vmax;
    let online = DenseNet::new(&cfg.layer_dims(), cfg.seed)?;
    let mut target = online.clone();
    let mut policy = DsclsPolicy::new(online, 1.0, cfg.queue_cap, cfg.seed ^ 0x5eed)
        .map_err(|e| LearnError::InvalidConfig(e.to_string()))?;
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut memory = ReplayMemory::new(cfg.replay_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let ckpt_dir = out_dir.map(|d| d.join("checkpoints"));
    if let Some(d) = &ckpt_dir {
        if cfg.checkpoint_every > 0 {
            std::fs::create_dir_all(d)?;
        }
    }
    let mut curve = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        let epsilon = cfg.epsilon.value(epoch);
        policy.set_epsilon(epsilon);
        let mut world = World::with_network(&episode, net.clone(), cfg.arrival_seed)?;
        let mut pending: Option<StepOutcome> = None;
        let mut global = 0.0;
        let (mut loss_sum, mut loss_n) = (0.0, 0u64);
        for step in 0..cfg.steps_per_epoch {
            let out = world.step(&mut policy)?;
            global += out.global_reward;
            if let Some(prev) = pending.take() {
                for rec in build_transitions(&prev, &out.leaders, vmax, cfg.queue_cap) {
                    memory.push(rec);
                }
            }
            pending = Some(out);
            if memory.len() >= cfg.warmup.max(cfg.batch_size) && step % cfg.train_every == 0 {
                if let Some(l) =
                    train_step(&memory, policy.net_mut(), &target, &mut opt, cfg.gamma, cfg.batch_size, &mut rng)?
                {
                    loss_sum += l;
                    loss_n += 1;
                }
            }
        }
        if (epoch + 1) % cfg.target_update_epochs == 0 {
            target = policy.net().clone();
        }
        let stats = EpochStats {
            epoch,
            epsilon,
            global_reward: global,
            mean_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN },
        };
        progress(&stats);
        curve.push(stats);
        if let (Some(d), true) = (&ckpt_dir, cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            write_atomic(&d.join(format!("epoch_{:05}.qnet", epoch + 1)), &policy.net().to_bytes())?;
        }
    }
    let net = policy.net().clone();
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
        write_curve(&d.join("reward_curve.csv"), &curve)?;
        if cfg.epochs > 0 {
            write_atomic(&d.join("model.qnet"), &net.to_bytes())?;
        }
    }
    Ok(TrainingReport { curve, net })
}

/// Mean global reward over a run of epochs.
pub fn mean_reward(stats: &[EpochStats]) -> f64 {
    stats.iter().map(|s| s.global_reward).sum::<f64>() / stats.len().max(1) as f64
}

