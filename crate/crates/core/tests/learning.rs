use cavsim_core::approximator::{ApproxError, DenseNet, Optimizer, OptimizerConfig};
use cavsim_core::learn::{
    td_target, EncodedState, EpsilonSchedule, LearnError, MemberOutcome, NextState, ReplayMemory, TransitionRecord,
};
use cavsim_core::reservation::TransitionType;
use cavsim_core::sim::Action;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Forward pass written directly against the documented parameter layout.
fn reference_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
    let dims = net.dims();
    let p = net.params();
    let mut off = 0;
    let mut a = x.to_vec();
    for l in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &p[off..off + n_in * n_out];
        let b = &p[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        a = (0..n_out)
            .map(|o| {
                let z = b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>();
                if l + 2 < dims.len() {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect();
    }
    a
}

fn max_q(net: &DenseNet, s: &NextState) -> f64 {
    match s {
        NextState::Terminal => 0.0,
        NextState::State(e) => reference_forward(net, &e.features).into_iter().fold(f64::MIN, f64::max),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> EncodedState {
    EncodedState { features: [rng.random(), rng.random(), rng.random()] }
}

fn random_next(rng: &mut ChaCha8Rng) -> NextState {
    if rng.random_bool(0.2) {
        NextState::Terminal
    } else {
        NextState::State(random_state(rng))
    }
}

fn random_record(rng: &mut ChaCha8Rng) -> TransitionRecord {
    let ttype = match rng.random_range(0..3) {
        0 => TransitionType::SameKind,
        1 => TransitionType::CoordinatedToIndependent,
        _ => TransitionType::IndependentToCoordinated,
    };
    let h = if ttype == TransitionType::SameKind { 1 } else { rng.random_range(2..6) };
    let group = if ttype == TransitionType::SameKind {
        Vec::new()
    } else {
        (0..h).map(|_| MemberOutcome { reward: rng.random_range(-3.0..0.0), next: random_next(rng) }).collect()
    };
    TransitionRecord {
        state: random_state(rng),
        action: Action::ALL[rng.random_range(0..3)],
        reward: rng.random_range(-3.0..0.0),
        next: random_next(rng),
        ttype,
        h,
        group,
    }
}

#[test]
fn td_targets_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = DenseNet::new(&[3, 8, 8, 3], 4).unwrap();
    let gamma = 0.9;
    for _ in 0..1000 {
        let r = random_record(&mut rng);
        let expected = match r.ttype {
            TransitionType::SameKind => r.reward + gamma * max_q(&net, &r.next),
            TransitionType::CoordinatedToIndependent => {
                r.group.iter().map(|m| m.reward + gamma * max_q(&net, &m.next)).sum()
            }
            TransitionType::IndependentToCoordinated => {
                r.reward + gamma * r.group.iter().map(|m| max_q(&net, &m.next)).sum::<f64>() / r.h as f64
            }
        };
        let got = td_target(&r, &net, gamma).unwrap();
        assert!((got - expected).abs() < 1e-9, "{:?}: {got} vs {expected}", r.ttype);
    }
}

#[test]
fn joint_targets_need_a_snapshot() {
    let net = DenseNet::zeros(&[3, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut r = random_record(&mut rng);
    r.ttype = TransitionType::CoordinatedToIndependent;
    r.group.clear();
    assert!(matches!(td_target(&r, &net, 0.9), Err(LearnError::MissingSnapshot)));
    r.ttype = TransitionType::IndependentToCoordinated;
    assert!(matches!(td_target(&r, &net, 0.9), Err(LearnError::MissingSnapshot)));
}

#[test]
fn terminal_target_is_the_reward() {
    let net = DenseNet::new(&[3, 4, 3], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = random_record(&mut rng);
    r.ttype = TransitionType::SameKind;
    r.next = NextState::Terminal;
    assert_eq!(td_target(&r, &net, 0.9).unwrap(), r.reward);
}

fn finite_difference_error(net: &DenseNet, inputs: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> f64 {
    let (_, grad) = net.loss_and_gradient(inputs, actions, targets).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..net.params().len() {
        let mut p = net.params().to_vec();
        p[i] += h;
        probe.set_params(&p).unwrap();
        let up = probe.loss_and_gradient(inputs, actions, targets).unwrap().0;
        p[i] -= 2.0 * h;
        probe.set_params(&p).unwrap();
        let down = probe.loss_and_gradient(inputs, actions, targets).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    worst
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let hidden = rng.random_range(2..7);
        let dims = if k % 2 == 0 { vec![3, hidden, 3] } else { vec![3, hidden, rng.random_range(2..5), 3] };
        let net = DenseNet::new(&dims, k).unwrap();
        let b = rng.random_range(1..6);
        let inputs: Vec<Vec<f64>> = (0..b).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actions: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
        let targets: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst = worst.max(finite_difference_error(&net, &inputs, &actions, &targets));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn fitting_reduces_loss() {
    let mut net = DenseNet::new(&[3, 16, 3], 9).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
    let inputs = vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.5, 0.0], vec![0.4, 0.4, 0.8]];
    let actions = vec![0, 1, 2];
    let targets = vec![-1.0, 0.5, 2.0];
    let first = net.fit_batch(&mut opt, &inputs, &actions, &targets).unwrap();
    let mut last = first;
    for _ in 0..2000 {
        last = net.fit_batch(&mut opt, &inputs, &actions, &targets).unwrap();
    }
    assert!(last < first * 1e-3, "{first} -> {last}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.qnet");
    let net = DenseNet::new(&[3, 5, 4, 3], 77).unwrap();
    net.save(&path).unwrap();
    let back = DenseNet::load(&path).unwrap();
    assert_eq!(back, net);
    let x = [0.3, 0.7, 0.1];
    assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    assert!(DenseNet::load_expecting(&path, 3, 3).is_ok());
    assert!(DenseNet::load_expecting(&path, 4, 3).is_err());
    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(DenseNet::from_bytes(&bytes[..bytes.len() - 3]), Err(ApproxError::Checkpoint(_))));
}

#[test]
fn epsilon_after_a_thousand_epochs() {
    let s = EpsilonSchedule::default();
    let e = s.value(1000);
    assert!((e - 0.999f64.powi(1000)).abs() < 1e-12);
    assert!((e - 0.367_695_4).abs() < 1e-6, "{e}");
}

#[test]
fn replay_evicts_oldest_and_samples_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let template = random_record(&mut rng);
    let mut mem = ReplayMemory::new(10_000);
    for i in 0..10_032 {
        mem.push(TransitionRecord { reward: f64::from(i), ..template.clone() });
    }
    assert_eq!(mem.len(), 10_000);
    let rewards: Vec<f64> = mem.iter().map(|r| r.reward).collect();
    assert_eq!(rewards[0], 32.0);
    assert_eq!(*rewards.last().unwrap(), 10_031.0);
    assert!(rewards.windows(2).all(|w| w[1] == w[0] + 1.0));

    let bins = 100;
    let mut counts = vec![0u64; bins];
    let draws = 10_000;
    for _ in 0..draws {
        let batch = mem.sample(32, &mut rng).unwrap();
        let mut ids: Vec<u64> = batch.iter().map(|r| r.reward as u64).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 32, "sampling is without replacement");
        for id in ids {
            counts[((id - 32) as usize) * bins / 10_000] += 1;
        }
    }
    let expected = (draws * 32) as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
    assert!(mem.sample(10_001, &mut rng).is_none());
}

proptest! {
    #[test]
    fn epsilon_is_non_increasing_and_floored(initial in 0.0f64..=1.0, decay in 0.5f64..1.0, floor in 0.0f64..0.5, k in 0u64..5000) {
        let s = EpsilonSchedule { initial, decay, floor };
        prop_assert!(s.value(k + 1) <= s.value(k));
        prop_assert!(s.value(k) >= floor.min(initial) - 1e-15);
        prop_assert!(s.value(k) <= 1.0);
    }

    #[test]
    fn replay_keeps_the_newest(cap in 1usize..64, n in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let template = random_record(&mut rng);
        let mut mem = ReplayMemory::new(cap);
        for i in 0..n {
            mem.push(TransitionRecord { reward: i as f64, ..template.clone() });
        }
        let kept: Vec<f64> = mem.iter().map(|r| r.reward).collect();
        let want: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..10_000, hidden in 1usize..6) {
        let net = DenseNet::new(&[3, hidden, 3], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actions = vec![0, 1, 2];
        let targets: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = finite_difference_error(&net, &inputs, &actions, &targets);
        prop_assert!(err < 1e-4, "relative error {}", err);
    }
}

#[test]
fn training_writes_curve_checkpoints_and_model() {
    use cavsim_core::learn::{run_training, TrainerConfig};
    use cavsim_core::sim::{DemandConfig, EpisodeConfig, LogDetail};
    let mut base = EpisodeConfig { log: LogDetail::Summary, ..Default::default() };
    base.network = cavsim_core::geometry::CorridorConfig::chain(1, 300.0);
    base.network.grid.lanes_per_approach = 1;
    let cfg = TrainerConfig {
        epochs: 6,
        steps_per_epoch: 60,
        demand: DemandConfig { major_vph: 600.0, minor_vph: 400.0, turn_split: [0.1, 0.8, 0.1] },
        window: 60.0,
        warmup: 32,
        hidden: vec![8],
        checkpoint_every: 3,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    let report = run_training(&base, &cfg, Some(dir.path()), |_| seen += 1).unwrap();
    assert_eq!(seen, 6);
    assert_eq!(report.curve.len(), 6);
    let csv = std::fs::read_to_string(dir.path().join("reward_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("epoch,epsilon,global_reward,mean_loss"));
    for name in ["epoch_00003.qnet", "epoch_00006.qnet"] {
        assert!(dir.path().join("checkpoints").join(name).exists(), "{name}");
    }
    assert_eq!(DenseNet::load(&dir.path().join("model.qnet")).unwrap(), report.net);
    let again = run_training(&base, &cfg, None, |_| ()).unwrap();
    assert_eq!(again.net, report.net);
    assert_eq!(again.curve, report.curve);
}
