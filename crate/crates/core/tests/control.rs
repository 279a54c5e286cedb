use cavsim_core::approximator::DenseNet;
use cavsim_core::control::{
    build_controller, queue_length, ControllerKind, DsclsPolicy, FixedSignal, SignalConfig,
};
use cavsim_core::geometry::Approach;
use cavsim_core::learn::EncodedState;
use cavsim_core::sim::{
    run_episode, Action, Controller, Decision, DemandConfig, EpisodeConfig, LaneKey, LogDetail, Observation, Regime,
    SimError,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Wraps a controller and checks every signal decision it makes.
struct Audited<C> {
    inner: C,
    decisions: usize,
    max_queue: [u32; 4],
}

impl<C: Controller> Controller for Audited<C> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn decide(&mut self, obs: &Observation<'_>, decision: &mut Decision) -> Result<(), SimError> {
        self.inner.decide(obs, decision)?;
        let conflicts = &obs.net.conflicts;
        if let Some(s) = &decision.signals {
            for i in 0..obs.net.n_intersections() {
                let moves = conflicts.movements();
                for (a, &ma) in moves.iter().enumerate() {
                    for (b, &mb) in moves.iter().enumerate().skip(a + 1) {
                        assert!(
                            !(s.go(i, a) && s.go(i, b) && conflicts.conflict(ma, mb)),
                            "{} gave {ma} and {mb} at once at t={}",
                            self.inner.name(),
                            obs.time
                        );
                    }
                }
            }
            self.decisions += 1;
        }
        for approach in Approach::ALL {
            for lane in 0..obs.net.lanes() {
                let q = queue_length(LaneKey { intersection: 0, approach, lane }, obs).queued_count;
                let m = &mut self.max_queue[approach.index()];
                *m = (*m).max(q);
            }
        }
        Ok(())
    }
}

fn audited(kind: ControllerKind) -> Audited<Box<dyn Controller + Send>> {
    Audited {
        inner: build_controller(kind, &SignalConfig::default(), None, 20, 1).unwrap(),
        decisions: 0,
        max_queue: [0; 4],
    }
}

#[test]
fn signal_controllers_never_release_conflicting_movements() {
    let cfg = EpisodeConfig { steps: 1200, demand: Regime::High.demand(), log: LogDetail::Summary, ..Default::default() };
    for kind in [ControllerKind::FixedSignal, ControllerKind::ActuatedSignal, ControllerKind::Lqf] {
        let mut c = audited(kind);
        run_episode(&cfg, &mut c, 4).unwrap();
        assert_eq!(c.decisions, 1200, "{kind}");
    }
}

#[test]
fn queues_build_only_on_the_red_approaches() {
    // minor-street demand only; the fixed plan opens the minor street after 48 s
    let cfg = EpisodeConfig {
        network: cavsim_core::geometry::CorridorConfig::chain(1, 300.0),
        demand: DemandConfig { major_vph: 0.0, minor_vph: 900.0, ..Regime::Moderate.demand() },
        steps: 90,
        log: LogDetail::Summary,
        ..Default::default()
    };
    let mut c = Audited { inner: FixedSignal::new(SignalConfig::default()), decisions: 0, max_queue: [0; 4] };
    run_episode(&cfg, &mut c, 2).unwrap();
    let q = c.max_queue;
    assert!(q[Approach::North.index()] >= 2 && q[Approach::South.index()] >= 2, "{q:?}");
    assert_eq!((q[Approach::East.index()], q[Approach::West.index()]), (0, 0));
}

#[test]
fn greedy_policy_follows_the_network() {
    // zero weights and biases (0, 0.5, 1.5): accelerate is always the argmax
    let mut net = DenseNet::zeros(&[3, 3]).unwrap();
    let mut p = net.params().to_vec();
    let n = p.len();
    p[n - 3..].copy_from_slice(&[0.0, 0.5, 1.5]);
    net.set_params(&p).unwrap();
    let mut policy = DsclsPolicy::new(net.clone(), 0.0, 20, 3).unwrap();
    for s in [[0.0, 0.0, 0.0], [1.0, 0.5, 1.0], [0.3, 0.9, 0.1]] {
        assert_eq!(policy.act(&EncodedState { features: s }).unwrap(), Action::Accelerate);
    }
    p[n - 3..].copy_from_slice(&[2.0, 0.5, 1.5]);
    net.set_params(&p).unwrap();
    *policy.net_mut() = net;
    assert_eq!(policy.act(&EncodedState { features: [0.5; 3] }).unwrap(), Action::Decelerate);
}

#[test]
fn full_exploration_is_uniform() {
    let net = DenseNet::new(&[3, 4, 3], 1).unwrap();
    let mut policy = DsclsPolicy::new(net, 1.0, 20, 9).unwrap();
    let mut counts = [0u32; 3];
    let n = 10_000;
    for _ in 0..n {
        counts[policy.act(&EncodedState { features: [0.2, 0.4, 0.6] }).unwrap().index()] += 1;
    }
    let e = f64::from(n) / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (f64::from(c) - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "{counts:?}");
}

#[test]
fn model_shape_and_epsilon_are_checked() {
    assert!(DsclsPolicy::new(DenseNet::zeros(&[4, 3]).unwrap(), 0.0, 20, 0).is_err());
    assert!(DsclsPolicy::new(DenseNet::zeros(&[3, 2]).unwrap(), 0.0, 20, 0).is_err());
    assert!(DsclsPolicy::new(DenseNet::zeros(&[3, 3]).unwrap(), 1.5, 20, 0).is_err());
    assert!(build_controller(ControllerKind::Dscls, &SignalConfig::default(), None, 20, 0).is_err());
}

#[test]
fn evaluation_is_deterministic_per_seed() {
    let cfg = EpisodeConfig { steps: 300, ..Default::default() };
    let net = DenseNet::new(&[3, 8, 3], 5).unwrap();
    for kind in ControllerKind::ALL {
        let run = || {
            let mut c = build_controller(kind, &SignalConfig::default(), Some(&net), 20, 7).unwrap();
            run_episode(&cfg, c.as_mut(), 7).unwrap().to_jsonl()
        };
        assert_eq!(run(), run(), "{kind}");
    }
}
