use std::collections::HashMap;

use cavsim_core::approximator::DenseNet;
use cavsim_core::control::{build_controller, ControllerKind, SignalConfig};
use cavsim_core::geometry::{movement_path, CellId, CorridorConfig, GridConfig, IntersectionGrid};
use cavsim_core::reservation::{detect_conflicts, DesiredCellSet};
use cavsim_core::sim::{follower_action, Action, DemandConfig, EpisodeConfig, KinematicsParams, LogDetail, World};
use proptest::prelude::*;

const EPS: f64 = 1e-9;

/// Cells under each vehicle body; panics on a cell held by two vehicles.
fn check_exclusive(world: &World) -> usize {
    let mut owner: HashMap<CellId, u32> = HashMap::new();
    for v in world.vehicles() {
        let body = v.trip.cell_range(v.position - v.length + EPS, v.position - EPS);
        for c in &v.trip.cells[body] {
            if let Some(o) = owner.insert(c.id, v.id) {
                assert_eq!(o, v.id, "cell {:?} held by {o} and {} at step {}", c.id, v.id, world.step_index());
            }
        }
    }
    world.vehicles().len()
}

fn params() -> impl Strategy<Value = KinematicsParams> {
    (1.0f64..5.0, 3.0f64..9.0, 5.0f64..20.0, prop::sample::select(vec![0.25, 0.5, 1.0]))
        .prop_map(|(a_acc, a_dec, vmax, dt)| KinematicsParams { a_acc, a_dec, vmax, dt })
}

proptest! {
    #[test]
    fn speed_stays_in_bounds(k in params(), v in 0.0f64..1.0, a in 0usize..3) {
        let v = v * k.vmax;
        let (d, v1) = k.advance(v, Action::ALL[a]);
        prop_assert!((0.0..=k.vmax).contains(&v1));
        prop_assert!(d >= 0.0 && d <= k.max_step_distance() + 1e-12);
        prop_assert!(d <= (v.max(v1)) * k.dt + 1e-12);
    }

    #[test]
    fn followers_keep_a_stopping_gap(k in params(), v in 0.0f64..1.0, vl in 0.0f64..1.0, slack in 0.0f64..30.0, lead_action in 0usize..3) {
        let margin = 1.0;
        let (v, vl) = (v * k.vmax, vl * k.vmax);
        // start from a gap that already admits a full stop behind the leader's stop point
        let gap = margin + (k.stop_distance(v) - k.stop_distance(vl)).max(0.0) + slack;
        let a = follower_action(v, gap, vl, &k, margin);
        let (d, v1) = k.advance(v, a);
        let (dl, vl1) = k.advance(vl, Action::ALL[lead_action]);
        let gap1 = gap - d + dl;
        prop_assert!(gap1 + 1e-9 >= margin + (k.stop_distance(v1) - k.stop_distance(vl1)).max(0.0),
            "action {:?} gap {} -> {}", a, gap, gap1);
    }

    #[test]
    fn paths_are_connected(lanes in 1u16..5, ext in 0u16..7) {
        let g = IntersectionGrid::build(0, &GridConfig { lanes_per_approach: lanes, extension_cells: ext, ..Default::default() }).unwrap();
        for m in g.movements() {
            let p = movement_path(&g, m).unwrap();
            prop_assert!(!p.waypoints.is_empty());
            for w in p.waypoints.windows(2) {
                let dr = (i32::from(w[0].1.row) - i32::from(w[1].1.row)).abs();
                let dc = (i32::from(w[0].1.col) - i32::from(w[1].1.col)).abs();
                prop_assert!(dr <= 1 && dc <= 1 && dr + dc > 0);
                prop_assert!(g.contains(w[1].1));
            }
        }
    }

    #[test]
    fn groups_partition_the_leaders(sets in prop::collection::vec(prop::collection::btree_set(0u32..40, 0..6), 0..25)) {
        let desired: Vec<DesiredCellSet> = sets.iter().enumerate().map(|(i, cells)| DesiredCellSet {
            vehicle_id: i as u32 * 3 + 1,
            step: 0,
            current: CellId(1000 + i as u32),
            cells: cells.iter().map(|&c| CellId(c)).collect(),
            ds_cells: cells.len(),
        }).collect();
        let groups = detect_conflicts(&desired).unwrap();
        let mut seen: Vec<u32> = groups.iter().flat_map(|g| g.members.clone()).collect();
        seen.sort_unstable();
        let mut ids: Vec<u32> = desired.iter().map(|d| d.vehicle_id).collect();
        ids.sort_unstable();
        prop_assert_eq!(seen, ids);
        let group_of: HashMap<u32, u32> = groups.iter().flat_map(|g| g.members.iter().map(move |&m| (m, g.id))).collect();
        for a in &desired {
            for b in &desired {
                if a.cells.iter().any(|c| b.cells.contains(c)) {
                    prop_assert_eq!(group_of[&a.vehicle_id], group_of[&b.vehicle_id]);
                }
            }
        }
        for g in &groups {
            prop_assert_eq!(g.id, g.members[0]);
            prop_assert_eq!(g.is_coordinated(), g.members.len() >= 2);
        }
    }
}

fn fuzz_config(lanes: u16, n: u16, major: f64, minor: f64, dt: f64, steps: u64) -> EpisodeConfig {
    let mut network = CorridorConfig::chain(n, 120.0);
    network.grid.lanes_per_approach = lanes;
    let mut cfg = EpisodeConfig {
        network,
        demand: DemandConfig { major_vph: major, minor_vph: minor, turn_split: [0.2, 0.6, 0.2] },
        steps,
        log: LogDetail::Summary,
        ..Default::default()
    };
    cfg.sim.kinematics.dt = dt;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn no_cell_is_ever_shared(
        lanes in 1u16..4,
        n in 1u16..3,
        major in 200.0f64..2500.0,
        minor in 100.0f64..1500.0,
        dt in prop::sample::select(vec![0.5, 1.0]),
        kind in prop::sample::select(ControllerKind::ALL.to_vec()),
        seed in 0u64..1000,
    ) {
        let cfg = fuzz_config(lanes, n, major, minor, dt, 400);
        let net = DenseNet::new(&[3, 8, 3], seed).unwrap();
        let mut c = build_controller(kind, &SignalConfig::default(), Some(&net), 20, seed).unwrap();
        let mut world = World::new(&cfg, seed).unwrap();
        for _ in 0..cfg.steps {
            world.step(c.as_mut()).unwrap();
            check_exclusive(&world);
        }
    }
}

#[test]
fn random_leaders_never_share_cells_under_saturation() {
    let cfg = fuzz_config(3, 2, 2500.0, 1500.0, 0.5, 2000);
    let mut c = build_controller(ControllerKind::RandomPolicy, &SignalConfig::default(), None, 20, 3).unwrap();
    let mut world = World::new(&cfg, 3).unwrap();
    let mut vehicle_steps = 0;
    for _ in 0..cfg.steps {
        world.step(c.as_mut()).unwrap();
        vehicle_steps += check_exclusive(&world);
    }
    assert!(vehicle_steps > 50_000, "{vehicle_steps}");
}
