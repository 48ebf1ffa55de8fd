mod common;

use common::{random_model, random_valid_etm};
use etf2d::etm::{check_invariants, run_etm, EtmConfig, TriggerMode};
use etf2d::grid::GridIndex;
use etf2d::harness::checks::etm_invariants;
use etf2d::rng::seeded_rng;
use etf2d::system::{simulate_trajectory, Delays};
use proptest::prelude::*;

fn delays() -> impl Strategy<Value = Delays> {
    prop_oneof![
        Just(Delays(vec![(0, 0)])),
        Just(Delays(vec![(0, 0), (1, 1)])),
        Just(Delays(vec![(0, 0), (1, 2), (2, 2)])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn valid_parameters_keep_invariants(d in delays(), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let model = random_model(&mut rng, d);
        let etm = random_valid_etm(&mut rng, model.channel_count());
        prop_assert!(etm.nonnegativity_conditions_hold());
        let inv = etm_invariants(&model, &etm, 12, 2, seed).unwrap();
        prop_assert!(inv.holds(), "{inv:?}");
    }

    #[test]
    fn triggers_follow_scan_order(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let model = random_model(&mut rng, Delays(vec![(0, 0), (1, 1)]));
        let etm = random_valid_etm(&mut rng, 2);
        let traj = simulate_trajectory(&model, 10, seed).unwrap();
        let state = run_etm(&etm, &traj, 1).unwrap();
        prop_assert_eq!(state.trigger_log.first(), Some(&GridIndex::new(0, 0)));
        prop_assert!(state.trigger_log.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(state.trigger_count(), state.triggered.values().iter().filter(|t| **t).count());
        // held value equals the measurement exactly at triggering instants
        for &idx in &state.trigger_log {
            for s in 0..2 {
                if let Some(y) = traj.measurement(s, idx) {
                    prop_assert_eq!(state.held_at(s, idx), Some(y));
                }
            }
        }
    }
}

#[test]
fn always_mode_triggers_everywhere() {
    let mut rng = seeded_rng(3);
    let model = random_model(&mut rng, Delays(vec![(0, 0), (1, 1)]));
    let etm = EtmConfig {
        mode: TriggerMode::Always,
        ..random_valid_etm(&mut rng, 2)
    };
    let traj = simulate_trajectory(&model, 8, 3).unwrap();
    let state = run_etm(&etm, &traj, 1).unwrap();
    assert_eq!(state.trigger_count(), 81);
    let inv = check_invariants(&etm, &traj, &state);
    assert!(inv.max_bound_excess <= 0.0);
}

#[test]
fn quiet_cells_hold_the_last_transmission() {
    let mut rng = seeded_rng(4);
    let model = random_model(&mut rng, Delays(vec![(0, 0)]));
    let etm = random_valid_etm(&mut rng, 1);
    let traj = simulate_trajectory(&model, 15, 4).unwrap();
    let state = run_etm(&etm, &traj, 1).unwrap();
    assert!(state.trigger_count() < 16 * 16, "expected some quiet cells");
    let mut last = None;
    for idx in state.triggered.indices() {
        if state.triggered[idx] {
            last = traj.measurement(0, idx).cloned();
        }
        assert_eq!(state.held_at(0, idx).cloned(), last, "at {idx}");
    }
}
