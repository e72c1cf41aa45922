use cascade_keyrate::channel::{qubit_channel_state, simulate_qubit_table, ChannelScenario};
use cascade_keyrate::operators::{max_abs_diff, trace_re};
use cascade_keyrate::protocol::{build_constraints, build_maps, ConstraintMode, GrainingChoice, ProtocolKind};
use cascade_keyrate::symmetry::{random_feasible_state, statistics_symmetric};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn channel_state_satisfies_its_statistics(theta in 0.0f64..0.5, q in 0.0f64..0.3) {
        let rho = qubit_channel_state(theta, q);
        let t = simulate_qubit_table(&ChannelScenario::qubit(theta, q, 0.0)).unwrap();
        for g in GrainingChoice::ALL {
            for c in build_constraints(&t.cell_table(), g, ConstraintMode::Equality).unwrap() {
                prop_assert!(c.violation(&rho) < 1e-12, "{}", c.label);
            }
        }
    }

    #[test]
    fn maps_shrink_trace_and_pinch_is_a_projection(seed in any::<u64>(), decoy in any::<bool>(), w in any::<bool>()) {
        let kind = if decoy { ProtocolKind::Decoy } else { ProtocolKind::Qubit };
        let maps = build_maps(kind, w);
        prop_assert!(maps.completeness_defect() <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_feasible_state(kind.bob_dim(), &mut rng).into_matrix();
        let g = maps.apply_g(&rho);
        prop_assert!(trace_re(&g) <= 1.0 + 1e-12);
        let z = maps.apply_pinch(&g);
        prop_assert!((trace_re(&z) - trace_re(&g)).abs() < 1e-12);
        prop_assert!(max_abs_diff(&maps.apply_pinch(&z), &z) < 1e-12);
    }
}

#[test]
fn symmetry_of_channel_statistics() {
    let table = |theta_deg: f64, q: f64, lambda: f64| {
        simulate_qubit_table(&ChannelScenario::qubit(theta_deg.to_radians(), q, lambda)).unwrap()
    };
    assert!(statistics_symmetric(&table(10.0, 0.1, 0.0), GrainingChoice::SiftedFine).unwrap());
    assert!(!statistics_symmetric(&table(10.0, 0.1, 0.2), GrainingChoice::SiftedFine).unwrap());
    assert!(statistics_symmetric(&table(0.0, 0.1, 0.0), GrainingChoice::Fine).unwrap());
}
