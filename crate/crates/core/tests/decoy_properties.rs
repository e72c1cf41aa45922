use cascade_keyrate::channel::{simulate_decoy_tables, single_photon_truth, ChannelScenario};
use cascade_keyrate::decoy::{
    photon_split_keyrate, poisson_weight, solve_statistic, solve_yield_bounds, PhotonCutoff, SYMBOL_PROB,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounds_sandwich_single_photon_yields(
        theta in 0.0f64..0.4,
        eta in 0.01f64..1.0,
        replace in any::<bool>(),
    ) {
        let lambda = if replace { 0.2 } else { 0.0 };
        let s = ChannelScenario::decoy(theta, eta, lambda, vec![0.5, 0.1, 0.001]);
        let b = solve_yield_bounds(&simulate_decoy_tables(&s).unwrap(), PhotonCutoff::default()).unwrap();
        let truth = single_photon_truth(&s).unwrap();
        prop_assert!(b.max_duality_gap < 1e-9);
        for x in 0..4 {
            for y in 0..5 {
                let t = truth.tables[0][x][y] / SYMBOL_PROB;
                let (lo, hi) = b.bounds[x][y];
                prop_assert!(lo <= t + 1e-12 && t <= hi + 1e-12, "cell ({x},{y}): {lo} <= {t} <= {hi}");
            }
        }
    }

    #[test]
    fn more_intensities_never_loosen(theta in 0.0f64..0.3, eta in 0.05f64..1.0, x in 0usize..4, y in 0usize..5) {
        let mus = vec![0.5, 0.1, 0.001];
        let s = ChannelScenario::decoy(theta, eta, 0.0, mus.clone());
        let t = simulate_decoy_tables(&s).unwrap();
        let obs: Vec<f64> = t.tables.iter().map(|g| g[x][y] / SYMBOL_PROB).collect();
        let one = solve_statistic(&obs[..1], &mus[..1], PhotonCutoff::default(), "one").unwrap();
        let all = solve_statistic(&obs, &mus, PhotonCutoff::default(), "all").unwrap();
        prop_assert!(all.low >= one.low - 1e-10 && all.high <= one.high + 1e-10);
    }

    #[test]
    fn poisson_weights_normalize(mu in 0.0f64..5.0) {
        let total: f64 = (0..80).map(|n| poisson_weight(mu, n)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_contributes_to_f_only(f1 in 0.0f64..1.0, extra in 0.0f64..0.5, p_pass0 in 0.0f64..1.0, mu in 0.01f64..1.0) {
        let s = photon_split_keyrate(f1 + extra, f1, p_pass0, mu).unwrap();
        prop_assert_eq!(s.fprime_zero_photon, 0.0);
        prop_assert!((s.f_total - s.fprime_total - s.p0 * p_pass0 - s.p1 * extra).abs() < 1e-14);
        prop_assert!(s.f_total - s.fprime_total >= s.p0 * p_pass0 - 1e-15);
    }
}
