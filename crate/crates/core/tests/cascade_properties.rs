use cascade_keyrate::cascade::{
    leakage_summary, messages_paired, random_pair, reconstruct_bob_messages, run_cascade, CascadeParams, ErrorString,
    TranscriptLine,
};
use cascade_keyrate::experiment::{cascade_session, median};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transcripts_reconstruct_and_leak_equally(n in 1usize..4000, e in 0.0f64..0.15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_pair(n, e, &mut rng);
        let p = CascadeParams::with_defaults(n, e.max(1e-3), seed);
        let t = run_cascade(&x, &y, &p).unwrap();
        let w = ErrorString::new(&x, &y).unwrap();
        prop_assert_eq!(reconstruct_bob_messages(&t.alice_messages(), &w).unwrap(), t.bob_messages());
        prop_assert!(messages_paired(&t));
        let leak = leakage_summary(&t, e.max(1e-3)).unwrap();
        prop_assert_eq!(leak.delta_a, leak.delta_b);
    }

    #[test]
    fn exported_lines_parse_back(n in 16usize..600, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_pair(n, 0.05, &mut rng);
        let t = run_cascade(&x, &y, &CascadeParams::with_defaults(n, 0.05, seed)).unwrap();
        let text = t.export();
        let mut lines = text.lines();
        prop_assert_eq!(lines.next(), Some("dir,pass,block,indices,parity"));
        for (line, m) in lines.zip(&t.messages) {
            let parsed: TranscriptLine = line.parse().unwrap();
            let mut want = m.indices.clone();
            want.sort_unstable();
            let mut got = parsed.indices.clone();
            got.sort_unstable();
            prop_assert_eq!((parsed.dir, parsed.pass, parsed.block, parsed.parity), (m.dir, m.pass, m.block, m.parity));
            prop_assert_eq!(got, want);
        }
    }
}

#[test]
fn identical_strings_mirror_parities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, _) = random_pair(5000, 0.0, &mut rng);
    let t = run_cascade(&x, &x, &CascadeParams::with_defaults(5000, 0.02, 4)).unwrap();
    let zero = ErrorString::new(&x, &x).unwrap();
    assert_eq!(zero.weight(), 0);
    let bob = reconstruct_bob_messages(&t.alice_messages(), &zero).unwrap();
    assert!(bob.iter().zip(t.alice_messages()).all(|(b, a)| b.parity == a.parity));
    assert_eq!(t.binary_runs, 0);
}

#[test]
fn four_passes_correct_almost_every_session() {
    let corrected = (0..100).filter(|&s| cascade_session(10_000, 0.05, s, None, 4).unwrap().0.residual_errors == 0).count();
    assert!(corrected >= 99, "{corrected} of 100");
}

#[test]
fn first_block_size_sensitivity_is_reported() {
    let default_k1 = CascadeParams::with_defaults(10_000, 0.05, 0).k1;
    let run = |k1: usize| {
        let f: Vec<f64> = (0..50).map(|s| cascade_session(10_000, 0.05, s, Some(k1), 4).unwrap().0.f_emp).collect();
        median(&f)
    };
    let (base, doubled) = (run(default_k1), run(2 * default_k1));
    println!("median f_emp at e = 0.05: k1 = {default_k1} -> {base:.4}, k1 = {} -> {doubled:.4}", 2 * default_k1);
    assert!(base.is_finite() && doubled.is_finite());
}
