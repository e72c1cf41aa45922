//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cascade_keyrate::channel::{simulate_decoy_tables, ChannelScenario};
use cascade_keyrate::decoy::{photon_split_keyrate, solve_yield_bounds, PhotonCutoff};
use cascade_keyrate::experiment::{cmd_cascade, cmd_table2, cmd_table4, median, PointRecord, ScenarioConfig, VerdictGrid};
use cascade_keyrate::operators::{max_abs_diff, CMatrix, HermitianOperator};
use cascade_keyrate::protocol::{build_maps, cell_observable, GrainingChoice, ProtocolKind};
use cascade_keyrate::solver::{Comparison, SolverOptions};
use cascade_keyrate::symmetry::{
    bell_minimize, eve_block_diagonality, random_bell_state, random_feasible_state, twirl, twirl_adjoint,
    twirl_decreases_objective,
};
use cascade_keyrate::verify::gradient_check;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOISELESS_BAND: f64 = 1e-4;
const BELL_BAND: f64 = 5e-3;
const BELL_AGREEMENT: f64 = 1e-3;
const LP_GAP: f64 = 1e-9;
const FD_TOL: f64 = 1e-5;
const TWIRL_TOL: f64 = 1e-12;
const ORDER_SLACK: f64 = 1e-9;
const GAP_TARGET: f64 = 1e-4;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn solve(s: &ChannelScenario, g: GrainingChoice) -> Comparison {
    cascade_keyrate::experiment::solve_scenario(s, g, &SolverOptions::default(), PhotonCutoff::default())
        .expect("scenario solves")
}

fn record(channel: &str, g: GrainingChoice, point: &str, c: &Comparison) -> PointRecord {
    PointRecord {
        channel: channel.into(),
        graining: g.to_string(),
        point: point.into(),
        f_low: c.f.lower,
        f_up: c.f.upper,
        fp_low: c.f_prime.lower,
        fp_up: c.f_prime.upper,
        verdict: c.verdict.kind.symbol(),
        margin: c.verdict.margin,
    }
}

// Eve holds a purification of |phi+> only up to a global phase, so the key
// bit is uniform and private: one bit per sifted round, sifting 1/4 + 1/4.
fn noiseless(solved: &mut Vec<PointRecord>) -> Outcome {
    let oracle = 0.5 * 0.5 + 0.5 * 0.5;
    let mut worst = 0.0f64;
    for g in GrainingChoice::ALL {
        let c = solve(&ChannelScenario::qubit(0.0, 0.0, 0.0), g);
        for v in [c.f.lower, c.f.upper, c.f_prime.lower, c.f_prime.upper] {
            worst = worst.max((v - oracle).abs());
        }
        solved.push(record("noiseless", g, "0", &c));
    }
    outcome(worst <= NOISELESS_BAND, format!("max |bound - 0.5| = {worst:.2e}"))
}

fn bell_oracle(solved: &mut Vec<PointRecord>) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for q in [0.04, 0.1, 0.2] {
        let c = solve(&ChannelScenario::qubit(0.0, q, 0.0), GrainingChoice::Coarse);
        let analytic = 0.5 * (1.0 - h2(q / 2.0));
        let bell = bell_minimize(q / 2.0, q / 2.0).expect("valid qber").value;
        for r in [&c.f, &c.f_prime] {
            ok &= r.lower - BELL_BAND <= analytic && analytic <= r.upper + BELL_BAND;
            ok &= r.lower - BELL_AGREEMENT <= bell && bell <= r.upper + BELL_AGREEMENT;
        }
        detail.push(format!("q={q}: [{:.5}, {:.5}] vs {analytic:.5}/{bell:.5}", c.f.lower, c.f.upper));
        solved.push(record("depolarization", GrainingChoice::Coarse, &format!("q={q}"), &c));
    }
    outcome(ok, detail.join("; "))
}

fn grid_matches(grid: &VerdictGrid, expected: [[char; 4]; 3]) -> (bool, String) {
    let mut ok = true;
    let mut rows = Vec::new();
    for (i, g) in GrainingChoice::ALL.iter().enumerate() {
        let mut row = String::new();
        for (j, ch) in grid.channels.iter().enumerate() {
            let got = grid.cell(*g, ch).map_or('!', |v| v.symbol());
            ok &= got == expected[i][j] && got != '?';
            row.push(got);
        }
        rows.push(row);
    }
    (ok, format!("got {} (coarse/sifted/fine)", rows.join("/")))
}

fn table2(solved: &mut Vec<PointRecord>) -> Outcome {
    let grid = cmd_table2(&ScenarioConfig::default()).expect("table runs");
    let (ok, detail) = grid_matches(&grid, [['=', '=', '=', '='], ['=', '=', '=', '>'], ['=', '=', '>', '>']]);
    solved.extend(grid.points);
    outcome(ok, detail)
}

fn table4(solved: &mut Vec<PointRecord>) -> Outcome {
    let grid = cmd_table4(&ScenarioConfig::default()).expect("table runs");
    let (ok, detail) = grid_matches(&grid, [['=', '=', '=', '='], ['=', '=', '=', '>'], ['=', '=', '>', '>']]);
    solved.extend(grid.points.into_iter().map(|p| PointRecord { channel: format!("decoy:{}", p.channel), ..p }));
    outcome(ok, detail)
}

fn zero_photon() -> Outcome {
    let (mu, p_pass0) = (0.5f64, 0.013);
    let s = photon_split_keyrate(0.3, 0.2, p_pass0, mu).expect("valid split");
    let p0 = (-mu).exp();
    let ok = s.fprime_zero_photon == 0.0 && s.f_zero_photon == s.p0 * p_pass0 && (s.p0 - p0).abs() < 1e-15;
    outcome(ok, format!("F' vacuum term {}, F vacuum term {:.6e}", s.fprime_zero_photon, s.f_zero_photon))
}

// Single photon through misalignment and loss: Bob picks a basis at random
// and clicks with probability eta; the outcome follows Malus' law.
fn single_photon_yield(theta: f64, eta: f64, x: usize, y: usize) -> f64 {
    let angle = [0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4];
    if y == 4 {
        return 1.0 - eta;
    }
    0.5 * eta * (angle[x] + theta - angle[y]).cos().powi(2)
}

fn decoy_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap = 0.0f64;
    let mut worst_violation = f64::NEG_INFINITY;
    for _ in 0..20 {
        let theta = rng.gen_range(0.0..0.35);
        let eta = rng.gen_range(0.02..1.0);
        let s = ChannelScenario::decoy(theta, eta, 0.0, vec![0.5, 0.1, 0.001]);
        let b = solve_yield_bounds(&simulate_decoy_tables(&s).expect("tables"), PhotonCutoff::default()).expect("lp");
        worst_gap = worst_gap.max(b.max_duality_gap);
        for x in 0..4 {
            for y in 0..5 {
                let t = single_photon_yield(theta, eta, x, y);
                let (lo, hi) = b.bounds[x][y];
                worst_violation = worst_violation.max(lo - t).max(t - hi);
            }
        }
    }
    outcome(
        worst_gap < LP_GAP && worst_violation <= 0.0,
        format!("max duality gap {worst_gap:.2e}, max bound violation {worst_violation:.2e}"),
    )
}

fn cascade_property() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.cascade.n = 10_000;
    cfg.cascade.seeds = 1000;
    cfg.cascade.e = vec![0.01, 0.02, 0.05, 0.1];
    let batch = cmd_cascade(&cfg).expect("cascade runs");
    let mut ok = batch.rows.len() == 4000;
    ok &= batch.rows.iter().all(|r| r.reconstruction_ok && r.delta_a == r.delta_b);
    let mut medians = Vec::new();
    for &e in &cfg.cascade.e {
        let f: Vec<f64> = batch.rows.iter().filter(|r| r.e == e).map(|r| r.f_emp).collect();
        let m = median(&f);
        ok &= (1.0..=1.5).contains(&m);
        medians.push(format!("{m:.3}"));
    }
    outcome(ok, format!("{} runs, median f_emp {}", batch.rows.len(), medians.join("/")))
}

fn pauli_twirl_adjoint(g: &CMatrix) -> CMatrix {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let paulis = [
        DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ];
    let mut acc = CMatrix::zeros(4, 4);
    for p in &paulis {
        let u = p.kronecker(p);
        acc += &u * g * u.adjoint();
    }
    acc * Complex64::new(0.25, 0.0)
}

fn hygiene() -> Outcome {
    let mut fd = 0.0f64;
    for kind in [ProtocolKind::Qubit, ProtocolKind::Decoy] {
        for w in [false, true] {
            fd = fd.max(gradient_check(&build_maps(kind, w), 50, 99, |r, m| {
                cascade_keyrate::solver::objective::gradient_matrix(r, m, cascade_keyrate::operators::DEFAULT_CLIP)
            }));
        }
    }

    let lib_adj = |g: &CMatrix| twirl_adjoint(&HermitianOperator::from_hermitian_part(g)).unwrap().into_matrix();
    let gamma = |x, y| cell_observable(ProtocolKind::Qubit, x, y);
    let (hh, hv, vh, vv) = (gamma(0, 0), gamma(0, 1), gamma(1, 0), gamma(1, 1));
    let (pp, pm, mp, mm) = (gamma(2, 2), gamma(2, 3), gamma(3, 2), gamma(3, 3));
    let half = Complex64::new(0.5, 0.0);
    let mut twirl_err = 0.0f64;
    let mut check = |a: &CMatrix, b: &CMatrix| twirl_err = twirl_err.max(max_abs_diff(a, b));
    for (pair, target) in [
        ([&hh, &vv], (&hh + &vv) * half),
        ([&hv, &vh], (&hv + &vh) * half),
        ([&pp, &mm], (&pp + &mm) * half),
        ([&pm, &mp], (&pm + &mp) * half),
    ] {
        for g in pair {
            check(&pauli_twirl_adjoint(g), &target);
            check(&lib_adj(g), &target);
        }
    }
    for block in [[(0, 2), (0, 3), (1, 2), (1, 3)], [(2, 0), (2, 1), (3, 0), (3, 1)]] {
        let first = pauli_twirl_adjoint(&gamma(block[0].0, block[0].1));
        for (x, y) in block {
            check(&pauli_twirl_adjoint(&gamma(x, y)), &first);
            check(&lib_adj(&gamma(x, y)), &first);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut twirl_state_err = 0.0f64;
    let mut decreases = true;
    let maps = [build_maps(ProtocolKind::Qubit, false), build_maps(ProtocolKind::Qubit, true)];
    for _ in 0..100 {
        let rho = random_feasible_state(2, &mut rng);
        let t = twirl(&rho).unwrap();
        twirl_state_err = twirl_state_err.max(max_abs_diff(t.matrix(), &pauli_twirl_adjoint(rho.matrix())));
        for m in &maps {
            decreases &= twirl_decreases_objective(&rho, m).unwrap();
        }
    }
    let mut overlap = 0.0f64;
    for _ in 0..100 {
        overlap = overlap.max(eve_block_diagonality(&random_bell_state(&mut rng)));
    }
    let ok = fd < FD_TOL && twirl_err < TWIRL_TOL && twirl_state_err < TWIRL_TOL && overlap < TWIRL_TOL && decreases;
    outcome(
        ok,
        format!(
            "fd {fd:.1e}, twirl identities {twirl_err:.1e}, twirl state {twirl_state_err:.1e}, block overlap {overlap:.1e}, f(T(rho)) <= f(rho): {decreases}"
        ),
    )
}

fn ordering(solved: &[PointRecord]) -> Outcome {
    let mut ok = true;
    let mut worst_prime = f64::NEG_INFINITY;
    for p in solved {
        worst_prime = worst_prime.max(p.fp_low - p.f_up);
        ok &= p.fp_low <= p.f_up + ORDER_SLACK;
    }
    let mut pairs = 0;
    let mut worst_graining = f64::NEG_INFINITY;
    let order = [GrainingChoice::Coarse, GrainingChoice::SiftedFine, GrainingChoice::Fine];
    for p in solved.iter().filter(|p| p.graining == order[0].to_string()) {
        let find = |g: GrainingChoice| {
            solved.iter().find(|q| q.channel == p.channel && q.point == p.point && q.graining == g.to_string())
        };
        let (Some(s), Some(f)) = (find(order[1]), find(order[2])) else { continue };
        for (finer, coarser) in [(f, s), (s, p)] {
            pairs += 1;
            for (lo_fine, lo_coarse) in [(finer.f_low, coarser.f_low), (finer.fp_low, coarser.fp_low)] {
                worst_graining = worst_graining.max(lo_coarse - lo_fine);
                ok &= lo_fine >= lo_coarse - GAP_TARGET;
            }
            ok &= finer.f_up + ORDER_SLACK >= coarser.f_low && finer.fp_up + ORDER_SLACK >= coarser.fp_low;
        }
    }
    outcome(
        ok,
        format!(
            "{} scenarios, max lower(F')-upper(F) {worst_prime:.1e}; {pairs} graining pairs, max coarse-over-fine {worst_graining:.1e}",
            solved.len()
        ),
    )
}

fn report(index: usize, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = run();
    let elapsed = start.elapsed();
    let passed = o.passed && elapsed <= limit;
    println!(
        "{} criterion {index}: {name} ({:.1}s, limit {}s) {}",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        o.detail
    );
    passed
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut solved = Vec::new();
    let results = [
        report(1, "noiseless baseline", secs(10), || noiseless(&mut solved)),
        report(2, "Bell-diagonal oracle agreement", secs(180), || bell_oracle(&mut solved)),
        report(3, "qubit verdict grid", secs(1800), || table2(&mut solved)),
        report(4, "decoy verdict grid", secs(7200), || table4(&mut solved)),
        report(5, "zero-photon split", secs(1), zero_photon),
        report(6, "decoy yield sandwich", secs(60), decoy_sandwich),
        report(7, "Cascade transcript property", secs(300), cascade_property),
        report(8, "numerical hygiene", secs(120), hygiene),
        report(9, "ordering sanity", secs(1), || ordering(&solved)),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
