//! The invariant suite run by `cascade-lab verify`, including two negative
//! controls that must be caught.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cascade::messages_paired;
use crate::channel::{simulate_decoy_tables, single_photon_truth, ChannelScenario};
use crate::decoy::{photon_split_keyrate, solve_yield_bounds, PhotonCutoff, SYMBOL_PROB};
use crate::error::Result;
use crate::experiment::cascade_session;
use crate::operators::{
    cr, identity, inner, DEFAULT_CLIP, matrix_exp2, matrix_log2, max_abs_diff, partial_trace, rel_entropy2, trace_re, CMatrix,
    HermitianOperator, KrausOperator,
};
use crate::protocol::{build_constraints, build_maps, cell_observable, ConstraintMode, GrainingChoice, ProtocolKind, ProtocolMaps};
use crate::solver::objective::{gradient_matrix, objective_value};
use crate::solver::{minimize, SolverOptions};
use crate::symmetry::{
    eve_block_diagonality, random_bell_state, random_feasible_state, random_hermitian, random_state, twirl,
    twirl_adjoint, twirl_decreases_objective,
};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

/// Largest eigenvalue of `sum K^dagger K - I`; a trace-non-increasing map has
/// this at or below zero.
pub fn completeness_excess(kraus: &[KrausOperator]) -> f64 {
    let n = kraus.first().map_or(0, |k| k.in_dim());
    let mut acc = CMatrix::zeros(n, n);
    for k in kraus {
        acc += k.matrix().adjoint() * k.matrix();
    }
    *crate::operators::eigvalsh(&(acc - identity(n))).last().unwrap_or(&0.0)
}

pub fn completeness_holds(kraus: &[KrausOperator]) -> bool {
    completeness_excess(kraus) <= 1e-12
}

/// Relative error between `<grad, dir>` and the central difference of `f`
/// with step `1e-5`.
pub fn finite_difference_error(rho: &CMatrix, dir: &CMatrix, grad: &CMatrix, maps: &ProtocolMaps) -> f64 {
    let h = 1e-5;
    let fd = (objective_value(&(rho + dir * cr(h)), maps) - objective_value(&(rho - dir * cr(h)), maps)) / (2.0 * h);
    let analytic = inner(grad, dir);
    (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(1e-300)
}

/// Weight of `I/d` mixed into the feasible points of [`gradient_check`]. It
/// keeps `lambda_min >= 0.01`, a thousand steps away from the boundary where
/// the central-difference truncation error grows like `(h / lambda_min)^2`.
pub const INTERIOR_WEIGHT: f64 = 0.04;

/// Random feasible state pulled into the interior by [`INTERIOR_WEIGHT`].
pub fn interior_feasible_state<R: rand::Rng + ?Sized>(dim_b: usize, rng: &mut R) -> CMatrix {
    let rho = random_feasible_state(dim_b, rng).into_matrix();
    let n = rho.nrows();
    rho * cr(1.0 - INTERIOR_WEIGHT) + identity(n) * cr(INTERIOR_WEIGHT / n as f64)
}

/// Largest finite-difference error of `grad_fn` over `count` random
/// interior feasible points and directions.
pub fn gradient_check(
    maps: &ProtocolMaps,
    count: usize,
    seed: u64,
    grad_fn: impl Fn(&CMatrix, &ProtocolMaps) -> CMatrix,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim_b = maps.in_dim() / 2;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let rho = interior_feasible_state(dim_b, &mut rng);
        let dir = random_hermitian(maps.in_dim(), &mut rng);
        let grad = grad_fn(&rho, maps);
        worst = worst.max(finite_difference_error(&rho, &dir, &grad, maps));
    }
    worst
}

fn exact_gradient(rho: &CMatrix, maps: &ProtocolMaps) -> CMatrix {
    gradient_matrix(rho, maps, DEFAULT_CLIP)
}

fn check_operators(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let mut rel_min = f64::INFINITY;
    let mut log_err = 0.0f64;
    let mut pt_err = 0.0f64;
    for _ in 0..50 {
        let x = random_state(4, rng);
        let y = random_state(4, rng);
        rel_min = rel_min.min(rel_entropy2(x.matrix(), y.matrix(), DEFAULT_CLIP).unwrap_or(f64::NEG_INFINITY));
        let back = matrix_exp2(&matrix_log2(x.matrix(), DEFAULT_CLIP).unwrap_or_else(|_| x.matrix().clone()));
        log_err = log_err.max(max_abs_diff(&back, x.matrix()));
        let z = random_state(6, rng);
        let reduced = partial_trace(z.matrix(), &[2, 3], &[1]).unwrap_or_else(|_| CMatrix::zeros(1, 1));
        pt_err = pt_err.max((trace_re(&reduced) - trace_re(z.matrix())).abs());
    }
    vec![
        Check::new("relative entropy is non-negative", rel_min >= -1e-9, format!("min {rel_min:.3e}")),
        Check::new("log2/exp2 round trip", log_err < 1e-9, format!("max error {log_err:.3e}")),
        Check::new("partial trace preserves trace", pt_err < 1e-12, format!("max error {pt_err:.3e}")),
    ]
}

fn check_maps() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in [ProtocolKind::Qubit, ProtocolKind::Decoy] {
        for w in [false, true] {
            let maps = build_maps(kind, w);
            let excess = completeness_excess(&maps.g_kraus);
            out.push(Check::new(
                &format!("{kind:?} maps (W={w}) are trace non-increasing"),
                excess <= 1e-12,
                format!("max eigenvalue of sum K'K - I: {excess:.3e}"),
            ));
        }
    }
    let mut corrupted = build_maps(ProtocolKind::Qubit, false).g_kraus;
    corrupted[0] = KrausOperator::new(corrupted[0].matrix() * cr(2.0));
    let caught = !completeness_holds(&corrupted);
    out.push(Check::new(
        "negative control: corrupted Kraus set fails completeness",
        caught,
        format!("excess {:.3e}", completeness_excess(&corrupted)),
    ));
    out
}

fn check_objective(rng: &mut ChaCha8Rng, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let plain = build_maps(ProtocolKind::Qubit, false);
    let with_w = build_maps(ProtocolKind::Qubit, true);
    let mut worst_sub = f64::NEG_INFINITY;
    for _ in 0..50 {
        let rho = random_feasible_state(2, rng).into_matrix();
        worst_sub = worst_sub.max(objective_value(&rho, &with_w) - objective_value(&rho, &plain));
    }
    out.push(Check::new("f' <= f on random states", worst_sub <= 1e-9, format!("max f' - f {worst_sub:.3e}")));
    let mut bell_diff = 0.0f64;
    for _ in 0..50 {
        let rho = random_bell_state(rng).to_density().into_matrix();
        bell_diff = bell_diff.max((objective_value(&rho, &with_w) - objective_value(&rho, &plain)).abs());
    }
    out.push(Check::new("f' = f on Bell-diagonal states", bell_diff < 1e-9, format!("max |f' - f| {bell_diff:.3e}")));

    for kind in [ProtocolKind::Qubit, ProtocolKind::Decoy] {
        for w in [false, true] {
            let maps = build_maps(kind, w);
            let err = gradient_check(&maps, 25, seed, exact_gradient);
            out.push(Check::new(
                &format!("{kind:?} gradient (W={w}) matches finite differences"),
                err < 1e-5,
                format!("max relative error {err:.3e}"),
            ));
        }
    }
    let flipped = gradient_check(&plain, 10, seed, |r, m| -exact_gradient(r, m));
    out.push(Check::new(
        "negative control: sign-flipped gradient fails finite differences",
        flipped >= 1e-5,
        format!("max relative error {flipped:.3e}"),
    ));
    out
}

fn check_symmetry(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let maps = [build_maps(ProtocolKind::Qubit, false), build_maps(ProtocolKind::Qubit, true)];
    let mut idem = 0.0f64;
    let mut adjoint = 0.0f64;
    let mut decreases = true;
    for _ in 0..100 {
        let rho = random_feasible_state(2, rng);
        let Ok(t) = twirl(&rho) else { return vec![Check::new("twirl", false, "twirl failed".into())] };
        idem = idem.max(twirl(&t).map_or(f64::INFINITY, |tt| max_abs_diff(tt.matrix(), t.matrix())));
        let gamma = HermitianOperator::from_hermitian_part(&random_hermitian(4, rng));
        let lhs = inner(gamma.matrix(), t.matrix());
        let rhs = twirl_adjoint(&gamma).map_or(f64::INFINITY, |g| inner(g.matrix(), rho.matrix()));
        adjoint = adjoint.max((lhs - rhs).abs());
        for m in &maps {
            decreases &= twirl_decreases_objective(&rho, m).unwrap_or(false);
        }
    }
    let mut overlap = 0.0f64;
    for _ in 0..100 {
        overlap = overlap.max(eve_block_diagonality(&random_bell_state(rng)));
    }
    let (h, v) = (cell_observable(ProtocolKind::Qubit, 0, 0), cell_observable(ProtocolKind::Qubit, 1, 1));
    let t_hh = twirl_adjoint(&HermitianOperator::from_hermitian_part(&h)).map(|g| g.into_matrix());
    let eq13 = t_hh.map_or(f64::INFINITY, |g| max_abs_diff(&g, &((&h + &v) * cr(0.5))));
    vec![
        Check::new("twirl is idempotent", idem < 1e-12, format!("max deviation {idem:.3e}")),
        Check::new("twirl adjoint identity", adjoint < 1e-12, format!("max deviation {adjoint:.3e}")),
        Check::new("twirl adjoint averages HH and VV", eq13 < 1e-12, format!("deviation {eq13:.3e}")),
        Check::new("twirling never raises f or f'", decreases, String::new()),
        Check::new("Eve's blocks are orthogonal", overlap < 1e-12, format!("max overlap {overlap:.3e}")),
    ]
}

fn check_solver() -> Vec<Check> {
    let mut out = Vec::new();
    let opts = SolverOptions::default();
    let s = ChannelScenario::qubit(0.0, 0.0, 0.0);
    let table = crate::channel::simulate_qubit_table(&s);
    for g in GrainingChoice::ALL {
        let outcome = table
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|t| build_constraints(&t.cell_table(), g, ConstraintMode::Equality).map_err(|e| e.to_string()))
            .and_then(|c| minimize(&build_maps(ProtocolKind::Qubit, false), &c, &opts).map_err(|e| e.to_string()));
        let (ok, detail) = match outcome {
            Ok(r) => (
                r.lower >= 0.4999 && r.upper <= 0.5001 && r.lower <= r.upper + 1e-9,
                format!("[{:.6}, {:.6}]", r.lower, r.upper),
            ),
            Err(e) => (false, e),
        };
        out.push(Check::new(&format!("noiseless {g} bounds bracket 0.5"), ok, detail));
    }
    out
}

fn check_decoy() -> Vec<Check> {
    let s = ChannelScenario::decoy(0.2, 0.4, 0.0, vec![0.5, 0.1, 0.001]);
    let res = simulate_decoy_tables(&s)
        .and_then(|t| solve_yield_bounds(&t, PhotonCutoff::default()))
        .and_then(|b| single_photon_truth(&s).map(|t| (b, t)));
    let sandwich = match res {
        Ok((b, truth)) => {
            let mut ok = b.max_duality_gap < 1e-9;
            for x in 0..4 {
                for y in 0..5 {
                    let t = truth.tables[0][x][y] / SYMBOL_PROB;
                    ok &= b.bounds[x][y].0 <= t + 1e-12 && t <= b.bounds[x][y].1 + 1e-12;
                }
            }
            Check::new("decoy bounds sandwich the single-photon yields", ok, format!("max gap {:.3e}", b.max_duality_gap))
        }
        Err(e) => Check::new("decoy bounds sandwich the single-photon yields", false, e.to_string()),
    };
    let split = photon_split_keyrate(0.3, 0.25, 1e-3, 0.5);
    let zero = split.is_ok_and(|p| p.fprime_zero_photon == 0.0 && p.f_zero_photon == p.p0 * 1e-3);
    vec![sandwich, Check::new("zero-photon term enters F only", zero, String::new())]
}

fn check_cascade(seed: u64) -> Vec<Check> {
    let mut ok = true;
    let mut detail = String::new();
    for (i, e) in [0.01, 0.05, 0.1].into_iter().enumerate() {
        match cascade_session(4000, e, seed + i as u64, None, 4) {
            Ok((row, t)) => {
                ok &= row.reconstruction_ok && row.delta_a == row.delta_b && messages_paired(&t) && t.pass_invariant_held;
            }
            Err(err) => {
                ok = false;
                detail = err.to_string();
            }
        }
    }
    vec![
        Check::new("Cascade transcripts pair up and reconstruct", ok, detail),
    ]
}

/// Runs every check. The suite passes when every entry has `passed`.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = check_operators(&mut rng);
    out.extend(check_maps());
    out.extend(check_objective(&mut rng, seed));
    out.extend(check_symmetry(&mut rng));
    out.extend(check_solver());
    out.extend(check_decoy());
    out.extend(check_cascade(seed));
    Ok(out)
}
