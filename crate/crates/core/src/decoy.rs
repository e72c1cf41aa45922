//! Decoy-state analysis: Poisson photon-number decomposition, linear-program
//! bounds on single-photon yields, and the photon-number split of the key rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::StatisticsTable;
use crate::error::{Error, Result};
use crate::protocol::{
    build_constraints, CellTable, ConstraintMode, GrainingChoice, ObservableConstraint, ProtocolKind,
    DECOY_LABELS, QUBIT_LABELS,
};
use crate::solver::simplex::BoundedLp;

/// Probability of Alice sending each of the four symbols.
pub const SYMBOL_PROB: f64 = 0.25;

/// Largest photon number kept explicitly in the linear programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonCutoff {
    pub n_max: usize,
}

impl Default for PhotonCutoff {
    fn default() -> Self {
        Self { n_max: 10 }
    }
}

/// `mu^n e^{-mu} / n!`.
pub fn poisson_weight(mu: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let log = n as f64 * mu.ln() - mu - ln_factorial(n);
    log.exp()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Bounds on the single-photon conditional yields `gamma^1_{y|x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldBounds {
    /// `bounds[x][y] = (low, high)`, rows `H, V, +, -`, columns including no-detection.
    pub bounds: Vec<Vec<(f64, f64)>>,
    /// Largest gap between an LP's primal value and its certified bound.
    pub max_duality_gap: f64,
}

impl YieldBounds {
    pub fn label(x: usize, y: usize) -> String {
        format!("{}{}", QUBIT_LABELS[x], DECOY_LABELS[y])
    }

    /// CSV text with header `statistic,low,high`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["statistic", "low", "high"]).map_err(csv_err)?;
        for (x, row) in self.bounds.iter().enumerate() {
            for (y, (l, h)) in row.iter().enumerate() {
                w.write_record([Self::label(x, y), format!("{l:.15e}"), format!("{h:.15e}")])
                    .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Outcome of the two linear programs for one statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatisticBound {
    pub low: f64,
    pub high: f64,
    /// Largest primal-minus-certified gap of the two programs.
    pub duality_gap: f64,
}

/// Yield LP for one statistic over `gamma^n`, `n = 0..=N`, with one ranged
/// row `q_mu - tail_mu <= sum_n p_mu(n) gamma^n <= q_mu` per intensity.
fn yield_program(observed: &[f64], intensities: &[f64], cutoff: PhotonCutoff) -> BoundedLp {
    let k = cutoff.n_max + 1;
    let mut lp = BoundedLp { c: vec![0.0; k], var_bounds: vec![(0.0, 1.0); k], ..Default::default() };
    for (&mu, &q) in intensities.iter().zip(observed) {
        let weights: Vec<f64> = (0..k).map(|n| poisson_weight(mu, n)).collect();
        let tail = (1.0 - weights.iter().sum::<f64>()).max(0.0);
        lp.rows.push(weights);
        lp.row_bounds.push(((q - tail).min(q), q));
    }
    lp
}

const LP_FEAS_TOL: f64 = 1e-9;

fn infeasible(label: &str, e: Error) -> Error {
    match e {
        Error::Infeasible(v) => Error::LpInfeasible {
            label: label.to_string(),
            detail: format!("observations miss the Poisson model by {v:.3e}"),
        },
        other => other,
    }
}

/// Bounds on `gamma^1` for a single statistic from its observed conditional
/// yields at each intensity.
pub fn solve_statistic(
    observed: &[f64],
    intensities: &[f64],
    cutoff: PhotonCutoff,
    label: &str,
) -> Result<StatisticBound> {
    if observed.len() != intensities.len() || intensities.is_empty() {
        return Err(Error::MissingStatistics(format!(
            "{label}: {} observations for {} intensities",
            observed.len(),
            intensities.len()
        )));
    }
    if cutoff.n_max < 1 {
        return Err(Error::InvalidParameter("photon cutoff must be at least 1".into()));
    }
    let mut lp = yield_program(observed, intensities, cutoff);
    let mut run = |sign: f64| -> Result<(f64, f64)> {
        lp.c.iter_mut().for_each(|c| *c = 0.0);
        lp.c[1] = sign;
        let sol = lp.solve(LP_FEAS_TOL).map_err(|e| infeasible(label, e))?;
        let gap = if sol.violation > LP_FEAS_TOL { f64::INFINITY } else { sol.value - sol.bound };
        Ok((gap, sol.bound))
    };
    let (min_gap, min_bound) = run(1.0)?;
    let (max_gap, max_bound) = run(-1.0)?;
    let low = min_bound.max(0.0);
    let high = (-max_bound).min(1.0);
    let duality_gap = min_gap.max(max_gap).max(0.0);
    if low > high + 1e-9 {
        return Err(Error::LpInfeasible {
            label: label.to_string(),
            detail: format!("bounds crossed: low {low} > high {high}"),
        });
    }
    Ok(StatisticBound { low: low.min(high), high, duality_gap })
}

/// Runs both LPs for every statistic of a decoy table set. Statistics are
/// independent and are solved in parallel.
pub fn solve_yield_bounds(stats: &StatisticsTable, cutoff: PhotonCutoff) -> Result<YieldBounds> {
    if stats.protocol != ProtocolKind::Decoy {
        return Err(Error::InvalidParameter("yield bounds need decoy statistics".into()));
    }
    if stats.tables.len() != stats.intensities.len() {
        return Err(Error::MissingStatistics("one table per intensity is required".into()));
    }
    let cells: Vec<(usize, usize)> = (0..4).flat_map(|x| (0..5).map(move |y| (x, y))).collect();
    let solved: Vec<Result<StatisticBound>> = cells
        .par_iter()
        .map(|&(x, y)| {
            let observed: Vec<f64> = stats.tables.iter().map(|t| t[x][y] / SYMBOL_PROB).collect();
            solve_statistic(&observed, &stats.intensities, cutoff, &YieldBounds::label(x, y))
        })
        .collect();
    let mut bounds = vec![vec![(0.0, 0.0); 5]; 4];
    let mut max_duality_gap = 0.0f64;
    for (&(x, y), r) in cells.iter().zip(solved) {
        let b = r?;
        bounds[x][y] = (b.low, b.high);
        max_duality_gap = max_duality_gap.max(b.duality_gap);
    }
    Ok(YieldBounds { bounds, max_duality_gap })
}

/// Interval constraints on joint single-photon probabilities
/// `Pr(x) * gamma^1_{y|x}` for the chosen graining.
pub fn assemble_interval_constraints(
    b: &YieldBounds,
    graining: GrainingChoice,
) -> Result<Vec<ObservableConstraint>> {
    let cells = b
        .bounds
        .iter()
        .map(|row| row.iter().map(|&(l, h)| (SYMBOL_PROB * l, SYMBOL_PROB * h)).collect())
        .collect();
    let table = CellTable { kind: ProtocolKind::Decoy, cells };
    build_constraints(&table, graining, ConstraintMode::Interval)
}

/// Zero-photon probability of passing sifting, bounded from below by the
/// zero-photon yields of the basis-matched cells.
pub fn zero_photon_pass_lower(stats: &StatisticsTable, cutoff: PhotonCutoff) -> Result<f64> {
    let mut total = 0.0;
    for block in [0usize, 2] {
        for x in block..block + 2 {
            for y in block..block + 2 {
                let observed: Vec<f64> = stats.tables.iter().map(|t| t[x][y] / SYMBOL_PROB).collect();
                let mut lp = yield_program(&observed, &stats.intensities, cutoff);
                lp.c[0] = 1.0;
                let sol = lp.solve(LP_FEAS_TOL).map_err(|e| infeasible(&YieldBounds::label(x, y), e))?;
                total += SYMBOL_PROB * sol.bound.max(0.0);
            }
        }
    }
    Ok(total)
}

/// Photon-number split of the objective for the signal intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhotonSplit {
    pub f_total: f64,
    pub fprime_total: f64,
    /// Zero-photon contribution to `F`: `p_0 * p_pass0`.
    pub f_zero_photon: f64,
    /// Zero-photon contribution to `F'`, always zero.
    pub fprime_zero_photon: f64,
    pub p0: f64,
    pub p1: f64,
}

/// `F_total = p_1 F_1 + p_0 p_pass0` and `F'_total = p_1 F'_1`.
///
/// With the error string announced, Eve knows Bob's zero-photon data and
/// therefore Alice's, so vacuum rounds contribute nothing to `F'`.
pub fn photon_split_keyrate(f1: f64, f1_prime: f64, p_pass0: f64, mu_signal: f64) -> Result<PhotonSplit> {
    if f1 < 0.0 || f1_prime < 0.0 {
        return Err(Error::InvalidParameter("single-photon objectives must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&p_pass0) {
        return Err(Error::InvalidParameter(format!("p_pass0 = {p_pass0} is not a probability")));
    }
    let p0 = poisson_weight(mu_signal, 0);
    let p1 = poisson_weight(mu_signal, 1);
    let f_zero_photon = p0 * p_pass0;
    Ok(PhotonSplit {
        f_total: p1 * f1 + f_zero_photon,
        fprime_total: p1 * f1_prime,
        f_zero_photon,
        fprime_zero_photon: 0.0,
        p0,
        p1,
    })
}
