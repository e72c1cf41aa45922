//! Comparing `F` with `F'` and turning the bounds into key rates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::binary_entropy;
use crate::protocol::{ObservableConstraint, ProtocolMaps};
use crate::solver::frank_wolfe::{minimize, SolveResult, SolverOptions};

/// Separation in bits needed before `F > F'` is claimed.
pub const STRICT_TOLERANCE: f64 = 1e-4;

/// Round-off allowance when testing whether two bound intervals overlap.
pub const OVERLAP_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Equal,
    StrictlyGreater,
    Inconclusive,
}

impl VerdictKind {
    pub fn symbol(self) -> char {
        match self {
            VerdictKind::Equal => '=',
            VerdictKind::StrictlyGreater => '>',
            VerdictKind::Inconclusive => '?',
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Relation between `F` and `F'` with `margin = lower(F) - upper(F')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub margin: f64,
}

impl Verdict {
    /// `>` needs `lower(F) > upper(F') + tolerance`; `=` needs the two bound
    /// intervals to overlap with both solves converged. Everything else is `?`.
    pub fn classify(f: &SolveResult, f_prime: &SolveResult, tolerance: f64) -> Self {
        let margin = f.lower - f_prime.upper;
        let overlap = f.lower.max(f_prime.lower) <= f.upper.min(f_prime.upper) + OVERLAP_SLACK;
        let kind = if margin > tolerance {
            VerdictKind::StrictlyGreater
        } else if overlap && f.converged && f_prime.converged {
            VerdictKind::Equal
        } else {
            VerdictKind::Inconclusive
        };
        Verdict { kind, margin }
    }
}

/// Both solves of one scenario and their verdict.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub f: SolveResult,
    pub f_prime: SolveResult,
    pub verdict: Verdict,
}

/// Solves `F` (plain maps) and `F'` (maps with the error register) on the same
/// constraints, in parallel, and classifies the pair.
pub fn compare(
    maps_plain: &ProtocolMaps,
    maps_w: &ProtocolMaps,
    constraints: &[ObservableConstraint],
    opts: &SolverOptions,
) -> Result<Comparison> {
    if !maps_w.with_w || maps_plain.with_w {
        return Err(Error::InvalidParameter("compare needs plain maps and maps with the W register".into()));
    }
    let (f, f_prime) = rayon::join(
        || minimize(maps_plain, constraints, opts),
        || minimize(maps_w, constraints, opts),
    );
    let (f, f_prime) = (f?, f_prime?);
    let verdict = Verdict::classify(&f, &f_prime, STRICT_TOLERANCE);
    Ok(Comparison { f, f_prime, verdict })
}

/// Key rates for one scenario, in bits per signal.
#[derive(Clone, Debug)]
pub struct KeyRateReport {
    pub f: SolveResult,
    pub f_prime: SolveResult,
    pub e: f64,
    pub f_eff: f64,
    pub p_pass: f64,
    /// Uses `F` with one-way leakage.
    pub r_incorrect: f64,
    /// Uses `F` and charges both directions of Cascade traffic.
    pub r_naive: f64,
    /// Uses `F'` with one-way leakage.
    pub r_corrected: f64,
    /// True if any rate was negative before clamping to zero.
    pub clamped: bool,
}

/// `R_incorrect = lower(F) - p f h(e)`, `R_naive = lower(F) - 2 p f h(e)`,
/// `R_corrected = lower(F') - p f h(e)`, each clamped at zero.
///
/// Since `F >= F'`, `lower(F')` also bounds `F`; the larger of the two lower
/// bounds is used for `F`, which keeps `R_corrected <= R_incorrect` when the
/// two solves stop at slightly different points.
pub fn assemble_keyrates(
    f: &SolveResult,
    f_prime: &SolveResult,
    e: f64,
    f_eff: f64,
    p_pass: f64,
) -> Result<KeyRateReport> {
    if !(0.0..=0.5).contains(&e) {
        return Err(Error::InvalidParameter(format!("QBER {e} outside [0, 0.5]")));
    }
    if f_eff < 1.0 {
        return Err(Error::InvalidParameter(format!("efficiency {f_eff} below 1")));
    }
    if !(0.0..=1.0).contains(&p_pass) {
        return Err(Error::InvalidParameter(format!("p_pass {p_pass} is not a probability")));
    }
    let leak = p_pass * f_eff * binary_entropy(e);
    let f_low = f.lower.max(f_prime.lower);
    let raw = [f_low - leak, f_low - 2.0 * leak, f_prime.lower - leak];
    let clamped = raw.iter().any(|&r| r < 0.0);
    let [r_incorrect, r_naive, r_corrected] = raw.map(|r| r.max(0.0));
    Ok(KeyRateReport {
        f: f.clone(),
        f_prime: f_prime.clone(),
        e,
        f_eff,
        p_pass,
        r_incorrect,
        r_naive,
        r_corrected,
        clamped,
    })
}

/// One CSV row of a key-rate sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateRow {
    pub scenario: String,
    #[serde(rename = "F_low")]
    pub f_low: f64,
    #[serde(rename = "F_up")]
    pub f_up: f64,
    #[serde(rename = "Fp_low")]
    pub fp_low: f64,
    #[serde(rename = "Fp_up")]
    pub fp_up: f64,
    pub verdict: char,
    pub margin: f64,
    #[serde(rename = "R_incorrect")]
    pub r_incorrect: f64,
    #[serde(rename = "R_naive")]
    pub r_naive: f64,
    #[serde(rename = "R_corrected")]
    pub r_corrected: f64,
}

impl KeyRateRow {
    pub fn new(scenario: impl Into<String>, report: &KeyRateReport, verdict: Verdict) -> Self {
        KeyRateRow {
            scenario: scenario.into(),
            f_low: report.f.lower,
            f_up: report.f.upper,
            fp_low: report.f_prime.lower,
            fp_up: report.f_prime.upper,
            verdict: verdict.kind.symbol(),
            margin: verdict.margin,
            r_incorrect: report.r_incorrect,
            r_naive: report.r_naive,
            r_corrected: report.r_corrected,
        }
    }
}
