//! Conditional-gradient minimization of the key-rate objective with certified
//! lower bounds.
//!
//! Each iteration linearizes `f` at a slightly mixed copy of the iterate,
//! minimizes the linearization over the feasible spectrahedron with the conic
//! solver, and takes an exact line search toward the minimizer. Convexity
//! turns the dual value of that linear subproblem into a lower bound on the
//! optimum; the objective at the (feasible) iterate is the upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{cr, eigvalsh, hermitian_part, identity, inner, min_eigenvalue, trace_re, CMatrix, DensityOperator};
use crate::protocol::{ConstraintKind, ObservableConstraint, ProtocolMaps};
use crate::solver::conic::{ConicOptions, ConicProblem, ConicRow};
use crate::solver::objective::{gradient_matrix, objective_value};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop once `upper - lower` falls to this many bits.
    pub gap_target: f64,
    pub max_iters: usize,
    /// Eigenvalue clip used inside logarithms.
    pub clip: f64,
    /// Weight of the maximally mixed state mixed into the linearization point.
    pub perturbation: f64,
    #[serde(skip)]
    pub conic: ConicOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_target: 1e-4,
            max_iters: 300,
            clip: crate::operators::DEFAULT_CLIP,
            perturbation: 1e-9,
            conic: ConicOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// `f` at a feasible point, in bits.
    pub upper: f64,
    /// Certified lower bound on the minimum, in bits.
    pub lower: f64,
    pub rho_star: DensityOperator,
    pub iterations: usize,
    pub gap: f64,
    /// False when the gap target was not reached within the iteration budget.
    pub converged: bool,
    /// Largest constraint residual of `rho_star`.
    pub residual: f64,
    pub diagnostics: String,
    /// `(upper, lower)` after every iteration.
    pub history: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowSign {
    Free,
    NonNeg,
    NonPos,
}

/// The constraint set `S` as rows of a conic program over `X = rho`.
#[derive(Clone, Debug)]
pub struct FeasibleSet {
    pub dim: usize,
    rows: Vec<ConicRow>,
    signs: Vec<RowSign>,
    slacks: usize,
    constraints: Vec<ObservableConstraint>,
}

impl FeasibleSet {
    pub fn new(dim: usize, constraints: &[ObservableConstraint]) -> Result<Self> {
        if !constraints.iter().any(|c| c.label == "trace") {
            return Err(Error::InvalidParameter("constraint list must contain the unit-trace row".into()));
        }
        let slacks = constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::Interval { low, high } if high > low))
            .count()
            * 2;
        let mut rows = Vec::new();
        let mut signs = Vec::new();
        let mut next = 0;
        for c in constraints {
            if c.op.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "constraint {} acts on dimension {}, state has {dim}",
                    c.label,
                    c.op.dim()
                )));
            }
            let a = c.op.matrix().clone();
            match c.kind {
                ConstraintKind::Equality(v) => {
                    rows.push(ConicRow { a_mat: Some(a), a_vec: vec![0.0; slacks], b: v });
                    signs.push(RowSign::Free);
                }
                ConstraintKind::Interval { low, high } => {
                    if low > high {
                        return Err(Error::InvalidParameter(format!(
                            "interval {} has low {low} > high {high}",
                            c.label
                        )));
                    }
                    if high == low {
                        rows.push(ConicRow { a_mat: Some(a), a_vec: vec![0.0; slacks], b: low });
                        signs.push(RowSign::Free);
                        continue;
                    }
                    let mut lo = vec![0.0; slacks];
                    lo[next] = -1.0;
                    let mut hi = vec![0.0; slacks];
                    hi[next + 1] = 1.0;
                    next += 2;
                    rows.push(ConicRow { a_mat: Some(a.clone()), a_vec: lo, b: low });
                    signs.push(RowSign::NonNeg);
                    rows.push(ConicRow { a_mat: Some(a), a_vec: hi, b: high });
                    signs.push(RowSign::NonPos);
                }
            }
        }
        Ok(Self { dim, rows, signs, slacks, constraints: constraints.to_vec() })
    }

    pub fn constraints(&self) -> &[ObservableConstraint] {
        &self.constraints
    }

    /// Largest violation of any constraint at `rho`.
    pub fn residual(&self, rho: &CMatrix) -> f64 {
        self.constraints.iter().map(|c| c.violation(rho)).fold(0.0, f64::max)
    }

    /// Rows padded with `extra` further scalar columns (coefficients from `extra_coef`).
    fn rows_with(&self, extra: usize, extra_coef: impl Fn(usize, &ConicRow) -> Vec<f64>) -> Vec<ConicRow> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut a_vec = r.a_vec.clone();
                let tail = extra_coef(i, r);
                debug_assert_eq!(tail.len(), extra);
                a_vec.extend(tail);
                ConicRow { a_mat: r.a_mat.clone(), a_vec, b: r.b }
            })
            .collect()
    }

    /// Minimum total elastic violation needed to satisfy every row.
    pub fn infeasibility(&self, opts: &ConicOptions) -> Result<f64> {
        let m = self.rows.len();
        let mut prob = ConicProblem::new(self.dim, self.slacks + 2 * m);
        prob.c_vec = [vec![0.0; self.slacks], vec![1.0; 2 * m]].concat();
        prob.rows = self.rows_with(2 * m, |i, _| {
            let mut v = vec![0.0; 2 * m];
            v[2 * i] = 1.0;
            v[2 * i + 1] = -1.0;
            v
        });
        let sol = prob.solve(opts)?;
        Ok(sol.primal_obj.min(sol.dual_obj).max(0.0))
    }

    /// A feasible point maximizing its smallest eigenvalue.
    pub fn central_point(&self, opts: &ConicOptions) -> Result<CMatrix> {
        let violation = self.infeasibility(opts)?;
        if violation > 1e-8 {
            return Err(Error::Infeasible(violation));
        }
        let mut prob = ConicProblem::new(self.dim, self.slacks + 1);
        prob.c_vec = vec![0.0; self.slacks + 1];
        prob.c_vec[self.slacks] = -1.0;
        prob.rows = self.rows_with(1, |_, r| vec![trace_re(r.a_mat.as_ref().unwrap())]);
        let sol = prob.solve(opts)?;
        let t = sol.x_vec[self.slacks];
        let rho = hermitian_part(&(&sol.x_mat + identity(self.dim) * cr(t)));
        let res = self.residual(&rho);
        if res > 1e-7 {
            return Err(Error::Numerical(format!("initial point violates constraints by {res:.3e}")));
        }
        Ok(rho)
    }

    /// Minimizes `<c, sigma>` over the set. Returns the minimizer and a
    /// certified lower bound on the minimum value.
    pub fn linear_minimize(&self, c: &CMatrix, opts: &ConicOptions) -> Result<(CMatrix, f64)> {
        let mut prob = ConicProblem::new(self.dim, self.slacks);
        prob.c_mat = c.clone();
        prob.rows = self.rows.clone();
        let sol = prob.solve(opts)?;
        let bound = self.certified_bound(c, &sol.y);
        Ok((hermitian_part(&sol.x_mat), bound))
    }

    /// Dual value of `min <c, sigma>` after repairing `y` into an exactly
    /// feasible dual point: multipliers are projected onto their sign cones and
    /// the residual negative spectrum of `c - sum y_i A_i` is absorbed by the
    /// unit-trace constraint.
    fn certified_bound(&self, c: &CMatrix, y: &[f64]) -> f64 {
        let mut s = c.clone();
        let mut value = 0.0;
        for ((row, sign), &yi) in self.rows.iter().zip(&self.signs).zip(y) {
            let yi = match sign {
                RowSign::Free => yi,
                RowSign::NonNeg => yi.max(0.0),
                RowSign::NonPos => yi.min(0.0),
            };
            s -= row.a_mat.as_ref().unwrap() * cr(yi);
            value += yi * row.b;
        }
        value + min_eigenvalue(&hermitian_part(&s)).min(0.0)
    }
}

/// Golden-section minimization of a convex function on `[0, 1]`.
fn line_search(phi: impl Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = phi(d);
        }
    }
    // compare interior candidate with the endpoints
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    for s in [0.0, 1.0] {
        let v = phi(s);
        if v < best.1 {
            best = (s, v);
        }
    }
    best
}

/// Minimizes `f` over the constraint set.
pub fn minimize(
    maps: &ProtocolMaps,
    constraints: &[ObservableConstraint],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let n = maps.in_dim();
    let set = FeasibleSet::new(n, constraints)?;
    let mut rho = set.central_point(&opts.conic)?;
    let mixed = identity(n) * cr(1.0 / n as f64);

    let mut f_rho = objective_value(&rho, maps);
    let mut upper = f_rho;
    let mut best_rho = rho.clone();
    let mut lower = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut lmo_warnings = 0;
    // The iterate as a convex combination of feasible atoms, for away steps.
    let mut atoms: Vec<(CMatrix, f64)> = vec![(rho.clone(), 1.0)];

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let eps = opts.perturbation;
        let rho_p = &rho * cr(1.0 - eps) + &mixed * cr(eps);
        let grad = gradient_matrix(&rho_p, maps, opts.clip);
        let (sigma, dual) = set.linear_minimize(&grad, &opts.conic)?;
        let lin = objective_value(&rho_p, maps) - inner(&grad, &rho_p) + dual;
        if lin > lower {
            lower = lin;
        }
        if f_rho < upper {
            upper = f_rho;
            best_rho = rho.clone();
        }
        history.push((upper, lower));
        if upper - lower <= opts.gap_target {
            converged = true;
            break;
        }

        let g_rho = inner(&grad, &rho);
        let fw_gap = g_rho - inner(&grad, &sigma);
        if fw_gap < 0.0 {
            lmo_warnings += 1;
        }
        let (away, away_gap) = atoms
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (i, inner(&grad, a) - g_rho))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("active set is never empty");
        let use_away = atoms.len() > 1 && away_gap > fw_gap;
        let (dir, max_step) = if use_away {
            let w = atoms[away].1;
            (&rho - &atoms[away].0, w / (1.0 - w))
        } else {
            (&sigma - &rho, 1.0)
        };
        let (s, value) = line_search(|s| objective_value(&(&rho + &dir * cr(s * max_step)), maps), 1e-10);
        if s <= 0.0 {
            continue;
        }
        let step = s * max_step;
        rho = hermitian_part(&(&rho + &dir * cr(step)));
        f_rho = value;
        if use_away {
            atoms.iter_mut().for_each(|(_, w)| *w *= 1.0 + step);
            atoms[away].1 -= step;
            if s >= 1.0 || atoms[away].1 <= 1e-12 {
                atoms.swap_remove(away);
            }
        } else if s >= 1.0 {
            atoms = vec![(sigma, 1.0)];
        } else {
            atoms.iter_mut().for_each(|(_, w)| *w *= 1.0 - step);
            atoms.push((sigma, step));
        }
    }
    if f_rho < upper {
        best_rho = rho.clone();
    }

    // Round-off can leave the trace a hair above one; rescaling moves the
    // constraint residuals by the same relative amount.
    let tr = trace_re(&best_rho);
    if tr > 1.0 {
        best_rho *= cr(1.0 / tr);
    }
    let lmin = eigvalsh(&best_rho)[0];
    if lmin < 0.0 && lmin > -1e-9 {
        best_rho = hermitian_part(&(&best_rho * cr(1.0 + lmin * n as f64) - identity(n) * cr(lmin)));
    }
    let upper = objective_value(&best_rho, maps);
    let residual = set.residual(&best_rho);
    let lmin = eigvalsh(&best_rho)[0];
    let rho_star = DensityOperator::new(best_rho.clone())
        .or_else(|_| DensityOperator::new(hermitian_part(&best_rho)))
        .map_err(|e| Error::Numerical(format!("final iterate is not a state: {e}")))?;
    let gap = upper - lower;
    // Each clipped eigenvalue of G or Z(G) moves x log2 x by at most this much.
    let clip_slack = 2.0 * maps.out_dim() as f64 * opts.clip * opts.clip.log2().abs();
    let diagnostics = format!(
        "clip={:.1e} clip_slack={:.1e} perturbation={:.1e} iterations={} residual={:.2e} min_eig={:.2e} ascent_directions={}",
        opts.clip, clip_slack, opts.perturbation, iterations, residual, lmin, lmo_warnings
    );
    Ok(SolveResult {
        upper,
        lower,
        rho_star,
        iterations,
        gap,
        converged: converged || gap <= opts.gap_target,
        residual,
        diagnostics,
        history,
    })
}
