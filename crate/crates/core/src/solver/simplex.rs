//! Dense bounded-variable primal simplex for small linear programs with
//! ranged rows:
//!
//! ```text
//! minimize   c^T x
//! subject to lo_i <= a_i^T x <= hi_i
//!            l_j  <= x_j     <= u_j
//! ```
//!
//! All bounds must be finite. Each row gets a bounded row variable
//! `r_i = a_i^T x`, so nearly coincident `lo_i` and `hi_i` cause no
//! degeneracy. The returned lower bound is the Lagrangian value of the final
//! multipliers, which is a valid bound for any multiplier vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A ranged-row linear program with a finite box on every variable.
#[derive(Clone, Debug, Default)]
pub struct BoundedLp {
    pub c: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_bounds: Vec<(f64, f64)>,
    pub var_bounds: Vec<(f64, f64)>,
}

/// Optimal vertex with its certified bracket.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// `c^T x` at the returned vertex.
    pub value: f64,
    /// Lagrangian lower bound on the optimum from `y`.
    pub bound: f64,
    pub y: Vec<f64>,
    /// Largest row or box violation of `x`.
    pub violation: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-13;
const MAX_PIVOTS: usize = 10_000;

struct Tableau {
    m: usize,
    /// Column bounds of all variables: structural, row, artificial.
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Original constraint matrix `[A, -I, D]`.
    cols: DMatrix<f64>,
    basis: Vec<usize>,
    /// Current value of every variable.
    value: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn n_total(&self) -> usize {
        self.cols.ncols()
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, k| self.cols[(i, self.basis[k])])
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh(&mut self) -> Result<()> {
        let mut rhs = DVector::zeros(self.m);
        for j in 0..self.n_total() {
            if !self.basis.contains(&j) {
                rhs -= self.cols.column(j) * self.value[j];
            }
        }
        let xb = self
            .basis_matrix()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
        for (k, &j) in self.basis.iter().enumerate() {
            self.value[j] = xb[k];
        }
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Result<DVector<f64>> {
        let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
        self.basis_matrix()
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::Numerical("singular simplex basis".into()))
    }

    /// Runs primal simplex with Bland's rule on `cost` from the current
    /// feasible basis.
    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Numerical("simplex pivot limit reached".into()));
            }
            let binv = self
                .basis_matrix()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
            let y = binv.transpose() * DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
            let mut entering = None;
            for j in 0..self.n_total() {
                if self.basis.contains(&j) || self.upper[j] - self.lower[j] <= 0.0 {
                    continue;
                }
                let d = cost[j] - self.cols.column(j).dot(&y);
                let at_lower = self.value[j] <= self.lower[j];
                if at_lower && d < -COST_TOL {
                    entering = Some((j, 1.0));
                    break;
                }
                if !at_lower && d > COST_TOL {
                    entering = Some((j, -1.0));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            // Basic values move by -dir * t * alpha as x_j moves by dir * t.
            let alpha = &binv * self.cols.column(j);
            let mut step = self.upper[j] - self.lower[j];
            let mut leaving: Option<(usize, bool)> = None;
            for (k, &bj) in self.basis.iter().enumerate() {
                let rate = -dir * alpha[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let room = if rate > 0.0 {
                    (self.upper[bj] - self.value[bj]).max(0.0) / rate
                } else {
                    (self.value[bj] - self.lower[bj]).max(0.0) / -rate
                };
                let better = match leaving {
                    None => room < step,
                    Some((kk, _)) => room < step || (room == step && bj < self.basis[kk]),
                };
                if better {
                    step = room;
                    leaving = Some((k, rate > 0.0));
                }
            }
            self.pivots += 1;
            match leaving {
                None => {
                    self.value[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((k, to_upper)) => {
                    let bj = self.basis[k];
                    self.value[j] += dir * step;
                    self.value[bj] = if to_upper { self.upper[bj] } else { self.lower[bj] };
                    self.basis[k] = j;
                }
            }
            self.refresh()?;
        }
    }
}

impl BoundedLp {
    fn check(&self) -> Result<()> {
        let n = self.c.len();
        if self.var_bounds.len() != n || self.rows.len() != self.row_bounds.len() {
            return Err(Error::DimensionMismatch("bounded LP shapes disagree".into()));
        }
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("bounded LP row length".into()));
        }
        let bad = |&(l, u): &(f64, f64)| !(l.is_finite() && u.is_finite() && l <= u);
        if self.var_bounds.iter().any(bad) || self.row_bounds.iter().any(bad) {
            return Err(Error::InvalidParameter("bounded LP needs finite, ordered bounds".into()));
        }
        Ok(())
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().zip(&self.row_bounds).map(|(a, &(lo, hi))| {
            let v: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            (lo - v).max(v - hi).max(0.0)
        });
        let boxes = x.iter().zip(&self.var_bounds).map(|(&v, &(l, u))| (l - v).max(v - u).max(0.0));
        rows.chain(boxes).fold(0.0, f64::max)
    }

    /// Lagrangian lower bound `min_{x in box, r in ranges} c^T x - y^T (A x - r)`.
    pub fn lagrangian_bound(&self, y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &(l, u)) in self.var_bounds.iter().enumerate() {
            let d = self.c[j] - self.rows.iter().zip(y).map(|(a, yi)| a[j] * yi).sum::<f64>();
            total += (d * l).min(d * u);
        }
        for (&yi, &(lo, hi)) in y.iter().zip(&self.row_bounds) {
            total += (yi * lo).min(yi * hi);
        }
        total
    }

    /// Smallest total row violation over the box, `Ok(0)` when feasible.
    pub fn infeasibility(&self) -> Result<f64> {
        self.check()?;
        let mut t = self.phase_one()?;
        let n_total = t.n_total();
        let mut cost = vec![0.0; n_total];
        cost[n_total - t.m..].iter_mut().for_each(|c| *c = 1.0);
        t.optimize(&cost)?;
        Ok(t.value[n_total - t.m..].iter().sum())
    }

    fn phase_one(&self) -> Result<Tableau> {
        let n = self.c.len();
        let m = self.rows.len();
        let mut value = vec![0.0; n + 2 * m];
        let mut lower = vec![0.0; n + 2 * m];
        let mut upper = vec![f64::INFINITY; n + 2 * m];
        let mut cols = DMatrix::zeros(m, n + 2 * m);
        for (j, &(l, u)) in self.var_bounds.iter().enumerate() {
            lower[j] = l;
            upper[j] = u;
            value[j] = l;
        }
        for (i, (a, &(lo, hi))) in self.rows.iter().zip(&self.row_bounds).enumerate() {
            for j in 0..n {
                cols[(i, j)] = a[j];
            }
            cols[(i, n + i)] = -1.0;
            lower[n + i] = lo;
            upper[n + i] = hi;
            let ax: f64 = a.iter().zip(&self.var_bounds).map(|(p, b)| p * b.0).sum();
            let r = ax.clamp(lo, hi);
            value[n + i] = r;
            let d = r - ax;
            cols[(i, n + m + i)] = if d < 0.0 { -1.0 } else { 1.0 };
            value[n + m + i] = d.abs();
        }
        Ok(Tableau { m, lower, upper, cols, basis: (n + m..n + 2 * m).collect(), value, pivots: 0 })
    }

    /// Solves the program; rows that cannot be met within `feas_tol` in total
    /// give [`Error::Infeasible`].
    pub fn solve(&self, feas_tol: f64) -> Result<LpSolution> {
        self.check()?;
        let n = self.c.len();
        let m = self.rows.len();
        let mut t = self.phase_one()?;
        let mut cost = vec![0.0; n + 2 * m];
        cost[n + m..].iter_mut().for_each(|c| *c = 1.0);
        t.optimize(&cost)?;
        let residual: f64 = t.value[n + m..].iter().sum();
        if residual > feas_tol {
            return Err(Error::Infeasible(residual));
        }
        for j in n + m..n + 2 * m {
            t.upper[j] = 0.0;
            if !t.basis.contains(&j) {
                t.value[j] = 0.0;
            }
        }
        t.refresh()?;
        let mut cost = self.c.clone();
        cost.resize(n + 2 * m, 0.0);
        t.optimize(&cost)?;
        let y: Vec<f64> = t.duals(&cost)?.iter().copied().collect();
        let x: Vec<f64> = t.value[..n]
            .iter()
            .zip(&self.var_bounds)
            .map(|(&v, &(l, u))| v.clamp(l, u))
            .collect();
        let value = self.c.iter().zip(&x).map(|(p, q)| p * q).sum();
        Ok(LpSolution {
            violation: self.violation(&x),
            bound: self.lagrangian_bound(&y),
            x,
            value,
            y,
            pivots: t.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_range() {
        // min -x - y, x + y in [0, 1.5], x, y in [0, 1].
        let lp = BoundedLp {
            c: vec![-1.0, -1.0],
            rows: vec![vec![1.0, 1.0]],
            row_bounds: vec![(0.0, 1.5)],
            var_bounds: vec![(0.0, 1.0); 2],
        };
        let s = lp.solve(1e-12).unwrap();
        assert!((s.value + 1.5).abs() < 1e-14);
        assert!((s.bound + 1.5).abs() < 1e-14);
        assert!(s.violation < 1e-15);
    }

    #[test]
    fn equality_row_with_tiny_width() {
        // x + 1e-30 y = 0.3 with a range of width 1e-40.
        let lp = BoundedLp {
            c: vec![0.0, 1.0],
            rows: vec![vec![1.0, 1e-30]],
            row_bounds: vec![(0.3 - 1e-40, 0.3)],
            var_bounds: vec![(0.0, 1.0); 2],
        };
        let s = lp.solve(1e-12).unwrap();
        assert!(s.value.abs() < 1e-14 && (s.value - s.bound).abs() < 1e-14);
        assert!((s.x[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn infeasible_rows_are_reported() {
        let lp = BoundedLp {
            c: vec![1.0],
            rows: vec![vec![1.0]],
            row_bounds: vec![(2.0, 3.0)],
            var_bounds: vec![(0.0, 1.0)],
        };
        assert!(matches!(lp.solve(1e-9), Err(Error::Infeasible(_))));
        assert!((lp.infeasibility().unwrap() - 1.0).abs() < 1e-14);
    }
}
