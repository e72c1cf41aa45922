//! Small dense primal-dual interior-point method for mixed semidefinite and
//! linear programs.
//!
//! Primal:
//!
//! ```text
//! minimize   <C, X> + c^T x
//! subject to <A_i, X> + a_i^T x = b_i   (i = 1..m)
//!            X Hermitian PSD (n x n, n may be 0), x >= 0
//! ```
//!
//! Dual: maximize `b^T y` subject to `S = C - sum y_i A_i` PSD and
//! `s = c - sum y_i a_i >= 0`. The search direction is the HKM direction with a
//! Mehrotra predictor-corrector, started from an infeasible interior point.
//! Linearly dependent rows are removed before the solve and their consistency
//! is checked afterwards; removed rows get a zero multiplier.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{cr, eigvalsh, hermitian_part, identity, inner, CMatrix};

/// One equality row `<A, X> + a^T x = b`.
#[derive(Clone, Debug)]
pub struct ConicRow {
    /// `None` means the row does not touch the matrix block.
    pub a_mat: Option<CMatrix>,
    /// Dense coefficients on the nonnegative variables (length `p`).
    pub a_vec: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub struct ConicProblem {
    /// Size of the Hermitian PSD block.
    pub n: usize,
    /// Number of nonnegative scalar variables.
    pub p: usize,
    pub c_mat: CMatrix,
    pub c_vec: Vec<f64>,
    pub rows: Vec<ConicRow>,
}

#[derive(Clone, Copy, Debug)]
pub struct ConicOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Rows whose residual after projection onto earlier rows falls below
    /// this fraction of their norm are treated as dependent.
    pub rank_tol: f64,
}

impl Default for ConicOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 150, rank_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    /// Stopped at the iteration limit or on a numerical stall; the iterate is
    /// the best found and residuals tell how good it is.
    Inaccurate,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x_mat: CMatrix,
    pub x_vec: Vec<f64>,
    pub y: Vec<f64>,
    pub s_mat: CMatrix,
    pub s_vec: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: ConicStatus,
}

impl ConicProblem {
    pub fn new(n: usize, p: usize) -> Self {
        Self { n, p, c_mat: CMatrix::zeros(n, n), c_vec: vec![0.0; p], rows: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// `<A_i, X> + a_i^T x` for every row.
    pub fn apply(&self, x_mat: &CMatrix, x_vec: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let mut v: f64 = r.a_vec.iter().zip(x_vec).map(|(a, x)| a * x).sum();
                if let Some(a) = &r.a_mat {
                    v += inner(a, x_mat);
                }
                v
            })
            .collect()
    }

    /// `sum_i y_i A_i` and `sum_i y_i a_i`.
    pub fn adjoint(&self, y: &[f64]) -> (CMatrix, Vec<f64>) {
        let mut mat = CMatrix::zeros(self.n, self.n);
        let mut vec = vec![0.0; self.p];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            if let Some(a) = &r.a_mat {
                mat += a * cr(yi);
            }
            for (v, a) in vec.iter_mut().zip(&r.a_vec) {
                *v += yi * a;
            }
        }
        (mat, vec)
    }

    fn check(&self) -> Result<()> {
        if self.c_mat.shape() != (self.n, self.n) || self.c_vec.len() != self.p {
            return Err(Error::DimensionMismatch("conic objective has the wrong shape".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a_vec.len() != self.p {
                return Err(Error::DimensionMismatch(format!("row {i} has {} scalar coefficients", r.a_vec.len())));
            }
            if let Some(a) = &r.a_mat {
                if a.shape() != (self.n, self.n) {
                    return Err(Error::DimensionMismatch(format!("row {i} matrix has shape {:?}", a.shape())));
                }
            }
        }
        if self.n + self.p == 0 {
            return Err(Error::DimensionMismatch("conic problem has no variables".into()));
        }
        Ok(())
    }

    /// Indices of a maximal linearly independent subset of rows, in order.
    fn independent_rows(&self, rank_tol: f64) -> Vec<usize> {
        let embed = |r: &ConicRow| -> Vec<f64> {
            let mut v = Vec::with_capacity(2 * self.n * self.n + self.p);
            if let Some(a) = &r.a_mat {
                for z in a.iter() {
                    v.push(z.re);
                    v.push(z.im);
                }
            } else {
                v.resize(2 * self.n * self.n, 0.0);
            }
            v.extend_from_slice(&r.a_vec);
            v
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut keep = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            let orig = embed(r);
            let norm0 = orig.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm0 == 0.0 {
                continue;
            }
            let mut v = orig;
            // two rounds of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &basis {
                    let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    for (a, b) in v.iter_mut().zip(q) {
                        *a -= d * b;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > rank_tol.max(1e-13) * norm0 {
                for a in v.iter_mut() {
                    *a /= norm;
                }
                basis.push(v);
                keep.push(i);
            }
        }
        keep
    }

    pub fn solve(&self, opts: &ConicOptions) -> Result<ConicSolution> {
        self.check()?;
        let keep = self.independent_rows(opts.rank_tol);
        let reduced = ConicProblem {
            n: self.n,
            p: self.p,
            c_mat: self.c_mat.clone(),
            c_vec: self.c_vec.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        };
        let mut sol = reduced.solve_independent(opts)?;
        let mut y = vec![0.0; self.m()];
        for (k, &i) in keep.iter().enumerate() {
            y[i] = sol.y[k];
        }
        sol.y = y;
        let ax = self.apply(&sol.x_mat, &sol.x_vec);
        let scale = 1.0 + self.rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
        let worst = self
            .rows
            .iter()
            .zip(&ax)
            .map(|(r, v)| (r.b - v).abs())
            .fold(0.0, f64::max);
        sol.primal_residual = worst;
        if worst > 1e-6 * scale && sol.status == ConicStatus::Optimal {
            return Err(Error::Infeasible(worst));
        }
        Ok(sol)
    }

    fn solve_independent(&self, opts: &ConicOptions) -> Result<ConicSolution> {
        let (n, p, m) = (self.n, self.p, self.m());
        let b: Vec<f64> = self.rows.iter().map(|r| r.b).collect();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = (self.c_mat.norm_squared() + self.c_vec.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let a_norm = self
            .rows
            .iter()
            .map(|r| {
                (r.a_mat.as_ref().map_or(0.0, |a| a.norm_squared()) + r.a_vec.iter().map(|v| v * v).sum::<f64>())
                    .sqrt()
            })
            .fold(0.0, f64::max);

        let dim = (n + p) as f64;
        let zeta = 1.0f64.max(
            self.rows
                .iter()
                .map(|r| {
                    let an = (r.a_mat.as_ref().map_or(0.0, |a| a.norm_squared())
                        + r.a_vec.iter().map(|v| v * v).sum::<f64>())
                    .sqrt();
                    dim.sqrt() * (1.0 + r.b.abs()) / (1.0 + an)
                })
                .fold(0.0, f64::max),
        );
        let eta = 1.0f64.max(c_norm.max(a_norm)).max(dim.sqrt());

        let mut xm = identity(n) * cr(zeta);
        let mut sm = identity(n) * cr(eta);
        let mut xv = vec![zeta; p];
        let mut sv = vec![eta; p];
        let mut y = vec![0.0; m];

        let a_mats: Vec<Option<&CMatrix>> = self.rows.iter().map(|r| r.a_mat.as_ref()).collect();

        let mut status = ConicStatus::Inaccurate;
        let mut iterations = 0;
        let mut best: Option<(f64, CMatrix, Vec<f64>, Vec<f64>, CMatrix, Vec<f64>)> = None;

        for it in 0..opts.max_iters {
            iterations = it + 1;
            let ax = self.apply(&xm, &xv);
            let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, v)| bi - v).collect();
            let (aty_m, aty_v) = self.adjoint(&y);
            let rd_m = &self.c_mat - &aty_m - &sm;
            let rd_v: Vec<f64> = (0..p).map(|k| self.c_vec[k] - aty_v[k] - sv[k]).collect();

            let xs = if n > 0 { inner(&xm, &sm) } else { 0.0 };
            let mu = (xs + xv.iter().zip(&sv).map(|(a, b)| a * b).sum::<f64>()) / dim;
            let pobj = if n > 0 { inner(&self.c_mat, &xm) } else { 0.0 }
                + self.c_vec.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>();
            let dobj: f64 = b.iter().zip(&y).map(|(a, b)| a * b).sum();
            let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm);
            let dinf = (rd_m.norm_squared() + rd_v.iter().map(|v| v * v).sum::<f64>()).sqrt() / (1.0 + c_norm);
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let merit = pinf.max(dinf).max(relgap);
            if best.as_ref().is_none_or(|bst| merit < bst.0) {
                best = Some((merit, xm.clone(), xv.clone(), y.clone(), sm.clone(), sv.clone()));
            }
            if merit < opts.tol {
                status = ConicStatus::Optimal;
                break;
            }

            // S^{-1} and the Schur complement
            let s_inv = if n > 0 {
                match Cholesky::new(sm.clone()) {
                    Some(ch) => ch.inverse(),
                    None => break,
                }
            } else {
                CMatrix::zeros(0, 0)
            };
            let x_a_sinv: Vec<Option<CMatrix>> =
                a_mats.iter().map(|a| a.map(|a| &xm * a * &s_inv)).collect();
            let ratio: Vec<f64> = xv.iter().zip(&sv).map(|(x, s)| x / s).collect();
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let mut v = 0.0;
                    if let (Some(ai), Some(xaj)) = (a_mats[i], &x_a_sinv[j]) {
                        v += re_trace_product(ai, xaj);
                    }
                    let (ri, rj) = (&self.rows[i].a_vec, &self.rows[j].a_vec);
                    for k in 0..p {
                        v += ri[k] * ratio[k] * rj[k];
                    }
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
            let solver = match SchurSolver::new(schur) {
                Some(s) => s,
                None => break,
            };

            let direction = |rc_m: &CMatrix, rc_v: &[f64]| -> (CMatrix, Vec<f64>, Vec<f64>, CMatrix, Vec<f64>) {
                // G = (Rc - X Rd) S^{-1}
                let g = if n > 0 { (rc_m - &xm * &rd_m) * &s_inv } else { CMatrix::zeros(0, 0) };
                let mut rhs = DVector::<f64>::zeros(m);
                for i in 0..m {
                    let mut v = rp[i];
                    if let Some(ai) = a_mats[i] {
                        v -= re_trace_product(ai, &g);
                    }
                    let ri = &self.rows[i].a_vec;
                    for k in 0..p {
                        v -= ri[k] * (rc_v[k] - xv[k] * rd_v[k]) / sv[k];
                    }
                    rhs[i] = v;
                }
                let dy = solver.solve(&rhs);
                let dy: Vec<f64> = dy.iter().copied().collect();
                let (ady_m, ady_v) = self.adjoint(&dy);
                let ds_m = &rd_m - ady_m;
                let ds_v: Vec<f64> = (0..p).map(|k| rd_v[k] - ady_v[k]).collect();
                let dx_m = if n > 0 {
                    hermitian_part(&((rc_m - &xm * &ds_m) * &s_inv))
                } else {
                    CMatrix::zeros(0, 0)
                };
                let dx_v: Vec<f64> = (0..p).map(|k| (rc_v[k] - xv[k] * ds_v[k]) / sv[k]).collect();
                (dx_m, dx_v, dy, ds_m, ds_v)
            };

            // predictor
            let xs_m = &xm * &sm;
            let rc_m = -&xs_m;
            let rc_v: Vec<f64> = (0..p).map(|k| -xv[k] * sv[k]).collect();
            let (dxa_m, dxa_v, _, dsa_m, dsa_v) = direction(&rc_m, &rc_v);
            let ap = max_step(&xm, &dxa_m, &xv, &dxa_v).min(1.0);
            let ad = max_step(&sm, &dsa_m, &sv, &dsa_v).min(1.0);
            let x_aff = &xm + &dxa_m * cr(ap);
            let s_aff = &sm + &dsa_m * cr(ad);
            let mu_aff = ((if n > 0 { inner(&x_aff, &s_aff) } else { 0.0 })
                + (0..p).map(|k| (xv[k] + ap * dxa_v[k]) * (sv[k] + ad * dsa_v[k])).sum::<f64>())
                / dim;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let rc_m = identity(n) * cr(sigma * mu) - &xs_m - &dxa_m * &dsa_m;
            let rc_v: Vec<f64> = (0..p).map(|k| sigma * mu - xv[k] * sv[k] - dxa_v[k] * dsa_v[k]).collect();
            let (dx_m, dx_v, dy, ds_m, ds_v) = direction(&rc_m, &rc_v);
            let tau = (1.0 - mu.min(0.1)).clamp(0.9, 0.995);
            let ap = (tau * max_step(&xm, &dx_m, &xv, &dx_v)).min(1.0);
            let ad = (tau * max_step(&sm, &ds_m, &sv, &ds_v)).min(1.0);
            if !(ap > 1e-14 && ad > 1e-14) || !ap.is_finite() || !ad.is_finite() {
                break;
            }
            xm = hermitian_part(&(&xm + &dx_m * cr(ap)));
            sm = hermitian_part(&(&sm + &ds_m * cr(ad)));
            for k in 0..p {
                xv[k] += ap * dx_v[k];
                sv[k] += ad * ds_v[k];
            }
            for i in 0..m {
                y[i] += ad * dy[i];
            }
        }

        if status != ConicStatus::Optimal {
            if let Some((_, bx, bxv, by, bs, bsv)) = best {
                xm = bx;
                xv = bxv;
                y = by;
                sm = bs;
                sv = bsv;
            }
        }
        let ax = self.apply(&xm, &xv);
        let primal_residual = b.iter().zip(&ax).map(|(bi, v)| (bi - v).abs()).fold(0.0, f64::max);
        let (aty_m, aty_v) = self.adjoint(&y);
        let dual_residual = (&self.c_mat - &aty_m - &sm)
            .iter()
            .map(|z| z.norm())
            .chain((0..p).map(|k| (self.c_vec[k] - aty_v[k] - sv[k]).abs()))
            .fold(0.0, f64::max);
        let primal_obj = if n > 0 { inner(&self.c_mat, &xm) } else { 0.0 }
            + self.c_vec.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>();
        let dual_obj = b.iter().zip(&y).map(|(a, b)| a * b).sum();
        Ok(ConicSolution {
            x_mat: xm,
            x_vec: xv,
            y,
            s_mat: sm,
            s_vec: sv,
            primal_obj,
            dual_obj,
            primal_residual,
            dual_residual,
            iterations,
            status,
        })
    }
}

/// `Re Tr(a b)`.
fn re_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let (x, y) = (a[(i, k)], b[(k, i)]);
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Largest `alpha` with `X + alpha dX` PSD and `x + alpha dx >= 0` (may be infinite).
fn max_step(xm: &CMatrix, dxm: &CMatrix, xv: &[f64], dxv: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (x, d) in xv.iter().zip(dxv) {
        if *d < 0.0 {
            alpha = alpha.min(-x / d);
        }
    }
    if xm.nrows() > 0 {
        if let Some(ch) = Cholesky::new(xm.clone()) {
            let l = ch.l();
            let l_inv = l.clone().try_inverse().unwrap_or_else(|| CMatrix::zeros(l.nrows(), l.ncols()));
            let w = hermitian_part(&(&l_inv * dxm * l_inv.adjoint()));
            let lmin = eigvalsh(&w)[0];
            if lmin < 0.0 {
                alpha = alpha.min(-1.0 / lmin);
            }
        } else {
            return 0.0;
        }
    }
    alpha
}

enum SchurSolver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(mut m: DMatrix<f64>) -> Option<Self> {
        if m.nrows() == 0 {
            return Some(SchurSolver::Lu(m.lu()));
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(SchurSolver::Chol(ch));
        }
        let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        for i in 0..m.nrows() {
            m[(i, i)] += 1e-13 * scale;
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(SchurSolver::Chol(ch));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(SchurSolver::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurSolver::Chol(ch) => ch.solve(rhs),
            SchurSolver::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{min_eigenvalue, real_matrix};

    #[test]
    fn lp_with_known_optimum() {
        // min -x0 - 2 x1  s.t. x0 + x1 + s = 4, x1 + t = 3
        let mut prob = ConicProblem::new(0, 4);
        prob.c_vec = vec![-1.0, -2.0, 0.0, 0.0];
        prob.rows.push(ConicRow { a_mat: None, a_vec: vec![1.0, 1.0, 1.0, 0.0], b: 4.0 });
        prob.rows.push(ConicRow { a_mat: None, a_vec: vec![0.0, 1.0, 0.0, 1.0], b: 3.0 });
        let sol = prob.solve(&ConicOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.primal_obj + 7.0).abs() < 1e-8);
        assert!((sol.dual_obj + 7.0).abs() < 1e-8);
    }

    #[test]
    fn sdp_minimum_eigenvalue() {
        // min <C, X> s.t. Tr X = 1 equals the smallest eigenvalue of C
        let c = real_matrix(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let mut prob = ConicProblem::new(3, 0);
        prob.c_mat = c.clone();
        prob.rows.push(ConicRow { a_mat: Some(identity(3)), a_vec: vec![], b: 1.0 });
        let sol = prob.solve(&ConicOptions::default()).unwrap();
        let lmin = min_eigenvalue(&c);
        assert!((sol.primal_obj - lmin).abs() < 1e-8, "{} vs {}", sol.primal_obj, lmin);
        assert!((sol.dual_obj - lmin).abs() < 1e-8);
        assert!(min_eigenvalue(&sol.x_mat) > -1e-9);
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let c = real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut prob = ConicProblem::new(2, 0);
        prob.c_mat = c;
        prob.rows.push(ConicRow { a_mat: Some(identity(2)), a_vec: vec![], b: 1.0 });
        prob.rows.push(ConicRow { a_mat: Some(identity(2) * cr(2.0)), a_vec: vec![], b: 2.0 });
        let sol = prob.solve(&ConicOptions::default()).unwrap();
        assert!((sol.primal_obj + 1.0).abs() < 1e-8);
        assert_eq!(sol.y[1], 0.0);

        prob.rows[1].b = 3.0;
        assert!(matches!(prob.solve(&ConicOptions::default()), Err(Error::Infeasible(_))));
    }
}
