//! Dense complex linear algebra shared by every other module.
//!
//! All operators are small (at most 48 x 48 here), so everything is dense and
//! spectral functions go through a Hermitian eigensolver. Matrix logarithms and
//! entropies are taken in base 2, so every entropic quantity is in bits.
//!
//! Register ordering is fixed once for the whole crate: tensor products are
//! Kronecker products with the leftmost factor most significant, and protocol
//! outputs are laid out as `Z (x) A (x) B (x) Ã (x) W`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Default eigenvalue clip applied before taking logarithms.
pub const DEFAULT_CLIP: f64 = 1e-12;

const HERMITIAN_TOL: f64 = 1e-12;
const SUPPORT_TOL: f64 = 1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

/// Builds a complex matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| cr(entries[i * cols + j]))
}

/// Computational basis column vector `|i>` in dimension `n`.
pub fn ket(n: usize, i: usize) -> CMatrix {
    let mut v = zeros(n, 1);
    v[(i, 0)] = cr(1.0);
    v
}

/// `|i><i|` in dimension `n`.
pub fn projector(n: usize, i: usize) -> CMatrix {
    let mut p = zeros(n, n);
    p[(i, i)] = cr(1.0);
    p
}

/// `|v><v|` for a column vector `v`.
pub fn outer(v: &CMatrix) -> CMatrix {
    v * v.adjoint()
}

/// Pauli matrices indexed 0..=3 as (I, X, Y, Z).
pub fn pauli(i: usize) -> CMatrix {
    match i {
        0 => identity(2),
        1 => real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        2 => CMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]),
        3 => real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// Hermitian matrix with validated symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = hermitian_defect(&m);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self { m })
    }

    /// Wraps `m` after replacing it by its Hermitian part.
    pub fn from_hermitian_part(m: &CMatrix) -> Self {
        Self { m: hermitian_part(m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    /// `Re Tr(self * other)`.
    pub fn expectation(&self, rho: &CMatrix) -> f64 {
        inner(&self.m, rho)
    }
}

/// Positive-semidefinite Hermitian operator with trace in `(0, 1]`.
///
/// Unnormalized conditional states (trace below one) are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(m)?;
        let tr = trace_re(op.matrix());
        if !(tr > 0.0 && tr <= 1.0 + 1e-10) {
            return Err(Error::NotDensity(format!("trace {tr} outside (0, 1]")));
        }
        let lmin = min_eigenvalue(op.matrix());
        if lmin < -1e-10 {
            return Err(Error::NotDensity(format!("minimum eigenvalue {lmin:.3e}")));
        }
        Ok(Self { op })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        trace_re(self.op.matrix())
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn into_matrix(self) -> CMatrix {
        self.op.into_matrix()
    }
}

/// A single Kraus operator mapping `in_dim` to `out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausOperator {
    m: CMatrix,
}

impl KrausOperator {
    pub fn new(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn out_dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }
}

/// Kronecker product `a (x) b`.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[&CMatrix]) -> CMatrix {
    let mut it = factors.iter();
    let first = it.next().expect("tensor_all needs at least one factor");
    it.fold((*first).clone(), |acc, f| acc.kronecker(f))
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `Re Tr(a^dagger b)`, the real Frobenius inner product.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * cr(0.5)
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `sum_i K_i rho K_i^dagger`.
pub fn apply_kraus(kraus: &[KrausOperator], rho: &CMatrix) -> CMatrix {
    let out = kraus[0].out_dim();
    let mut acc = zeros(out, out);
    for k in kraus {
        acc += k.matrix() * rho * k.matrix().adjoint();
    }
    acc
}

/// Adjoint map `sum_i K_i^dagger y K_i`.
pub fn apply_kraus_adjoint(kraus: &[KrausOperator], y: &CMatrix) -> CMatrix {
    let inp = kraus[0].in_dim();
    let mut acc = zeros(inp, inp);
    for k in kraus {
        acc += k.matrix().adjoint() * y * k.matrix();
    }
    acc
}

/// Partial trace keeping the registers listed in `keep` (in their original order).
pub fn partial_trace(x: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if !x.is_square() || x.nrows() != total {
        return Err(Error::DimensionMismatch(format!(
            "register dims {dims:?} multiply to {total}, operator is {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "keep {keep:?} out of range for {} registers",
            dims.len()
        )));
    }
    let nreg = dims.len();
    let kept: Vec<usize> = (0..nreg).filter(|r| keep.contains(r)).collect();
    let traced: Vec<usize> = (0..nreg).filter(|r| !keep.contains(r)).collect();
    let kdim: usize = kept.iter().map(|&r| dims[r]).product();
    let tdim: usize = traced.iter().map(|&r| dims[r]).product();

    // strides of each register in the full index
    let mut stride = vec![1usize; nreg];
    for r in (0..nreg.saturating_sub(1)).rev() {
        stride[r] = stride[r + 1] * dims[r + 1];
    }
    let compose = |regs: &[usize], mut idx: usize| -> usize {
        let mut full = 0;
        for &r in regs.iter().rev() {
            full += (idx % dims[r]) * stride[r];
            idx /= dims[r];
        }
        full
    };

    let mut out = zeros(kdim, kdim);
    for i in 0..kdim {
        let fi = compose(&kept, i);
        for j in 0..kdim {
            let fj = compose(&kept, j);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..tdim {
                let ft = compose(&traced, t);
                acc += x[(fi + ft, fj + ft)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: CMatrix,
}

impl Spectrum {
    /// Rebuilds `sum_i g(lambda_i) |v_i><v_i|`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.vectors.nrows();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = cr(g(l));
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition that first splits the matrix into the
/// connected components of its sparsity pattern. Protocol outputs are
/// block-diagonal in their classical registers, so this is both faster and
/// keeps structural zeros exactly zero.
pub fn eigh(x: &CMatrix) -> Spectrum {
    let n = x.nrows();
    let blocks = sparsity_blocks(x);
    let mut values = vec![0.0; n];
    let mut vectors = zeros(n, n);
    let mut col = 0;
    for block in blocks {
        let k = block.len();
        if k == 1 {
            let i = block[0];
            values[col] = x[(i, i)].re;
            vectors[(i, col)] = cr(1.0);
            col += 1;
            continue;
        }
        let sub = CMatrix::from_fn(k, k, |a, b| x[(block[a], block[b])]);
        let sub = hermitian_part(&sub);
        let eig = SymmetricEigen::new(sub);
        for j in 0..k {
            values[col + j] = eig.eigenvalues[j];
            for a in 0..k {
                vectors[(block[a], col + j)] = eig.eigenvectors[(a, j)];
            }
        }
        col += k;
    }
    Spectrum { values, vectors }
}

/// Eigenvalues only.
pub fn eigvalsh(x: &CMatrix) -> Vec<f64> {
    let mut v = eigh(x).values;
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn min_eigenvalue(x: &CMatrix) -> f64 {
    eigh(x).values.into_iter().fold(f64::INFINITY, f64::min)
}

fn sparsity_blocks(x: &CMatrix) -> Vec<Vec<usize>> {
    let n = x.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if x[(i, j)] != Complex64::new(0.0, 0.0) || x[(j, i)] != Complex64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Base-2 matrix logarithm with eigenvalues below `clip` replaced by `clip`.
pub fn matrix_log2(x: &CMatrix, clip: f64) -> Result<CMatrix> {
    if clip <= 0.0 {
        return Err(Error::InvalidParameter(format!("clip must be positive, got {clip}")));
    }
    let defect = hermitian_defect(x);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    Ok(eigh(x).map(|l| l.max(clip).log2()))
}

/// Base-2 matrix exponential `2^X` of a Hermitian matrix.
pub fn matrix_exp2(x: &CMatrix) -> CMatrix {
    eigh(x).map(|l| l.exp2())
}

/// `Tr(X log2 X)` with the convention `0 log 0 = 0`; eigenvalues below `clip`
/// contribute nothing.
pub fn trace_xlogx(x: &CMatrix, clip: f64) -> f64 {
    eigh(x).values.iter().filter(|&&l| l > clip).map(|&l| l * l.log2()).sum()
}

/// Quantum relative entropy `Tr(x log2 x) - Tr(x log2 y)` in bits.
///
/// Weight of `x` outside the support of `y` (eigenvalues of `y` below `clip`)
/// is reported as [`Error::SupportViolation`] rather than absorbed by the clip.
pub fn rel_entropy2(x: &CMatrix, y: &CMatrix, clip: f64) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy arguments {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if clip <= 0.0 {
        return Err(Error::InvalidParameter(format!("clip must be positive, got {clip}")));
    }
    for m in [x, y] {
        let d = hermitian_defect(m);
        if d > HERMITIAN_TOL {
            return Err(Error::NotHermitian(d));
        }
    }
    let sy = eigh(y);
    let mut outside = 0.0;
    for (j, &l) in sy.values.iter().enumerate() {
        if l <= clip {
            let v = sy.vectors.column(j);
            outside += (v.adjoint() * x * v)[(0, 0)].re;
        }
    }
    if outside > SUPPORT_TOL {
        return Err(Error::SupportViolation(outside));
    }
    let log_y = sy.map(|l| l.max(clip).log2());
    Ok(trace_xlogx(x, clip) - inner(x, &log_y))
}

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Shannon entropy in bits of a probability vector.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> CMatrix {
        let n = values.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { cr(values[i]) } else { cr(0.0) })
    }

    fn phi_plus() -> CMatrix {
        let mut v = zeros(4, 1);
        v[(0, 0)] = cr(std::f64::consts::FRAC_1_SQRT_2);
        v[(3, 0)] = cr(std::f64::consts::FRAC_1_SQRT_2);
        outer(&v)
    }

    #[test]
    fn tensor_examples() {
        assert_eq!(tensor(&identity(2), &identity(2)), identity(4));
        assert_eq!(tensor(&pauli(3), &identity(2)), diag(&[1.0, 1.0, -1.0, -1.0]));
        let t = tensor(&projector(2, 0), &projector(2, 1));
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (1, 1) { 1.0 } else { 0.0 };
                assert_eq!(t[(i, j)], cr(expect));
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let reduced = partial_trace(&phi_plus(), &[2, 2], &[0]).unwrap();
        assert!(max_abs_diff(&reduced, &(identity(2) * cr(0.5))) < 1e-15);

        let full = partial_trace(&phi_plus(), &[2, 2], &[]).unwrap();
        assert_eq!(full.shape(), (1, 1));
        assert!((full[(0, 0)].re - 1.0).abs() < 1e-15);

        let err = partial_trace(&phi_plus(), &[2, 3], &[0]);
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn partial_trace_middle_register() {
        // |0><0| (x) sigma (x) |1><1| traced over the middle register
        let sigma = real_matrix(3, 3, &[0.2, 0.1, 0.0, 0.1, 0.5, 0.0, 0.0, 0.0, 0.3]);
        let x = tensor_all(&[&projector(2, 0), &sigma, &projector(2, 1)]);
        let out = partial_trace(&x, &[2, 3, 2], &[0, 2]).unwrap();
        let expect = tensor(&projector(2, 0), &projector(2, 1));
        assert!(max_abs_diff(&out, &expect) < 1e-15);
    }

    #[test]
    fn matrix_log2_examples() {
        let zero = matrix_log2(&identity(2), DEFAULT_CLIP).unwrap();
        assert!(zero.iter().all(|z| z.norm() < 1e-15));

        let l = matrix_log2(&diag(&[2.0, 4.0]), DEFAULT_CLIP).unwrap();
        assert!(max_abs_diff(&l, &diag(&[1.0, 2.0])) < 1e-14);

        let l = matrix_log2(&diag(&[0.5, 0.0]), 1e-12).unwrap();
        assert!(max_abs_diff(&l, &diag(&[-1.0, 1e-12f64.log2()])) < 1e-12);

        let bad = CMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.5), cr(0.0), cr(1.0)]);
        assert!(matches!(matrix_log2(&bad, DEFAULT_CLIP), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn rel_entropy_examples() {
        let rho = real_matrix(2, 2, &[0.7, 0.2, 0.2, 0.3]);
        assert!(rel_entropy2(&rho, &rho, DEFAULT_CLIP).unwrap().abs() < 1e-12);

        let d = rel_entropy2(&projector(2, 0), &(identity(2) * cr(0.5)), DEFAULT_CLIP).unwrap();
        assert!((d - 1.0).abs() < 1e-14);

        // scaling identity D(p s || p Z(s)) = p D(s || Z(s))
        let p = 0.37;
        let pinched = diag(&[0.7, 0.3]);
        let base = rel_entropy2(&rho, &pinched, DEFAULT_CLIP).unwrap();
        let scaled =
            rel_entropy2(&(&rho * cr(p)), &(&pinched * cr(p)), DEFAULT_CLIP).unwrap();
        assert!((scaled - p * base).abs() < 1e-13);

        let err = rel_entropy2(&projector(2, 1), &projector(2, 0), DEFAULT_CLIP);
        assert!(matches!(err, Err(Error::SupportViolation(_))));
    }

    #[test]
    fn blocked_eigensolver_matches_direct() {
        let a = real_matrix(2, 2, &[0.6, 0.1, 0.1, 0.4]);
        let x = tensor(&diag(&[1.0, 0.0, 2.0]), &a);
        let s = eigh(&x);
        let rebuilt = s.map(|l| l);
        assert!(max_abs_diff(&rebuilt, &x) < 1e-14);
        let mut vals = s.values.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals.iter().filter(|v| v.abs() < 1e-15).count(), 2);
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(phi_plus()).is_ok());
        assert!(DensityOperator::new(diag(&[0.5, 0.3])).is_ok());
        assert!(DensityOperator::new(diag(&[1.2, -0.2])).is_err());
        assert!(DensityOperator::new(diag(&[0.8, 0.8])).is_err());
    }
}
