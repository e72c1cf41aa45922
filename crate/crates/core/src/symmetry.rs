//! Pauli twirling, symmetry tests on statistics, and the Bell-diagonal oracle.
//!
//! Bell basis order throughout: `phi+`, `phi-`, `psi+`, `psi-`. With this
//! order the Z-basis error rate is `lambda_2 + lambda_3` and the X-basis error
//! rate is `lambda_1 + lambda_3`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::StatisticsTable;
use crate::error::{Error, Result};
use crate::operators::{
    binary_entropy, c, cr, eigh, hermitian_part, identity, inner, outer, partial_trace, pauli, real_matrix,
    shannon_entropy, tensor,
    CMatrix, DensityOperator, HermitianOperator,
};
use crate::protocol::{GrainingChoice, ProtocolKind, ProtocolMaps};
use crate::solver::objective::objective_value;

/// Tolerance for the equalities checked by [`statistics_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-9;

fn check_two_qubit(m: &CMatrix) -> Result<()> {
    if m.shape() != (4, 4) {
        return Err(Error::DimensionMismatch(format!(
            "twirl acts on two qubits, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn twirl_matrix(m: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(4, 4);
    for i in 0..4 {
        let s = tensor(&pauli(i), &pauli(i));
        out += &s * m * &s;
    }
    hermitian_part(&(out * cr(0.25)))
}

/// `T(rho) = 1/4 sum_i (s_i x s_i) rho (s_i x s_i)`.
pub fn twirl(rho: &DensityOperator) -> Result<DensityOperator> {
    check_two_qubit(rho.matrix())?;
    DensityOperator::new(twirl_matrix(rho.matrix()))
}

/// Adjoint of [`twirl`]; the Pauli conjugations are self-adjoint, so this is
/// the same average applied to an observable.
pub fn twirl_adjoint(gamma: &HermitianOperator) -> Result<HermitianOperator> {
    check_two_qubit(gamma.matrix())?;
    Ok(HermitianOperator::from_hermitian_part(&twirl_matrix(gamma.matrix())))
}

/// The four Bell vectors in the module's order.
pub fn bell_vectors() -> [CMatrix; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        real_matrix(4, 1, &[h, 0.0, 0.0, h]),
        real_matrix(4, 1, &[h, 0.0, 0.0, -h]),
        real_matrix(4, 1, &[0.0, h, h, 0.0]),
        real_matrix(4, 1, &[0.0, h, -h, 0.0]),
    ]
}

/// Mixture of Bell states with weights `lambdas`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellDiagonalState {
    pub lambdas: [f64; 4],
}

impl BellDiagonalState {
    pub fn new(lambdas: [f64; 4]) -> Result<Self> {
        let total: f64 = lambdas.iter().sum();
        if lambdas.iter().any(|&l| !(l >= -1e-12)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("{lambdas:?} is not a probability vector")));
        }
        Ok(Self { lambdas: lambdas.map(|l| l.max(0.0)) })
    }

    /// Bell-basis diagonal of a two-qubit state.
    pub fn from_density(rho: &DensityOperator) -> Result<Self> {
        check_two_qubit(rho.matrix())?;
        let lambdas = bell_vectors().map(|v| (v.adjoint() * rho.matrix() * &v)[(0, 0)].re);
        Self::new(lambdas)
    }

    pub fn to_density(&self) -> DensityOperator {
        let m = bell_vectors()
            .iter()
            .zip(self.lambdas)
            .fold(CMatrix::zeros(4, 4), |acc, (v, l)| acc + outer(v) * cr(l));
        DensityOperator::new(m).expect("Bell mixture is a state")
    }

    pub fn qber_z(&self) -> f64 {
        self.lambdas[2] + self.lambdas[3]
    }

    pub fn qber_x(&self) -> f64 {
        self.lambdas[1] + self.lambdas[3]
    }

    /// Closed form of the objective for the qubit protocol on this state:
    /// each basis contributes `1/4 (1 - H(lambda) + h(Q))`.
    pub fn objective(&self) -> f64 {
        let s = shannon_entropy(&self.lambdas);
        0.25 * (1.0 - s + binary_entropy(self.qber_z())) + 0.25 * (1.0 - s + binary_entropy(self.qber_x()))
    }
}

/// Minimizer of the Bell-diagonal objective at fixed error rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellOptimum {
    pub value: f64,
    pub state: BellDiagonalState,
}

/// Minimizes [`BellDiagonalState::objective`] over Bell-diagonal states with
/// the given Z and X error rates. The family is one-dimensional in
/// `t = lambda_3`; it is scanned on a 1e-3 grid and the best cell refined by
/// golden section to 1e-6.
pub fn bell_minimize(qber_z: f64, qber_x: f64) -> Result<BellOptimum> {
    if !(0.0..=1.0).contains(&qber_z) || !(0.0..=1.0).contains(&qber_x) {
        return Err(Error::Infeasible(qber_z.max(qber_x)));
    }
    let lo = (qber_z + qber_x - 1.0).max(0.0);
    let hi = qber_z.min(qber_x);
    let state = |t: f64| BellDiagonalState {
        lambdas: [(1.0 - qber_z - qber_x + t).max(0.0), (qber_x - t).max(0.0), (qber_z - t).max(0.0), t],
    };
    let value = |t: f64| state(t).objective();

    let steps = (((hi - lo) / 1e-3).ceil() as usize).max(1);
    let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| value(*a.1).total_cmp(&value(*b.1)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(steps)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-6 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        if value(x1) <= value(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let t = [0.5 * (a + b), grid[best]]
        .into_iter()
        .min_by(|x, y| value(*x).total_cmp(&value(*y)))
        .unwrap();
    Ok(BellOptimum { value: value(t), state: state(t) })
}

/// Whether a qubit table has the equalities a twirl-invariant constraint set
/// needs at this graining: always true for coarse, the four basis-matched
/// pairings for sifted, plus equal cross-basis cells for fine.
pub fn statistics_symmetric(table: &StatisticsTable, graining: GrainingChoice) -> Result<bool> {
    if table.protocol != ProtocolKind::Qubit {
        return Err(Error::InvalidParameter("symmetry test needs a qubit table".into()));
    }
    let g = table.grid(0);
    let eq = |a: f64, b: f64| (a - b).abs() <= SYMMETRY_TOL;
    let sifted = eq(g[0][0], g[1][1]) && eq(g[0][1], g[1][0]) && eq(g[2][2], g[3][3]) && eq(g[2][3], g[3][2]);
    let cross = |rows: [usize; 2], cols: [usize; 2]| {
        let v = g[rows[0]][cols[0]];
        rows.iter().all(|&x| cols.iter().all(|&y| eq(g[x][y], v)))
    };
    Ok(match graining {
        GrainingChoice::Coarse => true,
        GrainingChoice::SiftedFine => sifted,
        GrainingChoice::Fine => sifted && cross([0, 1], [2, 3]) && cross([2, 3], [0, 1]),
    })
}

/// Measurement vectors of a single-qubit basis: 0 = Z, 1 = X, 2 = Y.
fn basis_vectors(basis: usize) -> [CMatrix; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let col = |a: (f64, f64), b: (f64, f64)| CMatrix::from_column_slice(2, 1, &[c(a.0, a.1), c(b.0, b.1)]);
    match basis {
        0 => [col((1.0, 0.0), (0.0, 0.0)), col((0.0, 0.0), (1.0, 0.0))],
        1 => [col((h, 0.0), (h, 0.0)), col((h, 0.0), (-h, 0.0))],
        _ => [col((h, 0.0), (0.0, h)), col((h, 0.0), (0.0, -h))],
    }
}

/// Orthonormal basis of the support of a PSD matrix.
fn support(m: &CMatrix) -> CMatrix {
    let spec = eigh(m);
    let top = spec.values.iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..spec.values.len()).filter(|&i| spec.values[i] > 1e-14 * top.max(1e-300)).collect();
    CMatrix::from_fn(m.nrows(), keep.len(), |r, k| spec.vectors[(r, keep[k])])
}

/// Largest overlap between Eve's states conditioned on `x = y` and on
/// `x != y`, over Z, X and Y measurements on the purification
/// `sum_i sqrt(lambda_i) |Bell_i>|i>_E`. The overlap is the largest singular
/// value of the cross-Gram matrix of the two supports.
pub fn eve_block_diagonality(state: &BellDiagonalState) -> f64 {
    let bells = bell_vectors();
    let mut worst = 0.0f64;
    for basis in 0..3 {
        let vecs = basis_vectors(basis);
        // Eve's unnormalized conditional vectors: <x|<y| Psi>.
        let eve = |x: usize, y: usize| -> CMatrix {
            let ab = tensor(&vecs[x], &vecs[y]);
            CMatrix::from_fn(4, 1, |i, _| (ab.adjoint() * &bells[i])[(0, 0)] * cr(state.lambdas[i].sqrt()))
        };
        let block = |pairs: [(usize, usize); 2]| -> CMatrix {
            pairs.iter().fold(CMatrix::zeros(4, 4), |acc, &(x, y)| acc + outer(&eve(x, y)))
        };
        let same = support(&block([(0, 0), (1, 1)]));
        let diff = support(&block([(0, 1), (1, 0)]));
        if same.ncols() == 0 || diff.ncols() == 0 {
            continue;
        }
        let gram = same.adjoint() * diff;
        let top = gram.singular_values().iter().fold(0.0f64, |a, &v| a.max(v));
        worst = worst.max(top);
    }
    worst
}

/// `f(T(rho)) <= f(rho) + 1e-9` for two-qubit maps.
pub fn twirl_decreases_objective(rho: &DensityOperator, maps: &ProtocolMaps) -> Result<bool> {
    if maps.in_dim() != 4 {
        return Err(Error::DimensionMismatch("twirl comparison needs qubit maps".into()));
    }
    let twirled = twirl(rho)?;
    Ok(objective_value(twirled.matrix(), maps) <= objective_value(rho.matrix(), maps) + 1e-9)
}

/// Random full-rank state `A A^dagger / Tr` with complex Gaussian `A`.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator {
    let a = CMatrix::from_fn(dim, dim, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &a * a.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(hermitian_part(&(m * cr(1.0 / tr)))).expect("Gram matrix is a state")
}

/// Random full-rank state on `A (2) x B (dim_b)` whose Alice marginal is
/// exactly `I/2`, so it satisfies the source-replacement constraints.
pub fn random_feasible_state<R: Rng + ?Sized>(dim_b: usize, rng: &mut R) -> DensityOperator {
    let rho = random_state(2 * dim_b, rng);
    let rho_a = partial_trace(rho.matrix(), &[2, dim_b], &[0]).expect("dimensions match");
    let fix = tensor(&(eigh(&rho_a).map(|l| (2.0 * l).powf(-0.5))), &identity(dim_b));
    let out = hermitian_part(&(&fix * rho.matrix() * fix.adjoint()));
    DensityOperator::new(out).expect("congruence of a state with unit-trace marginal")
}

/// Random Hermitian matrix with Gaussian entries, normalized to unit
/// Hilbert-Schmidt norm.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let h = hermitian_part(&a);
    let norm = inner(&h, &h).sqrt();
    h * cr(1.0 / norm)
}

/// Uniform point on the probability simplex.
pub fn random_bell_state<R: Rng + ?Sized>(rng: &mut R) -> BellDiagonalState {
    let e: [f64; 4] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
    let total: f64 = e.iter().sum();
    BellDiagonalState { lambdas: e.map(|v| v / total) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{simulate_qubit_table, ChannelScenario};
    use crate::operators::{max_abs_diff, projector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus_minus() -> [CMatrix; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [outer(&real_matrix(2, 1, &[h, h])), outer(&real_matrix(2, 1, &[h, -h]))]
    }

    #[test]
    fn fixed_points() {
        let phi = BellDiagonalState::new([1.0, 0.0, 0.0, 0.0]).unwrap().to_density();
        assert!(max_abs_diff(twirl(&phi).unwrap().matrix(), phi.matrix()) < 1e-15);
        let mixed = DensityOperator::new(identity(4) * cr(0.25)).unwrap();
        assert!(max_abs_diff(twirl(&mixed).unwrap().matrix(), mixed.matrix()) < 1e-15);
    }

    #[test]
    fn adjoint_on_cell_observables() {
        let (h, v) = (projector(2, 0), projector(2, 1));
        let [p, m] = plus_minus();
        let herm = |x: CMatrix| HermitianOperator::new(x).unwrap();
        let hh = tensor(&h, &h);
        let vv = tensor(&v, &v);
        let t = twirl_adjoint(&herm(hh.clone())).unwrap();
        assert!(max_abs_diff(t.matrix(), &((&hh + &vv) * cr(0.5))) < 1e-15);
        let t = twirl_adjoint(&herm(tensor(&h, &p))).unwrap();
        let avg = (tensor(&h, &p) + tensor(&h, &m) + tensor(&v, &p) + tensor(&v, &m)) * cr(0.25);
        assert!(max_abs_diff(t.matrix(), &avg) < 1e-15);
        let qz = tensor(&h, &v) + tensor(&v, &h);
        assert!(max_abs_diff(twirl_adjoint(&herm(qz.clone())).unwrap().matrix(), &qz) < 1e-15);
    }

    #[test]
    fn twirl_output_is_bell_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(4, &mut rng);
        let t = twirl(&rho).unwrap();
        let bells = bell_vectors();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((bells[i].adjoint() * t.matrix() * &bells[j])[(0, 0)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_examples() {
        assert!((bell_minimize(0.0, 0.0).unwrap().value - 0.5).abs() < 1e-12);
        let q: f64 = 0.1;
        let v = bell_minimize(q / 2.0, q / 2.0).unwrap().value;
        assert!((v - 0.5 * (1.0 - binary_entropy(q / 2.0))).abs() < 1e-4, "{v}");
        assert!(bell_minimize(1.2, 0.0).is_err());
    }

    #[test]
    fn block_diagonality_examples() {
        let pure = BellDiagonalState::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(eve_block_diagonality(&pure), 0.0);
        let s = BellDiagonalState::new([0.7, 0.1, 0.15, 0.05]).unwrap();
        assert!(eve_block_diagonality(&s) < 1e-12);
    }

    #[test]
    fn symmetry_of_simulated_tables() {
        let t = simulate_qubit_table(&ChannelScenario::qubit(0.2, 0.1, 0.0)).unwrap();
        assert!(statistics_symmetric(&t, GrainingChoice::SiftedFine).unwrap());
        assert!(!statistics_symmetric(&t, GrainingChoice::Fine).unwrap());
        let t = simulate_qubit_table(&ChannelScenario::qubit(0.2, 0.1, 0.2)).unwrap();
        assert!(!statistics_symmetric(&t, GrainingChoice::SiftedFine).unwrap());
        let t = simulate_qubit_table(&ChannelScenario::qubit(0.0, 0.1, 0.0)).unwrap();
        assert!(statistics_symmetric(&t, GrainingChoice::Fine).unwrap());
    }

    #[test]
    fn closed_form_matches_full_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = random_bell_state(&mut rng);
            let rho = b.to_density();
            for w in [false, true] {
                let v = objective_value(rho.matrix(), &crate::protocol::build_qubit_maps(w));
                assert!((v - b.objective()).abs() < 1e-9, "{w} {v} {}", b.objective());
            }
        }
    }

    #[test]
    fn twirl_never_raises_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for w in [false, true] {
            let maps = crate::protocol::build_qubit_maps(w);
            for _ in 0..50 {
                assert!(twirl_decreases_objective(&random_state(4, &mut rng), &maps).unwrap());
            }
        }
    }

    #[test]
    fn feasible_states_have_fixed_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for dim_b in [2, 3] {
            let rho = random_feasible_state(dim_b, &mut rng);
            let a = partial_trace(rho.matrix(), &[2, dim_b], &[0]).unwrap();
            assert!(max_abs_diff(&a, &(identity(2) * cr(0.5))) < 1e-12);
        }
    }
}
