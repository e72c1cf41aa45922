//! Kraus representations of the key map, the key-register pinching, and the
//! observable constraints for qubit and decoy BB84.
//!
//! The post-processing map `G` keeps only basis-matched rounds. Its output
//! registers are `Z (x) A (x) B (x) Ã`, where `Z` holds the key bit and `Ã`
//! the announced basis. The W-augmented variant also writes the error-location
//! bit `w = x xor y` into a trailing register `W`, which refines the plain map:
//! tracing out `W` gives back the plain output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    apply_kraus, apply_kraus_adjoint, cr, eigvalsh, identity, ket, outer, pauli, projector,
    real_matrix, tensor, tensor_all, CMatrix, HermitianOperator, KrausOperator,
};

/// Basis-choice probabilities `(p_z, p_x)`.
pub const P_BASIS: (f64, f64) = (0.5, 0.5);

/// Bob's outcome labels in table-column order. `None` marks the no-detection column.
pub const QUBIT_LABELS: [&str; 4] = ["H", "V", "+", "-"];
pub const DECOY_LABELS: [&str; 5] = ["H", "V", "+", "-", "0"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Qubit,
    Decoy,
}

impl ProtocolKind {
    /// Dimension of Bob's (squashed) system.
    pub fn bob_dim(self) -> usize {
        match self {
            ProtocolKind::Qubit => 2,
            ProtocolKind::Decoy => 3,
        }
    }

    /// Number of Bob outcomes in the statistics table.
    pub fn outcomes(self) -> usize {
        match self {
            ProtocolKind::Qubit => 4,
            ProtocolKind::Decoy => 5,
        }
    }
}

/// Which acceptance-test statistics enter the optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrainingChoice {
    Fine,
    SiftedFine,
    Coarse,
}

impl GrainingChoice {
    pub const ALL: [GrainingChoice; 3] =
        [GrainingChoice::Coarse, GrainingChoice::SiftedFine, GrainingChoice::Fine];
}

impl fmt::Display for GrainingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrainingChoice::Fine => "fine",
            GrainingChoice::SiftedFine => "sifted_fine",
            GrainingChoice::Coarse => "coarse",
        })
    }
}

impl std::str::FromStr for GrainingChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(GrainingChoice::Fine),
            "sifted_fine" | "sifted" => Ok(GrainingChoice::SiftedFine),
            "coarse" => Ok(GrainingChoice::Coarse),
            other => Err(Error::Config(format!("unknown graining '{other}'"))),
        }
    }
}

/// The `G` and pinching maps for one protocol variant.
#[derive(Clone, Debug)]
pub struct ProtocolMaps {
    pub kind: ProtocolKind,
    pub g_kraus: Vec<KrausOperator>,
    pub pinch_kraus: Vec<KrausOperator>,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub with_w: bool,
    pub p_basis: (f64, f64),
}

impl ProtocolMaps {
    pub fn in_dim(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn apply_g(&self, rho: &CMatrix) -> CMatrix {
        apply_kraus(&self.g_kraus, rho)
    }

    pub fn apply_g_adjoint(&self, y: &CMatrix) -> CMatrix {
        apply_kraus_adjoint(&self.g_kraus, y)
    }

    pub fn apply_pinch(&self, x: &CMatrix) -> CMatrix {
        apply_kraus(&self.pinch_kraus, x)
    }

    /// `sum_i K_i^dagger K_i` for the `G` map.
    pub fn completeness(&self) -> CMatrix {
        let n = self.in_dim();
        let mut acc = CMatrix::zeros(n, n);
        for k in &self.g_kraus {
            acc += k.matrix().adjoint() * k.matrix();
        }
        acc
    }

    /// Largest eigenvalue of `sum K^dagger K - I`; non-positive for a
    /// trace non-increasing map.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.completeness() - identity(self.in_dim());
        *eigvalsh(&d).last().unwrap()
    }

    /// Named output registers in tensor order.
    pub fn registers(&self) -> Vec<(&'static str, usize)> {
        keymap_registers(self)
    }
}

/// Alice's four POVM elements `p_z|0><0|, p_z|1><1|, p_x|+><+|, p_x|-><-|`.
pub fn alice_povm() -> [CMatrix; 4] {
    let (pz, px) = P_BASIS;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = real_matrix(2, 1, &[h, h]);
    let minus = real_matrix(2, 1, &[h, -h]);
    [
        projector(2, 0) * cr(pz),
        projector(2, 1) * cr(pz),
        outer(&plus) * cr(px),
        outer(&minus) * cr(px),
    ]
}

/// Bob's POVM in table-column order.
///
/// Qubit: the same four elements as Alice. Decoy: the squashed 3-dimensional
/// POVM with index 0 the vacuum, followed by the no-detection element.
pub fn bob_povm(kind: ProtocolKind) -> Vec<CMatrix> {
    match kind {
        ProtocolKind::Qubit => alice_povm().to_vec(),
        ProtocolKind::Decoy => {
            let (pz, px) = P_BASIS;
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let plus = real_matrix(3, 1, &[0.0, h, h]);
            let minus = real_matrix(3, 1, &[0.0, h, -h]);
            vec![
                projector(3, 1) * cr(pz),
                projector(3, 2) * cr(pz),
                outer(&plus) * cr(px),
                outer(&minus) * cr(px),
                projector(3, 0),
            ]
        }
    }
}

/// Square root of a POVM element `s * Pi` with `Pi` a rank-one projector.
fn sqrt_scaled_projector(p: &CMatrix) -> CMatrix {
    let s: f64 = p.diagonal().iter().map(|z| z.re).sum();
    p * cr(1.0 / s.sqrt())
}

fn basis_ket(alpha: usize) -> CMatrix {
    ket(2, alpha)
}

/// Builds the qubit BB84 maps (Bob a qubit).
pub fn build_qubit_maps(with_w: bool) -> ProtocolMaps {
    build_maps(ProtocolKind::Qubit, with_w)
}

/// Builds the single-photon decoy BB84 maps (Bob squashed to qubit + vacuum).
pub fn build_decoy_maps(with_w: bool) -> ProtocolMaps {
    build_maps(ProtocolKind::Decoy, with_w)
}

pub fn build_maps(kind: ProtocolKind, with_w: bool) -> ProtocolMaps {
    let db = kind.bob_dim();
    let pa = alice_povm();
    let pb = bob_povm(kind);
    let probs = [P_BASIS.0, P_BASIS.1];

    let mut g_kraus = Vec::new();
    for alpha in 0..2 {
        let a_sqrt = [sqrt_scaled_projector(&pa[2 * alpha]), sqrt_scaled_projector(&pa[2 * alpha + 1])];
        let flag = basis_ket(alpha);
        if with_w {
            let b_sqrt =
                [sqrt_scaled_projector(&pb[2 * alpha]), sqrt_scaled_projector(&pb[2 * alpha + 1])];
            for w in 0..2 {
                let mut k = CMatrix::zeros(2 * 2 * db * 2 * 2, 2 * db);
                for x in 0..2 {
                    k += tensor_all(&[&ket(2, x), &a_sqrt[x], &b_sqrt[x ^ w], &flag, &ket(2, w)]);
                }
                g_kraus.push(KrausOperator::new(k));
            }
        } else {
            // sum_y P^B_(alpha, y) = p_alpha * (identity on the detected subspace)
            let detected = &pb[2 * alpha] + &pb[2 * alpha + 1];
            let b_sqrt = detected * cr(1.0 / probs[alpha].sqrt());
            let mut k = CMatrix::zeros(2 * 2 * db * 2, 2 * db);
            for x in 0..2 {
                k += tensor_all(&[&ket(2, x), &a_sqrt[x], &b_sqrt, &flag]);
            }
            g_kraus.push(KrausOperator::new(k));
        }
    }

    let mut out_dims = vec![2, 2, db, 2];
    if with_w {
        out_dims.push(2);
    }
    let rest: usize = out_dims[1..].iter().product();
    let pinch_kraus = (0..2)
        .map(|j| KrausOperator::new(tensor(&projector(2, j), &identity(rest))))
        .collect();

    ProtocolMaps {
        kind,
        g_kraus,
        pinch_kraus,
        in_dims: vec![2, db],
        out_dims,
        with_w,
        p_basis: P_BASIS,
    }
}

/// Register layout `(name, dimension)` of the `G` output.
pub fn keymap_registers(maps: &ProtocolMaps) -> Vec<(&'static str, usize)> {
    let names = ["Z", "A", "B", "Ã", "W"];
    names.iter().copied().zip(maps.out_dims.iter().copied()).collect()
}

/// Whether a constraint pins a value or bounds it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintKind {
    Equality(f64),
    Interval { low: f64, high: f64 },
}

/// `Tr(op * rho) = value` or `low <= Tr(op * rho) <= high`.
#[derive(Clone, Debug)]
pub struct ObservableConstraint {
    pub op: HermitianOperator,
    pub kind: ConstraintKind,
    pub label: String,
}

impl ObservableConstraint {
    pub fn equality(op: HermitianOperator, value: f64, label: impl Into<String>) -> Self {
        Self { op, kind: ConstraintKind::Equality(value), label: label.into() }
    }

    pub fn interval(op: HermitianOperator, low: f64, high: f64, label: impl Into<String>) -> Self {
        Self { op, kind: ConstraintKind::Interval { low, high }, label: label.into() }
    }

    /// Amount by which `rho` violates the constraint (zero when satisfied).
    pub fn violation(&self, rho: &CMatrix) -> f64 {
        let v = self.op.expectation(rho);
        match self.kind {
            ConstraintKind::Equality(t) => (v - t).abs(),
            ConstraintKind::Interval { low, high } => (low - v).max(v - high).max(0.0),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            ConstraintKind::Equality(t) => (t, t),
            ConstraintKind::Interval { low, high } => (low, high),
        }
    }
}

/// How table cells become constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintMode {
    Equality,
    Interval,
}

/// A statistics table whose cells may be known exactly or only up to an
/// interval. Rows are Alice's symbols `H, V, +, -`; columns are Bob's outcomes
/// in [`QUBIT_LABELS`] or [`DECOY_LABELS`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTable {
    pub kind: ProtocolKind,
    /// `cells[x][y] = (low, high)`.
    pub cells: Vec<Vec<(f64, f64)>>,
}

impl CellTable {
    pub fn exact(kind: ProtocolKind, values: &[Vec<f64>]) -> Self {
        let cells = values.iter().map(|row| row.iter().map(|&v| (v, v)).collect()).collect();
        Self { kind, cells }
    }

    fn check(&self) -> Result<()> {
        let cols = self.kind.outcomes();
        if self.cells.len() != 4 || self.cells.iter().any(|r| r.len() != cols) {
            return Err(Error::MissingStatistics(format!(
                "expected a 4x{cols} table for {:?}",
                self.kind
            )));
        }
        for (x, row) in self.cells.iter().enumerate() {
            for (y, &(l, h)) in row.iter().enumerate() {
                if !(l.is_finite() && h.is_finite()) {
                    return Err(Error::MissingStatistics(format!("cell ({x},{y}) is not finite")));
                }
                if l < -1e-12 || h < -1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "negative probability in cell ({x},{y}): [{l}, {h}]"
                    )));
                }
                if l > h {
                    return Err(Error::InvalidParameter(format!(
                        "cell ({x},{y}) has low {l} > high {h}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Observable `P^A_x (x) P^B_y` whose expectation is table cell `(x, y)`.
pub fn cell_observable(kind: ProtocolKind, x: usize, y: usize) -> CMatrix {
    tensor(&alice_povm()[x], &bob_povm(kind)[y])
}

fn cell_label(kind: ProtocolKind, x: usize, y: usize) -> String {
    let cols: &[&str] = match kind {
        ProtocolKind::Qubit => &QUBIT_LABELS,
        ProtocolKind::Decoy => &DECOY_LABELS,
    };
    format!("{}{}", QUBIT_LABELS[x], cols[y])
}

/// Constraint list for the given graining, followed by the three
/// source-replacement equalities `Tr((sigma_j (x) I) rho) = 0` and unit trace.
pub fn build_constraints(
    table: &CellTable,
    graining: GrainingChoice,
    mode: ConstraintMode,
) -> Result<Vec<ObservableConstraint>> {
    table.check()?;
    let kind = table.kind;
    let make = |op: CMatrix, (l, h): (f64, f64), label: String| -> Result<ObservableConstraint> {
        let op = HermitianOperator::new(op)?;
        match mode {
            ConstraintMode::Interval => Ok(ObservableConstraint::interval(op, l, h, label)),
            ConstraintMode::Equality => {
                if (h - l).abs() > 1e-15 {
                    return Err(Error::InvalidParameter(format!(
                        "equality mode needs exact statistics, {label} is [{l}, {h}]"
                    )));
                }
                if !(0.0..=1.0).contains(&l) {
                    return Err(Error::InvalidParameter(format!("{label} = {l} is not a probability")));
                }
                Ok(ObservableConstraint::equality(op, l, label))
            }
        }
    };

    let mut out = Vec::new();
    match graining {
        GrainingChoice::Fine => {
            for x in 0..4 {
                for y in 0..kind.outcomes() {
                    out.push(make(cell_observable(kind, x, y), table.cells[x][y], cell_label(kind, x, y))?);
                }
            }
        }
        GrainingChoice::SiftedFine => {
            for block in [0usize, 2] {
                for x in block..block + 2 {
                    for y in block..block + 2 {
                        out.push(make(cell_observable(kind, x, y), table.cells[x][y], cell_label(kind, x, y))?);
                    }
                }
            }
        }
        GrainingChoice::Coarse => {
            for (block, name) in [(0usize, "Z"), (2, "X")] {
                let mut err_op = CMatrix::zeros(2 * kind.bob_dim(), 2 * kind.bob_dim());
                let mut gain_op = err_op.clone();
                let (mut err, mut gain) = ((0.0, 0.0), (0.0, 0.0));
                for x in block..block + 2 {
                    for y in block..block + 2 {
                        let op = cell_observable(kind, x, y);
                        let (l, h) = table.cells[x][y];
                        if x != y {
                            err_op += &op;
                            err = (err.0 + l, err.1 + h);
                        }
                        gain_op += op;
                        gain = (gain.0 + l, gain.1 + h);
                    }
                }
                out.push(make(err_op, err, format!("QBER_{name}"))?);
                out.push(make(gain_op, gain, format!("gain_{name}"))?);
            }
        }
    }
    out.extend(source_replacement_constraints(kind));
    Ok(out)
}

/// `Tr((sigma_j (x) I) rho) = 0` for `j = x, y, z`, then `Tr(rho) = 1`.
pub fn source_replacement_constraints(kind: ProtocolKind) -> Vec<ObservableConstraint> {
    let idb = identity(kind.bob_dim());
    let mut out: Vec<ObservableConstraint> = [(1, "srep_x"), (2, "srep_y"), (3, "srep_z")]
        .into_iter()
        .map(|(j, label)| {
            let op = HermitianOperator::new(tensor(&pauli(j), &idb)).expect("Pauli products are Hermitian");
            ObservableConstraint::equality(op, 0.0, label)
        })
        .collect();
    let tr = HermitianOperator::new(identity(2 * kind.bob_dim())).expect("identity is Hermitian");
    out.push(ObservableConstraint::equality(tr, 1.0, "trace"));
    out
}
