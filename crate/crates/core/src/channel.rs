//! Channel models that generate the observed statistics tables.
//!
//! Qubit tables follow the entanglement-based picture: `|phi+>` with Bob's half
//! rotated about the Y axis, then depolarized. Decoy tables come from a
//! phase-randomized coherent-state model with a passive 50/50 basis choice and
//! four threshold detectors. Both apply the same row-replacement rule: with
//! probability `lambda_rep` the state leaving Alice's lab is replaced by the
//! `H` state, so every row becomes `(1 - lambda) row_x + lambda row_H`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{cr, identity, inner, outer, partial_trace, real_matrix, tensor, CMatrix};
use crate::protocol::{
    alice_povm, bob_povm, CellTable, ProtocolKind, DECOY_LABELS, QUBIT_LABELS,
};

/// Rows of a statistics table indexed by Alice's symbol, columns by Bob's outcome.
pub type Grid = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScenario {
    /// Misalignment angle in radians.
    pub theta: f64,
    /// Depolarization probability.
    pub q: f64,
    /// Replacement probability.
    pub lambda_rep: f64,
    /// Channel transmittance.
    pub eta: f64,
    /// Decoy intensities, strictly decreasing.
    pub intensities: Vec<f64>,
    pub protocol: ProtocolKind,
}

impl ChannelScenario {
    pub fn qubit(theta: f64, q: f64, lambda_rep: f64) -> Self {
        Self { theta, q, lambda_rep, eta: 1.0, intensities: Vec::new(), protocol: ProtocolKind::Qubit }
    }

    pub fn decoy(theta: f64, eta: f64, lambda_rep: f64, intensities: Vec<f64>) -> Self {
        Self { theta, q: 0.0, lambda_rep, eta, intensities, protocol: ProtocolKind::Decoy }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        prob("q", self.q)?;
        prob("lambda_rep", self.lambda_rep)?;
        if !(self.eta >= 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {} is not in [0, 1]", self.eta)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        if self.protocol == ProtocolKind::Decoy {
            if self.intensities.is_empty() {
                return Err(Error::InvalidParameter("decoy scenario needs intensities".into()));
            }
            if self.intensities.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                return Err(Error::InvalidParameter("intensities must be positive".into()));
            }
            if self.intensities.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::InvalidParameter("intensities must be strictly decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Observed statistics: one 4x4 table for qubits, one 4x5 table per intensity
/// (last column is no-detection) for decoy BB84. Entries are joint
/// probabilities `Pr(x) * Pr(y | x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsTable {
    pub protocol: ProtocolKind,
    /// Empty for qubit tables.
    pub intensities: Vec<f64>,
    pub tables: Vec<Grid>,
}

impl StatisticsTable {
    /// The single qubit table, or the table at `intensities[i]` for decoy.
    pub fn grid(&self, i: usize) -> &Grid {
        &self.tables[i]
    }

    /// Exact cell table for the solver (qubit statistics only).
    pub fn cell_table(&self) -> CellTable {
        CellTable::exact(self.protocol, &self.tables[0])
    }

    /// CSV text of table `i`: header row of Bob labels, one row per Alice symbol.
    pub fn to_csv(&self, i: usize) -> Result<String> {
        let cols: &[&str] = match self.protocol {
            ProtocolKind::Qubit => &QUBIT_LABELS,
            ProtocolKind::Decoy => &DECOY_LABELS,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["alice".to_string()];
        header.extend(cols.iter().map(|c| c.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (x, row) in self.tables[i].iter().enumerate() {
            let mut rec = vec![QUBIT_LABELS[x].to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.15e}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `R_y(theta)` acting on a polarization qubit.
pub fn rotation(theta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    real_matrix(2, 2, &[c, -s, s, c])
}

fn phi_plus() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    outer(&real_matrix(4, 1, &[h, 0.0, 0.0, h]))
}

/// Shared two-qubit state after misalignment on Bob's side and depolarization.
pub fn qubit_channel_state(theta: f64, q: f64) -> CMatrix {
    let u = tensor(&identity(2), &rotation(theta));
    let rotated = &u * phi_plus() * u.adjoint();
    let alice = partial_trace(&rotated, &[2, 2], &[0]).expect("two-qubit layout");
    rotated * cr(1.0 - q) + tensor(&alice, &(identity(2) * cr(0.5))) * cr(q)
}

/// `row_x <- (1 - lambda) row_x + lambda row_H` for every row.
pub fn apply_replacement(grid: &Grid, lambda: f64) -> Grid {
    let h = grid[0].clone();
    grid.iter()
        .map(|row| row.iter().zip(&h).map(|(v, hv)| (1.0 - lambda) * v + lambda * hv).collect())
        .collect()
}

/// Qubit table `gamma_xy = Tr((P^A_x (x) P^B_y) rho)` followed by replacement mixing.
pub fn simulate_qubit_table(s: &ChannelScenario) -> Result<StatisticsTable> {
    if s.protocol != ProtocolKind::Qubit {
        return Err(Error::InvalidParameter("simulate_qubit_table needs a qubit scenario".into()));
    }
    s.validate()?;
    let rho = qubit_channel_state(s.theta, s.q);
    let pa = alice_povm();
    let pb = bob_povm(ProtocolKind::Qubit);
    let grid: Grid = (0..4)
        .map(|x| (0..4).map(|y| inner(&tensor(&pa[x], &pb[y]), &rho)).collect())
        .collect();
    Ok(StatisticsTable {
        protocol: ProtocolKind::Qubit,
        intensities: Vec::new(),
        tables: vec![apply_replacement(&grid, s.lambda_rep)],
    })
}

/// Polarization vectors of Alice's four symbols.
fn alice_states() -> [[f64; 2]; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [[1.0, 0.0], [0.0, 1.0], [h, h], [h, -h]]
}

/// `|<d | R x>|^2` for Bob's four detectors `H, V, +, -`.
fn detector_overlaps(theta: f64, x: usize) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    let v = alice_states()[x];
    let rx = [c * v[0] - s * v[1], s * v[0] + c * v[1]];
    let mut out = [0.0; 4];
    for (d, dv) in alice_states().iter().enumerate() {
        let amp = dv[0] * rx[0] + dv[1] * rx[1];
        out[d] = amp * amp;
    }
    out
}

/// `Pr(y | x)` over `H, V, +, -, none` for a coherent pulse of mean photon
/// number `mu`.
pub fn coherent_conditional(theta: f64, eta: f64, mu: f64, x: usize) -> [f64; 5] {
    let overlaps = detector_overlaps(theta, x);
    let click: Vec<f64> = overlaps.iter().map(|o| -(-0.5 * eta * mu * o).exp_m1()).collect();
    let mut out = [0.0; 5];
    for pattern in 0u32..16 {
        let mut p = 1.0;
        for (d, &pc) in click.iter().enumerate() {
            p *= if pattern >> d & 1 == 1 { pc } else { 1.0 - pc };
        }
        if p == 0.0 {
            continue;
        }
        let z = [pattern & 1 == 1, pattern & 2 == 2];
        let xb = [pattern & 4 == 4, pattern & 8 == 8];
        let z_any = z[0] || z[1];
        let x_any = xb[0] || xb[1];
        if !z_any && !x_any {
            out[4] += p;
            continue;
        }
        // each basis that fired is chosen with equal weight
        let weight = if z_any && x_any { 0.5 } else { 1.0 };
        for (base, fired) in [(0usize, z), (2usize, xb)] {
            if !(fired[0] || fired[1]) {
                continue;
            }
            if fired[0] && fired[1] {
                out[base] += 0.5 * weight * p;
                out[base + 1] += 0.5 * weight * p;
            } else {
                out[base + usize::from(fired[1])] += weight * p;
            }
        }
    }
    out
}

/// Decoy tables, one per intensity, with replacement mixing applied rowwise.
pub fn simulate_decoy_tables(s: &ChannelScenario) -> Result<StatisticsTable> {
    if s.protocol != ProtocolKind::Decoy {
        return Err(Error::InvalidParameter("simulate_decoy_tables needs a decoy scenario".into()));
    }
    s.validate()?;
    let tables = s
        .intensities
        .iter()
        .map(|&mu| {
            let grid: Grid = (0..4)
                .map(|x| coherent_conditional(s.theta, s.eta, mu, x).iter().map(|p| 0.25 * p).collect())
                .collect();
            apply_replacement(&grid, s.lambda_rep)
        })
        .collect();
    Ok(StatisticsTable { protocol: ProtocolKind::Decoy, intensities: s.intensities.clone(), tables })
}

/// `Pr(y | x)` for an `n`-photon pulse in the same model. Only `n <= 1` has a
/// closed form that the oracle needs; larger `n` are reached through the
/// Poisson mixture in tests.
pub fn single_photon_conditional(theta: f64, eta: f64, x: usize) -> [f64; 5] {
    let o = detector_overlaps(theta, x);
    [0.5 * eta * o[0], 0.5 * eta * o[1], 0.5 * eta * o[2], 0.5 * eta * o[3], 1.0 - eta]
}

/// Exact single-photon joint table `Pr(x) * gamma^1_{y|x}`, replacement included.
pub fn single_photon_truth(s: &ChannelScenario) -> Result<StatisticsTable> {
    if s.protocol != ProtocolKind::Decoy {
        return Err(Error::InvalidParameter("single_photon_truth needs a decoy scenario".into()));
    }
    s.validate()?;
    let grid: Grid = (0..4)
        .map(|x| single_photon_conditional(s.theta, s.eta, x).iter().map(|p| 0.25 * p).collect())
        .collect();
    Ok(StatisticsTable {
        protocol: ProtocolKind::Decoy,
        intensities: vec![],
        tables: vec![apply_replacement(&grid, s.lambda_rep)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(g: &Grid) -> f64 {
        g.iter().flatten().sum()
    }

    #[test]
    fn noiseless_qubit_table() {
        let t = simulate_qubit_table(&ChannelScenario::qubit(0.0, 0.0, 0.0)).unwrap();
        let g = t.grid(0);
        assert!((g[0][0] - 0.125).abs() < 1e-15);
        assert!(g[0][1].abs() < 1e-15);
        assert!((sum(g) - 1.0).abs() < 1e-12);
        // cross-basis cells are uniform
        assert!((g[0][2] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn qubit_error_rates() {
        let q = 0.13;
        let g = simulate_qubit_table(&ChannelScenario::qubit(0.0, q, 0.0)).unwrap().tables[0].clone();
        let qber_z = (g[0][1] + g[1][0]) / (g[0][0] + g[0][1] + g[1][0] + g[1][1]);
        assert!((qber_z - q / 2.0).abs() < 1e-14);

        let theta = 0.3f64;
        let g = simulate_qubit_table(&ChannelScenario::qubit(theta, 0.0, 0.0)).unwrap().tables[0].clone();
        let qber_z = (g[0][1] + g[1][0]) / (g[0][0] + g[0][1] + g[1][0] + g[1][1]);
        assert!((qber_z - theta.sin().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn replacement_matches_state_level_oracle() {
        // Replacing Alice's emitted state by H is the same as preparing H with
        // probability lambda: in the entanglement picture Alice's outcome x is
        // kept while Bob receives the channel image of |H>.
        let (theta, q, lam) = (0.2, 0.1, 0.3);
        let t = simulate_qubit_table(&ChannelScenario::qubit(theta, q, lam)).unwrap();
        let pb = bob_povm(ProtocolKind::Qubit);
        let r = rotation(theta);
        let h = real_matrix(2, 1, &[1.0, 0.0]);
        let bob_h = &r * outer(&h) * r.adjoint() * cr(1.0 - q) + identity(2) * cr(0.5 * q);
        let plain = simulate_qubit_table(&ChannelScenario::qubit(theta, q, 0.0)).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let px = 0.25;
                let replaced = px * inner(&pb[y], &bob_h);
                let expect = (1.0 - lam) * plain.tables[0][x][y] + lam * replaced;
                assert!((t.tables[0][x][y] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decoy_limits() {
        let s = ChannelScenario::decoy(0.1, 0.0, 0.0, vec![0.5, 0.1]);
        let t = simulate_decoy_tables(&s).unwrap();
        for g in &t.tables {
            for row in g {
                assert!((row[4] - 0.25).abs() < 1e-15);
                assert!(row[..4].iter().all(|&v| v == 0.0));
            }
        }
        let s = ChannelScenario::decoy(0.1, 0.7, 0.2, vec![1e-6]);
        let t = simulate_decoy_tables(&s).unwrap();
        for row in &t.tables[0] {
            assert!((row.iter().sum::<f64>() - 0.25).abs() < 1e-12);
            assert!((row[4] - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn single_photon_branch() {
        let t = single_photon_truth(&ChannelScenario::decoy(0.0, 1.0, 0.0, vec![0.5])).unwrap();
        let g = &t.tables[0];
        assert!((g[0][0] - 0.125).abs() < 1e-15);
        assert_eq!(g[0][1], 0.0);
        assert_eq!(g[0][4], 0.0);

        let half = single_photon_truth(&ChannelScenario::decoy(0.0, 0.5, 0.0, vec![0.5])).unwrap();
        assert!((half.tables[0][0][0] - 0.0625).abs() < 1e-15);
        assert!((half.tables[0][0][4] - 0.125).abs() < 1e-15);

        let sym = single_photon_truth(&ChannelScenario::decoy(0.2, 0.4, 0.0, vec![0.5])).unwrap();
        assert!((sym.tables[0][2][3] - sym.tables[0][3][2]).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let t = simulate_qubit_table(&ChannelScenario::qubit(0.0, 0.0, 0.0)).unwrap();
        let text = t.to_csv(0).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("alice,H,V,+,-"));
        assert!(lines.next().unwrap().starts_with("H,1.25"));
    }

    #[test]
    fn scenario_validation() {
        let mut s = ChannelScenario::decoy(0.0, 0.5, 0.0, vec![0.1, 0.5]);
        assert!(s.validate().is_err());
        s.intensities = vec![0.5, 0.1];
        assert!(s.validate().is_ok());
        s.lambda_rep = 1.5;
        assert!(s.validate().is_err());
    }
}
