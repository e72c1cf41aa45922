//! Scenario configuration and the batch computations behind the command-line
//! tool: key-rate sweeps, the qubit and decoy verdict grids, Cascade batches
//! and decoy yield bounds. Results are collected in sweep order, so output is
//! byte-identical for a given configuration.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    leakage_summary, random_pair, reconstruct_bob_messages, run_cascade, CascadeParams, CascadeTranscript,
    ErrorString,
};
use crate::channel::{simulate_decoy_tables, simulate_qubit_table, ChannelScenario, StatisticsTable};
use crate::decoy::{
    assemble_interval_constraints, photon_split_keyrate, solve_yield_bounds, zero_photon_pass_lower, PhotonCutoff,
    YieldBounds,
};
use crate::error::{Error, Result};
use crate::protocol::{build_constraints, build_maps, ConstraintMode, GrainingChoice, ProtocolKind};
use crate::solver::{assemble_keyrates, compare, Comparison, KeyRateRow, SolveResult, SolverOptions, VerdictKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Theta,
    Q,
    Eta,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::Theta => "theta_deg",
            SweepVariable::Q => "q",
            SweepVariable::Eta => "eta",
        })
    }
}

/// Inclusive range `start, start + step, ..., <= stop`. Angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            return Err(Error::Config(format!(
                "sweep needs step > 0 and stop >= start (start {}, stop {}, step {})",
                self.start, self.stop, self.step
            )));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeOptions {
    pub n: usize,
    pub e: Vec<f64>,
    /// Number of seeded sessions per error rate.
    pub seeds: u64,
    pub first_seed: u64,
    /// Overrides the default first block size.
    pub k1: Option<usize>,
    pub passes: usize,
    /// Write the transcript of the first session of each error rate.
    pub export_transcripts: bool,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        CascadeOptions {
            n: 10_000,
            e: vec![0.01, 0.02, 0.05, 0.1],
            seeds: 100,
            first_seed: 0,
            k1: None,
            passes: 4,
            export_transcripts: false,
        }
    }
}

/// Channel grid of the verdict tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableOptions {
    /// Misalignment angles of the qubit table, degrees.
    pub thetas_deg: Vec<f64>,
    pub q: f64,
    pub lambda_rep: f64,
    /// `sin^2` of the misalignment angle in the decoy table.
    pub sin2_theta: f64,
    /// Transmittances of the lossy decoy columns.
    pub etas: Vec<f64>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { thetas_deg: vec![5.0, 10.0, 15.0], q: 0.1, lambda_rep: 0.2, sin2_theta: 0.06, etas: vec![0.5, 0.1] }
    }
}

/// Everything one command needs. Every field has a default, so `{}` is a
/// valid configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    pub theta_deg: f64,
    pub q: f64,
    /// Whether the replacement channel is applied with probability `lambda_rep`.
    pub replacement: bool,
    pub lambda_rep: f64,
    pub eta: f64,
    pub intensities: Vec<f64>,
    pub gradings: Vec<GrainingChoice>,
    pub sweep: Option<Sweep>,
    pub solver: SolverOptions,
    pub photon_cutoff: usize,
    /// Error-correction efficiency used in the key rates.
    pub f_eff: f64,
    pub cascade: CascadeOptions,
    pub table: TableOptions,
    /// Seed for randomized checks.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: ProtocolKind::Qubit,
            theta_deg: 0.0,
            q: 0.0,
            replacement: false,
            lambda_rep: 0.2,
            eta: 1.0,
            intensities: vec![0.5, 0.1, 0.001],
            gradings: GrainingChoice::ALL.to_vec(),
            sweep: None,
            solver: SolverOptions::default(),
            photon_cutoff: PhotonCutoff::default().n_max,
            f_eff: 1.2,
            cascade: CascadeOptions::default(),
            table: TableOptions::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Parses JSON; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        prob("q", self.q)?;
        prob("lambda_rep", self.lambda_rep)?;
        prob("eta", self.eta)?;
        prob("table.q", self.table.q)?;
        prob("table.lambda_rep", self.table.lambda_rep)?;
        prob("table.sin2_theta", self.table.sin2_theta)?;
        for &eta in &self.table.etas {
            prob("table.etas", eta)?;
        }
        if self.gradings.is_empty() {
            return Err(Error::Config("gradings must not be empty".into()));
        }
        if self.intensities.is_empty() || self.intensities.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config("intensities must be a non-empty list of positive values".into()));
        }
        if self.f_eff < 1.0 {
            return Err(Error::Config(format!("f_eff = {} is below 1", self.f_eff)));
        }
        if !(self.solver.gap_target > 0.0) || self.solver.max_iters == 0 || !(self.solver.clip > 0.0) {
            return Err(Error::Config("solver needs gap_target > 0, max_iters > 0, clip > 0".into()));
        }
        if self.photon_cutoff < 1 {
            return Err(Error::Config("photon_cutoff must be at least 1".into()));
        }
        if let Some(s) = &self.sweep {
            s.points()?;
        }
        for &e in &self.cascade.e {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::Config(format!("cascade.e = {e} is not in (0, 0.5)")));
            }
        }
        if self.cascade.n == 0 || self.cascade.seeds == 0 || self.cascade.passes == 0 {
            return Err(Error::Config("cascade needs n, seeds and passes above zero".into()));
        }
        if self.cascade.k1.is_some_and(|k| k < 2) {
            return Err(Error::Config("cascade.k1 must be at least 2".into()));
        }
        Ok(())
    }

    fn scenario(&self) -> ChannelScenario {
        let lambda = if self.replacement { self.lambda_rep } else { 0.0 };
        let theta = self.theta_deg.to_radians();
        match self.protocol {
            ProtocolKind::Qubit => ChannelScenario::qubit(theta, self.q, lambda),
            ProtocolKind::Decoy => ChannelScenario::decoy(theta, self.eta, lambda, self.intensities.clone()),
        }
    }

    fn protocol_name(&self) -> &'static str {
        match self.protocol {
            ProtocolKind::Qubit => "qubit",
            ProtocolKind::Decoy => "decoy",
        }
    }

    fn cutoff(&self) -> PhotonCutoff {
        PhotonCutoff { n_max: self.photon_cutoff }
    }
}

/// Sifted pass probability and QBER of a table's first (signal) grid.
pub fn sifted_error_rate(stats: &StatisticsTable) -> (f64, f64) {
    let g = stats.grid(0);
    let mut pass = 0.0;
    let mut errors = 0.0;
    for block in [0usize, 2] {
        for x in block..block + 2 {
            for y in block..block + 2 {
                pass += g[x][y];
                if x != y {
                    errors += g[x][y];
                }
            }
        }
    }
    (pass, if pass > 0.0 { errors / pass } else { 0.0 })
}

fn scaled(r: &SolveResult, factor: f64, offset: f64) -> SolveResult {
    SolveResult { upper: factor * r.upper + offset, lower: factor * r.lower + offset, ..r.clone() }
}

/// Solves `F` and `F'` for one scenario and graining. Decoy scenarios go
/// through the yield LPs and are solved on the single-photon subspace.
pub fn solve_scenario(
    s: &ChannelScenario,
    graining: GrainingChoice,
    opts: &SolverOptions,
    cutoff: PhotonCutoff,
) -> Result<Comparison> {
    let constraints = match s.protocol {
        ProtocolKind::Qubit => {
            let t = simulate_qubit_table(s)?;
            build_constraints(&t.cell_table(), graining, ConstraintMode::Equality)?
        }
        ProtocolKind::Decoy => {
            let b = solve_yield_bounds(&simulate_decoy_tables(s)?, cutoff)?;
            assemble_interval_constraints(&b, graining)?
        }
    };
    compare(&build_maps(s.protocol, false), &build_maps(s.protocol, true), &constraints, opts)
}

/// Key rates for one scenario; decoy objectives are combined with the
/// zero-photon term before rates are formed.
fn keyrate_row(id: String, s: &ChannelScenario, graining: GrainingChoice, cfg: &ScenarioConfig) -> Result<KeyRateRow> {
    let cmp = solve_scenario(s, graining, &cfg.solver, cfg.cutoff())?;
    let (stats, (f, fp)) = match s.protocol {
        ProtocolKind::Qubit => (simulate_qubit_table(s)?, (cmp.f.clone(), cmp.f_prime.clone())),
        ProtocolKind::Decoy => {
            let stats = simulate_decoy_tables(s)?;
            let p_pass0 = zero_photon_pass_lower(&stats, cfg.cutoff())?.min(1.0);
            let split = photon_split_keyrate(cmp.f.lower.max(0.0), cmp.f_prime.lower.max(0.0), p_pass0, s.intensities[0])?;
            let f = scaled(&cmp.f, split.p1, split.f_zero_photon);
            let fp = scaled(&cmp.f_prime, split.p1, split.fprime_zero_photon);
            (stats, (f, fp))
        }
    };
    let (p_pass, e) = sifted_error_rate(&stats);
    let report = assemble_keyrates(&f, &fp, e.min(0.5), cfg.f_eff, p_pass.min(1.0))?;
    Ok(KeyRateRow::new(id, &report, cmp.verdict))
}

/// One row per sweep point and graining, in sweep order.
pub fn cmd_keyrate(cfg: &ScenarioConfig) -> Result<Vec<KeyRateRow>> {
    cfg.validate()?;
    let points: Vec<Option<f64>> = match &cfg.sweep {
        Some(s) => s.points()?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for p in &points {
        for &g in &cfg.gradings {
            let mut c = cfg.clone();
            let mut id = format!("{}:{}", cfg.protocol_name(), g);
            if let (Some(v), Some(s)) = (p, &cfg.sweep) {
                match s.variable {
                    SweepVariable::Theta => c.theta_deg = *v,
                    SweepVariable::Q => c.q = *v,
                    SweepVariable::Eta => c.eta = *v,
                }
                id.push_str(&format!(":{}={}", s.variable, v));
            }
            jobs.push((id, c.scenario(), g));
        }
    }
    jobs.into_par_iter().map(|(id, s, g)| keyrate_row(id, &s, g, cfg)).collect()
}

/// Bounds and verdict at one gridpoint of a verdict table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecord {
    pub channel: String,
    pub graining: String,
    pub point: String,
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
}

/// Verdict per (graining, channel) cell plus the gridpoint bounds behind it.
#[derive(Clone, Debug)]
pub struct VerdictGrid {
    pub channels: Vec<String>,
    /// Rows in coarse, sifted fine, fine order.
    pub rows: Vec<(GrainingChoice, Vec<VerdictKind>)>,
    pub points: Vec<PointRecord>,
}

impl VerdictGrid {
    pub fn cell(&self, graining: GrainingChoice, channel: &str) -> Option<VerdictKind> {
        let col = self.channels.iter().position(|c| c == channel)?;
        self.rows.iter().find(|(g, _)| *g == graining).map(|(_, v)| v[col])
    }

    /// `graining,<channel>...` with one symbol per cell.
    pub fn grid_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["graining".to_string()];
        header.extend(self.channels.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (g, cells) in &self.rows {
            let mut rec = vec![g.to_string()];
            rec.extend(cells.iter().map(|v| v.symbol().to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn points_csv(&self) -> Result<String> {
        rows_to_csv(&self.points)
    }

    /// Grid as aligned text for terminals.
    pub fn render(&self) -> String {
        let mut s = format!("{:<12}", "");
        for c in &self.channels {
            s.push_str(&format!(" {c:>14}"));
        }
        s.push('\n');
        for (g, cells) in &self.rows {
            s.push_str(&format!("{:<12}", g.to_string()));
            for v in cells {
                s.push_str(&format!(" {:>14}", v.symbol()));
            }
            s.push('\n');
        }
        s
    }
}

/// `>` if any gridpoint separates, `=` if all overlap, `?` otherwise.
pub fn aggregate(verdicts: &[VerdictKind]) -> VerdictKind {
    if verdicts.contains(&VerdictKind::StrictlyGreater) {
        VerdictKind::StrictlyGreater
    } else if !verdicts.is_empty() && verdicts.iter().all(|&v| v == VerdictKind::Equal) {
        VerdictKind::Equal
    } else {
        VerdictKind::Inconclusive
    }
}

fn run_grid(
    channels: Vec<(String, Vec<(String, ChannelScenario)>)>,
    opts: &SolverOptions,
    cutoff: PhotonCutoff,
) -> Result<VerdictGrid> {
    let mut jobs = Vec::new();
    for (name, points) in &channels {
        for g in GrainingChoice::ALL {
            for (label, s) in points {
                jobs.push((name.clone(), g, label.clone(), s.clone()));
            }
        }
    }
    let results: Vec<Result<PointRecord>> = jobs
        .into_par_iter()
        .map(|(channel, g, point, s)| {
            let c = solve_scenario(&s, g, opts, cutoff)?;
            Ok(PointRecord {
                channel,
                graining: g.to_string(),
                point,
                f_low: c.f.lower,
                f_up: c.f.upper,
                fp_low: c.f_prime.lower,
                fp_up: c.f_prime.upper,
                verdict: c.verdict.kind.symbol(),
                margin: c.verdict.margin,
            })
        })
        .collect();
    let points: Vec<PointRecord> = results.into_iter().collect::<Result<_>>()?;
    let kind_of = |c: char| match c {
        '=' => VerdictKind::Equal,
        '>' => VerdictKind::StrictlyGreater,
        _ => VerdictKind::Inconclusive,
    };
    let names: Vec<String> = channels.iter().map(|(n, _)| n.clone()).collect();
    let rows = GrainingChoice::ALL
        .iter()
        .map(|&g| {
            let cells = names
                .iter()
                .map(|n| {
                    let v: Vec<VerdictKind> = points
                        .iter()
                        .filter(|p| &p.channel == n && p.graining == g.to_string())
                        .map(|p| kind_of(p.verdict))
                        .collect();
                    aggregate(&v)
                })
                .collect();
            (g, cells)
        })
        .collect();
    Ok(VerdictGrid { channels: names, rows, points })
}

/// Qubit verdict grid: misalignment, depolarization, both, and both plus
/// replacement, each over the configured angles.
pub fn cmd_table2(cfg: &ScenarioConfig) -> Result<VerdictGrid> {
    cfg.validate()?;
    let t = &cfg.table;
    if t.thetas_deg.is_empty() {
        return Err(Error::Config("table.thetas_deg must not be empty".into()));
    }
    let over_theta = |q: f64, lambda: f64| -> Vec<(String, ChannelScenario)> {
        t.thetas_deg
            .iter()
            .map(|&d| (format!("theta_deg={d}"), ChannelScenario::qubit(d.to_radians(), q, lambda)))
            .collect()
    };
    let channels = vec![
        ("misalignment".to_string(), over_theta(0.0, 0.0)),
        ("depolarization".to_string(), vec![(format!("q={}", t.q), ChannelScenario::qubit(0.0, t.q, 0.0))]),
        ("mis_depol".to_string(), over_theta(t.q, 0.0)),
        ("mis_depol_replace".to_string(), over_theta(t.q, t.lambda_rep)),
    ];
    run_grid(channels, &cfg.solver, cfg.cutoff())
}

/// Decoy verdict grid: loss, misalignment, both, and both plus replacement.
pub fn cmd_table4(cfg: &ScenarioConfig) -> Result<VerdictGrid> {
    cfg.validate()?;
    let t = &cfg.table;
    if t.etas.is_empty() {
        return Err(Error::Config("table.etas must not be empty".into()));
    }
    let theta = t.sin2_theta.sqrt().asin();
    let mus = cfg.intensities.clone();
    let over_eta = |theta: f64, lambda: f64| -> Vec<(String, ChannelScenario)> {
        t.etas
            .iter()
            .map(|&eta| (format!("eta={eta}"), ChannelScenario::decoy(theta, eta, lambda, mus.clone())))
            .collect()
    };
    let channels = vec![
        ("loss".to_string(), over_eta(0.0, 0.0)),
        (
            "misalignment".to_string(),
            vec![(format!("sin2_theta={}", t.sin2_theta), ChannelScenario::decoy(theta, 1.0, 0.0, mus.clone()))],
        ),
        ("loss_mis".to_string(), over_eta(theta, 0.0)),
        ("loss_mis_replace".to_string(), over_eta(theta, t.lambda_rep)),
    ];
    run_grid(channels, &cfg.solver, cfg.cutoff())
}

/// One row of the Cascade batch summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeRow {
    pub seed: u64,
    pub n: usize,
    pub e: f64,
    #[serde(rename = "deltaA")]
    pub delta_a: f64,
    #[serde(rename = "deltaB")]
    pub delta_b: f64,
    pub f_emp: f64,
    pub residual_errors: usize,
    pub reconstruction_ok: bool,
}

/// Output of a Cascade batch: summary rows and the optional transcripts.
#[derive(Clone, Debug)]
pub struct CascadeBatch {
    pub rows: Vec<CascadeRow>,
    /// `(e, seed, transcript)` for the first session of each error rate.
    pub transcripts: Vec<(f64, u64, CascadeTranscript)>,
}

/// Runs one seeded session: `(x, y)` drawn from the seed, Cascade seeded by
/// the same value.
pub fn cascade_session(n: usize, e: f64, seed: u64, k1: Option<usize>, passes: usize) -> Result<(CascadeRow, CascadeTranscript)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = random_pair(n, e, &mut rng);
    let mut p = CascadeParams::with_defaults(n, e, seed);
    if let Some(k) = k1 {
        p.k1 = k;
    }
    p.passes = passes;
    let t = run_cascade(&x, &y, &p)?;
    let w = ErrorString::new(&x, &y)?;
    let reconstruction_ok = reconstruct_bob_messages(&t.alice_messages(), &w)? == t.bob_messages();
    let leak = leakage_summary(&t, e)?;
    let row = CascadeRow {
        seed,
        n,
        e,
        delta_a: leak.delta_a,
        delta_b: leak.delta_b,
        f_emp: leak.f_emp.unwrap_or(f64::NAN),
        residual_errors: t.residual_errors,
        reconstruction_ok,
    };
    Ok((row, t))
}

pub fn cmd_cascade(cfg: &ScenarioConfig) -> Result<CascadeBatch> {
    cfg.validate()?;
    let c = &cfg.cascade;
    let jobs: Vec<(f64, u64)> =
        c.e.iter().flat_map(|&e| (c.first_seed..c.first_seed + c.seeds).map(move |s| (e, s))).collect();
    let results: Vec<Result<(CascadeRow, Option<CascadeTranscript>)>> = jobs
        .into_par_iter()
        .map(|(e, seed)| {
            let (row, t) = cascade_session(c.n, e, seed, c.k1, c.passes)?;
            let keep = c.export_transcripts && seed == c.first_seed;
            Ok((row, keep.then_some(t)))
        })
        .collect();
    let mut rows = Vec::new();
    let mut transcripts = Vec::new();
    for r in results {
        let (row, t) = r?;
        if let Some(t) = t {
            transcripts.push((row.e, row.seed, t));
        }
        rows.push(row);
    }
    Ok(CascadeBatch { rows, transcripts })
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Yield bounds of the configured decoy scenario.
pub fn cmd_decoy_bounds(cfg: &ScenarioConfig) -> Result<YieldBounds> {
    cfg.validate()?;
    let mut c = cfg.clone();
    c.protocol = ProtocolKind::Decoy;
    let stats = simulate_decoy_tables(&c.scenario())?;
    solve_yield_bounds(&stats, cfg.cutoff())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Serializes rows with a header taken from the field names.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    finish(w)
}
