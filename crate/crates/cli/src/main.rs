use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_keyrate::experiment::{
    cmd_cascade, cmd_decoy_bounds, cmd_keyrate, cmd_table2, cmd_table4, median, rows_to_csv, ScenarioConfig,
    VerdictGrid,
};
use cascade_keyrate::solver::VerdictKind;
use cascade_keyrate::verify::run_all;
use cascade_keyrate::Error;
use clap::{Parser, Subcommand};

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cascade-lab", version, about = "Key-rate bounds with and without the announced error string")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON scenario configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `seed` and `cascade.first_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bounds on F and F', the verdict and the three key rates per sweep point.
    Keyrate,
    /// Verdict grid for qubit BB84.
    Table2,
    /// Verdict grid for decoy BB84.
    Table4,
    /// Batch of seeded Cascade sessions.
    Cascade,
    /// Single-photon yield bounds from the decoy linear programs.
    DecoyBounds,
    /// Invariant suite with negative controls.
    Verify,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
            _ => EXIT_INVARIANT,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_error(message: String) -> Failure {
    Failure { code: EXIT_CONFIG, message }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.cascade.first_seed = seed;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure { code: EXIT_INVARIANT, message: format!("{}: {e}", path.display()) })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn grid_outcome(dir: &Path, name: &str, grid: &VerdictGrid) -> Result<u8, Failure> {
    write(dir, &format!("{name}.csv"), &grid.grid_csv()?)?;
    write(dir, &format!("{name}_points.csv"), &grid.points_csv()?)?;
    print!("{}", grid.render());
    let inconclusive = grid.rows.iter().flat_map(|(_, cells)| cells).any(|&v| v == VerdictKind::Inconclusive);
    Ok(if inconclusive { EXIT_INCONCLUSIVE } else { 0 })
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(format!("--jobs {n}: {e}")))?;
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure { code: EXIT_INVARIANT, message: format!("{}: {e}", cli.out.display()) })?;
    let dir = cli.out.as_path();
    match cli.command {
        Command::Keyrate => {
            let rows = cmd_keyrate(&cfg)?;
            write(dir, "keyrate.csv", &rows_to_csv(&rows)?)?;
            let open = rows.iter().filter(|r| r.verdict == '?').count();
            if open > 0 {
                eprintln!("{open} of {} rows inconclusive", rows.len());
                return Ok(EXIT_INCONCLUSIVE);
            }
            Ok(0)
        }
        Command::Table2 => grid_outcome(dir, "table2", &cmd_table2(&cfg)?),
        Command::Table4 => grid_outcome(dir, "table4", &cmd_table4(&cfg)?),
        Command::Cascade => {
            let batch = cmd_cascade(&cfg)?;
            write(dir, "cascade.csv", &rows_to_csv(&batch.rows)?)?;
            for (e, seed, t) in &batch.transcripts {
                write(dir, &format!("transcript_e{e}_seed{seed}.csv"), &t.export())?;
            }
            for &e in &cfg.cascade.e {
                let f: Vec<f64> = batch.rows.iter().filter(|r| r.e == e).map(|r| r.f_emp).collect();
                println!("e = {e}: median f_emp {:.4} over {} sessions", median(&f), f.len());
            }
            let broken = batch
                .rows
                .iter()
                .filter(|r| !r.reconstruction_ok || r.delta_a != r.delta_b)
                .count();
            let uncorrected = batch.rows.iter().filter(|r| r.residual_errors > 0).count();
            println!("{uncorrected} of {} sessions ended with residual errors", batch.rows.len());
            if broken > 0 {
                eprintln!("{broken} sessions failed reconstruction or leak equality");
                return Ok(EXIT_INVARIANT);
            }
            Ok(0)
        }
        Command::DecoyBounds => {
            let b = cmd_decoy_bounds(&cfg)?;
            write(dir, "decoy_bounds.csv", &b.to_csv()?)?;
            println!("max duality gap {:.3e}", b.max_duality_gap);
            Ok(0)
        }
        Command::Verify => {
            let checks = run_all(cfg.seed)?;
            for c in &checks {
                println!("{} {}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            write(dir, "verify.csv", &rows_to_csv(&checks)?)?;
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_INVARIANT })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
