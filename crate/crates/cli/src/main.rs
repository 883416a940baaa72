//! `tilecast` command-line driver.
//!
//! Exit status: 0 success, 1 configuration or I/O error, 2 infeasible
//! instance, 3 instance above the oracle limits, 4 oracle invariant broken.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tilecast::problem::psnr_metrics;
use tilecast::sim::write_records;
use tilecast::solvers::{oracle_exhaustive, solve_cr, solve_dc, upper_bound};
use tilecast::{Error, Method, Preset, ProblemInstance, SolveOutcome};

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "tilecast", version, about = "Multi-quality multicast of tiled 360-degree video over TDMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with one method.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Method name; defaults to the first configured method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Average every configured method over channel realizations.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Restrict the sweep to one method.
        #[arg(long)]
        method: Option<String>,
        /// Swept resource (`bandwidth_hz`, `energy_j` or `frame_s`) with its default grid.
        #[arg(long)]
        param: Option<String>,
        /// Channel realizations per grid point.
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Compare the heuristics with exhaustive enumeration on a small instance.
    Oracle {
        #[command(flatten)]
        source: Source,
    },
    /// Write the configuration of a preset scenario.
    GenScenario {
        #[arg(long, value_parser = parse_preset, default_value = "paper")]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Overrides `output.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.path`; standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) => 2,
            Error::CapExceeded(_) => 3,
            Error::Domain(_) | Error::Solver(_) | Error::Io(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("cannot write {}: {e}", path.display()) }
}

struct Run {
    config: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
    preset: Option<Preset>,
}

impl Source {
    fn load(self) -> Result<Run, Failure> {
        let config = match (&self.config, self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(p)) => RunConfig::preset(p),
            (None, None) => unreachable!("clap requires one source"),
        };
        let seed = self.seed.unwrap_or(config.output.seed);
        let out = self.out.or_else(|| config.output.path.clone().map(PathBuf::from));
        Ok(Run { config, seed, out, preset: self.preset })
    }
}

impl Run {
    fn metadata(&self, command: &str) -> Vec<(String, String)> {
        let s = &self.config.solver;
        let mut meta = vec![
            ("tilecast".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), command.to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        if let Some(p) = self.preset {
            meta.push(("preset".to_string(), p.to_string()));
        }
        let r = &self.config.resources;
        meta.push(("resources".to_string(), format!("frame_s={} bandwidth_hz={} energy_j={}", r.frame_s, r.bandwidth_hz, r.energy_j)));
        meta.push((
            "settings".to_string(),
            format!(
                "kkt_tol={} gap_tol={} rho_init={} rho_growth={} rho_max={} binary_tol={} objective_tol={} feasibility_tol={} baseline1_energy_split={}",
                s.kkt_tol, s.gap_tol, s.rho_init, s.rho_growth, s.rho_max, s.binary_tol, s.objective_tol, s.feasibility_tol, s.baseline1_energy_split
            ),
        ));
        meta
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place; prints to standard output without a path.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(path, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

fn header(meta: &[(String, String)]) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn solve_report(inst: &ProblemInstance, out: &SolveOutcome, record_time: bool) -> String {
    let solved = out.instance(inst);
    let psnr = psnr_metrics(&out.selection, solved.profile(), solved.ladder());
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    let mut s = String::new();
    writeln!(s, "[summary]").unwrap();
    writeln!(s, "method,utility,upper_bound,gap_bound,mean_psnr_db,feasible,solve_time_s").unwrap();
    let time = if record_time { out.elapsed.as_secs_f64().to_string() } else { String::new() };
    writeln!(
        s,
        "{},{},{},{},{},{},{}",
        out.method,
        out.utility,
        opt(out.upper_bound),
        opt(out.gap_bound),
        psnr.mean,
        out.feasibility.feasible,
        time
    )
    .unwrap();
    writeln!(s, "\n[selection]\nrow,col,level").unwrap();
    for (t, l) in out.selection.integer_levels() {
        writeln!(s, "{},{},{}", t.row, t.col, l).unwrap();
    }
    writeln!(s, "\n[allocation]\ngroup,time_s,power_w,energy_j").unwrap();
    let power = out.allocation.power();
    for (i, (t, e)) in out.allocation.time().iter().zip(out.allocation.energy()).enumerate() {
        writeln!(s, "{},{},{},{}", i + 1, t, power[i], e).unwrap();
    }
    writeln!(s, "\n[residuals]\nconstraint,residual,scale").unwrap();
    for r in &out.feasibility.residuals {
        writeln!(s, "{},{},{}", r.constraint, r.value, r.scale).unwrap();
    }
    s
}

fn cmd_solve(run: Run, method: Option<String>) -> Result<(), Failure> {
    let method = match method {
        Some(m) => m.parse::<Method>().map_err(|e| Failure { code: 1, message: e.to_string() })?,
        None => run.config.methods()?[0],
    };
    let inst = run.config.instance(run.seed)?;
    let settings = run.config.settings()?;
    let mut meta = run.metadata("solve");
    meta.push(("method".to_string(), method.to_string()));
    let body = if method == Method::UpperBound {
        format!("[summary]\nmethod,upper_bound\n{},{}\n", method, upper_bound(&inst, &settings)?)
    } else {
        let out = tilecast::solve(method, &inst, &settings)?;
        if !out.feasibility.feasible {
            return Err(Failure { code: 2, message: format!("{method} returned an allocation violating its constraints") });
        }
        eprintln!("{method}: utility {} of bound {}", out.utility, out.upper_bound.map_or("n/a".to_string(), |v| format!("{v:.4}")));
        solve_report(&inst, &out, run.config.output.record_time)
    };
    emit(run.out.as_deref(), &(header(&meta) + &body))
}

fn cmd_sweep(mut run: Run, method: Option<String>, param: Option<String>, realizations: Option<usize>) -> Result<(), Failure> {
    if let Some(p) = param {
        let threads = run.config.sweep.as_ref().map_or(0, |s| s.threads);
        let realizations = run.config.sweep.as_ref().map_or(100, |s| s.realizations);
        run.config.sweep = Some(config::SweepConfig { param: p, values: None, realizations, threads });
    }
    if let (Some(n), Some(sweep)) = (realizations, run.config.sweep.as_mut()) {
        sweep.realizations = n;
    }
    if let Some(m) = method {
        m.parse::<Method>().map_err(|e| Failure { code: 1, message: e.to_string() })?;
        run.config.solver.methods = vec![m];
    }
    let spec = run.config.sweep_spec(run.seed)?;
    let mut records = tilecast::run_sweep(&spec)?;
    if !run.config.output.record_time {
        for r in &mut records {
            r.mean_solve_time_s = f64::NAN;
        }
    }
    let mut meta = run.metadata("sweep");
    meta.push(("realizations".to_string(), spec.realizations.to_string()));
    let mut buf = Vec::new();
    write_records(&mut buf, &meta, &records)?;
    emit(run.out.as_deref(), &String::from_utf8(buf).expect("csv output is utf-8"))?;
    for &m in &spec.methods {
        let rs: Vec<_> = records.iter().filter(|r| r.method == m).collect();
        let line: Vec<String> = rs.iter().map(|r| format!("{}={:.2}", r.value, r.mean_utility)).collect();
        let failures: usize = rs.iter().map(|r| r.failures()).sum();
        eprintln!("{m}: {} ({failures} infeasible)", line.join(" "));
    }
    Ok(())
}

fn cmd_oracle(run: Run) -> Result<(), Failure> {
    let inst = run.config.instance(run.seed)?;
    let settings = run.config.settings()?;
    let oracle = oracle_exhaustive(&inst, run.config.oracle_caps())?;
    let cr = solve_cr(&inst, &settings)?;
    let dc = solve_dc(&inst, &settings)?;
    let bound = upper_bound(&inst, &settings)?;
    let tol = 1e-6;
    let optimum = oracle.utility;
    let gap = cr.gap_bound.unwrap_or(0.0);
    let checks = [
        ("cr_below_optimum", cr.utility <= optimum + tol),
        ("dc_below_optimum", dc.utility <= optimum + tol),
        ("optimum_below_bound", optimum <= bound + tol),
        ("cr_gap_within_fractional_parts", optimum - cr.utility <= gap + tol),
        ("cr_feasible", cr.feasibility.feasible),
        ("dc_feasible", dc.feasibility.feasible),
    ];
    let mut s = header(&run.metadata("oracle"));
    writeln!(s, "[values]\noptimum,cr_utility,dc_utility,upper_bound,cr_gap_bound,evaluated").unwrap();
    writeln!(s, "{optimum},{},{},{bound},{gap},{}", cr.utility, dc.utility, oracle.evaluated).unwrap();
    writeln!(s, "\n[checks]\ncheck,holds").unwrap();
    for (name, ok) in checks {
        writeln!(s, "{name},{ok}").unwrap();
    }
    emit(run.out.as_deref(), &s)?;
    match checks.iter().find(|(_, ok)| !ok) {
        None => Ok(()),
        Some((name, _)) => Err(Failure { code: 4, message: format!("invariant {name} does not hold") }),
    }
}

fn cmd_gen(preset: Preset, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut config = RunConfig::preset(preset);
    if let Some(seed) = seed {
        config.output.seed = seed;
    }
    emit(out.as_deref(), &config.to_toml())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { source, method } => source.load().and_then(|run| cmd_solve(run, method)),
        Command::Sweep { source, method, param, realizations } => {
            source.load().and_then(|run| cmd_sweep(run, method, param, realizations))
        }
        Command::Oracle { source } => source.load().and_then(cmd_oracle),
        Command::GenScenario { preset, seed, out } => cmd_gen(preset, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
