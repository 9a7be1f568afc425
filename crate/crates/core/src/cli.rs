//! The `vicsek` command-line driver.
//!
//! ```text
//! vicsek build   --level M --out graph.json
//! vicsek eig     --level M [--cache DIR] [--out eigenvalues.json]
//! vicsek kernel  --level M --t T --source ID --out kernel.csv [--cache DIR]
//! vicsek verify  [--config FILE] --level M --suite all --seed S --t-grid A:B:log:N --out DIR
//! vicsek report  --input DIR
//! ```
//!
//! `verify` exits with status 0 iff every hard check passes, 1 if a hard
//! check fails, and 2 on configuration or solver errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LevelGraph, DEFAULT_MAX_LEVEL};
use crate::harness::report::{fmt_f64, EstimateReport, Gate, REPORT_SCHEMA};
use crate::harness::suite::{run_suite, Suite, SuiteConfig};
use crate::harness::TimeGrid;
use crate::spectral::{
    load_or_compute, SolverMetadata, SpectralDecomposition, DENSE_SOLVER_CAP, ORTHONORMALITY_TOLERANCE,
    RESIDUAL_TOLERANCE,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the consolidated report inside the output directory.
pub const CONSOLIDATED_REPORT: &str = "report.json";
pub const SUMMARY_TABLE: &str = "summary.txt";

pub const DEFAULT_LEVEL: u32 = 4;

/// Everything `verify` needs; embedded verbatim in the consolidated report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub level: u32,
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub t_grid: Option<TimeGrid>,
    pub c_sweep: Vec<f64>,
    pub p_list: Vec<f64>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Suites run concurrently; `1` is serial.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            level: DEFAULT_LEVEL,
            suites: vec![Suite::All],
            seed: s.seed,
            t_grid: None,
            c_sweep: s.c_sweep,
            p_list: s.p_list,
            cache_dir: None,
            out_dir: None,
            jobs: 1,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim().replace('-', "_").as_str() {
            "level" => self.level = parse_one(key, value)?,
            "suite" | "suites" => self.suites = parse_list(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "t_grid" => self.t_grid = Some(value.trim().parse()?),
            "c_sweep" => self.c_sweep = parse_list(key, value)?,
            "p_list" => self.p_list = parse_list(key, value)?,
            "cache_dir" | "cache" => self.cache_dir = Some(PathBuf::from(value.trim())),
            "out_dir" | "out" => self.out_dir = Some(PathBuf::from(value.trim())),
            "jobs" => self.jobs = parse_one(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Plain-text `key = value` file; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            seed: self.seed,
            t_grid: self.t_grid,
            c_sweep: self.c_sweep.clone(),
            p_list: self.p_list.clone(),
            ..SuiteConfig::default()
        }
    }

    /// Concrete suites in canonical order.
    pub fn expanded_suites(&self) -> Vec<Suite> {
        let set: BTreeSet<Suite> = self.suites.iter().flat_map(|s| s.expand()).collect();
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.level > DEFAULT_MAX_LEVEL {
            return Err(Error::LevelTooLarge {
                level: self.level,
                max: DEFAULT_MAX_LEVEL,
            });
        }
        let n = 4 * 5usize.pow(self.level) + 1;
        if n > DENSE_SOLVER_CAP {
            return Err(Error::SizeCap {
                n,
                cap: DENSE_SOLVER_CAP,
            });
        }
        if let Some(g) = &self.t_grid {
            g.validate()?;
        }
        if self.suites.is_empty() {
            return Err(Error::Config("no suite selected".into()));
        }
        if self.c_sweep.iter().any(|&c| !(c > 1.0)) {
            return Err(Error::Config("c_sweep entries must exceed 1".into()));
        }
        if self.p_list.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::Config("p_list entries must be >= 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ensure `dir` exists, is a directory, and accepts files.
pub fn check_out_dir(dir: Option<&Path>) -> Result<&Path> {
    let dir = dir.ok_or_else(|| Error::Config("no output directory given".into()))?;
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    if fs::metadata(dir)?.permissions().readonly() {
        return Err(Error::Config(format!(
            "output directory {} is not writable",
            dir.display()
        )));
    }
    Ok(dir)
}

/// Consolidated `verify` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub solver: SolverMetadata,
    pub coarse_solver: Option<SolverMetadata>,
    /// No published values are reproduced; every criterion is property-based.
    pub note: String,
    pub hard_pass: bool,
    pub checks: Vec<EstimateReport>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Format(format!(
                "report schema {} (expected {REPORT_SCHEMA})",
                r.schema
            )));
        }
        Ok(r)
    }

    pub fn exit_code(&self) -> u8 {
        if self.hard_pass {
            0
        } else {
            1
        }
    }

    /// Fixed-width table: one line per check.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "vicsek {} level {} seed {}  (max residual {}, orthonormality defect {})",
            self.code_version,
            self.config.level,
            self.config.seed,
            fmt_f64(self.solver.max_residual),
            fmt_f64(self.solver.orthonormality_defect)
        );
        let _ = writeln!(
            s,
            "{:<36} {:<12} {:<6} {:>12}  failed criteria",
            "check", "gate", "status", "sup ratio"
        );
        for r in &self.checks {
            let gate = match r.gate {
                Gate::Hard => "hard",
                Gate::Statistical => "statistical",
                Gate::Exploratory => "exploratory",
            };
            let failed: Vec<String> = r
                .failed_criteria()
                .iter()
                .map(|c| format!("{}={:.4e}", c.name, c.value))
                .collect();
            let _ = writeln!(
                s,
                "{:<36} {:<12} {:<6} {:>12.5e}  {}",
                r.check_name,
                gate,
                r.status(),
                r.sup_ratio,
                failed.join(" ")
            );
        }
        let count = |st: &str| self.checks.iter().filter(|r| r.status() == st).count();
        let _ = writeln!(
            s,
            "{} checks: {} pass, {} warn, {} FAIL, {} info; hard gates {}",
            self.checks.len(),
            count("pass"),
            count("warn"),
            count("FAIL"),
            count("info"),
            if self.hard_pass { "pass" } else { "FAIL" }
        );
        s
    }
}

fn validated(sd: SpectralDecomposition) -> Result<SpectralDecomposition> {
    let md = sd.metadata();
    if !(md.max_residual <= RESIDUAL_TOLERANCE) || !(md.orthonormality_defect <= ORTHONORMALITY_TOLERANCE) {
        return Err(Error::SolverFailure(format!(
            "residual {:e} / orthonormality defect {:e} above tolerance",
            md.max_residual, md.orthonormality_defect
        )));
    }
    Ok(sd)
}

/// Graph and validated decomposition at `level`.
pub fn spectrum(level: u32, cache: Option<&Path>) -> Result<SpectralDecomposition> {
    let g = Arc::new(LevelGraph::build(level)?);
    log::info!("level {level}: {} vertices", g.vertex_count());
    validated(load_or_compute(g, cache)?)
}

/// Run the selected suites; nothing is written.
pub fn verify(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let suites = cfg.expanded_suites();
    let sd = spectrum(cfg.level, cfg.cache_dir.as_deref())?;
    let coarse = if suites.contains(&Suite::Kernel) && cfg.level >= 1 {
        Some(spectrum(cfg.level - 1, cfg.cache_dir.as_deref())?)
    } else {
        None
    };
    let scfg = cfg.suite_config();
    let run = |s: Suite| {
        log::info!("running suite {s}");
        run_suite(&sd, s, &scfg, coarse.as_ref())
    };
    let results: Vec<Result<Vec<EstimateReport>>> = if cfg.jobs > 1 {
        std::thread::scope(|scope| {
            let mut pending = Vec::new();
            let mut out = Vec::new();
            for chunk in suites.chunks(cfg.jobs) {
                pending.clear();
                for &s in chunk {
                    pending.push(scope.spawn(move || run(s)));
                }
                out.extend(pending.drain(..).map(|h| h.join().expect("suite thread panicked")));
            }
            out
        })
    } else {
        suites.iter().map(|&s| run(s)).collect()
    };
    // Suites may share a check (intertwining is both exact and Hodge);
    // runs are deterministic, so the first copy is kept.
    let mut checks: Vec<EstimateReport> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in results {
        checks.extend(r?.into_iter().filter(|c| seen.insert(c.check_name.clone())));
    }
    let hard_pass = checks.iter().filter(|r| r.gate == Gate::Hard).all(|r| r.passed());
    Ok(RunReport {
        schema: REPORT_SCHEMA,
        code_version: CODE_VERSION.to_string(),
        config: cfg.clone(),
        solver: sd.metadata(),
        coarse_solver: coarse.map(|c| c.metadata()),
        note: "acceptance is property-based: the estimates assert existence of constants, so no published value is reproduced".into(),
        hard_pass,
        checks,
    })
}

/// Per-check `<name>.json`/`<name>.csv`, then `report.json` and `summary.txt`.
pub fn write_run(report: &RunReport, dir: &Path) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in &report.checks {
        if !seen.insert(r.check_name.clone()) {
            return Err(Error::Format(format!("duplicate check name {}", r.check_name)));
        }
    }
    for r in &report.checks {
        r.write_files(dir)?;
    }
    fs::write(dir.join(SUMMARY_TABLE), report.summary_table())?;
    // Written last, so its presence marks a complete run.
    fs::write(dir.join(CONSOLIDATED_REPORT), report.to_json()?)?;
    Ok(())
}

/// `verify` end to end; returns the exit code.
pub fn run(cfg: &RunConfig) -> Result<u8> {
    cfg.validate()?;
    let dir = check_out_dir(cfg.out_dir.as_deref())?;
    let report = verify(cfg)?;
    write_run(&report, dir)?;
    print!("{}", report.summary_table());
    Ok(report.exit_code())
}

/// `(target_id, distance, p_t, dpdt)` for every vertex.
pub fn kernel_csv<W: std::io::Write>(sd: &SpectralDecomposition, t: f64, source: usize, w: W) -> Result<()> {
    let g = sd.graph();
    let dist = g.distances_from(source)?;
    let p = sd.heat_column(t, source)?;
    let dp = sd.heat_column_time_derivative(t, source)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    w.write_record(["target_id", "distance", "p_t", "dpdt"])?;
    for y in 0..g.vertex_count() {
        w.write_record([y.to_string(), fmt_f64(dist[y]), fmt_f64(p[y]), fmt_f64(dp[y])])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "vicsek",
    version,
    about = "Heat kernel and Sobolev estimates on the Vicsek set"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the level-m graph as JSON.
    Build {
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigendecompose and print the eigenvalues as JSON.
    Eig {
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: u32,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heat kernel column `p_t(source, ·)` as CSV.
    Kernel {
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: u32,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        source: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run verification suites and write reports.
    Verify(VerifyArgs),
    /// Print the summary of a finished run.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Print the consolidated JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<u32>,
    /// Comma-separated: all, exact, kernel, gradient, sobolev, hodge, riesz.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `MIN:MAX:log|linear:COUNT`.
    #[arg(long)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub c_sweep: Option<String>,
    #[arg(long)]
    pub p_list: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl VerifyArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_kv(&fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        let text = |v: &Option<String>| v.clone();
        let pairs: [(&str, Option<String>); 9] = [
            ("level", self.level.map(|v| v.to_string())),
            ("suite", text(&self.suite)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("t_grid", text(&self.t_grid)),
            ("c_sweep", text(&self.c_sweep)),
            ("p_list", text(&self.p_list)),
            ("cache_dir", self.cache.as_ref().map(|p| p.display().to_string())),
            ("out_dir", self.out.as_ref().map(|p| p.display().to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn write_to(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Build { level, out } => {
            let g = LevelGraph::build(level)?;
            fs::write(out, g.to_json()?)?;
        }
        Command::Eig { level, cache, out } => {
            let sd = spectrum(level, cache.as_deref())?;
            let mut s = serde_json::to_string_pretty(&sd.eigenvalue_document())?;
            s.push('\n');
            write_to(out.as_deref(), &s)?;
        }
        Command::Kernel {
            level,
            t,
            source,
            out,
            cache,
        } => {
            let sd = spectrum(level, cache.as_deref())?;
            let mut buf = Vec::new();
            kernel_csv(&sd, t, source, &mut buf)?;
            fs::write(out, buf)?;
        }
        Command::Verify(args) => return run(&args.to_config()?),
        Command::Report { input, json } => {
            let r = RunReport::from_json(&fs::read_to_string(input.join(CONSOLIDATED_REPORT))?)?;
            if json {
                print!("{}", r.to_json()?);
            } else {
                print!("{}", r.summary_table());
            }
            return Ok(r.exit_code());
        }
    }
    Ok(0)
}

/// Entry point of the `vicsek` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
