//! Command-line front end: frequency maps, sweeps, magnet force tables and
//! batch studies.

use crate::forces::{magnet_force, MagnetConfig, PluginConfig, Polarity, MU_0};
use crate::geometry::build_sections;
use crate::modal::{frequency_map, ScanSettings};
use crate::reduced::ReducedModel;
use crate::scenario::{load_batch, load_scenario, Diagnostic, Scenario};
use crate::simulate::{bandwidth, power_area, sweep, Direction, ModelFamily, Peak, SweepCurve};
use crate::units::{parse_quantity, Dimension};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "rotpeh",
    version,
    about = "Rotating cut-out-beam piezoelectric harvester simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Natural frequencies and reduced coefficients against drive frequency.
    Modes(RunArgs),
    /// Up/down sweep response curves for one scenario.
    Sweep(RunArgs),
    /// Magnet force against centre-to-centre gap.
    Magforce(MagArgs),
    /// Several scenarios with a comparison summary.
    Batch(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepChoice {
    Up,
    Down,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the scenario's `output`, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepChoice>,
    /// Frequency step, Hz.
    #[arg(long)]
    pub df: Option<f64>,
    #[arg(long)]
    pub settle_cycles: Option<usize>,
    /// Treat unknown configuration keys as errors.
    #[arg(long)]
    pub strict: bool,
    /// Only write the frequency map and coefficients.
    #[arg(long)]
    pub modes_only: bool,
    /// Worker threads for batch runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MagArgs {
    /// Scenario whose magnets are tabulated; the default main-beam pair otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub strict: bool,
    /// Smallest gap, e.g. "5 mm".
    #[arg(long)]
    pub from: Option<String>,
    /// Largest gap, e.g. "80 mm".
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

/// Overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub directions: Option<Vec<Direction>>,
    pub df: Option<f64>,
    pub settle_cycles: Option<usize>,
    pub modes_only: bool,
}

impl RunOptions {
    fn from_args(a: &RunArgs) -> Self {
        Self {
            directions: a.sweep.map(|c| match c {
                SweepChoice::Up => vec![Direction::Up],
                SweepChoice::Down => vec![Direction::Down],
                SweepChoice::Both => vec![Direction::Up, Direction::Down],
            }),
            df: a.df,
            settle_cycles: a.settle_cycles,
            modes_only: a.modes_only,
        }
    }

    pub fn apply(&self, s: &mut Scenario) {
        if let Some(d) = &self.directions {
            s.sweep.directions = d.clone();
        }
        if let Some(df) = self.df {
            s.sweep.step = df;
        }
        if let Some(n) = self.settle_cycles {
            s.sweep.settle_cycles = n;
        }
    }
}

/// Failure of one run, serialisable as a JSON record.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub kind: String,
    pub scenario: Option<String>,
    pub message: String,
    pub line: Option<u32>,
    pub column: Option<u32>,
    pub key: Option<String>,
}

impl RunError {
    fn new(kind: &str, scenario: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            scenario: scenario.map(str::to_string),
            message: message.into(),
            line: None,
            column: None,
            key: None,
        }
    }

    fn io(scenario: Option<&str>, path: &Path, e: std::io::Error) -> Self {
        Self::new("io", scenario, format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": {
            "kind": self.kind,
            "scenario": self.scenario,
            "message": self.message,
            "line": self.line,
            "column": self.column,
            "key": self.key,
        }})
    }
}

impl From<Diagnostic> for RunError {
    fn from(d: Diagnostic) -> Self {
        Self {
            kind: format!("config_{}", d.kind.label()),
            scenario: None,
            message: d.to_string(),
            line: d.line.and_then(|v| u32::try_from(v).ok()),
            column: d.column.and_then(|v| u32::try_from(v).ok()),
            key: Some(d.key),
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(s) = &self.scenario {
            write!(f, "[{s}] ")?;
        }
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Sweep results of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub curve: SweepCurve,
    pub power_area: f64,
    pub peaks: Result<[Peak; 2], String>,
}

/// What one scenario run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub name: String,
    pub dir: PathBuf,
    pub hash: String,
    pub sweeps: Vec<DirectionResult>,
}

fn write(scenario: &str, path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::io(Some(scenario), path, e))
}

fn coefficient_table(s: &Scenario, drive: &[f64]) -> Result<String, RunError> {
    let sections = build_sections(&s.device).map_err(|e| RunError::new("geometry", Some(&s.name), e.to_string()))?;
    let rows: Vec<Result<String, RunError>> = drive
        .par_iter()
        .map(|&f| {
            let model = ReducedModel::assemble(&s.device, &sections, 2.0 * PI * f, &ScanSettings::default())
                .map_err(|e| RunError::new("model", Some(&s.name), format!("at {f} Hz: {e}")))?;
            let report = model.csv_report();
            Ok(report.lines().skip(1).map(|l| format!("{f},{l}\n")).collect())
        })
        .collect();
    let mut out = String::from("drive_hz,mode,omega_rad_s,f_hz,zeta,mb,kb,ks,kg,rs,kn,force,theta,tip_main,tip_aux\n");
    for r in rows {
        out.push_str(&r?);
    }
    Ok(out)
}

/// Runs one scenario into `dir`: frequency map, coefficients, sweeps,
/// summary, peak table and manifest.
pub fn run_scenario(s: &Scenario, dir: &Path, modes_only: bool) -> Result<Bundle, RunError> {
    let name = s.name.as_str();
    fs::create_dir_all(dir).map_err(|e| RunError::io(Some(name), dir, e))?;
    let hash = s.hash();

    let sections = build_sections(&s.device).map_err(|e| RunError::new("geometry", Some(name), e.to_string()))?;
    let drive = s.map.drive_hz();
    let map = frequency_map(&sections, &drive, &ScanSettings::default())
        .map_err(|e| RunError::new("modal", Some(name), e.to_string()))?;
    let mut csv = format!("{}\n", crate::modal::FrequencyMapRow::csv_header());
    for row in &map {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    write(name, &dir.join("frequency_map.csv"), &csv)?;
    let positive: Vec<f64> = drive.iter().copied().filter(|f| *f > 0.0).collect();
    write(name, &dir.join("coefficients.csv"), &coefficient_table(s, &positive)?)?;

    let mut sweeps = Vec::new();
    if !modes_only {
        let family = ModelFamily::new(s.device.clone(), s.plugins.clone(), ScanSettings::default())
            .map_err(|e| RunError::new("setup", Some(name), e.to_string()))?;
        let results: Vec<Result<DirectionResult, RunError>> = s
            .sweep
            .directions
            .par_iter()
            .map(|&d| {
                let mut curve = sweep(&family, &s.sweep.plan(d), &s.solver)
                    .map_err(|e| RunError::new("simulation", Some(name), e.to_string()))?;
                curve.scenario_hash = hash.clone();
                let power_area =
                    power_area(&curve).map_err(|e| RunError::new("simulation", Some(name), e.to_string()))?;
                let peaks = bandwidth(&curve, FRAC_1_SQRT_2).map_err(|e| e.to_string());
                Ok(DirectionResult {
                    curve,
                    power_area,
                    peaks,
                })
            })
            .collect();
        for r in results {
            let r = r?;
            write(
                name,
                &dir.join(format!("sweep_{}.csv", r.curve.direction.label())),
                &r.curve.csv(),
            )?;
            sweeps.push(r);
        }
        let reference = sweeps.first().map(|r| r.power_area);
        write(
            name,
            &dir.join("summary.csv"),
            &summary_csv(&[(name, &sweeps)], reference),
        )?;
        write(name, &dir.join("peaks.csv"), &peaks_csv(name, &sweeps))?;
    }

    let manifest = json!({
        "scenario": name,
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hash,
        "modes_only": modes_only,
        "tolerances": {
            "rtol": s.solver.tolerances.rtol,
            "atol": s.solver.tolerances.atol,
            "samples_per_period": s.solver.samples_per_period,
        },
        "sweep": {
            "f_low_hz": s.sweep.f_low,
            "f_high_hz": s.sweep.f_high,
            "step_hz": s.sweep.step,
            "settle_cycles": s.sweep.settle_cycles,
            "measure_cycles": s.sweep.measure_cycles,
            "carry_state": s.sweep.carry_state,
        },
        "config": s.to_toml(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write(name, &dir.join("manifest.json"), &(text + "\n"))?;
    Ok(Bundle {
        name: name.to_string(),
        dir: dir.to_path_buf(),
        hash,
        sweeps,
    })
}

/// `scenario,sweep,power_area_mwhz,efficiency_pct_vs_baseline`.
pub fn summary_csv(runs: &[(&str, &[DirectionResult])], reference: Option<f64>) -> String {
    let mut out = String::from("scenario,sweep,power_area_mwhz,efficiency_pct_vs_baseline\n");
    for (name, sweeps) in runs {
        for r in sweeps.iter() {
            let eff = match reference {
                Some(base) if base > 0.0 => format!("{}", 100.0 * r.power_area / base),
                _ => String::new(),
            };
            let _ = writeln!(out, "{name},{},{},{eff}", r.curve.direction.label(), r.power_area);
        }
    }
    out
}

fn peaks_csv(name: &str, sweeps: &[DirectionResult]) -> String {
    let mut out = String::from("scenario,sweep,peak,f_hz,v_rms,lower_hz,upper_hz,bandwidth_hz,note\n");
    for r in sweeps {
        let dir = r.curve.direction.label();
        match &r.peaks {
            Ok(peaks) => {
                for (i, p) in peaks.iter().enumerate() {
                    let note = if p.truncated { "truncated_at_band_edge" } else { "" };
                    let _ = writeln!(
                        out,
                        "{name},{dir},{},{},{},{},{},{},{note}",
                        i + 1,
                        p.f_hz,
                        p.value,
                        p.lower_hz,
                        p.upper_hz,
                        p.width()
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{name},{dir},,,,,,,\"{}\"", e.replace('"', "'"));
            }
        }
    }
    out
}

fn report(err: &RunError, out: Option<&Path>) {
    let record = err.to_json();
    eprintln!("{record}");
    if let Some(dir) = out {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), format!("{record}\n"));
        }
    }
}

fn warn_all(warnings: &[Diagnostic]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

const DEFAULT_OUT: &str = "out";

fn run_single(args: &RunArgs, force_modes_only: bool, out: &mut PathBuf) -> Result<(), RunError> {
    let loaded = load_scenario(&args.config, args.strict)?;
    warn_all(&loaded.warnings);
    let mut s = loaded.value;
    if let (None, Some(dir)) = (&args.out, &s.output) {
        *out = dir.clone();
    }
    let opts = RunOptions::from_args(args);
    opts.apply(&mut s);
    s.sweep
        .plan(Direction::Up)
        .validate()
        .map_err(|e| RunError::new("options", Some(&s.name), e.to_string()))?;
    let bundle = run_scenario(&s, out, force_modes_only || opts.modes_only)?;
    for r in &bundle.sweeps {
        println!(
            "{} {}: power area {:.4e} mW·Hz",
            bundle.name,
            r.curve.direction.label(),
            r.power_area
        );
    }
    println!("wrote {}", bundle.dir.display());
    Ok(())
}

fn run_batch(args: &RunArgs, out: &Path) -> Result<(), RunError> {
    let loaded = load_batch(&args.config, args.strict)?;
    warn_all(&loaded.warnings);
    let batch = loaded.value;
    let opts = RunOptions::from_args(args);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunError::new("setup", None, e.to_string()))?;
    let results: Vec<(String, Result<Bundle, RunError>)> = pool.install(|| {
        batch
            .scenarios
            .par_iter()
            .map(|s| {
                let mut s = s.clone();
                opts.apply(&mut s);
                let dir = out.join(&s.name);
                let r = s
                    .sweep
                    .plan(Direction::Up)
                    .validate()
                    .map_err(|e| RunError::new("options", Some(&s.name), e.to_string()))
                    .and_then(|_| run_scenario(&s, &dir, opts.modes_only));
                if let Err(e) = &r {
                    report(e, Some(&dir));
                }
                (s.name.clone(), r)
            })
            .collect()
    });
    let ok: Vec<&Bundle> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if !opts.modes_only {
        let base_name = batch
            .baseline
            .clone()
            .or_else(|| batch.scenarios.first().map(|s| s.name.clone()));
        let reference = ok
            .iter()
            .find(|b| Some(&b.name) == base_name.as_ref())
            .and_then(|b| b.sweeps.first())
            .map(|r| r.power_area);
        let runs: Vec<(&str, &[DirectionResult])> = ok.iter().map(|b| (b.name.as_str(), b.sweeps.as_slice())).collect();
        fs::create_dir_all(out).map_err(|e| RunError::io(None, out, e))?;
        write("batch", &out.join("summary.csv"), &summary_csv(&runs, reference))?;
    }
    let failed: Vec<&String> = results.iter().filter(|(_, r)| r.is_err()).map(|(n, _)| n).collect();
    println!("{} of {} scenarios completed", ok.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::new(
            "batch",
            None,
            format!(
                "failed scenarios: {}",
                failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            ),
        ))
    }
}

/// Coaxial point-dipole force on the moving magnet, positive away from the fixed one.
pub fn dipole_force(cfg: &MagnetConfig, gap: f64) -> f64 {
    let volume = |e: [f64; 3]| e[0] * e[1] * e[2];
    let m1 = cfg.moving_remanence * volume(cfg.moving_edges) / MU_0;
    let m2 = cfg.fixed_remanence * volume(cfg.fixed_edges) / MU_0;
    let sign = match cfg.polarity {
        Polarity::Repelling => 1.0,
        Polarity::Attracting => -1.0,
    };
    sign * 3.0 * MU_0 * m1 * m2 / (2.0 * PI * gap.powi(4))
}

/// Force table `gap_m,fx_n,fy_n,fz_n,dipole_fz_n` over a geometric gap grid.
pub fn magforce_table(cfg: &MagnetConfig, from: f64, to: f64, steps: usize) -> Result<String, RunError> {
    if !(from > 0.0 && to > from && steps >= 2) {
        return Err(RunError::new("options", None, "need 0 < from < to and steps ≥ 2"));
    }
    let mut out = String::from("gap_m,fx_n,fy_n,fz_n,dipole_fz_n\n");
    for k in 0..steps {
        let gap = from * (to / from).powf(k as f64 / (steps - 1) as f64);
        let f = magnet_force(cfg, [0.0, 0.0, gap]).map_err(|e| RunError::new("magnet", None, e.to_string()))?;
        let _ = writeln!(out, "{gap},{},{},{},{}", f[0], f[1], f[2], dipole_force(cfg, gap));
    }
    Ok(out)
}

fn run_magforce(args: &MagArgs) -> Result<(), RunError> {
    let magnets: Vec<MagnetConfig> = match &args.config {
        Some(path) => {
            let loaded = load_scenario(path, args.strict)?;
            warn_all(&loaded.warnings);
            loaded
                .value
                .plugins
                .iter()
                .filter_map(|p| match p {
                    PluginConfig::Magnet(m) => Some(m.clone()),
                    PluginConfig::Stopper(_) => None,
                })
                .collect()
        }
        None => Vec::new(),
    };
    let magnets = if magnets.is_empty() {
        vec![MagnetConfig::main_beam(0.044)]
    } else {
        magnets
    };
    fs::create_dir_all(&args.out).map_err(|e| RunError::io(None, &args.out, e))?;
    let length = |s: &Option<String>| -> Result<Option<f64>, RunError> {
        s.as_deref()
            .map(|t| parse_quantity(t, Dimension::Length).map_err(|e| RunError::new("options", None, e.to_string())))
            .transpose()
    };
    let (from, to) = (length(&args.from)?, length(&args.to)?);
    for m in &magnets {
        let contact = 0.5 * (m.moving_edges[2] + m.fixed_edges[2]);
        let from = from.unwrap_or(1.05 * contact);
        let to = to.unwrap_or(
            20.0 * m
                .moving_edges
                .iter()
                .chain(&m.fixed_edges)
                .fold(0.0f64, |a, b| a.max(*b)),
        );
        let name = match m.target {
            crate::forces::Target::MainBeam => "magforce_main_beam.csv",
            crate::forces::Target::AuxiliaryBeam => "magforce_auxiliary_beam.csv",
        };
        let path = args.out.join(name);
        write("magforce", &path, &magforce_table(m, from, to, args.steps)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Parses `args` and runs the chosen subcommand.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let requested = |a: &RunArgs| a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let (result, out) = match &cli.command {
        Command::Modes(a) | Command::Sweep(a) => {
            let mut out = requested(a);
            let modes_only = matches!(cli.command, Command::Modes(_));
            (run_single(a, modes_only, &mut out), out)
        }
        Command::Batch(a) => {
            let out = requested(a);
            (run_batch(a, &out), out)
        }
        Command::Magforce(a) => (run_magforce(a), a.out.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, Some(&out));
            ExitCode::FAILURE
        }
    }
}
