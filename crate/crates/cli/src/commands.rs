//! Subcommands and their dispatch.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use expanderlab::asymptotics::{estimate_r0, log_space, BasisOptions, Potential};
use expanderlab::io::{fmt_f64, write_csv, write_snapshot, Config, Constants, GridSpec, RunManifest, TaggedConstant};
use expanderlab::pde_simulator::hardy_constant;
use expanderlab::profile_solver::*;
use expanderlab::{Dimension, Pole};

use crate::studies;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn io_failure(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn pair_arg(s: &str) -> Result<(f64, f64), String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok((a, b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn list_arg(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect()
}

#[derive(Parser, Debug)]
#[command(name = "expanderlab", version, about = "Expanders of the corotational harmonic map heat flow")]
pub struct Cli {
    /// Output directory for CSV files and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file with default tolerances, grids and spans.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "rho-max", global = true)]
    pub rho_max: Option<f64>,
    /// Radial grid `R,M,r1` (`r1 = 0` for uniform spacing).
    #[arg(long, global = true)]
    pub grid: Option<GridSpec>,
    /// Time step (in `log t` for physical runs, in `s` for self-similar runs).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-span", global = true, value_parser = pair_arg)]
    pub t_span: Option<(f64, f64)>,
    #[arg(long = "epsilon-seq", global = true, value_parser = list_arg)]
    pub epsilon_seq: Option<Vec<f64>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoleArg {
    North,
    South,
}

impl From<PoleArg> for Pole {
    fn from(p: PoleArg) -> Pole {
        match p {
            PoleArg::North => Pole::North,
            PoleArg::South => Pole::South,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ProfileArgs {
    #[arg(long)]
    pub d: u32,
    /// Shooting parameter; alternatively give `--ell` and `--branch`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub ell: Option<f64>,
    /// Number of equator crossings of the North profile to shoot for.
    #[arg(long, default_value_t = 0)]
    pub branch: usize,
    #[arg(long, value_enum, default_value_t = PoleArg::North)]
    pub pole: PoleArg,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_parser = pair_arg)]
    pub range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
}

#[derive(Subcommand, Debug, Clone)]
pub enum PdeCommand {
    /// Evolve an exact expander snapshot and report the tracking error.
    Expander {
        #[arg(long, default_value_t = 3)]
        d: u32,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
    },
    /// North and South runs from identical data.
    Pair {
        #[arg(long, default_value_t = 3)]
        d: u32,
        #[arg(long, default_value_t = FRAC_PI_2 - 0.05)]
        ell: f64,
    },
    /// Perturbed expander in self-similar variables.
    Selfsim {
        #[arg(long, default_value_t = 3)]
        d: u32,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        amp: f64,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Comparison,
    Energy,
    Supersolution,
    Asymptotics,
    Regularity,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve one expander profile.
    Profile(ProfileArgs),
    /// Limits and crossing counts over a log-spaced range of α.
    Scan(ScanArgs),
    /// α₀, α*, ℓ*, δ*.
    Critical {
        #[arg(long)]
        d: u32,
    },
    Pde {
        #[command(subcommand)]
        which: PdeCommand,
    },
    /// Ginzburg–Landau runs over the ε sequence.
    Gl {
        #[arg(long, default_value_t = 5)]
        d: u32,
        #[arg(long, default_value_t = FRAC_PI_2 - 0.1)]
        ell: f64,
    },
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Recompute the regression constants at high resolution.
    Calibrate,
    /// Rerun the command recorded in a manifest.
    Rerun { manifest: PathBuf },
}

/// Resolved numeric settings: flag, then config file, then command default.
struct Settings<'a> {
    cli: &'a Cli,
    file: Option<Config>,
}

impl<'a> Settings<'a> {
    fn new(cli: &'a Cli) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(p) => Some(Config::from_file(p).map_err(|e| CliError::Usage(e.to_string()))?),
            None => None,
        };
        Ok(Self { cli, file })
    }

    fn tol(&self, default: f64) -> f64 {
        self.cli.tol.or(self.file.as_ref().and_then(|c| c.tol)).unwrap_or(default)
    }

    fn rho_max(&self, default: f64) -> f64 {
        self.cli.rho_max.or(self.file.as_ref().and_then(|c| c.rho_max)).unwrap_or(default)
    }

    fn grid(&self, default: GridSpec) -> GridSpec {
        self.cli.grid.or(self.file.as_ref().and_then(|c| c.grid)).unwrap_or(default)
    }

    fn dt(&self, default: f64) -> f64 {
        self.cli.dt.or(self.file.as_ref().and_then(|c| c.dt)).unwrap_or(default)
    }

    fn t_span(&self, default: (f64, f64)) -> (f64, f64) {
        self.cli.t_span.or(self.file.as_ref().and_then(|c| c.t_span)).unwrap_or(default)
    }

    fn epsilon_seq(&self, default: &[f64]) -> Vec<f64> {
        self.cli
            .epsilon_seq
            .clone()
            .or_else(|| self.file.as_ref().and_then(|c| c.epsilon_seq.clone()))
            .unwrap_or_else(|| default.to_vec())
    }
}

fn dimension(d: u32) -> Result<Dimension, CliError> {
    Dimension::new(d).ok_or_else(|| CliError::Usage(format!("--d must be at least 3, got {d}")))
}

fn check_tol(tol: f64) -> Result<f64, CliError> {
    if tol > 0.0 && tol <= 1e-6 {
        Ok(tol)
    } else {
        Err(CliError::Usage("--tol must lie in (0, 1e-6]".into()))
    }
}

fn check_rho_max(r: f64) -> Result<f64, CliError> {
    if r >= 10.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(CliError::Usage("--rho-max must be at least 10".into()))
    }
}

fn check_grid(g: GridSpec) -> Result<GridSpec, CliError> {
    g.build().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(g)
}

/// Steps per decade from a `log t` step.
fn steps_per_decade(dt: f64) -> Result<usize, CliError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(CliError::Usage("--dt must be positive".into()));
    }
    Ok(((10f64.ln() / dt).round() as usize).max(1))
}

struct Output {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Output {
    fn new(cli: &Cli, command: &str, argv: &[String]) -> Result<Self, CliError> {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(io_failure)?;
        let mut manifest = RunManifest::new(command);
        manifest.param("argv", strip_out(argv));
        Ok(Self { dir, manifest, started: Instant::now() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = self.dir.join("manifest.json");
        self.manifest.write(&path).map_err(io_failure)
    }
}

/// Arguments without `--out DIR` (rerun supplies its own).
fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<f64>>) -> Result<(), CliError> {
    write_csv(path, header, rows.into_iter().map(|r| r.into_iter().map(fmt_f64).collect::<Vec<_>>())).map_err(io_failure)
}

/// Execute a parsed command line; `argv` excludes the program name.
pub fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    let settings = Settings::new(&cli)?;
    match &cli.command {
        Command::Profile(a) => cmd_profile(&cli, &settings, a, argv),
        Command::Scan(a) => cmd_scan(&cli, &settings, a, argv),
        Command::Critical { d } => cmd_critical(&cli, &settings, *d, argv),
        Command::Pde { which } => cmd_pde(&cli, &settings, which, argv),
        Command::Gl { d, ell } => cmd_gl(&cli, &settings, *d, *ell, argv),
        Command::Verify { suite } => cmd_verify(*suite),
        Command::Calibrate => cmd_calibrate(&cli, argv),
        Command::Rerun { manifest } => cmd_rerun(&cli, manifest),
    }
}

fn cmd_profile(cli: &Cli, s: &Settings, a: &ProfileArgs, argv: &[String]) -> Result<(), CliError> {
    let d = dimension(a.d)?;
    let tol = check_tol(s.tol(1e-10))?;
    let rho_max = check_rho_max(s.rho_max(30.0))?;
    let pole: Pole = a.pole.into();
    let profile = match (a.alpha, a.ell) {
        (Some(alpha), None) => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(CliError::Usage("--alpha must be a nonnegative number".into()));
            }
            solve_profile(ProfileParams::new(d, alpha, pole).with(rho_max, tol)).map_err(numerical)?
        }
        (None, Some(ell)) => {
            let north_ell = if pole == Pole::South { std::f64::consts::PI - ell } else { ell };
            let mut st = ShootSettings::for_dimension(d);
            st.rho_max = rho_max;
            let shot = shoot_for_limit_with(d, north_ell, a.branch, tol, &st).map_err(numerical)?;
            if pole == Pole::South {
                reflect(&shot.profile)
            } else {
                shot.profile
            }
        }
        _ => return Err(CliError::Usage("give exactly one of --alpha or --ell".into())),
    };
    let mut out = Output::new(cli, "profile", argv)?;
    out.manifest.param("d", a.d).param("alpha", profile.params.alpha).param("pole", format!("{pole:?}"));
    out.manifest.param("tol", tol).param("rho_max", rho_max);
    out.manifest.constant("psi_inf", profile.psi_inf, tol);
    let probes = log_space(0.5, 20.0, 20);
    let (r0, _) = estimate_r0(&Potential::from_profile(&profile), d, &probes, BasisOptions::default()).map_err(numerical)?;
    if let Some(r0) = r0 {
        out.manifest.constant("r0", r0, r0 * (probes[1] / probes[0] - 1.0));
    }
    let t = &profile.trajectory;
    let rows = (0..t.len()).map(|i| vec![t.nodes()[i], t.state(i)[0], t.state(i)[1]]).collect();
    let path = out.path("profile.csv");
    write_rows(&path, &["rho", "psi", "dpsi"], rows)?;
    println!("alpha = {}", fmt_f64(profile.params.alpha));
    println!("psi_inf = {} (+/- {:.1e})", fmt_f64(profile.psi_inf), profile.psi_inf_error);
    println!("crossings = {}", profile.crossings_of_equator);
    out.finish()
}

fn cmd_scan(cli: &Cli, s: &Settings, a: &ScanArgs, argv: &[String]) -> Result<(), CliError> {
    let d = dimension(a.d)?;
    let tol = check_tol(s.tol(1e-10))?;
    let rho_max = check_rho_max(s.rho_max(30.0))?;
    let range = a.range.unwrap_or(ShootSettings::for_dimension(d).scan_range);
    if !(range.0 > 0.0 && range.1 > range.0) || a.n < 2 {
        return Err(CliError::Usage("--range needs 0 < lo < hi and --n >= 2".into()));
    }
    let scan = scan_branches_with(d, range, a.n, rho_max, tol).map_err(numerical)?;
    let mut out = Output::new(cli, "scan", argv)?;
    out.manifest.param("d", a.d).param("range", range).param("n", a.n).param("tol", tol).param("rho_max", rho_max);
    let rows = (0..scan.alphas.len()).map(|i| vec![scan.alphas[i], scan.limits[i], scan.crossings[i] as f64]).collect();
    let path = out.path("scan.csv");
    write_rows(&path, &["alpha", "limit", "crossings"], rows)?;
    let signs = scan.limits.windows(2).filter(|w| (w[0] - FRAC_PI_2) * (w[1] - FRAC_PI_2) < 0.0).count();
    let max = scan.limits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("max limit = {}", fmt_f64(max));
    println!("sign changes of limit - pi/2 = {signs}");
    out.finish()
}

fn cmd_critical(cli: &Cli, s: &Settings, d: u32, argv: &[String]) -> Result<(), CliError> {
    let dd = dimension(d)?;
    let tol = check_tol(s.tol(1e-10))?;
    let mut st = ShootSettings::for_dimension(dd);
    st.rho_max = check_rho_max(s.rho_max(30.0))?;
    let c = critical_params_with(dd, tol, &st).map_err(numerical)?;
    let mut out = Output::new(cli, "critical", argv)?;
    out.manifest.param("d", d).param("tol", tol).param("rho_max", st.rho_max);
    for (k, v) in [("alpha0", c.alpha0), ("alpha_star", c.alpha_star), ("ell_star", c.ell_star), ("delta_star", c.delta_star)] {
        println!("{k} = {}", fmt_f64(v));
        if v.is_finite() {
            out.manifest.constant(k, v, tol);
        }
    }
    println!("hardy constant 4(d-1)/(d-2)^2 = {}", fmt_f64(hardy_constant(d)));
    out.finish()
}

fn snapshot_series(out: &mut Output, prefix: &str, run: &expanderlab::pde_simulator::Run, keep: usize) -> Result<(), CliError> {
    let n = run.snapshots.len();
    let stride = (n / keep.max(1)).max(1);
    for (k, snap) in run.snapshots.iter().enumerate() {
        if k % stride == 0 || k + 1 == n {
            let p = out.path(&format!("{prefix}_{k:05}.csv"));
            write_snapshot(&p, snap).map_err(io_failure)?;
        }
    }
    Ok(())
}

fn cmd_pde(cli: &Cli, s: &Settings, which: &PdeCommand, argv: &[String]) -> Result<(), CliError> {
    match which {
        PdeCommand::Expander { d, ell } => {
            let grid = check_grid(s.grid(GridSpec { r_max: 40.0, cells: 400, r1: 0.002 }))?;
            let spd = steps_per_decade(s.dt(10f64.ln() / 100.0))?;
            let (t0, t1) = s.t_span((0.01, 0.1));
            let decades = (t1 / t0).log10();
            let study = studies::tracking_study(*d, *ell, grid, spd, t0, decades, 2).map_err(numerical)?;
            let mut out = Output::new(cli, "pde expander", argv)?;
            out.manifest.param("d", d).param("ell", ell).param("grid", grid).param("steps_per_decade", spd);
            out.manifest.param("t_span", (t0, t1));
            out.manifest.diagnostics.insert("study".into(), serde_json::to_value(&study).expect("serializable"));
            if let Some(run) = &study.finest {
                snapshot_series(&mut out, "h", run, 10)?;
            }
            println!("alpha = {}", fmt_f64(study.alpha));
            println!("tracking error (coarse, fine) = {:.3e}, {:.3e}", study.errors[0], study.errors[1]);
            println!("measured discretization error = {:.3e}", study.gaps[0]);
            out.finish()
        }
        PdeCommand::Pair { d, ell } => {
            let grid = check_grid(s.grid(GridSpec { r_max: 10.0, cells: 800, r1: 5e-4 }))?;
            let spd = steps_per_decade(s.dt(10f64.ln() / 200.0))?;
            let (t0, t1) = s.t_span((1e-3, 1e-2));
            let study = studies::pair_study(*d, *ell, grid, spd, t0, t1, 0.1).map_err(numerical)?;
            let mut out = Output::new(cli, "pde pair", argv)?;
            out.manifest.param("d", d).param("ell", ell).param("grid", grid).param("steps_per_decade", spd);
            out.manifest.param("t_span", (t0, t1));
            out.manifest.diagnostics.insert("study".into(), serde_json::to_value(&study).expect("serializable"));
            if let Some(pair) = &study.pair {
                snapshot_series(&mut out, "north", &pair.north, 10)?;
                snapshot_series(&mut out, "south", &pair.south, 10)?;
            }
            println!("alpha north/south = {} / {}", fmt_f64(study.alpha_north), fmt_f64(study.alpha_south));
            println!("final sup |h_N - h_S| = {}", fmt_f64(study.separation_final));
            println!("energy margins = {:.3e}, {:.3e}", study.energy_margin[0], study.energy_margin[1]);
            println!("zeta(0.1) = {:.4}, {:.4}", study.zeta[0], study.zeta[1]);
            out.finish()
        }
        PdeCommand::Selfsim { d, alpha, amp } => {
            let grid = check_grid(s.grid(GridSpec { r_max: 40.0, cells: 800, r1: 0.01 }))?;
            let ds = s.dt(0.01);
            let (s0, s1) = s.t_span((0.0, 20.0));
            if s0 != 0.0 {
                return Err(CliError::Usage("self-similar runs start at s = 0".into()));
            }
            let study = studies::decay_study(*d, *alpha, *amp, grid, ds, s1, 0.25 * s1).map_err(numerical)?;
            let mut out = Output::new(cli, "pde selfsim", argv)?;
            out.manifest.param("d", d).param("alpha", alpha).param("amp", amp).param("grid", grid).param("ds", ds);
            out.manifest.param("s_span", (s0, s1));
            let path = out.path("decay.csv");
            write_rows(&path, &["s", "deviation"], study.series.iter().map(|(s, v)| vec![*s, *v]).collect())?;
            out.manifest.diagnostics.insert("rate".into(), json!(study.rate));
            println!("decay rate = {:.4}", study.rate);
            println!("weighted norm growth = {:.4}", study.weighted_growth);
            out.finish()
        }
    }
}

fn cmd_gl(cli: &Cli, s: &Settings, d: u32, ell: f64, argv: &[String]) -> Result<(), CliError> {
    dimension(d)?;
    let grid = check_grid(s.grid(GridSpec { r_max: 8.0, cells: 1600, r1: 1e-4 }))?;
    let dt = s.dt(2.5e-5);
    let eps = s.epsilon_seq(&[0.04, 0.02, 0.01]);
    let (_, t_eval) = s.t_span((0.0, 0.05));
    if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Usage("--epsilon-seq must be strictly decreasing".into()));
    }
    let study = studies::gl_study(d, ell, &eps, grid, dt, t_eval, 1e-3).map_err(numerical)?;
    let mut out = Output::new(cli, "gl", argv)?;
    out.manifest.param("d", d).param("ell", ell).param("grid", grid).param("dt", dt).param("t_eval", t_eval);
    out.manifest.param("epsilon", &eps);
    let nodes = grid.build().map_err(io_failure)?.nodes().to_vec();
    for r in &study.selection.runs {
        let path = out.path(&format!("gl_eps_{:.4e}.csv", r.epsilon));
        let rows = (0..nodes.len()).map(|i| vec![nodes[i], r.angle_at_eval[i], r.v_at_eval[i], r.w_at_eval[i]]).collect();
        write_rows(&path, &["r", "h", "v", "w"], rows)?;
        println!("epsilon = {:.4e}: distance = {:.4e}, max|u| - 1 = {:.2e}, min v = {:.4}", r.epsilon, r.distance, r.max_modulus - 1.0, r.min_first_component);
    }
    println!("reference discretization error = {:.3e}", study.reference_gap);
    println!("monotone in epsilon: {}", study.selection.monotone);
    out.finish()
}

fn report(lines: &[(String, bool)]) -> Result<(), CliError> {
    for (msg, ok) in lines {
        println!("{} {msg}", if *ok { "PASS" } else { "FAIL" });
    }
    if lines.iter().all(|l| l.1) {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} check(s) failed", lines.iter().filter(|l| !l.1).count())))
    }
}

fn cmd_verify(suite: Suite) -> Result<(), CliError> {
    let lines = match suite {
        Suite::Comparison => {
            let st = studies::comparison_study(7, 20, GridSpec { r_max: 5.0, cells: 200, r1: 5e-3 }, 2e-3, 0.5)
                .map_err(numerical)?;
            st.violations.iter().map(|v| (format!("ordered pairs violation {v:.3e} <= 1e-6"), *v <= 1e-6)).collect()
        }
        Suite::Energy => {
            let st = studies::pair_study(3, FRAC_PI_2 - 0.05, GridSpec { r_max: 10.0, cells: 800, r1: 5e-4 }, 200, 1e-3, 1e-2, 0.1)
                .map_err(numerical)?;
            st.energy_margin.iter().map(|m| (format!("energy margin {m:.3e} >= -1e-3"), *m >= -1e-3)).collect()
        }
        Suite::Supersolution => {
            let (kappa, found) = studies::supersolution_study(3, 0.5, 1.0, 1.0).map_err(numerical)?;
            match found {
                Some(f) => vec![(
                    format!(
                        "kappa {kappa:.4}: eta {} A {:e} s0 {}: min R+ {:.2e} >= -1e-8, max R- {:.2e} <= 1e-8",
                        f.params.eta, f.params.a, f.params.s0, f.min_upper, f.max_lower
                    ),
                    f.min_upper >= -1e-8 && f.max_lower <= 1e-8,
                )],
                None => vec![("no admissible (eta, A, s0) found".to_string(), false)],
            }
        }
        Suite::Asymptotics => {
            let st = studies::asymptotics_study(3, 0.5).map_err(numerical)?;
            vec![
                (format!("tail exponent {:.4} in -2 +/- 0.2", st.tail_exponent), (st.tail_exponent + 2.0).abs() <= 0.2),
                (format!("phi2 - 1 exponent {:.4} in -2 +/- 0.2", st.phi2_exponent), (st.phi2_exponent + 2.0).abs() <= 0.2),
                (format!("phi1 log spread {:.4} <= 0.1", st.phi1_log_spread), st.phi1_log_spread <= 0.1),
            ]
        }
        Suite::Regularity => {
            let st = studies::tracking_study(3, 1.0, GridSpec { r_max: 40.0, cells: 400, r1: 0.002 }, 100, 0.01, 1.0, 1)
                .map_err(numerical)?;
            let run = st.finest.as_ref().expect("one level");
            let rep = expanderlab::pde_simulator::regularity_monitors(run);
            vec![
                (format!("r|h_r| trend {:.3}", rep.trend[0]), rep.trend[0] <= 1.5),
                (format!("parabolic gradient trend {:.3}", rep.trend[1]), rep.trend[1] <= 1.5),
                ("no monitor more than doubles".to_string(), !rep.flags_growth()),
            ]
        }
    };
    report(&lines)
}

fn cmd_calibrate(cli: &Cli, argv: &[String]) -> Result<(), CliError> {
    let tol = 1e-12;
    let rho_max = 50.0;
    let mut values = std::collections::BTreeMap::new();
    let mut put = |k: String, v: f64| {
        values.insert(k, TaggedConstant { value: v, tol });
    };
    let d3 = dimension(3)?;
    let mut st3 = ShootSettings::for_dimension(d3);
    st3.rho_max = rho_max;
    let shot = shoot_for_limit_with(d3, 1.0, 0, tol, &st3).map_err(numerical)?;
    put("d3_alpha_hat_ell_1".into(), shot.alpha);
    for alpha in [0.5, 1.0] {
        let p = solve_profile(ProfileParams::new(d3, alpha, Pole::North).with(rho_max, tol)).map_err(numerical)?;
        put(format!("d3_psi_inf_alpha_{alpha}"), p.psi_inf);
    }
    let p05 = solve_profile(ProfileParams::new(d3, 0.5, Pole::North).with(rho_max, tol)).map_err(numerical)?;
    put("d3_kappa_hat_alpha_0.5".into(), kappa_threshold(&p05, 50.0, 1e-10).map_err(numerical)?);
    for d in 3..=6 {
        let dd = dimension(d)?;
        let mut st = ShootSettings::for_dimension(dd);
        st.rho_max = rho_max;
        let c = critical_params_with(dd, tol, &st).map_err(numerical)?;
        put(format!("d{d}_alpha0"), c.alpha0);
        put(format!("d{d}_alpha_star"), c.alpha_star);
        put(format!("d{d}_ell_star"), c.ell_star);
        put(format!("d{d}_delta_star"), c.delta_star);
    }
    // R₀ is only resolved to the probe spacing.
    let probes = log_space(0.5, 20.0, 20);
    let (r0, _) = estimate_r0(&Potential::from_profile(&p05), d3, &probes, BasisOptions::default()).map_err(numerical)?;
    if let Some(r0) = r0 {
        let spacing = probes[1] / probes[0];
        values.insert("d3_r0_alpha_0.5".into(), TaggedConstant { value: r0, tol: r0 * (spacing - 1.0) });
    }
    let constants = Constants { schema: expanderlab::io::SCHEMA_VERSION, tol, rho_max, values };
    let mut out = Output::new(cli, "calibrate", argv)?;
    out.manifest.param("tol", tol).param("rho_max", rho_max);
    for (k, v) in &constants.values {
        out.manifest.constant(k, v.value, v.tol);
        println!("{k} = {}", fmt_f64(v.value));
    }
    let path = out.path("constants.json");
    constants.write(&path).map_err(io_failure)?;
    out.finish()
}

fn cmd_rerun(cli: &Cli, manifest: &Path) -> Result<(), CliError> {
    let m = RunManifest::read(manifest).map_err(io_failure)?;
    let argv: Vec<String> = m
        .parameters
        .get("argv")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| CliError::Usage("manifest has no recorded argv".into()))?;
    if argv.first().map(String::as_str) == Some("rerun") {
        return Err(CliError::Usage("refusing to rerun a rerun".into()));
    }
    let out = cli.out.clone().unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut full = vec!["expanderlab".to_string()];
    full.extend(argv.iter().cloned());
    full.push("--out".into());
    full.push(out.to_string_lossy().into_owned());
    let parsed = Cli::try_parse_from(&full).map_err(|e| CliError::Usage(e.to_string()))?;
    run(parsed, &full[1..])
}
