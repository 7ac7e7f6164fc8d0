//! Command-line front end. Loads a JSON scenario file, runs one command
//! against it, and writes plot-ready artifacts into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 output I/O failure. A capture during `simulate` is expected physics and
//! exits 0 with an event row; a capture during `control` means the tracking
//! task failed and exits 3.
//!
//! The `analyze` and `design` commands always emit JSON reports; the tabular
//! commands honor `--format`. Reruns with `--no-meta` are byte-identical.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use finact::control::{
    closed_loop, max_control_force, mean_abs_force, plan_with_omega, steady_amplitude, PidGains,
    TRANSIENT_FRACTION,
};
use finact::design::{
    beam_stiffness, damping_from_q, dipole_moment, magnet_constant, second_moment_of_area,
    size_solenoid_sweep, BeamSpec, MagnetSpec, SizingScenario,
};
use finact::equilibria::{find_fixed_points, sweep_asymmetry, DEFAULT_ROOT_TOL};
use finact::model::{PhysicalParams, State, SystemParams};
use finact::sim::{simulate, ConstantCurrent, DriveLaw, NoDrive, SimOptions, Trajectory};
use finact::spectral::{build_frequency_table, orbit_frequency};

/// Horizon of the free-orbit run behind a measured reference frequency, s.
const FREQ_MEASURE_T: f64 = 20.0;

/// Default closed-loop horizon, reference periods.
const DEFAULT_CONTROL_PERIODS: f64 = 13.0;

/// Default auto-grid table size.
const DEFAULT_TABLE_POINTS: usize = 32;

/// Default auto-grid span, fractions of the oscillatory bound.
const DEFAULT_TABLE_SPAN: [f64; 2] = [0.05, 0.95];

/// Default free-orbit horizon per table entry, s.
const DEFAULT_TABLE_T: f64 = 20.0;

/// Default mean coil turn area, m^2: a turn of 5 mm winding radius.
const DEFAULT_TURN_AREA: f64 = std::f64::consts::PI * 25e-6;

/// Default coil drive current, A.
const DEFAULT_COIL_CURRENT: f64 = 0.02;

#[derive(Parser)]
#[command(
    name = "finact",
    version,
    about = "Simulation and design toolkit for a magnetically actuated elastic fin"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate and classify the plant's fixed points (JSON report).
    Analyze(CommonArgs),
    /// Integrate trajectories from the configured initial conditions.
    Simulate(CommonArgs),
    /// Measure the amplitude-to-frequency lookup table.
    Freqtable(CommonArgs),
    /// Track a reference orbit with PID force control.
    Control(CommonArgs),
    /// Size physical components: magnet, beam, solenoid turns (JSON report).
    Design(CommonArgs),
    /// Sweep magnet asymmetry or damping ratio.
    Sweep(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Analyze(a)
            | Command::Simulate(a)
            | Command::Freqtable(a)
            | Command::Control(a)
            | Command::Design(a)
            | Command::Sweep(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file, JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Omit generation timestamps, making reruns byte-identical.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
enum CliError {
    /// Unreadable, unparseable, or inconsistent scenario.
    Config(String),
    /// The run itself failed: capture where none is allowed, a scan that
    /// lost a root, a table that refused to be monotone.
    Numerical(String),
    /// An artifact could not be written.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn num_err(e: impl fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(paths) => {
            for p in &paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("finact: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn execute(cmd: &Command) -> Result<Vec<PathBuf>, CliError> {
    let args = cmd.args();
    let scenario = load_scenario(&args.config)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", args.out.display())))?;
    match cmd {
        Command::Analyze(_) => cmd_analyze(&scenario, args),
        Command::Simulate(_) => cmd_simulate(&scenario, args),
        Command::Freqtable(_) => cmd_freqtable(&scenario, args),
        Command::Control(_) => cmd_control(&scenario, args),
        Command::Design(_) => cmd_design(&scenario, args),
        Command::Sweep(_) => cmd_sweep(&scenario, args),
    }
}

/// One scenario per file. Each command reads the blocks it needs and rejects
/// files whose top-level keys it does not know.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    plant: PlantConfig,
    #[serde(default)]
    run: Option<RunConfig>,
    #[serde(default)]
    freqtable: Option<FreqTableConfig>,
    #[serde(default)]
    control: Option<ControlConfig>,
    #[serde(default)]
    design: Option<DesignConfig>,
    #[serde(default)]
    sweep: Option<SweepConfig>,
}

impl Scenario {
    fn sim_options(&self) -> Result<SimOptions, CliError> {
        let opts = self.run.as_ref().and_then(|r| r.sim).unwrap_or_default();
        opts.validate().map_err(config_err)?;
        Ok(opts)
    }
}

/// Exactly one of the two plant descriptions must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantConfig {
    #[serde(default)]
    normalized: Option<SystemParams>,
    #[serde(default)]
    physical: Option<PhysicalParams>,
}

impl PlantConfig {
    fn resolve(&self) -> Result<SystemParams, CliError> {
        let p = match (&self.normalized, &self.physical) {
            (Some(p), None) => *p,
            (None, Some(pp)) => pp.normalize().map_err(config_err)?,
            _ => {
                return Err(CliError::Config(
                    "plant needs exactly one of `normalized` or `physical`".into(),
                ))
            }
        };
        p.validate().map_err(config_err)?;
        Ok(p)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    /// Horizon, s.
    t_end: f64,
    /// Initial conditions, one trajectory each.
    #[serde(default)]
    ics: Vec<State>,
    /// Integrator settings, also used by the other commands.
    #[serde(default)]
    sim: Option<SimOptions>,
    /// Constant solenoid current, A.
    #[serde(default)]
    current: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreqTableConfig {
    /// Explicit amplitude grid, m. Exclusive with `count`/`span`.
    #[serde(default)]
    amplitudes: Option<Vec<f64>>,
    /// Auto-grid size.
    #[serde(default)]
    count: Option<usize>,
    /// Auto-grid span, fractions of the oscillatory bound.
    #[serde(default)]
    span: Option<[f64; 2]>,
    /// Free-orbit horizon per entry, s.
    #[serde(default)]
    t_sim: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlConfig {
    /// Reference orbit amplitude, m. Must stay below the positive saddle.
    amplitude: f64,
    /// Initial conditions, one tracking run each.
    #[serde(default)]
    ics: Vec<State>,
    /// Horizon, s. Defaults to 13 reference periods.
    #[serde(default)]
    t_end: Option<f64>,
    /// PID gains. Defaults to the stiffness-scaled set.
    #[serde(default)]
    gains: Option<PidGains>,
    /// Damping ratio override. Exclusive with `gamma`.
    #[serde(default)]
    q: Option<f64>,
    /// Per-unit-mass damping override, 1/s. Exclusive with `q`.
    #[serde(default)]
    gamma: Option<f64>,
    /// Reference frequency, Hz. Measured from a free orbit when absent.
    #[serde(default)]
    frequency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignConfig {
    magnet: MagnetSpec,
    #[serde(default)]
    beam: Option<BeamSpec>,
    /// Effective oscillating mass, kg.
    #[serde(default)]
    mass: Option<f64>,
    /// Mean coil turn area, m^2.
    #[serde(default)]
    turn_area: Option<f64>,
    /// Coil drive current, A.
    #[serde(default)]
    current: Option<f64>,
    /// Damping ratios to size the coil against. Needs a `control` block.
    #[serde(default)]
    qs: Option<Vec<f64>>,
}

/// Exactly one of the two sweep kinds must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    #[serde(default)]
    asymmetry: Option<AsymmetryConfig>,
    #[serde(default)]
    damping: Option<DampingConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AsymmetryConfig {
    /// Gain imbalances delta_c / c, each in [0, 2).
    deltas: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DampingConfig {
    /// Damping ratios, each >= 0.
    qs: Vec<f64>,
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    // serde_json anchors parse errors to a line and column.
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Largest amplitude the oscillatory basin admits: the positive saddle when
/// one exists, the guard-banded gap edge otherwise.
fn oscillation_bound(p: &SystemParams) -> Result<f64, CliError> {
    let report = find_fixed_points(&p.with_damping(0.0), DEFAULT_ROOT_TOL).map_err(config_err)?;
    Ok(report.positive_saddle().map_or(p.x0 - p.eps_sing, |s| s.x))
}

fn check_amplitude(a: f64, bound: f64, what: &str) -> Result<(), CliError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(CliError::Config(format!("{what} {a} must be positive")));
    }
    if a >= bound {
        return Err(CliError::Config(format!(
            "{what} {a} must stay below the oscillatory bound {bound}"
        )));
    }
    Ok(())
}

/// Measures the free-orbit angular frequency at amplitude `a`, rad/s. The
/// measurement always runs undamped: the backbone is a property of the
/// conservative plant.
fn measure_omega(p: &SystemParams, a: f64, opts: &SimOptions) -> Result<f64, CliError> {
    let free = p.with_damping(0.0);
    let traj =
        simulate(&free, State::new(a, 0.0), FREQ_MEASURE_T, &mut NoDrive, opts).map_err(num_err)?;
    if let Some(ev) = traj.events.first() {
        return Err(CliError::Numerical(format!(
            "frequency measurement at amplitude {a} ended early: {} at t = {}",
            ev.kind.label(),
            ev.t
        )));
    }
    let f = orbit_frequency(&traj.times, &traj.positions()).map_err(num_err)?;
    Ok(std::f64::consts::TAU * f)
}

/// Control block resolved against the plant: damping applied, gains and
/// reference frequency filled in.
#[derive(Debug)]
struct ControlSetup {
    plant: SystemParams,
    gains: PidGains,
    amplitude: f64,
    omega: f64,
    t_end: f64,
}

fn resolve_control(
    p: &SystemParams,
    cc: &ControlConfig,
    opts: &SimOptions,
) -> Result<ControlSetup, CliError> {
    let bound = oscillation_bound(p)?;
    check_amplitude(cc.amplitude, bound, "reference amplitude")?;

    let gamma = match (cc.q, cc.gamma) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("control takes `q` or `gamma`, not both".into()))
        }
        (Some(q), None) => damping_from_q(q, p.k).map_err(config_err)?,
        (None, Some(g)) => g,
        (None, None) => p.gamma,
    };
    let plant = p.with_damping(gamma);
    plant.validate().map_err(config_err)?;

    let gains = match cc.gains {
        Some(g) => {
            g.validate().map_err(config_err)?;
            g
        }
        None => PidGains::defaults_for_stiffness(p.k),
    };

    let omega = match cc.frequency {
        Some(f) if f > 0.0 && f.is_finite() => std::f64::consts::TAU * f,
        Some(f) => {
            return Err(CliError::Config(format!("reference frequency {f} must be positive")))
        }
        None => measure_omega(p, cc.amplitude, opts)?,
    };

    let t_end = match cc.t_end {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(CliError::Config(format!("control.t_end = {t} must be positive"))),
        None => DEFAULT_CONTROL_PERIODS * std::f64::consts::TAU / omega,
    };

    Ok(ControlSetup { plant, gains, amplitude: cc.amplitude, omega, t_end })
}

fn cmd_analyze(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = sc.plant.resolve()?;
    let report = find_fixed_points(&p, DEFAULT_ROOT_TOL).map_err(num_err)?;
    let path = args.out.join("equilibrium.json");
    write_json(&path, to_value(&report)?, !args.no_meta)?;
    Ok(vec![path])
}

fn cmd_simulate(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = sc.plant.resolve()?;
    let run = sc
        .run
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a `run` block".into()))?;
    if run.ics.is_empty() {
        return Err(CliError::Config("run.ics must list at least one initial condition".into()));
    }
    if !(run.t_end > 0.0 && run.t_end.is_finite()) {
        return Err(CliError::Config(format!("run.t_end = {} must be positive", run.t_end)));
    }
    if let Some(i) = run.current {
        if !i.is_finite() {
            return Err(CliError::Config(format!("run.current = {i} must be finite")));
        }
    }
    let opts = sc.sim_options()?;

    let mut written = Vec::new();
    for (i, &ic) in run.ics.iter().enumerate() {
        let mut no_drive = NoDrive;
        let mut constant;
        let drive: &mut dyn DriveLaw = match run.current {
            Some(amps) => {
                constant = ConstantCurrent(amps);
                &mut constant
            }
            None => &mut no_drive,
        };
        let traj = simulate(&p, ic, run.t_end, drive, &opts).map_err(num_err)?;
        written.push(write_trajectory(&args.out, "traj", i, &traj, args)?);
    }
    Ok(written)
}

fn cmd_freqtable(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = sc.plant.resolve()?;
    if p.gamma != 0.0 {
        return Err(CliError::Config(format!(
            "frequency tables need an undamped plant, gamma = {}",
            p.gamma
        )));
    }
    let ft = sc
        .freqtable
        .as_ref()
        .ok_or_else(|| CliError::Config("freqtable needs a `freqtable` block".into()))?;
    let bound = oscillation_bound(&p)?;

    let amplitudes: Vec<f64> = match &ft.amplitudes {
        Some(list) => {
            if ft.count.is_some() || ft.span.is_some() {
                return Err(CliError::Config(
                    "freqtable takes `amplitudes` or `count`/`span`, not both".into(),
                ));
            }
            if list.len() < 2 {
                return Err(CliError::Config(
                    "freqtable.amplitudes needs at least two entries".into(),
                ));
            }
            for &a in list {
                check_amplitude(a, bound, "table amplitude")?;
            }
            list.clone()
        }
        None => {
            let n = ft.count.unwrap_or(DEFAULT_TABLE_POINTS);
            if n < 2 {
                return Err(CliError::Config(format!("freqtable.count = {n} is too small")));
            }
            let [lo, hi] = ft.span.unwrap_or(DEFAULT_TABLE_SPAN);
            if !(lo > 0.0 && lo < hi && hi < 1.0) {
                return Err(CliError::Config(format!(
                    "freqtable.span = [{lo}, {hi}] must satisfy 0 < lo < hi < 1"
                )));
            }
            (0..n)
                .map(|i| bound * (lo + (hi - lo) * i as f64 / (n - 1) as f64))
                .collect()
        }
    };
    let t_sim = ft.t_sim.unwrap_or(DEFAULT_TABLE_T);
    if !(t_sim > 0.0 && t_sim.is_finite()) {
        return Err(CliError::Config(format!("freqtable.t_sim = {t_sim} must be positive")));
    }

    let opts = sc.sim_options()?;
    let table = build_frequency_table(&p, &amplitudes, t_sim, &opts).map_err(num_err)?;

    let path = match args.format {
        Format::Csv => {
            let rows: Vec<String> = table
                .amplitudes()
                .iter()
                .zip(table.frequencies())
                .map(|(a, f)| format!("{a},{f}"))
                .collect();
            let path = args.out.join("freqtable.csv");
            write_csv(&path, "amplitude,frequency", &rows, &[], !args.no_meta)?;
            path
        }
        Format::Json => {
            let path = args.out.join("freqtable.json");
            write_json(&path, to_value(&table)?, !args.no_meta)?;
            path
        }
    };
    Ok(vec![path])
}

fn cmd_control(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = sc.plant.resolve()?;
    let cc = sc
        .control
        .as_ref()
        .ok_or_else(|| CliError::Config("control needs a `control` block".into()))?;
    if cc.ics.is_empty() {
        return Err(CliError::Config(
            "control.ics must list at least one initial condition".into(),
        ));
    }
    let opts = sc.sim_options()?;
    let setup = resolve_control(&p, cc, &opts)?;

    let mut written = Vec::new();
    let mut runs = Vec::new();
    for (i, &ic) in cc.ics.iter().enumerate() {
        let plan = plan_with_omega(setup.amplitude, setup.omega, ic).map_err(config_err)?;
        let traj = closed_loop(&setup.plant, &setup.gains, &plan, ic, setup.t_end, &opts)
            .map_err(num_err)?;
        let path = write_trajectory(&args.out, "control", i, &traj, args)?;
        written.push(path);
        if let Some(ev) = traj.events.first() {
            return Err(CliError::Numerical(format!(
                "tracking run {i} ended early: {} at t = {} (trajectory written anyway)",
                ev.kind.label(),
                ev.t
            )));
        }
        let (max_force, x_at_max) = max_control_force(&traj).map_err(num_err)?;
        let mean_force = mean_abs_force(&traj, TRANSIENT_FRACTION).map_err(num_err)?;
        let period = plan.period();
        let amp = steady_amplitude(&traj, setup.t_end - 2.0 * period, setup.t_end)
            .map_err(num_err)?;
        runs.push(json!({
            "ic": {"x": ic.x, "v": ic.v},
            "phase": plan.phase,
            "max_force": max_force,
            "x_at_max_force": x_at_max,
            "mean_abs_force": mean_force,
            "steady_amplitude": amp,
        }));
    }

    let effort = json!({
        "amplitude": setup.amplitude,
        "omega": setup.omega,
        "gamma": setup.plant.gamma,
        "gains": to_value(&setup.gains)?,
        "t_end": setup.t_end,
        "runs": runs,
    });
    let path = args.out.join("effort.json");
    write_json(&path, effort, !args.no_meta)?;
    written.push(path);
    Ok(written)
}

fn cmd_design(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let dc = sc
        .design
        .as_ref()
        .ok_or_else(|| CliError::Config("design needs a `design` block".into()))?;
    dc.magnet.validate().map_err(config_err)?;

    let mut doc = Map::new();
    doc.insert("magnet".into(), to_value(&dc.magnet)?);
    doc.insert(
        "dipole_moment".into(),
        json!(dipole_moment(&dc.magnet).map_err(config_err)?),
    );
    doc.insert(
        "magnet_constant".into(),
        json!(magnet_constant(&dc.magnet).map_err(config_err)?),
    );

    if let Some(mass) = dc.mass {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(CliError::Config(format!("design.mass = {mass} must be positive")));
        }
    }
    if let Some(beam) = &dc.beam {
        beam.validate().map_err(config_err)?;
        let k_phys = beam_stiffness(beam).map_err(config_err)?;
        doc.insert("beam".into(), to_value(beam)?);
        doc.insert(
            "second_moment_of_area".into(),
            json!(second_moment_of_area(beam).map_err(config_err)?),
        );
        doc.insert("beam_stiffness".into(), json!(k_phys));
        if let Some(mass) = dc.mass {
            let c_phys = magnet_constant(&dc.magnet).map_err(config_err)?;
            doc.insert(
                "normalized".into(),
                json!({"c": c_phys / mass, "k": k_phys / mass, "mass": mass}),
            );
        }
    }

    if let Some(qs) = &dc.qs {
        let p = sc.plant.resolve()?;
        if p.gamma != 0.0 {
            return Err(CliError::Config(
                "the sizing sweep sets damping from `qs`; configure the plant undamped".into(),
            ));
        }
        let cc = sc.control.as_ref().ok_or_else(|| {
            CliError::Config("design.qs needs a `control` block for the reference orbit".into())
        })?;
        if cc.q.is_some() || cc.gamma.is_some() {
            return Err(CliError::Config(
                "design.qs supplies the damping; drop control.q / control.gamma".into(),
            ));
        }
        let mass = dc
            .mass
            .or_else(|| sc.plant.physical.as_ref().map(|pp| pp.mass))
            .ok_or_else(|| {
                CliError::Config(
                    "design.qs needs `design.mass` (or a physical plant) to convert per-mass \
                     forces to newtons"
                        .into(),
                )
            })?;
        for &q in qs {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(CliError::Config(format!("design q = {q} must be >= 0")));
            }
        }
        let turn_area = dc.turn_area.unwrap_or(DEFAULT_TURN_AREA);
        let current = dc.current.unwrap_or(DEFAULT_COIL_CURRENT);
        if !(turn_area > 0.0 && turn_area.is_finite()) {
            return Err(CliError::Config(format!(
                "design.turn_area = {turn_area} must be positive"
            )));
        }
        if !(current > 0.0 && current.is_finite()) {
            return Err(CliError::Config(format!(
                "design.current = {current} must be positive"
            )));
        }

        let opts = sc.sim_options()?;
        let setup = resolve_control(&p, cc, &opts)?;
        let ic = State::new(setup.amplitude, 0.0);
        let plan = plan_with_omega(setup.amplitude, setup.omega, ic).map_err(config_err)?;
        let scenario = SizingScenario {
            plant: p,
            mass,
            gains: setup.gains,
            plan,
            ic,
            t_end: setup.t_end,
            opts,
            magnet: dc.magnet,
            turn_area,
            current,
        };
        let rows = size_solenoid_sweep(&scenario, qs).map_err(num_err)?;
        doc.insert("turn_area".into(), json!(turn_area));
        doc.insert("coil_current".into(), json!(current));
        doc.insert("sizing".into(), to_value(&rows)?);
    }

    let path = args.out.join("design.json");
    write_json(&path, Value::Object(doc), !args.no_meta)?;
    Ok(vec![path])
}

fn cmd_sweep(sc: &Scenario, args: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let sw = sc
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a `sweep` block".into()))?;
    let p = sc.plant.resolve()?;

    match (&sw.asymmetry, &sw.damping) {
        (Some(asym), None) => {
            if asym.deltas.is_empty() {
                return Err(CliError::Config("sweep.asymmetry.deltas is empty".into()));
            }
            for &d in &asym.deltas {
                if !(d.is_finite() && (0.0..2.0).contains(&d)) {
                    return Err(CliError::Config(format!(
                        "asymmetry delta = {d} must lie in [0, 2)"
                    )));
                }
            }
            if p.c1 != p.c2 {
                return Err(CliError::Config(
                    "asymmetry sweeps start from a symmetric plant".into(),
                ));
            }
            let rows = sweep_asymmetry(&p, &asym.deltas).map_err(num_err)?;
            let path = match args.format {
                Format::Csv => {
                    let lines: Vec<String> = rows
                        .iter()
                        .map(|r| format!("{},{},{},{}", r.delta, r.center, r.saddle_neg, r.saddle_pos))
                        .collect();
                    let path = args.out.join("sweep.csv");
                    write_csv(
                        &path,
                        "delta,center,saddle_neg,saddle_pos",
                        &lines,
                        &[],
                        !args.no_meta,
                    )?;
                    path
                }
                Format::Json => {
                    let path = args.out.join("sweep.json");
                    write_json(&path, json!({"asymmetry": to_value(&rows)?}), !args.no_meta)?;
                    path
                }
            };
            Ok(vec![path])
        }
        (None, Some(damp)) => {
            if damp.qs.is_empty() {
                return Err(CliError::Config("sweep.damping.qs is empty".into()));
            }
            if p.gamma != 0.0 {
                return Err(CliError::Config(
                    "damping sweeps set damping from `qs`; configure the plant undamped".into(),
                ));
            }
            let cc = sc.control.as_ref().ok_or_else(|| {
                CliError::Config("damping sweeps need a `control` block".into())
            })?;
            if cc.q.is_some() || cc.gamma.is_some() {
                return Err(CliError::Config(
                    "the sweep supplies the damping; drop control.q / control.gamma".into(),
                ));
            }
            let opts = sc.sim_options()?;
            let setup = resolve_control(&p, cc, &opts)?;
            let ic = State::new(setup.amplitude, 0.0);
            let plan = plan_with_omega(setup.amplitude, setup.omega, ic).map_err(config_err)?;
            let period = plan.period();

            let mut lines = Vec::new();
            let mut objs = Vec::new();
            for &q in &damp.qs {
                let gamma = damping_from_q(q, p.k).map_err(config_err)?;
                let plant = p.with_damping(gamma);
                let traj = closed_loop(&plant, &setup.gains, &plan, ic, setup.t_end, &opts)
                    .map_err(num_err)?;
                if let Some(ev) = traj.events.first() {
                    return Err(CliError::Numerical(format!(
                        "damping sweep at Q = {q} ended early: {} at t = {}",
                        ev.kind.label(),
                        ev.t
                    )));
                }
                let (max_force, x_at_max) = max_control_force(&traj).map_err(num_err)?;
                let amp = steady_amplitude(&traj, setup.t_end - 2.0 * period, setup.t_end)
                    .map_err(num_err)?;
                lines.push(format!("{q},{gamma},{max_force},{x_at_max},{amp}"));
                objs.push(json!({
                    "q": q,
                    "gamma": gamma,
                    "f_ctrl_max": max_force,
                    "x_at_max": x_at_max,
                    "steady_amplitude": amp,
                }));
            }

            let path = match args.format {
                Format::Csv => {
                    let path = args.out.join("sweep.csv");
                    write_csv(
                        &path,
                        "q,gamma,f_ctrl_max,x_at_max,steady_amplitude",
                        &lines,
                        &[],
                        !args.no_meta,
                    )?;
                    path
                }
                Format::Json => {
                    let path = args.out.join("sweep.json");
                    write_json(&path, json!({"damping": objs}), !args.no_meta)?;
                    path
                }
            };
            Ok(vec![path])
        }
        _ => Err(CliError::Config(
            "sweep needs exactly one of `asymmetry` or `damping`".into(),
        )),
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(format!("serializing report: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn write_json(path: &Path, mut value: Value, meta: bool) -> Result<(), CliError> {
    if meta {
        if let Value::Object(map) = &mut value {
            map.insert("generated_at_unix_s".into(), json!(now_unix()));
        }
    }
    let mut text = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::Io(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// Comment lines start with `#`: an optional timestamp up top, event rows at
/// the bottom. Data rows use the shortest decimal text that round-trips.
fn write_csv(
    path: &Path,
    header: &str,
    rows: &[String],
    trailers: &[String],
    meta: bool,
) -> Result<(), CliError> {
    let mut text = String::new();
    if meta {
        text.push_str(&format!("# generated_at_unix_s,{}\n", now_unix()));
    }
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    for tr in trailers {
        text.push_str(tr);
        text.push('\n');
    }
    write_text(path, &text)
}

fn write_trajectory(
    out: &Path,
    stem: &str,
    index: usize,
    traj: &Trajectory,
    args: &CommonArgs,
) -> Result<PathBuf, CliError> {
    match args.format {
        Format::Csv => {
            let path = out.join(format!("{stem}_{index:03}.csv"));
            let mut rows = Vec::with_capacity(traj.len());
            for i in 0..traj.len() {
                let (s, d) = (traj.states[i], traj.drives[i]);
                rows.push(format!("{},{},{},{},{}", traj.times[i], s.x, s.v, d.force, d.current));
            }
            let trailers: Vec<String> = traj
                .events
                .iter()
                .map(|e| format!("# event,{},{}", e.kind.label(), e.t))
                .collect();
            write_csv(&path, "t,x,v,f_control,current", &rows, &trailers, !args.no_meta)?;
            Ok(path)
        }
        Format::Json => {
            let path = out.join(format!("{stem}_{index:03}.json"));
            let value = json!({
                "t": traj.times,
                "x": traj.states.iter().map(|s| s.x).collect::<Vec<_>>(),
                "v": traj.states.iter().map(|s| s.v).collect::<Vec<_>>(),
                "f_control": traj.drives.iter().map(|d| d.force).collect::<Vec<_>>(),
                "current": traj.drives.iter().map(|d| d.current).collect::<Vec<_>>(),
                "events": traj
                    .events
                    .iter()
                    .map(|e| json!({"kind": e.kind.label(), "t": e.t}))
                    .collect::<Vec<_>>(),
            });
            write_json(&path, value, !args.no_meta)?;
            Ok(path)
        }
    }
}
