use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cmperiodic::analysis::{classify, monitor_invariants, sweep, AnalysisConfig};
use cmperiodic::periodic::warm_start;
use cmperiodic::reproduction::{r0_time_averaged, DEFAULT_R0_TOL};
use cmperiodic::{find_periodic_orbit, r0_periodic, simulate, ParamKey, State64, Trajectory64};
use serde_json::json;
use thiserror::Error;

use crate::config::{parse_config, ConfigError, RunConfig};
use crate::plot::{render, render_grid, Chart, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] cmperiodic::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(ConfigError::Parse { .. }) => "config-parse",
            CliError::Config(ConfigError::Validation { .. }) => "config-validation",
            CliError::Model(e) if e.is_numerical() => "numerical",
            CliError::Model(_) => "input",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Invariant(_) => "invariant",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Model(e) if e.is_numerical() => 3,
            CliError::Model(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Invariant(_) => 4,
        }
    }

    /// `error: category=<name> message="<text>"` on one line.
    pub fn error_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error: category={} message=\"{}\"", self.category(), msg)
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmperiodic", version, about = "Periodic within-host infection model: simulation, R0, orbits and sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write them as CSV (and optionally SVG).
    Simulate(SimulateArgs),
    /// Compute the periodic basic reproduction number.
    R0(R0Args),
    /// Locate the endemic periodic orbit by Newton shooting.
    Orbit(OrbitArgs),
    /// Recompute R0 and the regime over values of one parameter.
    Sweep(SweepArgs),
    /// Check positivity and boundedness along long simulations.
    Validate(CommonArgs),
    /// Classify the long-run regime (extinction or persistence).
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// End time in hours (defaults to run.horizon).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Output CSV path (defaults to `<output_dir>/simulate.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a four-panel time-series SVG here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Output grid spacing in hours.
    #[arg(long, default_value_t = 1.0)]
    pub grid_step: f64,
    /// Simulate only this initial condition (zero-based index).
    #[arg(long)]
    pub ic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct R0Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Absolute bisection tolerance on R0.
    #[arg(long, default_value_t = DEFAULT_R0_TOL)]
    pub tol: f64,
    /// Also write the summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hours simulated from the first initial condition before shooting.
    #[arg(long, default_value_t = cmperiodic::periodic::DEFAULT_TRANSIENT_HOURS)]
    pub transient: f64,
    /// Newton stopping tolerance on the period-map residual.
    #[arg(long, default_value_t = 1e-10)]
    pub newton_tol: f64,
    /// Maximum number of Newton iterations.
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Output CSV path for the sampled orbit (defaults to `<output_dir>/orbit.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write I-V, T-V and E-V phase-plane SVGs into this directory.
    #[arg(long)]
    pub svg_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter key, e.g. `beta.mean`, `c` or `d.amplitude`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated parameter values.
    #[arg(long)]
    pub values: String,
    /// Output CSV path (defaults to `<output_dir>/sweep.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(parse_config(&text)?)
}

fn resolve_out(explicit: &Option<PathBuf>, cfg: &RunConfig, default_name: &str) -> Result<PathBuf, CliError> {
    match (explicit, &cfg.output_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(default_name)),
        (None, None) => Err(CliError::Usage("--out is required when run.output_dir is not set".into())),
    }
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<usize, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    create_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    let mut n = 0;
    for row in rows {
        w.write_record(&row).map_err(|e| io_error(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| io_error(path, e))?;
    Ok(n)
}

fn state_fields(t: f64, s: &State64) -> Vec<String> {
    let mut row = vec![format_number(t)];
    row.extend(s.to_array().iter().map(|&v| format_number(v)));
    row
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn analysis_config(cfg: &RunConfig) -> AnalysisConfig<f64> {
    AnalysisConfig {
        simulation: cfg.integrator,
        spectral: cfg.spectral,
        ..AnalysisConfig::default()
    }
}

fn ic_label(s: &State64) -> String {
    let [t, e, i, v] = s.to_array();
    format!("({}, {}, {}, {})", format_number(t), format_number(e), format_number(i), format_number(v))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::R0(a) => cmd_r0(a, out),
        Command::Orbit(a) => cmd_orbit(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Classify(a) => cmd_classify(a, out),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.common.config)?;
    let t_end = args.t_end.unwrap_or(cfg.horizon);
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(CliError::Usage(format!("--t-end must be > 0, got {t_end}")));
    }
    if !(args.grid_step.is_finite() && args.grid_step > 0.0) {
        return Err(CliError::Usage(format!("--grid-step must be > 0, got {}", args.grid_step)));
    }
    let selected: Vec<(usize, State64)> = match args.ic {
        Some(i) => {
            let s = cfg.initial_conditions.get(i).ok_or_else(|| {
                CliError::Usage(format!(
                    "--ic {i} is out of range ({} initial conditions configured)",
                    cfg.initial_conditions.len()
                ))
            })?;
            vec![(i, *s)]
        }
        None => cfg.initial_conditions.iter().copied().enumerate().collect(),
    };
    let trajectories: Vec<(usize, State64, Trajectory64)> = selected
        .into_iter()
        .map(|(i, s)| Ok((i, s, simulate(&cfg.model, &s, t_end, args.grid_step, &cfg.integrator)?)))
        .collect::<Result<_, CliError>>()?;

    let path = resolve_out(&args.out, &cfg, "simulate.csv")?;
    let rows = if trajectories.len() == 1 {
        let traj = &trajectories[0].2;
        write_csv(&path, &["t", "T", "E", "I", "V"], traj.iter().map(|(t, s)| state_fields(t, s)))?
    } else {
        write_csv(
            &path,
            &["ic", "t", "T", "E", "I", "V"],
            trajectories.iter().flat_map(|(i, _, traj)| {
                traj.iter().map(move |(t, s)| {
                    let mut row = vec![i.to_string()];
                    row.extend(state_fields(t, s));
                    row
                })
            }),
        )?
    };
    emit(out, &format!("wrote {} ({rows} rows)\n", path.display()))?;

    if let Some(svg) = &args.svg {
        let names = ["T (target cells)", "E (exposed cells)", "I (infectious cells)", "V (virus)"];
        let charts: Vec<Chart> = names
            .iter()
            .enumerate()
            .map(|(k, name)| Chart {
                title: name.to_string(),
                x_label: "time (hours)".into(),
                y_label: name.split(' ').next().unwrap_or(name).to_string(),
                series: trajectories
                    .iter()
                    .map(|(_, s0, traj)| Series {
                        label: ic_label(s0),
                        points: traj.iter().map(|(t, s)| (t, s.to_array()[k])).collect(),
                    })
                    .collect(),
            })
            .collect();
        write_text(svg, &render_grid(&charts, 2, 480.0, 320.0))?;
        emit(out, &format!("wrote {}\n", svg.display()))?;
    }
    Ok(())
}

pub fn cmd_r0(args: &R0Args, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.common.config)?;
    let r = r0_periodic(&cfg.model, args.tol, &cfg.spectral)?;
    let averaged = r0_time_averaged(&cfg.model);
    let mut text = format!(
        "r0={}\nrho_at_one={}\nbracket_lo={}\nbracket_hi={}\niterations={}\nmethod={}\nno_infection_term={}\nr0_time_averaged={}\n",
        format_number(r.value),
        format_number(r.rho_at_one),
        format_number(r.bracket.0),
        format_number(r.bracket.1),
        r.iterations,
        r.method.name(),
        r.no_infection_term,
        format_number(averaged),
    );
    if cfg.model.is_autonomous() {
        text.push_str(&format!("r0_closed_form={}\n", format_number(averaged)));
    }
    emit(out, &text)?;
    if let Some(path) = &args.json {
        let summary = json!({
            "r0": r.value,
            "rho_at_one": r.rho_at_one,
            "bracket": [r.bracket.0, r.bracket.1],
            "iterations": r.iterations,
            "method": r.method.name(),
            "no_infection_term": r.no_infection_term,
            "r0_time_averaged": averaged,
            "tol": args.tol,
        });
        let body = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        write_text(path, &body)?;
    }
    Ok(())
}

/// Sidecar file name for Floquet multipliers: `<stem>_multipliers.csv`.
pub fn multipliers_path(orbit_csv: &Path) -> PathBuf {
    let stem = orbit_csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "orbit".into());
    orbit_csv.with_file_name(format!("{stem}_multipliers.csv"))
}

pub const PHASE_PLANES: [(&str, usize, usize); 3] = [("I_V", 2, 3), ("T_V", 0, 3), ("E_V", 1, 3)];

pub fn cmd_orbit(args: &OrbitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.common.config)?;
    let path = resolve_out(&args.out, &cfg, "orbit.csv")?;
    let seed = cfg.initial_conditions[0];
    let guess = warm_start(&cfg.model, &seed, args.transient, &cfg.integrator)?;
    let orbit = find_periodic_orbit(&cfg.model, &guess, &cfg.spectral, args.newton_tol, args.max_iter)?;

    write_csv(
        &path,
        &["t", "T", "E", "I", "V"],
        orbit.times.iter().zip(&orbit.states).map(|(&t, s)| state_fields(t, s)),
    )?;
    let mpath = multipliers_path(&path);
    write_csv(
        &mpath,
        &["index", "re", "im", "modulus"],
        orbit.floquet_multipliers.iter().enumerate().map(|(i, z)| {
            vec![i.to_string(), format_number(z.re), format_number(z.im), format_number(z.norm())]
        }),
    )?;

    let mut text = format!(
        "newton_iterations={}\nnewton_residual={}\nclosure_error={}\nstable={}\nstability_margin={}\n",
        orbit.newton_iterations,
        format_number(orbit.newton_residual),
        format_number(orbit.closure_error()),
        orbit.stable,
        format_number(orbit.stability_margin),
    );
    for (i, z) in orbit.floquet_multipliers.iter().enumerate() {
        text.push_str(&format!("multiplier_{i}={}{:+}i |{}|\n", format_number(z.re), z.im, format_number(z.norm())));
    }
    text.push_str(&format!("wrote {}\nwrote {}\n", path.display(), mpath.display()));

    if let Some(dir) = &args.svg_dir {
        let names = ["T", "E", "I", "V"];
        for (name, x, y) in PHASE_PLANES {
            let chart = Chart {
                title: format!("Limit cycle, {} against {}", names[y], names[x]),
                x_label: names[x].into(),
                y_label: names[y].into(),
                series: vec![Series {
                    label: "orbit".into(),
                    points: orbit.states.iter().map(|s| (s.to_array()[x], s.to_array()[y])).collect(),
                }],
            };
            let file = dir.join(format!("phase_{name}.svg"));
            write_text(&file, &render(&chart, 520.0, 420.0))?;
            text.push_str(&format!("wrote {}\n", file.display()));
        }
    }
    emit(out, &text)
}

fn require_classifiable(cfg: &RunConfig) -> Result<(), CliError> {
    let ics = &cfg.initial_conditions;
    if ics.len() < 3 || ics.iter().any(|s| !s.is_strictly_positive()) {
        return Err(ConfigError::Validation {
            key: "run.initial_conditions".into(),
            message: "regime classification needs at least 3 strictly positive initial conditions".into(),
        }
        .into());
    }
    let min = cfg.model.period() * cmperiodic::analysis::MIN_HORIZON_PERIODS as f64;
    if cfg.horizon < min {
        return Err(ConfigError::Validation {
            key: "run.horizon".into(),
            message: format!("regime classification needs a horizon of at least {min} hours"),
        }
        .into());
    }
    Ok(())
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    let list = list.trim();
    if list.is_empty() {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--values: `{}` is not a number", v.trim())))
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.common.config)?;
    let key = ParamKey::parse(&args.param).ok_or_else(|| {
        let known: Vec<&str> = ParamKey::ALL.iter().map(|k| k.name()).collect();
        CliError::Usage(format!("unknown parameter `{}` (expected one of {})", args.param, known.join(", ")))
    })?;
    let values = parse_values(&args.values)?;
    require_classifiable(&cfg)?;
    let path = resolve_out(&args.out, &cfg, "sweep.csv")?;
    let rows = sweep(&cfg.model, key, &values, &cfg.initial_conditions, cfg.horizon, &analysis_config(&cfg));
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let n = write_csv(
        &path,
        &["value", "r0", "rho_at_one", "regime", "error"],
        rows.iter().map(|row| match &row.outcome {
            Ok(d) => vec![
                format_number(row.value),
                format_number(d.r0),
                format_number(d.rho_at_one),
                d.regime.name().into(),
                String::new(),
            ],
            Err(e) => vec![
                format_number(row.value),
                String::new(),
                String::new(),
                if matches!(e, cmperiodic::Error::InvalidSweepValue { .. }) { "invalid" } else { "failed" }.into(),
                e.to_string(),
            ],
        }),
    )?;
    emit(out, &format!("param={}\nrows={n}\nerror_rows={failed}\nwrote {}\n", key.name(), path.display()))
}

pub fn cmd_validate(args: &CommonArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let step = cfg.model.period() / 64.0;
    let mut bad = 0;
    let mut text = format!("horizon={}\n", format_number(cfg.horizon));
    for (i, ic) in cfg.initial_conditions.iter().enumerate() {
        let traj = simulate(&cfg.model, ic, cfg.horizon, step, &cfg.integrator)?;
        let log = monitor_invariants(&traj, &cfg.model, cfg.integrator.abs_tol);
        if !log.is_clean() {
            bad += 1;
        }
        text.push_str(&format!(
            "ic={i} positivity_violations={} worst_undershoot={} bound_estimate={} first_half_max={} second_half_max={} bounded={}\n",
            log.positivity_violations,
            format_number(log.worst_undershoot),
            format_number(log.bound_estimate),
            format_number(log.first_half_max),
            format_number(log.second_half_max),
            log.bounded,
        ));
    }
    emit(out, &text)?;
    if bad > 0 {
        return Err(CliError::Invariant(format!(
            "{bad} of {} trajectories violated positivity or boundedness",
            cfg.initial_conditions.len()
        )));
    }
    Ok(())
}

pub fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.common.config)?;
    require_classifiable(&cfg)?;
    let report = classify(&cfg.model, &cfg.initial_conditions, cfg.horizon, &analysis_config(&cfg))?;
    let mut text = format!(
        "regime={}\nr0={}\nrho_at_one={}\nhorizon={}\n",
        report.regime.name(),
        format_number(report.r0.value),
        format_number(report.r0.rho_at_one),
        format_number(report.horizon),
    );
    if let Some(eta) = report.persistence_eta {
        text.push_str(&format!("persistence_eta={}\n", format_number(eta)));
    }
    let mut evidence = Vec::new();
    for (i, e) in report.evidence.iter().enumerate() {
        match &e.result {
            Ok(ev) => {
                text.push_str(&format!(
                    "ic={i} final_infection_max={} tstar_distance={} infection_floor={} floor_variation={}\n",
                    format_number(ev.final_infection_max),
                    format_number(ev.tstar_distance),
                    format_number(ev.infection_floor),
                    format_number(ev.floor_variation),
                ));
                evidence.push(json!({
                    "initial": e.initial.to_array(),
                    "final_infection_max": ev.final_infection_max,
                    "tstar_distance": ev.tstar_distance,
                    "infection_floor": ev.infection_floor,
                    "floor_variation": ev.floor_variation,
                }));
            }
            Err(err) => {
                text.push_str(&format!("ic={i} error=\"{err}\"\n"));
                evidence.push(json!({ "initial": e.initial.to_array(), "error": err.to_string() }));
            }
        }
    }
    emit(out, &text)?;
    if let Some(path) = &args.json {
        let summary = json!({
            "regime": report.regime.name(),
            "r0": report.r0.value,
            "rho_at_one": report.r0.rho_at_one,
            "horizon": report.horizon,
            "persistence_eta": report.persistence_eta,
            "evidence": evidence,
        });
        write_text(path, &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    }
    Ok(())
}
