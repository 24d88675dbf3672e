//! `cohold`: batch front end for design, verification, simulation and sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cohold::codesign::{design, CodesignOptions, DesignConfig, DesignOutcome, DesignResult};
use cohold::hybridsim::{self, Disturbance, HybridArc, InitialState, PolicyKind, SimSettings, TransmissionPolicy, SINUSOID_FREQUENCY};
use cohold::io::{fmt_f64, read_json, write_json};
use cohold::model::PlantModel;
use cohold::{analysis, Error};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "cohold", version, about = "Co-design of output-feedback controllers and holding devices under aperiodic sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the co-design algorithm on a plant and write the design.
    Design {
        /// Plant and design options (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output design document (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the certificate stored in a design document.
    Verify {
        #[arg(long)]
        design: PathBuf,
        /// Scale-relative slack allowed on every eigenvalue sign.
        #[arg(long, default_value_t = analysis::DEFAULT_REL_TOL)]
        rel_tol: f64,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the hybrid closed loop of a design.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        /// Scenario (JSON); zero initial state and zero disturbance when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON; stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Replace the holder by a zero-order hold.
        #[arg(long)]
        zoh: bool,
        /// Override the scenario's transmission policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Seed for random policies and disturbances.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run designs over a grid of maximal transmission intervals.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Table CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Every interval equal to T2.
    Constant,
    /// Intervals uniform on [T1, T2].
    Random,
    Sinusoidal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DisturbanceSpec {
    Zero,
    Pulse { amplitude: Vec<f64>, t_on: f64, t_off: f64 },
    Random { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    #[serde(default)]
    x_p0: Option<Vec<f64>>,
    #[serde(default)]
    x_c0: Option<Vec<f64>>,
    #[serde(default)]
    yhat0: Option<Vec<f64>>,
    /// Initial timer; defaults to T2.
    #[serde(default)]
    tau0: Option<f64>,
    #[serde(default = "default_horizon")]
    t_end: f64,
    #[serde(default)]
    policy: Option<PolicyKind>,
    #[serde(default = "default_disturbance")]
    disturbance: DisturbanceSpec,
    #[serde(default)]
    settings: SimSettings,
    /// Growth of `|(x̄, η)|` over its initial value flagged as divergence.
    #[serde(default = "default_divergence")]
    divergence_factor: f64,
}

fn default_horizon() -> f64 {
    20.0
}
fn default_disturbance() -> DisturbanceSpec {
    DisturbanceSpec::Zero
}
fn default_divergence() -> f64 {
    10.0
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            x_p0: None,
            x_c0: None,
            yhat0: None,
            tau0: None,
            t_end: default_horizon(),
            policy: None,
            disturbance: DisturbanceSpec::Zero,
            settings: SimSettings::default(),
            divergence_factor: default_divergence(),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimSummary {
    zoh: bool,
    policy: PolicyKind,
    samples: usize,
    jumps: usize,
    t_end: f64,
    initial_distance: f64,
    final_distance: f64,
    max_distance: f64,
    diverged: bool,
    decay: Option<hybridsim::DecayEstimate>,
    l2: Option<hybridsim::L2Report>,
}

#[derive(Debug, Serialize)]
struct Infeasible {
    status: &'static str,
    delta_min: Option<f64>,
    log: Vec<cohold::codesign::CcRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    plant: PlantModel,
    options: CodesignOptions,
    grid: Vec<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Singular { .. } | Error::Integration { .. } => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

fn run(cmd: Command) -> cohold::Result<u8> {
    match cmd {
        Command::Design { config, out } => cmd_design(&config, &out),
        Command::Verify { design, rel_tol, out } => cmd_verify(&design, rel_tol, out.as_deref()),
        Command::Simulate { design, config, out, summary, zoh, policy, seed } => cmd_simulate(&design, config.as_deref(), &out, summary.as_deref(), zoh, policy, seed),
        Command::Sweep { config, out } => cmd_sweep(&config, &out),
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> cohold::Result<T> {
    read_json(path).map_err(|e| match e {
        Error::Json(j) => Error::InvalidInput(format!("{}: {j}", path.display())),
        Error::Io(io) => Error::InvalidInput(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn cmd_design(config: &Path, out: &Path) -> cohold::Result<u8> {
    let cfg: DesignConfig = load(config)?;
    match design(&cfg.plant, &cfg.options)? {
        DesignOutcome::Feasible(r) => {
            write_json(out, &r)?;
            eprintln!("design found at delta = {}, trace(F F_i) = {:?}", r.delta_used, r.cc_trace);
            Ok(0)
        }
        DesignOutcome::NoFeasibleSolution { delta_min, log } => {
            write_json(out, &Infeasible { status: "infeasible", delta_min, log })?;
            eprintln!("no feasible design");
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_verify(design: &Path, rel_tol: f64, out: Option<&Path>) -> cohold::Result<u8> {
    if !(rel_tol >= 0.0 && rel_tol.is_finite()) {
        return Err(Error::InvalidInput(format!("--rel-tol must be non-negative, got {rel_tol}")));
    }
    let d: DesignResult = load(design)?;
    let report = d.verify(rel_tol)?;
    match out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    for c in report.failures() {
        eprintln!("failed: {} (margin {:.3e}, scale {:.3e})", c.name, c.margin, c.scale);
    }
    Ok(if report.passed { 0 } else { EXIT_INFEASIBLE })
}

fn initial_state(plant: &PlantModel, n_c: usize, sc: &Scenario, t2: f64) -> cohold::Result<InitialState> {
    let x_p = sc.x_p0.clone().unwrap_or_else(|| vec![0.0; plant.n_p()]);
    let x_c = sc.x_c0.clone().unwrap_or_else(|| vec![0.0; n_c]);
    let yhat = sc.yhat0.clone().unwrap_or_else(|| vec![0.0; plant.n_y()]);
    if x_c.len() != n_c {
        return Err(Error::InvalidInput(format!("x_c0 has {} entries, the controller has {n_c} states", x_c.len())));
    }
    InitialState::from_components(plant, &x_p, &x_c, &yhat, sc.tau0.unwrap_or(t2))
}

fn cmd_simulate(design: &Path, config: Option<&Path>, out: &Path, summary: Option<&Path>, zoh: bool, policy: Option<PolicyArg>, seed: Option<u64>) -> cohold::Result<u8> {
    let d: DesignResult = load(design)?;
    let sc: Scenario = match config {
        Some(p) => load(p)?,
        None => Scenario::default(),
    };
    if !(sc.divergence_factor > 0.0) {
        return Err(Error::InvalidInput("divergence_factor must be positive".into()));
    }
    let timing = d.timing;
    let kind = match policy {
        Some(PolicyArg::Constant) => PolicyKind::Constant { interval: timing.t2() },
        Some(PolicyArg::Random) => PolicyKind::Uniform { seed: seed.unwrap_or(0) },
        Some(PolicyArg::Sinusoidal) => PolicyKind::Sinusoidal { freq: SINUSOID_FREQUENCY, phase: 0.0 },
        None => match (sc.policy, seed) {
            (Some(PolicyKind::Uniform { .. }), Some(s)) => PolicyKind::Uniform { seed: s },
            (Some(k), _) => k,
            (None, _) => PolicyKind::Sinusoidal { freq: SINUSOID_FREQUENCY, phase: 0.0 },
        },
    };
    let pol = TransmissionPolicy::new(kind, timing)?;
    let dist = match &sc.disturbance {
        DisturbanceSpec::Zero => Disturbance::zero(d.plant.n_d()),
        DisturbanceSpec::Pulse { amplitude, t_on, t_off } => {
            if amplitude.len() != d.plant.n_d() {
                return Err(Error::InvalidInput(format!("pulse amplitude has {} entries, the plant has {} disturbance channels", amplitude.len(), d.plant.n_d())));
            }
            Disturbance::pulse(amplitude.clone(), *t_on, *t_off)?
        }
        DisturbanceSpec::Random { seed: s } => Disturbance::random_finite_energy(d.plant.n_d(), seed.unwrap_or(*s)),
    };
    let cl = if zoh { hybridsim::zoh_variant(&d.plant, &d.controller)? } else { d.closed_loop()? };
    let x0 = initial_state(&d.plant, d.controller.n_c(), &sc, timing.t2())?;
    let arc = hybridsim::simulate(&cl, &x0, &dist, &pol, sc.t_end, &sc.settings)?;
    std::fs::write(out, arc.to_csv())?;

    let s = summarize(&arc, zoh, kind, d.gamma, sc.divergence_factor);
    match summary {
        Some(p) => write_json(p, &s)?,
        None => println!("{}", serde_json::to_string_pretty(&s)?),
    }
    Ok(0)
}

fn summarize(arc: &HybridArc, zoh: bool, policy: PolicyKind, gamma: f64, factor: f64) -> SimSummary {
    let initial = arc.first().distance();
    let max = arc.max_distance();
    SimSummary {
        zoh,
        policy,
        samples: arc.samples.len(),
        jumps: arc.jumps.len(),
        t_end: arc.last().t,
        initial_distance: initial,
        final_distance: arc.last().distance(),
        max_distance: max,
        diverged: initial > 0.0 && max > factor * initial,
        decay: hybridsim::decay_estimate(arc).ok(),
        l2: hybridsim::empirical_l2_ratio(arc, gamma, 0.0).ok(),
    }
}

fn cmd_sweep(config: &Path, out: &Path) -> cohold::Result<u8> {
    let cfg: SweepConfig = load(config)?;
    let rows = hybridsim::sweep_t2(&cfg.plant, cfg.options.gamma, &cfg.grid, &cfg.options)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut csv = String::from("t2,feasible,delta_used,e_norm,h_norm,max_re_spec_h,message\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", fmt_f64(r.t2), r.feasible, opt(r.delta_used), opt(r.e_norm), opt(r.h_norm), opt(r.max_re_spec_h), r.message.replace([',', '\n'], " "));
    }
    std::fs::write(out, csv)?;
    Ok(0)
}
