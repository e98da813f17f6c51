//! The four subcommands. Each returns its report; `main` parses arguments,
//! prints, and maps errors to exit codes.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use so3lab::lyapunov::{certify, lyapunov_trace, verdict_with_simulation, SeparationCertificate, Verdict};
use so3lab::observer::Equilibrium;
use so3lab::sim::{
    convergence_study, monte_carlo, run, stabilization_v_a, tracking_v_b, ControlMode, MonteCarloSpec, Sample, Sampler,
    Scenario, SimError, TorqueProfile, TrajectoryLog,
};

use crate::config::{self, ConfigError};
use crate::csv;
use crate::report::{format_f64, Report};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BLOWUP: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;

/// Error norms below this count as converged in reports and Monte Carlo
/// classification.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-4;

/// Environment variable capping the Monte Carlo worker count.
pub const THREADS_ENV: &str = "SO3LAB_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Blowup { t: f64 },
    Simulation(SimError),
    Io(PathBuf, io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Blowup { .. } => EXIT_BLOWUP,
            CliError::Simulation(_) | CliError::Io(..) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Blowup { t } => write!(f, "numerical blow-up at t = {t}"),
            CliError::Simulation(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NumericalBlowup { t } => CliError::Blowup { t },
            SimError::InvalidScenario(m) => CliError::Usage(m),
            other => CliError::Simulation(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Set-point stabilization example.
    VA,
    /// Euler-angle tracking example.
    VB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeOverride {
    FullState,
    VelocityFree,
    OpenLoop,
}

/// Where a scenario comes from: a config file or a preset, with an optional
/// control mode override.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioSource {
    pub config: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub mode: Option<ModeOverride>,
}

impl ScenarioSource {
    pub fn resolve(&self) -> Result<Scenario, CliError> {
        let mut sc = match (&self.config, self.preset) {
            (Some(path), None) => config::load(path).map_err(CliError::Config)?,
            (None, Some(Preset::VA)) => stabilization_v_a(),
            (None, Some(Preset::VB)) => tracking_v_b(),
            (Some(_), Some(_)) => return Err(CliError::Usage("give either a config file or --preset, not both".into())),
            (None, None) => return Err(CliError::Usage("a config file or --preset is required".into())),
        };
        if let Some(m) = self.mode {
            sc.mode = match m {
                ModeOverride::FullState => ControlMode::FullState,
                ModeOverride::VelocityFree => ControlMode::VelocityFree,
                ModeOverride::OpenLoop => ControlMode::OpenLoop(TorqueProfile::Zero),
            };
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// First 16 hex digits of a SHA-256 over the scenario's debug form.
pub fn scenario_digest(sc: &Scenario) -> String {
    let hash = Sha256::digest(format!("{sc:?}").as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Fit window for the exponential rate: the middle two thirds of the run.
fn fit_window(duration: f64) -> (f64, f64) {
    (duration / 6.0, duration * 5.0 / 6.0)
}

/// Per-sample combined Lyapunov function, available for certified scenarios.
fn combined_lyapunov(cert: &SeparationCertificate, log: &TrajectoryLog) -> Option<Vec<f64>> {
    let (c1, c2) = cert.constants?;
    let problem = cert.problem.as_ref()?;
    let matrices = cert.matrices.as_ref()?;
    (cert.verdict == Verdict::Certified)
        .then(|| lyapunov_trace(problem, matrices, c1, c2, log).iter().map(|s| s.v).collect())
}

pub struct SimulateOutput {
    pub report: Report,
    pub log: TrajectoryLog,
}

pub fn simulate(source: &ScenarioSource, out: Option<&Path>) -> Result<SimulateOutput, CliError> {
    let sc = source.resolve()?;
    let cert = certify(&sc);
    let start = Instant::now();
    let log = run(&sc)?;
    let wall = start.elapsed().as_secs_f64();
    let v = combined_lyapunov(&cert, &log);
    if let Some(path) = out {
        let mut w = create(path)?;
        csv::write_log(&mut w, &log, v.as_deref())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    }

    let mut r = Report::new("simulate");
    r.push("scenario", scenario_digest(&sc));
    r.push("mode", sc.mode.label());
    r.number("step", sc.step);
    r.push("steps", sc.steps());
    let end = log.last();
    r.number("final_t", end.t);
    let metrics: [(&str, fn(&Sample) -> f64); 4] = [
        ("eRE", |s| s.e_r_e.norm()),
        ("westim_err", |s| s.velocity_error.norm()),
        ("eR", |s| s.e_r.norm()),
        ("eOmega", |s| s.e_omega.norm()),
    ];
    for (name, f) in metrics {
        r.number(&format!("final_{name}"), f(end));
    }
    for (name, f) in metrics {
        r.optional(&format!("settle_{name}"), log.settling_time(CONVERGENCE_THRESHOLD, f));
    }
    let (t0, t1) = fit_window(sc.duration);
    let fit = log.exponential_fit(t0, t1, Sample::error_sum);
    r.optional("decay_rate", fit.map(|f| f.slope));
    r.optional("decay_r2", fit.map(|f| f.r_squared));
    r.push("verdict", cert.verdict.label());
    r.push("reprojections", log.reprojections);
    r.number("max_ortho", log.max_orthogonality_residual());
    r.number("wall_time_s", wall);
    Ok(SimulateOutput { report: r, log })
}

pub fn certify_command(source: &ScenarioSource, simulate: bool) -> Result<Report, CliError> {
    let sc = source.resolve()?;
    let cert = certify(&sc);
    let mut r = Report::new("certify");
    r.push("scenario", scenario_digest(&sc));
    r.number("inertia_ratio", cert.ratio.lhs);
    r.number("weight_ratio", cert.ratio.rhs);
    r.push("ratio_ok", cert.ratio.ok);
    r.number("psi", cert.psi);
    r.push("controller_domain_ok", cert.controller_domain_ok);
    r.number("psi_bar_e_limit", cert.psi_bar_e_limit);
    r.optional("psi_bar_e", cert.psi_bar_e);
    r.optional("roa_initial_margin", cert.roa.map(|x| x.initial_margin));
    r.optional("roa_limit_margin", cert.roa.map(|x| x.limit_margin));
    r.optional("roa_velocity_margin", cert.roa.map(|x| x.velocity_margin));
    match cert.constants {
        Some((c1, c2)) => {
            r.number("c1", c1);
            r.number("c2", c2);
        }
        None => r.push("constants", "infeasible"),
    }
    r.push("all_pd", cert.all_pd);
    for reason in &cert.reasons {
        r.push("reason", reason);
    }
    let verdict = if simulate {
        match run(&sc) {
            Ok(log) => {
                r.number("simulated_initial_error", log.samples[0].error_sum());
                r.number("simulated_final_error", log.last().error_sum());
                verdict_with_simulation(&cert, &log)
            }
            Err(SimError::NumericalBlowup { t }) => {
                r.number("blowup_t", t);
                Verdict::Divergent
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        cert.verdict
    };
    r.push("verdict", verdict.label());
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub n: usize,
    pub seed: u64,
    pub sampler: Sampler,
    pub threads: Option<usize>,
}

/// Reads the worker cap from [`THREADS_ENV`].
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
    }
}

pub fn montecarlo(source: &ScenarioSource, opts: &MonteCarloOptions, out: Option<&Path>) -> Result<Report, CliError> {
    if opts.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let sc = source.resolve()?;
    let spec = MonteCarloSpec {
        n: opts.n,
        sampler: opts.sampler,
        seed: opts.seed,
        threads: opts.threads,
        threshold: CONVERGENCE_THRESHOLD,
    };
    let start = Instant::now();
    let report = monte_carlo(&sc, &spec)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(path) = out {
        let mut w = create(path)?;
        let mut write = || -> io::Result<()> {
            writeln!(w, "run_id,class,time_to_1e-4,max_PsiE")?;
            for o in &report.outcomes {
                let t = o.time_to_threshold.map_or("none".to_string(), format_f64);
                writeln!(w, "{},{},{},{}", o.run_id, o.class.label(), t, format_f64(o.max_psi_e))?;
            }
            w.flush()
        };
        write().map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    }
    let mut r = Report::new("montecarlo");
    r.push("scenario", scenario_digest(&sc));
    r.push("runs", opts.n);
    r.push("seed", opts.seed);
    r.push("desired", report.count(Equilibrium::Desired));
    for i in 1..=3 {
        r.push(&format!("undesired_{i}"), report.count(Equilibrium::Undesired(i)));
    }
    r.push("not_converged", report.count(Equilibrium::NotEquilibrium));
    let worst = report.outcomes.iter().filter_map(|o| o.time_to_threshold).fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    r.optional("max_time_to_1e-4", worst);
    r.number("wall_time_s", wall);
    Ok(r)
}

pub struct ValidateOutput {
    pub report: Report,
    pub passed: bool,
}

pub fn validate(source: &ScenarioSource, steps: Option<&[f64]>, corrupt: Option<f64>) -> Result<ValidateOutput, CliError> {
    let sc = source.resolve()?;
    let steps = match steps {
        Some(s) => s.to_vec(),
        None => vec![4.0 * sc.step, 2.0 * sc.step, sc.step],
    };
    if steps.len() < 2 || steps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(CliError::Usage("--steps needs at least two positive step sizes".into()));
    }
    let study = convergence_study(&sc, &steps, corrupt)?;
    let join = |v: &[f64]| v.iter().map(|&x| format_f64(x)).collect::<Vec<_>>().join(",");
    let mut r = Report::new("validate");
    r.push("scenario", scenario_digest(&sc));
    r.push("steps", join(&steps));
    if let Some(m) = corrupt {
        r.number("corruption", m);
    }
    for (rate, id) in study.rates.iter().map(|x| (x, x.identity)) {
        let name = id.name();
        r.push(&format!("{name}.residuals"), join(&rate.residuals));
        r.push(&format!("{name}.orders"), join(&rate.orders));
        let finest = study.reports.last().expect("at least two step sizes").get(id);
        r.number(&format!("{name}.t_at_max"), finest.t_at_max);
        r.push(&format!("{name}.passed"), rate.passed);
    }
    let passed = study.all_passed();
    r.push("all_passed", passed);
    Ok(ValidateOutput { report: r, passed })
}
