//! TOML scenario files.
//!
//! Every value is validated while it is deserialized, so a rejected value is
//! reported at its own line and column.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use so3lab::controller::{AngleProfile, ControllerGains, DesiredTrajectory};
use so3lab::gain::Gain;
use so3lab::observer::ObserverGains;
use so3lab::rigid_body::{InertiaSpec, RigidBodyState};
use so3lab::sim::{ControlMode, InitialEstimate, Scenario, TorqueProfile};
use so3lab::so3::{exp_so3, Mat3, Vec3, WeightMatrix};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    /// 1-based line and column, when the error can be located.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, col)) => write!(f, "{}:{line}:{col}: {}", self.origin, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(try_from = "f64")]
struct Positive(f64);

impl TryFrom<f64> for Positive {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, String> {
        if v.is_finite() && v > 0.0 {
            Ok(Positive(v))
        } else {
            Err(format!("expected a positive finite number, got {v}"))
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(try_from = "f64")]
struct Finite(f64);

impl TryFrom<f64> for Finite {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, String> {
        if v.is_finite() {
            Ok(Finite(v))
        } else {
            Err(format!("expected a finite number, got {v}"))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(try_from = "[f64; 3]")]
struct Finite3(Vec3);

impl TryFrom<[f64; 3]> for Finite3 {
    type Error = String;

    fn try_from(v: [f64; 3]) -> Result<Self, String> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(Finite3(Vec3::from(v)))
        } else {
            Err(format!("expected three finite numbers, got {v:?}"))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertiaRaw {
    diagonal: Option<[f64; 3]>,
    matrix: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(try_from = "InertiaRaw")]
struct Inertia(InertiaSpec);

impl TryFrom<InertiaRaw> for Inertia {
    type Error = String;

    fn try_from(raw: InertiaRaw) -> Result<Self, String> {
        let spec = match (raw.diagonal, raw.matrix) {
            (Some(d), None) => InertiaSpec::diagonal(d),
            (None, Some(rows)) => InertiaSpec::new(Mat3::from_fn(|i, j| rows[i][j])),
            _ => return Err("give exactly one of `diagonal` or `matrix`".into()),
        };
        spec.map(Inertia).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(try_from = "[f64; 3]")]
struct Weights(WeightMatrix);

impl TryFrom<[f64; 3]> for Weights {
    type Error = String;

    fn try_from(v: [f64; 3]) -> Result<Self, String> {
        WeightMatrix::new(v).map(Weights).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    g: Weights,
    g_e: Weights,
}

/// A gain is a positive scalar or `{ matrix_of_inertia = k }` for `k J₀`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged, expecting = "a positive number or a table `{ matrix_of_inertia = <positive number> }`")]
enum GainSpec {
    Scalar(Positive),
    OfInertia(OfInertia),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct OfInertia {
    matrix_of_inertia: Positive,
}

impl GainSpec {
    fn resolve(&self, inertia: &InertiaSpec) -> Gain {
        match self {
            GainSpec::Scalar(k) => Gain::scalar(k.0),
            GainSpec::OfInertia(m) => Gain::matrix(inertia.matrix() * m.matrix_of_inertia.0),
        }
        .expect("positive multiples of a positive definite inertia are valid gains")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    k_r: GainSpec,
    k_omega: GainSpec,
    k_e: GainSpec,
    k_v: GainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    /// Rotation vector of `R(0)`.
    #[serde(default)]
    attitude: Finite3,
    /// Body angular velocity `Ω(0)`.
    #[serde(default)]
    omega: Finite3,
    /// Rotation vector of `R̄(0)`.
    #[serde(default)]
    estimate_attitude: Finite3,
    /// Inertial angular velocity estimate `ω̄(0)`.
    #[serde(default)]
    estimate_omega: Finite3,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum AngleRaw {
    Constant { value: Finite },
    Sine { amplitude: Finite, frequency: Finite },
    Cosine { amplitude: Finite, frequency: Finite, #[serde(default)] offset: Option<Finite> },
}

impl AngleRaw {
    fn profile(&self) -> AngleProfile {
        match *self {
            AngleRaw::Constant { value } => AngleProfile::Constant(value.0),
            AngleRaw::Sine { amplitude, frequency } => AngleProfile::Sine { amplitude: amplitude.0, frequency: frequency.0 },
            AngleRaw::Cosine { amplitude, frequency, offset } => AngleProfile::Cosine {
                amplitude: amplitude.0,
                frequency: frequency.0,
                offset: offset.map_or(0.0, |o| o.0),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum TrajectoryRaw {
    /// Constant desired attitude, given as a rotation vector.
    Setpoint {
        #[serde(default)]
        attitude: Finite3,
    },
    Euler321 {
        yaw: AngleRaw,
        pitch: AngleRaw,
        roll: AngleRaw,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    step: Positive,
    duration: Spanned<Positive>,
    decimation: Option<Spanned<usize>>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ModeRaw {
    FullState,
    #[default]
    VelocityFree,
    /// Inertial torque `torque`, or `torque · sin(frequency · t)` when a
    /// frequency is given.
    OpenLoop {
        #[serde(default)]
        torque: Finite3,
        #[serde(default)]
        frequency: Option<Finite>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    inertia: Inertia,
    weights: WeightsSection,
    gains: GainsSection,
    #[serde(default = "InitialSection::at_rest")]
    initial: InitialSection,
    trajectory: Option<Spanned<TrajectoryRaw>>,
    integrator: IntegratorSection,
    #[serde(default)]
    mode: ModeRaw,
}

impl InitialSection {
    fn at_rest() -> Self {
        InitialSection {
            attitude: Finite3::default(),
            omega: Finite3::default(),
            estimate_attitude: Finite3::default(),
            estimate_omega: Finite3::default(),
        }
    }
}

/// Parses a scenario from TOML text. `origin` names the source in errors.
pub fn parse(src: &str, origin: &str) -> Result<Scenario, ConfigError> {
    let error = |span: Option<std::ops::Range<usize>>, message: String| ConfigError {
        origin: origin.to_string(),
        position: span.map(|s| position(src, s.start)),
        message,
    };
    let file: ConfigFile = toml::from_str(src).map_err(|e| error(e.span(), e.message().trim().to_string()))?;

    let inertia = file.inertia.0;
    let trajectory = match file.trajectory.map(|t| (t.span(), t.into_inner())) {
        None => DesiredTrajectory::Setpoint(exp_so3(&Vec3::zeros())),
        Some((_, TrajectoryRaw::Setpoint { attitude })) => DesiredTrajectory::Setpoint(exp_so3(&attitude.0)),
        Some((span, TrajectoryRaw::Euler321 { yaw, pitch, roll })) => {
            DesiredTrajectory::euler321(yaw.profile(), pitch.profile(), roll.profile())
                .map_err(|e| error(Some(span), e.to_string()))?
        }
    };
    let mode = match file.mode {
        ModeRaw::FullState => ControlMode::FullState,
        ModeRaw::VelocityFree => ControlMode::VelocityFree,
        ModeRaw::OpenLoop { torque, frequency: None } => ControlMode::OpenLoop(TorqueProfile::Constant(torque.0)),
        ModeRaw::OpenLoop { torque, frequency: Some(f) } => {
            ControlMode::OpenLoop(TorqueProfile::Harmonic { amplitude: torque.0, frequency: f.0 })
        }
    };
    let integ = &file.integrator;
    let step = integ.step.0;
    let duration = integ.duration.get_ref().0;
    if duration < step {
        return Err(error(
            Some(integ.duration.span()),
            format!("duration {duration} is shorter than one step {step}"),
        ));
    }
    let decimation = integ.decimation.as_ref().map_or(1, |d| *d.get_ref());
    if decimation == 0 {
        let span = integ.decimation.as_ref().map(|d| d.span());
        return Err(error(span, "decimation must be at least 1".into()));
    }
    let gains = &file.gains;
    Ok(Scenario {
        inertia,
        g: file.weights.g.0,
        g_e: file.weights.g_e.0,
        controller: ControllerGains { k_r: gains.k_r.resolve(&inertia), k_omega: gains.k_omega.resolve(&inertia) },
        observer: ObserverGains { k_e: gains.k_e.resolve(&inertia), k_v: gains.k_v.resolve(&inertia) },
        initial_body: RigidBodyState::new(exp_so3(&file.initial.attitude.0), file.initial.omega.0),
        initial_estimate: InitialEstimate {
            attitude: exp_so3(&file.initial.estimate_attitude.0),
            omega: file.initial.estimate_omega.0,
        },
        trajectory,
        mode,
        duration,
        step,
        seed: integ.seed,
        decimation,
    })
}

pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let origin = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError { origin: origin.clone(), position: None, message: e.to_string() })?;
    parse(&src, &origin)
}
