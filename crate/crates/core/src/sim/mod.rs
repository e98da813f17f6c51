//! Fixed-step simulation of the coupled plant, observer and controller.

mod integrator;
mod log;
mod monte_carlo;
mod validate;

pub use integrator::{evaluate_stage, step, velocity_free_moment, SimState, StageDerivative, REPROJECTION_THRESHOLD};
pub use log::{run, run_with, sample_at, ExponentialFit, RunSummary, Sample, TrajectoryLog};
pub use monte_carlo::{
    haar_rotation, monte_carlo, MonteCarloReport, MonteCarloSpec, RunOutcome, Sampler,
};
pub use validate::{
    convergence_study, validate_derivatives, DerivativeReport, Identity, IdentityRate, IdentityResidual,
    RateReport,
};

use thiserror::Error;

use crate::controller::{AngleProfile, ControlError, ControllerGains, DesiredTrajectory};
use crate::gain::Gain;
use crate::observer::{ObserverGains, ObserverState};
use crate::rigid_body::{InertiaSpec, RigidBodyState};
use crate::so3::{exp_so3, Rotation, Vec3, WeightMatrix};

/// Any state or input norm above this aborts a run.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("numerical blow-up at t = {t}")]
    NumericalBlowup { t: f64 },
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Applied inertial moment for open-loop runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorqueProfile {
    Zero,
    Constant(Vec3),
    /// `amplitude · sin(frequency · t)`, componentwise.
    Harmonic { amplitude: Vec3, frequency: f64 },
}

impl TorqueProfile {
    pub fn torque(&self, t: f64) -> Vec3 {
        match self {
            TorqueProfile::Zero => Vec3::zeros(),
            TorqueProfile::Constant(v) => *v,
            TorqueProfile::Harmonic { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMode {
    FullState,
    VelocityFree,
    OpenLoop(TorqueProfile),
}

impl ControlMode {
    pub fn label(&self) -> &'static str {
        match self {
            ControlMode::FullState => "full-state",
            ControlMode::VelocityFree => "velocity-free",
            ControlMode::OpenLoop(_) => "open-loop",
        }
    }
}

/// Initial observer estimate: attitude `R̄(0)` and inertial angular velocity
/// `ω̄(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialEstimate {
    pub attitude: Rotation,
    pub omega: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub inertia: InertiaSpec,
    pub g: WeightMatrix,
    pub g_e: WeightMatrix,
    pub controller: ControllerGains,
    pub observer: ObserverGains,
    pub initial_body: RigidBodyState,
    pub initial_estimate: InitialEstimate,
    pub trajectory: DesiredTrajectory,
    pub mode: ControlMode,
    pub duration: f64,
    pub step: f64,
    pub seed: u64,
    /// Keep every `decimation`-th step in the log (the final step is always kept).
    pub decimation: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(SimError::InvalidScenario(format!("step must be positive, got {}", self.step)));
        }
        if !(self.duration.is_finite() && self.duration >= self.step) {
            return Err(SimError::InvalidScenario(format!(
                "duration {} must be at least one step {}",
                self.duration, self.step
            )));
        }
        if self.decimation == 0 {
            return Err(SimError::InvalidScenario("decimation must be at least 1".into()));
        }
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !finite(&self.initial_body.omega) || !finite(&self.initial_estimate.omega) {
            return Err(SimError::InvalidScenario("initial angular velocities must be finite".into()));
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    pub fn initial_state(&self) -> SimState {
        let body = self.initial_body;
        let observer = ObserverState::from_velocity(
            &self.inertia,
            &body.attitude,
            self.initial_estimate.attitude,
            &self.initial_estimate.omega,
        );
        SimState { body, observer }
    }
}

/// The stabilization example: `J₀ = diag[5, 1, 2]`, `R(0) = exp(π/4 e₁)`,
/// `Ω(0) = [1, −1.5, 2.5]`, `G = G_E = diag[1.1, 1, 0.9]`, `k_R = 16 J₀`,
/// `k_Ω = k_v = 5.6 J₀`, `k_E = 10 J₀`, desired attitude `I`, 30 s at
/// `h = 1e-3`, velocity-free control. The estimate starts at `R̄(0) = I`,
/// `ω̄(0) = 0`.
pub fn stabilization_v_a() -> Scenario {
    let inertia = InertiaSpec::diagonal([5.0, 1.0, 2.0]).expect("preset inertia is valid");
    let j0 = *inertia.matrix();
    let gain = |k: f64| Gain::matrix(j0 * k).expect("preset gain is valid");
    let weights = WeightMatrix::new([1.1, 1.0, 0.9]).expect("preset weights are valid");
    Scenario {
        inertia,
        g: weights,
        g_e: weights,
        controller: ControllerGains { k_r: gain(16.0), k_omega: gain(5.6) },
        observer: ObserverGains { k_e: gain(10.0), k_v: gain(5.6) },
        initial_body: RigidBodyState::new(
            exp_so3(&Vec3::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0)),
            Vec3::new(1.0, -1.5, 2.5),
        ),
        initial_estimate: InitialEstimate { attitude: Rotation::identity(), omega: Vec3::zeros() },
        trajectory: DesiredTrajectory::Setpoint(Rotation::identity()),
        mode: ControlMode::VelocityFree,
        duration: 30.0,
        step: 1e-3,
        seed: 0,
        decimation: 1,
    }
}

/// The tracking example: same plant, gains and initial conditions with the
/// 3-2-1 reference `α = 1`, `β = sin(0.05 t)`, `γ = cos(0.1 t) + 2` over 40 s.
pub fn tracking_v_b() -> Scenario {
    let trajectory = DesiredTrajectory::euler321(
        AngleProfile::Constant(1.0),
        AngleProfile::Sine { amplitude: 1.0, frequency: 0.05 },
        AngleProfile::Cosine { amplitude: 1.0, frequency: 0.1, offset: 2.0 },
    )
    .expect("preset trajectory is consistent");
    Scenario { trajectory, duration: 40.0, ..stabilization_v_a() }
}

/// A near-spherical body whose scalar gains satisfy every condition of the
/// separation certificate: `J₀ = diag[1, 1.1, 1.2]`, `G = G_E = diag[0.9, 1,
/// 1.1]`, `k_R = 4`, `k_Ω = 1`, `k_E = 1000`, `k_v = 3`, `R(0) = exp(0.5 e₁)`,
/// `Ω(0) = [0.1, −0.1, 0.2]`, set point `I`, 30 s at `h = 1e-3`.
pub fn near_spherical_certified() -> Scenario {
    let scalar = |k: f64| Gain::scalar(k).expect("preset gain is valid");
    let weights = WeightMatrix::new([0.9, 1.0, 1.1]).expect("preset weights are valid");
    Scenario {
        inertia: InertiaSpec::diagonal([1.0, 1.1, 1.2]).expect("preset inertia is valid"),
        g: weights,
        g_e: weights,
        controller: ControllerGains { k_r: scalar(4.0), k_omega: scalar(1.0) },
        observer: ObserverGains { k_e: scalar(1000.0), k_v: scalar(3.0) },
        initial_body: RigidBodyState::new(exp_so3(&Vec3::new(0.5, 0.0, 0.0)), Vec3::new(0.1, -0.1, 0.2)),
        ..stabilization_v_a()
    }
}
