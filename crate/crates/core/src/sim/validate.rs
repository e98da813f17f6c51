//! Central-difference checks of the estimation and tracking error dynamics
//! along a logged trajectory.

use super::integrator::SimState;
use super::log::{run, sample_at, Sample, TrajectoryLog};
use super::{Scenario, SimError};
use crate::controller::chi_vector;
use crate::observer::ObserverState;
use crate::rigid_body::RigidBodyState;
use crate::so3::{ec_matrix, eo_matrix, exp_so3, hat, Vec3};

/// Minimum observed order for an identity to pass the rate test.
pub const MIN_ORDER: f64 = 1.9;
/// Residuals below this are treated as exact and skip the rate test.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Identity {
    /// `Q̇_E = hat(ω_E) Q_E`
    AttitudeError,
    /// `Ψ̇_E = ω_Eᵀ e_{R_E}`
    EstimateErrorFunction,
    /// `ė_{R_E} = E_o ω_E`
    EstimateErrorVector,
    /// `ė_{ω_E} = −½ k_E J⁻¹ e_{R_E}`
    MomentumError,
    /// `Ψ̇ = e_Rᵀ e_Ω`
    TrackingErrorFunction,
    /// `ė_R = E_c e_Ω`
    TrackingErrorVector,
    /// `J₀ ė_Ω = u + hat(χ) e_Ω − J₀ Q Ω̇_d − hat(QΩ_d) J₀ Q Ω_d`
    TrackingRateError,
}

impl Identity {
    pub const ALL: [Identity; 7] = [
        Identity::AttitudeError,
        Identity::EstimateErrorFunction,
        Identity::EstimateErrorVector,
        Identity::MomentumError,
        Identity::TrackingErrorFunction,
        Identity::TrackingErrorVector,
        Identity::TrackingRateError,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Identity::AttitudeError => "QE_dot",
            Identity::EstimateErrorFunction => "PsiE_dot",
            Identity::EstimateErrorVector => "eRE_dot",
            Identity::MomentumError => "ewE_dot",
            Identity::TrackingErrorFunction => "Psi_dot",
            Identity::TrackingErrorVector => "eR_dot",
            Identity::TrackingRateError => "eOmega_dot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub identity: Identity,
    pub max_residual: f64,
    pub t_at_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub residuals: Vec<IdentityResidual>,
}

impl DerivativeReport {
    pub fn get(&self, identity: Identity) -> &IdentityResidual {
        self.residuals.iter().find(|r| r.identity == identity).expect("every identity is reported")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.max_residual).fold(0.0, f64::max)
    }
}

fn residuals_at(scenario: &Scenario, prev: &Sample, mid: &Sample, next: &Sample) -> [f64; 7] {
    let dt = next.t - prev.t;
    let d = |a: &Vec3, b: &Vec3| (b - a) / dt;
    let j0 = scenario.inertia.matrix();
    let r = &mid.attitude;

    let qe_dot = (next.q_e.matrix() - prev.q_e.matrix()) / dt;
    let r1 = (qe_dot - hat(&mid.omega_e) * mid.q_e.matrix()).norm();
    let r2 = ((next.psi_e - prev.psi_e) / dt - mid.omega_e.dot(&mid.e_r_e)).abs();
    let r3 = (d(&prev.e_r_e, &next.e_r_e) - eo_matrix(&scenario.g_e, &mid.q_e) * mid.omega_e).norm();
    let j_inv_e = scenario.inertia.inertial_solve(r, &mid.e_r_e);
    let r4 = (d(&prev.e_omega_e, &next.e_omega_e) + scenario.observer.k_e.apply_inertial(r, &j_inv_e) * 0.5).norm();
    let r5 = ((next.psi - prev.psi) / dt - mid.e_r.dot(&mid.e_omega)).abs();
    let r6 = (d(&prev.e_r, &next.e_r) - ec_matrix(&scenario.g, &mid.q) * mid.e_omega).norm();
    let q_wd = mid.q.rotate(&mid.desired.omega);
    let chi = chi_vector(&scenario.inertia, &mid.e_omega, &mid.q, &mid.desired.omega);
    let rhs = mid.u + hat(&chi) * mid.e_omega
        - j0 * mid.q.rotate(&mid.desired.omega_dot)
        - hat(&q_wd) * (j0 * q_wd);
    let r7 = (j0 * d(&prev.e_omega, &next.e_omega) - rhs).norm();
    [r1, r2, r3, r4, r5, r6, r7]
}

/// Maximum central-difference residual of every identity over the interior
/// samples of `log`, with the time at which it occurs.
pub fn validate_derivatives(scenario: &Scenario, log: &TrajectoryLog) -> DerivativeReport {
    let mut residuals: Vec<IdentityResidual> = Identity::ALL
        .iter()
        .map(|&identity| IdentityResidual { identity, max_residual: 0.0, t_at_max: f64::NAN })
        .collect();
    for w in log.samples.windows(3) {
        let values = residuals_at(scenario, &w[0], &w[1], &w[2]);
        for (slot, value) in residuals.iter_mut().zip(values) {
            if !(value <= slot.max_residual) {
                slot.max_residual = value;
                slot.t_at_max = w[1].t;
            }
        }
    }
    DerivativeReport { residuals }
}

/// Replaces sample `index` with the sample of a perturbed state: both
/// attitudes are rotated by `magnitude` about `e₁` and both velocity states
/// are shifted by `magnitude`.
pub fn corrupt_sample(scenario: &Scenario, log: &mut TrajectoryLog, index: usize, magnitude: f64) -> Result<(), SimError> {
    let s = log.samples[index];
    let kick = exp_so3(&Vec3::new(magnitude, 0.0, 0.0));
    let shift = Vec3::repeat(magnitude);
    let state = SimState {
        body: RigidBodyState::new(&s.attitude * &kick, s.omega + shift),
        observer: ObserverState { attitude: &s.estimate_attitude * &kick, momentum: s.estimate_momentum + shift },
    };
    log.samples[index] = sample_at(scenario, s.t, &state)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRate {
    pub identity: Identity,
    /// Maximum residual for each step size.
    pub residuals: Vec<f64>,
    /// `log₂` of successive residual ratios.
    pub orders: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub steps: Vec<f64>,
    pub rates: Vec<IdentityRate>,
    /// Per-step reports, including the time of each maximum.
    pub reports: Vec<DerivativeReport>,
}

impl RateReport {
    pub fn all_passed(&self) -> bool {
        self.rates.iter().all(|r| r.passed)
    }
}

/// Runs `scenario` at each step size (largest first, each half the previous
/// one) and measures the order at which every residual shrinks. With
/// `corruption`, the sample nearest the middle of each log is perturbed by
/// that magnitude first.
pub fn convergence_study(scenario: &Scenario, steps: &[f64], corruption: Option<f64>) -> Result<RateReport, SimError> {
    let mut reports = Vec::with_capacity(steps.len());
    for &h in steps {
        let sc = Scenario { step: h, decimation: 1, ..scenario.clone() };
        let mut log = run(&sc)?;
        if let Some(m) = corruption {
            let mid = log.samples.len() / 2;
            corrupt_sample(&sc, &mut log, mid, m)?;
        }
        reports.push(validate_derivatives(&sc, &log));
    }
    let rates = Identity::ALL
        .iter()
        .map(|&identity| {
            let residuals: Vec<f64> = reports.iter().map(|r| r.get(identity).max_residual).collect();
            let ratios: Vec<(f64, f64)> = residuals.windows(2).map(|w| (w[0], w[1])).collect();
            let orders: Vec<f64> = steps
                .windows(2)
                .zip(&ratios)
                .map(|(h, (a, b))| (a / b).ln() / (h[0] / h[1]).ln())
                .collect();
            let exact = residuals.iter().all(|&r| r < RESIDUAL_FLOOR);
            let passed = exact
                || ratios.iter().zip(&orders).all(|(&(_, finer), &order)| order >= MIN_ORDER || finer < RESIDUAL_FLOOR);
            IdentityRate { identity, residuals, orders, passed }
        })
        .collect();
    Ok(RateReport { steps: steps.to_vec(), rates, reports })
}
