//! Angular-velocity observer on SO(3).
//!
//! The observer keeps an estimate frame `(R̄, p̄)` where `p̄ = J ω̄` is the
//! estimated inertial angular momentum. Its inputs are the measured attitude
//! `R` and the applied inertial moment `τ`; it never sees the true angular
//! velocity. With `Q_E = R R̄ᵀ` the estimate errors are
//!
//! ```text
//! Ψ_E     = ½ tr[G_E (I − Q_E)]
//! e_{R_E} = ½ (Q_E G_E − G_E Q_Eᵀ)^∨
//! e_{ω_E} = J ω − J ω̄
//! ω_E     = ω − ω̄ − k_v J⁻¹ e_{R_E}
//! ```
//!
//! and the observer dynamics are
//!
//! ```text
//! d/dt (J ω̄) = τ + ½ k_E J⁻¹ e_{R_E}
//! d/dt R̄     = [Q_Eᵀ (ω̄ + k_v J⁻¹ e_{R_E})]^ R̄
//! ```
//!
//! Matrix gains act on inertial vectors through `R K Rᵀ` (see [`crate::gain`]).

use crate::gain::Gain;
use crate::rigid_body::{InertiaSpec, RigidBodyState};
use crate::so3::{error_function, estimation_error_vector, Rotation, Vec3, WeightMatrix};

/// Default tolerance of [`classify_equilibrium`].
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-6;

/// Estimator state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    /// `R̄`, used exactly as it appears in `Q_E = R R̄ᵀ`: the estimate
    /// converges to the measured body-to-inertial attitude.
    pub attitude: Rotation,
    /// `p̄ = J ω̄`, estimated inertial angular momentum.
    pub momentum: Vec3,
}

impl ObserverState {
    /// Builds the state from an inertial angular-velocity estimate `ω̄`,
    /// using the measured attitude to form `J`.
    pub fn from_velocity(inertia: &InertiaSpec, measured: &Rotation, attitude: Rotation, omega_bar: &Vec3) -> Self {
        ObserverState {
            attitude,
            momentum: inertia.inertial(measured) * omega_bar,
        }
    }

    /// `ω̄ = J⁻¹ p̄` (inertial frame).
    pub fn omega(&self, inertia: &InertiaSpec, measured: &Rotation) -> Vec3 {
        inertia.inertial_solve(measured, &self.momentum)
    }

    /// `Ω̄ = Rᵀ ω̄` (body frame).
    pub fn body_omega(&self, inertia: &InertiaSpec, measured: &Rotation) -> Vec3 {
        inertia.inverse() * measured.inverse_rotate(&self.momentum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub k_e: Gain,
    pub k_v: Gain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateErrors {
    pub q_e: Rotation,
    pub psi_e: f64,
    pub e_r_e: Vec3,
    pub e_omega_e: Vec3,
    pub omega_e: Vec3,
}

impl EstimateErrors {
    /// `ω − ω̄ = J⁻¹ e_{ω_E}`, given the attitude used to form `J`.
    pub fn velocity_error(&self, inertia: &InertiaSpec, attitude: &Rotation) -> Vec3 {
        inertia.inertial_solve(attitude, &self.e_omega_e)
    }
}

/// Evaluates the estimate error variables against the true body state.
pub fn compute_estimate_errors(
    weights: &WeightMatrix,
    inertia: &InertiaSpec,
    gains: &ObserverGains,
    body: &RigidBodyState,
    obs: &ObserverState,
) -> EstimateErrors {
    let r = &body.attitude;
    let q_e = r * &obs.attitude.transpose();
    let e_r_e = estimation_error_vector(weights, &q_e);
    let e_omega_e = body.momentum(inertia) - obs.momentum;
    let correction = gains.k_v.apply_inertial(r, &inertia.inertial_solve(r, &e_r_e));
    let omega_e = inertia.inertial_solve(r, &e_omega_e) - correction;
    EstimateErrors {
        q_e,
        psi_e: error_function(weights, &q_e),
        e_r_e,
        e_omega_e,
        omega_e,
    }
}

/// Time derivative of the estimator: `d/dt R̄ = hat(attitude_tangent) R̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverDerivative {
    pub attitude_tangent: Vec3,
    pub momentum_dot: Vec3,
}

/// Observer right-hand side. Only the measured attitude and the applied
/// inertial moment enter; there is no angular-velocity argument.
pub fn observer_derivative(
    inertia: &InertiaSpec,
    weights: &WeightMatrix,
    gains: &ObserverGains,
    measured: &Rotation,
    tau: &Vec3,
    obs: &ObserverState,
) -> ObserverDerivative {
    let q_e = measured * &obs.attitude.transpose();
    let e_r_e = estimation_error_vector(weights, &q_e);
    let j_inv_e = inertia.inertial_solve(measured, &e_r_e);
    let omega_bar = obs.omega(inertia, measured);
    let momentum_dot = tau + gains.k_e.apply_inertial(measured, &j_inv_e) * 0.5;
    let corrected = omega_bar + gains.k_v.apply_inertial(measured, &j_inv_e);
    ObserverDerivative {
        attitude_tangent: q_e.inverse_rotate(&corrected),
        momentum_dot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Equilibrium {
    Desired,
    /// `Q_E` at `diag` flip 1, 2 or 3.
    Undesired(u8),
    NotEquilibrium,
}

impl Equilibrium {
    pub fn label(&self) -> String {
        match self {
            Equilibrium::Desired => "Desired".into(),
            Equilibrium::Undesired(i) => format!("Undesired({i})"),
            Equilibrium::NotEquilibrium => "NotEquilibrium".into(),
        }
    }
}

/// Classifies the estimate errors against the four equilibria of the
/// estimation error dynamics (Frobenius distance on `Q_E`).
pub fn classify_equilibrium(errors: &EstimateErrors, tol: f64) -> Equilibrium {
    if errors.e_omega_e.norm() > tol {
        return Equilibrium::NotEquilibrium;
    }
    let q = errors.q_e.matrix();
    if (q - crate::so3::Mat3::identity()).norm() <= tol {
        return Equilibrium::Desired;
    }
    for i in 1..=3 {
        if (q - crate::so3::flip_rotation(i).matrix()).norm() <= tol {
            return Equilibrium::Undesired(i as u8);
        }
    }
    Equilibrium::NotEquilibrium
}

/// `𝒰 = e_{ω_E}ᵀ e_{ω_E} + k_E Ψ_E`. A matrix `k_E` contributes its
/// smallest eigenvalue.
pub fn observer_lyapunov(k_e: &Gain, errors: &EstimateErrors) -> f64 {
    errors.e_omega_e.norm_squared() + k_e.lyapunov_weight() * errors.psi_e
}

/// Guaranteed decay rate of [`observer_lyapunov`] for scalar gains:
/// `k_E k_v ‖e_{R_E}‖² / λ_M`.
pub fn observer_lyapunov_decay_bound(inertia: &InertiaSpec, gains: &ObserverGains, errors: &EstimateErrors) -> f64 {
    gains.k_e.lyapunov_weight() * gains.k_v.min_eigenvalue() * errors.e_r_e.norm_squared() / inertia.lambda_max()
}

/// Chetaev function `𝒲 = k_E s_i − 𝒰` for the undesired equilibrium `index`,
/// where `s_i` is the weight pair sum attained by `Ψ_E` there.
pub fn chetaev_function(weights: &WeightMatrix, k_e: &Gain, errors: &EstimateErrors, index: usize) -> f64 {
    k_e.lyapunov_weight() * weights.pair_sum(index) - observer_lyapunov(k_e, errors)
}
