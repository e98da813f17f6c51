//! Ground-truth attitude dynamics of a rigid body.
//!
//! The canonical state is `(R, Ω)` with the body-frame Euler equation
//! `J₀ Ω̇ = u − Ω × J₀Ω` and `Ṙ = R hat(Ω)`. The inertial-frame form
//! `d/dt(Jω) = τ`, `J = R J₀ Rᵀ`, `Ṙ = hat(ω) R` is provided as well and
//! generates the same trajectories.

use thiserror::Error;

use crate::so3::{symmetric_eigenvalues, Mat3, Rotation, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigidBodyError {
    #[error("inertia matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("inertia matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("inertia matrix is singular in the inertial frame")]
    SingularInertia,
}

/// Body-frame inertia `J₀` with its cached inverse and eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaSpec {
    j0: Mat3,
    j0_inv: Mat3,
    eigenvalues: [f64; 3],
}

impl InertiaSpec {
    pub fn new(j0: Mat3) -> Result<Self, RigidBodyError> {
        let asym = (j0 - j0.transpose()).amax();
        if !(asym <= 1e-12) {
            return Err(RigidBodyError::NotSymmetric(asym));
        }
        let eigenvalues = symmetric_eigenvalues(&j0);
        if !(eigenvalues[0] > 0.0) {
            return Err(RigidBodyError::NotPositiveDefinite(eigenvalues[0]));
        }
        let j0_inv = j0.try_inverse().ok_or(RigidBodyError::SingularInertia)?;
        Ok(InertiaSpec { j0, j0_inv, eigenvalues })
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self, RigidBodyError> {
        Self::new(Mat3::from_diagonal(&Vec3::from(d)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.j0
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.j0_inv
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[2]
    }

    pub fn trace(&self) -> f64 {
        self.j0.trace()
    }

    /// `J = R J₀ Rᵀ`.
    pub fn inertial(&self, attitude: &Rotation) -> Mat3 {
        attitude.conjugate(&self.j0)
    }

    /// `J⁻¹ v = R J₀⁻¹ Rᵀ v`, without forming the inverse of `J`.
    pub fn inertial_solve(&self, attitude: &Rotation, v: &Vec3) -> Vec3 {
        attitude.rotate(&(self.j0_inv * attitude.inverse_rotate(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// Body-to-inertial rotation `R`.
    pub attitude: Rotation,
    /// Body-frame angular velocity `Ω` (rad/s).
    pub omega: Vec3,
}

impl RigidBodyState {
    pub fn new(attitude: Rotation, omega: Vec3) -> Self {
        RigidBodyState { attitude, omega }
    }

    pub fn at_rest(attitude: Rotation) -> Self {
        RigidBodyState { attitude, omega: Vec3::zeros() }
    }

    /// Inertial angular velocity `ω = R Ω`.
    pub fn inertial_omega(&self) -> Vec3 {
        self.attitude.rotate(&self.omega)
    }

    /// Inertial angular momentum `Jω = R J₀ Ω`.
    pub fn momentum(&self, inertia: &InertiaSpec) -> Vec3 {
        self.attitude.rotate(&(inertia.matrix() * self.omega))
    }

    pub fn kinetic_energy(&self, inertia: &InertiaSpec) -> f64 {
        0.5 * self.omega.dot(&(inertia.matrix() * self.omega))
    }
}

/// Body-frame time derivative: `Ṙ = R hat(attitude_tangent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyDerivative {
    pub attitude_tangent: Vec3,
    pub omega_dot: Vec3,
}

/// Euler's equation with body-frame moment `u`.
pub fn body_frame_derivative(inertia: &InertiaSpec, state: &RigidBodyState, u: &Vec3) -> BodyDerivative {
    let omega = state.omega;
    let h = inertia.matrix() * omega;
    BodyDerivative {
        attitude_tangent: omega,
        omega_dot: inertia.inverse() * (u - omega.cross(&h)),
    }
}

/// Inertial-frame time derivative: `Ṙ = hat(attitude_tangent) R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialDerivative {
    pub attitude_tangent: Vec3,
    pub momentum_dot: Vec3,
}

/// `d/dt(Jω) = τ` with the angular velocity recovered as `ω = J⁻¹ p`.
pub fn inertial_frame_derivative(
    inertia: &InertiaSpec,
    attitude: &Rotation,
    momentum: &Vec3,
    tau: &Vec3,
) -> Result<InertialDerivative, RigidBodyError> {
    let j = inertia.inertial(attitude);
    let omega = j.lu().solve(momentum).ok_or(RigidBodyError::SingularInertia)?;
    Ok(InertialDerivative { attitude_tangent: omega, momentum_dot: *tau })
}
