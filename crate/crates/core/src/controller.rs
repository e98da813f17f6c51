//! Attitude tracking on SO(3): desired trajectories, tracking errors and the
//! PD controller in its full-state and velocity-free forms.
//!
//! With `Q = Rᵀ R_d` the tracking errors are `Ψ = ½ tr[G(I − Q)]`,
//! `e_R = ½ (G Qᵀ − Q G)^∨`, `e_Ω = Ω − Q Ω_d`, and the control moment is
//!
//! ```text
//! u = −k_R e_R − k_Ω e_Ω + J₀ Q Ω̇_d + (Q Ω_d)^ J₀ Q Ω_d
//! ```
//!
//! The velocity-free controller substitutes `ē_Ω = Ω̄ − Q Ω_d` built from the
//! observer estimate `Ω̄ = Rᵀ ω̄`.

use thiserror::Error;

use crate::gain::Gain;
use crate::rigid_body::{InertiaSpec, RigidBodyState};
use crate::so3::{error_function, euler321_rotation, hat, skew_vee, tracking_error_vector, Mat3, Rotation, Vec3, WeightMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("velocity-free control requires an angular-velocity estimate")]
    MissingEstimate,
    #[error("full-state control requires the measured angular velocity")]
    MissingMeasurement,
    #[error("desired trajectory derivatives are inconsistent (finite-difference residual {0:.3e})")]
    InconsistentTrajectory(f64),
    #[error("angle profile parameter is not finite")]
    NonFiniteProfile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k_r: Gain,
    pub k_omega: Gain,
}

/// Scalar angle history for one Euler angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleProfile {
    Constant(f64),
    /// `amplitude · sin(frequency · t)`
    Sine { amplitude: f64, frequency: f64 },
    /// `amplitude · cos(frequency · t) + offset`
    Cosine { amplitude: f64, frequency: f64, offset: f64 },
}

impl AngleProfile {
    /// Angle, rate and acceleration at `t`.
    pub fn evaluate(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            AngleProfile::Constant(c) => (c, 0.0, 0.0),
            AngleProfile::Sine { amplitude: a, frequency: b } => {
                let (s, c) = (b * t).sin_cos();
                (a * s, a * b * c, -a * b * b * s)
            }
            AngleProfile::Cosine { amplitude: a, frequency: b, offset } => {
                let (s, c) = (b * t).sin_cos();
                (a * c + offset, -a * b * s, -a * b * b * c)
            }
        }
    }

    /// Upper bound on `|rate|`.
    pub fn max_rate(&self) -> f64 {
        match *self {
            AngleProfile::Constant(_) => 0.0,
            AngleProfile::Sine { amplitude, frequency } | AngleProfile::Cosine { amplitude, frequency, .. } => {
                (amplitude * frequency).abs()
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            AngleProfile::Constant(c) => c.is_finite(),
            AngleProfile::Sine { amplitude, frequency } => amplitude.is_finite() && frequency.is_finite(),
            AngleProfile::Cosine { amplitude, frequency, offset } => {
                amplitude.is_finite() && frequency.is_finite() && offset.is_finite()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesiredTrajectory {
    Setpoint(Rotation),
    /// `R_d(t) = Rz(yaw) Ry(pitch) Rx(roll)`.
    Euler321 { yaw: AngleProfile, pitch: AngleProfile, roll: AngleProfile },
}

/// Desired attitude and body-frame angular velocity/acceleration at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    pub attitude: Rotation,
    pub omega: Vec3,
    pub omega_dot: Vec3,
}

impl DesiredState {
    pub fn setpoint(attitude: Rotation) -> Self {
        DesiredState { attitude, omega: Vec3::zeros(), omega_dot: Vec3::zeros() }
    }
}

impl DesiredTrajectory {
    /// Builds a 3-2-1 trajectory and checks its analytic derivatives against
    /// central differences of `R_d(t)` at a handful of times.
    pub fn euler321(yaw: AngleProfile, pitch: AngleProfile, roll: AngleProfile) -> Result<Self, ControlError> {
        if !(yaw.is_finite() && pitch.is_finite() && roll.is_finite()) {
            return Err(ControlError::NonFiniteProfile);
        }
        let traj = DesiredTrajectory::Euler321 { yaw, pitch, roll };
        let residual = traj.derivative_self_check();
        if residual > 1e-6 {
            return Err(ControlError::InconsistentTrajectory(residual));
        }
        Ok(traj)
    }

    /// Largest finite-difference discrepancy of `Ω_d` and `Ω̇_d` over a few
    /// sample times.
    pub fn derivative_self_check(&self) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for &t in &[0.0, 0.7, 3.1, 12.9] {
            let mid = self.evaluate(t);
            let fwd = self.evaluate(t + h);
            let bwd = self.evaluate(t - h);
            let rdot = (fwd.attitude.matrix() - bwd.attitude.matrix()) / (2.0 * h);
            let omega_fd = skew_vee(&(mid.attitude.matrix().transpose() * rdot));
            let omega_dot_fd = (fwd.omega - bwd.omega) / (2.0 * h);
            let scale = 1.0 + mid.omega.norm() + mid.omega_dot.norm();
            worst = worst
                .max((omega_fd - mid.omega).norm() / scale)
                .max((omega_dot_fd - mid.omega_dot).norm() / scale);
        }
        worst
    }

    pub fn evaluate(&self, t: f64) -> DesiredState {
        match self {
            DesiredTrajectory::Setpoint(r) => DesiredState::setpoint(*r),
            DesiredTrajectory::Euler321 { yaw, pitch, roll } => {
                let (a, da, dda) = yaw.evaluate(t);
                let (b, db, ddb) = pitch.evaluate(t);
                let (g, dg, ddg) = roll.evaluate(t);
                let (sb, cb) = b.sin_cos();
                let (sg, cg) = g.sin_cos();
                // Body rates of the 3-2-1 sequence.
                let omega = Vec3::new(
                    dg - da * sb,
                    da * cb * sg + db * cg,
                    da * cb * cg - db * sg,
                );
                let omega_dot = Vec3::new(
                    ddg - dda * sb - da * db * cb,
                    dda * cb * sg - da * db * sb * sg + da * dg * cb * cg + ddb * cg - db * dg * sg,
                    dda * cb * cg - da * db * sb * cg - da * dg * cb * sg - ddb * sg - db * dg * cg,
                );
                DesiredState { attitude: euler321_rotation(a, b, g), omega, omega_dot }
            }
        }
    }

    /// Upper bound on `sup_t ‖Ω_d(t)‖` over `[0, horizon]`, from dense
    /// sampling at spacing `dt` plus a margin from the largest angle rate.
    pub fn max_rate(&self, horizon: f64, dt: f64) -> f64 {
        match self {
            DesiredTrajectory::Setpoint(_) => 0.0,
            DesiredTrajectory::Euler321 { .. } => {
                let n = (horizon / dt).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|k| self.evaluate((k as f64 * dt).min(horizon)).omega.norm())
                    .fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub q: Rotation,
    pub psi: f64,
    pub e_r: Vec3,
    /// `Ω − QΩ_d`, absent when the true angular velocity is not available.
    pub e_omega: Option<Vec3>,
    /// `Ω̄ − QΩ_d`, present when an estimate is attached.
    pub e_omega_bar: Option<Vec3>,
}

fn attitude_errors(weights: &WeightMatrix, attitude: &Rotation, desired: &DesiredState) -> (Rotation, f64, Vec3, Vec3) {
    let q = &attitude.transpose() * &desired.attitude;
    let q_omega_d = q.rotate(&desired.omega);
    (q, error_function(weights, &q), tracking_error_vector(weights, &q), q_omega_d)
}

/// Tracking errors against the true body state, optionally with the
/// estimated body angular velocity `Ω̄`.
pub fn compute_tracking_errors(
    weights: &WeightMatrix,
    body: &RigidBodyState,
    desired: &DesiredState,
    omega_bar: Option<&Vec3>,
) -> TrackingErrors {
    let (q, psi, e_r, q_omega_d) = attitude_errors(weights, &body.attitude, desired);
    TrackingErrors {
        q,
        psi,
        e_r,
        e_omega: Some(body.omega - q_omega_d),
        e_omega_bar: omega_bar.map(|w| w - q_omega_d),
    }
}

/// Tracking errors from the attitude measurement and the estimate only.
pub fn estimated_tracking_errors(
    weights: &WeightMatrix,
    attitude: &Rotation,
    desired: &DesiredState,
    omega_bar: &Vec3,
) -> TrackingErrors {
    let (q, psi, e_r, q_omega_d) = attitude_errors(weights, attitude, desired);
    TrackingErrors { q, psi, e_r, e_omega: None, e_omega_bar: Some(omega_bar - q_omega_d) }
}

/// `χ = J₀ e_Ω + (2J₀ − tr[J₀] I) Q Ω_d`.
pub fn chi_vector(inertia: &InertiaSpec, e_omega: &Vec3, q: &Rotation, omega_d: &Vec3) -> Vec3 {
    let j0 = inertia.matrix();
    j0 * e_omega + (j0 * 2.0 - Mat3::identity() * inertia.trace()) * q.rotate(omega_d)
}

/// Feed-forward part `J₀ Q Ω̇_d + (QΩ_d)^ J₀ Q Ω_d`.
pub fn feedforward(inertia: &InertiaSpec, q: &Rotation, desired: &DesiredState) -> Vec3 {
    let j0 = inertia.matrix();
    let w = q.rotate(&desired.omega);
    j0 * q.rotate(&desired.omega_dot) + hat(&w) * (j0 * w)
}

fn pd_law(inertia: &InertiaSpec, gains: &ControllerGains, e_r: &Vec3, e_w: &Vec3, q: &Rotation, desired: &DesiredState) -> Vec3 {
    -gains.k_r.apply(e_r) - gains.k_omega.apply(e_w) + feedforward(inertia, q, desired)
}

/// Full-state PD tracking controller. Returns the body-frame moment `u`.
pub fn pd_control(
    inertia: &InertiaSpec,
    gains: &ControllerGains,
    errors: &TrackingErrors,
    desired: &DesiredState,
) -> Result<Vec3, ControlError> {
    let e_w = errors.e_omega.ok_or(ControlError::MissingMeasurement)?;
    Ok(pd_law(inertia, gains, &errors.e_r, &e_w, &errors.q, desired))
}

/// Velocity-free PD tracking controller: reads only `e_R` and `ē_Ω`.
pub fn velocity_free_control(
    inertia: &InertiaSpec,
    gains: &ControllerGains,
    errors: &TrackingErrors,
    desired: &DesiredState,
) -> Result<Vec3, ControlError> {
    let e_w = errors.e_omega_bar.ok_or(ControlError::MissingEstimate)?;
    Ok(pd_law(inertia, gains, &errors.e_r, &e_w, &errors.q, desired))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn weights() -> WeightMatrix {
        WeightMatrix::new([1.1, 1.0, 0.9]).unwrap()
    }

    fn inertia() -> InertiaSpec {
        InertiaSpec::diagonal([5.0, 1.0, 2.0]).unwrap()
    }

    fn tracking_family() -> DesiredTrajectory {
        DesiredTrajectory::euler321(
            AngleProfile::Constant(1.0),
            AngleProfile::Sine { amplitude: 1.0, frequency: 0.05 },
            AngleProfile::Cosine { amplitude: 1.0, frequency: 0.1, offset: 2.0 },
        )
        .unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
    }

    #[test]
    fn setpoint_is_static() {
        let d = DesiredTrajectory::Setpoint(Rotation::identity()).evaluate(17.0);
        assert_eq!(*d.attitude.matrix(), Mat3::identity());
        assert_eq!(d.omega, Vec3::zeros());
        assert_eq!(d.omega_dot, Vec3::zeros());
    }

    #[test]
    fn frozen_euler_trajectory_has_no_rates() {
        let traj = DesiredTrajectory::euler321(
            AngleProfile::Constant(1.0),
            AngleProfile::Constant(0.0),
            AngleProfile::Constant(2.0),
        )
        .unwrap();
        let d = traj.evaluate(5.0);
        assert_eq!(d.omega, Vec3::zeros());
        assert_eq!(d.omega_dot, Vec3::zeros());
        assert!((d.attitude.matrix() - euler321_rotation(1.0, 0.0, 2.0).matrix()).amax() == 0.0);
    }

    #[test]
    fn euler_rates_match_central_differences_at_second_order() {
        let traj = DesiredTrajectory::euler321(
            AngleProfile::Sine { amplitude: 0.8, frequency: 1.3 },
            AngleProfile::Sine { amplitude: 0.5, frequency: 0.7 },
            AngleProfile::Cosine { amplitude: 1.0, frequency: 2.1, offset: 0.3 },
        )
        .unwrap();
        let t = 0.4;
        let exact = traj.evaluate(t);
        let err = |h: f64| {
            let f = traj.evaluate(t + h);
            let b = traj.evaluate(t - h);
            let rdot = (f.attitude.matrix() - b.attitude.matrix()) / (2.0 * h);
            let w = skew_vee(&(exact.attitude.matrix().transpose() * rdot));
            let wd = (f.omega - b.omega) / (2.0 * h);
            ((w - exact.omega).norm(), (wd - exact.omega_dot).norm())
        };
        let (a1, b1) = err(1e-2);
        let (a2, b2) = err(5e-3);
        assert!((a1 / a2).log2() > 1.9 && (b1 / b2).log2() > 1.9, "{a1} {a2} {b1} {b2}");
        let preset = tracking_family();
        assert!(preset.derivative_self_check() < 1e-8);
        let d0 = preset.evaluate(0.0);
        assert!(d0.omega.norm() > 0.0);
    }

    #[test]
    fn inconsistent_profiles_are_rejected() {
        let bad = DesiredTrajectory::euler321(
            AngleProfile::Constant(f64::NAN),
            AngleProfile::Constant(0.0),
            AngleProfile::Constant(0.0),
        );
        assert_eq!(bad, Err(ControlError::NonFiniteProfile));
    }

    #[test]
    fn matched_state_has_zero_errors() {
        let d = tracking_family().evaluate(3.0);
        let body = RigidBodyState::new(d.attitude, d.omega);
        let e = compute_tracking_errors(&weights(), &body, &d, Some(&body.omega));
        assert!(e.e_r.norm() < 1e-15);
        assert!(e.e_omega.unwrap().norm() < 1e-15);
        assert_eq!(e.e_omega_bar, e.e_omega);
    }

    #[test]
    fn estimated_error_relation() {
        // ē_Ω = e_Ω − J₀⁻¹ Rᵀ e_{ω_E}, with e_{ω_E} = J(ω − ω̄).
        let j = inertia();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let traj = tracking_family();
        for _ in 0..100 {
            let r = exp_so3(&random_vec(&mut rng, 3.0));
            let body = RigidBodyState::new(r, random_vec(&mut rng, 3.0));
            let omega_bar_inertial = random_vec(&mut rng, 3.0);
            let e_omega_e = j.inertial(&r) * (body.inertial_omega() - omega_bar_inertial);
            let omega_bar_body = r.inverse_rotate(&omega_bar_inertial);
            let d = traj.evaluate(rng.gen_range(0.0..40.0));
            let e = compute_tracking_errors(&weights(), &body, &d, Some(&omega_bar_body));
            let rhs = e.e_omega.unwrap() - j.inverse() * r.inverse_rotate(&e_omega_e);
            assert!((e.e_omega_bar.unwrap() - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn chi_examples() {
        let j = inertia();
        assert_eq!(chi_vector(&j, &Vec3::zeros(), &Rotation::identity(), &Vec3::zeros()), Vec3::zeros());
        let chi = chi_vector(&j, &Vec3::zeros(), &Rotation::identity(), &Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(chi, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn chi_bound_holds() {
        let j = inertia();
        let omega_max = 2.0;
        let b1 = [5.0f64, 1.0, 2.0].iter().map(|l| (2.0 * l - j.trace()).abs()).fold(0.0, f64::max) * omega_max;
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10_000 {
            let e_w = random_vec(&mut rng, 5.0);
            let q = exp_so3(&random_vec(&mut rng, 3.0));
            let mut wd = random_vec(&mut rng, 1.0);
            wd *= rng.gen_range(0.0..omega_max) / wd.norm();
            let chi = chi_vector(&j, &e_w, &q, &wd);
            assert!(chi.norm() <= j.lambda_max() * e_w.norm() + b1 + 1e-12);
        }
    }

    #[test]
    fn pd_examples() {
        let j = inertia();
        let gains = ControllerGains { k_r: Gain::Scalar(2.0), k_omega: Gain::Scalar(3.0) };
        let d = DesiredState::setpoint(Rotation::identity());
        let zero = TrackingErrors {
            q: Rotation::identity(),
            psi: 0.0,
            e_r: Vec3::zeros(),
            e_omega: Some(Vec3::zeros()),
            e_omega_bar: None,
        };
        assert_eq!(pd_control(&j, &gains, &zero, &d).unwrap(), Vec3::zeros());
        let p = TrackingErrors { e_r: Vec3::new(0.1, 0.0, 0.0), ..zero };
        assert!((pd_control(&j, &gains, &p, &d).unwrap() - Vec3::new(-0.2, 0.0, 0.0)).norm() < 1e-16);
        assert_eq!(velocity_free_control(&j, &gains, &zero, &d), Err(ControlError::MissingEstimate));
        let no_meas = TrackingErrors { e_omega: None, e_omega_bar: Some(Vec3::zeros()), ..zero };
        assert_eq!(pd_control(&j, &gains, &no_meas, &d), Err(ControlError::MissingMeasurement));
        assert_eq!(velocity_free_control(&j, &gains, &no_meas, &d).unwrap(), Vec3::zeros());
    }

    #[test]
    fn pd_matches_direct_formula_at_reference_initial_state() {
        let j = inertia();
        let gains = ControllerGains {
            k_r: Gain::matrix(j.matrix() * 16.0).unwrap(),
            k_omega: Gain::matrix(j.matrix() * 5.6).unwrap(),
        };
        let r0 = exp_so3(&Vec3::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0));
        let body = RigidBodyState::new(r0, Vec3::new(1.0, -1.5, 2.5));
        let d = DesiredState::setpoint(Rotation::identity());
        let e = compute_tracking_errors(&weights(), &body, &d, None);
        let u = pd_control(&j, &gains, &e, &d).unwrap();
        // Q = R₀ᵀ; e_R = ½ (G R₀ − R₀ᵀ G)^∨ = (0.95 sin(π/4), 0, 0).
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e_r = Vec3::new(0.95 * s, 0.0, 0.0);
        let expected = Vec3::new(
            -16.0 * 5.0 * e_r.x - 5.6 * 5.0 * 1.0,
            -5.6 * 1.0 * -1.5,
            -5.6 * 2.0 * 2.5,
        );
        assert!((u - expected).norm() < 1e-12, "{u} vs {expected}");
    }

    #[test]
    fn velocity_free_differs_by_estimate_error_term() {
        let j = inertia();
        let gains = ControllerGains { k_r: Gain::Scalar(4.0), k_omega: Gain::Scalar(3.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let traj = tracking_family();
        for _ in 0..50 {
            let r = exp_so3(&random_vec(&mut rng, 3.0));
            let body = RigidBodyState::new(r, random_vec(&mut rng, 2.0));
            let e_omega_e = random_vec(&mut rng, 1.0);
            let omega_bar_body = body.omega - j.inverse() * r.inverse_rotate(&e_omega_e);
            let d = traj.evaluate(rng.gen_range(0.0..40.0));
            let e = compute_tracking_errors(&weights(), &body, &d, Some(&omega_bar_body));
            let full = pd_control(&j, &gains, &e, &d).unwrap();
            let free = velocity_free_control(&j, &gains, &e, &d).unwrap();
            let expected = j.inverse() * r.inverse_rotate(&e_omega_e) * 3.0;
            assert!((free - full - expected).norm() < 1e-12);
            let perfect = compute_tracking_errors(&weights(), &body, &d, Some(&body.omega));
            assert_eq!(
                velocity_free_control(&j, &gains, &perfect, &d).unwrap(),
                pd_control(&j, &gains, &perfect, &d).unwrap()
            );
        }
    }

    #[test]
    fn attitude_error_bound_holds() {
        let w = weights();
        let k = w.bound_constants();
        let b2 = 0.5 * (12.0 * k.c2 + 3.0 * k.c3).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..10_000 {
            let q = exp_so3(&random_vec(&mut rng, std::f64::consts::PI));
            assert!(tracking_error_vector(&w, &q).norm() <= b2);
        }
    }
}
