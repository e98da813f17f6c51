//! Runge-Kutta-Munthe-Kaas step on `(R, Ω, R̄, p̄)`.
//!
//! Both attitudes are advanced as `R ← R exp(θ)` with the increment `θ`
//! integrated in the right-trivialized chart; the vector parts use classical
//! RK4. Controls are recomputed at every stage from that stage's state.

use super::{ControlMode, Scenario, SimError, BLOWUP_NORM};
use crate::controller::{compute_tracking_errors, estimated_tracking_errors, pd_control, velocity_free_control, ControlError, ControllerGains, DesiredState};
use crate::observer::{observer_derivative, ObserverState};
use crate::rigid_body::{body_frame_derivative, InertiaSpec, RigidBodyState};
use crate::so3::{exp_so3, project_to_rotation, right_dexp_inv, Rotation, Vec3, WeightMatrix};

/// Attitudes are re-projected onto SO(3) when their orthogonality residual
/// exceeds this value.
pub const REPROJECTION_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub body: RigidBodyState,
    pub observer: ObserverState,
}

/// Right-hand side of the coupled system at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDerivative {
    /// Body rate of `R` (`Ṙ = R hat(Ω)`).
    pub omega: Vec3,
    pub omega_dot: Vec3,
    /// Body rate of `R̄` (`d/dt R̄ = R̄ hat(·)`).
    pub estimate_rate: Vec3,
    pub momentum_dot: Vec3,
    /// Body-frame control moment.
    pub u: Vec3,
    /// Inertial control moment `R u`.
    pub tau: Vec3,
}

/// Velocity-free control moment. Its inputs are the measured attitude and
/// the observer state; the true angular velocity is not reachable from here.
pub fn velocity_free_moment(
    inertia: &InertiaSpec,
    weights: &WeightMatrix,
    gains: &ControllerGains,
    desired: &DesiredState,
    attitude: &Rotation,
    observer: &ObserverState,
) -> Result<Vec3, ControlError> {
    let omega_bar = observer.body_omega(inertia, attitude);
    let errors = estimated_tracking_errors(weights, attitude, desired, &omega_bar);
    velocity_free_control(inertia, gains, &errors, desired)
}

fn control_input(scenario: &Scenario, t: f64, desired: &DesiredState, state: &SimState) -> Result<Vec3, ControlError> {
    match &scenario.mode {
        ControlMode::FullState => {
            let errors = compute_tracking_errors(&scenario.g, &state.body, desired, None);
            pd_control(&scenario.inertia, &scenario.controller, &errors, desired)
        }
        ControlMode::VelocityFree => velocity_free_moment(
            &scenario.inertia,
            &scenario.g,
            &scenario.controller,
            desired,
            &state.body.attitude,
            &state.observer,
        ),
        ControlMode::OpenLoop(profile) => Ok(state.body.attitude.inverse_rotate(&profile.torque(t))),
    }
}

pub fn evaluate_stage(scenario: &Scenario, t: f64, state: &SimState) -> Result<StageDerivative, SimError> {
    let desired = scenario.trajectory.evaluate(t);
    let u = control_input(scenario, t, &desired, state)?;
    if !u.iter().all(|x| x.is_finite()) || u.norm() > BLOWUP_NORM {
        return Err(SimError::NumericalBlowup { t });
    }
    let r = &state.body.attitude;
    let tau = r.rotate(&u);
    let body = body_frame_derivative(&scenario.inertia, &state.body, &u);
    let obs = observer_derivative(&scenario.inertia, &scenario.g_e, &scenario.observer, r, &tau, &state.observer);
    Ok(StageDerivative {
        omega: body.attitude_tangent,
        omega_dot: body.omega_dot,
        estimate_rate: state.observer.attitude.inverse_rotate(&obs.attitude_tangent),
        momentum_dot: obs.momentum_dot,
        u,
        tau,
    })
}

#[derive(Clone, Copy)]
struct Increment {
    theta: Vec3,
    omega: Vec3,
    phi: Vec3,
    momentum: Vec3,
}

impl Increment {
    fn from_stage(d: &StageDerivative, theta: &Vec3, phi: &Vec3) -> Self {
        Increment {
            theta: right_dexp_inv(theta, &d.omega),
            omega: d.omega_dot,
            phi: right_dexp_inv(phi, &d.estimate_rate),
            momentum: d.momentum_dot,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Increment { theta: self.theta * s, omega: self.omega * s, phi: self.phi * s, momentum: self.momentum * s }
    }

    fn combine(k: [&Increment; 4], h: f64) -> Self {
        let w = |f: fn(&Increment) -> Vec3| (f(k[0]) + 2.0 * f(k[1]) + 2.0 * f(k[2]) + f(k[3])) * (h / 6.0);
        Increment { theta: w(|i| i.theta), omega: w(|i| i.omega), phi: w(|i| i.phi), momentum: w(|i| i.momentum) }
    }
}

fn advance(base: &SimState, inc: &Increment) -> SimState {
    SimState {
        body: RigidBodyState::new(&base.body.attitude * &exp_so3(&inc.theta), base.body.omega + inc.omega),
        observer: ObserverState {
            attitude: &base.observer.attitude * &exp_so3(&inc.phi),
            momentum: base.observer.momentum + inc.momentum,
        },
    }
}

/// One step of size `h` from time `t`. Returns the new state and the number
/// of attitudes that were re-projected.
pub fn step(scenario: &Scenario, state: &SimState, t: f64, h: f64) -> Result<(SimState, u32), SimError> {
    let zero = Vec3::zeros();
    let d1 = evaluate_stage(scenario, t, state)?;
    let k1 = Increment::from_stage(&d1, &zero, &zero);

    let y2 = k1.scaled(0.5 * h);
    let d2 = evaluate_stage(scenario, t + 0.5 * h, &advance(state, &y2))?;
    let k2 = Increment::from_stage(&d2, &y2.theta, &y2.phi);

    let y3 = k2.scaled(0.5 * h);
    let d3 = evaluate_stage(scenario, t + 0.5 * h, &advance(state, &y3))?;
    let k3 = Increment::from_stage(&d3, &y3.theta, &y3.phi);

    let y4 = k3.scaled(h);
    let d4 = evaluate_stage(scenario, t + h, &advance(state, &y4))?;
    let k4 = Increment::from_stage(&d4, &y4.theta, &y4.phi);

    let mut next = advance(state, &Increment::combine([&k1, &k2, &k3, &k4], h));
    let mut reprojected = 0;
    for attitude in [&mut next.body.attitude, &mut next.observer.attitude] {
        if attitude.residual() > REPROJECTION_THRESHOLD {
            *attitude = project_to_rotation(attitude.matrix()).map_err(|_| SimError::NumericalBlowup { t: t + h })?;
            reprojected += 1;
        }
    }
    let finite = next.body.omega.iter().chain(next.observer.momentum.iter()).all(|x| x.is_finite());
    if !finite || next.body.omega.norm() > BLOWUP_NORM || next.observer.momentum.norm() > BLOWUP_NORM {
        return Err(SimError::NumericalBlowup { t: t + h });
    }
    Ok((next, reprojected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stabilization_v_a, InitialEstimate, TorqueProfile};

    #[test]
    fn rest_at_desired_attitude_is_fixed() {
        let mut sc = stabilization_v_a();
        sc.initial_body = RigidBodyState::at_rest(Rotation::identity());
        sc.initial_estimate = InitialEstimate { attitude: Rotation::identity(), omega: Vec3::zeros() };
        let s0 = sc.initial_state();
        let (s1, n) = step(&sc, &s0, 0.0, sc.step).unwrap();
        assert_eq!(n, 0);
        assert!((s1.body.attitude.matrix() - s0.body.attitude.matrix()).amax() <= 1e-14);
        assert!(s1.body.omega.norm() <= 1e-14);
        assert!(s1.observer.momentum.norm() <= 1e-14);
    }

    #[test]
    fn velocity_free_moment_ignores_true_rate() {
        let sc = stabilization_v_a();
        let s = sc.initial_state();
        let d = sc.trajectory.evaluate(0.0);
        let a = evaluate_stage(&sc, 0.0, &s).unwrap();
        let mut other = s;
        other.body.omega = Vec3::new(100.0, -3.0, 7.0);
        let b = evaluate_stage(&sc, 0.0, &other).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.momentum_dot, b.momentum_dot);
        assert_eq!(a.estimate_rate, b.estimate_rate);
        let direct = velocity_free_moment(&sc.inertia, &sc.g, &sc.controller, &d, &s.body.attitude, &s.observer).unwrap();
        assert_eq!(a.u, direct);
    }

    #[test]
    fn open_loop_torque_is_expressed_in_body_frame() {
        let mut sc = stabilization_v_a();
        let tau = Vec3::new(0.3, -0.1, 0.2);
        sc.mode = ControlMode::OpenLoop(TorqueProfile::Constant(tau));
        let d = evaluate_stage(&sc, 0.0, &sc.initial_state()).unwrap();
        assert!((d.tau - tau).norm() < 1e-15);
        assert!((sc.initial_body.attitude.rotate(&d.u) - tau).norm() < 1e-15);
    }
}
