use super::integrator::{evaluate_stage, step, SimState};
use super::{Scenario, SimError};
use crate::controller::{compute_tracking_errors, DesiredState};
use crate::observer::{compute_estimate_errors, observer_lyapunov};
use crate::so3::{Rotation, Vec3};

/// Everything recorded at one logged time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub attitude: Rotation,
    /// Body angular velocity `Ω`.
    pub omega: Vec3,
    pub estimate_attitude: Rotation,
    /// Estimated inertial momentum `p̄`.
    pub estimate_momentum: Vec3,
    /// Estimated inertial angular velocity `ω̄`.
    pub omega_bar: Vec3,
    pub desired: DesiredState,
    /// Body-frame control moment.
    pub u: Vec3,
    /// Inertial control moment.
    pub tau: Vec3,
    pub q_e: Rotation,
    pub e_r_e: Vec3,
    /// `ω − ω̄` (inertial).
    pub velocity_error: Vec3,
    pub e_omega_e: Vec3,
    pub omega_e: Vec3,
    pub q: Rotation,
    pub e_r: Vec3,
    pub e_omega: Vec3,
    pub e_omega_bar: Vec3,
    pub psi: f64,
    pub psi_e: f64,
    /// Observer Lyapunov function `𝒰`.
    pub lyapunov: f64,
    pub ortho_r: f64,
    pub ortho_rbar: f64,
}

impl Sample {
    /// `‖e_{R_E}‖ + ‖ω − ω̄‖ + ‖e_R‖ + ‖e_Ω‖`.
    pub fn error_sum(&self) -> f64 {
        self.e_r_e.norm() + self.velocity_error.norm() + self.e_r.norm() + self.e_omega.norm()
    }

    pub fn max_error(&self) -> f64 {
        self.e_r_e
            .norm()
            .max(self.velocity_error.norm())
            .max(self.e_r.norm())
            .max(self.e_omega.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub reprojections: usize,
    pub step: f64,
    pub decimation: usize,
}

impl TrajectoryLog {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a log always holds the initial sample")
    }

    pub fn max_orthogonality_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.ortho_r.max(s.ortho_rbar)).fold(0.0, f64::max)
    }

    /// Least-squares line through `ln(metric)` over the samples in
    /// `[t0, t1]`. Samples with a non-positive metric are skipped; `None` when
    /// fewer than two remain.
    pub fn exponential_fit(&self, t0: f64, t1: f64, metric: impl Fn(&Sample) -> f64) -> Option<ExponentialFit> {
        let points: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter(|s| s.t >= t0 && s.t <= t1)
            .map(|s| (s.t, metric(s)))
            .filter(|&(_, m)| m > 0.0 && m.is_finite())
            .map(|(t, m)| (t, m.ln()))
            .collect();
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
        for &(t, y) in &points {
            stt += (t - mt) * (t - mt);
            sty += (t - mt) * (y - my);
            syy += (y - my) * (y - my);
        }
        let slope = sty / stt;
        let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
        Some(ExponentialFit { slope, intercept: my - slope * mt, r_squared })
    }

    /// Earliest logged time from which `metric` stays below `threshold` to
    /// the end of the log.
    pub fn settling_time(&self, threshold: f64, metric: impl Fn(&Sample) -> f64) -> Option<f64> {
        let mut settled = None;
        for s in &self.samples {
            if metric(s) < threshold {
                settled.get_or_insert(s.t);
            } else {
                settled = None;
            }
        }
        settled
    }
}

/// `ln(metric) ≈ intercept + slope · t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub reprojections: usize,
    pub final_time: f64,
    pub final_state: SimState,
}

/// Evaluates every logged quantity at state `state` and time `t`.
pub fn sample_at(scenario: &Scenario, t: f64, state: &SimState) -> Result<Sample, SimError> {
    let stage = evaluate_stage(scenario, t, state)?;
    let desired = scenario.trajectory.evaluate(t);
    let body = &state.body;
    let obs = &state.observer;
    let r = &body.attitude;
    let est = compute_estimate_errors(&scenario.g_e, &scenario.inertia, &scenario.observer, body, obs);
    let omega_bar = obs.omega(&scenario.inertia, r);
    let track = compute_tracking_errors(&scenario.g, body, &desired, Some(&obs.body_omega(&scenario.inertia, r)));
    Ok(Sample {
        t,
        attitude: *r,
        omega: body.omega,
        estimate_attitude: obs.attitude,
        estimate_momentum: obs.momentum,
        omega_bar,
        desired,
        u: stage.u,
        tau: stage.tau,
        q_e: est.q_e,
        e_r_e: est.e_r_e,
        velocity_error: body.inertial_omega() - omega_bar,
        e_omega_e: est.e_omega_e,
        omega_e: est.omega_e,
        q: track.q,
        e_r: track.e_r,
        e_omega: track.e_omega.expect("true state is available"),
        e_omega_bar: track.e_omega_bar.expect("estimate is attached"),
        psi: track.psi,
        psi_e: est.psi_e,
        lyapunov: observer_lyapunov(&scenario.observer.k_e, &est),
        ortho_r: r.residual(),
        ortho_rbar: obs.attitude.residual(),
    })
}

/// Runs the scenario and hands every logged sample to `visit` without
/// storing the trajectory.
pub fn run_with<F: FnMut(&Sample)>(scenario: &Scenario, mut visit: F) -> Result<RunSummary, SimError> {
    scenario.validate()?;
    let n = scenario.steps();
    let h = scenario.step;
    let mut state = scenario.initial_state();
    let mut reprojections = 0usize;
    for k in 0..=n {
        let t = k as f64 * h;
        if k % scenario.decimation == 0 || k == n {
            visit(&sample_at(scenario, t, &state)?);
        }
        if k < n {
            let (next, count) = step(scenario, &state, t, h)?;
            reprojections += count as usize;
            state = next;
        }
    }
    Ok(RunSummary { steps: n, reprojections, final_time: n as f64 * h, final_state: state })
}

pub fn run(scenario: &Scenario) -> Result<TrajectoryLog, SimError> {
    let mut samples = Vec::with_capacity(scenario.steps() / scenario.decimation.max(1) + 2);
    let summary = run_with(scenario, |s| samples.push(*s))?;
    Ok(TrajectoryLog {
        samples,
        reprojections: summary.reprojections,
        step: scenario.step,
        decimation: scenario.decimation,
    })
}
