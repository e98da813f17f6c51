//! Randomized initial estimates and basin classification.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::log::run_with;
use super::{InitialEstimate, Scenario, SimError};
use crate::observer::{classify_equilibrium, compute_estimate_errors, Equilibrium};
use crate::so3::{exp_so3, flip_rotation, Rotation, Vec3};

/// Distribution of the initial observer estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    /// Haar-uniform `R̄(0)` and `ω̄(0)` uniform in the ball of radius `max_rate`.
    Uniform { max_rate: f64 },
    /// `Q_E(0) = D_i` and `ω̄(0) = ω(0)` exactly.
    AtEquilibrium(u8),
    /// As [`Sampler::AtEquilibrium`], with `R̄(0)` rotated by `magnitude`
    /// about a random axis.
    Perturbed { index: u8, magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSpec {
    pub n: usize,
    pub sampler: Sampler,
    pub seed: u64,
    /// Worker cap; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Convergence threshold on `‖e_{R_E}‖` and `‖ω − ω̄‖`, also used as the
    /// classification tolerance.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub run_id: usize,
    pub initial_estimate: InitialEstimate,
    pub class: Equilibrium,
    /// First logged time after which both estimation errors stay below the
    /// threshold.
    pub time_to_threshold: Option<f64>,
    pub max_psi_e: f64,
    pub final_estimation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub outcomes: Vec<RunOutcome>,
}

impl MonteCarloReport {
    pub fn count(&self, class: Equilibrium) -> usize {
        self.outcomes.iter().filter(|o| o.class == class).count()
    }
}

/// Haar-uniform rotation from a uniformly sampled unit quaternion.
pub fn haar_rotation<R: Rng>(rng: &mut R) -> Rotation {
    let u1: f64 = rng.gen();
    let (s2, c2) = (std::f64::consts::TAU * rng.gen::<f64>()).sin_cos();
    let (s3, c3) = (std::f64::consts::TAU * rng.gen::<f64>()).sin_cos();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = UnitQuaternion::from_quaternion(Quaternion::new(b * c3, a * s2, a * c2, b * s3));
    Rotation::new(q.to_rotation_matrix().into_inner()).expect("unit quaternion gives a rotation")
}

fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn sample_estimate(base: &Scenario, sampler: &Sampler, rng: &mut ChaCha8Rng) -> InitialEstimate {
    let r0 = base.initial_body.attitude;
    let omega0 = base.initial_body.inertial_omega();
    match *sampler {
        Sampler::Uniform { max_rate } => {
            let attitude = haar_rotation(rng);
            let radius = max_rate * rng.gen::<f64>().cbrt();
            InitialEstimate { attitude, omega: random_unit_vector(rng) * radius }
        }
        Sampler::AtEquilibrium(i) => {
            InitialEstimate { attitude: &flip_rotation(i as usize) * &r0, omega: omega0 }
        }
        Sampler::Perturbed { index, magnitude } => {
            let kick = exp_so3(&(random_unit_vector(rng) * magnitude));
            InitialEstimate { attitude: &kick * &(&flip_rotation(index as usize) * &r0), omega: omega0 }
        }
    }
}

fn run_one(base: &Scenario, spec: &MonteCarloSpec, run_id: usize) -> Result<RunOutcome, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run_id as u64);
    let initial_estimate = sample_estimate(base, &spec.sampler, &mut rng);
    let scenario = Scenario { initial_estimate, ..base.clone() };
    let mut max_psi_e: f64 = 0.0;
    let mut last_above: Option<f64> = None;
    let mut first_below_after: Option<f64> = None;
    let mut final_error = f64::NAN;
    let summary = run_with(&scenario, |s| {
        max_psi_e = max_psi_e.max(s.psi_e);
        let e = s.e_r_e.norm().max(s.velocity_error.norm());
        final_error = e;
        if e >= spec.threshold {
            last_above = Some(s.t);
            first_below_after = None;
        } else if first_below_after.is_none() {
            first_below_after = Some(s.t);
        }
    })?;
    let end = summary.final_state;
    let errors = compute_estimate_errors(&scenario.g_e, &scenario.inertia, &scenario.observer, &end.body, &end.observer);
    let time_to_threshold = match last_above {
        None => Some(0.0),
        Some(_) => first_below_after,
    };
    Ok(RunOutcome {
        run_id,
        initial_estimate,
        class: classify_equilibrium(&errors, spec.threshold),
        time_to_threshold,
        max_psi_e,
        final_estimation_error: final_error,
    })
}

/// Runs `spec.n` independent copies of `base` with sampled initial estimates.
/// Results are ordered by run index and do not depend on the worker count.
pub fn monte_carlo(base: &Scenario, spec: &MonteCarloSpec) -> Result<MonteCarloReport, SimError> {
    base.validate()?;
    if spec.n == 0 {
        return Err(SimError::InvalidScenario("Monte Carlo needs at least one run".into()));
    }
    let work = || (0..spec.n).into_par_iter().map(|i| run_one(base, spec, i)).collect::<Result<Vec<_>, _>>();
    let outcomes = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| SimError::InvalidScenario(format!("cannot start worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(MonteCarloReport { outcomes })
}
