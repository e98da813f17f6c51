//! Separation certificate for the velocity-free tracking controller and
//! Lyapunov functions along simulated trajectories.
//!
//! The certificate combines three checks: the inertia-ratio condition
//! `λ_M/λ_m < tr[G_E]/‖G_E‖`, the region-of-attraction conditions on the
//! initial estimate, and positive definiteness of the 2×2 matrices that
//! bound `𝒱 = 𝒱_c + 𝒱_o` and its derivative:
//!
//! ```text
//! 𝒱_c = ½ e_Ωᵀ J₀ e_Ω + k_R Ψ + c₁ e_Rᵀ J₀ e_Ω
//! 𝒱_o = ‖e_{ω_E}‖² + k_E Ψ_E − c₂ e_{ω_E}ᵀ e_{R_E}
//! ```
//!
//! `Q_E`-dependent scalars are replaced by worst-case constants valid while
//! `Ψ_E < ψ̄_E`: `A_E = (tr G_E − 2ψ̄_E) λ_m − ‖G_E‖ λ_M` and
//! `B_E = tr G_E + ‖G_E‖`.

use nalgebra::Matrix2;
use thiserror::Error;

use crate::controller::ControllerGains;
use crate::observer::ObserverGains;
use crate::rigid_body::InertiaSpec;
use crate::sim::{Sample, Scenario, TrajectoryLog, REPROJECTION_THRESHOLD};
use crate::so3::WeightMatrix;

pub type Mat2 = Matrix2<f64>;

/// Smallest constant tried by [`choose_constants`].
pub const MIN_CONSTANT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("inertia ratio condition fails: ½(tr G_E − (λ_M/λ_m)‖G_E‖) = {cap:.6} is not positive")]
    UncertifiableScenario { cap: f64 },
    #[error("certificate requires scalar gains ({0} is a matrix)")]
    MatrixGain(&'static str),
    #[error("controller error bound ψ = {psi} must lie in (0, {limit})")]
    InvalidPsi { psi: f64, limit: f64 },
    #[error("estimate error bound ψ̄_E = {psi_bar_e} must lie in (0, {limit})")]
    InvalidPsiBarE { psi_bar_e: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCheck {
    pub ok: bool,
    /// `λ_M / λ_m`
    pub lhs: f64,
    /// `tr[G_E] / ‖G_E‖`
    pub rhs: f64,
}

pub fn check_inertia_ratio(inertia: &InertiaSpec, g_e: &WeightMatrix) -> RatioCheck {
    let lhs = inertia.lambda_max() / inertia.lambda_min();
    let rhs = g_e.trace() / g_e.norm();
    RatioCheck { ok: lhs < rhs, lhs, rhs }
}

/// `½ (tr G_E − (λ_M/λ_m) ‖G_E‖)`, positive exactly when the ratio
/// condition holds.
pub fn ratio_cap(inertia: &InertiaSpec, g_e: &WeightMatrix) -> f64 {
    0.5 * (g_e.trace() - inertia.lambda_max() / inertia.lambda_min() * g_e.norm())
}

/// Upper limit for `ψ̄_E`: `min{n₁, ratio_cap}`.
pub fn psi_bar_e_limit(inertia: &InertiaSpec, g_e: &WeightMatrix) -> f64 {
    g_e.bound_constants().c1.min(ratio_cap(inertia, g_e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoaCheck {
    pub ok: bool,
    /// `ψ̄_E − Ψ_E(0)`
    pub initial_margin: f64,
    /// `limit − ψ̄_E`
    pub limit_margin: f64,
    /// `k_E (ψ̄_E − Ψ_E(0)) − ‖e_{ω_E}(0)‖²`
    pub velocity_margin: f64,
}

/// Region-of-attraction conditions on the initial estimate. The velocity
/// condition is evaluated with `ψ̄_E`.
pub fn check_roa(
    inertia: &InertiaSpec,
    g_e: &WeightMatrix,
    k_e: f64,
    psi_e0: f64,
    e_omega_e0_norm: f64,
    psi_bar_e: f64,
) -> Result<RoaCheck, LyapunovError> {
    let cap = ratio_cap(inertia, g_e);
    if !(cap > 0.0) {
        return Err(LyapunovError::UncertifiableScenario { cap });
    }
    let limit = psi_bar_e_limit(inertia, g_e);
    let initial_margin = psi_bar_e - psi_e0;
    let limit_margin = limit - psi_bar_e;
    let velocity_margin = k_e * (psi_bar_e - psi_e0) - e_omega_e0_norm * e_omega_e0_norm;
    Ok(RoaCheck {
        ok: psi_bar_e > 0.0 && initial_margin > 0.0 && limit_margin > 0.0 && velocity_margin > 0.0,
        initial_margin,
        limit_margin,
        velocity_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGains {
    pub k_r: f64,
    pub k_omega: f64,
    pub k_e: f64,
    pub k_v: f64,
}

impl ScalarGains {
    pub fn from_gains(controller: &ControllerGains, observer: &ObserverGains) -> Result<Self, LyapunovError> {
        let get = |g: &crate::gain::Gain, name| g.as_scalar().ok_or(LyapunovError::MatrixGain(name));
        Ok(ScalarGains {
            k_r: get(&controller.k_r, "k_R")?,
            k_omega: get(&controller.k_omega, "k_Omega")?,
            k_e: get(&observer.k_e, "k_E")?,
            k_v: get(&observer.k_v, "k_v")?,
        })
    }
}

/// Everything the bound matrices depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateProblem {
    pub inertia: InertiaSpec,
    pub g: WeightMatrix,
    pub g_e: WeightMatrix,
    pub gains: ScalarGains,
    /// Bound on the tracking error function, `Ψ < ψ`.
    pub psi: f64,
    /// Bound on the estimate error function, `Ψ_E < ψ̄_E`.
    pub psi_bar_e: f64,
    /// Bound on `‖Ω_d‖`.
    pub omega_max: f64,
}

/// Scalar constants of the bound matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundScalars {
    pub lambda_m: f64,
    pub lambda_max: f64,
    /// `Ψ ≥ b₁ ‖e_R‖²`
    pub b1: f64,
    /// `Ψ ≤ b₂ ‖e_R‖²` while `Ψ < ψ`
    pub b2: f64,
    /// `‖χ‖ ≤ λ_M ‖e_Ω‖ + B₁*`
    pub b1_star: f64,
    /// `‖e_R‖ ≤ B₂*`
    pub b2_star: f64,
    /// `√2 tr G + B₂*`
    pub ec_term: f64,
    pub a_e: f64,
    pub b_e: f64,
    /// `Ψ_E ≥ lower ‖e_{R_E}‖²`
    pub psi_e_lower: f64,
    /// `Ψ_E ≤ upper ‖e_{R_E}‖²` while `Ψ_E < ψ̄_E`
    pub psi_e_upper: f64,
}

impl BoundScalars {
    /// `B₃* = k_Ω − ½ c₁ λ_M (√2 tr G + B₂*)`.
    pub fn b3_star(&self, k_omega: f64, c1: f64) -> f64 {
        k_omega - 0.5 * c1 * self.lambda_max * self.ec_term
    }
}

impl CertificateProblem {
    pub fn scalars(&self) -> Result<BoundScalars, LyapunovError> {
        let kg = self.g.bound_constants();
        let ke = self.g_e.bound_constants();
        let b2 = kg
            .upper_coefficient(self.psi)
            .map_err(|_| LyapunovError::InvalidPsi { psi: self.psi, limit: kg.c1 })?;
        let psi_e_upper = ke
            .upper_coefficient(self.psi_bar_e)
            .map_err(|_| LyapunovError::InvalidPsiBarE { psi_bar_e: self.psi_bar_e, limit: ke.c1 })?;
        let (lm, lmax) = (self.inertia.lambda_min(), self.inertia.lambda_max());
        let b1_star = self
            .inertia
            .eigenvalues()
            .iter()
            .map(|l| (2.0 * l - self.inertia.trace()).abs())
            .fold(0.0, f64::max)
            * self.omega_max;
        let b2_star = 0.5 * (12.0 * kg.c2 + 3.0 * kg.c3).sqrt();
        let tr_ge = self.g_e.trace();
        Ok(BoundScalars {
            lambda_m: lm,
            lambda_max: lmax,
            b1: kg.lower_coefficient(),
            b2,
            b1_star,
            b2_star,
            ec_term: std::f64::consts::SQRT_2 * self.g.trace() + b2_star,
            a_e: (tr_ge - 2.0 * self.psi_bar_e) * lm - self.g_e.norm() * lmax,
            b_e: tr_ge + self.g_e.norm(),
            psi_e_lower: ke.lower_coefficient(),
            psi_e_upper,
        })
    }
}

/// `M₁…M₄` bound `𝒱_c` and `𝒱_o`; `W₁…W₄` bound `−𝒱̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundMatrices {
    pub m: [Mat2; 4],
    pub w: [Mat2; 4],
    pub all_pd: bool,
}

impl BoundMatrices {
    /// Positive-definiteness of `M₁…M₄` followed by `W₁…W₄`.
    pub fn definiteness(&self) -> [bool; 8] {
        let mut out = [false; 8];
        for (slot, m) in out.iter_mut().zip(self.m.iter().chain(self.w.iter())) {
            *slot = is_positive_definite(m);
        }
        out
    }
}

/// Leading-minor test for a symmetric 2×2 matrix.
pub fn is_positive_definite(m: &Mat2) -> bool {
    m[(0, 0)] > 0.0 && m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] > 0.0
}

fn sym(a: f64, b: f64, d: f64) -> Mat2 {
    Mat2::new(a, b, b, d)
}

/// The eight bound matrices for constants `c₁, c₂`. The `e_{ω_E}` weight in
/// `W₂` carries the factor `1/λ_m` of the derivative bound it comes from.
pub fn bound_matrices(problem: &CertificateProblem, c1: f64, c2: f64) -> Result<BoundMatrices, LyapunovError> {
    let s = problem.scalars()?;
    let k = &problem.gains;
    let (lm, lmax) = (s.lambda_m, s.lambda_max);
    let b3 = s.b3_star(k.k_omega, c1);
    let m1 = sym(0.5 * lm, -0.5 * c1 * lmax, s.b1 * k.k_r);
    let m2 = sym(0.5 * lmax, 0.5 * c1 * lmax, s.b2 * k.k_r);
    let m3 = sym(k.k_e * s.psi_e_lower, -0.5 * c2, 1.0);
    let m4 = sym(k.k_e * s.psi_e_upper, 0.5 * c2, 1.0);
    let omega_e_weight = c2 * s.a_e / (6.0 * lmax * lm);
    let w1 = sym(0.5 * b3, 0.5 * c1 * (k.k_omega + s.b1_star), 0.5 * c1 * k.k_r);
    let w2 = sym(0.5 * c1 * k.k_r, 0.5 * c1 * k.k_omega / lm, omega_e_weight);
    let w3 = sym(0.5 * b3, -0.5 * k.k_omega / lm, omega_e_weight);
    let w4 = sym(
        k.k_e * (2.0 * k.k_v * lm - c2 * lmax) / (2.0 * lmax * lm),
        -c2 * k.k_v * s.b_e / (4.0 * lm),
        omega_e_weight,
    );
    let m = [m1, m2, m3, m4];
    let w = [w1, w2, w3, w4];
    let all_pd = m.iter().chain(w.iter()).all(is_positive_definite);
    Ok(BoundMatrices { m, w, all_pd })
}

/// Analytic upper limits on `c₂` (from `M₃`, `M₄` and `W₄`).
pub fn c2_caps(problem: &CertificateProblem) -> Result<[f64; 4], LyapunovError> {
    let s = problem.scalars()?;
    let k = &problem.gains;
    let (lm, lmax) = (s.lambda_m, s.lambda_max);
    let m3 = 2.0 * (k.k_e * s.psi_e_lower).sqrt();
    let m4 = 2.0 * (k.k_e * s.psi_e_upper).sqrt();
    let w4_diag = 2.0 * k.k_v * lm / lmax;
    let num = k.k_e * 2.0 * k.k_v * lm * s.a_e / (3.0 * lmax * lmax);
    let den = k.k_v * k.k_v * s.b_e * s.b_e / 4.0 + k.k_e * s.a_e / (3.0 * lmax);
    let w4_det = if s.a_e > 0.0 { num / den } else { 0.0 };
    Ok([m3, m4, w4_diag, w4_det])
}

/// Analytic upper limits on `c₁` for a given `c₂` (from `W₁`, `W₂` and `M₁`).
pub fn c1_caps(problem: &CertificateProblem, c2: f64) -> Result<[f64; 4], LyapunovError> {
    let s = problem.scalars()?;
    let k = &problem.gains;
    let (lm, lmax) = (s.lambda_m, s.lambda_max);
    let b3_zero = 2.0 * k.k_omega / (lmax * s.ec_term);
    let w2 = c2 * k.k_r * lm * s.a_e / (3.0 * k.k_omega * k.k_omega * lmax);
    let w1 = 2.0 * k.k_r * k.k_omega / (k.k_r * lmax * s.ec_term + 2.0 * (k.k_omega + s.b1_star).powi(2));
    let m1 = (2.0 * s.b1 * k.k_r * lm).sqrt() / lmax;
    Ok([b3_zero, w2, w1, m1])
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstantChoice {
    Feasible { c1: f64, c2: f64, matrices: BoundMatrices },
    Infeasible(String),
}

/// Searches `c₂` downward from its analytic cap and, for each `c₂`, `c₁`
/// downward from its caps, halving until every bound matrix is positive
/// definite or both constants fall below [`MIN_CONSTANT`].
pub fn choose_constants(problem: &CertificateProblem) -> Result<ConstantChoice, LyapunovError> {
    let s = problem.scalars()?;
    if !(s.a_e > 0.0) {
        return Ok(ConstantChoice::Infeasible(format!("worst-case A_E = {:.6} is not positive", s.a_e)));
    }
    let c2_max = c2_caps(problem)?.into_iter().fold(f64::INFINITY, f64::min);
    let mut c2 = 0.99 * c2_max;
    while c2 >= MIN_CONSTANT {
        let c1_max = c1_caps(problem, c2)?.into_iter().fold(f64::INFINITY, f64::min);
        let mut c1 = 0.99 * c1_max;
        while c1 >= MIN_CONSTANT {
            let matrices = bound_matrices(problem, c1, c2)?;
            if matrices.all_pd {
                return Ok(ConstantChoice::Feasible { c1, c2, matrices });
            }
            c1 *= 0.5;
        }
        c2 *= 0.5;
    }
    let w3_floor = 3.0 * problem.gains.k_omega * s.lambda_max / (s.lambda_m * s.a_e);
    Ok(ConstantChoice::Infeasible(format!(
        "no constants down to {MIN_CONSTANT:e}: W3 needs c2 > {w3_floor:.6} but the caps allow at most {c2_max:.6}"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    UncertifiedConvergent,
    Uncertifiable,
    Divergent,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Certified => "CERTIFIED",
            Verdict::UncertifiedConvergent => "UNCERTIFIED-CONVERGENT",
            Verdict::Uncertifiable => "UNCERTIFIABLE",
            Verdict::Divergent => "DIVERGENT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationCertificate {
    pub ratio: RatioCheck,
    pub psi_bar_e_limit: f64,
    pub psi: f64,
    pub psi_bar_e: Option<f64>,
    pub roa: Option<RoaCheck>,
    /// `Ψ(0) < ψ`.
    pub controller_domain_ok: bool,
    pub constants: Option<(f64, f64)>,
    pub matrices: Option<BoundMatrices>,
    pub all_pd: bool,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub problem: Option<CertificateProblem>,
}

/// Fraction of `min{g₁+g₂, g₂+g₃, g₃+g₁}` used as the default `ψ`.
pub const DEFAULT_PSI_FRACTION: f64 = 0.9;

/// Number of candidate `ψ̄_E` values scanned by [`certify`].
const PSI_BAR_E_CANDIDATES: usize = 32;

/// Checks every condition of the separation certificate for `scenario`.
pub fn certify(scenario: &Scenario) -> SeparationCertificate {
    let inertia = scenario.inertia;
    let ratio = check_inertia_ratio(&inertia, &scenario.g_e);
    let limit = psi_bar_e_limit(&inertia, &scenario.g_e);
    let psi = DEFAULT_PSI_FRACTION * scenario.g.bound_constants().c1;
    let initial = crate::sim::sample_at(scenario, 0.0, &scenario.initial_state());
    let mut cert = SeparationCertificate {
        ratio,
        psi_bar_e_limit: limit,
        psi,
        psi_bar_e: None,
        roa: None,
        controller_domain_ok: false,
        constants: None,
        matrices: None,
        all_pd: false,
        verdict: Verdict::Uncertifiable,
        reasons: Vec::new(),
        problem: None,
    };
    let initial = match initial {
        Ok(s) => s,
        Err(e) => {
            cert.reasons.push(format!("initial state cannot be evaluated: {e}"));
            return cert;
        }
    };
    cert.controller_domain_ok = initial.psi < psi;
    if !cert.controller_domain_ok {
        cert.reasons.push(format!("Psi(0) = {:.6} is not below psi = {psi:.6}", initial.psi));
    }
    if !ratio.ok {
        cert.reasons.push(format!("inertia ratio {:.4} is not below {:.4}", ratio.lhs, ratio.rhs));
        return cert;
    }
    let gains = match ScalarGains::from_gains(&scenario.controller, &scenario.observer) {
        Ok(g) => g,
        Err(e) => {
            cert.reasons.push(e.to_string());
            return cert;
        }
    };
    let omega_max = scenario.trajectory.max_rate(scenario.duration, scenario.step / 10.0);
    let e0 = initial.e_omega_e.norm();
    let mut last_roa = None;
    let mut last_choice = None;
    for i in 1..=PSI_BAR_E_CANDIDATES {
        let psi_bar_e = initial.psi_e + (limit - initial.psi_e) * i as f64 / (PSI_BAR_E_CANDIDATES + 1) as f64;
        let roa = match check_roa(&inertia, &scenario.g_e, gains.k_e, initial.psi_e, e0, psi_bar_e) {
            Ok(r) => r,
            Err(e) => {
                cert.reasons.push(e.to_string());
                return cert;
            }
        };
        last_roa = Some((psi_bar_e, roa));
        if !roa.ok {
            continue;
        }
        let problem = CertificateProblem { inertia, g: scenario.g, g_e: scenario.g_e, gains, psi, psi_bar_e, omega_max };
        match choose_constants(&problem) {
            Ok(ConstantChoice::Feasible { c1, c2, matrices }) => {
                cert.psi_bar_e = Some(psi_bar_e);
                cert.roa = Some(roa);
                cert.constants = Some((c1, c2));
                cert.matrices = Some(matrices);
                cert.all_pd = true;
                cert.problem = Some(problem);
                if cert.controller_domain_ok {
                    cert.verdict = Verdict::Certified;
                }
                return cert;
            }
            Ok(ConstantChoice::Infeasible(reason)) => last_choice = Some(reason),
            Err(e) => last_choice = Some(e.to_string()),
        }
    }
    if let Some((psi_bar_e, roa)) = last_roa {
        cert.psi_bar_e = Some(psi_bar_e);
        cert.roa = Some(roa);
        if !roa.ok {
            cert.reasons.push("no admissible psi_bar_E satisfies the region-of-attraction conditions".into());
        }
    }
    if let Some(reason) = last_choice {
        cert.reasons.push(reason);
    }
    cert
}

/// Ratio of terminal to initial error sum below which a run counts as
/// convergent.
pub const CONVERGENCE_RATIO: f64 = 1e-2;

/// Combines a certificate with a simulation of the same scenario: an
/// uncertified scenario whose error sum falls by [`CONVERGENCE_RATIO`] is
/// `UNCERTIFIED-CONVERGENT`, otherwise `DIVERGENT`.
pub fn verdict_with_simulation(cert: &SeparationCertificate, log: &TrajectoryLog) -> Verdict {
    let first = log.samples.first().map(Sample::error_sum).unwrap_or(f64::NAN);
    let last = log.last().error_sum();
    let converged = last.is_finite() && last <= CONVERGENCE_RATIO * first;
    match (cert.verdict, converged) {
        (Verdict::Certified, _) => Verdict::Certified,
        (_, true) => Verdict::UncertifiedConvergent,
        (_, false) => Verdict::Divergent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub u: f64,
    pub v_c: f64,
    pub v_o: f64,
    pub v: f64,
    pub psi: f64,
    pub psi_e: f64,
    pub e_r: f64,
    pub e_omega: f64,
    pub e_r_e: f64,
    pub e_omega_e: f64,
    /// `αᵀM₁α ≤ 𝒱_c ≤ αᵀM₂α`, checked while `Ψ < ψ`.
    pub controller_sandwich: Option<bool>,
    /// `ξᵀM₃ξ ≤ 𝒱_o ≤ ξᵀM₄ξ`, checked while `Ψ_E < ψ̄_E`.
    pub observer_sandwich: Option<bool>,
}

fn quad(m: &Mat2, x: f64, y: f64) -> f64 {
    m[(0, 0)] * x * x + 2.0 * m[(0, 1)] * x * y + m[(1, 1)] * y * y
}

/// `𝒰`, `𝒱_c`, `𝒱_o`, `𝒱` at one sample.
pub fn lyapunov_sample(
    problem: &CertificateProblem,
    matrices: &BoundMatrices,
    c1: f64,
    c2: f64,
    s: &Sample,
) -> LyapunovSample {
    let k = &problem.gains;
    let j0 = problem.inertia.matrix();
    let v_c = 0.5 * s.e_omega.dot(&(j0 * s.e_omega)) + k.k_r * s.psi + c1 * s.e_r.dot(&(j0 * s.e_omega));
    let u = s.e_omega_e.norm_squared() + k.k_e * s.psi_e;
    let v_o = u - c2 * s.e_omega_e.dot(&s.e_r_e);
    let (e_r, e_omega, e_r_e, e_omega_e) = (s.e_r.norm(), s.e_omega.norm(), s.e_r_e.norm(), s.e_omega_e.norm());
    // Error functions carry absolute round-off of the order of the
    // attitudes' orthogonality drift, scaled by the gains that weight them.
    let slack = REPROJECTION_THRESHOLD * (1.0 + k.k_r + k.k_e + v_c.abs() + v_o.abs());
    let [m1, m2, m3, m4] = &matrices.m;
    let controller_sandwich = (s.psi < problem.psi)
        .then(|| quad(m1, e_omega, e_r) <= v_c + slack && v_c <= quad(m2, e_omega, e_r) + slack);
    let observer_sandwich = (s.psi_e < problem.psi_bar_e)
        .then(|| quad(m3, e_r_e, e_omega_e) <= v_o + slack && v_o <= quad(m4, e_r_e, e_omega_e) + slack);
    LyapunovSample {
        t: s.t,
        u,
        v_c,
        v_o,
        v: v_c + v_o,
        psi: s.psi,
        psi_e: s.psi_e,
        e_r,
        e_omega,
        e_r_e,
        e_omega_e,
        controller_sandwich,
        observer_sandwich,
    }
}

pub fn lyapunov_trace(
    problem: &CertificateProblem,
    matrices: &BoundMatrices,
    c1: f64,
    c2: f64,
    log: &TrajectoryLog,
) -> Vec<LyapunovSample> {
    log.samples.iter().map(|s| lyapunov_sample(problem, matrices, c1, c2, s)).collect()
}
