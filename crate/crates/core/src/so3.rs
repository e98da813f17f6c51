//! Rotation-group primitives and the attitude error machinery shared by the
//! observer and the tracking controller.
//!
//! Vectors and matrices are plain `nalgebra` fixed-size types. [`Rotation`]
//! is a validated wrapper: construction checks `RᵀR = I` and `det R = 1`
//! within [`ROTATION_TOLERANCE`], and nothing in this module silently
//! re-orthonormalizes. Drift is surfaced to callers, who decide when to call
//! [`project_to_rotation`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default tolerance on `‖RᵀR − I‖_F` and `|det R − 1|`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Largest symmetric-part entry accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;
/// Below this angle [`exp_so3`] switches to its Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (largest symmetric entry {0:.3e})")]
    NotSkewSymmetric(f64),
    #[error("matrix is not a rotation (orthogonality residual {residual:.3e}, det {det:.12})")]
    NotARotation { residual: f64, det: f64 },
    #[error("cannot project onto SO(3): {0}")]
    DegenerateMatrix(&'static str),
    #[error("weights must be finite, positive and pairwise distinct, got {0:?}")]
    InvalidWeights([f64; 3]),
    #[error("bound parameter psi = {psi} must lie in (0, {limit})")]
    InvalidPsiBound { psi: f64, limit: f64 },
}

/// Maps `v` to the skew-symmetric matrix with `hat(v) w = v × w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds
/// [`SKEW_TOLERANCE`]; otherwise returns the vector of the skew part.
pub fn vee(m: &Mat3) -> Result<Vec3, So3Error> {
    let sym = (m + m.transpose()) * 0.5;
    let worst = sym.amax();
    if !(worst <= SKEW_TOLERANCE) {
        return Err(So3Error::NotSkewSymmetric(worst));
    }
    Ok(skew_vee(m))
}

/// Vector of the skew-symmetric part of `m`, with no symmetry check.
pub fn skew_vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `‖MᵀM − I‖_F`.
pub fn orthogonality_residual(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order.
///
/// Closed-form trigonometric solution of the characteristic cubic; only the
/// upper triangle is read.
pub fn symmetric_eigenvalues(m: &Mat3) -> [f64; 3] {
    let (a11, a22, a33) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    let (a12, a13, a23) = (m[(0, 1)], m[(0, 2)], m[(1, 2)]);
    let off = a12 * a12 + a13 * a13 + a23 * a23;
    let q = (a11 + a22 + a33) / 3.0;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * off;
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if off <= (f64::EPSILON * scale).powi(2) || p2 <= (f64::EPSILON * scale).powi(2) {
        let mut d = [a11, a22, a33];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p = (p2 / 6.0).sqrt();
    let b = Mat3::new(
        a11 - q, a12, a13, //
        a12, a22 - q, a23, //
        a13, a23, a33 - q,
    ) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let largest = q + 2.0 * p * phi.cos();
    let smallest = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let middle = 3.0 * q - largest - smallest;
    [smallest, middle, largest]
}

/// Matrix 2-norm (largest singular value).
pub fn spectral_norm(m: &Mat3) -> f64 {
    symmetric_eigenvalues(&(m.transpose() * m))[2].max(0.0).sqrt()
}

/// An element of SO(3).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates `m` against [`ROTATION_TOLERANCE`].
    pub fn new(m: Mat3) -> Result<Self, So3Error> {
        Self::with_tolerance(m, ROTATION_TOLERANCE)
    }

    pub fn with_tolerance(m: Mat3, tol: f64) -> Result<Self, So3Error> {
        let residual = orthogonality_residual(&m);
        let det = m.determinant();
        if !(residual <= tol) || !((det - 1.0).abs() <= tol) || m.iter().any(|x| !x.is_finite()) {
            return Err(So3Error::NotARotation { residual, det });
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `Rᵀ v`.
    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    /// `‖RᵀR − I‖_F`.
    pub fn residual(&self) -> f64 {
        orthogonality_residual(&self.0)
    }

    /// `R M Rᵀ`.
    pub fn conjugate(&self, m: &Mat3) -> Mat3 {
        self.0 * m * self.0.transpose()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation({:?})", self.0.as_slice())
    }
}

/// Exponential map (Rodrigues formula).
pub fn exp_so3(v: &Vec3) -> Rotation {
    let theta = v.norm();
    let k = hat(v);
    let k2 = k * k;
    let m = if theta < SMALL_ANGLE {
        Mat3::identity() + k + k2 * 0.5
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        Mat3::identity() + k * (theta.sin() / theta) + k2 * (0.5 * s * s)
    };
    Rotation(m)
}

/// Rotation `Rz(yaw) Ry(pitch) Rx(roll)` of the 3-2-1 Euler sequence.
pub fn euler321_rotation(yaw: f64, pitch: f64, roll: f64) -> Rotation {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    let (sg, cg) = roll.sin_cos();
    Rotation(Mat3::new(
        ca * cb,
        ca * sb * sg - sa * cg,
        ca * sb * cg + sa * sg,
        sa * cb,
        sa * sb * sg + ca * cg,
        sa * sb * cg - ca * sg,
        -sb,
        cb * sg,
        cb * cg,
    ))
}

/// The rotations `diag[1,-1,-1]`, `diag[-1,1,-1]`, `diag[-1,-1,1]` for
/// `index` 1, 2, 3. These are the undesired critical points of the error
/// functions for diagonal weights. Panics unless `index` is 1, 2 or 3.
pub fn flip_rotation(index: usize) -> Rotation {
    let d = match index {
        1 => Vec3::new(1.0, -1.0, -1.0),
        2 => Vec3::new(-1.0, 1.0, -1.0),
        3 => Vec3::new(-1.0, -1.0, 1.0),
        _ => panic!("flip rotation index must be 1, 2 or 3, got {index}"),
    };
    Rotation(Mat3::from_diagonal(&d))
}

/// Nearest rotation to `m` in the Frobenius norm (orthogonal polar factor).
///
/// Uses the scaled Newton iteration `X ← ½(γX + γ⁻¹X⁻ᵀ)`, which converges
/// quadratically for nonsingular `m`.
pub fn project_to_rotation(m: &Mat3) -> Result<Rotation, So3Error> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(So3Error::DegenerateMatrix("non-finite entries"));
    }
    let det = m.determinant();
    let scale = m.norm();
    if !(det > 0.0) {
        return Err(So3Error::DegenerateMatrix("determinant is not positive"));
    }
    if det <= 1e-14 * scale.powi(3) {
        return Err(So3Error::DegenerateMatrix("matrix is numerically rank deficient"));
    }
    let mut x = *m;
    for _ in 0..100 {
        let inv = x
            .try_inverse()
            .ok_or(So3Error::DegenerateMatrix("iterate became singular"))?;
        let gamma = (inv.norm() / x.norm()).sqrt();
        let next = (x * gamma + inv.transpose() / gamma) * 0.5;
        let delta = (next - x).norm();
        x = next;
        if delta <= 4.0 * f64::EPSILON {
            break;
        }
    }
    // One unscaled step polishes the last bits once gamma ≈ 1.
    let inv = x
        .try_inverse()
        .ok_or(So3Error::DegenerateMatrix("iterate became singular"))?;
    Ok(Rotation((x + inv.transpose()) * 0.5))
}

/// Right-trivialized inverse differential of the exponential map.
///
/// If `R(t) = R₀ exp(θ(t))` satisfies `Ṙ = R hat(f)`, then
/// `θ̇ = right_dexp_inv(θ, f)`.
pub fn right_dexp_inv(theta: &Vec3, f: &Vec3) -> Vec3 {
    let c = dexp_inv_coefficient(theta.norm());
    let txf = theta.cross(f);
    f + txf * 0.5 + theta.cross(&txf) * c
}

/// Left-trivialized counterpart: `R(t) = exp(φ(t)) R₀` with `Ṙ = hat(f) R`
/// gives `φ̇ = left_dexp_inv(φ, f)`.
pub fn left_dexp_inv(phi: &Vec3, f: &Vec3) -> Vec3 {
    let c = dexp_inv_coefficient(phi.norm());
    let pxf = phi.cross(f);
    f - pxf * 0.5 + phi.cross(&pxf) * c
}

// (1 - (θ/2) cot(θ/2)) / θ²
fn dexp_inv_coefficient(theta: f64) -> f64 {
    if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    }
}

/// Diagonal attitude weighting `diag[w₁, w₂, w₃]` with distinct positive
/// entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    weights: [f64; 3],
}

impl WeightMatrix {
    pub fn new(weights: [f64; 3]) -> Result<Self, So3Error> {
        let [a, b, c] = weights;
        let valid = weights.iter().all(|w| w.is_finite() && *w > 0.0) && a != b && b != c && a != c;
        if !valid {
            return Err(So3Error::InvalidWeights(weights));
        }
        Ok(WeightMatrix { weights })
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.weights))
    }

    pub fn trace(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Spectral norm, i.e. the largest weight.
    pub fn norm(&self) -> f64 {
        self.weights.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Sum of the two weights other than `index` (1-based), the value of the
    /// error function at [`flip_rotation`]`(index)`.
    pub fn pair_sum(&self, index: usize) -> f64 {
        let [a, b, c] = self.weights;
        match index {
            1 => b + c,
            2 => c + a,
            3 => a + b,
            _ => panic!("pair index must be 1, 2 or 3, got {index}"),
        }
    }

    pub fn bound_constants(&self) -> BoundConstants {
        BoundConstants::from_weights(self.weights)
    }
}

/// The five min/max constants that sandwich the error function between
/// multiples of the squared error-vector norm.
///
/// For weights `f₁, f₂, f₃`:
/// `c₁ = min fᵢ+fⱼ`, `c₂ = max (fᵢ−fⱼ)²`, `c₃ = max (fᵢ+fⱼ)²`,
/// `c₄ = max fᵢ+fⱼ`, `c₅ = min (fᵢ+fⱼ)²` over the three distinct pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl BoundConstants {
    pub fn from_weights([a, b, c]: [f64; 3]) -> Self {
        let sums = [a + b, b + c, c + a];
        let diffs = [a - b, b - c, c - a];
        let min = |xs: [f64; 3]| xs.into_iter().fold(f64::INFINITY, f64::min);
        let max = |xs: [f64; 3]| xs.into_iter().fold(f64::NEG_INFINITY, f64::max);
        BoundConstants {
            c1: min(sums),
            c2: max(diffs.map(|d| d * d)),
            c3: max(sums.map(|s| s * s)),
            c4: max(sums),
            c5: min(sums.map(|s| s * s)),
        }
    }

    /// Coefficient of the global lower bound `Ψ ≥ k‖e‖²`.
    pub fn lower_coefficient(&self) -> f64 {
        self.c1 / (self.c2 + self.c3)
    }

    /// Coefficient of the upper bound `Ψ ≤ k‖e‖²`, valid while `Ψ < psi`.
    pub fn upper_coefficient(&self, psi: f64) -> Result<f64, So3Error> {
        if !(psi > 0.0 && psi < self.c1) {
            return Err(So3Error::InvalidPsiBound { psi, limit: self.c1 });
        }
        Ok(self.c1 * self.c4 / (self.c5 * (self.c1 - psi)))
    }
}

/// `½ tr[W(I − Q)]`.
pub fn error_function(w: &WeightMatrix, q: &Rotation) -> f64 {
    let m = q.matrix();
    let [a, b, c] = w.weights();
    0.5 * (a * (1.0 - m[(0, 0)]) + b * (1.0 - m[(1, 1)]) + c * (1.0 - m[(2, 2)]))
}

/// `½ (Q W − W Qᵀ)^∨`, the attitude error vector of the estimator.
pub fn estimation_error_vector(w: &WeightMatrix, q: &Rotation) -> Vec3 {
    let g = w.matrix();
    let qg = q.matrix() * g;
    skew_vee(&(qg - qg.transpose())) * 0.5
}

/// `½ (W Qᵀ − Q W)^∨`, the attitude error vector of the tracking controller.
/// Note the operand order is the reverse of [`estimation_error_vector`].
pub fn tracking_error_vector(w: &WeightMatrix, q: &Rotation) -> Vec3 {
    let g = w.matrix();
    let qg = q.matrix() * g;
    skew_vee(&(qg.transpose() - qg)) * 0.5
}

/// Matrix `E_o` with `d/dt e_{R_E} = E_o ω_E`:
/// `½ (tr[Q W] I − 2 hat(e_{R_E}) − W Qᵀ)`.
pub fn eo_matrix(w: &WeightMatrix, q: &Rotation) -> Mat3 {
    let g = w.matrix();
    let e = estimation_error_vector(w, q);
    let tr = (q.matrix() * g).trace();
    (Mat3::identity() * tr - hat(&e) * 2.0 - g * q.matrix().transpose()) * 0.5
}

/// Matrix `E_c(Q) = ½ (tr[Q W] I − Q W)` with `d/dt e_R = E_c e_Ω`.
pub fn ec_matrix(w: &WeightMatrix, q: &Rotation) -> Mat3 {
    let qg = q.matrix() * w.matrix();
    (Mat3::identity() * qg.trace() - qg) * 0.5
}

/// Result of checking the local quadratic sandwich on one rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBounds {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub holds: bool,
}

/// Evaluates `c₁/(c₂+c₃)‖e‖² ≤ Ψ ≤ c₁c₄/(c₅(c₁−ψ))‖e‖²` at `q`, where the
/// upper bound is only required when `Ψ < ψ`.
pub fn quadratic_bounds(w: &WeightMatrix, psi: f64, q: &Rotation) -> Result<QuadraticBounds, So3Error> {
    quadratic_bounds_with_slack(w, psi, q, 0.0)
}

/// [`quadratic_bounds`] with an absolute slack applied to both comparisons.
pub fn quadratic_bounds_with_slack(
    w: &WeightMatrix,
    psi: f64,
    q: &Rotation,
    slack: f64,
) -> Result<QuadraticBounds, So3Error> {
    let k = w.bound_constants();
    let upper_coeff = k.upper_coefficient(psi)?;
    let e2 = estimation_error_vector(w, q).norm_squared();
    let value = error_function(w, q);
    let lower = k.lower_coefficient() * e2;
    let upper = upper_coeff * e2;
    let holds = lower <= value + slack && (value >= psi || value <= upper + slack);
    Ok(QuadraticBounds { lower, upper, value, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SV_WEIGHTS: [f64; 3] = [1.1, 1.0, 0.9];

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        exp_so3(&random_vec(rng, PI))
    }

    #[test]
    fn hat_basis_and_zero() {
        let m = hat(&Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(m, Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
    }

    #[test]
    fn hat_matches_componentwise_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_vec(&mut rng, 10.0);
            let w = random_vec(&mut rng, 10.0);
            let cross = Vec3::new(
                v.y * w.z - v.z * w.y,
                v.z * w.x - v.x * w.z,
                v.x * w.y - v.y * w.x,
            );
            assert!((hat(&v) * w - cross).norm() <= 1e-12);
            let h = hat(&v);
            assert_eq!(h, -h.transpose());
        }
    }

    #[test]
    fn vee_round_trip_and_errors() {
        let v = Vec3::new(1.0, -1.5, 2.5);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        assert!(matches!(vee(&Mat3::identity()), Err(So3Error::NotSkewSymmetric(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = Mat3::new(1.0, 0.0, 0.0, 0.0, h, -h, 0.0, h, h);
        assert!((exp_so3(&Vec3::new(PI / 4.0, 0.0, 0.0)).matrix() - expected).amax() <= 1e-15);
        let full = exp_so3(&Vec3::new(2.0 * PI, 0.0, 0.0));
        assert!((full.matrix() - Mat3::identity()).amax() <= 1e-12);
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        let v = Vec3::new(3e-9, -2e-9, 1e-9);
        let series = exp_so3(&v);
        let rodrigues = Mat3::identity() + hat(&v);
        assert!((series.matrix() - rodrigues).amax() <= 1e-16);
        assert!(series.residual() <= 1e-15);
    }

    #[test]
    fn exp_stays_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mut v = random_vec(&mut rng, 10.0);
            if v.norm() > 10.0 {
                v *= 10.0 / v.norm();
            }
            let r = exp_so3(&v);
            assert!(r.residual() <= 1e-12);
            assert!(Rotation::new(*r.matrix()).is_ok());
        }
    }

    #[test]
    fn hat_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = random_vec(&mut rng, 2.0);
            let a = Mat3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let r = random_rotation(&mut rng);
            let lhs1 = (a * hat(&x)).trace();
            let rhs1 = -x.dot(&skew_vee(&(a - a.transpose())));
            assert!((lhs1 - rhs1).abs() <= 1e-10);
            assert!(((hat(&x) * a).trace() - lhs1).abs() <= 1e-10);
            let lhs2 = r.matrix() * hat(&x) * r.matrix().transpose();
            assert!((lhs2 - hat(&r.rotate(&x))).amax() <= 1e-10);
            let lhs3 = hat(&x) * a + a.transpose() * hat(&x);
            let rhs3 = hat(&((Mat3::identity() * a.trace() - a) * x));
            assert!((lhs3 - rhs3).amax() <= 1e-10);
        }
    }

    #[test]
    fn rotation_constructor_rejects_drift() {
        let r = exp_so3(&Vec3::new(0.3, 0.2, -0.1));
        assert!(Rotation::new(*r.matrix()).is_ok());
        let drifted = r.matrix() * (1.0 + 1e-6);
        assert!(matches!(Rotation::new(drifted), Err(So3Error::NotARotation { .. })));
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Rotation::new(reflection).is_err());
    }

    #[test]
    fn projection_examples() {
        let r = exp_so3(&Vec3::new(0.4, -1.2, 2.0));
        let p = project_to_rotation(r.matrix()).unwrap();
        assert!((p.matrix() - r.matrix()).amax() <= 1e-12);
        let scaled = project_to_rotation(&(Mat3::identity() * 1.001)).unwrap();
        assert!((scaled.matrix() - Mat3::identity()).amax() <= 1e-15);
    }

    #[test]
    fn projection_matches_svd_polar_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let noise = Mat3::from_fn(|_, _| rng.gen_range(-1e-6..1e-6));
            let m = r.matrix() + noise;
            let p = project_to_rotation(&m).unwrap();
            let svd = m.svd(true, true);
            let polar = svd.u.unwrap() * svd.v_t.unwrap();
            assert!((p.matrix() - polar).norm() <= 1e-12);
            assert!((p.matrix() - r.matrix()).norm() <= 3e-6);
            assert!(p.residual() <= 1e-14);
        }
    }

    #[test]
    fn projection_of_far_matrix_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if m.determinant() <= 1e-3 {
                continue;
            }
            let p = project_to_rotation(&m).unwrap();
            let svd = m.svd(true, true);
            let polar = svd.u.unwrap() * svd.v_t.unwrap();
            assert!((p.matrix() - polar).norm() <= 1e-10, "{m}");
        }
    }

    #[test]
    fn projection_rejects_degenerate_input() {
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(project_to_rotation(&reflection), Err(So3Error::DegenerateMatrix(_))));
        let rank_two = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        assert!(project_to_rotation(&rank_two).is_err());
        assert!(project_to_rotation(&Mat3::zeros()).is_err());
    }

    #[test]
    fn symmetric_eigenvalues_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let a = Mat3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
            let s = a + a.transpose();
            let mut reference: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            let ours = symmetric_eigenvalues(&s);
            for (x, y) in ours.iter().zip(&reference) {
                assert!((x - y).abs() <= 1e-10, "{ours:?} vs {reference:?}");
            }
            let svd_norm = a.singular_values().max();
            assert!((spectral_norm(&a) - svd_norm).abs() <= 1e-10 * svd_norm.max(1.0));
        }
        assert_eq!(symmetric_eigenvalues(&Mat3::from_diagonal(&Vec3::new(5.0, 1.0, 2.0))), [1.0, 2.0, 5.0]);
        assert_eq!(spectral_norm(&Mat3::from_diagonal(&Vec3::new(1.1, 1.0, 0.9))), 1.1);
    }

    #[test]
    fn weight_validation() {
        assert!(WeightMatrix::new(SV_WEIGHTS).is_ok());
        assert!(WeightMatrix::new([1.0, 1.0, 0.9]).is_err());
        assert!(WeightMatrix::new([1.0, -1.0, 0.9]).is_err());
        assert!(WeightMatrix::new([1.0, f64::NAN, 0.9]).is_err());
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        assert!((w.trace() - 3.0).abs() < 1e-15);
        assert_eq!(w.norm(), 1.1);
    }

    #[test]
    fn bound_constants_for_reference_weights() {
        let k = WeightMatrix::new(SV_WEIGHTS).unwrap().bound_constants();
        assert!((k.c1 - 1.9).abs() < 1e-12);
        assert!((k.c2 - 0.04).abs() < 1e-12);
        assert!((k.c3 - 4.41).abs() < 1e-12);
        assert!((k.c4 - 2.1).abs() < 1e-12);
        assert!((k.c5 - 3.61).abs() < 1e-12);
        assert!(k.c1 <= k.c4 && k.c5 <= k.c3);
        assert!(matches!(k.upper_coefficient(1.9), Err(So3Error::InvalidPsiBound { .. })));
        assert!(k.upper_coefficient(0.0).is_err());
    }

    #[test]
    fn error_function_examples() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        assert_eq!(error_function(&w, &Rotation::identity()), 0.0);
        assert!((error_function(&w, &flip_rotation(1)) - 1.9).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let direct = 0.5 * (w.matrix() * (Mat3::identity() - q.matrix())).trace();
            assert!((error_function(&w, &q) - direct).abs() <= 1e-14);
        }
    }

    #[test]
    fn error_function_range() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        let cap = w.bound_constants().c4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut max_seen: f64 = 0.0;
        for _ in 0..10_000 {
            let q = random_rotation(&mut rng);
            let psi = error_function(&w, &q);
            assert!(psi >= -1e-15);
            assert!(psi <= cap + 1e-12);
            max_seen = max_seen.max(psi);
        }
        // The supremum (largest pair sum, 2.1) is attained at a flip.
        assert!(max_seen > 1.9, "empirical max {max_seen}");
        assert!((error_function(&w, &flip_rotation(3)) - cap).abs() < 1e-15);
    }

    #[test]
    fn estimation_error_vector_examples() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        assert_eq!(estimation_error_vector(&w, &Rotation::identity()), Vec3::zeros());
        for i in 1..=3 {
            assert_eq!(estimation_error_vector(&w, &flip_rotation(i)), Vec3::zeros());
        }
        let q = exp_so3(&Vec3::new(0.1, 0.0, 0.0));
        let g = w.matrix();
        let m = (q.matrix() * g - g * q.matrix().transpose()) * 0.5;
        let direct = Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
        assert!((estimation_error_vector(&w, &q) - direct).norm() <= 1e-16);
        // Near-identity first-order check: e ≈ ½(tr G I − G) θ.
        assert!((direct.x - 0.5 * 1.9 * 0.1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn error_vector_vanishes_only_at_critical_points() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let q = random_rotation(&mut rng);
            assert!(estimation_error_vector(&w, &q).norm() > 1e-8);
        }
    }

    #[test]
    fn tracking_vector_is_negated_estimation_vector() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        assert_eq!(tracking_error_vector(&w, &Rotation::identity()), Vec3::zeros());
        assert_eq!(tracking_error_vector(&w, &flip_rotation(2)), Vec3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let a = tracking_error_vector(&w, &q);
            let b = -estimation_error_vector(&w, &q);
            assert!((a - b).norm() <= 1e-14, "{}", (a - b).norm());
        }
    }

    #[test]
    fn eo_matrix_examples() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        let at_identity = eo_matrix(&w, &Rotation::identity());
        let expected = Mat3::from_diagonal(&Vec3::new(0.95, 1.0, 1.05));
        assert!((at_identity - expected).amax() <= 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let qg = q.matrix() * w.matrix();
            let oracle = (Mat3::identity() * qg.trace() - qg) * 0.5;
            assert!((eo_matrix(&w, &q) - oracle).amax() <= 1e-14);
        }
    }

    #[test]
    fn ec_matrix_examples() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        let expected = Mat3::from_diagonal(&Vec3::new(0.95, 1.0, 1.05));
        assert!((ec_matrix(&w, &Rotation::identity()) - expected).amax() <= 1e-15);
        let cap = w.trace() / 2f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let q = random_rotation(&mut rng);
            assert!(spectral_norm(&ec_matrix(&w, &q)) <= cap);
        }
    }

    #[test]
    fn quadratic_bound_examples() {
        let w = WeightMatrix::new(SV_WEIGHTS).unwrap();
        let b = quadratic_bounds(&w, 1.8, &Rotation::identity()).unwrap();
        assert_eq!((b.lower, b.upper, b.value), (0.0, 0.0, 0.0));
        assert!(b.holds);
        assert!(quadratic_bounds(&w, 1.95, &Rotation::identity()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let q = random_rotation(&mut rng);
            assert!(quadratic_bounds(&w, 1.8, &q).unwrap().holds);
        }
    }

    #[test]
    fn euler321_examples() {
        assert!((euler321_rotation(0.0, 0.0, 0.0).matrix() - Mat3::identity()).amax() == 0.0);
        let roll = euler321_rotation(0.0, 0.0, PI / 4.0);
        assert!((roll.matrix() - exp_so3(&Vec3::new(PI / 4.0, 0.0, 0.0)).matrix()).amax() <= 1e-15);
        let yaw = euler321_rotation(PI / 2.0, 0.0, 0.0);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((yaw.matrix() - expected).amax() <= 1e-15);
        let composed = exp_so3(&Vec3::new(0.0, 0.0, 0.3))
            * exp_so3(&Vec3::new(0.0, -0.7, 0.0))
            * exp_so3(&Vec3::new(1.1, 0.0, 0.0));
        assert!((euler321_rotation(0.3, -0.7, 1.1).matrix() - composed.matrix()).amax() <= 1e-15);
        assert!(Rotation::new(*euler321_rotation(0.3, -0.7, 1.1).matrix()).is_ok());
    }

    #[test]
    fn dexp_inverse_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let theta = random_vec(&mut rng, 1.5);
            let f = random_vec(&mut rng, 1.0);
            let base = exp_so3(&theta);
            let h = 1e-6;
            // exp(θ + h θ̇) ≈ exp(θ) exp(h f) for the right form.
            let dtheta = right_dexp_inv(&theta, &f);
            let lhs = exp_so3(&(theta + dtheta * h));
            let rhs = base * exp_so3(&(f * h));
            assert!((lhs.matrix() - rhs.matrix()).amax() <= 1e-10);
            let dphi = left_dexp_inv(&theta, &f);
            let lhs = exp_so3(&(theta + dphi * h));
            let rhs = exp_so3(&(f * h)) * base;
            assert!((lhs.matrix() - rhs.matrix()).amax() <= 1e-10);
        }
    }
}
