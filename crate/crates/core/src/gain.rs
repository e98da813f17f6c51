//! Scalar or matrix-valued feedback gains.
//!
//! Gains are specified in the body frame (the frame in which the inertia
//! matrix is constant). When a gain multiplies an inertial-frame vector, as
//! in the observer, the matrix is carried along with the attitude:
//! `K_inertial = R K Rᵀ`. For a scalar gain this is the identity operation.

use thiserror::Error;

use crate::so3::{symmetric_eigenvalues, Mat3, Rotation, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("scalar gain must be finite and positive, got {0}")]
    NonPositiveScalar(f64),
    #[error("gain matrix must be symmetric positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("gain matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    Scalar(f64),
    Matrix(Mat3),
}

impl Gain {
    pub fn scalar(k: f64) -> Result<Self, GainError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(GainError::NonPositiveScalar(k));
        }
        Ok(Gain::Scalar(k))
    }

    pub fn matrix(m: Mat3) -> Result<Self, GainError> {
        let asym = (m - m.transpose()).amax();
        if !(asym <= 1e-12 * m.amax().max(1.0)) {
            return Err(GainError::NotSymmetric(asym));
        }
        let low = symmetric_eigenvalues(&m)[0];
        if !(low > 0.0) {
            return Err(GainError::NotPositiveDefinite(low));
        }
        Ok(Gain::Matrix(m))
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Gain::Scalar(k) => Some(*k),
            Gain::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Mat3 {
        match self {
            Gain::Scalar(k) => Mat3::identity() * *k,
            Gain::Matrix(m) => *m,
        }
    }

    /// `K v` for a body-frame vector.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        match self {
            Gain::Scalar(k) => v * *k,
            Gain::Matrix(m) => m * v,
        }
    }

    /// `R K Rᵀ v` for an inertial-frame vector.
    pub fn apply_inertial(&self, attitude: &Rotation, v: &Vec3) -> Vec3 {
        match self {
            Gain::Scalar(k) => v * *k,
            Gain::Matrix(m) => attitude.rotate(&(m * attitude.inverse_rotate(v))),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Gain::Scalar(k) => *k,
            Gain::Matrix(m) => symmetric_eigenvalues(m)[0],
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self {
            Gain::Scalar(k) => *k,
            Gain::Matrix(m) => symmetric_eigenvalues(m)[2],
        }
    }

    /// Scalar weight used wherever the gain scales a scalar quantity (the
    /// error-function term of a Lyapunov function): the gain itself, or the
    /// smallest eigenvalue of a matrix gain.
    pub fn lyapunov_weight(&self) -> f64 {
        self.min_eigenvalue()
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Gain::Scalar(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_so3;

    #[test]
    fn validation() {
        assert!(Gain::scalar(2.0).is_ok());
        assert!(Gain::scalar(0.0).is_err());
        assert!(Gain::scalar(f64::NAN).is_err());
        let j0 = Mat3::from_diagonal(&Vec3::new(5.0, 1.0, 2.0));
        assert!(Gain::matrix(j0 * 16.0).is_ok());
        assert!(Gain::matrix(-j0).is_err());
        let mut asym = j0;
        asym[(0, 1)] = 0.5;
        assert!(matches!(Gain::matrix(asym), Err(GainError::NotSymmetric(_))));
    }

    #[test]
    fn inertial_application_conjugates() {
        let k = Gain::matrix(Mat3::from_diagonal(&Vec3::new(5.0, 1.0, 2.0))).unwrap();
        let r = exp_so3(&Vec3::new(0.3, -0.4, 1.0));
        let v = Vec3::new(1.0, 2.0, -0.5);
        let direct = r.conjugate(&k.as_matrix()) * v;
        assert!((k.apply_inertial(&r, &v) - direct).norm() < 1e-14);
        let s = Gain::Scalar(3.0);
        assert_eq!(s.apply_inertial(&r, &v), v * 3.0);
        assert_eq!(k.lyapunov_weight(), 1.0);
        assert_eq!(k.max_eigenvalue(), 5.0);
    }
}
