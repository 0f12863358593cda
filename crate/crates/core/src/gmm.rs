//! Gaussian mixture over 6-D pose observations (position + rotation vector).
//!
//! A landmark with `Z` associated measurements carries one component per
//! measurement, centred on its observation vector, with a shared base
//! covariance and uniform weights.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Matrix6, SymmetricEigen, Vector6, U6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ObjectMeasurement;
use crate::tracker::GroupTrack;

/// Smallest admissible covariance eigenvalue.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-9;

/// Diagonal base covariance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmParams {
    /// Position standard deviation in meters.
    pub base_cov_pos_sigma: f64,
    /// Rotation-vector standard deviation in degrees.
    pub base_cov_rot_sigma_deg: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            base_cov_pos_sigma: 0.25,
            base_cov_rot_sigma_deg: 10.0,
        }
    }
}

impl GmmParams {
    pub fn base_covariance(&self) -> Result<Matrix6<f64>> {
        let p = self.base_cov_pos_sigma;
        let r = self.base_cov_rot_sigma_deg.to_radians();
        if !(p > 0.0 && r > 0.0 && p.is_finite() && r.is_finite()) {
            return Err(Error::config("gmm sigmas must be positive"));
        }
        Ok(Matrix6::from_diagonal(&Vector6::new(
            p * p,
            p * p,
            p * p,
            r * r,
            r * r,
            r * r,
        )))
    }
}

/// One Gaussian, with its Cholesky factor and normalizing constant cached.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: Vector6<f64>,
    covariance: Matrix6<f64>,
    chol: Cholesky<f64, U6>,
    norm: f64,
}

impl GaussianComponent {
    pub fn new(mean: Vector6<f64>, covariance: Matrix6<f64>) -> Result<Self> {
        if (covariance - covariance.transpose()).amax() > SYMMETRY_TOL {
            return Err(Error::Numerical("covariance is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(covariance).eigenvalues.min();
        if min_eig.is_nan() || min_eig < COVARIANCE_FLOOR {
            return Err(Error::Numerical(format!(
                "covariance eigenvalue {min_eig:e} below floor {COVARIANCE_FLOOR:e}"
            )));
        }
        let chol = Cholesky::new(covariance)
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let sqrt_det: f64 = chol.l_dirty().diagonal().iter().product();
        let norm = (2.0 * PI).powi(-3) / sqrt_det;
        Ok(Self {
            mean,
            covariance,
            chol,
            norm,
        })
    }

    /// Same covariance, different mean. Reuses the factorization.
    pub fn recentered(&self, mean: Vector6<f64>) -> Self {
        Self {
            mean,
            ..self.clone()
        }
    }

    pub fn mean(&self) -> &Vector6<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix6<f64> {
        &self.covariance
    }

    pub fn mahalanobis_sq(&self, x: &Vector6<f64>) -> f64 {
        let d = x - self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&d)
            .expect("cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    pub fn density(&self, x: &Vector6<f64>) -> f64 {
        self.norm * (-0.5 * self.mahalanobis_sq(x)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct LandmarkGMM {
    components: Vec<GaussianComponent>,
    weights: Vec<f64>,
}

impl LandmarkGMM {
    pub fn new(components: Vec<GaussianComponent>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::input(
                "mixture needs one weight per component and at least one component",
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::input("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn density(&self, x: &Vector6<f64>) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.density(x))
            .sum()
    }
}

/// Position followed by the axis-angle rotation vector (magnitude in `[0, pi]`).
pub fn observation_vector(m: &ObjectMeasurement) -> Vector6<f64> {
    let p = m.pose.position;
    let r = m.pose.rotation_vector();
    Vector6::new(p.x, p.y, p.z, r.x, r.y, r.z)
}

/// One component per measurement, shared covariance, uniform weights.
pub fn build_gmm<'a, I>(measurements: I, base_cov: &Matrix6<f64>) -> Result<LandmarkGMM>
where
    I: IntoIterator<Item = &'a ObjectMeasurement>,
{
    let template = GaussianComponent::new(Vector6::zeros(), *base_cov)?;
    let components: Vec<_> = measurements
        .into_iter()
        .map(|m| template.recentered(observation_vector(m)))
        .collect();
    if components.is_empty() {
        return Err(Error::input(
            "cannot build a mixture from zero measurements",
        ));
    }
    let w = 1.0 / components.len() as f64;
    let weights = vec![w; components.len()];
    LandmarkGMM::new(components, weights)
}

/// Largest mixture density over the candidate track's measurements.
pub fn max_measurement_likelihood(candidate: &GroupTrack, target: &LandmarkGMM) -> f64 {
    candidate
        .measurements
        .iter()
        .map(|m| target.density(&observation_vector(m)))
        .fold(0.0, f64::max)
}
