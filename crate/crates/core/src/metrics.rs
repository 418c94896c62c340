//! Error metrics and mixture summaries used to compare filters.

use alloc::format;
use nalgebra::{DMatrix, DVector};

use crate::belief::GaussianBelief;
use crate::linalg::{euclidean_norm, frobenius_norm, symmetrize};
use crate::{Error, Result};

/// Mean and covariance of the equal-weight mixture of `components`:
/// `m = (1/M) Σ m_j`, `Σ = (1/M) Σ [Σ_j + (m_j - m)(m_j - m)ᵀ]`.
pub fn gaussian_mixture_moments(components: &[GaussianBelief]) -> Result<GaussianBelief> {
    let first = components.first().ok_or(Error::Empty("mixture components"))?;
    let d = first.dim();
    if let Some(c) = components.iter().find(|c| c.dim() != d) {
        return Err(Error::DimensionMismatch {
            context: "mixture component",
            expected: d,
            found: c.dim(),
        });
    }
    let m = components.len() as f64;
    let mean = components.iter().fold(DVector::zeros(d), |acc, c| acc + c.mean()) / m;
    let mut cov = components.iter().fold(DMatrix::zeros(d, d), |acc, c| {
        let dev = c.mean() - &mean;
        acc + c.cov() + &dev * dev.transpose()
    }) / m;
    symmetrize(&mut cov);
    Ok(GaussianBelief::from_parts_unchecked(mean, cov))
}

/// Relative errors between two Gaussian summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedError {
    /// `‖m_e - m_r‖₂ / ‖m_r‖₂`.
    pub mean: f64,
    /// `‖Σ_e - Σ_r‖_F / ‖Σ_r‖_F`.
    pub cov: f64,
    /// Set when a reference norm was zero and the absolute error was
    /// reported instead.
    pub unnormalized: bool,
}

pub fn normalized_error(estimate: &GaussianBelief, reference: &GaussianBelief) -> Result<NormalizedError> {
    if estimate.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            context: "normalized error",
            expected: reference.dim(),
            found: estimate.dim(),
        });
    }
    let mean_abs = euclidean_norm(&(estimate.mean() - reference.mean()));
    let cov_abs = frobenius_norm(&(estimate.cov() - reference.cov()));
    let mean_ref = euclidean_norm(reference.mean());
    let cov_ref = frobenius_norm(reference.cov());
    let mut unnormalized = false;
    let mut ratio = |abs: f64, norm: f64| {
        if norm > 0.0 {
            abs / norm
        } else {
            unnormalized = true;
            abs
        }
    };
    let mean = ratio(mean_abs, mean_ref);
    let cov = ratio(cov_abs, cov_ref);
    Ok(NormalizedError { mean, cov, unnormalized })
}

/// Half the ℓ1 distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len(), "{}", format!("length {} vs {}", p.len(), q.len()));
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log slope needs positive values".into()));
    }
    let lx: alloc::vec::Vec<f64> = x.iter().map(|v| libm::log(*v)).collect();
    let ly: alloc::vec::Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    Ok(sxy / sxx)
}
