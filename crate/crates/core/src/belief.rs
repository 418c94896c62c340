//! Belief representations: probability vectors on a finite state space and
//! Gaussian moments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, SYMMETRY_TOL};
use crate::{Error, Result};

/// Tolerance on `|Σπ - 1|` for a valid simplex belief.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Probability vector over `d` states.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexBelief(Vec<f64>);

impl SimplexBelief {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Empty("simplex belief"));
        }
        if let Some((k, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidArgument(format!("belief entry {k} is {p}")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("belief sums to {sum}, not 1")));
        }
        Ok(Self(probabilities))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn dirac(d: usize, state: usize) -> Self {
        let mut p = vec![0.0; d];
        p[state] = 1.0;
        Self(p)
    }

    /// Normalizes nonnegative weights. Fails if all weights vanish.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `Σ_x π(x) f(x)`.
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// Half the ℓ1 distance.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        crate::metrics::total_variation(&self.0, other)
    }
}

/// Mean and covariance of a Gaussian belief.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// Validates dimensions, symmetry and PSD (both within `1e-10`).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "gaussian belief covariance",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if !linalg::is_symmetric(&cov, SYMMETRY_TOL) {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig < -SYMMETRY_TOL {
            return Err(Error::InvalidArgument(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }
}
