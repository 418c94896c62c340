//! Collective Kalman filters for linear-Gaussian agents.
//!
//! In continuous time the collective posterior stays Gaussian with
//!
//! ```text
//! dm = A m dt + (1/σ_w²) Σ Hᵀ (dẐ - H m dt)
//! dΣ/dt = A Σ + Σ Aᵀ + Q - (1/σ_w²) Σ Hᵀ (1 - V/σ_w²) H Σ
//! ```
//!
//! i.e. the Kalman-Bucy filter driven by the mean observation, with the
//! Riccati gain term scaled by how much less spread the agents' increments
//! are than pure observation noise. `V = 0` (one agent) recovers Kalman-Bucy;
//! `V = σ_w²` (infinitely many agents) leaves the Lyapunov flow.
//!
//! Steps are explicit Euler and the covariance is symmetrized after each
//! step. A covariance that drifts below `-`[`BLOW_UP_TOL`] in any eigenvalue
//! is reported as an error instead of being clipped.

use nalgebra::{DMatrix, DVector};

use crate::aggregate::AggregateStats;
use crate::belief::GaussianBelief;
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::models::LinearGaussianModel;
use crate::{Error, Result};

/// Most negative covariance eigenvalue tolerated after a step.
pub const BLOW_UP_TOL: f64 = 1e-6;

fn finish(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Result<GaussianBelief> {
    symmetrize(&mut cov);
    if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
        return Err(Error::CovarianceBlowUp { min_eigenvalue: f64::NAN });
    }
    let min_eig = min_eigenvalue(&cov);
    if min_eig < -BLOW_UP_TOL {
        return Err(Error::CovarianceBlowUp { min_eigenvalue: min_eig });
    }
    Ok(GaussianBelief::from_parts_unchecked(mean, cov))
}

fn check_dim(belief: &GaussianBelief, model: &LinearGaussianModel) -> Result<()> {
    if belief.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "belief vs model state",
            expected: model.dim(),
            found: belief.dim(),
        });
    }
    Ok(())
}

/// One Euler step of the collective Kalman-Bucy filter.
pub fn ckf_step(belief: &GaussianBelief, model: &LinearGaussianModel, stats: &AggregateStats) -> Result<GaussianBelief> {
    check_dim(belief, model)?;
    if !(stats.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let h = model.observation_row()?;
    let r = model.obs_noise_var();
    let dt = stats.dt;
    let (m, sigma) = (belief.mean(), belief.cov());
    let a = model.drift();

    let sigma_h = sigma * &h;
    let innovation = stats.dz_hat - h.dot(m) * dt;
    let mean = m + a * m * dt + &sigma_h * (innovation / r);

    let gain_weight = (1.0 - stats.v / r) / r;
    let drift = a * sigma + sigma * a.transpose() + model.process_noise() - &sigma_h * sigma_h.transpose() * gain_weight;
    let cov = sigma + drift * dt;
    finish(mean, cov)
}

/// Classical Kalman-Bucy step for one agent's increment `dz`: the
/// collective step with `V = 0`.
pub fn kalman_bucy_step(belief: &GaussianBelief, model: &LinearGaussianModel, dz: f64, dt: f64) -> Result<GaussianBelief> {
    ckf_step(belief, model, &AggregateStats::single(dz, dt))
}

/// Discrete-time system `X' = A X + B`, `Z = H X + W` with `B ~ N(0, Q)`,
/// `W ~ N(0, R)`. Observations may be vector-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub transition: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
}

/// Predict/update of the discrete-time collective Kalman filter when the
/// empirical observation law is `N(z_hat, v)`:
///
/// ```text
/// m' = A m,  Σ' = A Σ Aᵀ + Q,  S = H Σ' Hᵀ + R,  K = Σ' Hᵀ S⁻¹
/// m⁺ = m' + K (ẑ - H m'),  Σ⁺ = Σ' - K (S - V) Kᵀ
/// ```
pub fn discrete_ckf_update(
    belief: &GaussianBelief,
    system: &DiscreteSystem,
    z_hat: &DVector<f64>,
    v: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let d = belief.dim();
    let p = system.observation.nrows();
    let dims_ok = system.transition.shape() == (d, d)
        && system.process_noise.shape() == (d, d)
        && system.observation.ncols() == d
        && system.obs_noise.shape() == (p, p)
        && z_hat.len() == p
        && v.shape() == (p, p);
    if !dims_ok {
        return Err(Error::InvalidArgument("inconsistent discrete system dimensions".into()));
    }
    let (a, h) = (&system.transition, &system.observation);
    let m_pred = a * belief.mean();
    let mut sigma_pred = a * belief.cov() * a.transpose() + &system.process_noise;
    symmetrize(&mut sigma_pred);
    let s = h * &sigma_pred * h.transpose() + &system.obs_noise;
    let s_inv = s.clone().try_inverse().ok_or(Error::SingularInnovation)?;
    if s_inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    let k = &sigma_pred * h.transpose() * s_inv;
    let mean = &m_pred + &k * (z_hat - h * &m_pred);
    let cov = &sigma_pred - &k * (s - v) * k.transpose();
    finish(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(a: f64, h: f64, q: f64, r: f64) -> LinearGaussianModel {
        LinearGaussianModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, q),
            libm::sqrt(r),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn scalar_belief(m: f64, s: f64) -> GaussianBelief {
        GaussianBelief::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, s)).unwrap()
    }

    #[test]
    fn full_variance_gives_lyapunov_flow() {
        let model = LinearGaussianModel::damped_oscillator();
        let b = GaussianBelief::new(model.prior_mean().clone(), model.prior_cov().clone()).unwrap();
        let stats = AggregateStats { dz_hat: 0.02, v: model.obs_noise_var(), v_hat: 0.0, dt: 0.01 };
        let next = ckf_step(&b, &model, &stats).unwrap();
        let a = model.drift();
        let s = b.cov();
        let mut lyap = s + (a * s + s * a.transpose() + model.process_noise()) * 0.01;
        symmetrize(&mut lyap);
        assert!((next.cov() - lyap).abs().max() < 1e-15);
    }

    #[test]
    fn kalman_bucy_is_single_agent_ckf() {
        let model = LinearGaussianModel::damped_oscillator();
        let b = GaussianBelief::new(model.prior_mean().clone(), model.prior_cov().clone()).unwrap();
        let via_kb = kalman_bucy_step(&b, &model, 0.037, 0.01).unwrap();
        let via_ckf = ckf_step(&b, &model, &crate::aggregate::aggregate_increment(&[0.037], 0.01).unwrap()).unwrap();
        assert_eq!(via_kb, via_ckf);
    }

    #[test]
    fn zero_observation_matrix_is_pure_propagation() {
        let model = scalar_model(-1.0, 0.0, 1.0, 1.0);
        let b = scalar_belief(2.0, 0.5);
        let next = kalman_bucy_step(&b, &model, 123.0, 0.1).unwrap();
        assert!((next.mean()[0] - (2.0 - 0.2)).abs() < 1e-15);
        assert!((next.cov()[(0, 0)] - (0.5 + (-1.0 + 1.0) * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn stationary_riccati_values() {
        // -2Σ + 1 - Σ² = 0  =>  Σ* = √2 - 1
        let model = scalar_model(-1.0, 1.0, 1.0, 1.0);
        let mut b = scalar_belief(0.0, 1.0);
        let dt = 1e-3;
        for _ in 0..10_000 {
            b = kalman_bucy_step(&b, &model, 0.0, dt).unwrap();
        }
        assert!((b.cov()[(0, 0)] - (libm::sqrt(2.0) - 1.0)).abs() < 1e-3);

        // with V = 0.5: -2Σ + 1 - 0.5 Σ² = 0  =>  Σ* = √6 - 2
        let mut b = scalar_belief(0.0, 1.0);
        let stats = AggregateStats { dz_hat: 0.0, v: 0.5, v_hat: 0.0, dt };
        for _ in 0..10_000 {
            b = ckf_step(&b, &model, &stats).unwrap();
        }
        assert!((b.cov()[(0, 0)] - (libm::sqrt(6.0) - 2.0)).abs() < 1e-3);
    }

    #[test]
    fn huge_step_is_reported() {
        let model = scalar_model(0.0, 1.0, 0.0, 1.0);
        let b = scalar_belief(0.0, 10.0);
        let stats = AggregateStats { dz_hat: 0.0, v: 0.0, v_hat: 0.0, dt: 1.0 };
        assert!(matches!(ckf_step(&b, &model, &stats), Err(Error::CovarianceBlowUp { .. })));
    }

    #[test]
    fn discrete_scalar_example() {
        let system = DiscreteSystem {
            transition: DMatrix::from_element(1, 1, 1.0),
            observation: DMatrix::from_element(1, 1, 1.0),
            process_noise: DMatrix::zeros(1, 1),
            obs_noise: DMatrix::from_element(1, 1, 1.0),
        };
        let b = scalar_belief(0.0, 1.0);
        let post = discrete_ckf_update(&b, &system, &DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((post.mean()[0] - 0.5).abs() < 1e-15);
        assert!((post.cov()[(0, 0)] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn uninformative_aggregate_keeps_prediction() {
        let system = DiscreteSystem {
            transition: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            observation: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            process_noise: DMatrix::identity(2, 2) * 0.01,
            obs_noise: DMatrix::from_element(1, 1, 0.3),
        };
        let b = GaussianBelief::new(DVector::from_column_slice(&[1.0, -1.0]), DMatrix::identity(2, 2)).unwrap();
        let sigma_pred = &system.transition * b.cov() * system.transition.transpose() + &system.process_noise;
        let s = &system.observation * &sigma_pred * system.observation.transpose() + &system.obs_noise;
        let post = discrete_ckf_update(&b, &system, &DVector::from_element(1, 0.4), &s).unwrap();
        assert!((post.cov() - sigma_pred).abs().max() < 1e-14);
    }

    #[test]
    fn singular_innovation() {
        let system = DiscreteSystem {
            transition: DMatrix::identity(1, 1),
            observation: DMatrix::from_element(1, 1, 1.0),
            process_noise: DMatrix::zeros(1, 1),
            obs_noise: DMatrix::zeros(1, 1),
        };
        let b = scalar_belief(0.0, 0.0);
        let r = discrete_ckf_update(&b, &system, &DVector::zeros(1), &DMatrix::zeros(1, 1));
        assert_eq!(r, Err(Error::SingularInnovation));
    }
}
