use alloc::format;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::aggregate::AggregateStats;
use crate::belief::GaussianBelief;
use crate::linalg::symmetrize;
use crate::models::{normal_vector, LinearGaussianModel};
use crate::{Error, Result};

/// `N` particles in `R^d`, stored as the columns of a `d × N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanEnsemble {
    particles: DMatrix<f64>,
}

impl EuclideanEnsemble {
    pub fn new(particles: DMatrix<f64>) -> Result<Self> {
        if particles.ncols() == 0 || particles.nrows() == 0 {
            return Err(Error::Empty("particle ensemble"));
        }
        if particles.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite particle".into()));
        }
        Ok(Self { particles })
    }

    /// `n` i.i.d. draws from the model's prior `N(m0, Σ0)`.
    pub fn from_prior<R: Rng + ?Sized>(model: &LinearGaussianModel, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("particle ensemble"));
        }
        let mut particles = DMatrix::zeros(model.dim(), n);
        for i in 0..n {
            particles.set_column(i, &model.sample_prior(rng));
        }
        Ok(Self { particles })
    }

    /// `n` i.i.d. draws from `belief`.
    pub fn from_gaussian<R: Rng + ?Sized>(belief: &GaussianBelief, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("particle ensemble"));
        }
        let root = crate::linalg::psd_sqrt(belief.cov());
        let mut particles = DMatrix::zeros(belief.dim(), n);
        for i in 0..n {
            let x = belief.mean() + &root * normal_vector(rng, belief.dim());
            particles.set_column(i, &x);
        }
        Ok(Self { particles })
    }

    pub fn dim(&self) -> usize {
        self.particles.nrows()
    }

    pub fn len(&self) -> usize {
        self.particles.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    pub fn particle(&self, i: usize) -> DVector<f64> {
        self.particles.column(i).into_owned()
    }

    /// Sample mean; a coordinate shared by every particle is returned as is,
    /// so a collapsed ensemble has exactly zero spread.
    fn mean(&self) -> DVector<f64> {
        let n = self.len() as f64;
        DVector::from_fn(self.dim(), |i, _| {
            let row = self.particles.row(i);
            let first = row[0];
            if row.iter().all(|&x| x == first) {
                first
            } else {
                row.sum() / n
            }
        })
    }
}

/// Sample mean and `1/(N-1)`-normalized, symmetrized sample covariance.
pub fn empirical_moments(ensemble: &EuclideanEnsemble) -> Result<GaussianBelief> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 particles, have {n}")));
    }
    let mean = ensemble.mean();
    let mut centered = ensemble.particles.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / (n as f64 - 1.0);
    symmetrize(&mut cov);
    Ok(GaussianBelief::from_parts_unchecked(mean, cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// `K = Σ̄ Hᵀ / σ_w²`, `u = 0` (exact for linear-Gaussian models).
    ExactLinearGaussian,
    /// Ensemble cross-covariance closure.
    ConstantGain,
}

/// Ensemble-level gains used for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GainState {
    pub mode: GainMode,
    /// Innovation gain `K`.
    pub gain: DVector<f64>,
    /// Second-moment correction `u`.
    pub control: DVector<f64>,
    /// `α = ½ (1 - V/σ_w²)`.
    pub alpha: f64,
    /// All particles coincide, so the gain carries no information.
    pub degenerate: bool,
}

fn check_ensemble(ensemble: &EuclideanEnsemble, dim: usize) -> Result<()> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 particles, have {}",
            ensemble.len()
        )));
    }
    if ensemble.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "ensemble vs model state",
            expected: dim,
            found: ensemble.dim(),
        });
    }
    Ok(())
}

fn check_finite(ensemble: &EuclideanEnsemble) -> Result<()> {
    if ensemble.particles.iter().any(|x| !x.is_finite()) {
        return Err(Error::ParticleBlowUp);
    }
    Ok(())
}

/// Linear-Gaussian FPF step (Itô form):
///
/// ```text
/// dXⁱ = A Xⁱ dt + dB̄ⁱ + K̄ (dẐ - (α H Xⁱ + (1 - α) H m̄) dt)
/// ```
///
/// with `K̄ = Σ̄ Hᵀ / σ_w²` from the empirical covariance and a fresh
/// process-noise draw per particle.
pub fn lg_fpf_step<R: Rng + ?Sized>(
    ensemble: &mut EuclideanEnsemble,
    model: &LinearGaussianModel,
    stats: &AggregateStats,
    rng: &mut R,
) -> Result<GainState> {
    check_ensemble(ensemble, model.dim())?;
    let h = model.observation_row()?;
    let r = model.obs_noise_var();
    let dt = stats.dt;
    let sqrt_dt = libm::sqrt(dt);

    let moments = empirical_moments(ensemble)?;
    let degenerate = moments.cov().iter().all(|&c| c == 0.0);
    if degenerate {
        log::warn!("degenerate particle ensemble: zero spread in every coordinate");
    }
    let gain = moments.cov() * &h / r;
    let alpha = 0.5 * (1.0 - stats.v / r);
    let h_mean = h.dot(moments.mean());

    let a = model.drift();
    let q_sqrt = model.process_noise_sqrt();
    for i in 0..ensemble.len() {
        let x = ensemble.particle(i);
        let innovation = stats.dz_hat - (alpha * h.dot(&x) + (1.0 - alpha) * h_mean) * dt;
        let noise = q_sqrt * normal_vector(rng, model.dim()) * sqrt_dt;
        let next = &x + a * &x * dt + noise + &gain * innovation;
        ensemble.particles.set_column(i, &next);
    }
    check_finite(ensemble)?;
    Ok(GainState {
        mode: GainMode::ExactLinearGaussian,
        control: DVector::zeros(model.dim()),
        gain,
        alpha,
        degenerate,
    })
}

/// State dynamics `dX = a(X) dt + σ(X) dB`.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `d × p` diffusion matrix; `B` is `p`-dimensional.
    fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

impl Dynamics for LinearGaussianModel {
    fn dim(&self) -> usize {
        LinearGaussianModel::dim(self)
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        LinearGaussianModel::drift(self) * x
    }

    fn diffusion(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.process_noise_sqrt().clone()
    }
}

/// Collective FPF step with the constant-gain closure of the gain equations:
///
/// ```text
/// K = (1/σ_w²) Ĉov(X, h)
/// u = -½ Ê[K (h - h̄)] + (1/σ_w²) Ĉov(X, g),    g = ½ (h - h̄)²
/// dXⁱ = a dt + σ dBⁱ + K (dẐ - α h(Xⁱ) dt - (1 - α) h̄ dt)
///       + ((V + V̂)/σ_w² - 1) u dt
/// ```
///
/// The gain is constant across particles within a step, so the
/// Stratonovich-to-Itô correction `½ Σ_n Kⁿ ∂K/∂xₙ V̂` is zero and the Itô
/// form above is exact. Strongly non-Gaussian ensembles are only captured
/// to the extent a constant gain can.
pub fn constant_gain_fpf_step<D, H, R>(
    ensemble: &mut EuclideanEnsemble,
    dynamics: &D,
    h: H,
    obs_noise_std: f64,
    stats: &AggregateStats,
    rng: &mut R,
) -> Result<GainState>
where
    D: Dynamics + ?Sized,
    H: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    check_ensemble(ensemble, dynamics.dim())?;
    if !(obs_noise_std > 0.0) {
        return Err(Error::InvalidArgument(format!("observation noise std {obs_noise_std}")));
    }
    let (gain, control, h_vals, h_mean, degenerate) = constant_gains(ensemble, &h, obs_noise_std)?;
    if degenerate {
        log::warn!("degenerate particle ensemble: zero spread in every coordinate");
    }
    let r = obs_noise_std * obs_noise_std;
    let dt = stats.dt;
    let sqrt_dt = libm::sqrt(dt);
    let alpha = 0.5 * (1.0 - stats.v / r);
    let second_moment = (stats.v + stats.v_hat) / r - 1.0;

    for i in 0..ensemble.len() {
        let x = ensemble.particle(i);
        let sigma = dynamics.diffusion(&x);
        let noise = &sigma * normal_vector(rng, sigma.ncols()) * sqrt_dt;
        let innovation = stats.dz_hat - alpha * h_vals[i] * dt - (1.0 - alpha) * h_mean * dt;
        let next = &x + dynamics.drift(&x) * dt + noise + &gain * innovation + &control * (second_moment * dt);
        ensemble.particles.set_column(i, &next);
    }
    check_finite(ensemble)?;
    Ok(GainState {
        mode: GainMode::ConstantGain,
        gain,
        control,
        alpha,
        degenerate,
    })
}

type ConstantGains = (DVector<f64>, DVector<f64>, alloc::vec::Vec<f64>, f64, bool);

/// Gains `(K, u)` of the constant-gain closure plus `h(Xⁱ)` and `h̄`.
fn constant_gains<H: Fn(&DVector<f64>) -> f64>(ensemble: &EuclideanEnsemble, h: &H, obs_noise_std: f64) -> Result<ConstantGains> {
    let n = ensemble.len();
    let nf = n as f64;
    let r = obs_noise_std * obs_noise_std;
    let h_vals: alloc::vec::Vec<f64> = (0..n).map(|i| h(&ensemble.particle(i))).collect();
    if h_vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observation function not finite at a particle".into()));
    }
    let h_mean = h_vals.iter().sum::<f64>() / nf;
    let g_vals: alloc::vec::Vec<f64> = h_vals.iter().map(|v| 0.5 * (v - h_mean) * (v - h_mean)).collect();
    let g_mean = g_vals.iter().sum::<f64>() / nf;

    let mean = ensemble.mean();
    let d = ensemble.dim();
    let mut cov_h = DVector::zeros(d);
    let mut cov_g = DVector::zeros(d);
    for i in 0..n {
        let dx = ensemble.particles.column(i) - &mean;
        cov_h += &dx * (h_vals[i] - h_mean);
        cov_g += &dx * (g_vals[i] - g_mean);
    }
    let gain = cov_h / ((nf - 1.0) * r);
    let mean_feedback = &gain * (h_vals.iter().map(|v| v - h_mean).sum::<f64>() / nf);
    let control = mean_feedback * -0.5 + cov_g / ((nf - 1.0) * r);
    let degenerate = (0..n).all(|i| ensemble.particles.column(i) == ensemble.particles.column(0));
    Ok((gain, control, h_vals, h_mean, degenerate))
}

/// Gains the constant-gain step would use for `ensemble`, without moving it.
pub fn constant_gain_state<H: Fn(&DVector<f64>) -> f64>(
    ensemble: &EuclideanEnsemble,
    h: H,
    obs_noise_std: f64,
    stats: &AggregateStats,
) -> Result<GainState> {
    check_ensemble(ensemble, ensemble.dim())?;
    let (gain, control, _, _, degenerate) = constant_gains(ensemble, &h, obs_noise_std)?;
    Ok(GainState {
        mode: GainMode::ConstantGain,
        gain,
        control,
        alpha: 0.5 * (1.0 - stats.v / (obs_noise_std * obs_noise_std)),
        degenerate,
    })
}
