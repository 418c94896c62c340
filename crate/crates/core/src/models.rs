//! Generative models and ground-truth agent simulation.
//!
//! Three model classes are supported: a continuous-time linear-Gaussian
//! diffusion, a continuous-time Markov chain on `d` states (both observed
//! through `dZ = h(X) dt + σ_w dW`), and a discrete-time HMM with finite
//! observation alphabet.
//!
//! Continuous-time agents are advanced with fixed-step Euler-Maruyama on a
//! grid shared with the filters. Markov-chain jumps are Bernoulli-thinned on
//! the same grid. Observations are stored as per-step increments.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::belief::SimplexBelief;
use crate::linalg::{self, SYMMETRY_TOL};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Column-stochasticity tolerance for HMM matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Number of Euler steps covering `[0, horizon]` with step `dt`.
pub fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !horizon.is_finite() || horizon < dt * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} shorter than one step {dt}"
        )));
    }
    Ok(libm::round(horizon / dt).max(1.0) as usize)
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub(crate) fn normal_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| standard_normal(rng))
}

/// Draws an index from `probs` (assumed to sum to ~1). Round-off leftovers
/// land on the last index with positive mass.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: impl IntoIterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last
}

fn check_psd(name: &str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::InvalidModel(format!(
            "{name} must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !linalg::is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::InvalidModel(format!("{name} is not symmetric")));
    }
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig < -SYMMETRY_TOL {
        return Err(Error::InvalidModel(format!(
            "{name} is not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

// ── Linear-Gaussian ──────────────────────────────────────────────────────

/// `dX = A X dt + Q^{1/2} dB`, `dZ = H X dt + σ_w dW`, `X_0 ~ N(m0, Σ0)`.
///
/// `H` may have several rows for use with the discrete-time recursion in
/// [`crate::collective_kalman::discrete_ckf_update`]; the continuous-time
/// filters and the simulator require a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    drift: DMatrix<f64>,
    observation: DMatrix<f64>,
    process_noise: DMatrix<f64>,
    process_noise_sqrt: DMatrix<f64>,
    obs_noise_std: f64,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    prior_cov_sqrt: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn new(
        drift: DMatrix<f64>,
        observation: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        obs_noise_std: f64,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = prior_mean.len();
        if d == 0 {
            return Err(Error::InvalidModel("state dimension is zero".into()));
        }
        if drift.nrows() != d || drift.ncols() != d {
            return Err(Error::InvalidModel(format!(
                "drift matrix must be {d}x{d}, got {}x{}",
                drift.nrows(),
                drift.ncols()
            )));
        }
        if observation.ncols() != d || observation.nrows() == 0 {
            return Err(Error::InvalidModel(format!(
                "observation matrix must have {d} columns, got {}x{}",
                observation.nrows(),
                observation.ncols()
            )));
        }
        check_psd("process noise covariance", &process_noise, d)?;
        check_psd("prior covariance", &prior_cov, d)?;
        if !(obs_noise_std > 0.0) || !obs_noise_std.is_finite() {
            return Err(Error::InvalidModel(format!(
                "observation noise std must be positive, got {obs_noise_std}"
            )));
        }
        let all_finite = drift.iter().chain(observation.iter()).chain(prior_mean.iter()).all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidModel("non-finite model entry".into()));
        }
        Ok(Self {
            process_noise_sqrt: linalg::psd_sqrt(&process_noise),
            prior_cov_sqrt: linalg::psd_sqrt(&prior_cov),
            drift,
            observation,
            process_noise,
            obs_noise_std,
            prior_mean,
            prior_cov,
        })
    }

    /// Lightly damped 2-d oscillator with velocity observed:
    /// `A = [[0, 1], [-1, -0.5]]`, `H = [0, 1]`, `Q = 0.1 I`, `σ_w² = 0.7`,
    /// `m0 = (1, 0)`, `Σ0 = [[1, 0.2], [0.2, 1]]`.
    pub fn damped_oscillator() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DMatrix::identity(2, 2) * 0.1,
            libm::sqrt(0.7),
            DVector::from_column_slice(&[1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]),
        )
        .expect("built-in model is valid")
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn observation(&self) -> &DMatrix<f64> {
        &self.observation
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    pub fn process_noise_sqrt(&self) -> &DMatrix<f64> {
        &self.process_noise_sqrt
    }

    pub fn obs_noise_std(&self) -> f64 {
        self.obs_noise_std
    }

    pub fn obs_noise_var(&self) -> f64 {
        self.obs_noise_std * self.obs_noise_std
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    /// The single row of `H` as a vector; errors for vector observations.
    pub fn observation_row(&self) -> Result<DVector<f64>> {
        if self.observation.nrows() != 1 {
            return Err(Error::InvalidModel(format!(
                "continuous-time filters need scalar observations, H has {} rows",
                self.observation.nrows()
            )));
        }
        Ok(self.observation.row(0).transpose())
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.prior_mean + &self.prior_cov_sqrt * normal_vector(rng, self.dim())
    }
}

// ── Finite-state Markov chain ────────────────────────────────────────────

/// Continuous-time Markov chain on `d` states observed through
/// `dZ = h(X) dt + σ_w dW`.
///
/// `rates[(x, y)]` is the rate of jumping from `y` into `x` (column = source
/// state, same orientation as an HMM transition matrix). The diagonal is
/// ignored and stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteStateModel {
    rates: DMatrix<f64>,
    obs_values: Vec<f64>,
    obs_noise_std: f64,
    prior: SimplexBelief,
}

impl FiniteStateModel {
    pub fn new(mut rates: DMatrix<f64>, obs_values: Vec<f64>, obs_noise_std: f64, prior: SimplexBelief) -> Result<Self> {
        let d = obs_values.len();
        if d == 0 {
            return Err(Error::InvalidModel("no states".into()));
        }
        if rates.nrows() != d || rates.ncols() != d {
            return Err(Error::InvalidModel(format!(
                "rate matrix must be {d}x{d}, got {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        if prior.dim() != d {
            return Err(Error::InvalidModel(format!("prior has {} states, expected {d}", prior.dim())));
        }
        for y in 0..d {
            rates[(y, y)] = 0.0;
            for x in 0..d {
                let r = rates[(x, y)];
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::InvalidModel(format!("rate {y}->{x} is {r}")));
                }
            }
        }
        if !(obs_noise_std > 0.0) || !obs_noise_std.is_finite() {
            return Err(Error::InvalidModel(format!(
                "observation noise std must be positive, got {obs_noise_std}"
            )));
        }
        if obs_values.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidModel("non-finite observation value".into()));
        }
        Ok(Self {
            rates,
            obs_values,
            obs_noise_std,
            prior,
        })
    }

    pub fn dim(&self) -> usize {
        self.obs_values.len()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// `h(e_k)` for every state `k`.
    pub fn obs_values(&self) -> &[f64] {
        &self.obs_values
    }

    pub fn obs_noise_std(&self) -> f64 {
        self.obs_noise_std
    }

    pub fn obs_noise_var(&self) -> f64 {
        self.obs_noise_std * self.obs_noise_std
    }

    pub fn prior(&self) -> &SimplexBelief {
        &self.prior
    }

    /// Total rate of leaving `state`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        self.rates.column(state).sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).map(|y| self.exit_rate(y)).fold(0.0, f64::max)
    }

    /// Adjoint of the generator applied to `p`:
    /// `(A†p)(x) = Σ_{y≠x} r(x←y) p(y) - p(x) Σ_{y≠x} r(y←x)`.
    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|x| {
                let inflow: f64 = (0..self.dim()).map(|y| self.rates[(x, y)] * p[y]).sum();
                inflow - self.exit_rate(x) * p[x]
            })
            .collect()
    }
}

// ── Discrete-time HMM ────────────────────────────────────────────────────

/// Discrete-time HMM. `transition[(x, x')] = p(x | x')` and
/// `emission[(z, x)] = o(z | x)`; both are column-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    transition: DMatrix<f64>,
    emission: DMatrix<f64>,
    prior: SimplexBelief,
}

impl HmmModel {
    pub fn new(transition: DMatrix<f64>, emission: DMatrix<f64>, prior: SimplexBelief) -> Result<Self> {
        let d = prior.dim();
        if transition.nrows() != d || transition.ncols() != d {
            return Err(Error::InvalidModel(format!(
                "transition matrix must be {d}x{d}, got {}x{}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        if emission.ncols() != d || emission.nrows() == 0 {
            return Err(Error::InvalidModel(format!(
                "emission matrix must have {d} columns, got {}x{}",
                emission.nrows(),
                emission.ncols()
            )));
        }
        for (name, m) in [("transition", &transition), ("emission", &emission)] {
            if let Some(v) = m.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(Error::InvalidModel(format!("{name} entry {v} outside [0, 1]")));
            }
            for (k, col) in m.column_iter().enumerate() {
                let s = col.sum();
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidModel(format!("{name} column {k} sums to {s}")));
                }
            }
        }
        Ok(Self {
            transition,
            emission,
            prior,
        })
    }

    pub fn num_states(&self) -> usize {
        self.prior.dim()
    }

    pub fn num_symbols(&self) -> usize {
        self.emission.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn emission(&self) -> &DMatrix<f64> {
        &self.emission
    }

    pub fn prior(&self) -> &SimplexBelief {
        &self.prior
    }
}

// ── Agent ensembles ──────────────────────────────────────────────────────

/// One agent's trajectory on the shared grid: `states[k]` is the state at
/// `t = k dt` (`k = 0..=steps`), `increments[k] = Z_{(k+1)dt} - Z_{k dt}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPath<S> {
    pub states: Vec<S>,
    pub increments: Vec<f64>,
}

impl<S> AgentPath<S> {
    /// `Z_t` on the grid, starting from `Z_0 = 0`.
    pub fn cumulative_observation(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        z.push(acc);
        for dz in &self.increments {
            acc += dz;
            z.push(acc);
        }
        z
    }
}

/// `M` continuous-time agents simulated on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble<S> {
    dt: f64,
    agents: Vec<AgentPath<S>>,
}

impl<S> AgentEnsemble<S> {
    /// Assembles an ensemble; all paths must share the same length.
    pub fn from_paths(dt: f64, agents: Vec<AgentPath<S>>) -> Result<Self> {
        let Some(first) = agents.first() else {
            return Err(Error::Empty("agent ensemble"));
        };
        let steps = first.increments.len();
        for (j, a) in agents.iter().enumerate() {
            if a.increments.len() != steps || a.states.len() != steps + 1 {
                return Err(Error::InvalidArgument(format!("agent {j} is not on the shared grid")));
            }
        }
        Ok(Self { dt, agents })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_steps(&self) -> usize {
        self.agents[0].increments.len()
    }

    pub fn agents(&self) -> &[AgentPath<S>] {
        &self.agents
    }

    /// All agents' observation increments over step `k`.
    pub fn increments_at(&self, k: usize) -> Vec<f64> {
        self.agents.iter().map(|a| a.increments[k]).collect()
    }

    /// All agents' states at grid point `k`.
    pub fn states_at(&self, k: usize) -> Vec<&S> {
        self.agents.iter().map(|a| &a.states[k]).collect()
    }
}

/// One HMM agent: `states[0]` is drawn from the prior, `symbols[t - 1]` is
/// emitted by `states[t]` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmPath {
    pub states: Vec<usize>,
    pub symbols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmEnsemble {
    agents: Vec<HmmPath>,
}

impl HmmEnsemble {
    pub fn agents(&self) -> &[HmmPath] {
        &self.agents
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_steps(&self) -> usize {
        self.agents.first().map_or(0, |a| a.symbols.len())
    }

    /// Symbols of all agents at observation index `t` (0-based).
    pub fn symbols_at(&self, t: usize) -> Vec<usize> {
        self.agents.iter().map(|a| a.symbols[t]).collect()
    }
}

// ── Simulation ───────────────────────────────────────────────────────────

/// Euler-Maruyama path of agent `agent` (RNG stream `agent` under `seed`).
pub fn lg_agent_path(model: &LinearGaussianModel, seed: u64, agent: u64, dt: f64, steps: usize) -> Result<AgentPath<DVector<f64>>> {
    let h = model.observation_row()?;
    let mut rng = stream_rng(seed, agent);
    let sqrt_dt = libm::sqrt(dt);
    let mut x = model.sample_prior(&mut rng);
    let mut states = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        let dz = h.dot(&x) * dt + model.obs_noise_std() * sqrt_dt * standard_normal(&mut rng);
        let noise = model.process_noise_sqrt() * normal_vector(&mut rng, model.dim());
        let next = &x + model.drift() * &x * dt + noise * sqrt_dt;
        states.push(core::mem::replace(&mut x, next));
        increments.push(dz);
    }
    states.push(x);
    Ok(AgentPath { states, increments })
}

/// `M` independent linear-Gaussian agents on `[0, horizon]`.
pub fn simulate_lg_agents(
    model: &LinearGaussianModel,
    num_agents: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<AgentEnsemble<DVector<f64>>> {
    let steps = step_count(dt, horizon)?;
    if num_agents == 0 {
        return Err(Error::Empty("agent ensemble"));
    }
    let paths = (0..num_agents as u64)
        .map(|j| lg_agent_path(model, seed, j, dt, steps))
        .collect::<Result<Vec<_>>>()?;
    AgentEnsemble::from_paths(dt, paths)
}

fn check_jump_step(model: &FiniteStateModel, dt: f64) -> Result<()> {
    let p = model.max_exit_rate() * dt;
    if p >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "max exit rate x dt = {p} must be below 1; reduce dt"
        )));
    }
    Ok(())
}

/// Markov-chain path of agent `agent`. Observation over a step uses the
/// state at its start; the jump (at most one) is applied afterwards.
pub fn ctmc_agent_path(model: &FiniteStateModel, seed: u64, agent: u64, dt: f64, steps: usize) -> Result<AgentPath<usize>> {
    check_jump_step(model, dt)?;
    let mut rng = stream_rng(seed, agent);
    let sqrt_dt = libm::sqrt(dt);
    let d = model.dim();
    let mut x = sample_categorical(&mut rng, model.prior().as_slice().iter().copied());
    let mut states = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        states.push(x);
        increments.push(model.obs_values()[x] * dt + model.obs_noise_std() * sqrt_dt * standard_normal(&mut rng));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for target in (0..d).filter(|&t| t != x) {
            acc += model.rates()[(target, x)] * dt;
            if u < acc {
                x = target;
                break;
            }
        }
    }
    states.push(x);
    Ok(AgentPath { states, increments })
}

/// `M` independent Markov-chain agents on `[0, horizon]`.
pub fn simulate_ctmc_agents(
    model: &FiniteStateModel,
    num_agents: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<AgentEnsemble<usize>> {
    let steps = step_count(dt, horizon)?;
    check_jump_step(model, dt)?;
    if num_agents == 0 {
        return Err(Error::Empty("agent ensemble"));
    }
    let paths = (0..num_agents as u64)
        .map(|j| ctmc_agent_path(model, seed, j, dt, steps))
        .collect::<Result<Vec<_>>>()?;
    AgentEnsemble::from_paths(dt, paths)
}

/// `M` independent HMM agents observed for `steps` time steps.
pub fn simulate_hmm_agents(model: &HmmModel, num_agents: usize, steps: usize, seed: u64) -> Result<HmmEnsemble> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one observation step".into()));
    }
    if num_agents == 0 {
        return Err(Error::Empty("agent ensemble"));
    }
    let agents = (0..num_agents as u64)
        .map(|j| {
            let mut rng = stream_rng(seed, j);
            let mut x = sample_categorical(&mut rng, model.prior().as_slice().iter().copied());
            let mut states = Vec::with_capacity(steps + 1);
            let mut symbols = Vec::with_capacity(steps);
            states.push(x);
            for _ in 0..steps {
                x = sample_categorical(&mut rng, model.transition().column(x).iter().copied());
                symbols.push(sample_categorical(&mut rng, model.emission().column(x).iter().copied()));
                states.push(x);
            }
            HmmPath { states, symbols }
        })
        .collect();
    Ok(HmmEnsemble { agents })
}
