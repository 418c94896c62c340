//! Seed-averaged error sweeps.
//!
//! * change-M: independent Kalman-Bucy filters with known association,
//!   summarized as a Gaussian mixture, against the collective Kalman filter
//!   fed only aggregate statistics.
//! * change-N: linear-Gaussian FPF against the collective Kalman filter on a
//!   shared aggregate stream.
//! * finite-state: finite-state FPF histogram against the exact collective
//!   Wonham filter.
//!
//! Runs are independent per `(sweep value, seed index)` and execute on a
//! rayon pool; results are ordered by that key, so outputs depend only on
//! the config.

use std::fmt;
use std::time::Instant;

use collective_core::aggregate::aggregate_ensemble;
use collective_core::collective_kalman::{ckf_step, kalman_bucy_step};
use collective_core::fpf::{collective_wonham_step, empirical_moments, finite_fpf_step, lg_fpf_step, EuclideanEnsemble, FiniteEnsemble};
use collective_core::metrics::{gaussian_mixture_moments, normalized_error, total_variation};
use collective_core::models::{simulate_ctmc_agents, simulate_lg_agents};
use collective_core::rng::{derive_seed, stream_rng};
use collective_core::{Error, GaussianBelief, LinearGaussianModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BlowUpPolicy, ConfigError, ExperimentConfig};

/// Caps the worker pool size when set to a positive integer.
pub const THREADS_ENV: &str = "COLLECTIVE_FPF_THREADS";

const TAG_CHANGE_M: u64 = 1;
const TAG_CHANGE_N: u64 = 2;
const TAG_FINITE: u64 = 3;
const TAG_PARTICLES: u64 = 0x70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ChangeM,
    ChangeN,
    FiniteState,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ChangeM => "change-m",
            Experiment::ChangeN => "change-n",
            Experiment::FiniteState => "finite-state",
        }
    }

    /// Human-readable meaning of the two error columns.
    pub fn error_definitions(self) -> [(&'static str, &'static str); 2] {
        match self {
            Experiment::ChangeM => [
                ("mean_err", "|m_ckf - m_kf|_2 / |m_kf|_2 at T, m_kf = mean of the KF mixture"),
                ("var_err", "|S_ckf - S_kf|_F / |S_kf|_F at T, S_kf = covariance of the KF mixture"),
            ],
            Experiment::ChangeN => [
                ("mean_err", "|m_fpf - m_ckf|_2 / |m_ckf|_2 at T, m_fpf = particle mean"),
                ("var_err", "|S_fpf - S_ckf|_F / |S_ckf|_F at T, S_fpf = particle covariance (1/(N-1))"),
            ],
            Experiment::FiniteState => [
                ("mean_err", "total variation between particle histogram and collective Wonham belief at T"),
                ("var_err", "the same total variation averaged over all steps in (0, T]"),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One `(sweep value, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    /// M for change-M, N otherwise.
    pub sweep: usize,
    /// Seed index in `0..num_seeds`.
    pub seed: usize,
    pub mean_err: f64,
    pub var_err: f64,
    pub runtime_s: f64,
}

/// Seed-aggregated errors for one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep: usize,
    pub mean_err: f64,
    pub mean_err_sd: f64,
    pub var_err: f64,
    pub var_err_sd: f64,
    pub seeds: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUpRecord {
    pub sweep: usize,
    pub seed: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    pub runs: Vec<SeedResult>,
    pub blowups: Vec<BlowUpRecord>,
    pub wall_time_s: f64,
}

impl ExperimentOutput {
    /// Mean and sample standard deviation over seeds, per sweep value, in
    /// sweep order.
    pub fn summary(&self) -> Vec<ResultRow> {
        let mut rows: Vec<ResultRow> = Vec::new();
        let mut i = 0;
        while i < self.runs.len() {
            let sweep = self.runs[i].sweep;
            let group: Vec<&SeedResult> = self.runs[i..].iter().take_while(|r| r.sweep == sweep).collect();
            i += group.len();
            let (mean_err, mean_err_sd) = mean_sd(group.iter().map(|r| r.mean_err));
            let (var_err, var_err_sd) = mean_sd(group.iter().map(|r| r.var_err));
            rows.push(ResultRow {
                sweep,
                mean_err,
                mean_err_sd,
                var_err,
                var_err_sd,
                seeds: group.len(),
                runtime_s: group.iter().map(|r| r.runtime_s).sum(),
            });
        }
        rows
    }
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A failed run with enough context to reproduce it.
#[derive(Debug, thiserror::Error)]
#[error("{experiment} run failed (sweep value {sweep}, seed {seed}): {source}")]
pub struct RunFailure {
    pub experiment: Experiment,
    pub sweep: usize,
    pub seed: usize,
    pub source: Error,
}

impl RunFailure {
    pub fn is_blow_up(&self) -> bool {
        self.source.is_blow_up()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunFailure),
}

fn at(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtStep {
        step,
        source: Box::new(e),
    }
}

/// Worker pool honoring [`THREADS_ENV`].
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                log::warn!("ignoring {THREADS_ENV}={v:?}: expected a positive integer");
                0
            }
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("rayon pool")
}

fn prior(model: &LinearGaussianModel) -> GaussianBelief {
    GaussianBelief::new(model.prior_mean().clone(), model.prior_cov().clone()).expect("validated model")
}

/// Terminal `(mean_err, var_err)` of one change-M run.
pub fn change_m_errors(config: &ExperimentConfig, num_agents: usize, seed: usize) -> Result<(f64, f64), Error> {
    let model = config.linear_gaussian_model().map_err(|e| Error::InvalidModel(e.to_string()))?;
    let e = &config.experiment;
    // agents are shared across M: the first M streams of one seed
    let agent_seed = derive_seed(e.seed, &[TAG_CHANGE_M, seed as u64]);
    let agents = simulate_lg_agents(&model, num_agents, e.dt, e.horizon, agent_seed)?;
    let stats = aggregate_ensemble(&agents)?;

    let start = prior(&model);
    let mut kfs = Vec::with_capacity(num_agents);
    for agent in agents.agents() {
        let mut b = start.clone();
        for (k, &dz) in agent.increments.iter().enumerate() {
            b = kalman_bucy_step(&b, &model, dz, e.dt).map_err(at(k))?;
        }
        kfs.push(b);
    }
    let kf = gaussian_mixture_moments(&kfs)?;

    let mut ckf = start;
    for (k, s) in stats.iter().enumerate() {
        ckf = ckf_step(&ckf, &model, s).map_err(at(k))?;
    }
    let err = normalized_error(&ckf, &kf)?;
    if err.unnormalized {
        log::warn!("change-m M={num_agents} seed={seed}: zero-norm reference, error left unnormalized");
    }
    Ok((err.mean, err.cov))
}

/// Terminal `(mean_err, var_err)` of one change-N run. The agent stream
/// depends only on the seed, and particles of a smaller N are a prefix of
/// the initial cloud of a larger one.
pub fn change_n_errors(config: &ExperimentConfig, num_particles: usize, seed: usize) -> Result<(f64, f64), Error> {
    let model = config.linear_gaussian_model().map_err(|e| Error::InvalidModel(e.to_string()))?;
    let e = &config.experiment;
    let agent_seed = derive_seed(e.seed, &[TAG_CHANGE_N, seed as u64]);
    let agents = simulate_lg_agents(&model, e.fpf_agents, e.dt, e.horizon, agent_seed)?;
    let stats = aggregate_ensemble(&agents)?;

    let mut rng = stream_rng(derive_seed(e.seed, &[TAG_CHANGE_N, seed as u64, TAG_PARTICLES]), 0);
    let mut ensemble = EuclideanEnsemble::from_prior(&model, num_particles, &mut rng)?;
    let mut ckf = prior(&model);
    for (k, s) in stats.iter().enumerate() {
        ckf = ckf_step(&ckf, &model, s).map_err(at(k))?;
        lg_fpf_step(&mut ensemble, &model, s, &mut rng).map_err(at(k))?;
    }
    let fpf = empirical_moments(&ensemble)?;
    let err = normalized_error(&fpf, &ckf)?;
    Ok((err.mean, err.cov))
}

/// `(terminal TV, time-averaged TV)` of one finite-state run.
pub fn finite_state_errors(config: &ExperimentConfig, num_particles: usize, seed: usize) -> Result<(f64, f64), Error> {
    let model = config.finite_model().map_err(|e| Error::InvalidModel(e.to_string()))?;
    let f = &config.finite;
    let master = config.experiment.seed;
    let agents = simulate_ctmc_agents(&model, f.num_agents, f.dt, f.horizon, derive_seed(master, &[TAG_FINITE, seed as u64]))?;
    let stats = aggregate_ensemble(&agents)?;

    let mut rng = stream_rng(derive_seed(master, &[TAG_FINITE, seed as u64, TAG_PARTICLES]), 0);
    let mut ensemble = FiniteEnsemble::sample(model.prior(), num_particles, &mut rng)?;
    let mut belief = model.prior().clone();
    let mut tv = 0.0;
    let mut tv_sum = 0.0;
    for (k, s) in stats.iter().enumerate() {
        belief = collective_wonham_step(&belief, &model, s).map_err(at(k))?;
        finite_fpf_step(&mut ensemble, &model, s, &mut rng).map_err(at(k))?;
        tv = total_variation(&ensemble.histogram(), belief.as_slice());
        tv_sum += tv;
    }
    Ok((tv, tv_sum / stats.len() as f64))
}

type RunFn = fn(&ExperimentConfig, usize, usize) -> Result<(f64, f64), Error>;

fn sweep(config: &ExperimentConfig, experiment: Experiment, values: &[usize], run: RunFn) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let tasks: Vec<(usize, usize)> = values
        .iter()
        .flat_map(|&v| (0..config.experiment.num_seeds).map(move |s| (v, s)))
        .collect();
    let results: Vec<(usize, usize, f64, Result<(f64, f64), Error>)> = thread_pool().install(|| {
        tasks
            .par_iter()
            .map(|&(v, s)| {
                let t = Instant::now();
                let r = run(config, v, s);
                (v, s, t.elapsed().as_secs_f64(), r)
            })
            .collect()
    });

    let mut runs = Vec::with_capacity(results.len());
    let mut blowups = Vec::new();
    for (sweep, seed, runtime_s, result) in results {
        match result {
            Ok((mean_err, var_err)) => runs.push(SeedResult {
                sweep,
                seed,
                mean_err,
                var_err,
                runtime_s,
            }),
            Err(source) => {
                let failure = RunFailure {
                    experiment,
                    sweep,
                    seed,
                    source,
                };
                if failure.is_blow_up() && config.experiment.on_blowup == BlowUpPolicy::Record {
                    log::warn!("{failure}");
                    blowups.push(BlowUpRecord {
                        sweep,
                        seed,
                        message: failure.source.to_string(),
                    });
                } else {
                    return Err(failure.into());
                }
            }
        }
    }
    Ok(ExperimentOutput {
        experiment,
        runs,
        blowups,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

pub fn run_change_m(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    sweep(config, Experiment::ChangeM, &config.experiment.m_values, change_m_errors)
}

pub fn run_change_n(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    sweep(config, Experiment::ChangeN, &config.experiment.n_values, change_n_errors)
}

pub fn run_finite_state(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    sweep(config, Experiment::FiniteState, &config.finite.n_values, finite_state_errors)
}

pub fn run(config: &ExperimentConfig, experiment: Experiment) -> Result<ExperimentOutput, HarnessError> {
    match experiment {
        Experiment::ChangeM => run_change_m(config),
        Experiment::ChangeN => run_change_n(config),
        Experiment::FiniteState => run_finite_state(config),
    }
}
