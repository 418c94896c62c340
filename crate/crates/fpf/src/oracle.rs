//! Randomized cross-check of the collective HMM update against the
//! KL-projection oracle.

use collective_core::collective_hmm::{collective_update, kl_oracle, predict};
use collective_core::rng::stream_rng;
use collective_core::{DMatrix, EmpiricalSymbolDistribution, Error, HmmModel, SimplexBelief};
use rand::Rng;

/// Largest disagreement seen over all trials.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleReport {
    pub trials: usize,
    /// `max |π⁺ - oracle marginal|` over trials and states.
    pub max_deviation: f64,
    /// Largest oracle constraint residual.
    pub max_residual: f64,
}

fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // strictly positive weights keep every instance feasible
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for (r, v) in simplex(rng, rows).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Random model with `d, m ∈ 1..=5`, filtered belief and full-support `q`.
pub fn random_instance<R: Rng>(rng: &mut R) -> (HmmModel, SimplexBelief, EmpiricalSymbolDistribution) {
    let d = rng.random_range(1..=5);
    let m = rng.random_range(1..=5);
    let prior = SimplexBelief::new(simplex(rng, d)).expect("simplex");
    let model = HmmModel::new(stochastic(rng, d, d), stochastic(rng, m, d), prior).expect("stochastic");
    let belief = SimplexBelief::new(simplex(rng, d)).expect("simplex");
    let q = EmpiricalSymbolDistribution::from_probabilities(simplex(rng, m)).expect("simplex");
    (model, belief, q)
}

/// Runs `trials` random instances; the first failing instance aborts with
/// its index.
pub fn oracle_check(trials: usize, seed: u64) -> Result<OracleReport, (usize, Error)> {
    let mut rng = stream_rng(seed, 0);
    let mut report = OracleReport {
        trials,
        ..OracleReport::default()
    };
    for t in 0..trials {
        let (model, belief, q) = random_instance(&mut rng);
        let run = || -> Result<(f64, f64), Error> {
            let post = collective_update(&predict(&belief, &model)?, &model, &q)?;
            let proj = kl_oracle(&belief, &model, &q)?;
            let dev = post
                .as_slice()
                .iter()
                .zip(proj.joint.state_marginal())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((dev, proj.residual))
        };
        let (dev, residual) = run().map_err(|e| (t, e))?;
        report.max_deviation = report.max_deviation.max(dev);
        report.max_residual = report.max_residual.max(residual);
    }
    Ok(report)
}
