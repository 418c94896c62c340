//! Aggregate observation statistics.
//!
//! The collective filters never see individual agents. Per time step they
//! consume the mean increment `ΔẐ`, the empirical increment variance `V`
//! and the quadratic-variation proxy `V̂` (continuous time), or the
//! empirical symbol distribution `q` (discrete time).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::models::{AgentEnsemble, HmmEnsemble};
use crate::{Error, Result};

/// Per-step aggregate statistics of `M` observation increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    /// Mean increment `ΔẐ = (1/M) Σ_j ΔZ^j`.
    pub dz_hat: f64,
    /// Centered increment variance per unit time,
    /// `V = (1/(M dt)) Σ_j (ΔZ^j - ΔẐ)²`.
    pub v: f64,
    /// `V̂ = ΔẐ² / dt`.
    pub v_hat: f64,
    pub dt: f64,
}

impl AggregateStats {
    /// Statistics of a single observed path (`M = 1`): `V = 0`.
    pub fn single(dz: f64, dt: f64) -> Self {
        Self {
            dz_hat: dz,
            v: 0.0,
            v_hat: dz * dz / dt,
            dt,
        }
    }
}

pub fn aggregate_increment(increments: &[f64], dt: f64) -> Result<AggregateStats> {
    if increments.is_empty() {
        return Err(Error::Empty("increment list"));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    // sorted so the result is bit-identical under any agent relabelling
    let mut sorted = increments.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let dz_hat = sorted.iter().sum::<f64>() / m;
    let v = sorted.iter().map(|z| (z - dz_hat) * (z - dz_hat)).sum::<f64>() / (m * dt);
    Ok(AggregateStats {
        dz_hat,
        v,
        v_hat: dz_hat * dz_hat / dt,
        dt,
    })
}

/// Aggregate statistics for every step of a simulated ensemble.
pub fn aggregate_ensemble<S>(ensemble: &AgentEnsemble<S>) -> Result<Vec<AggregateStats>> {
    (0..ensemble.num_steps())
        .map(|k| aggregate_increment(&ensemble.increments_at(k), ensemble.dt()))
        .collect()
}

/// Replaces the raw per-step `V̂` by an exponential moving average with
/// weight `weight ∈ (0, 1]` on the newest sample. `weight = 1` is a no-op.
pub fn smooth_v_hat(stats: &mut [AggregateStats], weight: f64) -> Result<()> {
    if !(weight > 0.0 && weight <= 1.0) {
        return Err(Error::InvalidArgument(format!("EMA weight {weight} outside (0, 1]")));
    }
    let mut avg: Option<f64> = None;
    for s in stats.iter_mut() {
        let next = match avg {
            None => s.v_hat,
            Some(a) => a + weight * (s.v_hat - a),
        };
        avg = Some(next);
        s.v_hat = next;
    }
    Ok(())
}

/// Empirical distribution of `M` observed symbols over an alphabet of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSymbolDistribution {
    probabilities: Vec<f64>,
}

impl EmpiricalSymbolDistribution {
    /// Builds a distribution directly (e.g. loaded from file). Entries must be
    /// nonnegative and sum to one within `1e-10`.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        crate::SimplexBelief::new(probabilities).map(|p| Self {
            probabilities: p.into_vec(),
        })
    }

    /// Point mass on `symbol`.
    pub fn dirac(m: usize, symbol: usize) -> Self {
        let mut probabilities = vec![0.0; m];
        probabilities[symbol] = 1.0;
        Self { probabilities }
    }

    pub fn num_symbols(&self) -> usize {
        self.probabilities.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probabilities
    }
}

pub fn empirical_symbol_distribution(symbols: &[usize], m: usize) -> Result<EmpiricalSymbolDistribution> {
    if symbols.is_empty() {
        return Err(Error::Empty("symbol list"));
    }
    let mut counts = vec![0usize; m];
    for &z in symbols {
        if z >= m {
            return Err(Error::SymbolOutOfRange { symbol: z, alphabet: m });
        }
        counts[z] += 1;
    }
    let total = symbols.len() as f64;
    Ok(EmpiricalSymbolDistribution {
        probabilities: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

/// `q_t` for each observation step of an HMM ensemble.
pub fn symbol_distributions(ensemble: &HmmEnsemble, m: usize) -> Result<Vec<EmpiricalSymbolDistribution>> {
    (0..ensemble.num_steps())
        .map(|t| empirical_symbol_distribution(&ensemble.symbols_at(t), m))
        .collect()
}
