use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::aggregate::AggregateStats;
use crate::belief::SimplexBelief;
use crate::models::{sample_categorical, FiniteStateModel};
use crate::{Error, Result};

/// Post-clip mass below which the collective Wonham step gives up.
pub const COLLAPSE_MASS: f64 = 0.5;

/// `N` particles on the states `0..d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteEnsemble {
    states: Vec<usize>,
    num_states: usize,
}

impl FiniteEnsemble {
    pub fn new(states: Vec<usize>, num_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("particle ensemble"));
        }
        if let Some(&s) = states.iter().find(|&&s| s >= num_states) {
            return Err(Error::InvalidArgument(format!("particle state {s} >= {num_states}")));
        }
        Ok(Self { states, num_states })
    }

    /// `n` i.i.d. draws from `prior`.
    pub fn sample<R: Rng + ?Sized>(prior: &SimplexBelief, n: usize, rng: &mut R) -> Result<Self> {
        let states = (0..n)
            .map(|_| sample_categorical(rng, prior.as_slice().iter().copied()))
            .collect();
        Self::new(states, prior.dim())
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Fraction of particles in each state.
    pub fn histogram(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_states];
        for &s in &self.states {
            counts[s] += 1;
        }
        let n = self.states.len() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Gains and modulated intensities used for one finite-state FPF step.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGain {
    /// `K(x) = π̄(x) (h(x) - c) / σ_w²`.
    pub gain: Vec<f64>,
    /// `K̃(x) = π̄(x) (g(x) - c̃) / σ_w²`.
    pub gain_tilde: Vec<f64>,
    pub c: f64,
    pub c_tilde: f64,
    /// `ΔU^x = K(x) (ΔẐ - h̄ dt)`, nonnegative by choice of `c`.
    pub du: Vec<f64>,
    /// `ΔŨ^x = K̃(x) ((V + V̂)/σ_w² - 1) dt`, nonnegative by choice of `c̃`.
    pub du_tilde: Vec<f64>,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Finite-state FPF step.
///
/// Besides the model's own jumps, a particle in `y` jumps to `x ≠ y` by two
/// time-modulated unit Poisson processes with inputs `U^x`, `Ũ^x`. On the
/// grid this is Bernoulli thinning: the particle leaves `y` for `x` with
/// probability `r(x←y) dt + ΔU^x + ΔŨ^x`, at most once per step, competing
/// targets picked in proportion. The constants `c`, `c̃` are picked so both
/// increments are nonnegative (`c = min h` when the innovation is `≥ 0`,
/// `max h` otherwise; likewise `c̃` with `g` and the variance mismatch).
pub fn finite_fpf_step<R: Rng + ?Sized>(
    ensemble: &mut FiniteEnsemble,
    model: &FiniteStateModel,
    stats: &AggregateStats,
    rng: &mut R,
) -> Result<FiniteGain> {
    let d = model.dim();
    if ensemble.num_states != d {
        return Err(Error::DimensionMismatch {
            context: "ensemble vs model states",
            expected: d,
            found: ensemble.num_states,
        });
    }
    let dt = stats.dt;
    let r = model.obs_noise_var();
    let h = model.obs_values();
    let pi = ensemble.histogram();
    let h_bar: f64 = pi.iter().zip(h).map(|(p, v)| p * v).sum();
    let g: Vec<f64> = h.iter().map(|v| 0.5 * (v - h_bar) * (v - h_bar)).collect();

    let innovation = stats.dz_hat - h_bar * dt;
    let (h_min, h_max) = min_max(h);
    let c = if innovation >= 0.0 { h_min } else { h_max };
    let second_moment = (stats.v + stats.v_hat) / r - 1.0;
    let (g_min, g_max) = min_max(&g);
    let c_tilde = if second_moment >= 0.0 { g_min } else { g_max };

    let gain: Vec<f64> = (0..d).map(|x| pi[x] * (h[x] - c) / r).collect();
    let gain_tilde: Vec<f64> = (0..d).map(|x| pi[x] * (g[x] - c_tilde) / r).collect();
    let du: Vec<f64> = gain.iter().map(|k| k * innovation).collect();
    let du_tilde: Vec<f64> = gain_tilde.iter().map(|k| k * second_moment * dt).collect();
    debug_assert!(du.iter().chain(&du_tilde).all(|&u| u >= 0.0));

    // jump probabilities per source state, validated before any particle moves
    let mut jump = vec![vec![0.0; d]; d];
    for y in 0..d {
        let mut total = 0.0;
        for x in (0..d).filter(|&x| x != y) {
            let p = model.rates()[(x, y)] * dt + du[x] + du_tilde[x];
            jump[y][x] = p;
            total += p;
        }
        if !(total < 1.0) {
            return Err(Error::StepTooLarge {
                state: y,
                probability: total,
            });
        }
    }

    for s in ensemble.states.iter_mut() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for x in (0..d).filter(|&x| x != *s) {
            acc += jump[*s][x];
            if u < acc {
                *s = x;
                break;
            }
        }
    }

    Ok(FiniteGain {
        gain,
        gain_tilde,
        c,
        c_tilde,
        du,
        du_tilde,
    })
}

/// Euler step of the exact collective filter for a finite-state chain:
///
/// ```text
/// dπ(x) = (A†π)(x) dt + (1/σ_w²) π(x) (h(x) - ĥ) (dẐ - ĥ dt)
///       + (1/σ_w²) π(x) (g(x) - ĝ) ((V + V̂)/σ_w² - 1) dt
/// ```
///
/// with `ĥ = Σ π h`, `g = ½ (h - ĥ)²`, `ĝ = Σ π g`. Negative entries are
/// clipped to zero and the result renormalized; if less than
/// [`COLLAPSE_MASS`] survives the clip the step fails. Without clipping the
/// step conserves mass exactly up to round-off and is not renormalized.
pub fn collective_wonham_step(belief: &SimplexBelief, model: &FiniteStateModel, stats: &AggregateStats) -> Result<SimplexBelief> {
    let d = model.dim();
    if belief.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "belief vs model states",
            expected: d,
            found: belief.dim(),
        });
    }
    if !(stats.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let dt = stats.dt;
    let r = model.obs_noise_var();
    let pi = belief.as_slice();
    let h = model.obs_values();
    let h_hat = belief.expect(h);
    let g: Vec<f64> = h.iter().map(|v| 0.5 * (v - h_hat) * (v - h_hat)).collect();
    let g_hat = belief.expect(&g);
    let innovation = stats.dz_hat - h_hat * dt;
    let second_moment = (stats.v + stats.v_hat) / r - 1.0;
    let forward = model.forward(pi);

    let mut next: Vec<f64> = (0..d)
        .map(|x| {
            pi[x] + forward[x] * dt
                + pi[x] * (h[x] - h_hat) * innovation / r
                + pi[x] * (g[x] - g_hat) * second_moment * dt / r
        })
        .collect();
    if next.iter().any(|p| !p.is_finite()) {
        return Err(Error::SimplexCollapse { mass: f64::NAN });
    }
    if next.iter().any(|&p| p < 0.0) {
        for p in next.iter_mut() {
            *p = p.max(0.0);
        }
        let mass: f64 = next.iter().sum();
        if mass < COLLAPSE_MASS {
            return Err(Error::SimplexCollapse { mass });
        }
        log::debug!("collective Wonham step clipped negative mass");
        return SimplexBelief::from_weights(next);
    }
    SimplexBelief::new(next)
}
