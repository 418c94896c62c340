//! Discrete-time collective Bayes filter.
//!
//! Given the filtered belief `π_t` and the empirical distribution `q_{t+1}`
//! of the next `M` anonymous observations, the one-step estimate minimizes
//! `D(P̃ ‖ P)` over joint laws `P̃(x, z)` whose `z`-marginal is `q_{t+1}`,
//! where `P(x, z) = π_{t+1|t}(x) o(z|x)`. The minimizer rescales each column
//! of `P`, which gives the closed form
//!
//! ```text
//! π_{t+1|t}(x)   = Σ_x' p(x|x') π_t(x')
//! ξ(z)           = Σ_x o(z|x) π_{t+1|t}(x)
//! π_{t+1|t+1}(x) = Σ_z o(z|x) π_{t+1|t}(x) q(z) / ξ(z)
//! ```
//!
//! With `q` a point mass this is Bayes' rule. [`kl_oracle`] solves the
//! projection numerically so the closed form can be checked against it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::aggregate::EmpiricalSymbolDistribution;
use crate::belief::SimplexBelief;
use crate::models::HmmModel;
use crate::{Error, Result};

/// Below this predicted probability a symbol with `q(z) > 0` is rejected.
pub const FEASIBILITY_TOL: f64 = 1e-14;

/// Constraint residual the oracle must reach.
pub const ORACLE_RESIDUAL_TOL: f64 = 1e-10;

/// Largest allowed gap between the oracle's iterative and closed-form routes.
pub const ORACLE_AGREEMENT_TOL: f64 = 1e-9;

fn check_dims(belief: &SimplexBelief, model: &HmmModel) -> Result<()> {
    if belief.dim() != model.num_states() {
        return Err(Error::DimensionMismatch {
            context: "belief vs HMM states",
            expected: model.num_states(),
            found: belief.dim(),
        });
    }
    Ok(())
}

/// Prediction step `π'(x) = Σ_x' p(x|x') π(x')`.
pub fn predict(belief: &SimplexBelief, model: &HmmModel) -> Result<SimplexBelief> {
    check_dims(belief, model)?;
    let p = model.transition();
    let out = (0..model.num_states())
        .map(|x| belief.as_slice().iter().enumerate().map(|(xp, w)| p[(x, xp)] * w).sum())
        .collect();
    SimplexBelief::new(out)
}

/// `ξ(z) = Σ_x o(z|x) π(x)`.
pub fn predicted_symbol_distribution(belief: &SimplexBelief, model: &HmmModel) -> Vec<f64> {
    let o = model.emission();
    (0..model.num_symbols())
        .map(|z| belief.as_slice().iter().enumerate().map(|(x, w)| o[(z, x)] * w).sum())
        .collect()
}

/// Collective update of the predicted belief `prior` with the empirical
/// symbol distribution `q`. Symbols with `q(z) = 0` are skipped, so their
/// `ξ(z)` may vanish.
pub fn collective_update(prior: &SimplexBelief, model: &HmmModel, q: &EmpiricalSymbolDistribution) -> Result<SimplexBelief> {
    check_dims(prior, model)?;
    if q.num_symbols() != model.num_symbols() {
        return Err(Error::DimensionMismatch {
            context: "q vs HMM alphabet",
            expected: model.num_symbols(),
            found: q.num_symbols(),
        });
    }
    let xi = predicted_symbol_distribution(prior, model);
    let o = model.emission();
    let mut post = vec![0.0; model.num_states()];
    for (z, (&qz, &xz)) in q.as_slice().iter().zip(&xi).enumerate() {
        if qz == 0.0 {
            continue;
        }
        if xz < FEASIBILITY_TOL {
            return Err(Error::ImpossibleObservation {
                symbol: z,
                mass: qz,
                likelihood: xz,
            });
        }
        let scale = qz / xz;
        for (x, px) in post.iter_mut().enumerate() {
            *px += o[(z, x)] * prior.as_slice()[x] * scale;
        }
    }
    SimplexBelief::new(post)
}

/// Runs predict / collective update from the model prior over `qs`,
/// returning the filtered belief after each observation.
pub fn filter_path(model: &HmmModel, qs: &[EmpiricalSymbolDistribution]) -> Result<Vec<SimplexBelief>> {
    if qs.is_empty() {
        return Err(Error::Empty("q sequence"));
    }
    let mut belief = model.prior().clone();
    let mut out = Vec::with_capacity(qs.len());
    for (t, q) in qs.iter().enumerate() {
        let predicted = predict(&belief, model).map_err(|e| e.at_step(t))?;
        belief = collective_update(&predicted, model, q).map_err(|e| e.at_step(t))?;
        out.push(belief.clone());
    }
    Ok(out)
}

// ── KL-projection oracle ─────────────────────────────────────────────────

/// Joint law over `d` states × `m` symbols, stored as a `d × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution(DMatrix<f64>);

impl JointDistribution {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("negative joint probability".into()));
        }
        let total = p.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("joint sums to {total}")));
        }
        Ok(Self(p))
    }

    /// `P(x, z) = π_{t+1|t}(x) o(z|x)` for the predicted belief `predicted`.
    pub fn nominal(predicted: &SimplexBelief, model: &HmmModel) -> Self {
        let o = model.emission();
        Self(DMatrix::from_fn(model.num_states(), model.num_symbols(), |x, z| {
            predicted.as_slice()[x] * o[(z, x)]
        }))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    pub fn symbol_marginal(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.sum()).collect()
    }

    /// `D(self ‖ reference)` with `0 log 0 = 0`; infinite if `self` puts mass
    /// where `reference` has none.
    pub fn divergence_from(&self, reference: &JointDistribution) -> f64 {
        self.0
            .iter()
            .zip(reference.0.iter())
            .map(|(&p, &r)| match (p > 0.0, r > 0.0) {
                (false, _) => 0.0,
                (true, true) => p * libm::log(p / r),
                (true, false) => f64::INFINITY,
            })
            .sum()
    }
}

/// Result of [`kl_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct KlProjection {
    /// Minimizer `P̃*` found by the iterative solver.
    pub joint: JointDistribution,
    /// The nominal joint `P`.
    pub nominal: JointDistribution,
    /// `D(P̃* ‖ P)`.
    pub divergence: f64,
    /// `max_z |Σ_x P̃*(x, z) - q(z)|`.
    pub residual: f64,
    pub iterations: usize,
    /// Max entrywise gap between the iterative minimizer and per-column
    /// scaling `q(z) P(·, z) / ξ(z)`.
    pub closed_form_deviation: f64,
}

/// Solves the one-step projection
/// `min D(P̃ ‖ P)  s.t.  Σ_x P̃(x, z) = q(z)` starting from the filtered
/// belief `belief` (prediction included).
///
/// The minimizer is computed by a generic I-projection solver that knows
/// nothing about the column structure, then compared against exact
/// per-column scaling. Disagreement beyond [`ORACLE_AGREEMENT_TOL`] is an
/// error.
pub fn kl_oracle(belief: &SimplexBelief, model: &HmmModel, q: &EmpiricalSymbolDistribution) -> Result<KlProjection> {
    let predicted = predict(belief, model)?;
    if q.num_symbols() != model.num_symbols() {
        return Err(Error::DimensionMismatch {
            context: "q vs HMM alphabet",
            expected: model.num_symbols(),
            found: q.num_symbols(),
        });
    }
    let nominal = JointDistribution::nominal(&predicted, model);
    let (d, m) = (model.num_states(), model.num_symbols());
    let xi = nominal.symbol_marginal();
    for (z, (&qz, &xz)) in q.as_slice().iter().zip(&xi).enumerate() {
        if qz > 0.0 && xz < FEASIBILITY_TOL {
            return Err(Error::ImpossibleObservation {
                symbol: z,
                mass: qz,
                likelihood: xz,
            });
        }
    }

    // Flatten column-major: cell (x, z) -> z * d + x. Constraint z sums
    // column z.
    let n = d * m;
    let constraints = DMatrix::from_fn(m, n, |z, i| if i / d == z { 1.0 } else { 0.0 });
    let flat_nominal: Vec<f64> = nominal.matrix().iter().copied().collect();
    let (flat, iterations) = i_projection(&flat_nominal, &constraints, q.as_slice())?;
    let joint_m = DMatrix::from_column_slice(d, m, &flat);

    let closed = DMatrix::from_fn(d, m, |x, z| {
        let qz = q.as_slice()[z];
        if qz == 0.0 {
            0.0
        } else {
            qz * nominal.matrix()[(x, z)] / xi[z]
        }
    });
    let closed_form_deviation = (&joint_m - &closed).abs().max();
    if closed_form_deviation > ORACLE_AGREEMENT_TOL {
        return Err(Error::OracleDisagreement {
            deviation: closed_form_deviation,
        });
    }
    let joint = JointDistribution(joint_m);
    let residual = joint
        .symbol_marginal()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > ORACLE_RESIDUAL_TOL {
        return Err(Error::OracleNotConverged { residual, iterations });
    }
    Ok(KlProjection {
        divergence: joint.divergence_from(&nominal),
        joint,
        nominal,
        residual,
        iterations,
        closed_form_deviation,
    })
}

/// Information projection of `nominal` onto `{p ≥ 0 : C p = b}` for a
/// nonnegative constraint matrix `C`.
///
/// The minimizer of the generalized divergence `Σ p log(p/P) - p + P` has
/// the multiplicative form `p_i = P_i exp((Cᵀθ)_i)`; `θ` is found by damped
/// Newton on the convex dual `F(θ) = Σ_i P_i exp((Cᵀθ)_i) - θᵀb`. Cells
/// covered by a zero-target constraint are fixed at zero first.
fn i_projection(nominal: &[f64], c: &DMatrix<f64>, b: &[f64]) -> Result<(Vec<f64>, usize)> {
    const MAX_ITER: usize = 500;
    const TOL: f64 = 1e-14;

    let n = nominal.len();
    let mut base: Vec<f64> = nominal.to_vec();
    let mut active = Vec::new();
    for k in 0..c.nrows() {
        if b[k] == 0.0 {
            for i in 0..n {
                if c[(k, i)] > 0.0 {
                    base[i] = 0.0;
                }
            }
        } else {
            active.push(k);
        }
    }
    let ca = DMatrix::from_fn(active.len(), n, |r, i| c[(active[r], i)]);
    let ba = DVector::from_iterator(active.len(), active.iter().map(|&k| b[k]));

    let primal = |theta: &DVector<f64>| -> DVector<f64> {
        let eta = ca.transpose() * theta;
        DVector::from_fn(n, |i, _| if base[i] > 0.0 { base[i] * libm::exp(eta[i]) } else { 0.0 })
    };
    let dual = |theta: &DVector<f64>, p: &DVector<f64>| p.sum() - theta.dot(&ba);

    let mut theta = DVector::zeros(active.len());
    let mut p = primal(&theta);
    for iter in 0..MAX_ITER {
        let grad = &ca * &p - &ba;
        if grad.amax() <= TOL {
            return Ok((p.iter().copied().collect(), iter));
        }
        let hess = &ca * DMatrix::from_diagonal(&p) * ca.transpose();
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("infeasible marginal constraint".into()))?
            .solve(&grad);
        let f0 = dual(&theta, &p);
        let slope = -grad.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            let pc = primal(&cand);
            let fc = dual(&cand, &pc);
            // near the optimum the dual value is flat to rounding, so a
            // drop in the residual also counts as progress
            let armijo = fc.is_finite() && fc <= f0 + 1e-4 * t * slope;
            if armijo || (fc.is_finite() && (&ca * &pc - &ba).amax() < grad.amax()) {
                theta = cand;
                p = pc;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // no further progress representable
                let residual = grad.amax();
                return if residual <= ORACLE_RESIDUAL_TOL {
                    Ok((p.iter().copied().collect(), iter))
                } else {
                    Err(Error::OracleNotConverged { residual, iterations: iter })
                };
            }
        }
    }
    let residual = (&ca * &p - &ba).amax();
    if residual <= ORACLE_RESIDUAL_TOL {
        Ok((p.iter().copied().collect(), MAX_ITER))
    } else {
        Err(Error::OracleNotConverged {
            residual,
            iterations: MAX_ITER,
        })
    }
}
