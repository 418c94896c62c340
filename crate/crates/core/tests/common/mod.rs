#![allow(dead_code)]

use collective_core::{DMatrix, DVector, GaussianBelief, HmmModel, SimplexBelief};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Column-stochastic `rows × cols` matrix.
pub fn random_stochastic(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        let col = random_simplex(rng, rows);
        for r in 0..rows {
            m[(r, c)] = col[r];
        }
    }
    m
}

pub fn random_hmm(rng: &mut impl Rng, d: usize, m: usize) -> HmmModel {
    let prior = SimplexBelief::new(random_simplex(rng, d)).unwrap();
    HmmModel::new(random_stochastic(rng, d, d), random_stochastic(rng, m, d), prior).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn random_spd(rng: &mut impl Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, d, d, 1.0);
    &b * b.transpose() + DMatrix::identity(d, d) * floor
}

pub fn random_gaussian(rng: &mut impl Rng, d: usize) -> GaussianBelief {
    let m = DVector::from_fn(d, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    GaussianBelief::new(m, random_spd(rng, d, 0.1)).unwrap()
}

/// Textbook Kalman-Bucy Euler step, written out independently:
/// `K = P Hᵀ / r`, `m += A m dt + K (dz - H m dt)`,
/// `P += (A P + P Aᵀ + Q - P Hᵀ H P / r) dt`.
pub fn textbook_kalman_bucy(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: f64,
    dz: f64,
    dt: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = p * h.transpose() / r;
    let innov = dz - (h * m)[0] * dt;
    let m_new = m + (a * m) * dt + &k * innov;
    let p_new = p + (a * p + p * a.transpose() + q - &k * h * p) * dt;
    let p_sym = (&p_new + p_new.transpose()) * 0.5;
    (m_new, p_sym)
}

/// Textbook discrete Kalman predict + Joseph-form update.
pub fn textbook_kalman(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mp = a * m;
    let pp = a * p * a.transpose() + q;
    let s = h * &pp * h.transpose() + r;
    let k = &pp * h.transpose() * s.try_inverse().unwrap();
    let mu = &mp + &k * (z - h * &mp);
    let i_kh = DMatrix::identity(m.len(), m.len()) - &k * h;
    let pu = &i_kh * &pp * i_kh.transpose() + &k * r * k.transpose();
    (mu, pu)
}

/// Normalized forward algorithm for a single observed symbol path.
pub fn forward_filter(model: &HmmModel, symbols: &[usize]) -> Vec<Vec<f64>> {
    let d = model.num_states();
    let mut alpha: Vec<f64> = model.prior().as_slice().to_vec();
    let mut out = Vec::new();
    for &z in symbols {
        let mut next = vec![0.0; d];
        for x in 0..d {
            for xp in 0..d {
                next[x] += model.transition()[(x, xp)] * alpha[xp];
            }
            next[x] *= model.emission()[(z, x)];
        }
        let s: f64 = next.iter().sum();
        alpha = next.into_iter().map(|v| v / s).collect();
        out.push(alpha.clone());
    }
    out
}

/// Textbook Wonham filter Euler step for a rate matrix `rates[(to, from)]`.
pub fn textbook_wonham(pi: &[f64], rates: &DMatrix<f64>, h: &[f64], r: f64, dz: f64, dt: f64) -> Vec<f64> {
    let d = pi.len();
    let h_hat: f64 = pi.iter().zip(h).map(|(p, v)| p * v).sum();
    (0..d)
        .map(|x| {
            let mut gen = 0.0;
            for y in 0..d {
                if y != x {
                    gen += rates[(x, y)] * pi[y] - rates[(y, x)] * pi[x];
                }
            }
            pi[x] + gen * dt + pi[x] * (h[x] - h_hat) * (dz - h_hat * dt) / r
        })
        .collect()
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let s = 10;
    let scaled = m / f64::from(1 << s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..25 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}
