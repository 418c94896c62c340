mod common;

use collective_core::aggregate::{empirical_symbol_distribution, EmpiricalSymbolDistribution};
use collective_core::collective_hmm::{collective_update, filter_path, kl_oracle, predict, predicted_symbol_distribution, JointDistribution};
use collective_core::{DMatrix, HmmModel, SimplexBelief};
use common::{random_hmm, random_simplex, rng};
use proptest::prelude::*;
use rand::Rng;

fn bayes(prior: &SimplexBelief, model: &HmmModel, z: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..model.num_states())
        .map(|x| model.emission()[(z, x)] * prior.as_slice()[x])
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[test]
fn dirac_q_is_bayes_rule() {
    let mut r = rng(1);
    for _ in 0..100 {
        let (d, m) = (r.random_range(1..=5), r.random_range(1..=5));
        let model = random_hmm(&mut r, d, m);
        let prior = SimplexBelief::new(random_simplex(&mut r, d)).unwrap();
        let z = r.random_range(0..m);
        let post = collective_update(&prior, &model, &EmpiricalSymbolDistribution::dirac(m, z)).unwrap();
        for (a, b) in post.as_slice().iter().zip(bayes(&prior, &model, z)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn matches_oracle_on_random_instance() {
    let mut r = rng(2);
    let model = random_hmm(&mut r, 3, 3);
    let belief = SimplexBelief::new(random_simplex(&mut r, 3)).unwrap();
    let q = EmpiricalSymbolDistribution::from_probabilities(random_simplex(&mut r, 3)).unwrap();
    let proj = kl_oracle(&belief, &model, &q).unwrap();
    let post = collective_update(&predict(&belief, &model).unwrap(), &model, &q).unwrap();
    for (a, b) in post.as_slice().iter().zip(proj.joint.state_marginal()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn oracle_beats_random_feasible_points() {
    let mut r = rng(3);
    for _ in 0..10 {
        let (d, m) = (r.random_range(2..=4), r.random_range(2..=4));
        let model = random_hmm(&mut r, d, m);
        let belief = SimplexBelief::new(random_simplex(&mut r, d)).unwrap();
        let q = EmpiricalSymbolDistribution::from_probabilities(random_simplex(&mut r, m)).unwrap();
        let proj = kl_oracle(&belief, &model, &q).unwrap();
        for _ in 0..100 {
            // random joint with the same z-marginal, mixed into the optimum
            let other = DMatrix::from_fn(d, m, |_, _| 0.0);
            let mut other = other;
            for z in 0..m {
                let col = random_simplex(&mut r, d);
                for x in 0..d {
                    other[(x, z)] = q.as_slice()[z] * col[x];
                }
            }
            let lambda: f64 = r.random_range(0.001..1.0);
            let cand = JointDistribution::new(proj.joint.matrix() * (1.0 - lambda) + other * lambda).unwrap();
            assert!(cand.divergence_from(&proj.nominal) >= proj.divergence - 1e-12);
        }
    }
}

#[test]
fn single_agent_path_matches_forward_algorithm() {
    let mut r = rng(4);
    let model = random_hmm(&mut r, 4, 3);
    let symbols: Vec<usize> = (0..50).map(|_| r.random_range(0..3)).collect();
    let qs: Vec<_> = symbols
        .iter()
        .map(|&z| empirical_symbol_distribution(&[z], 3).unwrap())
        .collect();
    let ours = filter_path(&model, &qs).unwrap();
    let reference = common::forward_filter(&model, &symbols);
    for (a, b) in ours.iter().zip(&reference) {
        for (x, y) in a.as_slice().iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn single_step_path_is_one_bayes_step() {
    let mut r = rng(5);
    let model = random_hmm(&mut r, 3, 2);
    let out = filter_path(&model, &[EmpiricalSymbolDistribution::dirac(2, 1)]).unwrap();
    let predicted = predict(model.prior(), &model).unwrap();
    for (a, b) in out[0].as_slice().iter().zip(bayes(&predicted, &model, 1)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn uninformative_emission_gives_prediction_chain() {
    let mut r = rng(6);
    let transition = common::random_stochastic(&mut r, 3, 3);
    let model = HmmModel::new(transition, DMatrix::from_element(4, 3, 0.25), SimplexBelief::new(random_simplex(&mut r, 3)).unwrap()).unwrap();
    let qs = vec![EmpiricalSymbolDistribution::from_probabilities(vec![0.25; 4]).unwrap(); 10];
    let out = filter_path(&model, &qs).unwrap();
    let mut b = model.prior().clone();
    for post in &out {
        b = predict(&b, &model).unwrap();
        for (x, y) in post.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

fn instance() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=5, 1usize..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_preserves_simplex_and_matches_oracle((seed, d, m) in instance()) {
        let mut r = rng(seed);
        let model = random_hmm(&mut r, d, m);
        let belief = SimplexBelief::new(random_simplex(&mut r, d)).unwrap();
        // sparse q: drop some symbols entirely
        let mut w = random_simplex(&mut r, m);
        for v in w.iter_mut() {
            if r.random::<f64>() < 0.3 { *v = 0.0; }
        }
        if w.iter().all(|v| *v == 0.0) { w[0] = 1.0; }
        let s: f64 = w.iter().sum();
        let q = EmpiricalSymbolDistribution::from_probabilities(w.iter().map(|v| v / s).collect()).unwrap();
        let predicted = predict(&belief, &model).unwrap();
        let post = collective_update(&predicted, &model, &q).unwrap();
        prop_assert!((post.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(post.as_slice().iter().all(|p| *p >= 0.0));
        let proj = kl_oracle(&belief, &model, &q).unwrap();
        prop_assert!(proj.residual <= 1e-10);
        for (a, b) in post.as_slice().iter().zip(proj.joint.state_marginal()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn nominal_marginal_leaves_prediction((seed, d, m) in instance()) {
        let mut r = rng(seed);
        let model = random_hmm(&mut r, d, m);
        let predicted = SimplexBelief::new(random_simplex(&mut r, d)).unwrap();
        let q = EmpiricalSymbolDistribution::from_probabilities(predicted_symbol_distribution(&predicted, &model)).unwrap();
        let post = collective_update(&predicted, &model, &q).unwrap();
        for (a, b) in post.as_slice().iter().zip(predicted.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
