use collective_core::Error;
use collective_fpf::config::BlowUpPolicy;
use collective_fpf::harness::{change_n_errors, finite_state_errors, run_change_m, run_change_n, run_finite_state, HarnessError};
use collective_fpf::io::write_results_csv;
use collective_fpf::ExperimentConfig;

fn quick() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.experiment.horizon = 1.0;
    c.experiment.num_seeds = 3;
    c.experiment.m_values = vec![1, 4];
    c.experiment.n_values = vec![20, 40];
    c.finite.horizon = 0.5;
    c.finite.n_values = vec![50, 100];
    c
}

#[test]
fn single_agent_errors_vanish() {
    let mut c = quick();
    c.experiment.m_values = vec![1];
    let out = run_change_m(&c).unwrap();
    assert!(out.runs.iter().all(|r| r.mean_err <= 1e-10 && r.var_err <= 1e-10));
}

#[test]
fn noiseless_population_agrees() {
    // every agent follows the same deterministic path; both filters keep a
    // zero covariance and the same mean
    let mut c = quick();
    c.model.process_noise = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    c.model.prior_cov = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    c.model.obs_noise_var = 100.0;
    c.experiment.m_values = vec![5, 20];
    let out = run_change_m(&c).unwrap();
    assert!(out.runs.iter().all(|r| r.mean_err < 1e-6), "{:?}", out.runs);
}

#[test]
fn rows_sorted_by_sweep_then_seed() {
    let out = run_change_n(&quick()).unwrap();
    let keys: Vec<(usize, usize)> = out.runs.iter().map(|r| (r.sweep, r.seed)).collect();
    assert_eq!(keys, vec![(20, 0), (20, 1), (20, 2), (40, 0), (40, 1), (40, 2)]);
    let summary = out.summary();
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0].seeds, 3);
    assert!(summary.iter().all(|r| r.mean_err >= 0.0 && r.var_err >= 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let csv = |c: &ExperimentConfig| {
        let mut buf = Vec::new();
        write_results_csv(&run_finite_state(c).unwrap().runs, false, &mut buf).unwrap();
        buf
    };
    let c = quick();
    assert_eq!(csv(&c), csv(&c));
    let mut other = quick();
    other.experiment.seed = 1;
    assert_ne!(csv(&c), csv(&other));
}

#[test]
fn particle_prefix_still_changes_errors() {
    let c = quick();
    let a = change_n_errors(&c, 50, 0).unwrap();
    let b = change_n_errors(&c, 100, 0).unwrap();
    assert_ne!(a, b);
}

#[test]
fn static_chain_keeps_sampling_error() {
    let mut c = quick();
    c.finite.rates = vec![vec![0.0; 3]; 3];
    c.finite.obs_values = vec![1.0; 3];
    let n = 400;
    let (tv, _) = finite_state_errors(&c, n, 0).unwrap();
    // only the initial multinomial draw separates the two
    assert!(tv > 0.0 && tv < 4.0 / (n as f64).sqrt(), "TV {tv}");
}

#[test]
fn doubling_particles_usually_helps() {
    let mut c = ExperimentConfig::default();
    c.finite.n_values = vec![500, 1000];
    let out = run_finite_state(&c).unwrap();
    let (small, large) = out.runs.split_at(10);
    let better = small.iter().zip(large).filter(|(s, l)| l.mean_err < s.mean_err).count();
    // a paired comparison per seed
    assert!(better >= 6, "{better}/10");
}

fn unstable() -> ExperimentConfig {
    let mut c = quick();
    c.model.drift = vec![vec![-150.0, 0.0], vec![0.0, -150.0]];
    c.experiment.dt = 0.02;
    c.experiment.m_values = vec![3];
    c
}

#[test]
fn blow_up_aborts_with_context() {
    let err = run_change_m(&unstable()).unwrap_err();
    let HarnessError::Run(f) = err else { panic!("expected a run failure") };
    assert!(f.is_blow_up());
    assert_eq!(f.sweep, 3);
    assert!(matches!(f.source, Error::AtStep { .. }));
    let msg = f.to_string();
    assert!(msg.contains("change-m") && msg.contains("sweep value 3") && msg.contains("seed 0") && msg.contains("at step"), "{msg}");
}

#[test]
fn blow_up_recorded_when_asked() {
    let mut c = unstable();
    c.experiment.on_blowup = BlowUpPolicy::Record;
    let out = run_change_m(&c).unwrap();
    assert!(out.runs.is_empty());
    assert_eq!(out.blowups.len(), 3);
}

#[test]
fn invalid_config_rejected_before_running() {
    let mut c = quick();
    c.experiment.num_seeds = 0;
    assert!(matches!(run_change_m(&c), Err(HarnessError::Config(_))));
}
