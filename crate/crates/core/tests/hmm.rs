mod common;

use common::*;
use hmm_forecast::hmm::{
    deserialize, fit_baum_welch, fit_baum_welch_observed, forward_log_likelihood, forward_pass,
    log_gaussian_density, log_sum_exp, serialize, FitConfig, GaussianHmm,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn forward_matches_path_enumeration() {
    let mut rng = rng(7);
    for case in 0..120 {
        let n = 1 + case % 3;
        let dim = 1 + (case / 3) % 3;
        let t = 1 + case % 6;
        let model = random_hmm(n, dim, &mut rng);
        let obs = random_observations(t, dim, &mut rng);
        let fwd = forward_log_likelihood(&model, &obs).unwrap();
        let brute = brute_force_log_likelihood(&model, &obs);
        assert!((fwd - brute).abs() <= 1e-8, "case {case}: {fwd} vs {brute}");
    }
}

#[test]
fn two_state_three_step_toy() {
    let model = GaussianHmm::new(
        vec![0.6, 0.4],
        DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]),
        vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])],
        vec![DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 0.5)],
    )
    .unwrap();
    let obs = vec![vec![0.1], vec![1.9], vec![1.2]];
    let fwd = forward_log_likelihood(&model, &obs).unwrap();
    assert!((fwd - brute_force_log_likelihood(&model, &obs)).abs() < 1e-12);
}

#[test]
fn forward_pass_consistent_with_likelihood() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let n = rng.random_range(1..=4);
        let dim = rng.random_range(1..=3);
        let model = random_hmm(n, dim, &mut rng);
        let obs = random_observations(rng.random_range(1..=25), dim, &mut rng);
        let pass = forward_pass(&model, &obs).unwrap();
        let total = forward_log_likelihood(&model, &obs).unwrap();
        assert_eq!(pass.log_likelihood, total);
        assert_eq!(pass.log_alpha.len(), obs.len());
        assert!((log_sum_exp(pass.log_alpha.last().unwrap()) - total).abs() < 1e-12);
    }
}

#[test]
fn density_matches_inverse_determinant_oracle() {
    let mut rng = rng(3);
    for _ in 0..100 {
        let dim = rng.random_range(1..=4);
        let model = random_hmm(1, dim, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mean: Vec<f64> = model.mean(0).iter().copied().collect();
        let got = log_gaussian_density(&x, &mean, model.covariance(0)).unwrap();
        let want = density_oracle(&x, model.mean(0), model.covariance(0));
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn likelihood_invariant_under_relabeling() {
    let mut rng = rng(5);
    let perms: [&[usize]; 5] = [&[1, 0, 2], &[2, 1, 0], &[0, 2, 1], &[1, 2, 0], &[2, 0, 1]];
    for _ in 0..30 {
        let model = random_hmm(3, 2, &mut rng);
        let obs = random_observations(40, 2, &mut rng);
        let base = forward_log_likelihood(&model, &obs).unwrap();
        for p in perms {
            let permuted = model.permuted(p).unwrap();
            let ll = forward_log_likelihood(&permuted, &obs).unwrap();
            assert!((ll - base).abs() < 1e-10);
        }
    }
}

#[test]
fn long_sequences_do_not_underflow() {
    let mut rng = rng(9);
    let model = random_hmm(4, 3, &mut rng);
    let (_, obs) = model.sample(5000, &mut rng);
    let ll = forward_log_likelihood(&model, &obs).unwrap();
    assert!(ll.is_finite() && ll < -1000.0);
}

fn assert_stochastic(model: &GaussianHmm) {
    let s: f64 = model.start_prob().iter().sum();
    assert!((s - 1.0).abs() <= 1e-8);
    assert!(model.start_prob().iter().all(|p| *p >= 0.0));
    for row in model.transition().row_iter() {
        assert!((row.sum() - 1.0).abs() <= 1e-8);
        assert!(row.iter().all(|p| *p >= 0.0));
    }
}

#[test]
fn em_trace_is_monotone_and_parameters_stay_valid() {
    let mut rng = rng(21);
    for trial in 0..8 {
        let truth = random_hmm(3, 2, &mut rng);
        let (_, obs) = truth.sample(300, &mut rng);
        let config = FitConfig { seed: trial, max_iterations: 300, ..Default::default() };
        let mut iterations_seen = 0;
        let (model, report) = fit_baum_welch_observed(&obs, 3, &config, |_, m| {
            iterations_seen += 1;
            assert_stochastic(m);
        })
        .unwrap();
        assert_eq!(iterations_seen, report.iterations_run + 1);
        assert_eq!(report.log_likelihood_trace.len(), report.iterations_run + 1);
        for w in report.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "trace decreased: {} -> {}", w[0], w[1]);
        }
        let final_ll = forward_log_likelihood(&model, &obs).unwrap();
        assert!((final_ll - report.final_log_likelihood()).abs() < 1e-9);
    }
}

#[test]
fn single_state_recovers_sample_mean() {
    let mut rng = rng(13);
    let truth = GaussianHmm::new(
        vec![1.0],
        DMatrix::identity(1, 1),
        vec![DVector::from_vec(vec![3.0, -1.0])],
        vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])],
    )
    .unwrap();
    let (_, obs) = truth.sample(400, &mut rng);
    let (model, _) = fit_baum_welch(&obs, 1, &FitConfig::default()).unwrap();
    for k in 0..2 {
        let sample_mean = obs.iter().map(|o| o[k]).sum::<f64>() / obs.len() as f64;
        let sample_var = obs.iter().map(|o| (o[k] - sample_mean).powi(2)).sum::<f64>() / obs.len() as f64;
        let stderr = (sample_var / obs.len() as f64).sqrt();
        assert!((model.mean(0)[k] - sample_mean).abs() < 3.0 * stderr);
    }
    assert_eq!(model.transition()[(0, 0)], 1.0);
}

#[test]
fn recovers_well_separated_means() {
    let truth = GaussianHmm::new(
        vec![0.5, 0.5],
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
        vec![DVector::from_vec(vec![-10.0]), DVector::from_vec(vec![10.0])],
        vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)],
    )
    .unwrap();
    let (_, obs) = truth.sample(500, &mut rng(17));
    let (model, report) = fit_baum_welch(&obs, 2, &FitConfig { seed: 4, ..Default::default() }).unwrap();
    assert!(report.converged);
    let (lo, hi) = if model.mean(0)[0] < model.mean(1)[0] { (0, 1) } else { (1, 0) };
    assert!((model.mean(lo)[0] + 10.0).abs() < 0.5);
    assert!((model.mean(hi)[0] - 10.0).abs() < 0.5);
}

#[test]
fn fitting_is_deterministic_per_seed() {
    let mut rng = rng(23);
    let truth = random_hmm(3, 3, &mut rng);
    let (_, obs) = truth.sample(250, &mut rng);
    let cfg = FitConfig { seed: 99, ..Default::default() };
    let a = fit_baum_welch(&obs, 3, &cfg).unwrap();
    let b = fit_baum_welch(&obs, 3, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(serialize(&a.0, Some(&cfg)), serialize(&b.0, Some(&cfg)));
}

#[test]
fn document_round_trip_preserves_scores() {
    let mut rng = rng(31);
    let model = random_hmm(4, 3, &mut rng);
    let obs = random_observations(30, 3, &mut rng);
    let before = forward_log_likelihood(&model, &obs).unwrap();
    let stored = deserialize(&serialize(&model, None)).unwrap();
    assert_eq!(stored.model, model);
    assert_eq!(forward_log_likelihood(&stored.model, &obs).unwrap(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn document_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..5, dim in 1usize..4) {
        let model = random_hmm(n, dim, &mut rng(seed));
        let back = deserialize(&serialize(&model, Some(&FitConfig { seed, ..Default::default() }))).unwrap();
        for (a, b) in model.start_prob().iter().zip(back.model.start_prob()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in model.transition().iter().zip(back.model.transition().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for j in 0..n {
            for (a, b) in model.covariance(j).iter().zip(back.model.covariance(j).iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in model.mean(j).iter().zip(back.model.mean(j).iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        prop_assert_eq!(back.fit_config.unwrap().seed, seed);
    }
}
