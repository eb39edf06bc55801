//! Filter, smoother, and likelihood checked against the dense
//! joint-Gaussian reference on randomized small instances.

use lvssm_core::kalman::{kalman_filter, rts_smoother};
use lvssm_core::model::ParamSet;
use lvssm_core::oracle::ReferenceSsm;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng, m: usize, n: usize, p: usize) -> ParamSet {
    let mut transition = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.6..0.6));
    // Keep the dynamics comfortably stable.
    transition *= 0.8;
    let spd = |rng: &mut ChaCha8Rng, k: usize| -> DMatrix<f64> {
        let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(k, k) * 0.3
    };
    ParamSet {
        transition,
        input_effect: DMatrix::from_fn(m, p, |_, _| rng.gen_range(-0.8..0.8)),
        loading: DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.2..1.2)),
        direct_effect: DMatrix::from_fn(n, p, |_, _| rng.gen_range(-0.8..0.8)),
        state_noise: spd(rng, m),
        obs_noise: spd(rng, n),
        init_mean: DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
        init_cov: spd(rng, m),
    }
}

struct Instance {
    params: ParamSet,
    y: DMatrix<f64>,
    u: Option<DMatrix<f64>>,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=2);
    let n = rng.gen_range(1..=3);
    let p = rng.gen_range(0..=2);
    let steps = rng.gen_range(2..=20);
    let params = random_params(&mut rng, m, n, p);
    let u = if p > 0 {
        Some(DMatrix::from_fn(steps, p, |_, _| rng.gen_range(-1.0..1.0)))
    } else {
        None
    };
    let mut y = DMatrix::from_fn(steps, n, |_, _| rng.gen_range(-2.0..2.0));
    // A third of the instances get missing entries; keep at least one
    // observed entry overall so the likelihood is non-trivial.
    if seed % 3 == 0 {
        for t in 0..steps {
            for j in 0..n {
                if rng.gen_bool(0.25) {
                    y[(t, j)] = f64::NAN;
                }
            }
        }
        if y.iter().all(|v| v.is_nan()) {
            y[(0, 0)] = 0.5;
        }
    }
    Instance { params, y, u }
}

#[test]
fn likelihood_matches_joint_gaussian() {
    for seed in 0..100u64 {
        let inst = random_instance(seed);
        let filter = kalman_filter(&inst.params, &inst.y, inst.u.as_ref()).unwrap();
        let reference = ReferenceSsm::new(&inst.params, &inst.y, inst.u.as_ref());
        let expect = reference.minus_two_log_likelihood();
        assert!(
            (filter.minus_two_ll - expect).abs() < 1e-8,
            "seed {seed}: {} vs {}",
            filter.minus_two_ll,
            expect
        );
    }
}

#[test]
fn filter_and_smoother_means_match_conditional_means() {
    for seed in 0..100u64 {
        let inst = random_instance(seed);
        let filter = kalman_filter(&inst.params, &inst.y, inst.u.as_ref()).unwrap();
        let smooth = rts_smoother(&inst.params, &filter).unwrap();
        let reference = ReferenceSsm::new(&inst.params, &inst.y, inst.u.as_ref());
        for t in 0..filter.len() {
            let f_ref = reference.filtered_mean(t);
            let s_ref = reference.smoothed_mean(t);
            assert!(
                (&filter.filtered_means[t] - &f_ref).amax() < 1e-8,
                "seed {seed} t={t} filtered: {:?} vs {:?}",
                filter.filtered_means[t].as_slice(),
                f_ref.as_slice()
            );
            assert!(
                (&smooth.smoothed_means[t] - &s_ref).amax() < 1e-8,
                "seed {seed} t={t} smoothed"
            );
        }
        let init_ref = reference.smoothed_init_mean();
        assert!((&smooth.init_mean_smoothed - &init_ref).amax() < 1e-8);
    }
}

#[test]
fn smoothed_covariances_and_lag_one_match_reference() {
    for seed in 0..60u64 {
        let inst = random_instance(seed);
        let filter = kalman_filter(&inst.params, &inst.y, inst.u.as_ref()).unwrap();
        let smooth = rts_smoother(&inst.params, &filter).unwrap();
        let reference = ReferenceSsm::new(&inst.params, &inst.y, inst.u.as_ref());
        for t in 0..filter.len() {
            let cov_ref = reference.smoothed_cross_cov(t + 1, t + 1);
            assert!(
                (&smooth.smoothed_covs[t] - &cov_ref).amax() < 1e-8,
                "seed {seed} t={t} smoothed cov"
            );
            // lag_one_covs[t] = Cov(x_{t+1}, x_t | all data).
            let lag_ref = reference.smoothed_cross_cov(t + 1, t);
            assert!(
                (&smooth.lag_one_covs[t] - &lag_ref).amax() < 1e-8,
                "seed {seed} t={t} lag-one cov:\n{}\nvs\n{}",
                smooth.lag_one_covs[t],
                lag_ref
            );
        }
        let init_cov_ref = reference.smoothed_cross_cov(0, 0);
        assert!((&smooth.init_cov_smoothed - &init_cov_ref).amax() < 1e-8);
    }
}
