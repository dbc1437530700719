use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokcom::phy::Constellation;
use tokcom::semmap::{
    build_confusion, expected_distortion, optimize, psk_points, swap_delta, uniform_prior, AnnealSchedule,
    Assignment, ConfusionMethod, Matrix, Method, SemanticDistance,
};

const ANALYTIC: ConfusionMethod = ConfusionMethod::Analytic { fallback_seed: 1, fallback_trials: 100_000 };

fn random_embeddings(m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn cluster_embeddings(m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|t| {
            let centre = if t % 2 == 0 { [1.0, 0.0, 0.0, 0.0] } else { [-1.0, 0.0, 0.0, 0.0] };
            centre.iter().map(|c| c + rng.random_range(-0.05..0.05)).collect()
        })
        .collect()
}

#[test]
fn monte_carlo_agrees_with_analytic_for_qpsk() {
    let points = psk_points::<f64>(4);
    let analytic = build_confusion(&points, 8.0, ANALYTIC).unwrap().matrix;
    let mc = build_confusion(&points, 8.0, ConfusionMethod::MonteCarlo { seed: 3, trials: 1_000_000 }).unwrap().matrix;
    for i in 0..4 {
        let row_sum: f64 = mc.row(i).iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-3);
        // adjacent points only; the diagonal neighbour is below Monte-Carlo resolution
        for j in [(i + 1) % 4, (i + 3) % 4] {
            let (a, m) = (*analytic.get(i, j), *mc.get(i, j));
            assert!((a - m).abs() / a <= 0.10, "({i},{j}) analytic {a} mc {m}");
        }
    }
}

#[test]
fn clustered_tokens_on_16qam_beat_random_assignments() {
    let points = Constellation::<f64>::new(16).unwrap().points().to_vec();
    let conf = build_confusion(&points, 6.0, ANALYTIC).unwrap().matrix;
    let dist = SemanticDistance::from_embeddings(&cluster_embeddings(16, 4)).unwrap().matrix;
    let prior = uniform_prior::<f64>(16);
    let method = Method::Anneal { seed: 5, schedule: AnnealSchedule::default() };
    let best = optimize(&conf, &dist, &prior, method, 4).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pi: Vec<usize> = (0..16).collect();
    let trials = 10_000;
    let mut total = 0.0;
    for _ in 0..trials {
        pi.shuffle(&mut rng);
        total += expected_distortion(&Assignment::new(pi.clone()).unwrap(), &conf, &dist, &prior).unwrap();
    }
    let random_mean = total / trials as f64;
    assert!(best.distortion <= 0.8 * random_mean, "optimized {} random mean {random_mean}", best.distortion);
}

#[test]
fn more_restarts_never_hurt() {
    let points = psk_points::<f64>(8);
    let conf = build_confusion(&points, 3.0, ANALYTIC).unwrap().matrix;
    let dist = SemanticDistance::from_embeddings(&random_embeddings(8, 6, 12)).unwrap().matrix;
    let prior = uniform_prior::<f64>(8);
    let schedule = AnnealSchedule { initial_temp: 1.0, cooling: 0.99, steps: 300 };
    let mut last = f64::INFINITY;
    for restarts in 1..=8 {
        let d = optimize(&conf, &dist, &prior, Method::Anneal { seed: 9, schedule }, restarts).unwrap().distortion;
        assert!(d <= last, "restarts {restarts}: {d} > {last}");
        last = d;
    }
}

fn instance(m: usize, seed: u64) -> (Matrix<f64>, Matrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..m).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let conf = Matrix::from_rows(rows).unwrap();
    let dist = SemanticDistance::from_embeddings(&random_embeddings(m, 5, seed + 1)).unwrap().matrix;
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    (conf, dist, raw.into_iter().map(|p| p / sum).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swap_delta_matches_recomputation(m in 2usize..12, seed in any::<u64>(), a in 0usize..12, b in 0usize..12) {
        let (conf, dist, prior) = instance(m, seed);
        let (a, b) = (a % m, b % m);
        let mut pi: Vec<usize> = (0..m).collect();
        pi.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let before = expected_distortion(&Assignment::new(pi.clone()).unwrap(), &conf, &dist, &prior).unwrap();
        let delta = swap_delta(&pi, a, b, &conf, &dist, &prior);
        pi.swap(a, b);
        let after = expected_distortion(&Assignment::new(pi).unwrap(), &conf, &dist, &prior).unwrap();
        prop_assert!((after - before - delta).abs() < 1e-9);
    }

    #[test]
    fn optimize_never_worse_than_identity(m in 2usize..10, seed in any::<u64>(), greedy in any::<bool>()) {
        let (conf, dist, prior) = instance(m, seed);
        let identity = expected_distortion(&Assignment::identity(m), &conf, &dist, &prior).unwrap();
        let method = if greedy {
            Method::Greedy
        } else {
            Method::Anneal { seed, schedule: AnnealSchedule { initial_temp: 1.0, cooling: 0.98, steps: 200 } }
        };
        let out = optimize(&conf, &dist, &prior, method, 2).unwrap();
        prop_assert!(out.distortion <= identity);
        let recomputed = expected_distortion(&out.assignment, &conf, &dist, &prior).unwrap();
        prop_assert!((recomputed - out.distortion).abs() < 1e-9);
    }
}
