use pear::datagen::{generate, GenConfig};
use pear::linalg::dot;
use pear::problems::{
    build_grid_lp, exact_grid_path, exact_knapsack, regret, Benchmark, GridPathProblem, KnapsackProblem, MvoProblem,
    Orientation,
};
use pear::solver::{solve, SolveSettings, SolveStatus};
use pear::verify::{enumerate_grid_paths, enumerate_knapsack};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn smoothed_path_rounds_to_exact_path() {
    let g = GridPathProblem::default();
    let paths = enumerate_grid_paths(&g);
    for lambda in [0.1, 0.05, 0.01] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut agree = 0;
        for _ in 0..500 {
            let costs: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
            let inst = build_grid_lp(&g, lambda).with_cost(costs.clone());
            let sol = solve(&inst, &SolveSettings::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Solved);
            // Every path has the same length, so the nearest vertex maximizes overlap.
            let nearest = paths
                .iter()
                .max_by(|a, b| dot(&sol.z, a).total_cmp(&dot(&sol.z, b)))
                .unwrap();
            if *nearest == exact_grid_path(&g, &costs).unwrap().z {
                agree += 1;
            }
        }
        assert!(agree >= 475, "lambda {lambda}: only {agree}/500 rounded QP paths match the DP");
    }
}

#[test]
fn grid_dp_is_exhaustively_optimal() {
    for orientation in [Orientation::Forward, Orientation::Cross] {
        let g = GridPathProblem::new(5, 5, orientation);
        let paths = enumerate_grid_paths(&g);
        assert_eq!(paths.len(), 70);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            // Signed costs exercise the DAG recursion beyond the benchmark range.
            let costs: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..2.0)).collect();
            let dp = exact_grid_path(&g, &costs).unwrap();
            let best = paths.iter().map(|z| dot(&costs, z)).fold(f64::INFINITY, f64::min);
            assert!((dp.objective_value - best).abs() < 1e-12);
            assert!(paths.contains(&dp.z));
        }
    }
}

#[test]
fn grid_ties_pick_lexicographically_smallest_path() {
    let g = GridPathProblem::default();
    let dp = exact_grid_path(&g, &[1.0; 40]).unwrap();
    // All 70 paths tie; enumeration yields them in lexicographic order.
    assert_eq!(dp.z, enumerate_grid_paths(&g)[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knapsack_dp_matches_enumeration(
        n in 1usize..=15,
        seed in any::<u64>(),
        ratio in 0.05f64..0.95,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = KnapsackProblem::random(n, ratio, &mut rng).unwrap();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..10.0)).collect();
        let dp = exact_knapsack(&p, &values).unwrap();
        let (_, best) = enumerate_knapsack(&p, &values);
        prop_assert!((dp.objective_value - best).abs() < 1e-9);
        let used: f64 = dp.z.iter().zip(&p.weights).map(|(z, w)| z * *w as f64).sum();
        prop_assert!(used <= p.capacity() + 1e-9);
        prop_assert!(dp.z.iter().zip(&values).all(|(z, v)| *z == 0.0 || *v > 0.0));
    }

    #[test]
    fn regret_is_non_negative(seed in any::<u64>(), task in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bench = match task {
            0 => Benchmark::ShortestPath(GridPathProblem::default()),
            1 => Benchmark::Knapsack(KnapsackProblem::random(30, 0.5, &mut rng).unwrap()),
            _ => Benchmark::Mvo(MvoProblem::random(8, 2.0, 0.0, &mut rng).unwrap()),
        };
        let d = bench.cost_dim();
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
        let pred: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..3.0)).collect();
        let opt = bench.decide_and_score(&truth, &truth).unwrap();
        let got = bench.decide_and_score(&pred, &truth).unwrap();
        prop_assert!(regret(&opt, &got) >= -1e-9);
        prop_assert!(regret(&opt, &opt).abs() <= 1e-12);
    }

    #[test]
    fn generation_is_deterministic_and_positive(seed in any::<u64>(), deg in 1u32..=8, noise in 0.0f64..0.9) {
        let cfg = GenConfig::new(7, deg, noise, seed).with_sizes([20, 5, 5]);
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(&a, &generate(&cfg).unwrap());
        prop_assert!(a.c.as_slice().iter().all(|&c| c >= 1.0 - noise));
    }
}

#[test]
fn cost_spread_grows_with_degree() {
    let var = |deg| {
        let ds = generate(&GenConfig::new(40, deg, 0.0, 0).with_sizes([2000, 0, 0])).unwrap();
        let xs = ds.c.as_slice();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let v: Vec<f64> = [2, 4, 6, 8].into_iter().map(var).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
}
