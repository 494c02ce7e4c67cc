use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array1;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sccd_core::adapt::{draw_slot, evaluation, initial_num, search_num, SearchParams, SearchReturn};
use sccd_core::solver::soft_threshold;
use sccd_core::topology::{generate_erdos_renyi, laplacian_lambda_max, Graph};

proptest! {
    #[test]
    fn soft_threshold_is_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, t in 0.0f64..5.0) {
        prop_assert!((soft_threshold(a, t) - soft_threshold(b, t)).abs() <= (a - b).abs() + 1e-12);
        prop_assert!(soft_threshold(a, t).abs() <= a.abs());
    }

    #[test]
    fn search_counts_descend_and_stay_positive(
        start in 1usize..30,
        stepsize in 1usize..4,
        gammas in prop::collection::vec(1e-6f64..10.0, 40),
        literal in any::<bool>(),
    ) {
        let params = SearchParams {
            stepsize,
            c_cmp: 1.0,
            c_cmm: 0.5,
            mode: if literal { SearchReturn::Literal } else { SearchReturn::Best },
        };
        let out = search_num(start, &params, |num| Ok((gammas[num % gammas.len()], Array1::zeros(1)))).unwrap();
        prop_assert!(out.attempts.windows(2).all(|w| w[1].num <= w[0].num));
        prop_assert!(out.attempts.iter().all(|a| a.num >= 1 && a.num <= start));
        prop_assert!(out.attempts.iter().any(|a| a.num == out.num));
        if !literal {
            let best = out.attempts.iter().map(|a| a.eval).fold(f64::INFINITY, f64::min);
            prop_assert!(out.attempts.iter().any(|a| a.num == out.num && a.eval == best));
        }
        for a in &out.attempts {
            prop_assert_eq!(a.eval, evaluation(a.s, a.num, a.gamma, 1.0, 0.5));
        }
    }

    #[test]
    fn initial_count_is_within_degree(round in 0usize..10, degree in 1usize..40, prev in 0usize..60) {
        let n = initial_num(round, degree, prev);
        prop_assert!(n >= 1 && n <= degree);
    }

    #[test]
    fn draws_land_on_positive_weights(raw in prop::collection::vec(0.0f64..1.0, 1..12), seed in any::<u64>()) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let s = draw_slot(&w, &mut rng);
            prop_assert!(s < w.len() && w[s] > 0.0);
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_spectrum_is_bounded(n in 3usize..20, p in 0.3f64..1.0, seed in any::<u64>()) {
        let g: Graph = generate_erdos_renyi(n, p, seed).unwrap();
        prop_assert!(g.is_connected());
        let mut y = vec![0.0; n];
        g.laplacian_apply(&vec![1.0; n], &mut y);
        prop_assert!(y.iter().all(|v| v.abs() < 1e-12));
        let lm = laplacian_lambda_max(&g);
        let dmax = g.max_degree() as f64;
        prop_assert!(lm <= 2.0 * dmax + 1e-4);
        prop_assert!(lm >= dmax + 1.0 - 1e-4);
        let dense = DMatrix::from_row_slice(n, n, &g.laplacian_dense());
        let oracle = SymmetricEigen::new(dense).eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        prop_assert!((lm - oracle).abs() <= 1e-6 * oracle);
    }
}
