use lpvssa_core::covariances::SecondMomentSet;
use lpvssa_core::hankel::{
    build_hankel, build_shifted_hankel, search_selection, ColumnIndex, RowIndex,
};
use lpvssa_core::model::{random_model, RandomModelSpec};
use lpvssa_core::realization::{
    compose, lyapunov_residual, realize_deterministic, solve_scheduled_lyapunov,
    solve_stationary_lyapunov, stochastic_recursion, RecursionOptions, StochasticRealization,
};
use lpvssa_core::words::enumerate_words;
use lpvssa_core::{DMatrix, Error, MatrixSeries, SearchStrategy, Selection, Word};
use proptest::prelude::*;

fn spec(n_x: usize, n_y: usize, n_u: usize, n_mu: usize, radius: f64) -> RandomModelSpec {
    RandomModelSpec {
        n_x,
        n_y,
        n_u,
        n_mu,
        stability_radius: radius,
    }
}

fn arb_spec() -> impl Strategy<Value = RandomModelSpec> {
    (1usize..=4, 1usize..=2, 1usize..=2, 1usize..=3, 0.2f64..0.8)
        .prop_map(|(n_x, n_y, n_u, n_mu, r)| spec(n_x, n_y, n_u, n_mu, r))
}

fn max_error(a: &MatrixSeries, b: &MatrixSeries) -> f64 {
    a.iter()
        .map(|(w, m)| (m - b.get(w).unwrap()).amax())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ho_kalman_reproduces_random_models(s in arb_spec(), seed in any::<u64>()) {
        let model = random_model(&s, seed).unwrap();
        let det = model.deterministic_part();
        let n = s.n_x;
        let truth = det.markov_series(2 * n + 2).unwrap();
        let sel = search_selection(&truth, n, s.n_mu, SearchStrategy::Exhaustive, 1e-6);
        prop_assume!(sel.is_ok());
        let (hat, _) = realize_deterministic(&truth, &sel.unwrap(), s.n_mu, &Default::default()).unwrap();
        let err = max_error(&hat.markov_series(2 * n + 2).unwrap(), &truth);
        prop_assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn greedy_search_also_realizes(s in arb_spec(), seed in any::<u64>()) {
        let model = random_model(&s, seed).unwrap();
        let det = model.deterministic_part();
        let truth = det.markov_series(2 * s.n_x + 2).unwrap();
        let sel = search_selection(&truth, s.n_x, s.n_mu, SearchStrategy::Greedy, 1e-6);
        prop_assume!(sel.is_ok());
        let (hat, _) = realize_deterministic(&truth, &sel.unwrap(), s.n_mu, &Default::default()).unwrap();
        prop_assert!(max_error(&hat.markov_series(2 * s.n_x + 2).unwrap(), &truth) < 1e-8);
    }

    #[test]
    fn sub_markov_is_invariant_under_basis_change(s in arb_spec(), seed in any::<u64>(), t in prop::collection::vec(-1.0f64..1.0, 16)) {
        let model = random_model(&s, seed).unwrap();
        let n = s.n_x;
        let t = DMatrix::from_fn(n, n, |i, j| t[i * 4 + j]) + DMatrix::identity(n, n) * 3.0;
        let other = model.transformed(&t).unwrap();
        for w in enumerate_words(s.n_mu, 2 * n + 1) {
            prop_assert!((model.sub_markov(&w).unwrap() - other.sub_markov(&w).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn hankel_is_linear_in_the_series(vals in prop::collection::vec(-5.0f64..5.0, 2 * 63), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let words = enumerate_words(2, 5);
        let mut s1 = MatrixSeries::new(1, 1);
        let mut s2 = MatrixSeries::new(1, 1);
        let mut mix = MatrixSeries::new(1, 1);
        for (i, w) in words.iter().enumerate() {
            let (x, y) = (vals[2 * i], vals[2 * i + 1]);
            s1.insert(w.clone(), DMatrix::from_element(1, 1, x)).unwrap();
            s2.insert(w.clone(), DMatrix::from_element(1, 1, y)).unwrap();
            mix.insert(w.clone(), DMatrix::from_element(1, 1, a * x + b * y)).unwrap();
        }
        let sel = lpvssa_core::benchmark::deterministic_selection();
        let lhs = build_hankel(&mix, &sel).unwrap();
        let rhs = build_hankel(&s1, &sel).unwrap() * a + build_hankel(&s2, &sel).unwrap() * b;
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn lyapunov_residual_is_small(s in arb_spec(), seed in any::<u64>()) {
        let model = random_model(&s, seed).unwrap();
        let lam = DMatrix::identity(s.n_u, s.n_u);
        let p = solve_stationary_lyapunov(&model.a, &model.b, &lam, &model.weights).unwrap();
        prop_assert!(lyapunov_residual(&model.a, &model.b, &lam, &model.weights, &p) < 1e-10);
        for pi in &p {
            prop_assert!(lpvssa_core::linalg::min_symmetric_eigenvalue(pi) > -1e-10);
        }
    }

    #[test]
    fn composition_keeps_the_input_response(s in arb_spec(), seed in any::<u64>(), ns in 0usize..3) {
        let model = random_model(&s, seed).unwrap();
        let det = model.deterministic_part();
        let noise = random_model(&spec(ns.max(1), s.n_y, 1, s.n_mu, 0.5), seed ^ 1).unwrap();
        let stoch = if ns == 0 {
            StochasticRealization::empty(s.n_y, noise.q.clone())
        } else {
            StochasticRealization {
                a: noise.a.clone(),
                g: noise.k.clone(),
                c: noise.c.clone(),
                k: noise.k.clone(),
                q: noise.q.clone(),
                p: noise.a.clone(),
                iterations: 0,
                converged: true,
                increments: vec![],
                min_p_eigenvalue: 0.0,
            }
        };
        let composed = compose(&det, &stoch, &model.weights).unwrap();
        prop_assert_eq!(composed.n_x(), s.n_x + stoch.order());
        for w in enumerate_words(s.n_mu, 4) {
            prop_assert_eq!(composed.sub_markov(&w).unwrap(), det.sub_markov(&w).unwrap());
        }
    }

    #[test]
    fn recursion_iterates_stay_positive_semidefinite(s in arb_spec(), seed in any::<u64>()) {
        // Exact covariance data of the noise channel of a random innovation model.
        let model = random_model(&spec(s.n_x, s.n_y, 1, s.n_mu, s.stability_radius), seed).unwrap();
        let w = model.weights.as_slice();
        let forcing: Vec<_> = model.k.iter().zip(w).map(|(k, &p)| k * k.transpose() * p).collect();
        let p = solve_scheduled_lyapunov(&model.a, &forcing, &model.weights).unwrap();
        let s0 = &p[0];
        let g: Vec<_> = (0..s.n_mu)
            .map(|i| (&model.a[i] * s0 * model.c.transpose() + &model.k[i]) * w[i].sqrt())
            .collect();
        let t = &model.c * s0 * model.c.transpose() + DMatrix::identity(s.n_y, s.n_y);
        let t = SecondMomentSet::symmetrized(vec![t; s.n_mu]).unwrap();
        let res = stochastic_recursion(&model.a, &g, &model.c, &t, &model.weights, &RecursionOptions {
            max_iter: 400,
            tol: 1e-12,
            ..Default::default()
        });
        prop_assume!(res.is_ok());
        let res = res.unwrap();
        prop_assert!(res.min_p_eigenvalue >= -1e-10);
        for q in &res.q {
            prop_assert!(lpvssa_core::linalg::min_symmetric_eigenvalue(q) > 0.0);
        }
    }
}

#[test]
fn scalar_geometric_series_shift() {
    // M(1^k) = c a^{k-1}: every shifted Hankel equals a times the Hankel.
    let (a, c) = (0.7, 2.0);
    let mut series = MatrixSeries::new(1, 1);
    for w in enumerate_words(1, 6) {
        let v = if w.is_empty() {
            0.0
        } else {
            c * f64::powi(a, w.len() as i32 - 1)
        };
        series.insert(w, DMatrix::from_element(1, 1, v)).unwrap();
    }
    let sel = Selection::new(
        vec![
            RowIndex::new(Word::empty(), 1),
            RowIndex::new("1".parse().unwrap(), 1),
        ],
        vec![
            ColumnIndex::new(1, Word::empty(), 1),
            ColumnIndex::new(1, "1".parse().unwrap(), 1),
        ],
    )
    .unwrap();
    let h = build_hankel(&series, &sel).unwrap();
    let h1 = build_shifted_hankel(&series, &sel, 1).unwrap();
    assert!((h1 - h * a).amax() < 1e-15);
}

#[test]
fn search_reports_rank_deficiency_beyond_the_system_order() {
    let model = random_model(&spec(2, 1, 1, 2, 0.5), 3).unwrap();
    let truth = model.deterministic_part().markov_series(7).unwrap();
    for strategy in [SearchStrategy::Exhaustive, SearchStrategy::Greedy] {
        let err = search_selection(&truth, 3, 2, strategy, 1e-8).unwrap_err();
        assert!(
            matches!(
                err,
                Error::RankDeficient {
                    requested: 3,
                    achieved: 2
                }
            ),
            "{err}"
        );
    }
    assert!(search_selection(&truth, 2, 2, SearchStrategy::Exhaustive, 1e-8).is_ok());
}

#[test]
fn benchmark_selection_is_found_on_the_exact_series() {
    let det = lpvssa_core::benchmark::system().deterministic_part();
    let truth = det.markov_series(7).unwrap();
    let sel = search_selection(&truth, 3, 2, SearchStrategy::Exhaustive, 1e-8).unwrap();
    assert_eq!(sel.order(), 3);
    let h = build_hankel(&truth, &sel).unwrap();
    assert_eq!(lpvssa_core::linalg::numerical_rank(&h, 1e-8), 3);
}
