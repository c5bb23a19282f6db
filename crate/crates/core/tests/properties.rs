use proptest::prelude::*;

use symmdp::density::{fit_categorical, quantile_threshold, Lambda};
use symmdp::dyneval::tvd_distance;
use symmdp::envs::{Env, GridEnv};
use symmdp::harness::{parse_report_csv, report_to_csv, summarize, Report, SeedRow, Values};
use symmdp::space::{
    Cell, ContinuousSpaceMeta, DiscreteBatch, DiscreteSpaceMeta, EnvKind, GridAction, TransitionC,
    TransitionD,
};
use symmdp::symmetry::{builtin_catalog, force_augment_discrete, lookup, transform_discrete};

fn grid_transition(l: usize) -> impl Strategy<Value = TransitionD> {
    (0..l, 0..l, 0..4usize, 0..l, 0..l).prop_map(|(i, j, a, pi, pj)| {
        TransitionD::new(Cell::new(i, j), GridAction::ALL[a], Cell::new(pi, pj))
    })
}

fn cartpole_transition() -> impl Strategy<Value = TransitionC> {
    (
        prop::collection::vec(-3.0..3.0f64, 4),
        prop::bool::ANY,
        prop::collection::vec(-3.0..3.0f64, 4),
    )
        .prop_map(|(s, a, sp)| TransitionC::new(s, if a { 1.0 } else { -1.0 }, sp))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tvd_within_bounds(l in 1usize..6, ts in prop::collection::vec(grid_transition(5), 1..60)) {
        let meta = DiscreteSpaceMeta::new(l).unwrap();
        let ts: Vec<_> = ts
            .into_iter()
            .map(|t| TransitionD::new(
                Cell::new(t.s.i % l, t.s.j % l),
                t.a,
                Cell::new(t.s_next.i % l, t.s_next.j % l),
            ))
            .collect();
        let env = GridEnv::new(meta);
        let m = fit_categorical(&DiscreteBatch::new(meta, ts, 0).unwrap()).unwrap();
        let d = tvd_distance(&env, &m).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(d <= (meta.state_count() * 4) as f64);
    }

    #[test]
    fn consistent_batches_stay_consistent_under_true_symmetries(seed in 0u64..1000, n in 1usize..200) {
        let env = GridEnv::new(DiscreteSpaceMeta::new(7).unwrap());
        let b = env.collect(n, seed).unwrap();
        for name in ["TRSAI", "ODAI", "TI"] {
            let aug = force_augment_discrete(&b, &lookup(EnvKind::Grid, name).unwrap()).unwrap();
            prop_assert_eq!(&aug.transitions()[..n], b.transitions());
            prop_assert!(aug.iter().all(|t| env.replays(t)));
            prop_assert_eq!(aug.synthetic().iter().filter(|&&x| x).count(), n);
        }
    }

    #[test]
    fn grid_catalog_images_stay_on_the_board(t in grid_transition(9)) {
        let meta = DiscreteSpaceMeta::new(9).unwrap();
        let b = DiscreteBatch::new(meta, vec![t], 0).unwrap();
        for k in builtin_catalog(EnvKind::Grid) {
            let img = transform_discrete(&b, &k).unwrap();
            prop_assert!(meta.check_cell(img[0].s).is_ok() && meta.check_cell(img[0].s_next).is_ok());
        }
    }

    #[test]
    fn negation_transforms_are_involutions(t in cartpole_transition()) {
        let meta = ContinuousSpaceMeta::cartpole();
        for name in ["SAR", "SFI"] {
            let k = lookup(EnvKind::CartPole, name).unwrap();
            let twice = k.apply_continuous(&k.apply_continuous(&t, &meta).unwrap(), &meta).unwrap();
            prop_assert_eq!(twice, t.clone());
        }
    }

    #[test]
    fn quantile_gate_counts_ranks(mut values in prop::collection::vec(-50.0..50.0f64, 1..300), q in 0.0..0.99f64) {
        values.dedup();
        let lam = Lambda::new(values.clone()).unwrap();
        let theta = quantile_threshold(&lam, q).unwrap();
        let above = values.iter().filter(|&&v| v > theta).count();
        let below_or_eq = values.len() - above;
        prop_assert!(below_or_eq >= 1);
        prop_assert!(below_or_eq as f64 >= (q * values.len() as f64).floor());
        prop_assert!(lam.values().contains(&theta));
    }

    #[test]
    fn aggregates_match_recomputation_from_csv(
        cols in prop::collection::vec((0.0..1.0f64, -1e3..1e3f64, 0.0..1e4f64), 1..12),
        groups in 1usize..4,
    ) {
        let rows: Vec<SeedRow> = cols
            .iter()
            .enumerate()
            .map(|(i, &(nu, delta, raw))| SeedRow {
                env: EnvKind::Grid,
                transform: format!("K{}", i % groups),
                seed: i as u64,
                values: Values { nu_k: nu, theta: None, d_raw: Some(raw), d_aug: Some(raw - delta), delta: Some(delta) },
                metric: None,
                augmented: None,
            })
            .collect();
        let report = Report {
            env: EnvKind::Grid,
            estimator: symmdp::density::Estimator::Categorical,
            config_digest: String::new(),
            n_requested: cols.len(),
            completed_seeds: (0..cols.len() as u64).collect(),
            failures: vec![],
            incomplete: false,
            single_run: false,
            summaries: summarize(&rows),
            rows,
        };
        let parsed = parse_report_csv(&report_to_csv(&report)).unwrap();
        let recomputed = summarize(&parsed.rows);
        prop_assert_eq!(&recomputed, &report.summaries);
        for (s, (name, mean)) in recomputed.iter().zip(&parsed.means) {
            prop_assert_eq!(&s.transform, name);
            prop_assert_eq!(&s.mean, mean);
        }
    }
}

#[test]
fn collection_is_seed_determined() {
    for kind in [EnvKind::Grid, EnvKind::CartPole, EnvKind::Acrobot] {
        let env = Env::new(kind, 25).unwrap();
        let a = symmdp::batch_io::any_to_string(&env.collect(400, 5).unwrap());
        let b = symmdp::batch_io::any_to_string(&env.collect(400, 5).unwrap());
        assert_eq!(a, b);
    }
}
