mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use procnoise::metrics::{
    average_sensitivity, column, correlation_matrix, histogram, input_specific_evasion, mean, pearson, percentile,
    success_stats, universal_evasion_rate, AttackOutcome, EvaluationGrid,
};
use procnoise::{NoiseKind, ParamSpace};

#[test]
fn grid_identities_exclusion_and_correlation() {
    let c = common::check_metrics();
    assert!(c.ok, "{}", c.detail);
}

#[test]
fn three_of_four_is_three_quarters() {
    assert_eq!(universal_evasion_rate(&[true, false, true, true]).unwrap(), 0.75);
}

#[test]
fn linear_relation_correlates_perfectly() {
    let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(pearson(&x, &[4.0; 10]), None);
}

#[test]
fn percentiles_interpolate() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(percentile(&v, 0.0), Some(1.0));
    assert_eq!(percentile(&v, 100.0), Some(4.0));
    assert_eq!(percentile(&v, 50.0), Some(2.5));
    assert_eq!(percentile(&[], 50.0), None);
}

fn random_grid(seed: u64, with_params: bool) -> EvaluationGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = ParamSpace::new(NoiseKind::Gabor, 32);
    let perts: Vec<_> = (0..5)
        .map(|i| {
            if with_params && i % 2 == 0 {
                (NoiseKind::Gabor, i, Some(space.decode(&space.search_space().sample(&mut rng))))
            } else {
                (NoiseKind::Random, i, None)
            }
        })
        .collect();
    let ids: Vec<String> = (0..7).map(|j| format!("img/{j}.png")).collect();
    let mut g = EvaluationGrid::pending(ids, &perts);
    for row in &mut g.rows {
        for c in &mut row.outcomes {
            *c = Some(rand::Rng::random_bool(&mut rng, 0.4));
        }
    }
    g
}

#[test]
fn grid_csv_round_trip() {
    let g = random_grid(1, true);
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let back = EvaluationGrid::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, g);
    assert!(back.is_complete());
}

#[test]
fn incomplete_grid_has_no_outcomes() {
    let mut g = random_grid(2, false);
    g.rows[3].outcomes[4] = None;
    assert!(g.outcomes().is_err());
    assert_eq!(g.cursor(), 3 * 7 + 4);
}

#[test]
fn malformed_csv_is_rejected() {
    let bad = "param_1,param_2,param_3,param_4,kind,seed,a\n,,,,random,1,2\n";
    assert!(EvaluationGrid::read_csv(bad.as_bytes()).is_err());
    let no_header = "a,b,c\n";
    assert!(EvaluationGrid::read_csv(no_header.as_bytes()).is_err());
}

fn bool_grid() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..12, 1usize..12).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(any::<bool>(), n), m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn universal_and_per_input_means_agree(g in bool_grid()) {
        let total = g.iter().flatten().filter(|&&b| b).count() as f64 / (g.len() * g[0].len()) as f64;
        let rows: Vec<f64> = g.iter().map(|r| universal_evasion_rate(r).unwrap()).collect();
        let cols: Vec<f64> = (0..g[0].len()).map(|j| average_sensitivity(&column(&g, j)).unwrap()).collect();
        prop_assert!((mean(&rows).unwrap() - total).abs() <= 1e-12);
        prop_assert!((mean(&cols).unwrap() - total).abs() <= 1e-12);
        let best_row = rows.iter().cloned().fold(0.0, f64::max);
        prop_assert!(input_specific_evasion(&g).unwrap() >= best_row);
    }

    #[test]
    fn input_specific_grows_with_rows(g in bool_grid(), extra in prop::collection::vec(any::<bool>(), 12)) {
        let before = input_specific_evasion(&g).unwrap();
        let mut more = g.clone();
        more.push(extra[..g[0].len()].to_vec());
        prop_assert!(input_specific_evasion(&more).unwrap() >= before);
    }

    #[test]
    fn misclassified_clean_inputs_do_not_move_stats(
        runs in prop::collection::vec((any::<bool>(), 0u64..100), 1..20),
        extra_success in any::<bool>(),
        extra_q in 0u64..100,
    ) {
        let mut outcomes: Vec<AttackOutcome> = runs
            .iter()
            .map(|&(success, queries)| AttackOutcome { clean_correct: true, success, queries })
            .collect();
        let before = success_stats(&outcomes).unwrap();
        outcomes.push(AttackOutcome { clean_correct: false, success: extra_success, queries: extra_q });
        prop_assert_eq!(success_stats(&outcomes).unwrap(), before);
    }

    #[test]
    fn histogram_counts_everything(values in prop::collection::vec(0.0..=1.0f64, 0..50)) {
        let h = histogram(&values, 0.05);
        prop_assert_eq!(h.len(), 20);
        prop_assert_eq!(h.iter().sum::<usize>(), values.len());
    }

    #[test]
    fn correlation_matrix_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).collect();
        let m = correlation_matrix(&cols).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(m[i][j], m[j][i]);
                if let Some(r) = m[i][j] {
                    prop_assert!((-1.0..=1.0).contains(&r));
                }
            }
        }
    }
}
