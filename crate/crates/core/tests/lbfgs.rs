mod common;

use std::cell::Cell;
use std::convert::Infallible;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use procnoise::lbfgs::{fd_gradient, minimize, Bounds, LbfgsConfig, LbfgsError};
use procnoise::search::Evaluation;
use procnoise::QueryLedger;

fn plain(f: impl Fn(&[f64]) -> f64) -> impl FnMut(&[f64]) -> Result<Evaluation, Infallible> {
    move |x| Ok(Evaluation::value(f(x)))
}

fn rosenbrock(x: &[f64]) -> f64 {
    // shifted into the unit box, minimum at (0.75, 0.75)
    let (a, b) = (2.0 * x[0] - 0.5, 2.0 * x[1] - 0.5);
    (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
}

#[test]
fn box_quadratic_converges() {
    let c = common::check_lbfgs();
    assert!(c.ok, "{}", c.detail);
}

#[test]
fn fd_gradient_of_sum_of_squares() {
    let b = Bounds {
        lower: vec![-2.0; 3],
        upper: vec![2.0; 3],
    };
    let ledger = QueryLedger::new(6);
    let mut f = plain(|x| x.iter().map(|v| v * v).sum());
    let g = fd_gradient(&mut f, &[1.0, -0.5, 0.0], &b, 1e-4 / 4.0, &ledger).unwrap();
    for (gi, want) in g.iter().zip([2.0, -1.0, 0.0]) {
        assert!((gi - want).abs() < 1e-6, "{gi}");
    }
    assert_eq!(ledger.remaining(), 0);
}

#[test]
fn fd_gradient_refuses_partial_budget() {
    let ledger = QueryLedger::new(7);
    let calls = Cell::new(0);
    let mut f = |_: &[f64]| -> Result<Evaluation, Infallible> {
        calls.set(calls.get() + 1);
        Ok(Evaluation::value(0.0))
    };
    let r = fd_gradient(&mut f, &[0.5; 4], &Bounds::unit(4), 0.01, &ledger);
    assert!(matches!(r, Err(LbfgsError::BudgetExhausted(_))));
    assert_eq!(calls.get(), 0);
}

#[test]
fn fd_gradient_at_bounds_stays_inside() {
    let ledger = QueryLedger::new(4);
    let mut seen = Vec::new();
    let mut f = |x: &[f64]| -> Result<Evaluation, Infallible> {
        seen.push(x.to_vec());
        Ok(Evaluation::value(x[0] + 3.0 * x[1]))
    };
    let g = fd_gradient(&mut f, &[0.0, 1.0], &Bounds::unit(2), 0.05, &ledger).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
    assert!(seen.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn rosenbrock_incumbent_never_worsens() {
    let ledger = QueryLedger::new(400);
    let mut f = plain(rosenbrock);
    let cfg = LbfgsConfig {
        fd_step: 1e-4,
        ..Default::default()
    };
    let out = minimize(&mut f, &[0.1, 0.9], &Bounds::unit(2), &cfg, &ledger, &mut ChaCha8Rng::seed_from_u64(2))
        .unwrap();
    let start = rosenbrock(&[0.1, 0.9]);
    assert!(out.best_value.unwrap() < start);
    assert!(out.trace.windows(2).all(|w| w[1].incumbent <= w[0].incumbent));
    assert!(out.best_value.unwrap() < 1e-2, "{:?}", out.best_value);
}

#[test]
fn replay_with_same_seed() {
    let run = |seed| {
        let ledger = QueryLedger::new(90);
        let mut f = plain(|x| x.iter().map(|v| (5.0 * v).sin()).sum());
        minimize(&mut f, &[0.5; 3], &Bounds::unit(3), &LbfgsConfig::default(), &ledger, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .trace
    };
    assert_eq!(run(4), run(4));
}

#[test]
fn early_stop_is_honoured() {
    let ledger = QueryLedger::new(100);
    let mut f = |x: &[f64]| -> Result<Evaluation, Infallible> {
        let v = x[0];
        Ok(if v < 0.5 { Evaluation::stop(v) } else { Evaluation::value(v) })
    };
    let out = minimize(&mut f, &[0.9], &Bounds::unit(1), &LbfgsConfig::default(), &ledger, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    assert!(out.stopped);
    assert!(out.best_value.unwrap() < 0.5);
    assert_eq!(out.trace.len() as u64, ledger.spent());
    assert!(ledger.spent() < 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_and_monotone_incumbent(seed in any::<u64>(), budget in 0u64..120, dim in 1usize..5) {
        let ledger = QueryLedger::new(budget);
        let mut f = plain(|x| x.iter().enumerate().map(|(i, v)| (3.0 * v + i as f64).cos() + v * v).sum());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = Bounds::unit(dim).sample(&mut rng);
        let out = minimize(&mut f, &x0, &Bounds::unit(dim), &LbfgsConfig::default(), &ledger, &mut rng).unwrap();
        prop_assert!(ledger.spent() <= budget);
        // the only unused budget is a gradient that could not be afforded
        prop_assert!(budget - ledger.spent() < 2 * dim as u64);
        prop_assert_eq!(out.trace.len() as u64, ledger.spent());
        let mut inc = f64::INFINITY;
        for t in &out.trace {
            inc = inc.min(t.value);
            prop_assert_eq!(t.incumbent, inc);
            prop_assert!(t.x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
