use std::sync::Arc;

use blhedge_core::analytic::{bs_call, expected_max};
use blhedge_core::mc::{collect_paths, mc_price_path, MCSpec, MaxMonitoring, PathModel, PathOption};
use blhedge_core::pathdep::{
    asian_basket_from_multi_lookback, asian_from_parisian_grid, asian_sensitivities, conditional_price, default_strike_steps,
    lookback_from_barrier_integral, parisian_lower_bound, price_h_of_terminal_and_max, verify_barrier_lookback_strike, BasketGrid,
    PathEvent, Thm23Grid,
};
use blhedge_core::payoff::BlackBoxPayoff;

fn gbm(steps: usize) -> PathModel {
    PathModel::single(100.0, 0.2, 1.0, steps).unwrap()
}

#[test]
fn call_through_paths_matches_black_scholes() {
    let r = mc_price_path(&gbm(4), &PathOption::Call { k: 100.0 }, &MCSpec::new(400_000, 3)).unwrap();
    let bs = bs_call(100.0, 100.0, 0.2);
    assert!((r.estimate - bs).abs() <= 3.0 * r.standard_error);
    let l = mc_price_path(&gbm(50), &PathOption::Lookback { k: 0.0 }, &MCSpec::new(20_000, 3)).unwrap();
    assert!(l.estimate >= 100.0);
}

#[test]
fn pathwise_dominance_has_no_violations() {
    let pm = gbm(100);
    let v = collect_paths(&pm, &MCSpec::new(20_000, 6), |_, p| {
        let call = PathOption::Call { k: 100.0 }.payoff(p);
        let look = PathOption::Lookback { k: 100.0 }.payoff(p);
        let bar = PathOption::BarrierUpIn { h: 115.0, k: 100.0 }.payoff(p);
        let asian = PathOption::Asian { k: 95.0 }.payoff(p);
        let grid = parisian_lower_bound(p, 95.0, 10, 100.0);
        !(look >= call && call >= 0.0 && bar <= call && grid <= asian)
    })
    .unwrap();
    assert_eq!(v.iter().filter(|b| **b).count(), 0);
}

#[test]
fn barrier_slope_limits() {
    let pm = gbm(50);
    let s = MCSpec::new(20_000, 9);
    let r = verify_barrier_lookback_strike(&pm, 1e-6, &default_strike_steps(100.0), &s).unwrap();
    assert!((r.lhs + 1.0).abs() < 1e-9 && (r.rhs + 1.0).abs() < 1e-9, "{} {}", r.lhs, r.rhs);
    assert!(r.pass);
    let far = 100.0 * (10.0f64 * 0.2).exp();
    let r = verify_barrier_lookback_strike(&pm, far, &default_strike_steps(100.0), &s).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert!(verify_barrier_lookback_strike(&pm, 0.0, &[0.1], &s).is_err());
    assert!(verify_barrier_lookback_strike(&pm, 120.0, &[0.1, 0.2], &s).is_err());
}

#[test]
fn barrier_slope_generic_case() {
    let r = verify_barrier_lookback_strike(&gbm(100), 120.0, &default_strike_steps(100.0), &MCSpec::new(50_000, 21)).unwrap();
    assert!(r.acceptable(), "{r:?}");
}

#[test]
fn tail_integral_limits() {
    let pm = gbm(50);
    let s = MCSpec::new(20_000, 2);
    let r = lookback_from_barrier_integral(&pm, 0.0, &s).unwrap();
    assert!((r.lhs - r.rhs).abs() < 1e-9 * r.lhs);
    let r = lookback_from_barrier_integral(&pm, 1e4, &s).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    let r = lookback_from_barrier_integral(&pm, 110.0, &s).unwrap();
    assert!(r.pass);
}

#[test]
fn terminal_and_max_density() {
    let pm = gbm(4).with_monitoring(MaxMonitoring::BrownianBridge);
    let s = MCSpec::new(100_000, 4);
    let g = Thm23Grid::default();
    let one = price_h_of_terminal_and_max(&pm, &BlackBoxPayoff::new(2, Arc::new(|_: &[f64]| 1.0)).unwrap(), &g, &s).unwrap();
    assert!((one.mass - 1.0).abs() <= 0.01, "mass {}", one.mass);
    assert!(one.min_density >= -1e-4);
    assert!(one.leaked_mass <= 1e-3);

    let y = price_h_of_terminal_and_max(&pm, &BlackBoxPayoff::new(2, Arc::new(|x: &[f64]| x[1])).unwrap(), &g, &s).unwrap();
    assert!(y.report.pass, "{:?}", y.report);
    assert!((y.report.lhs - expected_max(100.0, 0.2)).abs() < 0.05, "{} vs {}", y.report.lhs, expected_max(100.0, 0.2));

    let xy = price_h_of_terminal_and_max(&pm, &BlackBoxPayoff::new(2, Arc::new(|x: &[f64]| x[0] * x[1])).unwrap(), &g, &s).unwrap();
    assert!(xy.report.pass, "{:?}", xy.report);
    assert!(price_h_of_terminal_and_max(&pm, &BlackBoxPayoff::new(1, Arc::new(|x: &[f64]| x[0])).unwrap(), &g, &s).is_err());
}

#[test]
fn asian_sensitivity_limits() {
    let pm = gbm(50);
    let s = MCSpec::new(20_000, 5);
    let r = asian_sensitivities(&pm, 0.0, &s).unwrap();
    assert_eq!(r.event_frequency, 1.0);
    assert!((r.identity1.lhs + 1.0).abs() < 1e-9, "{}", r.identity1.lhs);
    let r = asian_sensitivities(&pm, 1e4, &s).unwrap();
    assert_eq!(r.event_frequency, 0.0);
    assert!(r.identity1.lhs.abs() < 1e-12);
    let r = asian_sensitivities(&pm, 100.0, &MCSpec::new(50_000, 5)).unwrap();
    assert!(r.identity1.acceptable(), "{:?}", r.identity1);
    assert!(r.identity3.acceptable(), "{:?}", r.identity3);
}

#[test]
fn parisian_grid_bounds() {
    let pm = gbm(100);
    let s = MCSpec::new(20_000, 8);
    let r = asian_from_parisian_grid(&pm, 0.0, &[5, 10, 20], &s).unwrap();
    assert_eq!(r.total_violations, 0);
    let row = &r.rows[1];
    assert!(row.lower_bound <= row.asian);
    assert!(row.lower_bound >= row.asian - 3.0 * row.asian_se - 100.0 / 10.0);
    assert!(r.monotone);
    for w in r.rows.windows(2) {
        assert!(w[1].gap <= w[0].gap + w[1].gap_se);
    }
}

#[test]
fn basket_limits() {
    let pm = PathModel::new(vec![100.0, 90.0], vec![0.2, 0.3], Some(vec![vec![1.0, 0.4], vec![0.4, 1.0]]), 1.0, 20).unwrap();
    let s = MCSpec::new(5_000, 2);
    let r = asian_basket_from_multi_lookback(&pm, [1e6, 1e6], &BasketGrid::default(), &s).unwrap();
    assert_eq!(r.report.lhs, 0.0);
    assert!(r.report.rhs.abs() < 1e-9);
    let one = BasketGrid { slices: 1, ..BasketGrid::default() };
    let r = asian_basket_from_multi_lookback(&pm, [0.0, 0.0], &one, &s).unwrap();
    // Both end points of the single time step are reported.
    assert_eq!(r.slices.len(), 2);
    assert!((r.slices[1].value - 190.0).abs() < 1e-3 * 190.0, "{}", r.slices[1].value);
}

#[test]
fn conditional_examples() {
    let pm = gbm(50);
    let s = MCSpec::new(20_000, 12);
    let opt = PathOption::Asian { k: 100.0 };
    let c = conditional_price(&pm, &opt, &PathEvent::Always, &s).unwrap();
    let u = mc_price_path(&pm, &opt, &s).unwrap();
    assert_eq!(c.frequency, 1.0);
    assert!((c.estimate - u.estimate).abs() < 1e-12);
    let rare = conditional_price(&pm, &opt, &PathEvent::MaxAtLeast { h: 1e4 }, &s).unwrap();
    assert!(rare.inconclusive);
    let tail = conditional_price(&pm, &PathOption::Call { k: 100.0 }, &PathEvent::TerminalAbove { k: 100.0 }, &s).unwrap();
    assert!(tail.estimate > 0.0);
}

#[test]
fn refinement_moves_prices_by_little() {
    let s = MCSpec::new(20_000, 1);
    for opt in [PathOption::Asian { k: 100.0 }, PathOption::Lookback { k: 100.0 }] {
        let coarse = mc_price_path(&gbm(50).with_monitoring(MaxMonitoring::BrownianBridge), &opt, &s).unwrap();
        let fine = mc_price_path(&gbm(100).with_monitoring(MaxMonitoring::BrownianBridge), &opt, &s).unwrap();
        let se = (coarse.standard_error.powi(2) + fine.standard_error.powi(2)).sqrt();
        assert!((coarse.estimate - fine.estimate).abs() <= 3.0 * se + 100.0 / 50.0, "{opt:?}");
    }
}
