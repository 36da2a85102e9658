use std::sync::Arc;

use blhedge_core::analytic::{bs_call, lognormal_tail, margrabe};
use blhedge_core::engine::{
    default_indicator_eps, enumerate_splits, eval_a_functional, eval_abs_a_functional, expectation_with_weight, price_continuous,
    price_indicator_ge, price_product, price_rainbow_p1, price_spread, QuadratureSpec, WeightEvent,
};
use blhedge_core::fixtures::{binomial_1d, binomial_2d};
use blhedge_core::mc::{collect_paths, mc_price_terminal, MCSpec, PathModel};
use blhedge_core::measure::{Discount, PricingMeasure, Strictness};
use blhedge_core::payoff::{BlackBoxPayoff, PiecewisePayoff1D, ProductPayoff, ProductTerm};
use proptest::prelude::*;

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn ln1() -> PricingMeasure {
    PricingMeasure::lognormal_1d(100.0, 0.2, 1.0).unwrap()
}

fn call(k: f64) -> PiecewisePayoff1D {
    PiecewisePayoff1D::call(k).unwrap()
}

fn x() -> PiecewisePayoff1D {
    PiecewisePayoff1D::affine(0.0, 1.0)
}

#[test]
fn split_counts_and_distinctness() {
    for (n, c) in [(1, 4), (2, 16), (3, 64)] {
        let s = enumerate_splits(n).unwrap();
        assert_eq!(s.len(), c);
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), c);
    }
    assert!(enumerate_splits(0).is_err());
    assert!(enumerate_splits(7).is_err());
}

#[test]
fn single_split_functionals() {
    let m = ln1();
    let h = ProductPayoff::product(vec![call(100.0)]).unwrap();
    let splits = enumerate_splits(1).unwrap();
    let d = splits.iter().find(|s| s.d() == vec![0]).unwrap();
    let z = splits.iter().find(|s| s.z() == vec![0]).unwrap();
    let bs = bs_call(100.0, 100.0, 0.2);
    assert!((eval_a_functional(d, &h, &m, &q()).unwrap() - bs).abs() / bs < 1e-4);
    assert_eq!(eval_a_functional(z, &h, &m, &q()).unwrap(), 0.0);

    let dig = ProductPayoff::product(vec![PiecewisePayoff1D::digital_ge(100.0).unwrap()]).unwrap();
    let l = splits.iter().find(|s| s.l() == vec![0]).unwrap();
    let v = eval_a_functional(l, &dig, &m, &q()).unwrap();
    assert!((v - lognormal_tail(100.0, 100.0, 0.2)).abs() < 1e-12);
    let b = binomial_1d();
    let exact = b.atom_expectation(|x| if x[0] >= 100.0 { 1.0 } else { 0.0 }).unwrap();
    assert!((eval_a_functional(l, &dig, &b, &q()).unwrap() - exact).abs() < 1e-12);
}

#[test]
fn abs_functional_bounds() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.5).unwrap();
    let h = ProductPayoff::product(vec![call(95.0), PiecewisePayoff1D::digital_gt(80.0).unwrap()]).unwrap();
    for s in enumerate_splits(2).unwrap() {
        let a = eval_a_functional(&s, &h, &m, &q()).unwrap();
        let b = eval_abs_a_functional(&s, &h, &m, &q()).unwrap();
        assert!(b.is_finite());
        assert!(b >= a.abs() - 1e-12, "{s:?}: |A| {b} < A {a}");
    }
    let zero = ProductPayoff::product(vec![PiecewisePayoff1D::constant(0.0), PiecewisePayoff1D::constant(0.0)]).unwrap();
    for s in enumerate_splits(2).unwrap() {
        assert_eq!(eval_abs_a_functional(&s, &zero, &m, &q()).unwrap(), 0.0);
    }
}

#[test]
fn constant_payoff_prices_to_discount() {
    let h = ProductPayoff::product(vec![PiecewisePayoff1D::constant(1.0)]).unwrap();
    let d = Discount::new(1.25).unwrap();
    let b = price_product(&h, &ln1(), &q(), &d).unwrap();
    assert!((b.total - 0.8).abs() < 1e-15);
    let v: f64 = b.splits.iter().map(|s| s.value).sum();
    assert!((b.total - b.discount * v).abs() < 1e-12);
}

#[test]
fn breakdown_json_shape() {
    let h = ProductPayoff::product(vec![call(100.0)]).unwrap();
    let b = price_product(&h, &ln1(), &q(), &Discount::none()).unwrap();
    let v = serde_json::to_value(&b).unwrap();
    assert!(v["total"].is_f64());
    assert!(v["discount"].is_f64());
    let s = &v["splits"][0];
    for k in ["z", "d", "r", "l", "value", "skipped"] {
        assert!(s.get(k).is_some(), "missing {k}");
    }
}

#[test]
fn barrier_as_two_dimensional_payoff() {
    // (S_T − K)⁺·1{max ≥ H} on the empirical law of (S_T, max).
    let pm = PathModel::single(100.0, 0.2, 1.0, 50).unwrap();
    let spec = MCSpec::new(2000, 11);
    let pts: Vec<Vec<f64>> = collect_paths(&pm, &spec, |_, p| vec![p.terminal(0), p.maximum(0)]).unwrap();
    let m = PricingMeasure::empirical(pts.clone()).unwrap();
    let h = ProductPayoff::product(vec![call(100.0), PiecewisePayoff1D::digital_ge(115.0).unwrap()]).unwrap();
    let direct: f64 = pts.iter().map(|p| h.eval(p)).sum::<f64>() / pts.len() as f64;
    let v = price_product(&h, &m, &q(), &Discount::none()).unwrap().total;
    assert!((v - direct).abs() < 1e-9, "{v} vs {direct}");
}

#[test]
fn weighted_expectation_examples() {
    let m = ln1();
    let e = expectation_with_weight(&x(), 0, &WeightEvent::none(), &m, &q()).unwrap();
    assert!((e.total - 100.0).abs() < 1e-6);
    let dig = PiecewisePayoff1D::digital_ge(110.0).unwrap();
    let e = expectation_with_weight(&dig, 0, &WeightEvent::none(), &m, &q()).unwrap();
    assert!((e.total - lognormal_tail(100.0, 110.0, 0.2)).abs() < 1e-12);

    let m2 = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.0).unwrap();
    let w = WeightEvent::new(vec![1], vec![95.0], vec![Strictness::Gt]).unwrap();
    let e = expectation_with_weight(&call(105.0), 0, &w, &m2, &q()).unwrap();
    let expect = bs_call(100.0, 105.0, 0.2) * lognormal_tail(90.0, 95.0, 0.3);
    assert!((e.total - expect).abs() / expect < 1e-4);
}

#[test]
fn continuous_pricing_examples() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.3).unwrap();
    let sum = BlackBoxPayoff::new(2, Arc::new(|x: &[f64]| x[0] + x[1])).unwrap();
    let v = price_continuous(&sum, &m, &q(), &Discount::none()).unwrap().total;
    assert!((v - 190.0).abs() / 190.0 < 1e-4, "{v}");

    let (k1, k2, k) = (95.0, 85.0, 10.0);
    let r = price_continuous(&BlackBoxPayoff::rainbow_p1(k1, k2, k), &m, &q(), &Discount::none()).unwrap().total;
    let closed = price_rainbow_p1(&m, k1, k2, k, &q(), &Discount::none()).unwrap();
    assert!((r - closed).abs() / closed < 1e-3, "{r} vs {closed}");

    let xy = BlackBoxPayoff::new(2, Arc::new(|x: &[f64]| x[0] * x[1])).unwrap();
    let c = price_continuous(&xy, &m, &q(), &Discount::none()).unwrap().total;
    let p = price_product(&ProductPayoff::product(vec![x(), x()]).unwrap(), &m, &q(), &Discount::none()).unwrap().total;
    let moment = 100.0 * 90.0 * (0.3f64 * 0.2 * 0.3).exp();
    assert!((p - moment).abs() / moment < 1e-6, "{p} vs {moment}");
    assert!((c - p).abs() / p < 1e-4, "{c} vs {p}");
}

#[test]
fn rainbow_limits() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.3).unwrap();
    let v = price_rainbow_p1(&m, 0.0, 0.0, 0.0, &q(), &Discount::none()).unwrap();
    assert!((v - 190.0).abs() / 190.0 < 1e-5);
    let far = 1e6;
    let v = price_rainbow_p1(&m, 90.0, far, 10.0, &q(), &Discount::none()).unwrap();
    assert!((v - bs_call(100.0, 100.0, 0.2)).abs() < 1e-4);
}

#[test]
fn rainbow_against_monte_carlo() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.3).unwrap();
    let (k1, k2, k) = (95.0, 85.0, 10.0);
    let v = price_rainbow_p1(&m, k1, k2, k, &q(), &Discount::none()).unwrap();
    let h = BlackBoxPayoff::rainbow_p1(k1, k2, k);
    let r = mc_price_terminal(&m, |x: &[f64]| h.eval(x), &MCSpec::new(1_000_000, 21), &Discount::none()).unwrap();
    assert!((v - r.estimate).abs() <= 3.0 * r.standard_error, "{v} vs {} ± {}", r.estimate, r.standard_error);
}

#[test]
fn spread_examples() {
    let m = PricingMeasure::discrete(vec![vec![80.0, 0.0], vec![120.0, 0.0]], vec![0.5, 0.5]).unwrap();
    assert!((price_spread(&m, &q(), &Discount::none()).unwrap() - 100.0).abs() < 1e-9);
    let co = PricingMeasure::discrete(vec![vec![80.0, 80.0], vec![120.0, 120.0]], vec![0.5, 0.5]).unwrap();
    assert!(price_spread(&co, &q(), &Discount::none()).unwrap().abs() < 1e-9);
    let ind = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.0).unwrap();
    let v = price_spread(&ind, &q(), &Discount::none()).unwrap();
    let mg = margrabe(100.0, 90.0, 0.2, 0.3, 0.0);
    assert!((v - mg).abs() / mg < 1e-3);
}

#[test]
fn indicator_examples() {
    let iid = PricingMeasure::lognormal_2d([100.0, 100.0], [0.25, 0.25], 1.0, 0.0).unwrap();
    let r = price_indicator_ge(&iid, &default_indicator_eps(&iid), &q(), &Discount::none()).unwrap();
    assert!((r.price - 0.5).abs() < 1e-4, "{}", r.price);
    let zero = PricingMeasure::discrete(vec![vec![50.0, 0.0], vec![150.0, 0.0]], vec![0.5, 0.5]).unwrap();
    let r = price_indicator_ge(&zero, &default_indicator_eps(&zero), &q(), &Discount::none()).unwrap();
    assert!((r.price - 1.0).abs() < 1e-6, "{}", r.price);
    let c = PricingMeasure::lognormal_2d([100.0, 95.0], [0.2, 0.35], 1.0, 0.5).unwrap();
    let r = price_indicator_ge(&c, &default_indicator_eps(&c), &q(), &Discount::none()).unwrap();
    let h = BlackBoxPayoff::indicator_ge();
    let mc = mc_price_terminal(&c, |x: &[f64]| h.eval(x), &MCSpec::new(400_000, 4), &Discount::none()).unwrap();
    assert!((r.price - mc.estimate).abs() <= 3.0 * mc.standard_error, "{} vs {}", r.price, mc.estimate);
    assert!(price_indicator_ge(&c, &[0.1, 0.2], &q(), &Discount::none()).is_err());
}

fn factor(kind: u8, k: f64) -> PiecewisePayoff1D {
    match kind % 4 {
        0 => call(k),
        1 => PiecewisePayoff1D::put(k).unwrap(),
        2 => PiecewisePayoff1D::digital_ge(k).unwrap(),
        _ => PiecewisePayoff1D::digital_gt(k).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linearity(a in -2.0f64..2.0, b in -2.0f64..2.0, k1 in 60.0f64..140.0, k2 in 60.0f64..140.0, t1 in 0u8..4, t2 in 0u8..4) {
        let m = ln1();
        let h1 = ProductPayoff::product(vec![factor(t1, k1)]).unwrap();
        let h2 = ProductPayoff::product(vec![factor(t2, k2)]).unwrap();
        let d = Discount::none();
        // The fixed grid carries no error guarantee, the adaptive rule does.
        let q = QuadratureSpec { adaptive: true, ..q() };
        let p1 = price_product(&h1, &m, &q, &d).unwrap().total;
        let p2 = price_product(&h2, &m, &q, &d).unwrap().total;
        let pc = price_product(&h1.combine(a, &h2, b).unwrap(), &m, &q, &d).unwrap().total;
        prop_assert!((pc - (a * p1 + b * p2)).abs() <= 2.0 * q.abs_tol * (1.0 + a.abs() + b.abs()), "{} vs {}", pc, a * p1 + b * p2);
    }

    #[test]
    fn discrete_exactness(k1 in 50.0f64..160.0, k2 in 40.0f64..190.0, t1 in 0u8..4, t2 in 0u8..4, c in -3.0f64..3.0) {
        let m = binomial_2d();
        let h = ProductPayoff::new(vec![
            ProductTerm { coef: 1.0, factors: vec![factor(t1, k1), factor(t2, k2)] },
            ProductTerm { coef: c, factors: vec![x(), factor(t2 + 1, k1)] },
        ]).unwrap();
        let v = price_product(&h, &m, &q(), &Discount::none()).unwrap().total;
        let direct = m.atom_expectation(|x| h.eval(x)).unwrap();
        prop_assert!((v - direct).abs() < 1e-9 * direct.abs().max(1.0), "{} vs {}", v, direct);
    }

    #[test]
    fn continuous_products_skip_jump_splits(k1 in 60.0f64..140.0, k2 in 60.0f64..140.0) {
        let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.5).unwrap();
        let h = ProductPayoff::product(vec![call(k1), PiecewisePayoff1D::put(k2).unwrap()]).unwrap();
        for s in enumerate_splits(2).unwrap() {
            if !s.r().is_empty() || !s.l().is_empty() {
                prop_assert!(eval_a_functional(&s, &h, &m, &q()).unwrap().abs() < 1e-12);
            }
        }
    }
}
