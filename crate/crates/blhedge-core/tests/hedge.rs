use blhedge_core::analytic::bs_call;
use blhedge_core::engine::{expectation_with_weight, price_product, QuadratureSpec, WeightEvent};
use blhedge_core::fixtures::binomial_1d;
use blhedge_core::hedge::{build_call_portfolio, build_digital_decomposition, replication_report, ReplicationSamples, TailMode};
use blhedge_core::measure::{Discount, PricingMeasure};
use blhedge_core::payoff::{Piece, PiecewisePayoff1D, ProductPayoff};
use blhedge_core::quad::Rule;
use proptest::prelude::*;

fn uniform(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect()
}

fn sq() -> PiecewisePayoff1D {
    PiecewisePayoff1D::power(2.0).unwrap()
}

fn ln1() -> PricingMeasure {
    PricingMeasure::lognormal_1d(100.0, 0.2, 1.0).unwrap()
}

fn samples(n: usize) -> ReplicationSamples {
    ReplicationSamples { grid_points: 2001, samples: n, seed: 3 }
}

#[test]
fn square_interpolation_error_is_quarter_cell_squared() {
    let mut prev: Option<f64> = None;
    for cells in [4usize, 8, 16, 32] {
        let hp = build_call_portfolio(&sq(), &uniform(0.0, 1.0, cells), TailMode::Cutoff).unwrap();
        let h = 1.0 / cells as f64;
        let mids = (0..cells).map(|k| (k as f64 + 0.5) * h);
        let sup = mids.map(|x| (hp.value(x) - x * x).abs()).fold(0.0, f64::max);
        assert!((sup - h * h / 4.0).abs() < 1e-12, "{sup}");
        if let Some(p) = prev {
            assert!((p / sup - 4.0).abs() < 1e-9);
        }
        prev = Some(sup);
    }
}

#[test]
fn call_at_a_node_is_reproduced() {
    let f = PiecewisePayoff1D::call(100.0).unwrap();
    let hp = build_call_portfolio(&f, &uniform(50.0, 150.0, 10), TailMode::Extend).unwrap();
    for j in 0..=1000 {
        let x = 50.0 + 0.1 * j as f64;
        assert!((hp.value(x) - f.eval(x)).abs() < 1e-12);
    }
    let r = replication_report(&hp, &f, &ln1(), 0, &samples(20_000), &QuadratureSpec::default()).unwrap();
    assert!(r.sup_error < 1e-12 && r.l1_error < 1e-12);
    assert!(r.price_gap < 1e-5, "{}", r.price_gap);
}

#[test]
fn jump_inside_the_partition_is_rejected() {
    let f = PiecewisePayoff1D::digital_ge(100.0).unwrap();
    assert!(build_call_portfolio(&f, &uniform(50.0, 150.0, 10), TailMode::Extend).is_err());
    assert!(build_call_portfolio(&sq(), &[2.0, 1.0], TailMode::Extend).is_err());
}

#[test]
fn affine_payoffs_replicate_exactly() {
    let f = PiecewisePayoff1D::affine(3.0, 0.5);
    let hp = build_call_portfolio(&f, &uniform(0.0, 400.0, 4), TailMode::Extend).unwrap();
    let r = replication_report(&hp, &f, &ln1(), 0, &samples(20_000), &QuadratureSpec::default()).unwrap();
    assert!(r.sup_error <= 1e-12 && r.l1_error <= 1e-12, "{r:?}");
    assert!(r.price_gap <= 1e-12 * r.direct_price.abs().max(1.0), "{r:?}");
}

#[test]
fn square_l1_error_ratio_under_refinement() {
    let m = ln1();
    let l1 = |cells| {
        let hp = build_call_portfolio(&sq(), &uniform(0.0, 300.0, cells), TailMode::Cutoff).unwrap();
        replication_report(&hp, &sq(), &m, 0, &samples(100_000), &QuadratureSpec::default()).unwrap().l1_error
    };
    let (a, b, c) = (l1(20), l1(40), l1(80));
    assert!((3.5..=4.5).contains(&(a / b)), "{}", a / b);
    assert!((3.5..=4.5).contains(&(b / c)), "{}", b / c);
}

#[test]
fn digital_decomposition_examples() {
    let m = ln1();
    let q = QuadratureSpec::default();
    let x = PiecewisePayoff1D::affine(0.0, 1.0);
    let hp = build_digital_decomposition(&x, &m, 0, &q).unwrap();
    assert_eq!(hp.bond_units, 0.0);
    assert!(hp.digitals.is_empty());
    assert!(hp.digital_density.iter().all(|c| (c.weight - (c.hi - c.lo)).abs() < 1e-12));
    let p = hp.price(&m, 0, &Discount::none()).unwrap();
    assert!((p - 100.0).abs() < 1e-3, "{p}");

    let c = PiecewisePayoff1D::call(100.0).unwrap();
    let hp = build_digital_decomposition(&c, &m, 0, &q).unwrap();
    assert!(hp.digital_density.iter().all(|s| s.lo >= 100.0 - 1e-9));
    let p = hp.price(&m, 0, &Discount::none()).unwrap();
    // The strip sits on the engine's grid with the midpoint rule.
    let mid = q.clone().with_rule(Rule::Midpoint);
    let engine = price_product(&ProductPayoff::product(vec![c.clone()]).unwrap(), &m, &mid, &Discount::none()).unwrap().total;
    assert!((p - engine).abs() <= q.abs_tol, "{p} vs {engine}");
    let r = replication_report(&hp, &c, &m, 0, &samples(10_000), &q).unwrap();
    assert!(r.price_gap <= q.abs_tol, "{}", r.price_gap);
    let fine = QuadratureSpec { nodes: 8001, ..QuadratureSpec::default() };
    let p = build_digital_decomposition(&c, &m, 0, &fine).unwrap().price(&m, 0, &Discount::none()).unwrap();
    assert!((p - bs_call(100.0, 100.0, 0.2)).abs() < 1e-4, "{p}");

    assert!(build_digital_decomposition(&PiecewisePayoff1D::exp(1.0, 2.0), &m, 0, &q).is_err());
    assert!(build_digital_decomposition(&x, &m, 1, &q).is_err());
}

#[test]
fn decomposition_prices_like_the_engine_on_atoms() {
    let m = binomial_1d();
    let q = QuadratureSpec::default();
    let f = sq().scaled(0.01);
    // 0.01·x² plus a strict digital of size 3 at 100.
    let g = PiecewisePayoff1D::new(vec![100.0], vec![Piece::Poly(vec![0.0, 0.0, 0.01]), Piece::Poly(vec![3.0, 0.0, 0.01])], vec![100.0])
        .unwrap();
    assert_eq!(g.jump_atoms().len(), 1);
    for p in [f, g] {
        let hp = build_digital_decomposition(&p, &m, 0, &q).unwrap();
        let v = hp.price(&m, 0, &Discount::none()).unwrap();
        let e = expectation_with_weight(&p, 0, &WeightEvent::none(), &m, &q.clone().with_rule(Rule::Midpoint))
            .unwrap()
            .total;
        assert!((v - e).abs() < 1e-8, "{v} vs {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn portfolio_matches_payoff_at_nodes(
        mut pts in proptest::collection::vec(0.0f64..300.0, 2..12),
        k in 0.0f64..300.0, kind in 0u8..3, cut in any::<bool>(),
    ) {
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        prop_assume!(pts.len() >= 2);
        let f = match kind {
            0 => sq(),
            1 => PiecewisePayoff1D::call(k).unwrap(),
            _ => PiecewisePayoff1D::put(k).unwrap(),
        };
        let hp = build_call_portfolio(&f, &pts, if cut { TailMode::Cutoff } else { TailMode::Extend }).unwrap();
        // Relative to the payoff's scale on the partition.
        let scale = pts.iter().map(|x| f.eval(*x).abs()).fold(1.0, f64::max);
        for x in &pts {
            prop_assert!((hp.value(*x) - f.eval(*x)).abs() <= 1e-12 * scale,
                "x={} {} vs {}", x, hp.value(*x), f.eval(*x));
        }
    }
}
