use blhedge_core::fixtures::{binomial_1d, binomial_2d};
use blhedge_core::measure::{PricingMeasure, Strictness, TailEvent};
use proptest::prelude::*;

fn ln2(rho: f64) -> PricingMeasure {
    PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, rho).unwrap()
}

#[test]
fn tail_examples() {
    let m = ln2(0.0);
    let e = TailEvent::uniform(vec![0.0, 0.0], Strictness::Gt).unwrap();
    assert!((m.joint_tail_prob(&e).unwrap() - 1.0).abs() < 1e-12);

    let med = |s0: f64, sd: f64| s0 * (-0.5 * sd * sd).exp();
    let e = TailEvent::uniform(vec![med(100.0, 0.2), med(90.0, 0.3)], Strictness::Gt).unwrap();
    assert!((m.joint_tail_prob(&e).unwrap() - 0.25).abs() < 1e-9);

    let d = PricingMeasure::discrete(vec![vec![1.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
    let ge = TailEvent::uniform(vec![1.0], Strictness::Ge).unwrap();
    let gt = TailEvent::uniform(vec![1.0], Strictness::Gt).unwrap();
    assert_eq!(d.joint_tail_prob(&ge).unwrap(), 1.0);
    assert_eq!(d.joint_tail_prob(&gt).unwrap(), 0.5);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let e = TailEvent::uniform(vec![1.0], Strictness::Gt).unwrap();
    assert!(ln2(0.3).joint_tail_prob(&e).is_err());
}

#[test]
fn sampling_is_deterministic_and_centered() {
    let m = PricingMeasure::lognormal_1d(100.0, 0.2, 1.0).unwrap();
    let a = m.sample_terminal(1000, 42).unwrap();
    let b = m.sample_terminal(1000, 42).unwrap();
    assert_eq!(a, b);
    let s = m.sample_terminal(1_000_000, 5).unwrap();
    let mean = s.column_mean(0);
    let var = (0..1_000_000).map(|i| (s.row(i)[0] - mean).powi(2)).sum::<f64>() / 999_999.0;
    assert!((mean - 100.0).abs() < 3.0 * var.sqrt() / 1000.0, "mean {mean}");
}

#[test]
fn discrete_sampling_frequencies() {
    let m = binomial_1d();
    let n = 200_000;
    let s = m.sample_terminal(n, 9).unwrap();
    let atoms = m.atom_coordinates(0);
    let (xs, ws) = match m.kind() {
        blhedge_core::measure::MeasureKind::Discrete { atoms, weights } => (atoms.clone(), weights.clone()),
        _ => unreachable!(),
    };
    assert_eq!(xs.len(), atoms.len());
    for (x, w) in xs.iter().zip(&ws) {
        let hits = (0..n).filter(|i| s.row(*i)[0] == x[0]).count() as f64 / n as f64;
        let se = (w * (1.0 - w) / n as f64).sqrt();
        assert!((hits - w).abs() <= 3.0 * se + 1e-12, "atom {x:?}: {hits} vs {w}");
    }
}

#[test]
fn marginal_expectations() {
    assert_eq!(ln2(0.5).marginal_expectation(0).unwrap(), 100.0);
    let d = PricingMeasure::discrete(vec![vec![1.0], vec![3.0]], vec![0.25, 0.75]).unwrap();
    assert_eq!(d.marginal_expectation(0).unwrap(), 2.5);
    let s = ln2(0.0).sample_terminal(200_000, 1).unwrap();
    let rows: Vec<Vec<f64>> = (0..200_000).map(|i| s.row(i).to_vec()).collect();
    let e = PricingMeasure::empirical(rows).unwrap();
    let mean = e.marginal_expectation(0).unwrap();
    assert!((mean - 100.0).abs() < 3.0 * 20.2 / (200_000f64).sqrt());
}

#[test]
fn continuous_laws_ignore_strictness() {
    let m = ln2(0.5);
    for y in [50.0, 80.0, 100.0, 130.0] {
        let gt = m.joint_tail_prob(&TailEvent::uniform(vec![y, y * 0.9], Strictness::Gt).unwrap()).unwrap();
        let ge = m.joint_tail_prob(&TailEvent::uniform(vec![y, y * 0.9], Strictness::Ge).unwrap()).unwrap();
        assert_eq!(gt, ge);
    }
}

#[test]
fn far_tails_vanish() {
    let m = binomial_2d();
    let e = TailEvent::uniform(vec![1e4, 0.0], Strictness::Ge).unwrap();
    assert!(m.joint_tail_prob(&e).unwrap() < 1e-12);
    let l = ln2(0.5);
    let hi = 100.0 * (10.0f64 * 0.2).exp();
    let e = TailEvent::uniform(vec![hi, 0.0], Strictness::Gt).unwrap();
    assert!(l.joint_tail_prob(&e).unwrap() < 1e-12);
    let zero = TailEvent::uniform(vec![0.0, 0.0], Strictness::Ge).unwrap();
    assert!((m.joint_tail_prob(&zero).unwrap() - 1.0).abs() < 1e-12);
}

fn strict(b: bool) -> Strictness {
    if b {
        Strictness::Gt
    } else {
        Strictness::Ge
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_non_increasing_in_threshold(
        y1 in 0.0f64..250.0, y2 in 0.0f64..250.0, dy in 0.0f64..30.0,
        s1 in any::<bool>(), s2 in any::<bool>(), rho in -0.9f64..0.9,
    ) {
        let st = vec![strict(s1), strict(s2)];
        for m in [ln2(rho), binomial_2d()] {
            let base = m.joint_tail_prob(&TailEvent::new(vec![y1, y2], st.clone()).unwrap()).unwrap();
            let up1 = m.joint_tail_prob(&TailEvent::new(vec![y1 + dy, y2], st.clone()).unwrap()).unwrap();
            let up2 = m.joint_tail_prob(&TailEvent::new(vec![y1, y2 + dy], st.clone()).unwrap()).unwrap();
            prop_assert!(up1 <= base + 1e-10);
            prop_assert!(up2 <= base + 1e-10);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
        }
    }

    #[test]
    fn atom_gap_equals_atom_weight(j in 0usize..7, y2 in 0.0f64..200.0) {
        let m = binomial_2d();
        let a1 = m.atom_coordinates(0);
        let y1 = a1[j.min(a1.len() - 1)];
        let ge = m.joint_tail_prob(&TailEvent::new(vec![y1, y2], vec![Strictness::Ge, Strictness::Gt]).unwrap()).unwrap();
        let gt = m.joint_tail_prob(&TailEvent::new(vec![y1, y2], vec![Strictness::Gt, Strictness::Gt]).unwrap()).unwrap();
        let direct = m.atom_expectation(|x| if x[0] == y1 && x[1] > y2 { 1.0 } else { 0.0 }).unwrap();
        prop_assert!((ge - gt - direct).abs() < 1e-12);
    }
}
