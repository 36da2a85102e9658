use blhedge_core::analytic::{bs_call, lognormal_pdf, lognormal_tail};
use blhedge_core::fixtures::{binomial_1d, binomial_2d};
use blhedge_core::mc::MCSpec;
use blhedge_core::measure::{Discount, PricingMeasure, Strictness};
use blhedge_core::spd::{
    bl_density_1d, coordinate_functions, default_spread_steps, digital_from_call_spread, joint_density_nd, multi_lookback_value,
    pyramid_price, random_rectangles, rectangle_prob_recovery, CallSurface, SurfaceKind,
};
use proptest::prelude::*;

fn axis(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    (0..).map(|j| lo + h * j as f64).take_while(|k| *k <= hi + 1e-9).collect()
}

fn bs_surface(h: f64) -> CallSurface {
    CallSurface::from_fn(SurfaceKind::Call1d, vec![axis(20.0, 300.0, h)], |k| bs_call(100.0, k[0], 0.2)).unwrap()
}

fn max_pdf_error(h: f64) -> f64 {
    let d = bl_density_1d(&bs_surface(h)).unwrap();
    d.coords[0]
        .iter()
        .zip(&d.density)
        .filter(|(k, _)| (60.0..=200.0).contains(*k))
        .map(|(k, v)| (v - lognormal_pdf(100.0, *k, 0.2)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn bl_density_is_second_order() {
    let ratio = max_pdf_error(2.0) / max_pdf_error(1.0);
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn binomial_spikes_carry_node_probabilities() {
    let m = binomial_1d();
    let s = CallSurface::from_fn(SurfaceKind::Call1d, vec![axis(0.0, 250.0, 0.25)], |k| {
        m.atom_expectation(|x| (x[0] - k[0]).max(0.0)).unwrap()
    })
    .unwrap();
    let d = bl_density_1d(&s).unwrap();
    for a in m.atom_coordinates(0) {
        // Atoms fall between strikes, so collect the mass of the bracketing cell.
        let got: f64 = d.coords[0].iter().zip(&d.masses).filter(|(k, _)| (**k - a).abs() <= 0.25).map(|(_, w)| w).sum();
        let want = m.atom_expectation(|x| if x[0] == a { 1.0 } else { 0.0 }).unwrap();
        assert!((got - want).abs() < 1e-6, "atom {a}: {got} vs {want}");
    }
}

#[test]
fn digital_examples() {
    let s = bs_surface(0.5);
    let est = digital_from_call_spread(&s, 100.0, &default_spread_steps(&s, 100.0)).unwrap();
    assert!((est.probability - lognormal_tail(100.0, 100.0, 0.2)).abs() <= 1e-4, "{}", est.probability);
    let deep = digital_from_call_spread(&s, 22.0, &[1.0, 0.5]).unwrap();
    assert!((deep.probability - 1.0).abs() < 1e-9);
    assert!(digital_from_call_spread(&s, 100.0, &[0.5, 1.0]).is_err());
    assert!(digital_from_call_spread(&s, 400.0, &[1.0]).is_err());
}

#[test]
fn spread_quotients_are_monotone_on_convex_surfaces() {
    let s = bs_surface(0.5);
    for k in [70.0, 100.0, 140.0] {
        let est = digital_from_call_spread(&s, k, &[8.0, 4.0, 2.0, 1.0, 0.5]).unwrap();
        assert!(est.quotients.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", est.quotients);
        assert!(est.warnings.is_empty());
    }
}

#[test]
fn joint_density_of_independent_lognormals() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.0).unwrap();
    let s = CallSurface::from_fn(SurfaceKind::MultiLookback, vec![axis(30.0, 240.0, 3.0), axis(15.0, 310.0, 4.0)], |x| {
        multi_lookback_value(&m, x)
    })
    .unwrap();
    let d = joint_density_nd(&s).unwrap();
    let box1 = (100.0 * (-0.02f64 - 0.8).exp(), 100.0 * (-0.02f64 + 0.8).exp());
    let box2 = (90.0 * (-0.045f64 - 1.2).exp(), 90.0 * (-0.045f64 + 1.2).exp());
    let (mut err, mut norm) = (0.0, 0.0);
    let (c1, c2) = (&d.coords[0], &d.coords[1]);
    for (i, x) in c1.iter().enumerate() {
        for (j, y) in c2.iter().enumerate() {
            if !(box1.0..=box1.1).contains(x) || !(box2.0..=box2.1).contains(y) {
                continue;
            }
            let p = lognormal_pdf(100.0, *x, 0.2) * lognormal_pdf(90.0, *y, 0.3);
            err += (d.density[i * c2.len() + j] - p).abs();
            norm += p;
        }
    }
    assert!(err / norm <= 0.02, "relative L1 {}", err / norm);
    assert!((d.mass - 1.0).abs() <= 0.01, "mass {}", d.mass);
}

#[test]
fn degenerate_coordinate_concentrates_on_a_line() {
    let m = PricingMeasure::lognormal_2d([100.0, 50.0], [0.2, 0.0], 1.0, 0.0).unwrap();
    // Equal spacing on both axes: the min terms depend on x₁ − x₂ along diagonals.
    let s = CallSurface::from_fn(SurfaceKind::MultiLookback, vec![axis(30.0, 240.0, 1.5), axis(30.0, 70.0, 1.5)], |x| {
        multi_lookback_value(&m, x)
    })
    .unwrap();
    let d = joint_density_nd(&s).unwrap();
    let c2 = &d.coords[1];
    // Central differences smear the kink over the atom cell and its two neighbours.
    let off: f64 = d
        .masses
        .iter()
        .enumerate()
        .filter(|(f, _)| (c2[f % c2.len()] - 50.0).abs() >= 2.0 * 1.5)
        .map(|(_, w)| w.abs())
        .sum();
    assert!(off <= 1e-3, "off-line mass {off}");
    assert!((d.mass - 1.0).abs() <= 0.01);
}

#[test]
fn pyramid_examples() {
    let m = PricingMeasure::lognormal_2d([100.0, 90.0], [0.2, 0.3], 1.0, 0.4).unwrap();
    let s = MCSpec::new(200_000, 31);
    let d = Discount::none();
    let r = pyramid_price(&m, &[95.0, 85.0], 0.0, &s, &d).unwrap();
    let sum = bs_call(100.0, 95.0, 0.2) + bs_call(90.0, 85.0, 0.3);
    assert!((r.estimate - sum).abs() <= 3.0 * r.standard_error, "{} vs {sum}", r.estimate);
    let zero = pyramid_price(&m, &[1e9, 1e9], 5.0, &s, &d).unwrap();
    assert_eq!(zero.estimate, 0.0);
    let a = pyramid_price(&m, &[95.0, 85.0], 10.0, &s, &d).unwrap();
    let b = pyramid_price(&m, &[95.0, 85.0], 10.0, &MCSpec::new(200_000, 32), &d).unwrap();
    let se = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() <= 3.0 * se);
    assert!(pyramid_price(&m, &[95.0], 10.0, &s, &d).is_err());
}

#[test]
fn rectangle_examples() {
    let m = binomial_2d();
    let fs = coordinate_functions(2);
    let all = rectangle_prob_recovery(&m, &fs, &[0.0, 0.0], &[1e3, 1e3], 1e-3).unwrap();
    assert!((all.probability - 1.0).abs() < 1e-12);
    assert!(all.exact);
    let lo = m.atom_coordinates(0);
    let gap = (lo[3] + lo[4]) / 2.0;
    let empty = rectangle_prob_recovery(&m, &fs, &[gap, 0.0], &[gap + 1e-3, 1e3], 1e-4).unwrap();
    assert!(empty.probability.abs() < 1e-12);
    assert!(rectangle_prob_recovery(&PricingMeasure::lognormal_1d(100.0, 0.2, 1.0).unwrap(), &fs[..1], &[0.0], &[1.0], 0.1).is_err());
    // A width larger than the atom gap is flagged.
    let wide = rectangle_prob_recovery(&m, &fs, &[lo[2], 0.0], &[lo[5], 1e3], 100.0).unwrap();
    assert!(!wide.exact);
}

#[test]
fn rectangle_recovery_matches_enumeration_on_random_rectangles() {
    let m = binomial_2d();
    let fs = coordinate_functions(2);
    for (lo, hi) in random_rectangles(&m, 25, 4) {
        let r = rectangle_prob_recovery(&m, &fs, &lo, &hi, 1e-3).unwrap();
        let direct = m
            .atom_expectation(|x| if (0..2).all(|i| lo[i] <= x[i] && x[i] < hi[i]) { 1.0 } else { 0.0 })
            .unwrap();
        assert!(r.exact);
        assert!((r.probability - direct).abs() < 1e-12, "{lo:?} {hi:?}: {} vs {direct}", r.probability);
    }
}

fn lattice_measure(points: &[(u8, u8, u8)]) -> PricingMeasure {
    let atoms: Vec<Vec<f64>> = points.iter().map(|(a, b, _)| vec![10.0 + *a as f64, 5.0 + *b as f64 * 0.5]).collect();
    let w: Vec<f64> = points.iter().map(|(_, _, w)| 1.0 + *w as f64).collect();
    let t: f64 = w.iter().sum();
    PricingMeasure::discrete(atoms, w.iter().map(|v| v / t).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rectangle_recovery_is_exact(
        points in proptest::collection::vec((0u8..20, 0u8..20, 0u8..5), 1..12),
        a in 0.0f64..35.0, b in 0.0f64..35.0, c in 0.0f64..20.0, d in 0.0f64..20.0,
    ) {
        let m = lattice_measure(&points);
        let lo = [5.0 + a.min(b), 3.0 + c.min(d)];
        let hi = [5.0 + a.max(b), 3.0 + c.max(d)];
        let r = rectangle_prob_recovery(&m, &coordinate_functions(2), &lo, &hi, 1e-3).unwrap();
        let direct = m.atom_expectation(|x| if (0..2).all(|i| lo[i] <= x[i] && x[i] < hi[i]) { 1.0 } else { 0.0 }).unwrap();
        prop_assume!(r.exact);
        prop_assert!((r.probability - direct).abs() < 1e-12, "{} vs {}", r.probability, direct);
    }

    #[test]
    fn digital_at_atoms_is_non_strict(j in 0usize..7) {
        let m = binomial_1d();
        let atoms = m.atom_coordinates(0);
        let k = atoms[j.min(atoms.len() - 1)];
        prop_assume!(k > 2.0);
        // Atoms are grid nodes so the curve is exactly linear between strikes.
        let mut ks = axis(0.0, 300.0, 0.5);
        ks.extend(atoms.iter().copied());
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        let s = CallSurface::from_fn(SurfaceKind::Call1d, vec![ks], |x| {
            m.atom_expectation(|y| (y[0] - x[0]).max(0.0)).unwrap()
        }).unwrap();
        let est = digital_from_call_spread(&s, k, &[1e-3, 5e-4]).unwrap();
        let ge = m.marginal_tail(0, k, Strictness::Ge);
        prop_assert!((est.probability - ge).abs() < 1e-9, "{} vs {}", est.probability, ge);
    }
}
