//! Small recombining binomial laws used as finite-state test fixtures.

use crate::error::{invalid, Result};
use crate::measure::PricingMeasure;
use crate::payoff::{PiecewisePayoff1D, ProductPayoff};

fn binomial_weights(steps: usize, p: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(steps + 1);
    let mut c = 1.0f64;
    for j in 0..=steps {
        w.push(c * p.powi(j as i32) * (1.0 - p).powi((steps - j) as i32));
        c = c * (steps - j) as f64 / (j + 1) as f64;
    }
    w
}

/// Terminal nodes `s0·u^{2j−steps}` of a zero-rate tree with `d = 1/u`
/// and martingale probability `p = (1 − d)/(u − d)`, as `(atoms, weights)`.
pub fn binomial_nodes(s0: f64, u: f64, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(u > 1.0) || !(s0 > 0.0) || steps == 0 {
        return invalid("binomial tree needs s0 > 0, u > 1 and at least one step");
    }
    let d = 1.0 / u;
    let p = (1.0 - d) / (u - d);
    let atoms = (0..=steps).map(|j| s0 * u.powi(2 * j as i32 - steps as i32)).collect();
    Ok((atoms, binomial_weights(steps, p)))
}

/// One-asset binomial law: `S₀ = 100`, `u = 1.1`, 6 steps. The node at
/// `j = 3` sits exactly at 100.
pub fn binomial_1d() -> PricingMeasure {
    let (a, w) = binomial_nodes(100.0, 1.1, 6).expect("fixed parameters");
    let s: f64 = w.iter().sum();
    PricingMeasure::discrete(a.into_iter().map(|x| vec![x]).collect(), w.iter().map(|x| x / s).collect())
        .expect("fixed parameters")
}

/// Two independent binomial trees: `S₀ = (100, 90)`, `u = (1.1, 1.15)`,
/// 6 steps each (49 atoms).
pub fn binomial_2d() -> PricingMeasure {
    let (a1, w1) = binomial_nodes(100.0, 1.1, 6).expect("fixed parameters");
    let (a2, w2) = binomial_nodes(90.0, 1.15, 6).expect("fixed parameters");
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (x, p) in a1.iter().zip(&w1) {
        for (y, q) in a2.iter().zip(&w2) {
            atoms.push(vec![*x, *y]);
            weights.push(p * q);
        }
    }
    let s: f64 = weights.iter().sum();
    PricingMeasure::discrete(atoms, weights.iter().map(|x| x / s).collect()).expect("fixed parameters")
}

/// Two-asset product payoffs used for oracle comparisons against Monte
/// Carlo, labelled by name.
pub fn product_payoffs_2d() -> Vec<(&'static str, ProductPayoff)> {
    let f = PiecewisePayoff1D::call;
    let mk = |name, a: PiecewisePayoff1D, b: PiecewisePayoff1D| (name, ProductPayoff::product(vec![a, b]).expect("fixed parameters"));
    vec![
        ("call_times_call", f(100.0).unwrap().scaled(0.1), f(90.0).unwrap()),
        ("call_times_digital", f(100.0).unwrap(), PiecewisePayoff1D::digital_ge(90.0).unwrap()),
        ("put_times_strict_digital", PiecewisePayoff1D::put(110.0).unwrap(), PiecewisePayoff1D::digital_gt(80.0).unwrap()),
        ("digital_times_digital", PiecewisePayoff1D::digital_ge(95.0).unwrap(), PiecewisePayoff1D::digital_ge(95.0).unwrap()),
        ("square_times_put", PiecewisePayoff1D::power(2.0).unwrap().scaled(1e-4), PiecewisePayoff1D::put(100.0).unwrap()),
    ]
    .into_iter()
    .map(|(n, a, b)| mk(n, a, b))
    .collect()
}
