//! Closed forms for zero-rate geometric Brownian motion, used as oracles and
//! to build analytic price surfaces.

use crate::normal::{cdf, pdf};

/// Black–Scholes call with zero rate: `E(S_T − K)⁺`, `sd = σ√T`.
pub fn bs_call(s0: f64, k: f64, sd: f64) -> f64 {
    if k <= 0.0 {
        return s0 - k;
    }
    if sd == 0.0 {
        return (s0 - k).max(0.0);
    }
    let d1 = ((s0 / k).ln() + 0.5 * sd * sd) / sd;
    s0 * cdf(d1) - k * cdf(d1 - sd)
}

/// `Q(S_T > k)`.
pub fn lognormal_tail(s0: f64, k: f64, sd: f64) -> f64 {
    if k <= 0.0 {
        return 1.0;
    }
    if sd == 0.0 {
        return if s0 > k { 1.0 } else { 0.0 };
    }
    cdf(((s0 / k).ln() - 0.5 * sd * sd) / sd)
}

/// Density of `S_T` at `x`.
pub fn lognormal_pdf(s0: f64, x: f64, sd: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = ((x / s0).ln() + 0.5 * sd * sd) / sd;
    pdf(z) / (x * sd)
}

/// Margrabe exchange option `E(X₁ − X₂)⁺` for zero-rate lognormals with
/// total standard deviations `sd1`, `sd2` and log-correlation `rho`.
pub fn margrabe(s1: f64, s2: f64, sd1: f64, sd2: f64, rho: f64) -> f64 {
    let sd = (sd1 * sd1 + sd2 * sd2 - 2.0 * rho * sd1 * sd2).max(0.0).sqrt();
    if sd == 0.0 {
        return (s1 - s2).max(0.0);
    }
    let d1 = ((s1 / s2).ln() + 0.5 * sd * sd) / sd;
    s1 * cdf(d1) - s2 * cdf(d1 - sd)
}

/// `E[(F·L − K)·1{A < F·L < B}]` for a mean-one lognormal `L` with total
/// standard deviation `sd`. `a = None` means no lower bound (A = 0),
/// `b = None` means no upper bound.
fn truncated_linear(f: f64, k: f64, a: Option<f64>, b: Option<f64>, sd: f64) -> f64 {
    let d1 = |x: Option<f64>| match x {
        None => f64::INFINITY,
        Some(x) if x <= 0.0 => f64::INFINITY,
        Some(x) => ((f / x).ln() + 0.5 * sd * sd) / sd,
    };
    let (d1a, d1b) = (d1(a), if b.is_none() { f64::NEG_INFINITY } else { d1(b) });
    let d2 = |d: f64| if d.is_infinite() { d } else { d - sd };
    let p1 = cdf(d1a) - cdf(d1b);
    let p2 = cdf(d2(d1a)) - cdf(d2(d1b));
    f * p1 - k * p2
}

/// Up-and-in barrier call on the continuously monitored maximum,
/// `E[1{max S ≥ H}(S_T − K)⁺]`, by the reflection principle.
pub fn barrier_up_in_call(s0: f64, h: f64, k: f64, sd: f64) -> f64 {
    if h <= s0 {
        return bs_call(s0, k, sd);
    }
    if sd == 0.0 {
        return 0.0;
    }
    // On {S_T ≥ H} the barrier was hit.
    let lower = if k > h { k } else { h };
    let direct = truncated_linear(s0, k, Some(lower), None, sd);
    // On {S_T < H} the hit paths have S_T ~ (s0/H)·law of F*·L, F* = H²/s0.
    let fstar = h * h / s0;
    let reflected = if k < h {
        let a = if k > 0.0 { Some(k) } else { None };
        truncated_linear(fstar, k, a, Some(h), sd)
    } else {
        0.0
    };
    direct + s0 / h * reflected
}

/// `Q(max S ≥ H)` for the continuously monitored maximum.
pub fn max_tail(s0: f64, h: f64, sd: f64) -> f64 {
    if h <= s0 {
        return 1.0;
    }
    if sd == 0.0 {
        return 0.0;
    }
    lognormal_tail(s0, h, sd) + s0 / h * (1.0 - lognormal_tail(h * h / s0, h, sd))
}

/// `E[max_{t≤T} S_t]` for the continuously monitored maximum.
pub fn expected_max(s0: f64, sd: f64) -> f64 {
    s0 * (2.0 * cdf(0.5 * sd) * (1.0 + 0.25 * sd * sd) + sd * pdf(0.5 * sd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bs_reference_value() {
        // S0 = K = 100, sigma = 0.2, T = 1, r = 0: 7.965567455405804.
        assert!((bs_call(100.0, 100.0, 0.2) - 7.965_567_455_405_804).abs() < 1e-12);
    }

    #[test]
    fn barrier_limits() {
        let sd = 0.2;
        // Barrier at or below spot: vanilla.
        assert_eq!(barrier_up_in_call(100.0, 90.0, 100.0, sd), bs_call(100.0, 100.0, sd));
        // Strike above barrier: every path finishing above K hit H.
        assert!((barrier_up_in_call(100.0, 110.0, 120.0, sd) - bs_call(100.0, 120.0, sd)).abs() < 1e-13);
        // K = 0 equals E[S_T 1{max ≥ H}] which is ≤ s0.
        let v0 = barrier_up_in_call(100.0, 130.0, 0.0, sd);
        assert!(v0 > 0.0 && v0 < 100.0);
        // Continuity in K at 0.
        let v1 = barrier_up_in_call(100.0, 130.0, 1e-9, sd);
        assert!((v0 - v1).abs() < 1e-8);
    }

    #[test]
    fn max_tail_matches_barrier_slope_at_zero_strike() {
        let (s0, h, sd) = (100.0, 125.0, 0.25);
        let dk = 1e-4;
        let slope = (barrier_up_in_call(s0, h, 2.0 * dk, sd) - barrier_up_in_call(s0, h, dk, sd)) / dk;
        assert!((slope + max_tail(s0, h, sd)).abs() < 1e-8);
    }

    #[test]
    fn expected_max_matches_tail_integral() {
        let (s0, sd) = (100.0, 0.2);
        let (tail, _) = crate::quad::adaptive(|h: f64| max_tail(s0, h, sd), s0, 2000.0, 1e-12, 1e-14);
        assert!((expected_max(s0, sd) - (s0 + tail)).abs() < 1e-9);
    }
}
