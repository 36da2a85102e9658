//! Standard normal functions and multivariate normal orthant probabilities.
//!
//! `orthant_upper(a, R)` is `P(Z_i > a_i for all i)` with `Z ~ N(0, R)`.
//! Dimension 2 integrates the Plackett/Sheppard angle form adaptively,
//! dimension 3 conditions on one coordinate and integrates the bivariate
//! result, and higher dimensions use separation of variables on a randomly
//! shifted Korobov lattice.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::quad;
use crate::rng::{Lane, Stream};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `P(Z > x)`, accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn inv_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `P(Z1 > h, Z2 > k)` for standard normals with correlation `rho`.
pub fn bvn_upper(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY {
        return sf(k);
    }
    if k == f64::NEG_INFINITY {
        return sf(h);
    }
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    let rho = rho.clamp(-1.0, 1.0);
    if rho >= 1.0 - 1e-15 {
        return sf(h.max(k));
    }
    if rho <= -1.0 + 1e-15 {
        // Z2 = -Z1: need h < Z1 < -k.
        return (cdf(-k) - cdf(h)).max(0.0);
    }
    let base = sf(h) * sf(k);
    if rho == 0.0 {
        return base;
    }
    let (hh, hk) = (h * h + k * k, h * k);
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        (-(hh - 2.0 * hk * s) / (2.0 * c * c)).exp()
    };
    let (v, _) = quad::adaptive(f, 0.0, rho.asin(), 1e-15, 1e-13);
    (base + v / (2.0 * PI)).clamp(0.0, 1.0)
}

/// `P(Z1 <= h, Z2 <= k)`.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    bvn_upper(-h, -k, rho)
}

/// `P(Z1 > a1, Z2 > a2, Z3 > a3)` with correlations `r12, r13, r23`.
pub fn tvn_upper(a: [f64; 3], r12: f64, r13: f64, r23: f64) -> f64 {
    let r = [[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]];
    // Condition on the coordinate whose correlations with the others are
    // furthest from +-1 so the conditional law stays non-degenerate.
    let pivot = (0..3)
        .min_by(|&i, &j| {
            let mi = (0..3).filter(|&o| o != i).map(|o| r[i][o].abs()).fold(0.0, f64::max);
            let mj = (0..3).filter(|&o| o != j).map(|o| r[j][o].abs()).fold(0.0, f64::max);
            mi.total_cmp(&mj)
        })
        .unwrap();
    let others: Vec<usize> = (0..3).filter(|&o| o != pivot).collect();
    let (p, q) = (others[0], others[1]);
    let (rp, rq) = (r[pivot][p], r[pivot][q]);
    let (sp, sq) = ((1.0 - rp * rp).max(0.0).sqrt(), (1.0 - rq * rq).max(0.0).sqrt());
    if sp < 1e-12 || sq < 1e-12 {
        let (v, _) = orthant_lattice(&a, &r.iter().map(|x| x.to_vec()).collect::<Vec<_>>(), 1 << 14, 0);
        return v;
    }
    let rc = ((r[p][q] - rp * rq) / (sp * sq)).clamp(-1.0, 1.0);
    let lo = a[pivot].max(-9.0);
    if lo >= 9.0 {
        return 0.0;
    }
    let f = |z: f64| {
        let hp = if a[p] == f64::NEG_INFINITY { f64::NEG_INFINITY } else { (a[p] - rp * z) / sp };
        let hq = if a[q] == f64::NEG_INFINITY { f64::NEG_INFINITY } else { (a[q] - rq * z) / sq };
        pdf(z) * bvn_upper(hp, hq, rc)
    };
    let (v, _) = quad::adaptive(f, lo, 9.0, 1e-14, 1e-12);
    v.clamp(0.0, 1.0)
}

/// Cholesky factor of a correlation matrix, tolerating semidefinite input by
/// zeroing columns with vanishing pivots.
pub fn cholesky_psd(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = r.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = r[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = if s > 1e-14 { s.sqrt() } else { 0.0 };
            } else if l[j][j] > 0.0 {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

/// Separation-of-variables estimate of the upper orthant probability on a
/// randomly shifted rank-1 lattice. Returns `(estimate, 3 * standard error
/// over 16 shifts)`.
pub fn orthant_lattice(a: &[f64], r: &[Vec<f64>], points: usize, seed: u64) -> (f64, f64) {
    let n = a.len();
    let l = cholesky_psd(r);
    let npts = next_prime(points.max(101));
    let gen = korobov_generator(npts, n);
    let shifts = 16;
    let mut lane = Lane::new(seed, Stream::Lattice, 0, 0);
    let mut means = Vec::with_capacity(shifts);
    for _ in 0..shifts {
        let shift: Vec<f64> = (0..n).map(|_| lane.uniform()).collect();
        let mut vals = Vec::with_capacity(npts);
        let mut w = vec![0.0; n];
        for k in 0..npts {
            let mut prob = 1.0;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..i {
                    s += l[i][j] * w[j];
                }
                if l[i][i] == 0.0 {
                    if s > a[i] {
                        w[i] = 0.0;
                        continue;
                    }
                    prob = 0.0;
                    break;
                }
                let d = cdf((a[i] - s) / l[i][i]);
                prob *= 1.0 - d;
                if prob == 0.0 || i + 1 == n {
                    break;
                }
                let x = (k as f64 * gen[i] as f64 / npts as f64 + shift[i]).fract();
                // Baker's periodising transform.
                let u = 1.0 - (2.0 * x - 1.0).abs();
                w[i] = inv_cdf(d + u * (1.0 - d));
            }
            vals.push(prob);
        }
        means.push(quad::pairwise_sum(&vals) / npts as f64);
    }
    let m = means.iter().sum::<f64>() / shifts as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (shifts * (shifts - 1)) as f64;
    (m, 3.0 * var.sqrt())
}

fn next_prime(n: usize) -> usize {
    let mut c = n | 1;
    loop {
        if (3..).step_by(2).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            return c;
        }
        c += 2;
    }
}

fn korobov_generator(n: usize, dim: usize) -> Vec<usize> {
    // Pick the Korobov multiplier with the best worst-case spread among a
    // small deterministic candidate set.
    let mut best = (vec![1; dim], 0.0);
    for a in (2..n).step_by((n / 64).max(1)).take(64) {
        let g: Vec<usize> = (0..dim).scan(1usize, |acc, _| {
            let v = *acc;
            *acc = (*acc * a) % n;
            Some(v)
        })
        .collect();
        let mut score = f64::INFINITY;
        for k in 1..n.min(512) {
            let d: f64 = g
                .iter()
                .map(|&gi| {
                    let x = (k * gi % n) as f64 / n as f64;
                    x.min(1.0 - x).max(1.0 / n as f64)
                })
                .product();
            score = score.min(d);
        }
        if score > best.1 {
            best = (g, score);
        }
    }
    best.0
}

/// Orthant probability for any dimension. Coordinates with threshold `-inf`
/// are dropped; a `+inf` threshold gives 0. Returns `(value, error bound)`.
pub fn orthant_upper(a: &[f64], r: &[Vec<f64>], seed: u64) -> (f64, f64) {
    if a.iter().any(|&x| x == f64::INFINITY) {
        return (0.0, 0.0);
    }
    let keep: Vec<usize> = (0..a.len()).filter(|&i| a[i] > f64::NEG_INFINITY).collect();
    let sub_a: Vec<f64> = keep.iter().map(|&i| a[i]).collect();
    let sub_r: Vec<Vec<f64>> = keep.iter().map(|&i| keep.iter().map(|&j| r[i][j]).collect()).collect();
    match keep.len() {
        0 => (1.0, 0.0),
        1 => (sf(sub_a[0]), 1e-16),
        2 => (bvn_upper(sub_a[0], sub_a[1], sub_r[0][1]), 1e-13),
        3 => (tvn_upper([sub_a[0], sub_a[1], sub_a[2]], sub_r[0][1], sub_r[0][2], sub_r[1][2]), 1e-11),
        _ => orthant_lattice(&sub_a, &sub_r, 1 << 15, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn univariate_reference_values() {
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 2e-16);
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((sf(8.0) / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bivariate_at_origin_matches_arcsine_law() {
        for rho in [-0.99, -0.7, -0.3, 0.0, 0.2, 0.5, 0.9, 0.999] {
            let exact = 0.25 + (rho as f64).asin() / (2.0 * PI);
            assert!((bvn_upper(0.0, 0.0, rho) - exact).abs() < 1e-14, "rho={rho}");
        }
    }

    #[test]
    fn bivariate_limits() {
        assert!((bvn_upper(0.3, -0.4, 1.0) - sf(0.3)).abs() < 1e-15);
        assert!((bvn_upper(-0.5, -0.2, -1.0) - (cdf(0.2) - cdf(-0.5))).abs() < 1e-15);
        assert!((bvn_upper(0.3, 1.1, 0.0) - sf(0.3) * sf(1.1)).abs() < 1e-16);
    }

    #[test]
    fn bivariate_against_tabulated_value() {
        // P(Z1 < 1, Z2 < 2; 0.5) by high-precision quadrature of pdf(x) * cdf((2 - x/2) / sqrt(3/4)).
        let v = bvn_cdf(1.0, 2.0, 0.5);
        assert!((v - 0.831_860_831_130_880_5).abs() < 1e-14, "{v}");
    }

    #[test]
    fn trivariate_at_origin_matches_closed_form() {
        let (r12, r13, r23): (f64, f64, f64) = (0.3, 0.5, -0.2);
        let exact = 0.125 + (r12.asin() + r13.asin() + r23.asin()) / (4.0 * PI);
        assert!((tvn_upper([0.0; 3], r12, r13, r23) - exact).abs() < 1e-11);
    }

    #[test]
    fn lattice_agrees_with_closed_form_in_four_dimensions() {
        // Equicorrelated rho = 1/2 orthant at zero: 1/5.
        let r: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.5 }).collect()).collect();
        let (v, e) = orthant_lattice(&[0.0; 4], &r, 1 << 13, 3);
        assert!((v - 0.2).abs() < e.max(1e-5), "{v} {e}");
    }
}
