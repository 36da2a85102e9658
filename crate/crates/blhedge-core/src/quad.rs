//! One-dimensional quadrature: Gauss–Legendre rules, adaptive Gauss–Kronrod
//! (7/15) and composite Simpson / midpoint rules on breakpoint-aware segments.

use serde::{Deserialize, Serialize};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 15-point estimate on `[a, b]` with the embedded 7-point
/// Gauss value; returns `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration. Bisects the interval with the
/// largest error estimate until the total estimate drops below
/// `max(abs_tol, rel_tol * |I|)` or `max_intervals` is reached.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    adaptive_limited(&f, a, b, abs_tol, rel_tol, 2000)
}

pub fn adaptive_limited<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let (v, e) = gk15(f, a, b);
    let mut segs = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) && segs.len() < max_intervals {
        let (idx, _) = segs
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc });
        let (lo, hi, sv, se) = segs.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            segs.push((lo, hi, sv, 0.0));
            err -= se;
            continue;
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
        // Recompute from scratch to avoid drift in the running sums.
        total = 0.0;
        err = 0.0;
        for s in &segs {
            total += s.2;
            err += s.3;
        }
    }
    segs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total = pairwise_sum(&segs.iter().map(|s| s.2).collect::<Vec<_>>());
    (total, err)
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = if n > 1 {
            n as f64 * (z * p1 - p0) / (z * z - 1.0)
        } else {
            1.0
        };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Summation in a fixed binary-tree order; used wherever a reduction must
/// give the same bits regardless of how the terms were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n if n <= 8 => v.iter().sum(),
        n => {
            let h = n / 2;
            pairwise_sum(&v[..h]) + pairwise_sum(&v[h..])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    Simpson,
    Midpoint,
}

/// Nodes and weights of a composite rule on `[a, b]` with `nodes` points
/// (Simpson) or `nodes` cells (midpoint). Endpoints are returned as is; the
/// caller decides how to evaluate at segment boundaries.
pub fn composite_rule(a: f64, b: f64, nodes: usize, rule: Rule) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(nodes);
    match rule {
        Rule::Simpson => {
            let n = if nodes % 2 == 0 { nodes + 1 } else { nodes.max(3) };
            let cells = n - 1;
            let h = (b - a) / cells as f64;
            for i in 0..n {
                let x = if i == cells { b } else { a + h * i as f64 };
                let c = if i == 0 || i == cells {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                out.push((x, c * h / 3.0));
            }
        }
        Rule::Midpoint => {
            let h = (b - a) / nodes as f64;
            for i in 0..nodes {
                out.push((a + h * (i as f64 + 0.5), h));
            }
        }
    }
    out
}

/// Splits `[a, b]` at the given interior cut points (sorted, deduplicated)
/// and distributes about `nodes` points over the pieces in proportion to
/// their length, with a small floor per piece.
pub fn segmented_rule(a: f64, b: f64, cuts: &[f64], nodes: usize, rule: Rule) -> Vec<Segment> {
    let mut pts = vec![a];
    let mut cs: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    pts.extend(cs);
    pts.push(b);
    let len = b - a;
    let mut segs = Vec::with_capacity(pts.len() - 1);
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let share = ((hi - lo) / len * nodes as f64).ceil() as usize;
        let n = match rule {
            Rule::Simpson => share.max(5) | 1,
            Rule::Midpoint => share.max(4),
        };
        segs.push(Segment { lo, hi, points: composite_rule(lo, hi, n, rule) });
    }
    segs
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<(f64, f64)>,
}

/// Nudges a segment endpoint into the open segment so that a right-continuous
/// tail function is evaluated by its one-sided limit.
#[inline]
pub fn inside(x: f64, lo: f64, hi: f64) -> f64 {
    let d = 1e-13 * x.abs().max(1.0);
    if x <= lo {
        (lo + d).min(0.5 * (lo + hi))
    } else if x >= hi {
        (hi - d).max(0.5 * (lo + hi))
    } else {
        x
    }
}
