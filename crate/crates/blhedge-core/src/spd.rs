//! State-price densities and probabilities from option price surfaces.
//!
//! Everything here is plain finite differencing of the observed prices.
//! Nothing is smoothed; non-convexity and negative mass are reported.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{mc_price_terminal, MCResult, MCSpec};
use crate::measure::{Discount, MeasureKind, PricingMeasure, Strictness};
use crate::payoff::VectorFn;
use crate::quad;
use crate::richardson::{extrapolate_to_zero, Extrapolation};
use crate::rng::{Lane, Stream};

/// Tolerance for monotonicity and convexity checks of 1-D call prices.
pub const ARBITRAGE_TOL: f64 = 1e-8;
/// Negative density tolerance.
pub const DENSITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Call1d,
    MultiLookback,
    Pyramid,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ArbitrageFlag {
    pub kind: String,
    pub strike: f64,
    pub amount: f64,
}

/// Prices on a complete tensor grid of strikes, last coordinate fastest.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CallSurface {
    pub kind: SurfaceKind,
    pub strikes: Vec<Vec<f64>>,
    pub prices: Vec<f64>,
}

impl CallSurface {
    pub fn new(kind: SurfaceKind, strikes: Vec<Vec<f64>>, prices: Vec<f64>) -> Result<Self> {
        if strikes.is_empty() {
            return invalid("surface needs at least one strike axis");
        }
        if kind == SurfaceKind::Call1d && strikes.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: strikes.len() });
        }
        for (i, ax) in strikes.iter().enumerate() {
            if ax.is_empty() {
                return invalid(format!("strike axis {} is empty", i + 1));
            }
            if ax.windows(2).any(|w| !(w[1] > w[0])) {
                return invalid(format!("strikes on axis {} must be strictly increasing", i + 1));
            }
        }
        let count: usize = strikes.iter().map(Vec::len).product();
        if prices.len() != count {
            return Err(Error::DimensionMismatch { expected: count, got: prices.len() });
        }
        if let Some(p) = prices.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return invalid(format!("prices must be finite and non-negative, found {p}"));
        }
        Ok(Self { kind, strikes, prices })
    }

    pub fn call_1d(strikes: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        Self::new(SurfaceKind::Call1d, vec![strikes], prices)
    }

    /// Tabulates `f` on the tensor grid (in parallel).
    pub fn from_fn<F>(kind: SurfaceKind, strikes: Vec<Vec<f64>>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let count: usize = strikes.iter().map(Vec::len).product();
        let prices: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|flat| {
                let x = point(&strikes, flat);
                f(&x)
            })
            .collect();
        Self::new(kind, strikes, prices)
    }

    pub fn dim(&self) -> usize {
        self.strikes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.strikes.iter().map(Vec::len).collect()
    }

    /// Flat index of a multi-index.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (ax, i) in self.strikes.iter().zip(idx) {
            f = f * ax.len() + i;
        }
        f
    }

    /// Monotonicity and convexity violations of a 1-D call curve.
    pub fn arbitrage_flags(&self) -> Vec<ArbitrageFlag> {
        let mut out = Vec::new();
        if self.kind != SurfaceKind::Call1d {
            return out;
        }
        let k = &self.strikes[0];
        let c = &self.prices;
        for i in 1..k.len() {
            if c[i] > c[i - 1] + ARBITRAGE_TOL {
                out.push(ArbitrageFlag { kind: "monotonicity".into(), strike: k[i], amount: c[i] - c[i - 1] });
            }
        }
        for i in 1..k.len().saturating_sub(1) {
            let d = second_difference(k[i - 1], k[i], k[i + 1], c[i - 1], c[i], c[i + 1]);
            let scale = 0.5 * (k[i + 1] - k[i - 1]);
            if d * scale < -ARBITRAGE_TOL {
                out.push(ArbitrageFlag { kind: "convexity".into(), strike: k[i], amount: d * scale });
            }
        }
        out
    }

    /// Linear interpolation of a 1-D curve; `None` outside the grid.
    pub fn interpolate_1d(&self, x: f64) -> Option<f64> {
        let k = &self.strikes[0];
        if x < k[0] || x > k[k.len() - 1] {
            return None;
        }
        let j = k.partition_point(|v| *v <= x);
        if j == k.len() {
            return Some(self.prices[k.len() - 1]);
        }
        let j = j.max(1);
        let (a, b) = (k[j - 1], k[j]);
        let t = (x - a) / (b - a);
        Some(self.prices[j - 1] * (1.0 - t) + self.prices[j] * t)
    }
}

fn point(strikes: &[Vec<f64>], mut flat: usize) -> Vec<f64> {
    let mut x = vec![0.0; strikes.len()];
    for d in (0..strikes.len()).rev() {
        let l = strikes[d].len();
        x[d] = strikes[d][flat % l];
        flat /= l;
    }
    x
}

fn second_difference(k0: f64, k1: f64, k2: f64, c0: f64, c1: f64, c2: f64) -> f64 {
    let (hm, hp) = (k1 - k0, k2 - k1);
    2.0 * ((c2 - c1) / hp - (c1 - c0) / hm) / (hm + hp)
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityGrid {
    /// Coordinates per axis of the points carrying `density`.
    pub coords: Vec<Vec<f64>>,
    /// Density values, last coordinate fastest.
    pub density: Vec<f64>,
    /// Probability carried by each point (density times cell volume).
    pub masses: Vec<f64>,
    pub mass: f64,
    pub negative_cells: usize,
    pub negative_mass_fraction: f64,
    pub arbitrage: Vec<ArbitrageFlag>,
    pub warnings: Vec<String>,
}

impl DensityGrid {
    fn finish(coords: Vec<Vec<f64>>, density: Vec<f64>, masses: Vec<f64>, arbitrage: Vec<ArbitrageFlag>) -> Self {
        let mass = quad::pairwise_sum(&masses);
        let negative_cells = density.iter().filter(|d| **d < -DENSITY_TOL).count();
        let neg: f64 = masses.iter().filter(|m| **m < 0.0).map(|m| -m).sum();
        let abs: f64 = masses.iter().map(|m| m.abs()).sum();
        let negative_mass_fraction = if abs > 0.0 { neg / abs } else { 0.0 };
        let mut warnings = Vec::new();
        if negative_cells > 0 {
            warnings.push(format!("{negative_cells} points with density below -{DENSITY_TOL:e}"));
        }
        if !arbitrage.is_empty() {
            warnings.push(format!("{} arbitrage violations in the input surface", arbitrage.len()));
        }
        Self { coords, density, masses, mass, negative_cells, negative_mass_fraction, arbitrage, warnings }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `∫ g dQ` with `g` evaluated at the grid points.
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, g: F) -> f64 {
        let v: Vec<f64> = self
            .masses
            .par_iter()
            .enumerate()
            .map(|(f, m)| if *m == 0.0 { 0.0 } else { m * g(&point(&self.coords, f)) })
            .collect();
        quad::pairwise_sum(&v)
    }
}

/// Breeden–Litzenberger density `∂²C/∂K²` by central second differences
/// (non-uniform grids allowed). Endpoints take the one-sided value of their
/// neighbour; masses are trapezoid weights.
pub fn bl_density_1d(s: &CallSurface) -> Result<DensityGrid> {
    if s.kind != SurfaceKind::Call1d {
        return invalid("bl_density_1d needs a call_1d surface");
    }
    let k = &s.strikes[0];
    let c = &s.prices;
    let n = k.len();
    if n < 5 {
        return invalid(format!("at least 5 strikes are required, got {n}"));
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = second_difference(k[i - 1], k[i], k[i + 1], c[i - 1], c[i], c[i + 1]);
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    let masses: Vec<f64> = (0..n)
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { 0.5 * (k[i] - k[i - 1]) };
            let hi = if i == n - 1 { 0.0 } else { 0.5 * (k[i + 1] - k[i]) };
            d[i] * (lo + hi)
        })
        .collect();
    Ok(DensityGrid::finish(vec![k.clone()], d, masses, s.arbitrage_flags()))
}

#[derive(Clone, Debug, Serialize)]
pub struct DigitalEstimate {
    /// Non-strict tail `Q(X ≥ K)`.
    pub probability: f64,
    pub steps: Vec<f64>,
    pub quotients: Vec<f64>,
    pub extrapolation: Extrapolation,
    pub warnings: Vec<String>,
}

/// Default spread widths `{4, 2, 1}·h`, `h` the grid spacing just below `K`.
pub fn default_spread_steps(s: &CallSurface, k: f64) -> Vec<f64> {
    let ax = &s.strikes[0];
    let j = ax.partition_point(|v| *v < k).clamp(1, ax.len() - 1);
    let h = ax[j] - ax[j - 1];
    vec![4.0 * h, 2.0 * h, h]
}

/// `Q(X ≥ K)` as the limit of `(C(K − dK) − C(K))/dK` for `dK → 0⁺`
/// (linear interpolation between strikes, Neville extrapolation).
pub fn digital_from_call_spread(s: &CallSurface, k: f64, steps: &[f64]) -> Result<DigitalEstimate> {
    if s.kind != SurfaceKind::Call1d {
        return invalid("digital_from_call_spread needs a call_1d surface");
    }
    if steps.is_empty() || steps.iter().any(|d| !(*d > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("spread widths must be positive and strictly decreasing");
    }
    let ck = s.interpolate_1d(k).ok_or_else(|| Error::InvalidInput(format!("strike {k} outside the grid")))?;
    let ax = &s.strikes[0];
    let mut warnings = Vec::new();
    let mut quotients = Vec::with_capacity(steps.len());
    for d in steps {
        let lo = s
            .interpolate_1d(k - d)
            .ok_or_else(|| Error::InvalidInput(format!("strike {} outside the grid", k - d)))?;
        quotients.push((lo - ck) / d);
        let j = ax.partition_point(|v| *v < k).clamp(1, ax.len() - 1);
        if *d < ax[j] - ax[j - 1] - 1e-12 {
            warnings.push(format!("spread width {d} is below the grid spacing near K"));
        }
    }
    let extrapolation = extrapolate_to_zero(steps, &quotients, steps.len());
    for w in quotients.windows(2) {
        if w[1] > w[0] + ARBITRAGE_TOL {
            warnings.push("spread quotients are not monotone in the width".into());
            break;
        }
    }
    Ok(DigitalEstimate { probability: extrapolation.estimate, steps: steps.to_vec(), quotients, extrapolation, warnings })
}

/// `E max_i (X_i − x_i)⁺` by inclusion–exclusion over coordinate subsets,
/// `E min_{i∈S}(X_i − x_i)⁺ = ∫₀^∞ Q(X_i > x_i + u, i ∈ S) du`.
pub fn multi_lookback_value(m: &PricingMeasure, x: &[f64]) -> f64 {
    let n = m.dim();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let coords: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sign = if coords.len() % 2 == 1 { 1.0 } else { -1.0 };
        if let (1, Some((s0, sd))) = (coords.len(), m.lognormal_params(coords[0])) {
            total += crate::analytic::bs_call(s0, x[coords[0]], sd);
            continue;
        }
        let upper = coords.iter().map(|&i| m.upper_truncation(i) - x[i]).fold(f64::INFINITY, f64::min);
        if upper <= 0.0 {
            continue;
        }
        let strict = vec![Strictness::Gt; coords.len()];
        let f = |u: f64| {
            let y: Vec<f64> = coords.iter().map(|&i| x[i] + u).collect();
            m.tail_subset(&coords, &y, &strict)
        };
        // Cuts at atom locations keep the rule exact on step functions.
        let mut cuts: Vec<f64> = coords
            .iter()
            .flat_map(|&i| m.atom_coordinates(i).into_iter().map(move |a| a - x[i]))
            .filter(|c| *c > 0.0 && *c < upper)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = vec![0.0];
        edges.extend(cuts);
        edges.push(upper);
        let v: f64 = edges.windows(2).map(|w| quad::adaptive(&f, w[0], w[1], 1e-11, 1e-13).0).sum();
        total += sign * v;
    }
    total
}

/// Recovers the joint density from a multi-asset look-back surface by
/// applying `∂ⁿ/∂x₁…∂xₙ` to `Σ_i ∂_i V`. The inner sum uses central
/// differences at interior nodes; the outer mixed derivative is a cell
/// difference, so densities live at cell midpoints.
pub fn joint_density_nd(s: &CallSurface) -> Result<DensityGrid> {
    let n = s.dim();
    if !(2..=3).contains(&n) {
        return invalid(format!("joint density needs n in 2..=3, got {n}"));
    }
    let shape = s.shape();
    if shape.iter().any(|l| *l < 4) {
        return invalid("each axis needs at least 4 strikes");
    }
    // Σ_i ∂_i V on interior nodes.
    let inner: Vec<usize> = shape.iter().map(|l| l - 2).collect();
    let inner_count: usize = inner.iter().product();
    let unflat = |mut f: usize, dims: &[usize]| {
        let mut idx = vec![0; dims.len()];
        for d in (0..dims.len()).rev() {
            idx[d] = f % dims[d];
            f /= dims[d];
        }
        idx
    };
    let sum_grad: Vec<f64> = (0..inner_count)
        .map(|f| {
            let idx: Vec<usize> = unflat(f, &inner).iter().map(|i| i + 1).collect();
            let mut g = 0.0;
            for d in 0..n {
                let mut up = idx.clone();
                let mut dn = idx.clone();
                up[d] += 1;
                dn[d] -= 1;
                let h = s.strikes[d][up[d]] - s.strikes[d][dn[d]];
                g += (s.prices[s.flat(&up)] - s.prices[s.flat(&dn)]) / h;
            }
            g
        })
        .collect();
    let inner_flat = |idx: &[usize]| {
        let mut f = 0;
        for (d, i) in idx.iter().enumerate() {
            f = f * inner[d] + i;
        }
        f
    };
    let cells: Vec<usize> = inner.iter().map(|l| l - 1).collect();
    let cell_count: usize = cells.iter().product();
    let mut density = Vec::with_capacity(cell_count);
    let mut masses = Vec::with_capacity(cell_count);
    for f in 0..cell_count {
        let idx = unflat(f, &cells);
        let mut m = 0.0;
        for corner in 0u32..(1 << n) {
            let mut c = idx.clone();
            let mut ones = 0;
            for (d, ci) in c.iter_mut().enumerate() {
                if corner & (1 << d) != 0 {
                    *ci += 1;
                    ones += 1;
                }
            }
            let sign = if (n - ones) % 2 == 0 { 1.0 } else { -1.0 };
            m += sign * sum_grad[inner_flat(&c)];
        }
        let vol: f64 = (0..n).map(|d| s.strikes[d][idx[d] + 2] - s.strikes[d][idx[d] + 1]).product();
        masses.push(m);
        density.push(m / vol);
    }
    let coords: Vec<Vec<f64>> =
        (0..n).map(|d| (1..shape[d] - 2).map(|j| 0.5 * (s.strikes[d][j] + s.strikes[d][j + 1])).collect()).collect();
    let mut grid = DensityGrid::finish(coords, density, masses, vec![]);
    if grid.negative_mass_fraction > 0.05 {
        grid.warnings.push(format!(
            "negative mass fraction {:.3} exceeds 5%; the surface is too noisy for third-order differencing, consider smoothing it first",
            grid.negative_mass_fraction
        ));
    }
    Ok(grid)
}

/// Monte Carlo price of `(Σ_i (X_i − K_i)⁺ − K)⁺`.
pub fn pyramid_price(m: &PricingMeasure, kv: &[f64], k: f64, spec: &MCSpec, disc: &Discount) -> Result<MCResult> {
    if kv.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: kv.len() });
    }
    mc_price_terminal(m, |x: &[f64]| (x.iter().zip(kv).map(|(a, b)| (a - b).max(0.0)).sum::<f64>() - k).max(0.0), spec, disc)
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleRecovery {
    /// Recovered `Q(M_i ≤ f_i < K_i ∀i)`.
    pub probability: f64,
    /// Direct enumeration over atoms.
    pub direct: f64,
    pub eps: f64,
    /// Smallest gap between distinct atom values of any `f_i`.
    pub min_gap: f64,
    /// True when no atom value falls within `ε` below a rectangle edge.
    pub exact: bool,
    pub call_expectations: usize,
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn pos(x: BigRational) -> BigRational {
    if x.is_positive() {
        x
    } else {
        BigRational::zero()
    }
}

/// `Q(⋀_i M_i ≤ f_i(X) < K_i)` from product-call expectations only:
/// `E g_ε` with `g_ε = ∏_i ε⁻¹[(f_i−M_i+ε)⁺ − (f_i−M_i)⁺ − (f_i−K_i+ε)⁺ + (f_i−K_i)⁺]`
/// expanded into `4ⁿ` expectations `E ∏(f_i − c_i)⁺`, each computed in
/// exact rational arithmetic over the atoms.
pub fn rectangle_prob_recovery(m: &PricingMeasure, fs: &[VectorFn], lo: &[f64], hi: &[f64], eps: f64) -> Result<RectangleRecovery> {
    let (atoms, weights) = match m.kind() {
        MeasureKind::Discrete { atoms, weights } => (atoms, weights),
        _ => return invalid("rectangle recovery needs a discrete measure"),
    };
    let n = fs.len();
    if n == 0 || n > 6 || lo.len() != n || hi.len() != n {
        return invalid("need 1..=6 functions with matching lower and upper bounds");
    }
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    let vals: Vec<Vec<f64>> = atoms.iter().map(|a| fs.iter().map(|f| f(a)).collect()).collect();
    if vals.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("functions must be finite on the atoms");
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        let mut v: Vec<f64> = vals.iter().map(|r| r[i]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        for w in v.windows(2) {
            min_gap = min_gap.min(w[1] - w[0]);
        }
    }
    let near_edge = vals.iter().any(|r| {
        (0..n).any(|i| (r[i] < lo[i] && r[i] > lo[i] - eps) || (r[i] < hi[i] && r[i] > hi[i] - eps))
    });
    let exact = !near_edge && (min_gap.is_infinite() || eps < 0.5 * min_gap);

    let rv: Vec<Vec<BigRational>> = vals.iter().map(|r| r.iter().map(|v| rational(*v)).collect()).collect();
    let rw: Vec<BigRational> = weights.iter().map(|w| rational(*w)).collect();
    let e = rational(eps);
    // Per coordinate: the four (shift, sign) legs of the scaled spread.
    let legs: Vec<[(BigRational, i32); 4]> = (0..n)
        .map(|i| {
            let (l, h) = (rational(lo[i]), rational(hi[i]));
            [(&l - &e, 1), (l.clone(), -1), (&h - &e, -1), (h.clone(), 1)]
        })
        .collect();
    let terms = 4usize.pow(n as u32);
    let mut total = BigRational::zero();
    for t in 0..terms {
        let mut code = t;
        let mut sign = 1;
        let mut shift = Vec::with_capacity(n);
        for leg in &legs {
            let (c, s) = &leg[code % 4];
            code /= 4;
            sign *= s;
            shift.push(c.clone());
        }
        // E ∏_i (f_i − c_i)⁺
        let mut ex = BigRational::zero();
        for (r, w) in rv.iter().zip(&rw) {
            let mut prod = w.clone();
            for (v, c) in r.iter().zip(&shift) {
                prod *= pos(v - c);
                if prod.is_zero() {
                    break;
                }
            }
            ex += prod;
        }
        if sign > 0 {
            total += ex;
        } else {
            total -= ex;
        }
    }
    let scale = BigRational::from_integer(BigInt::from(1)) / num_traits::pow(e, n);
    let probability = (total * scale).to_f64().unwrap_or(f64::NAN);
    let direct: f64 = vals
        .iter()
        .zip(weights)
        .filter(|(r, _)| (0..n).all(|i| lo[i] <= r[i] && r[i] < hi[i]))
        .map(|(_, w)| *w)
        .sum();
    Ok(RectangleRecovery { probability, direct, eps, min_gap, exact, call_expectations: terms })
}

/// Coordinate projections `x ↦ x_i`, the identity payoff functions.
pub fn coordinate_functions(n: usize) -> Vec<VectorFn> {
    (0..n).map(|i| std::sync::Arc::new(move |x: &[f64]| x[i]) as VectorFn).collect()
}

/// `count` random rectangles `[lo, hi)` with edges drawn uniformly from
/// `[0.8·min, 1.2·max]` of each coordinate's atoms.
pub fn random_rectangles(m: &PricingMeasure, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let range: Vec<(f64, f64)> = (0..m.dim())
        .map(|i| {
            let a = m.atom_coordinates(i);
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(0.0, f64::max);
            (0.8 * lo.min(hi), 1.2 * hi)
        })
        .collect();
    (0..count)
        .map(|j| {
            let mut lane = Lane::new(seed, Stream::Lattice, 0, j as u32);
            range
                .iter()
                .map(|(a, b)| {
                    let u = a + (b - a) * lane.uniform();
                    let v = a + (b - a) * lane.uniform();
                    (u.min(v), u.max(v))
                })
                .unzip()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{bs_call, lognormal_pdf};
    use crate::fixtures;

    fn bs_surface(h: f64) -> CallSurface {
        let ks: Vec<f64> = (0..).map(|j| 20.0 + h * j as f64).take_while(|k| *k <= 300.0 + 1e-9).collect();
        CallSurface::from_fn(SurfaceKind::Call1d, vec![ks], |k| bs_call(100.0, k[0], 0.2)).unwrap()
    }

    #[test]
    fn affine_section_has_zero_density() {
        let ks: Vec<f64> = (0..20).map(|j| j as f64).collect();
        let ps: Vec<f64> = ks.iter().map(|k| if *k < 10.0 { 30.0 - 2.0 * k } else { 10.0 }).collect();
        // Non-increasing but with a decreasing slope then flat: convex kink at 10.
        let s = CallSurface::call_1d(ks, ps).unwrap();
        let d = bl_density_1d(&s).unwrap();
        for (i, v) in d.density.iter().enumerate() {
            if i != 10 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn bl_density_matches_lognormal() {
        let d = bl_density_1d(&bs_surface(0.5)).unwrap();
        let err = d.coords[0]
            .iter()
            .zip(&d.density)
            .map(|(k, v)| (v - lognormal_pdf(100.0, *k, 0.2)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2e-5, "{err}");
        assert!((d.mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn digital_at_binomial_atom_is_non_strict() {
        let m = fixtures::binomial_1d();
        let ks: Vec<f64> = (0..=400).map(|j| j as f64 * 0.5).collect();
        let s = CallSurface::from_fn(SurfaceKind::Call1d, vec![ks], |k| {
            m.atom_expectation(|x| (x[0] - k[0]).max(0.0)).unwrap()
        })
        .unwrap();
        let est = digital_from_call_spread(&s, 100.0, &[2.0, 1.0, 0.5]).unwrap();
        let ge = m.marginal_tail(0, 100.0, Strictness::Ge);
        assert!((est.probability - ge).abs() < 1e-12, "{} vs {ge}", est.probability);
    }

    #[test]
    fn rectangle_recovery_small_cases() {
        let m = fixtures::binomial_2d();
        let fs = coordinate_functions(2);
        let all = rectangle_prob_recovery(&m, &fs, &[0.0, 0.0], &[1e3, 1e3], 0.01).unwrap();
        assert!((all.probability - 1.0).abs() < 1e-12);
        let none = rectangle_prob_recovery(&m, &fs, &[100.5, 0.0], &[105.0, 1e3], 0.01).unwrap();
        assert!(none.probability.abs() < 1e-12);
    }
}
