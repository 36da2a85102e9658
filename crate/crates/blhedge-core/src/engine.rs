//! Split-decomposition pricer.
//!
//! A product payoff `h(x̄) = Σ_k c_k ∏_j f_{k,j}(x_j)` is priced by expanding
//! every factor as `f(0) + ∫f'(a)1{x>a}da + Σ Δ̃₊f·1{x>s} + Σ Δ̃₋f·1{x≥s}`.
//! The expansion yields one term per split `(z,d,r,l)` of the coordinates,
//! 4ⁿ in all; each is an integral (or finite sum) of a joint tail
//! probability of the pricing measure.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{Discount, PricingMeasure, Strictness};
use crate::payoff::{BlackBoxPayoff, PiecewisePayoff1D, ProductPayoff};
use crate::quad::{self, Rule};
use crate::richardson::{self, Extrapolation};

pub const MAX_DIM: usize = 6;
/// `|A|` above this is treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Zero,
    Derivative,
    RightJump,
    LeftJump,
}

const ROLES: [Role; 4] = [Role::Zero, Role::Derivative, Role::RightJump, Role::LeftJump];

/// A partition of the coordinates into the four roles. Indices are 0-based
/// internally and 1-based in JSON and `Display`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Split {
    roles: Vec<Role>,
}

#[derive(Serialize)]
struct SplitJson {
    z: Vec<usize>,
    d: Vec<usize>,
    r: Vec<usize>,
    l: Vec<usize>,
}

impl Serialize for Split {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let one = |r| self.indices(r).into_iter().map(|i| i + 1).collect();
        SplitJson { z: one(Role::Zero), d: one(Role::Derivative), r: one(Role::RightJump), l: one(Role::LeftJump) }
            .serialize(s)
    }
}

impl Split {
    pub fn new(roles: Vec<Role>) -> Self {
        Self { roles }
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn dim(&self) -> usize {
        self.roles.len()
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles.iter().enumerate().filter(|(_, r)| **r == role).map(|(i, _)| i).collect()
    }

    pub fn z(&self) -> Vec<usize> {
        self.indices(Role::Zero)
    }

    pub fn d(&self) -> Vec<usize> {
        self.indices(Role::Derivative)
    }

    pub fn r(&self) -> Vec<usize> {
        self.indices(Role::RightJump)
    }

    pub fn l(&self) -> Vec<usize> {
        self.indices(Role::LeftJump)
    }

    /// True when no coordinate takes a jump role.
    pub fn is_continuous(&self) -> bool {
        self.roles.iter().all(|r| matches!(r, Role::Zero | Role::Derivative))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = |r| self.indices(r).iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
        write!(
            f,
            "z={{{}}} d={{{}}} r={{{}}} l={{{}}}",
            one(Role::Zero),
            one(Role::Derivative),
            one(Role::RightJump),
            one(Role::LeftJump)
        )
    }
}

/// All 4ⁿ splits, lexicographic with coordinate 1 most significant and
/// roles ordered z < d < r < l.
pub fn enumerate_splits(n: usize) -> Result<Vec<Split>> {
    splits_with_roles(n, &ROLES)
}

fn splits_with_roles(n: usize, roles: &[Role]) -> Result<Vec<Split>> {
    if n == 0 || n > MAX_DIM {
        return invalid(format!("split enumeration needs 1 <= n <= {MAX_DIM}, got {n}"));
    }
    let b = roles.len();
    let total = b.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut rs = vec![Role::Zero; n];
        for j in (0..n).rev() {
            rs[j] = roles[c % b];
            c /= b;
        }
        out.push(Split::new(rs));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Per-coordinate truncation; the measure's own bound when absent.
    pub upper: Option<Vec<f64>>,
    pub nodes: usize,
    pub rule: Rule,
    pub adaptive: bool,
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { upper: None, nodes: 401, rule: Rule::Simpson, adaptive: false, abs_tol: 1e-7 }
    }
}

impl QuadratureSpec {
    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.nodes < 3 {
            return invalid(format!("quadrature needs at least 3 nodes, got {}", self.nodes));
        }
        if self.rule == Rule::Simpson && self.nodes % 2 == 0 {
            return invalid(format!("Simpson node count must be odd, got {}", self.nodes));
        }
        if !(self.abs_tol > 0.0) {
            return invalid("abs_tol must be positive");
        }
        if let Some(u) = &self.upper {
            if u.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: u.len() });
            }
            if u.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return invalid("truncation bounds must be positive and finite");
            }
        }
        Ok(())
    }

    pub fn upper_for(&self, m: &PricingMeasure, i: usize) -> f64 {
        match &self.upper {
            Some(u) => u[i],
            None => m.upper_truncation(i),
        }
    }
}

/// One quadrature node for an integral over a threshold `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridNode {
    /// Evaluation point (nudged off segment endpoints).
    pub y: f64,
    pub w: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Quadrature nodes on `[0, U_i]` for the derivative leg of the given
/// factors: segments are cut at every factor breakpoint and every atom of
/// coordinate `i`; segments on which all factors are flat are dropped.
pub fn derivative_grid(factors: &[&PiecewisePayoff1D], m: &PricingMeasure, i: usize, q: &QuadratureSpec) -> Vec<GridNode> {
    let u = q.upper_for(m, i);
    let mut cuts: Vec<f64> = factors.iter().flat_map(|f| f.breakpoints().iter().copied()).collect();
    cuts.extend(m.atom_coordinates(i));
    let mut out = Vec::new();
    for seg in quad::segmented_rule(0.0, u, &cuts, q.nodes, q.rule) {
        let mid = 0.5 * (seg.lo + seg.hi);
        if factors.iter().all(|f| f.is_flat_at(mid)) {
            continue;
        }
        for (x, w) in seg.points {
            out.push(GridNode { y: quad::inside(x, seg.lo, seg.hi), w, lo: seg.lo, hi: seg.hi });
        }
    }
    out
}

/// Integrates a one-dimensional function on `[lo, hi]` with the spec's rule,
/// cutting at `cuts` and evaluating endpoints by one-sided limits. With
/// `adaptive` each piece is integrated by adaptive Gauss–Kronrod instead.
pub fn integrate_1d<F: Fn(f64) -> f64 + Sync>(f: F, lo: f64, hi: f64, cuts: &[f64], q: &QuadratureSpec) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let segs = quad::segmented_rule(lo, hi, cuts, q.nodes, q.rule);
    let parts: Vec<f64> = segs
        .par_iter()
        .map(|s| {
            if q.adaptive {
                quad::adaptive(&f, s.lo, s.hi, q.abs_tol / segs.len() as f64, 1e-12).0
            } else {
                let v: Vec<f64> = s.points.iter().map(|(x, w)| w * f(quad::inside(*x, s.lo, s.hi))).collect();
                quad::pairwise_sum(&v)
            }
        })
        .collect();
    quad::pairwise_sum(&parts)
}

/// Nodes of one constrained coordinate: thresholds, weights and per-term
/// factor values (node-major).
struct Axis {
    coord: usize,
    strict: Strictness,
    ys: Vec<f64>,
    ws: Vec<f64>,
    vals: Vec<f64>,
}

impl Axis {
    fn len(&self) -> usize {
        self.ys.len()
    }
}

fn jump_at(f: &PiecewisePayoff1D, s: f64, right: bool) -> f64 {
    f.jump_atoms()
        .iter()
        .find(|a| a.location == s)
        .map(|a| if right { a.right } else { a.left })
        .unwrap_or(0.0)
}

fn build_axis(role: Role, coord: usize, factors: &[&PiecewisePayoff1D], m: &PricingMeasure, q: &QuadratureSpec) -> Axis {
    let nt = factors.len();
    match role {
        Role::Derivative => {
            let grid = derivative_grid(factors, m, coord, q);
            let mut vals = Vec::with_capacity(grid.len() * nt);
            for g in &grid {
                vals.extend(factors.iter().map(|f| f.deriv(g.y)));
            }
            Axis {
                coord,
                strict: Strictness::Gt,
                ys: grid.iter().map(|g| g.y).collect(),
                ws: grid.iter().map(|g| g.w).collect(),
                vals,
            }
        }
        Role::RightJump | Role::LeftJump => {
            let right = role == Role::RightJump;
            let mut locs: Vec<f64> = factors
                .iter()
                .flat_map(|f| f.jump_atoms())
                .filter(|a| if right { a.right != 0.0 } else { a.left != 0.0 })
                .map(|a| a.location)
                .collect();
            locs.sort_by(f64::total_cmp);
            locs.dedup();
            let mut vals = Vec::with_capacity(locs.len() * nt);
            for &s in &locs {
                vals.extend(factors.iter().map(|f| jump_at(f, s, right)));
            }
            Axis {
                coord,
                strict: if right { Strictness::Gt } else { Strictness::Ge },
                ws: vec![1.0; locs.len()],
                ys: locs,
                vals,
            }
        }
        Role::Zero => unreachable!("zero coordinates carry no axis"),
    }
}

/// `(Σ w·g·Q, Σ w·|g|·Q)` over the tensor product of the axes, where `g` is
/// the combined per-node payoff weight `Σ_k coef_k ∏ vals_k`.
fn integrate_axes(m: &PricingMeasure, coefs: &[f64], axes: &[Axis]) -> (f64, f64) {
    let nt = coefs.len();
    if axes.is_empty() {
        let g: f64 = coefs.iter().sum();
        return (g, g.abs());
    }
    if axes.iter().any(|a| a.len() == 0) {
        return (0.0, 0.0);
    }
    let coords: Vec<usize> = axes.iter().map(|a| a.coord).collect();
    let stricts: Vec<Strictness> = axes.iter().map(|a| a.strict).collect();
    let depth = axes.len();
    let parts: Vec<(f64, f64)> = (0..axes[0].len())
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; depth];
            idx[0] = i0;
            let mut y = vec![0.0; depth];
            let (mut acc, mut acc_abs) = (0.0, 0.0);
            loop {
                let mut g = 0.0;
                for (k, c) in coefs.iter().enumerate() {
                    let mut p = *c;
                    for (a, &i) in axes.iter().zip(&idx) {
                        if p == 0.0 {
                            break;
                        }
                        p *= a.vals[i * nt + k];
                    }
                    g += p;
                }
                if g != 0.0 {
                    let mut w = 1.0;
                    for (l, a) in axes.iter().enumerate() {
                        y[l] = a.ys[idx[l]];
                        w *= a.ws[idx[l]];
                    }
                    let q = m.tail_subset(&coords, &y, &stricts);
                    acc += w * g * q;
                    acc_abs += w * g.abs() * q;
                }
                let mut l = depth - 1;
                loop {
                    if l == 0 {
                        return (acc, acc_abs);
                    }
                    idx[l] += 1;
                    if idx[l] < axes[l].len() {
                        break;
                    }
                    idx[l] = 0;
                    l -= 1;
                }
            }
        })
        .collect();
    let v: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let a: Vec<f64> = parts.iter().map(|p| p.1).collect();
    (quad::pairwise_sum(&v), quad::pairwise_sum(&a))
}

/// True when every term of `h` vanishes structurally under `s`: some factor
/// is zero at 0 (z), has no slope anywhere (d), or has no jump of the
/// required side (r, l).
pub fn split_is_structurally_zero(s: &Split, h: &ProductPayoff) -> bool {
    h.terms().iter().all(|t| {
        t.coef == 0.0
            || s.roles().iter().zip(&t.factors).any(|(role, f)| match role {
                Role::Zero => f.value_at_zero() == 0.0,
                Role::Derivative => f.pieces().iter().all(|p| p.is_constant()),
                Role::RightJump => f.jump_atoms().iter().all(|a| a.right == 0.0),
                Role::LeftJump => f.jump_atoms().iter().all(|a| a.left == 0.0),
            })
    })
}

fn check_inputs(n: usize, m: &PricingMeasure, q: &QuadratureSpec) -> Result<()> {
    if n != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: n });
    }
    if n > MAX_DIM {
        return invalid(format!("dimension {n} exceeds the cap of {MAX_DIM}"));
    }
    q.validate(n)
}

/// `(A, |A|)` for one split.
fn split_value(s: &Split, h: &ProductPayoff, m: &PricingMeasure, q: &QuadratureSpec) -> Result<(f64, f64)> {
    check_inputs(h.dim(), m, q)?;
    if s.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: s.dim() });
    }
    let coefs: Vec<f64> = h
        .terms()
        .iter()
        .map(|t| {
            t.coef
                * s.roles()
                    .iter()
                    .zip(&t.factors)
                    .filter(|(r, _)| **r == Role::Zero)
                    .map(|(_, f)| f.value_at_zero())
                    .product::<f64>()
        })
        .collect();
    let mut axes = Vec::new();
    for (j, role) in s.roles().iter().enumerate() {
        if *role == Role::Zero {
            continue;
        }
        let factors: Vec<&PiecewisePayoff1D> = h.terms().iter().map(|t| &t.factors[j]).collect();
        axes.push(build_axis(*role, j, &factors, m, q));
    }
    let (a, abs) = integrate_axes(m, &coefs, &axes);
    if !abs.is_finite() || abs > DIVERGENCE_LIMIT {
        return Err(Error::Divergent { split: s.to_string(), value: abs });
    }
    Ok((a, abs))
}

/// `A_{z,d,r,l}` for product payoffs.
pub fn eval_a_functional(s: &Split, h: &ProductPayoff, m: &PricingMeasure, q: &QuadratureSpec) -> Result<f64> {
    split_value(s, h, m, q).map(|v| v.0)
}

/// `|A|_{z,d,r,l}`, the finiteness certificate for the split.
pub fn eval_abs_a_functional(s: &Split, h: &ProductPayoff, m: &PricingMeasure, q: &QuadratureSpec) -> Result<f64> {
    split_value(s, h, m, q).map(|v| v.1)
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitContribution {
    #[serde(flatten)]
    pub split: Split,
    pub value: f64,
    #[serde(skip)]
    pub abs_value: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PriceBreakdown {
    pub total: f64,
    /// The factor `B_T⁻¹` applied to the split sum.
    pub discount: f64,
    pub splits: Vec<SplitContribution>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl PriceBreakdown {
    fn assemble(splits: Vec<SplitContribution>, disc: &Discount, warnings: Vec<String>) -> Self {
        let v: Vec<f64> = splits.iter().map(|s| s.value).collect();
        let factor = disc.factor();
        Self { total: factor * quad::pairwise_sum(&v), discount: factor, splits, warnings }
    }

    pub fn undiscounted(&self) -> f64 {
        quad::pairwise_sum(&self.splits.iter().map(|s| s.value).collect::<Vec<_>>())
    }
}

fn price_product_once(h: &ProductPayoff, m: &PricingMeasure, q: &QuadratureSpec, disc: &Discount) -> Result<PriceBreakdown> {
    let splits = enumerate_splits(h.dim())?;
    let parts: Vec<Result<SplitContribution>> = splits
        .into_par_iter()
        .map(|s| {
            if split_is_structurally_zero(&s, h) {
                return Ok(SplitContribution { split: s, value: 0.0, abs_value: 0.0, skipped: true });
            }
            let (value, abs_value) = split_value(&s, h, m, q)?;
            Ok(SplitContribution { split: s, value, abs_value, skipped: false })
        })
        .collect();
    let splits = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PriceBreakdown::assemble(splits, disc, Vec::new()))
}

/// Price of a product payoff as the discounted sum of all split functionals.
/// With `q.adaptive` the node count is doubled until successive totals
/// agree to `q.abs_tol` (at most four refinements).
pub fn price_product(h: &ProductPayoff, m: &PricingMeasure, q: &QuadratureSpec, disc: &Discount) -> Result<PriceBreakdown> {
    check_inputs(h.dim(), m, q)?;
    let mut cur = price_product_once(h, m, q, disc)?;
    if !q.adaptive {
        return Ok(cur);
    }
    let mut qq = q.clone();
    for _ in 0..4 {
        qq.nodes = 2 * qq.nodes - 1;
        let next = price_product_once(h, m, &qq, disc)?;
        let change = (next.total - cur.total).abs();
        cur = next;
        if change <= q.abs_tol {
            return Ok(cur);
        }
    }
    let msg = format!("adaptive refinement stopped at {} nodes without reaching tolerance", qq.nodes);
    log::warn!("{msg}");
    cur.warnings.push(msg);
    Ok(cur)
}

/// An indicator weight `Y = 1{X_j ⋈ y_j, j ∈ coords}`; empty means `Y = 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightEvent {
    pub coords: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub strictness: Vec<Strictness>,
}

impl WeightEvent {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(coords: Vec<usize>, thresholds: Vec<f64>, strictness: Vec<Strictness>) -> Result<Self> {
        if coords.len() != thresholds.len() || coords.len() != strictness.len() {
            return invalid("weight event vectors must have equal length");
        }
        Ok(Self { coords, thresholds, strictness })
    }
}

/// The four legs of `E[f(X_i)Y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct WeightedExpectation {
    pub zero: f64,
    pub derivative: f64,
    pub right_jumps: f64,
    pub left_jumps: f64,
    pub total: f64,
}

/// `E[f(X_i)Y] = f(0)E[Y] + ∫f'(a)E[1{X_i>a}Y]da + Σ Δ̃₊f·E[1{X_i>s}Y]
/// + Σ Δ̃₋f·E[1{X_i≥s}Y]`, undiscounted.
pub fn expectation_with_weight(
    f: &PiecewisePayoff1D,
    coord: usize,
    weight: &WeightEvent,
    m: &PricingMeasure,
    q: &QuadratureSpec,
) -> Result<WeightedExpectation> {
    let n = m.dim();
    q.validate(n)?;
    if coord >= n {
        return invalid(format!("coordinate {coord} out of range for dimension {n}"));
    }
    if weight.coords.iter().any(|&c| c >= n || c == coord) {
        return invalid("weight coordinates must be in range and differ from the priced coordinate");
    }
    let mut coords = vec![coord];
    coords.extend(&weight.coords);
    let tail = |y: f64, s: Strictness| {
        let mut ys = vec![y];
        ys.extend(&weight.thresholds);
        let mut ss = vec![s];
        ss.extend(&weight.strictness);
        m.tail_subset(&coords, &ys, &ss)
    };
    let ey = if weight.coords.is_empty() { 1.0 } else { m.tail_subset(&weight.coords, &weight.thresholds, &weight.strictness) };
    let zero = f.value_at_zero() * ey;
    let grid = derivative_grid(&[f], m, coord, q);
    let parts: Vec<f64> = grid.par_iter().map(|g| g.w * f.deriv(g.y) * tail(g.y, Strictness::Gt)).collect();
    let derivative = quad::pairwise_sum(&parts);
    let atoms = f.jump_atoms();
    let right = quad::pairwise_sum(&atoms.iter().map(|a| a.right * tail(a.location, Strictness::Gt)).collect::<Vec<_>>());
    let left = quad::pairwise_sum(&atoms.iter().map(|a| a.left * tail(a.location, Strictness::Ge)).collect::<Vec<_>>());
    Ok(WeightedExpectation { zero, derivative, right_jumps: right, left_jumps: left, total: zero + derivative + right + left })
}

/// Cell edges on `[0, u]`: the cut points plus about `cells` uniform cells
/// distributed over the pieces in proportion to their length.
fn cell_edges(u: f64, cuts: &[f64], cells: usize) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut cs: Vec<f64> = cuts.iter().copied().filter(|c| *c > 0.0 && *c < u).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    pts.extend(cs);
    pts.push(u);
    let mut edges = vec![0.0];
    for w in pts.windows(2) {
        let k = (((w[1] - w[0]) / u) * cells as f64).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / k as f64;
        for i in 1..k {
            edges.push(w[0] + h * i as f64);
        }
        edges.push(w[1]);
    }
    edges
}

fn bisect_edges(e: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * e.len() - 1);
    for w in e.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*e.last().unwrap());
    out
}

/// `Σ_cells Δ^d h(cell) · Q(X_d > midpoint)` with `z` coordinates at 0.
/// Returns the sum and the fraction of sign changes between successive
/// nonzero cell contributions.
fn cell_sum(h: &BlackBoxPayoff, m: &PricingMeasure, d: &[usize], edges: &[Vec<f64>]) -> (f64, f64) {
    let n = h.dim();
    let depth = d.len();
    let corners = 1usize << depth;
    let stricts = vec![Strictness::Gt; depth];
    let parts: Vec<(f64, usize, usize, f64, f64)> = (0..edges[0].len() - 1)
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; depth];
            idx[0] = i0;
            let mut x = vec![0.0; n];
            let mut mid = vec![0.0; depth];
            let mut acc = 0.0;
            let (mut changes, mut count) = (0usize, 0usize);
            let (mut first, mut last) = (0.0f64, 0.0f64);
            loop {
                let mut diff = 0.0;
                for c in 0..corners {
                    let mut sign = 1.0;
                    for (l, &j) in d.iter().enumerate() {
                        let hi = (c >> l) & 1 == 1;
                        x[j] = edges[l][idx[l] + hi as usize];
                        if !hi {
                            sign = -sign;
                        }
                    }
                    diff += sign * h.eval(&x);
                }
                if diff != 0.0 {
                    for l in 0..depth {
                        mid[l] = 0.5 * (edges[l][idx[l]] + edges[l][idx[l] + 1]);
                    }
                    acc += diff * m.tail_subset(d, &mid, &stricts);
                    if count == 0 {
                        first = diff;
                    } else if diff.signum() != last.signum() {
                        changes += 1;
                    }
                    last = diff;
                    count += 1;
                }
                let mut l = depth - 1;
                loop {
                    if l == 0 {
                        return (acc, changes, count, first, last);
                    }
                    idx[l] += 1;
                    if idx[l] + 1 < edges[l].len() {
                        break;
                    }
                    idx[l] = 0;
                    l -= 1;
                }
            }
        })
        .collect();
    let total = quad::pairwise_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let mut changes = 0usize;
    let mut count = 0usize;
    let mut prev: Option<f64> = None;
    for p in &parts {
        if p.2 == 0 {
            continue;
        }
        changes += p.1;
        count += p.2;
        if let Some(pl) = prev {
            if pl.signum() != p.3.signum() {
                changes += 1;
            }
        }
        prev = Some(p.4);
    }
    let frac = if count > 1 { changes as f64 / (count - 1) as f64 } else { 0.0 };
    (total, frac)
}

/// Price of a continuous payoff from the 2ⁿ `(z,d)` splits. Mixed partials
/// are taken from the payoff when supplied (node quadrature), otherwise as
/// mixed differences of `h` over grid cells weighted by the tail at the cell
/// midpoint. With `q.adaptive` the cell sums on the base grid and on the
/// bisected grid are Richardson-combined.
pub fn price_continuous(h: &BlackBoxPayoff, m: &PricingMeasure, q: &QuadratureSpec, disc: &Discount) -> Result<PriceBreakdown> {
    let n = h.dim();
    check_inputs(n, m, q)?;
    let splits = splits_with_roles(n, &[Role::Zero, Role::Derivative])?;
    let parts: Vec<(SplitContribution, Option<String>)> = splits
        .into_par_iter()
        .map(|s| {
            let d = s.d();
            let (value, warn) = if d.is_empty() {
                (h.eval(&vec![0.0; n]), None)
            } else if let Some(p) = h.partials() {
                (continuous_analytic(h, p, m, q, &s, &d), None)
            } else {
                let edges: Vec<Vec<f64>> = d
                    .iter()
                    .map(|&j| {
                        let mut cuts = h.breaks()[j].clone();
                        cuts.extend(m.atom_coordinates(j));
                        cell_edges(q.upper_for(m, j), &cuts, q.nodes - 1)
                    })
                    .collect();
                let (coarse, frac) = cell_sum(h, m, &d, &edges);
                let v = if q.adaptive {
                    let fine: Vec<Vec<f64>> = edges.iter().map(|e| bisect_edges(e)).collect();
                    let (f, _) = cell_sum(h, m, &d, &fine);
                    (4.0 * f - coarse) / 3.0
                } else {
                    coarse
                };
                let warn = (frac > 0.5).then(|| {
                    format!("split {s}: finite-difference partials oscillate ({:.0}% sign changes)", 100.0 * frac)
                });
                (v, warn)
            };
            (SplitContribution { split: s, value, abs_value: value.abs(), skipped: false }, warn)
        })
        .collect();
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(parts.len());
    for (c, w) in parts {
        if let Some(w) = w {
            log::warn!("{w}");
            warnings.push(w);
        }
        out.push(c);
    }
    Ok(PriceBreakdown::assemble(out, disc, warnings))
}

fn continuous_analytic(
    h: &BlackBoxPayoff,
    p: &crate::payoff::PartialFn,
    m: &PricingMeasure,
    q: &QuadratureSpec,
    s: &Split,
    d: &[usize],
) -> f64 {
    let n = h.dim();
    let mask: Vec<bool> = s.roles().iter().map(|r| *r == Role::Derivative).collect();
    let grids: Vec<Vec<(f64, f64)>> = d
        .iter()
        .map(|&j| {
            let mut cuts = h.breaks()[j].clone();
            cuts.extend(m.atom_coordinates(j));
            quad::segmented_rule(0.0, q.upper_for(m, j), &cuts, q.nodes, q.rule)
                .into_iter()
                .flat_map(|seg| seg.points.into_iter().map(move |(x, w)| (quad::inside(x, seg.lo, seg.hi), w)))
                .collect()
        })
        .collect();
    let depth = d.len();
    let stricts = vec![Strictness::Gt; depth];
    let parts: Vec<f64> = (0..grids[0].len())
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; depth];
            idx[0] = i0;
            let mut x = vec![0.0; n];
            let mut y = vec![0.0; depth];
            let mut acc = 0.0;
            loop {
                let mut w = 1.0;
                for (l, &j) in d.iter().enumerate() {
                    let (xx, ww) = grids[l][idx[l]];
                    x[j] = xx;
                    y[l] = xx;
                    w *= ww;
                }
                let g = p(&mask, &x);
                if g != 0.0 {
                    acc += w * g * m.tail_subset(d, &y, &stricts);
                }
                let mut l = depth - 1;
                loop {
                    if l == 0 {
                        return acc;
                    }
                    idx[l] += 1;
                    if idx[l] < grids[l].len() {
                        break;
                    }
                    idx[l] = 0;
                    l -= 1;
                }
            }
        })
        .collect();
    quad::pairwise_sum(&parts)
}

fn require_dim(m: &PricingMeasure, n: usize) -> Result<()> {
    if m.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.dim() });
    }
    Ok(())
}

/// Rainbow payoff `((X − K₁)⁺ + (Y − K₂)⁺ − K)⁺` from three tail integrals.
pub fn price_rainbow_p1(m: &PricingMeasure, k1: f64, k2: f64, k: f64, q: &QuadratureSpec, disc: &Discount) -> Result<f64> {
    require_dim(m, 2)?;
    q.validate(2)?;
    if k1 < 0.0 || k2 < 0.0 || k < 0.0 {
        return invalid("rainbow strikes must be non-negative");
    }
    let (ux, uy) = (q.upper_for(m, 0), q.upper_for(m, 1));
    let ax = m.atom_coordinates(0);
    let ay = m.atom_coordinates(1);
    let first = integrate_1d(|z| m.marginal_tail(0, z, Strictness::Gt), k1 + k, ux.max(k1 + k), &ax, q);
    let second = integrate_1d(|z| m.marginal_tail(1, z, Strictness::Gt), k2 + k, uy.max(k2 + k), &ay, q);
    let c = k1 + k2 + k;
    let mut cuts = ay.clone();
    cuts.extend(ax.iter().map(|a| c - a));
    let third = integrate_1d(
        |z| m.tail_subset(&[0, 1], &[(c - z).max(0.0), z], &[Strictness::Gt, Strictness::Gt]),
        k2,
        k2 + k,
        &cuts,
        q,
    );
    Ok(disc.factor() * (first + second + third))
}

/// `∫₀^U Q(X₁ > y ∧ X₂ > y + ε) dy`.
fn shifted_joint_tail_integral(m: &PricingMeasure, eps: f64, q: &QuadratureSpec) -> f64 {
    let u = q.upper_for(m, 0).min(q.upper_for(m, 1));
    let mut cuts = m.atom_coordinates(0);
    cuts.extend(m.atom_coordinates(1).iter().map(|a| a - eps));
    integrate_1d(|y| m.tail_subset(&[0, 1], &[y, y + eps], &[Strictness::Gt, Strictness::Gt]), 0.0, u, &cuts, q)
}

/// Spread option `(X₁ − X₂)⁺` as `E X₁ − ∫₀^∞ Q(X₁ > y ∧ X₂ > y) dy`.
pub fn price_spread(m: &PricingMeasure, q: &QuadratureSpec, disc: &Discount) -> Result<f64> {
    require_dim(m, 2)?;
    q.validate(2)?;
    let ex = m.marginal_expectation(0)?;
    Ok(disc.factor() * (ex - shifted_joint_tail_integral(m, 0.0, q)))
}

#[derive(Clone, Debug, Serialize)]
pub struct IndicatorReport {
    pub price: f64,
    pub eps: Vec<f64>,
    /// Difference quotients per ε, before discounting.
    pub quotients: Vec<f64>,
    pub extrapolation: Extrapolation,
}

/// Default ε ladder `{2⁻³, …, 2⁻¹⁰}·scale`, scale the geometric mean of the
/// positive marginal means.
pub fn default_indicator_eps(m: &PricingMeasure) -> Vec<f64> {
    let means: Vec<f64> = (0..m.dim()).filter_map(|i| m.marginal_expectation(i).ok()).filter(|v| *v > 0.0).collect();
    let scale = if means.is_empty() {
        1.0
    } else {
        (means.iter().map(|v| v.ln()).sum::<f64>() / means.len() as f64).exp()
    };
    (3..=10).map(|k| scale * 0.5f64.powi(k)).collect()
}

/// Number of finest ε levels combined by the extrapolation.
pub const INDICATOR_LEVELS: usize = 3;

/// `Q`-price of `1{X₁ ≥ X₂}` as the ε → 0⁺ limit of
/// `−[g(ε) − g(0)]/ε + ε⁻¹∫₀^ε Q(X₂ < y) dy`, `g(ε) = ∫Q(X₁>y ∧ X₂>y+ε)dy`.
/// The second term restores the mass of `{X₂ < ε}` lost by truncating the
/// shifted integral at 0.
pub fn price_indicator_ge(m: &PricingMeasure, eps: &[f64], q: &QuadratureSpec, disc: &Discount) -> Result<IndicatorReport> {
    require_dim(m, 2)?;
    q.validate(2)?;
    if eps.is_empty() {
        return invalid("empty epsilon sequence");
    }
    if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return invalid("epsilon values must be positive and finite");
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("epsilon sequence must be strictly decreasing");
    }
    let g0 = shifted_joint_tail_integral(m, 0.0, q);
    let a2 = m.atom_coordinates(1);
    let quotients: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let ge = shifted_joint_tail_integral(m, e, q);
            let below = integrate_1d(|y| 1.0 - m.marginal_tail(1, y, Strictness::Ge), 0.0, e, &a2, q);
            -(ge - g0) / e + below / e
        })
        .collect();
    let ex = richardson::extrapolate_to_zero(eps, &quotients, INDICATOR_LEVELS);
    Ok(IndicatorReport { price: disc.factor() * ex.estimate, eps: eps.to_vec(), quotients, extrapolation: ex })
}
