//! Payoff representations.
//!
//! [`PiecewisePayoff1D`] is a piecewise-C¹ function on R₊ with finitely many
//! breakpoints; it knows its one-sided limits and jump sizes. A
//! [`ProductPayoff`] is a finite sum of products of such factors, one per
//! coordinate. [`BlackBoxPayoff`] wraps an arbitrary continuous function.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{PricingMeasure, Strictness};
use crate::quad;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Mixed partial provider: `(mask of differentiated coordinates, point)`.
pub type PartialFn = Arc<dyn Fn(&[bool], &[f64]) -> f64 + Send + Sync>;

/// A smooth piece on one open interval.
#[derive(Clone)]
pub enum Piece {
    /// `Σ c_k x^k`
    Poly(Vec<f64>),
    /// `coef · x^p`
    Power { coef: f64, p: f64 },
    /// `coef · exp(k · x^power)`
    Exp { coef: f64, k: f64, power: f64 },
    /// User-supplied value and derivative.
    Custom { value: ScalarFn, deriv: ScalarFn },
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Piece::Poly(c) => write!(f, "Poly({c:?})"),
            Piece::Power { coef, p } => write!(f, "Power({coef}·x^{p})"),
            Piece::Exp { coef, k, power } => write!(f, "Exp({coef}·e^({k}·x^{power}))"),
            Piece::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Piece {
    pub fn constant(c: f64) -> Self {
        Piece::Poly(vec![c])
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Piece::Poly(c) => c.iter().rev().fold(0.0, |acc, ck| acc * x + ck),
            Piece::Power { coef, p } => coef * x.powf(*p),
            Piece::Exp { coef, k, power } => coef * (k * x.powf(*power)).exp(),
            Piece::Custom { value, .. } => value(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Piece::Poly(c) => {
                let mut acc = 0.0;
                for (k, ck) in c.iter().enumerate().skip(1).rev() {
                    acc = acc * x + k as f64 * ck;
                }
                acc
            }
            Piece::Power { coef, p } => {
                if *p == 0.0 {
                    0.0
                } else {
                    coef * p * x.powf(p - 1.0)
                }
            }
            Piece::Exp { coef, k, power } => {
                let xp = x.powf(*power);
                coef * k * power * x.powf(power - 1.0) * (k * xp).exp()
            }
            Piece::Custom { deriv, .. } => deriv(x),
        }
    }

    /// True when the derivative vanishes identically.
    pub fn is_constant(&self) -> bool {
        match self {
            Piece::Poly(c) => c.iter().skip(1).all(|v| *v == 0.0),
            Piece::Power { coef, p } => *coef == 0.0 || *p == 0.0,
            Piece::Exp { coef, k, power } => *coef == 0.0 || *k == 0.0 || *power == 0.0,
            Piece::Custom { .. } => false,
        }
    }

    pub fn scaled(&self, s: f64) -> Piece {
        match self {
            Piece::Poly(c) => Piece::Poly(c.iter().map(|v| v * s).collect()),
            Piece::Power { coef, p } => Piece::Power { coef: coef * s, p: *p },
            Piece::Exp { coef, k, power } => Piece::Exp { coef: coef * s, k: *k, power: *power },
            Piece::Custom { value, deriv } => {
                let (v, d) = (value.clone(), deriv.clone());
                Piece::Custom { value: Arc::new(move |x| s * v(x)), deriv: Arc::new(move |x| s * d(x)) }
            }
        }
    }
}

/// One entry of the jump list: location and the two one-sided jumps
/// `Δ̃₋f(s) = f(s) − f(s−)` and `Δ̃₊f(s) = f(s+) − f(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpAtom {
    pub location: f64,
    pub left: f64,
    pub right: f64,
}

/// Piecewise-C¹ payoff on R₊. With breakpoints `s_0 < … < s_{N−1}` the
/// pieces are indexed `0..=N`: piece `j` lives on `(s_{j−1}, s_j)` with
/// `s_{−1} = 0` and `s_N = ∞`.
#[derive(Clone, Debug)]
pub struct PiecewisePayoff1D {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
    at_break: Vec<f64>,
}

impl PiecewisePayoff1D {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>, at_break: Vec<f64>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return invalid(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            ));
        }
        if at_break.len() != breakpoints.len() {
            return Err(Error::DimensionMismatch { expected: breakpoints.len(), got: at_break.len() });
        }
        if breakpoints.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return invalid("breakpoints must be finite and non-negative");
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if at_break.iter().any(|v| !v.is_finite()) {
            return invalid("breakpoint values must be finite");
        }
        let p = Self { breakpoints, pieces, at_break };
        p.check_derivatives()?;
        Ok(p)
    }

    fn smooth(piece: Piece) -> Self {
        Self { breakpoints: vec![], pieces: vec![piece], at_break: vec![] }
    }

    /// Compares each stored derivative against a central difference at 11
    /// interior probe points per interval.
    fn check_derivatives(&self) -> Result<()> {
        for (j, piece) in self.pieces.iter().enumerate() {
            if matches!(piece, Piece::Poly(_)) {
                continue;
            }
            let (lo, hi) = self.interval(j);
            let hi = if hi.is_finite() { hi } else { lo + lo.max(1.0) };
            if hi <= lo {
                continue;
            }
            for i in 1..=11 {
                let x = lo + (hi - lo) * i as f64 / 12.0;
                let h = 1e-5 * (hi - lo).min(x.max(1e-3));
                let fd = (piece.value(x + h) - piece.value(x - h)) / (2.0 * h);
                let d = piece.deriv(x);
                if !fd.is_finite() || !d.is_finite() {
                    continue;
                }
                if (fd - d).abs() > 1e-6 * d.abs().max(fd.abs()).max(1.0) {
                    return invalid(format!(
                        "piece {j} derivative inconsistent at x={x}: stored {d}, finite difference {fd}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Open interval of piece `j`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { 0.0 } else { self.breakpoints[j - 1] };
        let hi = if j < self.breakpoints.len() { self.breakpoints[j] } else { f64::INFINITY };
        (lo, hi)
    }

    /// Index of the piece whose open interval contains `x` (the piece to the
    /// right when `x` is a breakpoint).
    #[inline]
    pub fn piece_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|s| *s <= x)
    }

    /// Value at `x`; at a breakpoint the stored value `f(s_k)` is returned.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if !self.breakpoints.is_empty() {
            if let Ok(k) = self.breakpoints.binary_search_by(|s| s.total_cmp(&x)) {
                return self.at_break[k];
            }
        }
        self.pieces[self.piece_index(x)].value(x)
    }

    /// Derivative of the piece containing `x`.
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].deriv(x)
    }

    /// True when the derivative vanishes on the piece containing `x`.
    pub fn is_flat_at(&self, x: f64) -> bool {
        self.pieces[self.piece_index(x)].is_constant()
    }

    pub fn left_limit(&self, k: usize) -> f64 {
        self.pieces[k].value(self.breakpoints[k])
    }

    pub fn right_limit(&self, k: usize) -> f64 {
        self.pieces[k + 1].value(self.breakpoints[k])
    }

    /// `f(x−)` for any `x > 0`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|s| *s < x);
        self.pieces[j].value(x)
    }

    /// `f(0)`.
    pub fn value_at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// Breakpoints with a nonzero one-sided jump. The left jump at 0 is 0
    /// by convention.
    pub fn jump_atoms(&self) -> Vec<JumpAtom> {
        let mut out = Vec::new();
        for (k, &s) in self.breakpoints.iter().enumerate() {
            let left = if s == 0.0 { 0.0 } else { self.at_break[k] - self.left_limit(k) };
            let right = self.right_limit(k) - self.at_break[k];
            if left != 0.0 || right != 0.0 {
                out.push(JumpAtom { location: s, left, right });
            }
        }
        out
    }

    pub fn is_continuous(&self) -> bool {
        self.jump_atoms().is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|p| p.scaled(c)).collect(),
            at_break: self.at_break.iter().map(|v| v * c).collect(),
        }
    }

    // Construction helpers.

    pub fn call(k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return invalid("strike must be non-negative");
        }
        if k == 0.0 {
            return Ok(Self::smooth(Piece::Poly(vec![0.0, 1.0])));
        }
        Self::new(vec![k], vec![Piece::constant(0.0), Piece::Poly(vec![-k, 1.0])], vec![0.0])
    }

    pub fn put(k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return invalid("strike must be non-negative");
        }
        if k == 0.0 {
            return Ok(Self::smooth(Piece::constant(0.0)));
        }
        Self::new(vec![k], vec![Piece::Poly(vec![k, -1.0]), Piece::constant(0.0)], vec![0.0])
    }

    /// `1_{x ≥ K}`
    pub fn digital_ge(k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return invalid("strike must be non-negative");
        }
        if k == 0.0 {
            return Ok(Self::smooth(Piece::constant(1.0)));
        }
        Self::new(vec![k], vec![Piece::constant(0.0), Piece::constant(1.0)], vec![1.0])
    }

    /// `1_{x > K}`
    pub fn digital_gt(k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return invalid("strike must be non-negative");
        }
        Self::new(vec![k], vec![Piece::constant(0.0), Piece::constant(1.0)], vec![0.0])
    }

    /// `1_{x ≥ K}` or `1_{x > K}` by strictness.
    pub fn digital(k: f64, s: Strictness) -> Result<Self> {
        match s {
            Strictness::Ge => Self::digital_ge(k),
            Strictness::Gt => Self::digital_gt(k),
        }
    }

    /// `x^p` for `p ≥ 0`.
    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 0.0) || !p.is_finite() {
            return invalid("power must be finite and non-negative");
        }
        if p.fract() == 0.0 && p <= 16.0 {
            let mut c = vec![0.0; p as usize + 1];
            c[p as usize] = 1.0;
            return Ok(Self::smooth(Piece::Poly(c)));
        }
        Ok(Self::smooth(Piece::Power { coef: 1.0, p }))
    }

    /// `a + b·x`
    pub fn affine(a: f64, b: f64) -> Self {
        Self::smooth(Piece::Poly(vec![a, b]))
    }

    /// `exp(k · x^power)`
    pub fn exp(k: f64, power: f64) -> Self {
        Self::smooth(Piece::Exp { coef: 1.0, k, power })
    }

    pub fn constant(c: f64) -> Self {
        Self::smooth(Piece::constant(c))
    }

    /// `Σ c_k x^k`
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::smooth(Piece::Poly(coeffs))
    }

    pub fn custom(value: ScalarFn, deriv: ScalarFn) -> Result<Self> {
        let p = Self::smooth(Piece::Custom { value, deriv });
        p.check_derivatives()?;
        Ok(p)
    }
}

#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub coef: f64,
    pub factors: Vec<PiecewisePayoff1D>,
}

/// `h(x̄) = Σ_k coef_k ∏_j f_{k,j}(x_j)`.
#[derive(Clone, Debug)]
pub struct ProductPayoff {
    n: usize,
    terms: Vec<ProductTerm>,
}

impl ProductPayoff {
    pub fn new(terms: Vec<ProductTerm>) -> Result<Self> {
        if terms.is_empty() {
            return invalid("product payoff needs at least one term");
        }
        let n = terms[0].factors.len();
        if n == 0 {
            return invalid("terms need at least one factor");
        }
        if let Some(t) = terms.iter().find(|t| t.factors.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: t.factors.len() });
        }
        let p = Self { n, terms };
        // Finite on a 10-point probe grid along the diagonal.
        for i in 0..10 {
            let x = vec![i as f64 * 25.0; n];
            if !p.eval(&x).is_finite() {
                return Err(Error::Membership(format!("payoff not finite at probe point {x:?}")));
            }
        }
        Ok(p)
    }

    /// A single product term with coefficient 1.
    pub fn product(factors: Vec<PiecewisePayoff1D>) -> Result<Self> {
        Self::new(vec![ProductTerm { coef: 1.0, factors }])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coef * t.factors.iter().zip(x).map(|(f, xi)| f.eval(*xi)).product::<f64>()).sum()
    }

    /// Formal linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ProductPayoff, b: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let mut terms: Vec<ProductTerm> =
            self.terms.iter().map(|t| ProductTerm { coef: a * t.coef, factors: t.factors.clone() }).collect();
        terms.extend(other.terms.iter().map(|t| ProductTerm { coef: b * t.coef, factors: t.factors.clone() }));
        Self::new(terms)
    }

    pub fn is_continuous(&self) -> bool {
        self.terms.iter().all(|t| t.factors.iter().all(|f| f.is_continuous()))
    }
}

/// Arbitrary continuous payoff on R₊ⁿ with optional analytic mixed partials.
#[derive(Clone)]
pub struct BlackBoxPayoff {
    n: usize,
    value: VectorFn,
    partials: Option<PartialFn>,
    breaks: Vec<Vec<f64>>,
}

impl fmt::Debug for BlackBoxPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBoxPayoff").field("n", &self.n).field("analytic_partials", &self.partials.is_some()).finish()
    }
}

impl BlackBoxPayoff {
    pub fn new(n: usize, value: VectorFn) -> Result<Self> {
        if n == 0 {
            return invalid("dimension must be >= 1");
        }
        let p = Self { n, value, partials: None, breaks: vec![vec![]; n] };
        for i in 0..10 {
            let x = vec![i as f64 * 25.0; n];
            if !p.eval(&x).is_finite() {
                return Err(Error::Membership(format!("payoff not finite at probe point {x:?}")));
            }
        }
        Ok(p)
    }

    pub fn with_partials(mut self, partials: PartialFn) -> Self {
        self.partials = Some(partials);
        self
    }

    /// Known kink locations per coordinate, used to place grid nodes.
    pub fn with_breaks(mut self, breaks: Vec<Vec<f64>>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn partials(&self) -> Option<&PartialFn> {
        self.partials.as_ref()
    }

    pub fn breaks(&self) -> &[Vec<f64>] {
        &self.breaks
    }

    pub fn value_fn(&self) -> VectorFn {
        self.value.clone()
    }

    pub fn from_product(h: &ProductPayoff) -> Self {
        let hh = h.clone();
        let breaks = (0..h.dim())
            .map(|j| {
                let mut b: Vec<f64> =
                    h.terms().iter().flat_map(|t| t.factors[j].breakpoints().to_vec()).collect();
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            })
            .collect();
        Self { n: h.dim(), value: Arc::new(move |x| hh.eval(x)), partials: None, breaks }
    }

    /// `(x₁ − x₂)⁺`
    pub fn spread() -> Self {
        Self::new(2, Arc::new(|x: &[f64]| (x[0] - x[1]).max(0.0))).unwrap()
    }

    /// `((x − K₁)⁺ + (y − K₂)⁺ − K)⁺`
    pub fn rainbow_p1(k1: f64, k2: f64, k: f64) -> Self {
        Self::new(2, Arc::new(move |x: &[f64]| ((x[0] - k1).max(0.0) + (x[1] - k2).max(0.0) - k).max(0.0)))
            .unwrap()
            .with_breaks(vec![vec![k1, k1 + k], vec![k2, k2 + k]])
    }

    /// `1_{x₁ ≥ x₂}`
    pub fn indicator_ge() -> Self {
        Self::new(2, Arc::new(|x: &[f64]| if x[0] >= x[1] { 1.0 } else { 0.0 })).unwrap()
    }
}

// Membership probes.

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MembershipReport {
    pub integrable: bool,
    pub tail_limit_ok: bool,
    pub derivative_integral: f64,
    pub expectation_abs: f64,
    pub tail_values: Vec<f64>,
    pub failing: Option<String>,
}

impl MembershipReport {
    pub fn member(&self) -> bool {
        self.failing.is_none()
    }
}

/// Integral of `|f'(a)|·Q(X_i > a)` plus jump terms, and `E|f(X_i)|`, both
/// restricted to `[0, u]`.
fn abs_functionals(f: &PiecewisePayoff1D, m: &PricingMeasure, i: usize, u: f64) -> (f64, f64) {
    let atoms = m.atom_coordinates(i);
    let mut cuts: Vec<f64> = f.breakpoints().to_vec();
    cuts.extend(atoms.iter().copied());
    let tail = |a: f64| m.marginal_tail(i, a, Strictness::Gt);
    let segs = quad::segmented_rule(0.0, u, &cuts, 2001, quad::Rule::Simpson);
    let mut d_int = 0.0;
    let mut e_abs = 0.0;
    for s in &segs {
        for &(x, w) in &s.points {
            let xi = quad::inside(x, s.lo, s.hi);
            d_int += w * f.deriv(xi).abs() * tail(xi);
        }
        // Continuous part of the law on the open segment, midpoint Stieltjes.
        let cells = s.points.len().max(64);
        let h = (s.hi - s.lo) / cells as f64;
        for k in 0..cells {
            let a = quad::inside(s.lo + k as f64 * h, s.lo, s.hi);
            let b = quad::inside(s.lo + (k + 1) as f64 * h, s.lo, s.hi);
            e_abs += f.eval(0.5 * (a + b)).abs() * (tail(a) - tail(b)).max(0.0);
        }
    }
    for atom in f.jump_atoms() {
        if atom.location < u {
            d_int += atom.right.abs() * m.marginal_tail(i, atom.location, Strictness::Gt);
            d_int += atom.left.abs() * m.marginal_tail(i, atom.location, Strictness::Ge);
        }
    }
    // Point masses at zero and at the atoms of the measure.
    let mut points = vec![0.0];
    points.extend(atoms.iter().copied().filter(|a| *a > 0.0 && *a <= u));
    for a in points {
        let mass = m.marginal_tail(i, a, Strictness::Ge) - m.marginal_tail(i, a, Strictness::Gt);
        e_abs += f.eval(a).abs() * mass.max(0.0);
    }
    (d_int, e_abs)
}

/// Numerical necessary-condition probe for membership of `f` (applied to
/// coordinate `i` of `m`) in the admissible class.
pub fn check_pi_q_membership(f: &PiecewisePayoff1D, m: &PricingMeasure, i: usize, u: f64) -> Result<MembershipReport> {
    if i >= m.dim() {
        return invalid(format!("coordinate {i} out of range"));
    }
    if !(u > 0.0) {
        return invalid("truncation must be positive");
    }
    let (d1, e1) = abs_functionals(f, m, i, u);
    let (d2, e2) = abs_functionals(f, m, i, 2.0 * u);
    let stable = |a: f64, b: f64| a.is_finite() && b.is_finite() && (b - a).abs() <= 1e-3 * a.abs().max(1e-9) + 1e-9;
    let integrable = stable(e1, e2) && e1 < 1e12;
    let deriv_ok = stable(d1, d2) && d1 < 1e12;
    let tail_values: Vec<f64> = [u / 4.0, u / 2.0, u]
        .iter()
        .map(|&x| f.eval_left(x).abs() * m.marginal_tail(i, x, Strictness::Ge))
        .collect();
    // A tail that vanishes at U (bounded support) meets the limit outright.
    let decays = tail_values.iter().all(|v| v.is_finite())
        && (tail_values[2] == 0.0 || tail_values.windows(2).all(|w| w[1] <= w[0] || w[1] <= 1e-12))
        && tail_values[2] < 1e-6;
    let failing = if !integrable {
        Some(format!("E|f(X)| not finite or not stable under doubling the truncation ({e1:e} vs {e2:e})"))
    } else if !decays {
        Some(format!("|f(x-)|Q(X>=x) does not decay below 1e-6: {tail_values:?}"))
    } else if !deriv_ok {
        Some(format!("integral of |f'(a)|Q(X>a) diverges ({d1:e} at U, {d2:e} at 2U)"))
    } else {
        None
    };
    Ok(MembershipReport {
        integrable,
        tail_limit_ok: decays,
        derivative_integral: d1,
        expectation_abs: e1,
        tail_values,
        failing,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProductMembershipEntry {
    pub term: usize,
    /// Zero-based factor indices whose absolute product was tested.
    pub factors: Vec<usize>,
    pub mean_abs: f64,
    pub se: f64,
    pub finite: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProductMembershipReport {
    pub entries: Vec<ProductMembershipEntry>,
    /// Per `(term, coordinate)`: values of the product tail at three growing
    /// thresholds and whether they decay.
    pub tails: Vec<(usize, usize, Vec<f64>, bool)>,
    pub failing: Vec<String>,
}

impl ProductMembershipReport {
    pub fn member(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Monte Carlo probe (10⁵ samples, fixed seed) of the integrability of
/// every partial product of factors and of the product-tail decay.
pub fn check_product_membership(h: &ProductPayoff, m: &PricingMeasure) -> Result<ProductMembershipReport> {
    if h.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: h.dim() });
    }
    let n = h.dim();
    let count = 100_000;
    let samples = m.sample_terminal(count, 0x6d656d62)?;
    let mut entries = Vec::new();
    let mut failing = Vec::new();
    for (k, t) in h.terms().iter().enumerate() {
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut finite = true;
            for r in 0..count {
                let x = samples.row(r);
                let v: f64 = idx.iter().map(|&j| t.factors[j].eval(x[j]).abs()).product();
                if !v.is_finite() {
                    finite = false;
                    break;
                }
                s1 += v;
                s2 += v * v;
            }
            let mean = s1 / count as f64;
            let var = (s2 / count as f64 - mean * mean).max(0.0);
            let se = (var / count as f64).sqrt();
            // A sample mean dominated by a handful of draws signals a heavy
            // (possibly infinite) expectation.
            let finite = finite && mean.is_finite() && se.is_finite() && mean < 1e12 && se <= 0.5 * mean.max(1e-300);
            if !finite {
                failing.push(format!("term {k}: product of factors {idx:?} does not look integrable"));
            }
            entries.push(ProductMembershipEntry { term: k, factors: idx, mean_abs: mean, se, finite });
        }
    }
    let mut tails = Vec::new();
    for (k, t) in h.terms().iter().enumerate() {
        for i in 0..n {
            let u = m.upper_truncation(i);
            let vals: Vec<f64> = [u / 4.0, u / 2.0, u]
                .iter()
                .map(|&b| {
                    let fb = t.factors[i].eval_left(b).abs();
                    let mut acc = 0.0;
                    for r in 0..count {
                        let x = samples.row(r);
                        if x[i] >= b {
                            acc += (0..i).map(|j| t.factors[j].eval(x[j]).abs()).product::<f64>();
                        }
                    }
                    fb * acc / count as f64
                })
                .collect();
            let ok = vals.iter().all(|v| v.is_finite())
                && (vals[2] == 0.0 || vals.windows(2).all(|w| w[1] <= w[0] || w[1] <= 1e-12))
                && vals[2] < 1e-6;
            if !ok {
                failing.push(format!("term {k}, coordinate {i}: product tail does not decay: {vals:?}"));
            }
            tails.push((k, i, vals, ok));
        }
    }
    Ok(ProductMembershipReport { entries, tails, failing })
}

// JSON mini-language.

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    Call {
        #[serde(rename = "K")]
        k: f64,
    },
    Put {
        #[serde(rename = "K")]
        k: f64,
    },
    DigitalGe {
        #[serde(rename = "K")]
        k: f64,
    },
    DigitalGt {
        #[serde(rename = "K")]
        k: f64,
    },
    Power {
        p: f64,
    },
    Affine {
        a: f64,
        b: f64,
    },
    Exp {
        k: f64,
        #[serde(default = "one")]
        power: f64,
    },
    Constant {
        c: f64,
    },
    Pieces {
        breakpoints: Vec<f64>,
        /// One entry per interval: polynomial coefficients, lowest first.
        polys: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl FactorSpec {
    pub fn build(&self) -> Result<PiecewisePayoff1D> {
        match self {
            FactorSpec::Call { k } => PiecewisePayoff1D::call(*k),
            FactorSpec::Put { k } => PiecewisePayoff1D::put(*k),
            FactorSpec::DigitalGe { k } => PiecewisePayoff1D::digital_ge(*k),
            FactorSpec::DigitalGt { k } => PiecewisePayoff1D::digital_gt(*k),
            FactorSpec::Power { p } => PiecewisePayoff1D::power(*p),
            FactorSpec::Affine { a, b } => Ok(PiecewisePayoff1D::affine(*a, *b)),
            FactorSpec::Exp { k, power } => Ok(PiecewisePayoff1D::exp(*k, *power)),
            FactorSpec::Constant { c } => Ok(PiecewisePayoff1D::constant(*c)),
            FactorSpec::Pieces { breakpoints, polys, values } => PiecewisePayoff1D::new(
                breakpoints.clone(),
                polys.iter().map(|c| Piece::Poly(c.clone())).collect(),
                values.clone(),
            ),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    #[serde(default = "one")]
    pub coef: f64,
    pub product: Vec<FactorSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Product(Vec<FactorSpec>),
    Sum(Vec<TermSpec>),
}

impl PayoffSpec {
    pub fn build(&self) -> Result<ProductPayoff> {
        match self {
            PayoffSpec::Product(fs) => ProductPayoff::product(fs.iter().map(|f| f.build()).collect::<Result<_>>()?),
            PayoffSpec::Sum(ts) => ProductPayoff::new(
                ts.iter()
                    .map(|t| {
                        Ok(ProductTerm { coef: t.coef, factors: t.product.iter().map(|f| f.build()).collect::<Result<_>>()? })
                    })
                    .collect::<Result<_>>()?,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let c = PiecewisePayoff1D::call(100.0).unwrap();
        assert_eq!(c.eval(100.0), 0.0);
        let d = PiecewisePayoff1D::digital_ge(1.0).unwrap();
        assert_eq!(d.eval(1.0), 1.0);
        assert_eq!(d.eval(0.999), 0.0);
        let h = ProductPayoff::product(vec![PiecewisePayoff1D::call(1.0).unwrap(), PiecewisePayoff1D::digital_ge(2.0).unwrap()])
            .unwrap();
        assert_eq!(h.eval(&[3.0, 2.0]), 2.0);
    }

    #[test]
    fn jump_atom_examples() {
        assert!(PiecewisePayoff1D::call(100.0).unwrap().jump_atoms().is_empty());
        assert_eq!(
            PiecewisePayoff1D::digital_ge(5.0).unwrap().jump_atoms(),
            vec![JumpAtom { location: 5.0, left: 1.0, right: 0.0 }]
        );
        assert_eq!(
            PiecewisePayoff1D::digital_gt(5.0).unwrap().jump_atoms(),
            vec![JumpAtom { location: 5.0, left: 0.0, right: 1.0 }]
        );
        // Left jump at zero is zero by convention.
        let p = PiecewisePayoff1D::new(vec![0.0], vec![Piece::constant(7.0), Piece::constant(1.0)], vec![3.0]).unwrap();
        assert_eq!(p.jump_atoms(), vec![JumpAtom { location: 0.0, left: 0.0, right: -2.0 }]);
    }

    #[test]
    fn inconsistent_derivative_is_rejected() {
        let bad = PiecewisePayoff1D::custom(Arc::new(|x| x * x), Arc::new(|x| x));
        assert!(bad.is_err());
        let good = PiecewisePayoff1D::custom(Arc::new(|x| x * x), Arc::new(|x| 2.0 * x));
        assert!(good.is_ok());
    }

    #[test]
    fn unsorted_breakpoints_are_rejected() {
        let r = PiecewisePayoff1D::new(
            vec![2.0, 1.0],
            vec![Piece::constant(0.0), Piece::constant(1.0), Piece::constant(2.0)],
            vec![1.0, 2.0],
        );
        assert!(r.is_err());
    }

    #[test]
    fn payoff_spec_parses() {
        let s: PayoffSpec = serde_json::from_str(r#"{"product":[{"call":{"K":100}},{"digital_ge":{"K":2}}]}"#).unwrap();
        let h = s.build().unwrap();
        assert_eq!(h.eval(&[103.0, 2.0]), 3.0);
        let bad = serde_json::from_str::<PayoffSpec>(r#"{"product":[{"call":{"K":100,"x":1}}]}"#);
        assert!(bad.is_err());
    }
}
