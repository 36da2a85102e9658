//! The standard mollifier `ρ(x) = c·exp(−1/(1 − |x|²))` on the unit ball,
//! payoff smoothing `h_ε = ρ_ε * h` and empirical checks of the three
//! equivalent convergence conditions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{accumulate, MCSpec};
use crate::measure::PricingMeasure;
use crate::payoff::BlackBoxPayoff;
use crate::quad;

/// Largest dimension accepted by [`mollify_payoff`].
pub const MAX_MOLLIFY_DIM: usize = 3;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "MollifierConfig", into = "MollifierConfig")]
pub struct MollifierSpec {
    pub n: usize,
    pub eps: f64,
    /// Gauss–Legendre nodes per axis of the convolution rule.
    pub nodes: usize,
    c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierConfig {
    pub n: usize,
    pub eps: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    21
}

impl TryFrom<MollifierConfig> for MollifierSpec {
    type Error = Error;
    fn try_from(c: MollifierConfig) -> Result<Self> {
        Ok(Self::new(c.n, c.eps)?.with_nodes(c.nodes))
    }
}

impl From<MollifierSpec> for MollifierConfig {
    fn from(s: MollifierSpec) -> Self {
        Self { n: s.n, eps: s.eps, nodes: s.nodes }
    }
}

/// `1 / ∫_{|x|<1} exp(−1/(1−|x|²)) dx`, by the radial integral
/// `|S^{n−1}| ∫₀¹ r^{n−1} exp(−1/(1−r²)) dr`.
pub fn normalization(n: usize) -> f64 {
    let nf = n as f64;
    let sphere = 2.0 * std::f64::consts::PI.powf(0.5 * nf) / libm::tgamma(0.5 * nf);
    let (radial, _) = quad::adaptive(|r: f64| r.powi(n as i32 - 1) * bump(r * r), 0.0, 1.0, 1e-15, 1e-14);
    1.0 / (sphere * radial)
}

#[inline]
fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl MollifierSpec {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n == 0 {
            return invalid("dimension must be >= 1");
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return invalid("eps must be positive");
        }
        Ok(Self { n, eps, nodes: default_nodes(), c: normalization(n) })
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes.max(2);
        self
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Ok(Self::new(self.n, eps)?.with_nodes(self.nodes))
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// `ρ(x)`; zero outside the open unit ball.
pub fn rho_eval(spec: &MollifierSpec, x: &[f64]) -> f64 {
    spec.c * bump(x.iter().map(|v| v * v).sum())
}

/// Tensor Gauss–Legendre nodes on `[−1,1]ⁿ` carrying `ρ` weights; nodes
/// outside the ball are dropped and the weights renormalized to sum to one
/// so constants and (by symmetry) affine functions are reproduced exactly.
fn kernel_rule(spec: &MollifierSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, w) = quad::gauss_legendre(spec.nodes);
    let n = spec.n;
    let total = spec.nodes.pow(n as u32);
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for f in 0..total {
        let mut idx = f;
        let mut y = vec![0.0; n];
        let mut wt = 1.0;
        for yd in y.iter_mut() {
            let i = idx % spec.nodes;
            idx /= spec.nodes;
            *yd = x[i];
            wt *= w[i];
        }
        let r = rho_eval(spec, &y);
        if r > 0.0 {
            pts.push(y);
            ws.push(wt * r);
        }
    }
    let s = quad::pairwise_sum(&ws);
    for v in ws.iter_mut() {
        *v /= s;
    }
    (pts, ws)
}

/// `h_ε(x) = ∫ ρ(y) h((x − εy) ∨ 0) dy`; `h` is extended outside R₊ⁿ by
/// clamping each coordinate at zero.
pub fn mollify_payoff(h: &BlackBoxPayoff, spec: &MollifierSpec) -> Result<BlackBoxPayoff> {
    if h.dim() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, got: h.dim() });
    }
    if spec.n > MAX_MOLLIFY_DIM {
        return invalid(format!("mollification is limited to n <= {MAX_MOLLIFY_DIM}, got {}", spec.n));
    }
    let (pts, ws) = kernel_rule(spec);
    let f = h.value_fn();
    let eps = spec.eps;
    let n = spec.n;
    let value = Arc::new(move |x: &[f64]| {
        let mut z = [0.0f64; MAX_MOLLIFY_DIM];
        let mut acc = 0.0;
        for (y, w) in pts.iter().zip(&ws) {
            for d in 0..n {
                z[d] = (x[d] - eps * y[d]).max(0.0);
            }
            acc += w * f(&z[..n]);
        }
        acc
    });
    BlackBoxPayoff::new(n, value)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `E h_ε − E h` (condition 1).
    pub price_gap: f64,
    pub price_gap_se: f64,
    /// `E|h_ε − h|` (condition 2).
    pub l1_gap: f64,
    pub l1_gap_se: f64,
    /// `|E h_ε 1{X ∉ K}|` (condition 3).
    pub tail_bound: f64,
    pub tail_bound_se: f64,
    /// `|price_gap| ≤ l1_gap` on the shared samples.
    pub chain_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Lower and upper corners of the compact box `K`.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub l1_monotone: bool,
    pub price_monotone: bool,
    /// The L¹ gap stalls: the last gap is above half the first and
    /// significantly positive.
    pub plateau: bool,
}

/// `6`-SD log box for lognormal coordinates; the full support otherwise.
pub fn compact_box(m: &PricingMeasure, sds: f64) -> (Vec<f64>, Vec<f64>) {
    (0..m.dim())
        .map(|i| match m.lognormal_params(i) {
            Some((s0, sd)) if sd > 0.0 => {
                (s0 * (-0.5 * sd * sd - sds * sd).exp(), s0 * (-0.5 * sd * sd + sds * sd).exp())
            }
            _ => (0.0, m.upper_truncation(i)),
        })
        .unzip()
}

/// Shared-sample Monte Carlo estimates of the three gaps per `ε`.
pub fn convergence_check(h: &BlackBoxPayoff, m: &PricingMeasure, spec: &MollifierSpec, eps: &[f64], mc: &MCSpec) -> Result<ConvergenceReport> {
    if h.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: h.dim() });
    }
    if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eps sequence must be non-empty and strictly decreasing");
    }
    mc.validate()?;
    let smooth: Vec<BlackBoxPayoff> = eps.iter().map(|e| mollify_payoff(h, &spec.with_eps(*e)?)).collect::<Result<_>>()?;
    let (lo, hi) = compact_box(m, 6.0);
    let n = m.dim();
    let k = eps.len();
    let acc = accumulate(mc.paths, mc.chunk, 3 * k, |u, out| {
        let mut x = [0.0f64; 8];
        let x = &mut x[..n];
        m.draw(mc.seed, u, false, x);
        let base = h.eval(x);
        let outside = x.iter().enumerate().any(|(i, v)| *v < lo[i] || *v > hi[i]);
        for (j, s) in smooth.iter().enumerate() {
            let v = s.eval(x);
            out[3 * j] = v - base;
            out[3 * j + 1] = (v - base).abs();
            out[3 * j + 2] = if outside { v } else { 0.0 };
        }
    });
    let rows: Vec<ConvergenceRow> = eps
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let (p, l, t) = (&acc[3 * j], &acc[3 * j + 1], &acc[3 * j + 2]);
            ConvergenceRow {
                eps: *e,
                price_gap: p.mean,
                price_gap_se: p.se(),
                l1_gap: l.mean,
                l1_gap_se: l.se(),
                tail_bound: t.mean.abs(),
                tail_bound_se: t.se(),
                chain_ok: p.mean.abs() <= l.mean + 1e-15,
            }
        })
        .collect();
    let l1_monotone = rows.windows(2).all(|w| w[1].l1_gap <= w[0].l1_gap + 3.0 * (w[0].l1_gap_se + w[1].l1_gap_se));
    let price_monotone = rows
        .windows(2)
        .all(|w| w[1].price_gap.abs() <= w[0].price_gap.abs() + 3.0 * (w[0].price_gap_se + w[1].price_gap_se));
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let plateau = rows.len() > 1 && last.l1_gap > 0.5 * first.l1_gap && last.l1_gap > 3.0 * last.l1_gap_se;
    Ok(ConvergenceReport { rows, box_lo: lo, box_hi: hi, l1_monotone, price_monotone, plateau })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_support_and_center() {
        let s = MollifierSpec::new(2, 0.5).unwrap();
        assert_eq!(rho_eval(&s, &[1.0, 0.0]), 0.0);
        assert_eq!(rho_eval(&s, &[0.8, 0.7]), 0.0);
        assert!((rho_eval(&s, &[0.0, 0.0]) - s.c() * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rho_eval(&s, &[0.3, -0.2]), rho_eval(&s, &[-0.3, 0.2]));
    }

    #[test]
    fn ball_integrals() {
        // Unnormalized bump integrals over the unit ball (mpmath, 30 digits).
        let reference = [0.443_993_816_168_079_4, 0.466_512_393_178_330_1, 0.441_088_887_276_604_4];
        for (n, r) in reference.iter().enumerate() {
            assert!((1.0 / normalization(n + 1) - r).abs() < 1e-13, "n = {}", n + 1);
        }
    }

    #[test]
    fn dimension_four_rejected() {
        let h = BlackBoxPayoff::new(4, Arc::new(|x: &[f64]| x[0])).unwrap();
        assert!(mollify_payoff(&h, &MollifierSpec::new(4, 0.1).unwrap()).is_err());
    }
}
