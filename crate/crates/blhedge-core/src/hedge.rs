//! Static replication with bonds, calls and digitals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::bs_call;
use crate::engine::{derivative_grid, expectation_with_weight, QuadratureSpec, WeightEvent};
use crate::error::{invalid, Error, Result};
use crate::measure::{Discount, PricingMeasure, Strictness};
use crate::payoff::{check_pi_q_membership, PiecewisePayoff1D};
use crate::quad::{self, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallLeg {
    pub strike: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitalLeg {
    pub strike: f64,
    pub weight: f64,
    pub strictness: Strictness,
}

/// One cell of the discretized `∫ f'(a)·1{X > a} da` leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripCell {
    pub lo: f64,
    pub hi: f64,
    /// Digital strike (the cell midpoint).
    pub strike: f64,
    /// `f'(strike)·(hi − lo)`.
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HedgePortfolio {
    pub bond_units: f64,
    pub calls: Vec<CallLeg>,
    pub digitals: Vec<DigitalLeg>,
    pub digital_density: Vec<StripCell>,
    /// Unpriced point mass `(α, f(α))` kept in the value function only.
    pub point_mass: Option<(f64, f64)>,
    /// Interval on which the portfolio is meant to replicate.
    pub domain: [f64; 2],
}

impl HedgePortfolio {
    /// Payoff of the portfolio at terminal state `x`.
    pub fn value(&self, x: f64) -> f64 {
        let mut v = self.bond_units;
        for c in &self.calls {
            v += c.weight * (x - c.strike).max(0.0);
        }
        for d in &self.digitals {
            if d.strictness.holds(x, d.strike) {
                v += d.weight;
            }
        }
        for s in &self.digital_density {
            if x > s.strike {
                v += s.weight;
            }
        }
        if let Some((a, fa)) = self.point_mass {
            if x == a {
                v += fa;
            }
        }
        v
    }

    /// Price of the portfolio under coordinate `i` of `m`.
    pub fn price(&self, m: &PricingMeasure, i: usize, disc: &Discount) -> Result<f64> {
        if i >= m.dim() {
            return invalid(format!("coordinate {i} out of range for dimension {}", m.dim()));
        }
        let mut parts = vec![self.bond_units];
        for c in &self.calls {
            parts.push(c.weight * call_price(m, i, c.strike));
        }
        for d in &self.digitals {
            parts.push(d.weight * m.marginal_tail(i, d.strike, d.strictness));
        }
        for s in &self.digital_density {
            parts.push(s.weight * m.marginal_tail(i, s.strike, Strictness::Gt));
        }
        Ok(disc.factor() * quad::pairwise_sum(&parts))
    }

    pub fn leg_count(&self) -> usize {
        usize::from(self.bond_units != 0.0) + self.calls.len() + self.digitals.len() + self.digital_density.len()
    }

    /// Writes `instrument,strike,strictness,weight` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["instrument", "strike", "strictness", "weight"])?;
        let s = |x: f64| format!("{x:?}");
        let st = |x: Strictness| match x {
            Strictness::Gt => "gt",
            Strictness::Ge => "ge",
        };
        out.write_record(["bond", "", "", &s(self.bond_units)])?;
        for c in &self.calls {
            out.write_record(["call", &s(c.strike), "", &s(c.weight)])?;
        }
        for d in &self.digitals {
            out.write_record(["digital", &s(d.strike), st(d.strictness), &s(d.weight)])?;
        }
        for c in &self.digital_density {
            out.write_record(["digital_strip", &s(c.strike), "gt", &s(c.weight)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `E(X_i − K)⁺`: closed form for lognormal coordinates, atom sums for
/// finite laws.
pub fn call_price(m: &PricingMeasure, i: usize, k: f64) -> f64 {
    if let Some((s0, sd)) = m.lognormal_params(i) {
        return bs_call(s0, k, sd);
    }
    m.atom_expectation(|x| (x[i] - k).max(0.0)).expect("finite law")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Continue linearly beyond the last partition point.
    #[default]
    Extend,
    /// Replicate `f·1{α ≤ x ≤ β}`: zero beyond the last point.
    Cutoff,
}

/// Call-spread portfolio whose value is the piecewise-linear interpolant of
/// `f` on `partition`: a strict digital at `α` of weight `f(α)` and calls at
/// the nodes weighted by slope changes. The isolated value `f(α)1{x = α}`
/// is kept as an unpriced point mass.
pub fn build_call_portfolio(f: &PiecewisePayoff1D, partition: &[f64], tail: TailMode) -> Result<HedgePortfolio> {
    if partition.len() < 2 {
        return invalid("partition needs at least two points");
    }
    if partition.windows(2).any(|w| w[1] == w[0]) {
        return invalid("partition contains duplicate points");
    }
    if partition.windows(2).any(|w| w[1] < w[0]) || partition[0] < 0.0 {
        return invalid("partition must be sorted and non-negative");
    }
    let (alpha, beta) = (partition[0], partition[partition.len() - 1]);
    if let Some(j) = f.jump_atoms().iter().find(|a| a.location > alpha && a.location < beta) {
        return invalid(format!("payoff jumps at {} inside the partition range", j.location));
    }
    let vals: Vec<f64> = partition.iter().map(|x| f.eval(*x)).collect();
    let mut hp = HedgePortfolio { domain: [alpha, beta], ..Default::default() };
    if vals[0] != 0.0 {
        if alpha == 0.0 {
            hp.bond_units = vals[0];
        } else {
            hp.digitals.push(DigitalLeg { strike: alpha, weight: vals[0], strictness: Strictness::Gt });
            hp.point_mass = Some((alpha, vals[0]));
        }
    }
    let mut prev = 0.0;
    for k in 0..partition.len() - 1 {
        let c = (vals[k + 1] - vals[k]) / (partition[k + 1] - partition[k]);
        if c != prev {
            hp.calls.push(CallLeg { strike: partition[k], weight: c - prev });
        }
        prev = c;
    }
    if tail == TailMode::Cutoff {
        if prev != 0.0 {
            hp.calls.push(CallLeg { strike: beta, weight: -prev });
        }
        if vals[vals.len() - 1] != 0.0 {
            hp.digitals.push(DigitalLeg { strike: beta, weight: -vals[vals.len() - 1], strictness: Strictness::Gt });
        }
    }
    Ok(hp)
}

/// Bond, digital strip and jump digitals replicating `f(X_i)`:
/// `f(0) + ∫ f'(a)1{X > a} da + Σ Δ̃₊·1{X > s} + Σ Δ̃₋·1{X ≥ s}`.
/// The strip is discretized with midpoint cells on the engine's derivative
/// grid for `q` (rule forced to midpoint), so pricing it leg by leg
/// reproduces `expectation_with_weight` on the same grid.
pub fn build_digital_decomposition(f: &PiecewisePayoff1D, m: &PricingMeasure, i: usize, q: &QuadratureSpec) -> Result<HedgePortfolio> {
    if i >= m.dim() {
        return invalid(format!("coordinate {i} out of range for dimension {}", m.dim()));
    }
    let q = q.clone().with_rule(Rule::Midpoint);
    let u = q.upper_for(m, i);
    let rep = check_pi_q_membership(f, m, i, u)?;
    if let Some(why) = rep.failing {
        return Err(Error::Membership(why));
    }
    let mut hp = HedgePortfolio { bond_units: f.value_at_zero(), domain: [0.0, u], ..Default::default() };
    for g in derivative_grid(&[f], m, i, &q) {
        let w = g.w * f.deriv(g.y);
        if w != 0.0 {
            hp.digital_density.push(StripCell { lo: g.y - 0.5 * g.w, hi: g.y + 0.5 * g.w, strike: g.y, weight: w });
        }
    }
    for a in f.jump_atoms() {
        if a.right != 0.0 {
            hp.digitals.push(DigitalLeg { strike: a.location, weight: a.right, strictness: Strictness::Gt });
        }
        if a.left != 0.0 {
            hp.digitals.push(DigitalLeg { strike: a.location, weight: a.left, strictness: Strictness::Ge });
        }
    }
    Ok(hp)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReplicationSamples {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_points() -> usize {
    2001
}

fn default_samples() -> usize {
    100_000
}

impl Default for ReplicationSamples {
    fn default() -> Self {
        Self { grid_points: default_grid_points(), samples: default_samples(), seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicationReport {
    pub sup_error: f64,
    /// `E|portfolio − f|` over samples inside the domain (others count 0).
    pub l1_error: f64,
    /// Fraction of samples outside the domain.
    pub outside_fraction: f64,
    pub portfolio_price: f64,
    pub direct_price: f64,
    pub price_gap: f64,
}

/// Sup error on a uniform grid over the portfolio domain (partition nodes
/// included), sampled L¹ error under `m`, and the price gap against the
/// engine's price of `f`.
pub fn replication_report(
    hp: &HedgePortfolio,
    f: &PiecewisePayoff1D,
    m: &PricingMeasure,
    i: usize,
    samples: &ReplicationSamples,
    q: &QuadratureSpec,
) -> Result<ReplicationReport> {
    if samples.grid_points < 2 || samples.samples == 0 {
        return invalid("need at least 2 grid points and 1 sample");
    }
    let [lo, hi] = hp.domain;
    let mut pts: Vec<f64> = (0..samples.grid_points)
        .map(|j| lo + (hi - lo) * j as f64 / (samples.grid_points - 1) as f64)
        .collect();
    pts.extend(hp.calls.iter().map(|c| c.strike).filter(|k| *k >= lo && *k <= hi));
    let sup_error = pts.iter().map(|x| (hp.value(*x) - f.eval(*x)).abs()).fold(0.0, f64::max);
    let sm = m.sample_terminal(samples.samples, samples.seed)?;
    let mut errs = Vec::with_capacity(sm.rows);
    let mut outside = 0usize;
    for r in 0..sm.rows {
        let x = sm.row(r)[i];
        if x < lo || x > hi {
            outside += 1;
            errs.push(0.0);
        } else {
            errs.push((hp.value(x) - f.eval(x)).abs());
        }
    }
    let l1_error = quad::pairwise_sum(&errs) / sm.rows as f64;
    let none = Discount::none();
    let portfolio_price = hp.price(m, i, &none)?;
    let q = if hp.digital_density.is_empty() { q.clone() } else { q.clone().with_rule(Rule::Midpoint) };
    let direct_price = expectation_with_weight(f, i, &WeightEvent::none(), m, &q)?.total;
    Ok(ReplicationReport {
        sup_error,
        l1_error,
        outside_fraction: outside as f64 / sm.rows as f64,
        portfolio_price,
        direct_price,
        price_gap: (portfolio_price - direct_price).abs(),
    })
}
