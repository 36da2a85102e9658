//! Run configuration: one JSON document with a `"schema": 1` field.

use std::path::{Path, PathBuf};

use blhedge_core::error::{Error, Result};
use blhedge_core::fixtures::binomial_nodes;
use blhedge_core::hedge::{ReplicationSamples, TailMode};
use blhedge_core::io::read_empirical_csv;
use blhedge_core::mc::{MCSpec, MaxMonitoring, PathModelSpec};
use blhedge_core::measure::PricingMeasure;
use blhedge_core::pathdep::{BasketGrid, Thm23Grid};
use blhedge_core::payoff::{FactorSpec, PayoffSpec};
use blhedge_core::engine::QuadratureSpec;
use blhedge_core::spd::SurfaceKind;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSpec>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub mc: MCSpec,
    /// Bond value `B_T` at maturity.
    #[serde(default = "one")]
    pub discount: f64,
    #[serde(default)]
    pub price: PriceOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedge: Option<HedgeOptions>,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub mollify: MollifyOptions,
}

fn one() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            measure: None,
            payoff: None,
            quadrature: QuadratureSpec::default(),
            mc: MCSpec::default(),
            discount: 1.0,
            price: PriceOptions::default(),
            density: None,
            hedge: None,
            verify: VerifyOptions::default(),
            mollify: MollifyOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        if c.schema != SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported schema {}, expected {SCHEMA}", c.schema)));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn build_measure(&self) -> Result<PricingMeasure> {
        match &self.measure {
            Some(m) => m.build(),
            None => Err(Error::InvalidInput("config has no `measure` block".into())),
        }
    }

    pub fn build_payoff(&self) -> Result<&PayoffSpec> {
        self.payoff.as_ref().ok_or_else(|| Error::InvalidInput("config has no `payoff` block".into()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Lognormal {
        s0: Vec<f64>,
        sigma: Vec<f64>,
        maturity: f64,
        /// Identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corr: Option<Vec<Vec<f64>>>,
    },
    Discrete {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Samples from a CSV file with header `x1,...,xn`.
    Empirical { csv: PathBuf },
    /// Independent zero-rate binomial trees, one per coordinate.
    Binomial { s0: Vec<f64>, u: Vec<f64>, steps: usize },
}

impl MeasureConfig {
    pub fn build(&self) -> Result<PricingMeasure> {
        match self {
            MeasureConfig::Lognormal { s0, sigma, maturity, corr } => {
                let n = s0.len();
                let corr = corr.clone().unwrap_or_else(|| {
                    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
                });
                PricingMeasure::lognormal(s0.clone(), sigma.clone(), *maturity, corr)
            }
            MeasureConfig::Discrete { atoms, weights } => PricingMeasure::discrete(atoms.clone(), weights.clone()),
            MeasureConfig::Empirical { csv } => read_empirical_csv(std::fs::File::open(csv)?),
            MeasureConfig::Binomial { s0, u, steps } => {
                if s0.is_empty() || s0.len() != u.len() {
                    return Err(Error::InvalidInput("binomial needs matching, non-empty s0 and u".into()));
                }
                let trees: Vec<(Vec<f64>, Vec<f64>)> =
                    s0.iter().zip(u).map(|(s, u)| binomial_nodes(*s, *u, *steps)).collect::<Result<_>>()?;
                let mut atoms = vec![vec![]];
                let mut weights = vec![1.0];
                for (a, w) in &trees {
                    let mut na = Vec::new();
                    let mut nw = Vec::new();
                    for (x, p) in atoms.iter().zip(&weights) {
                        for (y, q) in a.iter().zip(w) {
                            let mut v = x.clone();
                            v.push(*y);
                            na.push(v);
                            nw.push(p * q);
                        }
                    }
                    atoms = na;
                    weights = nw;
                }
                let s: f64 = weights.iter().sum();
                PricingMeasure::discrete(atoms, weights.iter().map(|w| w / s).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PriceMethod {
    #[default]
    Quadrature,
    Mc,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriceOptions {
    pub method: PriceMethod,
    /// Skip the membership probe.
    pub force: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensityOptions {
    pub surface: PathBuf,
    /// Defaults to `call1d` for one strike column, `multi_lookback` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SurfaceKind>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PartitionSpec {
    Points(Vec<f64>),
    Uniform { lo: f64, hi: f64, cells: usize },
}

impl PartitionSpec {
    /// The partition after `level` halvings of every cell.
    pub fn points(&self, level: u32) -> Vec<f64> {
        match self {
            PartitionSpec::Points(p) => {
                let mut out = p.clone();
                for _ in 0..level {
                    let mut next = Vec::with_capacity(2 * out.len());
                    for w in out.windows(2) {
                        next.push(w[0]);
                        next.push(0.5 * (w[0] + w[1]));
                    }
                    next.extend(out.last().copied());
                    out = next;
                }
                out
            }
            PartitionSpec::Uniform { lo, hi, cells } => {
                let c = cells << level;
                (0..=c).map(|j| lo + (hi - lo) * j as f64 / c as f64).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum HedgeMethod {
    #[default]
    Calls,
    Digitals,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HedgeOptions {
    pub factor: FactorSpec,
    #[serde(default)]
    pub coordinate: usize,
    #[serde(default)]
    pub method: HedgeMethod,
    /// Required for `calls`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default)]
    pub tail: TailMode,
    /// Number of successive partition halvings to report (calls only).
    #[serde(default)]
    pub refinements: u32,
    #[serde(default)]
    pub samples: ReplicationSamples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Identity {
    #[serde(rename = "thm21")]
    Thm21,
    #[serde(rename = "thm22")]
    Thm22,
    #[serde(rename = "thm23")]
    Thm23,
    #[serde(rename = "prop_fA")]
    PropFa,
    #[serde(rename = "parisian")]
    Parisian,
    #[serde(rename = "thmAB")]
    ThmAb,
    #[serde(rename = "rectangle")]
    Rectangle,
}

impl Identity {
    pub const ALL: [Identity; 7] = [
        Identity::Thm21,
        Identity::Thm22,
        Identity::Thm23,
        Identity::PropFa,
        Identity::Parisian,
        Identity::ThmAb,
        Identity::Rectangle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Thm21 => "thm21",
            Identity::Thm22 => "thm22",
            Identity::Thm23 => "thm23",
            Identity::PropFa => "prop_fA",
            Identity::Parisian => "parisian",
            Identity::ThmAb => "thmAB",
            Identity::Rectangle => "rectangle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|i| i.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|i| i.name()).collect();
            Error::InvalidInput(format!("unknown identity {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

fn single_path(steps: usize) -> PathModelSpec {
    PathModelSpec { s0: vec![100.0], sigma: vec![0.2], corr: None, maturity: 1.0, steps, monitoring: MaxMonitoring::Grid }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierOptions {
    pub path: PathModelSpec,
    #[serde(rename = "H")]
    pub barrier: f64,
    pub paths: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { path: single_path(500), barrier: 120.0, paths: 200_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StrikeOptions {
    pub path: PathModelSpec,
    #[serde(rename = "K")]
    pub strike: f64,
    pub paths: usize,
}

impl Default for StrikeOptions {
    fn default() -> Self {
        Self { path: single_path(500), strike: 100.0, paths: 200_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Thm23Options {
    pub path: PathModelSpec,
    pub grid: Thm23Grid,
    pub paths: usize,
}

impl Default for Thm23Options {
    fn default() -> Self {
        let mut path = single_path(4);
        path.monitoring = MaxMonitoring::BrownianBridge;
        Self { path, grid: Thm23Grid::default(), paths: 1_000_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParisianOptions {
    pub path: PathModelSpec,
    #[serde(rename = "K")]
    pub strike: f64,
    pub levels: Vec<usize>,
    pub paths: usize,
}

impl Default for ParisianOptions {
    fn default() -> Self {
        Self { path: single_path(250), strike: 100.0, levels: vec![5, 10, 20], paths: 100_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BasketOptions {
    pub path: PathModelSpec,
    #[serde(rename = "K")]
    pub strikes: [f64; 2],
    pub grid: BasketGrid,
    pub paths: usize,
}

impl Default for BasketOptions {
    fn default() -> Self {
        Self {
            path: PathModelSpec {
                s0: vec![100.0, 90.0],
                sigma: vec![0.2, 0.3],
                corr: Some(vec![vec![1.0, 0.4], vec![0.4, 1.0]]),
                maturity: 1.0,
                steps: 100,
                monitoring: MaxMonitoring::Grid,
            },
            strikes: [100.0, 90.0],
            grid: BasketGrid::default(),
            paths: 200_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RectangleOptions {
    /// Number of random rectangles.
    pub count: usize,
    pub eps: f64,
}

impl Default for RectangleOptions {
    fn default() -> Self {
        Self { count: 20, eps: 1e-3 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Used when no `--identity` flag is given.
    pub identities: Vec<Identity>,
    pub thm21: BarrierOptions,
    pub thm22: StrikeOptions,
    pub thm23: Thm23Options,
    #[serde(rename = "prop_fA")]
    pub prop_fa: StrikeOptions,
    pub parisian: ParisianOptions,
    #[serde(rename = "thmAB")]
    pub thm_ab: BasketOptions,
    pub rectangle: RectangleOptions,
    /// Writes the first simulated path of each path identity as CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_dump: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MollifyTarget {
    /// `(x₁ − x₂)⁺`.
    Spread,
    RainbowP1 {
        #[serde(rename = "K1")]
        k1: f64,
        #[serde(rename = "K2")]
        k2: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    /// `1{x₁ ≥ x₂}`.
    IndicatorGe,
    /// The top-level `payoff` block.
    Payoff,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MollifyOptions {
    pub target: MollifyTarget,
    pub eps: Vec<f64>,
    pub nodes: usize,
}

impl Default for MollifyOptions {
    fn default() -> Self {
        Self { target: MollifyTarget::Spread, eps: vec![0.5, 0.25, 0.125], nodes: 21 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let s = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::parse(&s).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::parse(r#"{"schema": 1, "mesure": {}}"#).is_err());
        assert!(RunConfig::parse(r#"{"schema": 1, "mc": {"path": 10}}"#).is_err());
        assert!(RunConfig::parse(r#"{"schema": 2}"#).is_err());
    }

    #[test]
    fn binomial_matches_fixture() {
        let m = MeasureConfig::Binomial { s0: vec![100.0, 90.0], u: vec![1.1, 1.15], steps: 6 }.build().unwrap();
        assert_eq!(m, blhedge_core::fixtures::binomial_2d());
    }

    #[test]
    fn partition_halving() {
        let p = PartitionSpec::Points(vec![0.0, 1.0, 3.0]);
        assert_eq!(p.points(1), vec![0.0, 0.5, 1.0, 2.0, 3.0]);
        let u = PartitionSpec::Uniform { lo: 0.0, hi: 2.0, cells: 2 };
        assert_eq!(u.points(1), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
