//! Monte Carlo oracle: terminal and path simulation of correlated GBM,
//! payoff pricing with standard errors and common-random-number
//! difference estimators.
//!
//! Every sample (or antithetic pair) owns a counter lane keyed by its index,
//! so an estimate depends only on the `MCSpec`. Chunks are accumulated
//! independently and merged in a fixed binary tree, which makes results
//! bit-identical for any thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{Discount, PricingMeasure};
use crate::normal::cholesky_psd;
use crate::richardson;
use crate::rng::{Lane, Stream};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MCSpec {
    pub paths: usize,
    /// Time steps used when a path model is derived from a terminal measure.
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub chunk: usize,
}

impl Default for MCSpec {
    fn default() -> Self {
        Self { paths: 100_000, steps: 1, seed: 0, antithetic: false, chunk: 4096 }
    }
}

impl MCSpec {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self { paths, seed, ..Self::default() }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 || self.chunk == 0 {
            return invalid("paths, steps and chunk must all be >= 1");
        }
        if self.antithetic && self.paths < 2 {
            return invalid("antithetic sampling needs at least 2 paths");
        }
        Ok(())
    }

    /// Number of independent sampling units: pairs when antithetic.
    pub fn units(&self) -> usize {
        if self.antithetic {
            self.paths / 2
        } else {
            self.paths
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MCResult {
    pub estimate: f64,
    pub standard_error: f64,
    pub paths_used: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Welford) -> Welford {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let mean = self.mean + d * (o.n as f64 / n as f64);
        let m2 = self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64 / n as f64);
        Welford { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

fn merge_tree(v: &[Vec<Welford>]) -> Vec<Welford> {
    match v.len() {
        0 => Vec::new(),
        1 => v[0].clone(),
        n => {
            let (a, b) = (merge_tree(&v[..n / 2]), merge_tree(&v[n / 2..]));
            a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect()
        }
    }
}

/// Runs `f(unit, out)` for every unit, `k` statistics per unit, and returns
/// one accumulator per statistic. Deterministic for any thread count.
pub fn accumulate<F>(units: usize, chunk: usize, k: usize, f: F) -> Vec<Welford>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let chunks = units.div_ceil(chunk);
    let parts: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Welford::default(); k];
            let mut out = vec![0.0; k];
            let end = ((c + 1) * chunk).min(units);
            for u in c * chunk..end {
                f(u as u64, &mut out);
                for (a, x) in acc.iter_mut().zip(&out) {
                    a.push(*x);
                }
            }
            acc
        })
        .collect();
    if parts.is_empty() {
        return vec![Welford::default(); k];
    }
    merge_tree(&parts)
}

/// Per-unit values in unit order.
pub fn collect<T, F>(units: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let chunks = units.div_ceil(chunk);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * chunk).min(units);
            (c * chunk..end).map(|u| f(u as u64)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Discounted sample mean of `payoff(X_T)` under a terminal measure.
pub fn mc_price_terminal<F>(m: &PricingMeasure, payoff: F, spec: &MCSpec, disc: &Discount) -> Result<MCResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let t0 = Instant::now();
    let n = m.dim();
    let anti = spec.antithetic;
    let acc = accumulate(spec.units(), spec.chunk, 1, |u, out| {
        let mut x = [0.0f64; 8];
        let mut xs = vec![0.0; if n > 8 { n } else { 0 }];
        let x: &mut [f64] = if n <= 8 { &mut x[..n] } else { &mut xs };
        m.draw(spec.seed, u, false, x);
        let mut v = payoff(x);
        if anti {
            m.draw(spec.seed, u, true, x);
            v = 0.5 * (v + payoff(x));
        }
        out[0] = v;
    });
    let w = acc[0];
    if !w.mean.is_finite() {
        for u in 0..spec.units() as u64 {
            for mirror in [false, true] {
                if mirror && !anti {
                    continue;
                }
                let mut x = vec![0.0; n];
                m.draw(spec.seed, u, mirror, &mut x);
                if !payoff(&x).is_finite() {
                    return Err(Error::NonFinitePayoff { index: u as usize, point: x });
                }
            }
        }
    }
    let f = disc.factor();
    Ok(MCResult {
        estimate: f * w.mean,
        standard_error: f * w.se(),
        paths_used: if anti { 2 * spec.units() } else { spec.units() },
        elapsed: t0.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaxMonitoring {
    /// Maximum over the time grid.
    #[default]
    Grid,
    /// Exact maximum of the Brownian bridge between grid points.
    BrownianBridge,
}

/// Serialized form of [`PathModel`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PathModelSpec {
    pub s0: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub corr: Option<Vec<Vec<f64>>>,
    pub maturity: f64,
    pub steps: usize,
    #[serde(default)]
    pub monitoring: MaxMonitoring,
}

impl TryFrom<PathModelSpec> for PathModel {
    type Error = Error;
    fn try_from(s: PathModelSpec) -> Result<Self> {
        Ok(PathModel::new(s.s0, s.sigma, s.corr, s.maturity, s.steps)?.with_monitoring(s.monitoring))
    }
}

impl From<PathModel> for PathModelSpec {
    fn from(p: PathModel) -> Self {
        Self { s0: p.s0, sigma: p.sigma, corr: p.corr, maturity: p.maturity, steps: p.steps, monitoring: p.monitoring }
    }
}

/// Zero-drift correlated GBM on a uniform time grid.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "PathModelSpec", into = "PathModelSpec")]
pub struct PathModel {
    pub s0: Vec<f64>,
    pub sigma: Vec<f64>,
    pub corr: Option<Vec<Vec<f64>>>,
    pub maturity: f64,
    pub steps: usize,
    pub monitoring: MaxMonitoring,
    factor: Vec<Vec<f64>>,
}

impl PathModel {
    pub fn new(s0: Vec<f64>, sigma: Vec<f64>, corr: Option<Vec<Vec<f64>>>, maturity: f64, steps: usize) -> Result<Self> {
        let mut pm = Self { s0, sigma, corr, maturity, steps, monitoring: MaxMonitoring::Grid, factor: vec![] };
        pm.prepare()?;
        Ok(pm)
    }

    pub fn single(s0: f64, sigma: f64, maturity: f64, steps: usize) -> Result<Self> {
        Self::new(vec![s0], vec![sigma], None, maturity, steps)
    }

    pub fn with_monitoring(mut self, mon: MaxMonitoring) -> Self {
        self.monitoring = mon;
        self
    }

    /// Path model with the parameters of a lognormal terminal measure.
    pub fn from_measure(m: &PricingMeasure, steps: usize) -> Result<Self> {
        match m.kind() {
            crate::measure::MeasureKind::CorrelatedLognormal { s0, sigma, maturity, corr } => {
                Self::new(s0.clone(), sigma.clone(), Some(corr.clone()), *maturity, steps)
            }
            _ => invalid("path models need a lognormal measure"),
        }
    }

    fn prepare(&mut self) -> Result<()> {
        let n = self.s0.len();
        if n == 0 || self.sigma.len() != n {
            return invalid("s0 and sigma must be non-empty and of equal length");
        }
        if self.steps == 0 || !(self.maturity > 0.0) {
            return invalid("path model needs steps >= 1 and maturity > 0");
        }
        let corr = self.corr.clone().unwrap_or_else(|| {
            (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        });
        // Reuse the measure constructor for the PSD and range checks.
        PricingMeasure::lognormal(self.s0.clone(), self.sigma.clone(), self.maturity, corr.clone())?;
        self.factor = cholesky_psd(&corr);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let mut p = self.clone();
        if steps == 0 {
            return invalid("steps must be >= 1");
        }
        p.steps = steps;
        Ok(p)
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    /// Simulates path `index` into `p`. With `antithetic` the normals and
    /// bridge uniforms are mirrored.
    pub fn simulate(&self, seed: u64, index: u64, antithetic: bool, p: &mut Path) {
        let n = self.dim();
        let steps = self.steps;
        p.resize(n, steps);
        let dt = self.dt();
        let sq = dt.sqrt();
        let mut lane = Lane::new(seed, Stream::PathNormals, index >> 32, index as u32);
        let mut bridge = Lane::new(seed, Stream::BridgeUniforms, index >> 32, index as u32);
        let sign = if antithetic { -1.0 } else { 1.0 };
        let mut z = [0.0f64; 8];
        let mut zv = vec![0.0; if n > 8 { n } else { 0 }];
        let z: &mut [f64] = if n <= 8 { &mut z[..n] } else { &mut zv };
        let mut logs = [0.0f64; 8];
        let mut lv = vec![0.0; if n > 8 { n } else { 0 }];
        let logs: &mut [f64] = if n <= 8 { &mut logs[..n] } else { &mut lv };
        for i in 0..n {
            logs[i] = self.s0[i].ln();
            p.s[i] = self.s0[i];
            p.max[i] = self.s0[i];
        }
        for k in 1..=steps {
            for zi in z.iter_mut() {
                *zi = sign * lane.normal();
            }
            for i in 0..n {
                let mut x = 0.0;
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    x += self.factor[i][j] * zj;
                }
                let s = self.sigma[i];
                let a = logs[i];
                let b = a - 0.5 * s * s * dt + s * sq * x;
                logs[i] = b;
                let v = b.exp();
                p.s[k * n + i] = v;
                let cand = match self.monitoring {
                    MaxMonitoring::Grid => v,
                    MaxMonitoring::BrownianBridge => {
                        let u = bridge.uniform();
                        let u = if antithetic { 1.0 - u } else { u };
                        let var = s * s * dt;
                        (0.5 * (a + b + ((b - a) * (b - a) - 2.0 * var * u.ln()).sqrt())).exp()
                    }
                };
                if cand > p.max[i] {
                    p.max[i] = cand;
                }
            }
        }
        p.dt = dt;
    }

    /// Continues the path of `p` over `[T, T + dt_ext·ext_steps]` with the
    /// extension stream; returns terminal values into `out` and the
    /// left-endpoint time integral of each asset over the extension into
    /// `integral`.
    pub fn extend(
        &self,
        seed: u64,
        index: u64,
        antithetic: bool,
        p: &Path,
        dt_ext: f64,
        ext_steps: usize,
        out: &mut [f64],
        integral: &mut [f64],
    ) {
        let n = self.dim();
        let mut lane = Lane::new(seed, Stream::Extension, index >> 32, index as u32);
        let sign = if antithetic { -1.0 } else { 1.0 };
        let sq = dt_ext.sqrt();
        let mut z = vec![0.0; n];
        for i in 0..n {
            out[i] = p.terminal(i);
            integral[i] = 0.0;
        }
        for _ in 0..ext_steps {
            for zi in z.iter_mut() {
                *zi = sign * lane.normal();
            }
            for i in 0..n {
                integral[i] += out[i] * dt_ext;
                let mut x = 0.0;
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    x += self.factor[i][j] * zj;
                }
                let s = self.sigma[i];
                out[i] *= (-0.5 * s * s * dt_ext + s * sq * x).exp();
            }
        }
    }
}

/// One simulated path: prices on the grid (time-major) and running maxima.
#[derive(Clone, Debug, Default)]
pub struct Path {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub s: Vec<f64>,
    pub max: Vec<f64>,
}

impl Path {
    fn resize(&mut self, n: usize, steps: usize) {
        self.n = n;
        self.steps = steps;
        self.s.resize((steps + 1) * n, 0.0);
        self.max.resize(n, 0.0);
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.s[k * self.n + i]
    }

    pub fn terminal(&self, i: usize) -> f64 {
        self.at(self.steps, i)
    }

    pub fn maximum(&self, i: usize) -> f64 {
        self.max[i]
    }

    /// `∫₀^T S_i dt`, trapezoid.
    pub fn integral(&self, i: usize) -> f64 {
        let mut s = 0.5 * (self.at(0, i) + self.at(self.steps, i));
        for k in 1..self.steps {
            s += self.at(k, i);
        }
        s * self.dt
    }

    /// Time average `T⁻¹∫₀^T S_i dt`.
    pub fn average(&self, i: usize) -> f64 {
        self.integral(i) / (self.dt * self.steps as f64)
    }

    /// `∫₀^T 1{S_i ≤ h} dt`, left-endpoint rule.
    pub fn occupation_below(&self, i: usize, h: f64) -> f64 {
        (0..self.steps).filter(|&k| self.at(k, i) <= h).count() as f64 * self.dt
    }

    /// `∫₀^T Σ_i (S_i − K_i)⁺ dt`, trapezoid.
    pub fn basket_integral(&self, k: &[f64]) -> f64 {
        let g = |t: usize| (0..self.n).map(|i| (self.at(t, i) - k[i]).max(0.0)).sum::<f64>();
        let mut s = 0.5 * (g(0) + g(self.steps));
        for t in 1..self.steps {
            s += g(t);
        }
        s * self.dt
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathOption {
    Call {
        #[serde(rename = "K")]
        k: f64,
    },
    BarrierUpIn {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    Asian {
        #[serde(rename = "K")]
        k: f64,
    },
    Lookback {
        #[serde(rename = "K")]
        k: f64,
    },
    CumParisian {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    MultiLookback {
        #[serde(rename = "K")]
        k: Vec<f64>,
        /// `[T₀, T₁]`; the whole horizon when absent (grid maxima only).
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    AsianBasket {
        #[serde(rename = "K")]
        k: Vec<f64>,
    },
}

impl PathOption {
    pub fn validate(&self, pm: &PathModel) -> Result<()> {
        let n = pm.dim();
        let nonneg = |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite());
        let ok = match self {
            PathOption::Call { k } | PathOption::Asian { k } | PathOption::Lookback { k } => n >= 1 && nonneg(&[*k]),
            PathOption::BarrierUpIn { h, k } => nonneg(&[*h, *k]),
            PathOption::CumParisian { h, l, k } => nonneg(&[*h, *l, *k]),
            PathOption::MultiLookback { k, window } => {
                if k.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: k.len() });
                }
                nonneg(k) && window.map_or(true, |w| w[0] >= 0.0 && w[0] <= w[1] && w[1] <= pm.maturity)
            }
            PathOption::AsianBasket { k } => {
                if k.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: k.len() });
                }
                nonneg(k)
            }
        };
        if !ok {
            return invalid(format!("invalid path option parameters: {self:?}"));
        }
        Ok(())
    }

    /// Payoff on a simulated path; single-asset kinds use asset 0.
    pub fn payoff(&self, p: &Path) -> f64 {
        match self {
            PathOption::Call { k } => (p.terminal(0) - k).max(0.0),
            PathOption::BarrierUpIn { h, k } => {
                if p.maximum(0) >= *h {
                    (p.terminal(0) - k).max(0.0)
                } else {
                    0.0
                }
            }
            PathOption::Asian { k } => (p.average(0) - k).max(0.0),
            PathOption::Lookback { k } => (p.maximum(0) - k).max(0.0),
            PathOption::CumParisian { h, l, k } => {
                if p.occupation_below(0, *h) >= *l {
                    (p.terminal(0) - k).max(0.0)
                } else {
                    0.0
                }
            }
            PathOption::MultiLookback { k, window } => {
                let mut best = 0.0f64;
                match window {
                    None => {
                        for (i, ki) in k.iter().enumerate() {
                            best = best.max(p.maximum(i) - ki);
                        }
                    }
                    Some([t0, t1]) => {
                        let a = (t0 / p.dt).ceil() as usize;
                        let b = ((t1 / p.dt).floor() as usize).min(p.steps);
                        for t in a..=b {
                            for (i, ki) in k.iter().enumerate() {
                                best = best.max(p.at(t, i) - ki);
                            }
                        }
                    }
                }
                best
            }
            PathOption::AsianBasket { k } => p.basket_integral(k),
        }
    }
}

/// Accumulates `k` per-path statistics computed by `f` on simulated paths.
/// With antithetic sampling each unit is a mirrored pair and the statistic
/// is the pair average.
pub fn visit_paths<F>(pm: &PathModel, spec: &MCSpec, k: usize, f: F) -> Result<Vec<Welford>>
where
    F: Fn(u64, bool, &Path, &mut [f64]) + Sync,
{
    spec.validate()?;
    Ok(accumulate(spec.units(), spec.chunk, k, |u, out| {
        let mut p = Path::default();
        pm.simulate(spec.seed, u, false, &mut p);
        f(u, false, &p, out);
        if spec.antithetic {
            let mut o2 = vec![0.0; out.len()];
            pm.simulate(spec.seed, u, true, &mut p);
            f(u, true, &p, &mut o2);
            for (a, b) in out.iter_mut().zip(&o2) {
                *a = 0.5 * (*a + b);
            }
        }
    }))
}

/// Per-path values in path order (antithetic sampling is ignored).
pub fn collect_paths<T, F>(pm: &PathModel, spec: &MCSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &Path) -> T + Sync,
{
    spec.validate()?;
    Ok(collect(spec.paths, spec.chunk, |u| {
        let mut p = Path::default();
        pm.simulate(spec.seed, u, false, &mut p);
        f(u, &p)
    }))
}

pub fn mc_price_path(pm: &PathModel, opt: &PathOption, spec: &MCSpec) -> Result<MCResult> {
    opt.validate(pm)?;
    let t0 = Instant::now();
    let acc = visit_paths(pm, spec, 1, |_, _, p, out| out[0] = opt.payoff(p))?;
    Ok(MCResult {
        estimate: acc[0].mean,
        standard_error: acc[0].se(),
        paths_used: if spec.antithetic { 2 * spec.units() } else { spec.units() },
        elapsed: t0.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Difference {
    Forward,
    Backward,
    Central,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrnStep {
    pub step: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrnResult {
    pub estimate: f64,
    pub standard_error: f64,
    pub steps: Vec<CrnStep>,
    /// False when successive step estimates do not approach monotonically
    /// beyond their noise.
    pub monotone: bool,
    pub inconclusive: bool,
}

/// Linear weights `c` with `Σ c_j v_j` the polynomial extrapolant to 0.
pub fn extrapolation_weights(hs: &[f64]) -> Vec<f64> {
    (0..hs.len())
        .map(|j| {
            let e: Vec<f64> = (0..hs.len()).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            richardson::extrapolate_to_zero(hs, &e, hs.len()).estimate
        })
        .collect()
}

fn quotient(f: &dyn Fn(f64) -> f64, x0: f64, h: f64, mode: Difference) -> f64 {
    match mode {
        Difference::Forward => (f(x0 + h) - f(x0)) / h,
        Difference::Backward => (f(x0) - f(x0 - h)) / h,
        Difference::Central => (f(x0 + h) - f(x0 - h)) / (2.0 * h),
    }
}

fn crn_finish(steps: &[f64], acc: &[Welford]) -> CrnResult {
    let m = steps.len();
    let rows: Vec<CrnStep> = (0..m).map(|j| CrnStep { step: steps[j], mean: acc[j].mean, se: acc[j].se() }).collect();
    let comb = acc[m];
    // Successive differences should shrink (or stay within noise).
    let mut monotone = true;
    if m >= 3 {
        let d: Vec<f64> = rows.windows(2).map(|w| w[1].mean - w[0].mean).collect();
        for w in d.windows(2) {
            let noise = 3.0 * (rows[0].se + rows[m - 1].se);
            if w[0].signum() != w[1].signum() && w[0].abs().max(w[1].abs()) > noise {
                monotone = false;
            }
        }
    }
    CrnResult { estimate: comb.mean, standard_error: comb.se(), steps: rows, monotone, inconclusive: !monotone }
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
        return invalid("difference steps must be positive");
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("difference steps must be strictly decreasing");
    }
    Ok(())
}

/// Extrapolated CRN difference quotient of `E f(X, x)` in `x` at `x0`
/// under a terminal measure. Every step uses the same samples; the
/// reported SE is that of the extrapolated per-sample combination.
pub fn crn_derivative_terminal<F>(
    m: &PricingMeasure,
    spec: &MCSpec,
    x0: f64,
    steps: &[f64],
    mode: Difference,
    f: F,
) -> Result<CrnResult>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    spec.validate()?;
    check_steps(steps)?;
    let n = m.dim();
    let ms = steps.len();
    let vars: Vec<f64> = steps.iter().map(|h| if mode == Difference::Central { h * h } else { *h }).collect();
    let w = extrapolation_weights(&vars);
    let acc = accumulate(spec.units(), spec.chunk, ms + 1, |u, out| {
        let mut x = vec![0.0; n];
        let mut eval = |mirror: bool, out: &mut [f64]| {
            m.draw(spec.seed, u, mirror, &mut x);
            let g = |p: f64| f(&x, p);
            let mut c = 0.0;
            for j in 0..ms {
                out[j] = quotient(&g, x0, steps[j], mode);
                c += w[j] * out[j];
            }
            out[ms] = c;
        };
        eval(false, out);
        if spec.antithetic {
            let mut o2 = vec![0.0; ms + 1];
            eval(true, &mut o2);
            for (a, b) in out.iter_mut().zip(&o2) {
                *a = 0.5 * (*a + b);
            }
        }
    });
    Ok(crn_finish(steps, &acc))
}

/// As [`crn_derivative_terminal`] for a path functional `f(path, x)`.
pub fn crn_derivative_path<F>(
    pm: &PathModel,
    spec: &MCSpec,
    x0: f64,
    steps: &[f64],
    mode: Difference,
    f: F,
) -> Result<CrnResult>
where
    F: Fn(&Path, f64) -> f64 + Sync,
{
    check_steps(steps)?;
    let ms = steps.len();
    let vars: Vec<f64> = steps.iter().map(|h| if mode == Difference::Central { h * h } else { *h }).collect();
    let w = extrapolation_weights(&vars);
    let acc = visit_paths(pm, spec, ms + 1, |_, _, p, out| {
        let g = |x: f64| f(p, x);
        let mut c = 0.0;
        for j in 0..ms {
            out[j] = quotient(&g, x0, steps[j], mode);
            c += w[j] * out[j];
        }
        out[ms] = c;
    })?;
    Ok(crn_finish(steps, &acc))
}
