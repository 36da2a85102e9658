//! Pricing measures over terminal states in R₊ⁿ.
//!
//! Three representative laws: a zero-rate correlated lognormal (absolutely
//! continuous), a finite atomic law, and an empirical sample. All of them
//! answer joint tail queries with a per-coordinate choice of `>` or `≥`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::rng::{Lane, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// `X > y`
    Gt,
    /// `X ≥ y`
    Ge,
}

impl Strictness {
    #[inline]
    pub fn holds(self, x: f64, y: f64) -> bool {
        match self {
            Strictness::Gt => x > y,
            Strictness::Ge => x >= y,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailEvent {
    pub thresholds: Vec<f64>,
    pub strictness: Vec<Strictness>,
}

impl TailEvent {
    pub fn new(thresholds: Vec<f64>, strictness: Vec<Strictness>) -> Result<Self> {
        if thresholds.is_empty() {
            return invalid("tail event needs at least one coordinate");
        }
        if thresholds.len() != strictness.len() {
            return Err(Error::DimensionMismatch { expected: thresholds.len(), got: strictness.len() });
        }
        if let Some(y) = thresholds.iter().find(|y| !y.is_finite() || **y < 0.0) {
            return invalid(format!("threshold {y} must be finite and non-negative"));
        }
        Ok(Self { thresholds, strictness })
    }

    pub fn uniform(thresholds: Vec<f64>, s: Strictness) -> Result<Self> {
        let n = thresholds.len();
        Self::new(thresholds, vec![s; n])
    }

    pub fn dim(&self) -> usize {
        self.thresholds.len()
    }
}

/// Deterministic bond value at maturity, `B_T ≥ 1` with `B_0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discount {
    b_t: f64,
}

impl Discount {
    pub fn new(b_t: f64) -> Result<Self> {
        if !(b_t >= 1.0) || !b_t.is_finite() {
            return invalid(format!("bond value B_T = {b_t} must be finite and >= 1"));
        }
        Ok(Self { b_t })
    }

    pub fn none() -> Self {
        Self { b_t: 1.0 }
    }

    pub fn bond(&self) -> f64 {
        self.b_t
    }

    /// The multiplier `B_T⁻¹` applied to undiscounted expectations.
    pub fn factor(&self) -> f64 {
        1.0 / self.b_t
    }
}

impl Default for Discount {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    CorrelatedLognormal { s0: Vec<f64>, sigma: Vec<f64>, maturity: f64, corr: Vec<Vec<f64>> },
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    Empirical { samples: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricingMeasure {
    kind: MeasureKind,
    dim: usize,
    /// Lower-triangular (or clipped eigen) factor of the correlation matrix.
    factor: Vec<Vec<f64>>,
    factor_clipped: bool,
}

/// Terminal samples, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    /// True when the correlation factor came from clipping negative
    /// eigenvalues rather than a Cholesky decomposition.
    pub factor_clipped: bool,
}

impl SampleMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self.values[i * self.dim + j]).sum::<f64>() / self.rows as f64
    }
}

/// Terminal-sample chunk size; sampling results do not depend on it because
/// each sample has its own counter lane.
pub const SAMPLE_CHUNK: usize = 4096;

impl PricingMeasure {
    pub fn lognormal(s0: Vec<f64>, sigma: Vec<f64>, maturity: f64, corr: Vec<Vec<f64>>) -> Result<Self> {
        let n = s0.len();
        if n == 0 {
            return invalid("lognormal measure needs at least one asset");
        }
        if sigma.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sigma.len() });
        }
        if corr.len() != n || corr.iter().any(|r| r.len() != n) {
            return invalid(format!("correlation matrix must be {n}x{n}"));
        }
        if s0.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid("spot prices must be positive and finite");
        }
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return invalid("volatilities must be non-negative and finite");
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return invalid("maturity must be positive");
        }
        for i in 0..n {
            if (corr[i][i] - 1.0).abs() > 1e-12 {
                return invalid("correlation diagonal must be 1");
            }
            for j in 0..n {
                if (corr[i][j] - corr[j][i]).abs() > 1e-12 || corr[i][j].abs() > 1.0 + 1e-12 {
                    return invalid("correlation matrix must be symmetric with entries in [-1, 1]");
                }
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| corr[i][j]);
        let eig = SymmetricEigen::new(m.clone());
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::NotPsd(min_eig));
        }
        let (factor, factor_clipped) = match m.clone().cholesky() {
            Some(ch) if min_eig > 1e-12 => {
                let l = ch.l();
                ((0..n).map(|i| (0..n).map(|j| l[(i, j)]).collect()).collect(), false)
            }
            _ => {
                let mut f = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for k in 0..n {
                        f[i][k] = eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt();
                    }
                }
                (f, true)
            }
        };
        Ok(Self { kind: MeasureKind::CorrelatedLognormal { s0, sigma, maturity, corr }, dim: n, factor, factor_clipped })
    }

    /// Single-asset lognormal convenience constructor.
    pub fn lognormal_1d(s0: f64, sigma: f64, maturity: f64) -> Result<Self> {
        Self::lognormal(vec![s0], vec![sigma], maturity, vec![vec![1.0]])
    }

    /// Two-asset lognormal convenience constructor.
    pub fn lognormal_2d(s0: [f64; 2], sigma: [f64; 2], maturity: f64, rho: f64) -> Result<Self> {
        Self::lognormal(s0.to_vec(), sigma.to_vec(), maturity, vec![vec![1.0, rho], vec![rho, 1.0]])
    }

    pub fn discrete(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("discrete measure needs at least one atom");
        }
        let n = atoms[0].len();
        if n == 0 || atoms.iter().any(|a| a.len() != n) {
            return invalid("atoms must share a positive dimension");
        }
        if weights.len() != atoms.len() {
            return Err(Error::DimensionMismatch { expected: atoms.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return invalid("weights must be non-negative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        if atoms.iter().flatten().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return invalid("atoms must be finite and non-negative");
        }
        Ok(Self { kind: MeasureKind::Discrete { atoms, weights }, dim: n, factor: vec![], factor_clipped: false })
    }

    pub fn empirical(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("empirical measure needs at least one sample");
        }
        let n = samples[0].len();
        if n == 0 || samples.iter().any(|a| a.len() != n) {
            return invalid("samples must share a positive dimension");
        }
        if samples.iter().flatten().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return invalid("samples must be finite and non-negative");
        }
        Ok(Self { kind: MeasureKind::Empirical { samples }, dim: n, factor: vec![], factor_clipped: false })
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        match &self.kind {
            MeasureKind::CorrelatedLognormal { sigma, .. } => sigma.iter().all(|s| *s > 0.0),
            _ => false,
        }
    }

    pub fn factor_clipped(&self) -> bool {
        self.factor_clipped
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: n });
        }
        Ok(())
    }

    /// `Q(⋀ᵢ Xᵢ ⋈ᵢ yᵢ)`.
    pub fn joint_tail_prob(&self, e: &TailEvent) -> Result<f64> {
        self.check_dim(e.dim())?;
        Ok(self.tail_unchecked(&e.thresholds, &e.strictness))
    }

    /// Tail probability restricted to a subset of coordinates; the remaining
    /// coordinates are unconstrained.
    pub fn tail_subset(&self, coords: &[usize], y: &[f64], s: &[Strictness]) -> f64 {
        debug_assert_eq!(coords.len(), y.len());
        match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, sigma, maturity, corr } => {
                let mut a = Vec::with_capacity(coords.len());
                let mut idx = Vec::with_capacity(coords.len());
                for (k, &c) in coords.iter().enumerate() {
                    let sd = sigma[c] * maturity.sqrt();
                    if sd == 0.0 {
                        if !s[k].holds(s0[c], y[k]) {
                            return 0.0;
                        }
                        continue;
                    }
                    if y[k] <= 0.0 {
                        continue;
                    }
                    a.push(((y[k] / s0[c]).ln() + 0.5 * sd * sd) / sd);
                    idx.push(c);
                }
                let r: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| corr[i][j]).collect()).collect();
                normal::orthant_upper(&a, &r, 0x5eed).0
            }
            MeasureKind::Discrete { atoms, weights } => {
                let mut p = 0.0;
                for (x, w) in atoms.iter().zip(weights) {
                    if coords.iter().enumerate().all(|(k, &c)| s[k].holds(x[c], y[k])) {
                        p += w;
                    }
                }
                p.min(1.0)
            }
            MeasureKind::Empirical { samples } => {
                let hits = samples
                    .iter()
                    .filter(|x| coords.iter().enumerate().all(|(k, &c)| s[k].holds(x[c], y[k])))
                    .count();
                hits as f64 / samples.len() as f64
            }
        }
    }

    pub(crate) fn tail_unchecked(&self, y: &[f64], s: &[Strictness]) -> f64 {
        let coords: Vec<usize> = (0..self.dim).collect();
        self.tail_subset(&coords, y, s)
    }

    /// `Q(X_i ⋈ y)` for one coordinate.
    pub fn marginal_tail(&self, i: usize, y: f64, s: Strictness) -> f64 {
        self.tail_subset(&[i], &[y], &[s])
    }

    pub fn marginal_expectation(&self, i: usize) -> Result<f64> {
        if i >= self.dim {
            return invalid(format!("coordinate {i} out of range for dimension {}", self.dim));
        }
        Ok(match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, .. } => s0[i],
            MeasureKind::Discrete { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| a[i] * w).sum(),
            MeasureKind::Empirical { samples } => samples.iter().map(|x| x[i]).sum::<f64>() / samples.len() as f64,
        })
    }

    /// Exact `E f(X)` for discrete and empirical laws; `None` for the
    /// lognormal.
    pub fn atom_expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> Option<f64> {
        match &self.kind {
            MeasureKind::CorrelatedLognormal { .. } => None,
            MeasureKind::Discrete { atoms, weights } => Some(atoms.iter().zip(weights).map(|(a, w)| w * f(a)).sum()),
            MeasureKind::Empirical { samples } => {
                Some(samples.iter().map(|a| f(a)).sum::<f64>() / samples.len() as f64)
            }
        }
    }

    /// Per-coordinate truncation point beyond which the tail mass is
    /// negligible (< 1e-10 for the lognormal; exactly zero otherwise).
    pub fn upper_truncation(&self, i: usize) -> f64 {
        match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, sigma, maturity, .. } => {
                let sd = sigma[i] * maturity.sqrt();
                if sd == 0.0 {
                    s0[i] + 1.0
                } else {
                    s0[i] * (-0.5 * sd * sd + 10.0 * sd).exp()
                }
            }
            MeasureKind::Discrete { atoms, .. } => atoms.iter().map(|a| a[i]).fold(0.0, f64::max) + 1.0,
            MeasureKind::Empirical { samples } => samples.iter().map(|a| a[i]).fold(0.0, f64::max) + 1.0,
        }
    }

    /// Distinct atom coordinates of coordinate `i` (for quadrature node
    /// augmentation). Empirical samples contribute only when there are few.
    pub fn atom_coordinates(&self, i: usize) -> Vec<f64> {
        let mut v: Vec<f64> = match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, sigma, .. } => {
                if sigma[i] == 0.0 {
                    vec![s0[i]]
                } else {
                    vec![]
                }
            }
            MeasureKind::Discrete { atoms, .. } => atoms.iter().map(|a| a[i]).collect(),
            MeasureKind::Empirical { samples } => {
                if samples.len() <= 2000 {
                    samples.iter().map(|a| a[i]).collect()
                } else {
                    vec![]
                }
            }
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Draws sample number `index` into `out`. With `antithetic`, the mirror
    /// of the same draw is produced (`-z` for normals, `1-u` for uniforms).
    pub fn draw(&self, seed: u64, index: u64, antithetic: bool, out: &mut [f64]) {
        let mut lane = Lane::new(seed, Stream::Terminal, index >> 32, index as u32);
        match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, sigma, maturity, .. } => {
                let n = self.dim;
                let mut z = [0.0f64; 8];
                let mut zs = vec![0.0; if n > 8 { n } else { 0 }];
                let z: &mut [f64] = if n <= 8 { &mut z[..n] } else { &mut zs };
                for zi in z.iter_mut() {
                    let v = lane.normal();
                    *zi = if antithetic { -v } else { v };
                }
                for i in 0..n {
                    let mut x = 0.0;
                    for k in 0..n {
                        x += self.factor[i][k] * z[k];
                    }
                    let sd = sigma[i] * maturity.sqrt();
                    out[i] = s0[i] * (sd * x - 0.5 * sd * sd).exp();
                }
            }
            MeasureKind::Discrete { atoms, weights } => {
                let u = lane.uniform();
                let u = if antithetic { 1.0 - u } else { u };
                let mut acc = 0.0;
                let mut pick = atoms.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                out.copy_from_slice(&atoms[pick]);
            }
            MeasureKind::Empirical { samples } => {
                let u = lane.uniform();
                let u = if antithetic { 1.0 - u } else { u };
                let k = ((u * samples.len() as f64) as usize).min(samples.len() - 1);
                out.copy_from_slice(&samples[k]);
            }
        }
    }

    /// Deterministic terminal samples; generation is chunk-parallel and the
    /// output does not depend on the thread count.
    pub fn sample_terminal(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        use rayon::prelude::*;
        if count == 0 {
            return invalid("sample count must be >= 1");
        }
        let n = self.dim;
        let mut values = vec![0.0; count * n];
        values.par_chunks_mut(SAMPLE_CHUNK * n).enumerate().for_each(|(c, chunk)| {
            for (k, row) in chunk.chunks_mut(n).enumerate() {
                self.draw(seed, (c * SAMPLE_CHUNK + k) as u64, false, row);
            }
        });
        Ok(SampleMatrix { rows: count, dim: n, values, factor_clipped: self.factor_clipped })
    }

    /// Lognormal parameters `(s0, total sd)` of coordinate `i`, if any.
    pub fn lognormal_params(&self, i: usize) -> Option<(f64, f64)> {
        match &self.kind {
            MeasureKind::CorrelatedLognormal { s0, sigma, maturity, .. } => Some((s0[i], sigma[i] * maturity.sqrt())),
            _ => None,
        }
    }

    pub fn correlation(&self, i: usize, j: usize) -> Option<f64> {
        match &self.kind {
            MeasureKind::CorrelatedLognormal { corr, .. } => Some(corr[i][j]),
            _ => None,
        }
    }
}
