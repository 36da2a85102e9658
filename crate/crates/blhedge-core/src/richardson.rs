//! Richardson extrapolation for step sequences with a constant ratio.

use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Extrapolation {
    pub estimate: f64,
    /// Difference between the two most refined extrapolants.
    pub error: f64,
    /// Raw values, coarsest first.
    pub raw: Vec<f64>,
    /// Neville-style table; row `j` holds the level-`j` extrapolants.
    pub table: Vec<Vec<f64>>,
}

/// Extrapolates `values[i] ≈ L + Σ_j c_j h_i^{p0 + j·dp}` where consecutive
/// steps shrink by `ratio` (`h_{i+1} = h_i / ratio`). `values` is ordered
/// coarsest first. All levels are used.
pub fn extrapolate(values: &[f64], ratio: f64, p0: u32, dp: u32) -> Extrapolation {
    assert!(!values.is_empty());
    let mut table = vec![values.to_vec()];
    let mut p = p0;
    while table.last().unwrap().len() > 1 {
        let prev = table.last().unwrap();
        let f = ratio.powi(p as i32);
        let next: Vec<f64> = prev.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        table.push(next);
        p += dp;
    }
    let estimate = table.last().unwrap()[0];
    let error = if table.len() >= 2 {
        let prev = &table[table.len() - 2];
        (prev[prev.len() - 1] - estimate).abs()
    } else {
        f64::NAN
    };
    Extrapolation { estimate, error, raw: values.to_vec(), table }
}

/// Extrapolates using only the last `levels` values of `values`.
pub fn extrapolate_tail(values: &[f64], levels: usize, ratio: f64, p0: u32, dp: u32) -> Extrapolation {
    let k = levels.min(values.len()).max(1);
    let mut e = extrapolate(&values[values.len() - k..], ratio, p0, dp);
    e.raw = values.to_vec();
    e
}

/// Polynomial extrapolation to `h = 0` through the last `levels` points
/// `(h_i, values_i)` (Neville's scheme). Steps need not be geometric.
pub fn extrapolate_to_zero(hs: &[f64], values: &[f64], levels: usize) -> Extrapolation {
    assert_eq!(hs.len(), values.len());
    assert!(!values.is_empty());
    let k = levels.min(values.len()).max(1);
    let off = values.len() - k;
    let h = &hs[off..];
    let mut table = vec![values[off..].to_vec()];
    let mut j = 1;
    while table.last().unwrap().len() > 1 {
        let prev = table.last().unwrap();
        let next: Vec<f64> = (0..prev.len() - 1)
            .map(|i| (h[i] * prev[i + 1] - h[i + j] * prev[i]) / (h[i] - h[i + j]))
            .collect();
        table.push(next);
        j += 1;
    }
    let estimate = table.last().unwrap()[0];
    let error = if table.len() >= 2 {
        let prev = &table[table.len() - 2];
        (prev[prev.len() - 1] - estimate).abs()
    } else {
        f64::NAN
    };
    Extrapolation { estimate, error, raw: values.to_vec(), table }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_polynomial_error_terms() {
        let l = 1.2345;
        let vals: Vec<f64> = (0..4).map(|i| {
            let h = 0.5f64.powi(i);
            l + 0.3 * h - 0.7 * h * h + 0.1 * h * h * h
        }).collect();
        let e = extrapolate(&vals, 2.0, 1, 1);
        assert!((e.estimate - l).abs() < 1e-13);
        let vals2: Vec<f64> = (0..3).map(|i| {
            let h = 0.5f64.powi(i);
            l + h * h + h.powi(4)
        }).collect();
        assert!((extrapolate(&vals2, 2.0, 2, 2).estimate - l).abs() < 1e-13);
    }

    #[test]
    fn neville_matches_richardson_on_geometric_steps() {
        let hs = [0.4, 0.2, 0.1, 0.05];
        let vals: Vec<f64> = hs.iter().map(|h| 2.0 + 0.5 * h - 3.0 * h * h).collect();
        let a = extrapolate_to_zero(&hs, &vals, 3);
        let b = extrapolate_tail(&vals, 3, 2.0, 1, 1);
        assert!((a.estimate - 2.0).abs() < 1e-13);
        assert!((a.estimate - b.estimate).abs() < 1e-13);
        let hs = [0.3, 0.17, 0.05];
        let vals: Vec<f64> = hs.iter().map(|h| 1.0 - h + h * h).collect();
        assert!((extrapolate_to_zero(&hs, &vals, 3).estimate - 1.0).abs() < 1e-13);
    }
}
