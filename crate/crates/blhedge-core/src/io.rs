//! CSV readers and writers for surfaces, densities, samples and paths.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::mc::Path;
use crate::measure::PricingMeasure;
use crate::spd::{CallSurface, DensityGrid, SurfaceKind};

fn parse(field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("row {row}: cannot parse {field:?} as a number")))
}

/// Reads `strike,price` or `k1,...,kn,price` rows in any order. The strike
/// axes are the sorted distinct values per column and every grid point must
/// appear exactly once.
pub fn read_surface_csv<R: Read>(r: R, kind: Option<SurfaceKind>) -> Result<CallSurface> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[header.len() - 1] != "price" {
        return invalid("surface CSV needs strike columns followed by a `price` column");
    }
    let n = header.len() - 1;
    let expected: Vec<String> = if n == 1 { vec!["strike".into()] } else { (1..=n).map(|i| format!("k{i}")).collect() };
    if n == 1 && header[0] != "strike" && header[0] != "k1" {
        return invalid(format!("expected header `strike,price`, got {header:?}"));
    }
    if n > 1 && header[..n] != expected[..] {
        return invalid(format!("expected strike columns {expected:?}, got {:?}", &header[..n]));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(|f| parse(f, i + 2)).collect::<Result<_>>()?;
        rows.push(v);
    }
    if rows.is_empty() {
        return invalid("surface CSV has no rows");
    }
    let mut axes: Vec<Vec<f64>> = (0..n).map(|d| rows.iter().map(|r| r[d]).collect()).collect();
    for ax in axes.iter_mut() {
        ax.sort_by(f64::total_cmp);
        ax.dedup();
    }
    let index: Vec<HashMap<u64, usize>> =
        axes.iter().map(|ax| ax.iter().enumerate().map(|(i, v)| (v.to_bits(), i)).collect()).collect();
    let count: usize = axes.iter().map(Vec::len).product();
    let mut prices = vec![f64::NAN; count];
    for r in &rows {
        let mut f = 0;
        for d in 0..n {
            f = f * axes[d].len() + index[d][&r[d].to_bits()];
        }
        if !prices[f].is_nan() {
            return Err(Error::Grid(format!("duplicate grid point {:?}", &r[..n])));
        }
        prices[f] = r[n];
    }
    let missing: Vec<usize> = (0..count).filter(|f| prices[*f].is_nan()).collect();
    if !missing.is_empty() {
        let show: Vec<String> = missing
            .iter()
            .take(10)
            .map(|&f| {
                let mut rem = f;
                let mut p = vec![0.0; n];
                for d in (0..n).rev() {
                    p[d] = axes[d][rem % axes[d].len()];
                    rem /= axes[d].len();
                }
                format!("{p:?}")
            })
            .collect();
        return Err(Error::Grid(format!(
            "incomplete grid: {} missing points, e.g. {}",
            missing.len(),
            show.join(", ")
        )));
    }
    let kind = kind.unwrap_or(if n == 1 { SurfaceKind::Call1d } else { SurfaceKind::MultiLookback });
    CallSurface::new(kind, axes, prices)
}

pub fn write_surface_csv<W: Write>(s: &CallSurface, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = s.dim();
    let mut header: Vec<String> = if n == 1 { vec!["strike".into()] } else { (1..=n).map(|i| format!("k{i}")).collect() };
    header.push("price".into());
    out.write_record(&header)?;
    for (f, p) in s.prices.iter().enumerate() {
        let mut rem = f;
        let mut rec = vec![String::new(); n + 1];
        for d in (0..n).rev() {
            rec[d] = format!("{:?}", s.strikes[d][rem % s.strikes[d].len()]);
            rem /= s.strikes[d].len();
        }
        rec[n] = format!("{p:?}");
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Coordinates, density and point mass per row.
pub fn write_density_csv<W: Write>(g: &DensityGrid, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = g.dim();
    let mut header: Vec<String> = if n == 1 { vec!["x".into()] } else { (1..=n).map(|i| format!("x{i}")).collect() };
    header.push("density".into());
    header.push("mass".into());
    out.write_record(&header)?;
    for (f, (d, m)) in g.density.iter().zip(&g.masses).enumerate() {
        let mut rem = f;
        let mut rec = vec![String::new(); n + 2];
        for k in (0..n).rev() {
            rec[k] = format!("{:?}", g.coords[k][rem % g.coords[k].len()]);
            rem /= g.coords[k].len();
        }
        rec[n] = format!("{d:?}");
        rec[n + 1] = format!("{m:?}");
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Empirical measure from a CSV with header `x1,...,xn`.
pub fn read_empirical_csv<R: Read>(r: R) -> Result<PricingMeasure> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<String> = (1..=header.len()).map(|i| format!("x{i}")).collect();
    if header.is_empty() || header != expected {
        return invalid(format!("expected header {expected:?}, got {header:?}"));
    }
    let mut samples = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        samples.push(rec.iter().map(|f| parse(f, i + 2)).collect::<Result<Vec<f64>>>()?);
    }
    PricingMeasure::empirical(samples)
}

/// `t,asset,value` rows of one simulated path (assets 1-based).
pub fn write_path_csv<W: Write>(p: &Path, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "asset", "value"])?;
    for k in 0..=p.steps {
        for i in 0..p.n {
            out.write_record([format!("{:?}", k as f64 * p.dt), (i + 1).to_string(), format!("{:?}", p.at(k, i))])?;
        }
    }
    out.flush()?;
    Ok(())
}
