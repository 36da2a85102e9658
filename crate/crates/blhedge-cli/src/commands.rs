use std::io::Write;
use std::path::PathBuf;

use blhedge_core::engine::price_product;
use blhedge_core::error::{Error, Result};
use blhedge_core::fixtures::binomial_2d;
use blhedge_core::hedge::{build_call_portfolio, build_digital_decomposition, replication_report, HedgePortfolio};
use blhedge_core::io::{read_surface_csv, write_density_csv, write_path_csv};
use blhedge_core::mc::{mc_price_terminal, MCSpec, Path, PathModel, PathModelSpec};
use blhedge_core::measure::{Discount, MeasureKind};
use blhedge_core::mollify::{convergence_check, MollifierSpec};
use blhedge_core::pathdep::{
    asian_basket_from_multi_lookback, asian_from_parisian_grid, asian_sensitivities, default_strike_steps,
    lookback_from_barrier_integral, price_h_of_terminal_and_max, verify_barrier_lookback_strike, IdentityReport,
};
use blhedge_core::payoff::{check_product_membership, BlackBoxPayoff};
use blhedge_core::spd::{bl_density_1d, coordinate_functions, joint_density_nd, random_rectangles, rectangle_prob_recovery};
use serde_json::{json, Value};

use crate::config::{HedgeMethod, Identity, MollifyTarget, PriceMethod, RunConfig, SCHEMA};

/// Buffered command output. The primary artifact goes to `--out` when set
/// (the report then goes to stdout) and to stdout otherwise (the report
/// then goes to stderr). Nothing is written until the command succeeds.
pub struct Output {
    path: Option<PathBuf>,
    primary: Vec<u8>,
    report: Vec<u8>,
}

impl Output {
    pub fn new(path: Option<PathBuf>) -> Self {
        Self { path, primary: Vec::new(), report: Vec::new() }
    }

    pub fn primary(mut self, s: impl AsRef<[u8]>) -> Self {
        self.primary.extend_from_slice(s.as_ref());
        self
    }

    fn line(&mut self, v: &Value) {
        self.primary.extend_from_slice(v.to_string().as_bytes());
        self.primary.push(b'\n');
    }

    fn report(&mut self, v: &Value) {
        self.report.extend_from_slice(v.to_string().as_bytes());
        self.report.push(b'\n');
    }

    pub fn flush(self) -> Result<()> {
        match &self.path {
            Some(p) => {
                std::fs::write(p, &self.primary)?;
                std::io::stdout().write_all(&self.report)?;
            }
            None => {
                std::io::stdout().write_all(&self.primary)?;
                std::io::stderr().write_all(&self.report)?;
            }
        }
        std::io::stdout().flush()?;
        Ok(())
    }
}

type Outcome = Result<(Output, bool)>;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn with_schema(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert("schema".into(), json!(SCHEMA));
    }
    v
}

pub fn price(cfg: &RunConfig, mut out: Output) -> Outcome {
    let m = cfg.build_measure()?;
    let h = cfg.build_payoff()?.build()?;
    if h.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: h.dim() });
    }
    let disc = Discount::new(cfg.discount)?;
    if !cfg.price.force {
        let rep = check_product_membership(&h, &m)?;
        if !rep.member() {
            return Err(Error::Membership(rep.failing.join("; ")));
        }
    }
    let v = match cfg.price.method {
        PriceMethod::Quadrature => {
            cfg.quadrature.validate(m.dim())?;
            let b = price_product(&h, &m, &cfg.quadrature, &disc)?;
            for w in &b.warnings {
                log::warn!("{w}");
            }
            let mut v = to_value(&b);
            v["method"] = json!("quadrature");
            v
        }
        PriceMethod::Mc => {
            let r = mc_price_terminal(&m, |x: &[f64]| h.eval(x), &cfg.mc, &disc)?;
            log::info!("{} paths in {:?}", r.paths_used, r.elapsed);
            let mut v = to_value(&r);
            v["method"] = json!("mc");
            v
        }
    };
    out.line(&with_schema(v));
    Ok((out, true))
}

pub fn density(cfg: &RunConfig, mut out: Output) -> Outcome {
    let d = cfg.density.as_ref().ok_or_else(|| Error::InvalidInput("config has no `density` block".into()))?;
    let s = read_surface_csv(std::fs::File::open(&d.surface)?, d.kind)?;
    let g = if s.dim() == 1 { bl_density_1d(&s)? } else { joint_density_nd(&s)? };
    for w in &g.warnings {
        log::warn!("{w}");
    }
    let mut csv = Vec::new();
    write_density_csv(&g, &mut csv)?;
    out = out.primary(csv);
    out.report(&with_schema(json!({
        "mass": g.mass,
        "negative_cells": g.negative_cells,
        "negative_mass_fraction": g.negative_mass_fraction,
        "arbitrage": g.arbitrage,
        "warnings": g.warnings,
    })));
    Ok((out, true))
}

pub fn hedge(cfg: &RunConfig, mut out: Output) -> Outcome {
    let o = cfg.hedge.as_ref().ok_or_else(|| Error::InvalidInput("config has no `hedge` block".into()))?;
    let m = cfg.build_measure()?;
    let f = o.factor.build()?;
    let i = o.coordinate;
    if i >= m.dim() {
        return Err(Error::InvalidInput(format!("coordinate {i} out of range for dimension {}", m.dim())));
    }
    let mut rows = Vec::new();
    let mut last: Option<HedgePortfolio> = None;
    match o.method {
        HedgeMethod::Calls => {
            let part = o.partition.as_ref().ok_or_else(|| Error::InvalidInput("`calls` hedge needs a partition".into()))?;
            let mut prev: Option<(f64, f64)> = None;
            for level in 0..=o.refinements {
                let pts = part.points(level);
                let hp = build_call_portfolio(&f, &pts, o.tail)?;
                let r = replication_report(&hp, &f, &m, i, &o.samples, &cfg.quadrature)?;
                let mut row = to_value(&r);
                row["cells"] = json!(pts.len() - 1);
                row["legs"] = json!(hp.leg_count());
                if let Some((sup, l1)) = prev {
                    row["sup_ratio"] = json!(sup / r.sup_error);
                    row["l1_ratio"] = json!(l1 / r.l1_error);
                }
                prev = Some((r.sup_error, r.l1_error));
                rows.push(row);
                last = Some(hp);
            }
        }
        HedgeMethod::Digitals => {
            let hp = build_digital_decomposition(&f, &m, i, &cfg.quadrature)?;
            let r = replication_report(&hp, &f, &m, i, &o.samples, &cfg.quadrature)?;
            let mut row = to_value(&r);
            row["legs"] = json!(hp.leg_count());
            rows.push(row);
            last = Some(hp);
        }
    }
    let mut csv = Vec::new();
    last.expect("at least one portfolio").write_csv(&mut csv)?;
    out = out.primary(csv);
    out.report(&with_schema(json!({ "method": o.method, "rows": rows })));
    Ok((out, true))
}

fn identity_line(r: &IdentityReport) -> Value {
    with_schema(to_value(r))
}

fn push(lines: &mut Vec<(Value, bool, bool)>, r: &IdentityReport) {
    lines.push((identity_line(r), r.pass, r.inconclusive));
}

fn path_model(s: &PathModelSpec) -> Result<PathModel> {
    PathModel::try_from(s.clone())
}

fn mc_with(cfg: &RunConfig, paths: usize) -> MCSpec {
    MCSpec { paths, ..cfg.mc.clone() }
}

fn dump_path(cfg: &RunConfig, id: Identity, pm: &PathModel) -> Result<()> {
    if let Some(dir) = &cfg.verify.path_dump {
        std::fs::create_dir_all(dir)?;
        let mut p = Path::default();
        pm.simulate(cfg.mc.seed, 0, false, &mut p);
        write_path_csv(&p, std::fs::File::create(dir.join(format!("{}.csv", id.name())))?)?;
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig, mut out: Output) -> Outcome {
    let v = &cfg.verify;
    if v.identities.is_empty() {
        let names: Vec<&str> = Identity::ALL.iter().map(|i| i.name()).collect();
        return Err(Error::InvalidInput(format!("no identity selected; choose from {}", names.join(", "))));
    }
    let mut lines: Vec<(Value, bool, bool)> = Vec::new();
    for &id in &v.identities {
        log::info!("verifying {}", id.name());
        match id {
            Identity::Thm21 => {
                let pm = path_model(&v.thm21.path)?;
                dump_path(cfg, id, &pm)?;
                let steps = default_strike_steps(pm.s0[0]);
                push(&mut lines, &verify_barrier_lookback_strike(&pm, v.thm21.barrier, &steps, &mc_with(cfg, v.thm21.paths))?);
            }
            Identity::Thm22 => {
                let pm = path_model(&v.thm22.path)?;
                dump_path(cfg, id, &pm)?;
                push(&mut lines, &lookback_from_barrier_integral(&pm, v.thm22.strike, &mc_with(cfg, v.thm22.paths))?);
            }
            Identity::Thm23 => {
                let pm = path_model(&v.thm23.path)?;
                dump_path(cfg, id, &pm)?;
                let spec = mc_with(cfg, v.thm23.paths);
                let payoffs = [
                    ("max", BlackBoxPayoff::new(2, std::sync::Arc::new(|x: &[f64]| x[1]))?),
                    ("terminal_times_max", BlackBoxPayoff::new(2, std::sync::Arc::new(|x: &[f64]| x[0] * x[1]))?),
                ];
                for (name, h) in payoffs {
                    let t = price_h_of_terminal_and_max(&pm, &h, &v.thm23.grid, &spec)?;
                    let mut r = t.report.clone().detail("spacing", t.spacing).detail("upper", t.upper);
                    r.pass &= (0.99..=1.01).contains(&t.mass);
                    r.note = Some(format!("h = {name}"));
                    push(&mut lines, &r);
                }
            }
            Identity::PropFa => {
                let pm = path_model(&v.prop_fa.path)?;
                dump_path(cfg, id, &pm)?;
                let a = asian_sensitivities(&pm, v.prop_fa.strike, &mc_with(cfg, v.prop_fa.paths))?;
                for r in a.reports() {
                    push(&mut lines, &r.clone().detail("event_frequency", a.event_frequency));
                }
            }
            Identity::Parisian => {
                let o = &v.parisian;
                let pm = path_model(&o.path)?;
                dump_path(cfg, id, &pm)?;
                let r = asian_from_parisian_grid(&pm, o.strike, &o.levels, &mc_with(cfg, o.paths))?;
                let mut line = with_schema(to_value(&r));
                line["identity"] = json!("parisian");
                lines.push((line, r.pass, false));
            }
            Identity::ThmAb => {
                let o = &v.thm_ab;
                let pm = path_model(&o.path)?;
                dump_path(cfg, id, &pm)?;
                let b = asian_basket_from_multi_lookback(&pm, o.strikes, &o.grid, &mc_with(cfg, o.paths))?;
                let worst = b.slices.iter().map(|s| (s.mass - 1.0).abs()).fold(0.0, f64::max);
                push(&mut lines, &b.report.clone().detail("max_slice_mass_error", worst));
            }
            Identity::Rectangle => {
                let m = match &cfg.measure {
                    Some(c) => c.build()?,
                    None => binomial_2d(),
                };
                if !matches!(m.kind(), MeasureKind::Discrete { .. }) {
                    return Err(Error::InvalidInput("rectangle recovery needs a discrete measure".into()));
                }
                let fs = coordinate_functions(m.dim());
                for (lo, hi) in random_rectangles(&m, v.rectangle.count, cfg.mc.seed) {
                    let r = rectangle_prob_recovery(&m, &fs, &lo, &hi, v.rectangle.eps)?;
                    let rep = IdentityReport::new("rectangle", r.probability, r.direct, 0.0, 0.0, 0.0)
                        .with_allowance(1e-12)
                        .detail("min_gap", r.min_gap)
                        .detail("exact", if r.exact { 1.0 } else { 0.0 });
                    push(&mut lines, &rep);
                }
            }
        }
    }
    let passed = lines.iter().filter(|l| l.1).count();
    let inconclusive = lines.iter().filter(|l| !l.1 && l.2).count();
    let failed = lines.len() - passed - inconclusive;
    for (l, _, _) in &lines {
        out.line(l);
    }
    out.line(&json!({
        "schema": SCHEMA,
        "summary": {
            "identities": v.identities.iter().map(|i| i.name()).collect::<Vec<_>>(),
            "reports": lines.len(),
            "passed": passed,
            "inconclusive": inconclusive,
            "failed": failed,
        }
    }));
    Ok((out, failed == 0))
}

pub fn mollify(cfg: &RunConfig, mut out: Output) -> Outcome {
    let o = &cfg.mollify;
    let m = cfg.build_measure()?;
    let h = match &o.target {
        MollifyTarget::Spread => BlackBoxPayoff::spread(),
        MollifyTarget::RainbowP1 { k1, k2, k } => BlackBoxPayoff::rainbow_p1(*k1, *k2, *k),
        MollifyTarget::IndicatorGe => BlackBoxPayoff::indicator_ge(),
        MollifyTarget::Payoff => BlackBoxPayoff::from_product(&cfg.build_payoff()?.build()?),
    };
    let first = *o.eps.first().ok_or_else(|| Error::InvalidInput("mollify needs at least one eps".into()))?;
    let spec = MollifierSpec::new(h.dim(), first)?.with_nodes(o.nodes);
    let r = convergence_check(&h, &m, &spec, &o.eps, &cfg.mc)?;
    let mut v = to_value(&r);
    v["c"] = json!(spec.c());
    out.line(&with_schema(v));
    Ok((out, r.l1_monotone && r.price_monotone))
}
