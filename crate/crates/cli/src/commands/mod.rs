//! Subcommand implementations. Each writes its reports into the output
//! directory, prints a short summary and returns whether every verdict
//! passed.

mod analysis;
mod play;

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use tugwar::dpp::DppMarch;
use tugwar::grid::{make_grid, DomainSpec, SpaceTimeGrid};
use tugwar::payoff::extend_payoff;

use crate::config::Config;
use crate::output::{num, push_row};
use crate::{CliError, Context};

pub use analysis::{bounds, converge, verify_barriers};
pub use play::{probe, simulate};

/// Grid parameters echoed in reports.
#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub n: usize,
    pub h: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub nodes: usize,
    pub interior_nodes: usize,
    pub slices: usize,
}

impl GridSummary {
    pub fn of(g: &SpaceTimeGrid<f64>) -> Self {
        Self {
            n: g.dim(),
            h: g.h(),
            epsilon: g.epsilon(),
            horizon: g.horizon(),
            nodes: g.node_count(),
            interior_nodes: g.interior_count(),
            slices: g.slice_count(),
        }
    }
}

pub(crate) fn build_grid(cfg: &Config) -> Result<(DomainSpec<f64>, Arc<SpaceTimeGrid<f64>>), CliError> {
    let domain = cfg.domain()?;
    let g = cfg.grid()?;
    let grid = make_grid(domain.clone(), g.h, g.epsilon, g.horizon)?;
    Ok((domain, Arc::new(grid)))
}

pub(crate) fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    seed: u64,
    config: &'a Config,
    grid: GridSummary,
    complete: bool,
    completed_slices: usize,
    residual: Option<f64>,
    residual_bound: Option<f64>,
    value_min: Option<f64>,
    value_max: Option<f64>,
    passed: bool,
    outputs: Vec<String>,
}

/// Marches the DPP. With `max_slices` the march stops early and only a
/// resumable dump is written.
pub fn solve(ctx: &Context, resume: Option<&Path>, max_slices: Option<usize>) -> Result<bool, CliError> {
    let cfg = &ctx.config;
    let (_, grid) = build_grid(cfg)?;
    let field = cfg.field()?;
    let payoff = cfg.payoff()?;
    let mut march = match resume {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            DppMarch::resume(&grid, field.as_ref(), payoff.as_ref(), &bytes)?
        }
        None => DppMarch::new(&grid, field.as_ref(), payoff.as_ref())?,
    };
    march.advance(max_slices.unwrap_or(usize::MAX))?;
    let mut outputs = Vec::new();
    let mut report = SolveReport {
        command: "solve",
        seed: ctx.seed,
        config: cfg,
        grid: GridSummary::of(&grid),
        complete: march.is_done(),
        completed_slices: march.completed(),
        residual: None,
        residual_bound: None,
        value_min: None,
        value_max: None,
        passed: true,
        outputs: Vec::new(),
    };
    if !march.is_done() || cfg.solve.dump {
        ctx.out.write("solve.dump", &march.dump())?;
        outputs.push("solve.dump".to_string());
    }
    if !march.is_done() {
        report.outputs = outputs;
        ctx.out.json("solve.json", &report)?;
        say!(ctx, "solve: {} of {} slices marched, dump written", march.completed(), grid.slice_count());
        return Ok(true);
    }
    let v = march.finish()?;
    let sup = extend_payoff(payoff.as_ref(), &grid)?.sup_norm();
    let residual = v.residual().unwrap_or(f64::INFINITY);
    let bound = 1e-12 * sup;
    report.residual = Some(residual);
    report.residual_bound = Some(bound);
    report.value_min = Some(v.min());
    report.value_max = Some(v.max());
    report.passed = residual <= bound;

    let slices: Vec<usize> = match &cfg.solve.slices {
        Some(list) => {
            if let Some(&bad) = list.iter().find(|&&s| s >= grid.slice_count()) {
                return Err(CliError::Config(format!("solve.slices: slice {bad} out of range")));
            }
            list.clone()
        }
        None => (0..grid.slice_count()).collect(),
    };
    let n = grid.dim();
    let mut csv = String::from("slice,t");
    for i in 1..=n {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push_str(",value,interior\n");
    for &s in &slices {
        let t = grid.slice_time(s);
        for node in 0..grid.node_count() {
            csv.push_str(&format!("{s},"));
            let mut row = vec![t];
            row.extend_from_slice(grid.coords(node));
            row.push(v.get(node, s));
            push_row(&mut csv, row);
            csv.push_str(if grid.is_interior(node) { ",1\n" } else { ",0\n" });
        }
    }
    ctx.out.write("solve.csv", csv.as_bytes())?;
    outputs.push("solve.csv".to_string());
    report.outputs = outputs;
    ctx.out.json("solve.json", &report)?;
    say!(
        ctx,
        "solve: {} nodes x {} slices, residual {} (bound {}) {}",
        grid.node_count(),
        grid.slice_count(),
        num(residual),
        num(bound),
        verdict(report.passed)
    );
    Ok(report.passed)
}
