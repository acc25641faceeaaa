//! `simulate` and `probe`.

use std::sync::Arc;

use serde::Serialize;
use tugwar::dpp::{solve_value, ValueFunction};
use tugwar::fields::probabilities_from_p;
use tugwar::game::{
    estimate_value, fractional_pull_strategy, greedy_dpp_strategy, pull_toward_strategy, run_game, Game, StoppingRule,
    Strategy, ValueEstimate,
};
use tugwar::grid::SpaceTimeGrid;
use tugwar::probes::{
    harnack_quotient, holder_fit, local_bound_check, sample_local_pairs, spatial_lipschitz_probe, time_holder_probe,
    CylinderSpec, LocalBoundReport, RegularityReport,
};
use tugwar::rng::substream;

use super::{build_grid, verdict, GridSummary};
use crate::config::{Config, GameMode, ProbeKind, StoppingConfig, StrategyConfig};
use crate::output::{num, push_row};
use crate::{CliError, Context};

type Recorded = (Vec<f64>, Strategy<f64>, Strategy<f64>, u64);

/// Seed of start `j`: distinct ChaCha keys per start, streams per run.
fn start_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn strategy(
    c: &StrategyConfig,
    x0: &[f64],
    eps: f64,
    values: Option<&Arc<ValueFunction<f64>>>,
) -> Result<Strategy<f64>, CliError> {
    Ok(match c {
        StrategyConfig::Greedy => {
            let v = values.ok_or_else(|| CliError::Config("greedy strategies need mode = \"lattice\"".into()))?;
            greedy_dpp_strategy(Arc::clone(v))
        }
        StrategyConfig::Zero => Strategy::Zero,
        StrategyConfig::Pull { target, stay } => pull_toward_strategy(target.clone(), *stay),
        StrategyConfig::Push { origin } => Strategy::PushAway { origin: origin.clone() },
        StrategyConfig::Cancellation { target, from_current } => Strategy::Cancellation {
            target: target.clone(),
            start: x0.to_vec(),
            use_current: *from_current,
            canceled: 0,
            cursor: 0,
        },
        StrategyConfig::Fractional { target, a } => fractional_pull_strategy(x0, target.clone(), *a, eps)?,
    })
}

fn stopping(c: &StoppingConfig) -> StoppingRule<f64> {
    match c {
        StoppingConfig::Boundary => StoppingRule::BoundaryExit,
        StoppingConfig::Cylinder { center, radius, t_bottom } => {
            StoppingRule::CylinderExit { center: center.clone(), radius: *radius, t_bottom: *t_bottom }
        }
        StoppingConfig::Level { t_level } => StoppingRule::LevelHit { t_level: *t_level },
    }
}

#[derive(Serialize)]
struct StartReport {
    start: Vec<f64>,
    t0: f64,
    seed: u64,
    estimate: ValueEstimate<f64>,
    dpp_value: Option<f64>,
    deviation_in_se: Option<f64>,
    within: Option<bool>,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    seed: u64,
    config: &'a Config,
    grid: GridSummary,
    starts: Vec<StartReport>,
    compared: usize,
    within: usize,
    passed: bool,
    outputs: Vec<String>,
}

pub fn simulate(ctx: &Context) -> Result<bool, CliError> {
    let cfg = &ctx.config;
    let sim = &cfg.simulate;
    let (domain, grid) = build_grid(cfg)?;
    let field = cfg.field()?;
    let payoff = cfg.payoff()?;
    let lattice = sim.mode == GameMode::Lattice;
    let values = if lattice { Some(Arc::new(solve_value(&grid, field.as_ref(), payoff.as_ref())?)) } else { None };
    let game = if lattice {
        Game::lattice(&grid, field.as_ref(), payoff.as_ref())?
    } else {
        Game::continuum(&grid, field.as_ref(), payoff.as_ref())
    };
    let rule = stopping(&sim.stopping);
    let raw_starts = if sim.starts.is_empty() { vec![domain.center.clone()] } else { sim.starts.clone() };
    let mut t0 = sim.t0.unwrap_or(grid.horizon());
    if lattice {
        t0 = grid.slice_time(grid.nearest_slice(t0));
    }
    let mut starts = Vec::new();
    let mut trajectories_for: Option<Recorded> = None;
    for (j, x) in raw_starts.iter().enumerate() {
        let x = snap(&grid, x, lattice)?;
        let s1 = strategy(&sim.player_i, &x, grid.epsilon(), values.as_ref())?;
        let s2 = strategy(&sim.player_ii, &x, grid.epsilon(), values.as_ref())?;
        let seed = start_seed(ctx.seed, j);
        let est = estimate_value(&game, (&x, t0), &s1, &s2, &rule, sim.runs, seed)?;
        // the DPP value is the game value only for optimal play to Γ
        let compare = lattice
            && matches!(sim.stopping, StoppingConfig::Boundary)
            && sim.player_i == StrategyConfig::Greedy
            && sim.player_ii == StrategyConfig::Greedy;
        let dpp_value = match (&values, compare) {
            (Some(v), true) => grid.nearest_node(&x).map(|node| v.get(node, grid.nearest_slice(t0))),
            _ => None,
        };
        let deviation = dpp_value.map(|u| {
            let d = (est.mean - u).abs();
            if est.std_error > 0.0 {
                d / est.std_error
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        });
        let within = deviation.map(|d| d <= sim.tolerance_se);
        if j == 0 {
            trajectories_for = Some((x.clone(), s1, s2, seed));
        }
        starts.push(StartReport { start: x, t0, seed, estimate: est, dpp_value, deviation_in_se: deviation, within });
    }
    let compared = starts.iter().filter(|s| s.within.is_some()).count();
    let within = starts.iter().filter(|s| s.within == Some(true)).count();
    let passed = compared == 0 || within as f64 >= sim.min_fraction * compared as f64;

    let mut outputs = Vec::new();
    if sim.trajectories > 0 {
        let (x, s1, s2, seed) = trajectories_for.expect("at least one start");
        let n = grid.dim();
        let mut csv = String::from("run,k,t");
        for i in 1..=n {
            csv.push_str(&format!(",x{i}"));
        }
        csv.push_str(",mover");
        for i in 1..=n {
            csv.push_str(&format!(",move{i}"));
        }
        csv.push('\n');
        for run in 0..sim.trajectories {
            let (mut a, mut b) = (s1.clone(), s2.clone());
            let out = run_game(&game, (&x, t0), &mut a, &mut b, &rule, substream(seed, run as u64), true)?;
            for p in out.trajectory.unwrap_or_default() {
                csv.push_str(&format!("{run},{},", p.k));
                let mut row = vec![p.t];
                row.extend_from_slice(&p.x);
                push_row(&mut csv, row);
                csv.push(',');
                csv.push_str(p.mover.map(|m| m.as_str()).unwrap_or(""));
                match p.vector {
                    Some(v) => {
                        csv.push(',');
                        push_row(&mut csv, v);
                    }
                    None => csv.push_str(&",".repeat(n)),
                }
                csv.push('\n');
            }
        }
        ctx.out.write("trajectories.csv", csv.as_bytes())?;
        outputs.push("trajectories.csv".to_string());
    }
    for s in &starts {
        let cmp = match (s.dpp_value, s.deviation_in_se) {
            (Some(u), Some(d)) => format!(" dpp {} ({:.2} se)", num(u), d),
            _ => String::new(),
        };
        say!(
            ctx,
            "simulate: start {:?} t0 {} mean {} se {}{}",
            s.start,
            num(s.t0),
            num(s.estimate.mean),
            num(s.estimate.std_error),
            cmp
        );
    }
    if compared > 0 {
        say!(ctx, "simulate: {within}/{compared} starts within {} se {}", sim.tolerance_se, verdict(passed));
    }
    let report = SimulateReport {
        command: "simulate",
        seed: ctx.seed,
        config: cfg,
        grid: GridSummary::of(&grid),
        starts,
        compared,
        within,
        passed,
        outputs,
    };
    ctx.out.json("simulate.json", &report)?;
    Ok(passed)
}

fn snap(grid: &SpaceTimeGrid<f64>, x: &[f64], lattice: bool) -> Result<Vec<f64>, CliError> {
    if x.len() != grid.dim() {
        return Err(CliError::Config(format!("start {x:?} does not have dimension {}", grid.dim())));
    }
    if !lattice {
        return Ok(x.to_vec());
    }
    let node = grid.nearest_node(x).ok_or_else(|| CliError::Config(format!("start {x:?} is off the lattice")))?;
    Ok(grid.coords(node).to_vec())
}

/// Quotient summary without the individual samples.
#[derive(Serialize)]
struct RegularitySummary {
    probe: &'static str,
    sample_count: usize,
    max_quotient: f64,
    mean_quotient: Option<f64>,
    exponent: Option<f64>,
    r_squared: Option<f64>,
    radius: f64,
    epsilon: f64,
    oscillations: Vec<(f64, f64)>,
    exhaustive: bool,
    warnings: Vec<String>,
}

impl From<RegularityReport<f64>> for RegularitySummary {
    fn from(r: RegularityReport<f64>) -> Self {
        let mean =
            (!r.samples.is_empty()).then(|| r.samples.iter().map(|s| s.quotient).sum::<f64>() / r.samples.len() as f64);
        Self {
            probe: r.probe,
            sample_count: r.samples.len(),
            max_quotient: r.max_quotient,
            mean_quotient: mean,
            exponent: r.exponent,
            r_squared: r.r_squared,
            radius: r.radius,
            epsilon: r.epsilon,
            oscillations: r.oscillations,
            exhaustive: r.exhaustive,
            warnings: r.warnings,
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum ProbeResult {
    Regularity(RegularitySummary),
    Harnack { quotient: f64, center: Vec<f64>, radius: f64, t0: f64 },
    Local { report: LocalBoundReport<f64>, a: u32, inf_alpha: f64, sampled: usize },
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    command: &'static str,
    seed: u64,
    config: &'a Config,
    grid: GridSummary,
    kind: ProbeKind,
    result: ProbeResult,
    verdict: String,
    passed: bool,
}

pub fn probe(ctx: &Context) -> Result<bool, CliError> {
    let cfg = &ctx.config;
    let pc = &cfg.probe;
    let (domain, grid) = build_grid(cfg)?;
    let field = cfg.field()?;
    let payoff = cfg.payoff()?;
    let v = solve_value(&grid, field.as_ref(), payoff.as_ref())?;
    let eps = grid.epsilon();
    let center = pc.center.clone().unwrap_or_else(|| domain.center.clone());
    let min_extent = domain.extents().into_iter().fold(f64::INFINITY, f64::min);
    let radius = pc.radius.unwrap_or(0.5 * min_extent);
    let t_top = pc.t_top.unwrap_or(grid.horizon());
    let cylinder = || CylinderSpec::with_height(center.clone(), radius, t_top, pc.height.unwrap_or(radius * radius));
    let (result, passed, verdict_text) = match pc.kind {
        ProbeKind::Lipschitz => {
            let r = spatial_lipschitz_probe(&v, &cylinder()?, pc.min_separation.unwrap_or(eps))?;
            let ok = r.max_quotient.is_finite();
            let text = format!("max quotient {}", num(r.max_quotient));
            (ProbeResult::Regularity(r.into()), ok, text)
        }
        ProbeKind::Time => {
            let r = time_holder_probe(&v, &cylinder()?, pc.min_gap.unwrap_or(eps * eps))?;
            let ok = r.max_quotient.is_finite();
            let text = format!("max quotient {}", num(r.max_quotient));
            (ProbeResult::Regularity(r.into()), ok, text)
        }
        ProbeKind::Holder => {
            let radii =
                if pc.radii.is_empty() { (0..4).map(|k| radius / 2f64.powi(k)).collect() } else { pc.radii.clone() };
            let r = holder_fit(&v, &center, t_top, &radii)?;
            let ok = matches!((r.exponent, r.r_squared), (Some(d), Some(r2)) if d > 0.0 && d <= 1.0 && r2 >= pc.min_r_squared);
            let text = match (r.exponent, r.r_squared) {
                (Some(d), Some(r2)) => format!("exponent {} r^2 {}", num(d), num(r2)),
                _ => "exponent undefined".to_string(),
            };
            (ProbeResult::Regularity(r.into()), ok, text)
        }
        ProbeKind::Harnack => {
            let q = harnack_quotient(&v, &center, radius, t_top)?;
            let ok = q.is_finite();
            (
                ProbeResult::Harnack { quotient: q, center: center.clone(), radius, t0: t_top },
                ok,
                format!("quotient {}", num(q)),
            )
        }
        ProbeKind::Local => {
            // the bound compares values of a nonnegative function
            if v.values().iter().any(|&u| u < 0.0) {
                return Err(CliError::Config("probe local: value function takes negative values".into()));
            }
            let inf_alpha = probabilities_from_p(field.p_min(), grid.dim()).map(|p| p.alpha).unwrap_or(0.0);
            let pairs = sample_local_pairs(&v, pc.a, pc.count, ctx.seed)?;
            let rep = local_bound_check(&v, &pairs, pc.a, inf_alpha);
            let ok = rep.passed();
            let text = format!("{} checked, {} violations", rep.checked, rep.violations);
            (ProbeResult::Local { report: rep, a: pc.a, inf_alpha, sampled: pairs.len() }, ok, text)
        }
    };
    say!(ctx, "probe {}: {verdict_text} {}", pc.kind.label(), verdict(passed));
    let report = ProbeReport {
        command: "probe",
        seed: ctx.seed,
        config: cfg,
        grid: GridSummary::of(&grid),
        kind: pc.kind,
        result,
        verdict: verdict_text,
        passed,
    };
    ctx.out.json(&format!("probe-{}.json", pc.kind.label()), &report)?;
    Ok(passed)
}
