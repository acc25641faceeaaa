//! `verify-barriers`, `converge` and `bounds`.

use serde::Serialize;
use tugwar::barriers::{
    discriminant, verify_holder_key_inequality, verify_holder_time_term, verify_psi_cases, verify_psi_derivatives,
    verify_psi_subsolution, verify_time_barrier, verify_time_barrier_lattice, BarrierReport, HolderComparison,
    PsiBarrier, TimeBarrier,
};
use tugwar::bounds::{empirical_tail, TailCheck};
use tugwar::fields::{AffineP, PExponentField};
use tugwar::grid::{make_grid, DomainSpec};
use tugwar::oracle::{
    convergence_study, exact_quadratic, fd_self_error, fd_solve, quadratic_time_coefficient, ConvergenceTable,
    FdParams, InteriorCylinder, SpacingRule,
};

use super::verdict;
use crate::config::{BarrierConfig, Config, ConvergeConfig, PayoffConfig, ReferenceKind, SpacingConfig};
use crate::output::num;
use crate::{BarrierCheck, CliError, Context};

fn derived_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Serialize)]
struct DiscriminantRow {
    n: u32,
    value: i128,
    negative: bool,
}

#[derive(Serialize)]
struct BarrierSuite<'a> {
    command: &'static str,
    seed: u64,
    barriers: &'a BarrierConfig,
    checks: Vec<String>,
    reports: Vec<BarrierReport>,
    discriminants: Vec<DiscriminantRow>,
    failed: Vec<String>,
    passed: bool,
}

fn label(c: BarrierCheck) -> &'static str {
    match c {
        BarrierCheck::PsiCases => "psi-cases",
        BarrierCheck::PsiSubsolution => "psi-subsolution",
        BarrierCheck::PsiDerivatives => "psi-derivatives",
        BarrierCheck::Discriminant => "discriminant",
        BarrierCheck::HolderKey => "holder-key",
        BarrierCheck::HolderTime => "holder-time",
        BarrierCheck::TimeContinuum => "time-continuum",
        BarrierCheck::TimeLattice => "time-lattice",
    }
}

/// Grid and field for the time-barrier checks: the configured ones when
/// present, otherwise a fixed varying-p scenario.
fn time_barrier_setting(cfg: &Config) -> Result<(tugwar::Grid, Box<dyn PExponentField<f64>>), CliError> {
    if cfg.domain.is_some() && cfg.grid.is_some() && cfg.p.is_some() {
        let g = cfg.grid()?;
        return Ok((make_grid(cfg.domain()?, g.h, g.epsilon, g.horizon)?, cfg.field()?));
    }
    let grid = make_grid(DomainSpec::cube(2, 1.0)?, 0.05, 0.2, 0.2)?;
    let field = AffineP::new(vec![1.0, -0.5], 0.3, 3.5, 2.2, Some(6.0))?;
    Ok((grid, Box::new(field)))
}

pub fn verify_barriers(ctx: &Context, checks: &[BarrierCheck]) -> Result<bool, CliError> {
    let bc = &ctx.config.barriers;
    let eps = bc.epsilon;
    let mut reports = Vec::new();
    let mut discriminants = Vec::new();
    let mut k = 0usize;
    let mut next_seed = || {
        k += 1;
        derived_seed(ctx.seed, k)
    };
    let wants = |c: BarrierCheck| checks.contains(&c);

    if wants(BarrierCheck::PsiCases) || wants(BarrierCheck::PsiSubsolution) || wants(BarrierCheck::PsiDerivatives) {
        for &n in &bc.dims {
            for &m in &bc.r_multiples {
                let b = PsiBarrier::new(n, m * eps, bc.outer_radius, bc.inf_value, eps)?;
                if wants(BarrierCheck::PsiCases) {
                    reports.push(verify_psi_cases(&b, bc.samples, next_seed())?);
                }
                if wants(BarrierCheck::PsiSubsolution) {
                    reports.push(verify_psi_subsolution(&b, bc.samples, next_seed()));
                }
                if wants(BarrierCheck::PsiDerivatives) {
                    reports.push(verify_psi_derivatives(&b, bc.samples, next_seed(), bc.derivative_tolerance));
                }
            }
        }
    }
    if wants(BarrierCheck::Discriminant) {
        for n in 1..=10u32 {
            let value = discriminant(n);
            discriminants.push(DiscriminantRow { n, value, negative: value < 0 });
        }
    }
    if wants(BarrierCheck::HolderKey) || wants(BarrierCheck::HolderTime) {
        let rings = bc.holder_rings.unwrap_or((100.0 * bc.holder_c / bc.holder_delta).ceil() as u64 + 1);
        let hc = HolderComparison::new(bc.holder_c, rings, bc.holder_delta, eps)?;
        if wants(BarrierCheck::HolderKey) {
            for &n in &bc.dims {
                reports.push(verify_holder_key_inequality(&hc, n, bc.samples, next_seed())?);
            }
        }
        if wants(BarrierCheck::HolderTime) {
            reports.push(verify_holder_time_term(&hc, bc.samples, next_seed()));
        }
    }
    if wants(BarrierCheck::TimeContinuum) || wants(BarrierCheck::TimeLattice) {
        let (grid, field) = time_barrier_setting(&ctx.config)?;
        for upper in [true, false] {
            let tb = TimeBarrier::new(bc.time_a, bc.time_r, bc.time_offset, upper)?;
            if wants(BarrierCheck::TimeContinuum) {
                reports.push(verify_time_barrier(&tb, field.as_ref(), &grid, bc.samples, next_seed())?);
            }
            if wants(BarrierCheck::TimeLattice) {
                reports.push(verify_time_barrier_lattice(&tb, field.as_ref(), &grid)?);
            }
        }
    }

    let mut failed: Vec<String> = Vec::new();
    for r in &reports {
        let ok = r.passed();
        let params: Vec<String> = r.parameters.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
        say!(
            ctx,
            "{:<28} n={} {:<40} samples {:>7} violations {:>7} worst {:>12} {}",
            r.check,
            r.n,
            params.join(" "),
            r.samples,
            r.violations,
            num(r.worst_margin),
            verdict(ok)
        );
        if !ok {
            for g in &r.regimes {
                say!(
                    ctx,
                    "  regime {:<22} samples {:>7} violations {:>7} worst {}",
                    g.label,
                    g.samples,
                    g.violations,
                    num(g.worst_margin)
                );
            }
            failed.push(format!("{} n={}", r.check, r.n));
        }
    }
    for d in &discriminants {
        if !d.negative {
            failed.push(format!("discriminant n={}", d.n));
        }
    }
    if !discriminants.is_empty() {
        let ok = discriminants.iter().all(|d| d.negative);
        say!(ctx, "{:<28} n=1..10 negative {}", "discriminant", verdict(ok));
    }
    let passed = failed.is_empty();
    let suite = BarrierSuite {
        command: "verify-barriers",
        seed: ctx.seed,
        barriers: bc,
        checks: checks.iter().map(|&c| label(c).to_string()).collect(),
        reports,
        discriminants,
        failed,
        passed,
    };
    ctx.out.json("barriers.json", &suite)?;
    Ok(passed)
}

#[derive(Serialize)]
struct Verdict {
    check: String,
    value: Option<f64>,
    threshold: f64,
    passed: bool,
}

#[derive(Serialize)]
struct ConvergeReport<'a> {
    command: &'static str,
    seed: u64,
    config: &'a Config,
    cylinder: InteriorCylinder,
    spacing: SpacingRule,
    reference: ReferenceKind,
    fd_self_error: Option<f64>,
    table: ConvergenceTable,
    verdicts: Vec<Verdict>,
    passed: bool,
}

pub fn converge(ctx: &Context) -> Result<bool, CliError> {
    let cfg = &ctx.config;
    let cc = &cfg.converge;
    let domain = cfg.domain()?;
    let horizon = cfg.grid()?.horizon;
    let field = cfg.field()?;
    let payoff = cfg.payoff()?;
    let cyl = match &cc.cylinder {
        Some(c) => InteriorCylinder { center: c.center.clone(), radius: c.radius, t_from: c.t_from, t_to: c.t_to },
        None => {
            let min_extent = domain.extents().into_iter().fold(f64::INFINITY, f64::min);
            InteriorCylinder {
                center: domain.center.clone(),
                radius: 0.5 * min_extent,
                t_from: horizon / 2.0,
                t_to: horizon,
            }
        }
    };
    let spacing = match cc.spacing {
        SpacingConfig::EpsSquared { c } => SpacingRule::EpsSquared(c),
        SpacingConfig::Ratio { ratio } => SpacingRule::Ratio(ratio),
    };
    let n = domain.dim();
    let (table, self_error) = match cc.reference {
        ReferenceKind::Exact => {
            let p =
                cfg.constant_p().ok_or_else(|| CliError::Config("the exact reference needs a constant p".into()))?;
            let exact_coeff = quadratic_time_coefficient(n, p);
            let matches = match &cfg.payoff {
                Some(PayoffConfig::Quadratic { time_coeff: None }) => true,
                Some(PayoffConfig::Quadratic { time_coeff: Some(c) }) => (c - exact_coeff).abs() <= 1e-15 * exact_coeff,
                _ => false,
            };
            if !matches {
                return Err(CliError::Config(
                    "the exact reference needs payoff.kind = \"quadratic\" with the exact time coefficient".into(),
                ));
            }
            let reference = |x: &[f64], t: f64| exact_quadratic(n, p, x, t).unwrap_or(f64::NAN);
            let table = convergence_study(
                &domain,
                field.as_ref(),
                payoff.as_ref(),
                &reference,
                horizon,
                &cyl,
                spacing,
                &cc.epsilons,
            )?;
            (table, None)
        }
        ReferenceKind::Fd => {
            let mut params = FdParams::new(cc.fd_h, horizon);
            let mut snaps = Vec::new();
            for &eps in &cc.epsilons {
                let g = make_grid(domain.clone(), spacing.spacing(eps), eps, horizon)?;
                snaps.extend(g.slice_times().into_iter().filter(|&t| t >= 0.0 && cyl.contains_time(t)));
            }
            snaps.sort_by(f64::total_cmp);
            snaps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            params.snapshots = snaps;
            let sol = fd_solve(&domain, field.as_ref(), payoff.as_ref(), &params)?;
            let self_error = fd_self_error(&domain, field.as_ref(), payoff.as_ref(), &params, &cyl)?;
            let reference = |x: &[f64], t: f64| sol.eval(x, t).unwrap_or(f64::NAN);
            let table = convergence_study(
                &domain,
                field.as_ref(),
                payoff.as_ref(),
                &reference,
                horizon,
                &cyl,
                spacing,
                &cc.epsilons,
            )?;
            (table, Some(self_error))
        }
    };
    let verdicts = convergence_verdicts(&table, self_error, cc);
    let passed = verdicts.iter().all(|v| v.passed);
    say!(ctx, "{}", table.to_csv().trim_end());
    for v in &verdicts {
        match v.value {
            Some(x) => {
                say!(ctx, "converge: {} {} (threshold {}) {}", v.check, num(x), num(v.threshold), verdict(v.passed))
            }
            None => say!(ctx, "converge: {} {}", v.check, verdict(v.passed)),
        }
    }
    ctx.out.write("converge.csv", table.to_csv().as_bytes())?;
    let report = ConvergeReport {
        command: "converge",
        seed: ctx.seed,
        config: cfg,
        cylinder: cyl,
        spacing,
        reference: cc.reference,
        fd_self_error: self_error,
        table,
        verdicts,
        passed,
    };
    ctx.out.json("converge.json", &report)?;
    Ok(passed)
}

/// Exact references are judged on monotonicity, the error ratio and the
/// final error relative to the reference oscillation; finite-difference
/// references on monotonicity and agreement within `max(2ε, 5·self-error)`.
fn convergence_verdicts(table: &ConvergenceTable, self_error: Option<f64>, cc: &ConvergeConfig) -> Vec<Verdict> {
    let mut verdicts = Vec::new();
    if table.rows.len() > 1 {
        verdicts.push(Verdict {
            check: "strictly-decreasing".into(),
            value: None,
            threshold: 0.0,
            passed: table.strictly_decreasing(),
        });
    }
    let Some(last) = table.rows.last() else { return verdicts };
    match self_error {
        None => {
            if let Some(r) = table.min_ratio() {
                verdicts.push(Verdict {
                    check: "min-ratio".into(),
                    value: Some(r),
                    threshold: cc.min_ratio,
                    passed: r >= cc.min_ratio,
                });
            }
            let bound = cc.abs_fraction * table.reference_oscillation;
            verdicts.push(Verdict {
                check: "final-error".into(),
                value: Some(last.error),
                threshold: bound,
                passed: last.error <= bound,
            });
        }
        Some(se) => {
            let bound = (2.0 * last.epsilon).max(5.0 * se);
            verdicts.push(Verdict {
                check: "fd-agreement".into(),
                value: Some(last.error),
                threshold: bound,
                passed: last.error <= bound,
            });
        }
    }
    verdicts
}

#[derive(Serialize)]
struct BoundsReport {
    command: &'static str,
    seed: u64,
    b: f64,
    runs: usize,
    checks: Vec<TailCheck>,
    passed: bool,
}

pub fn bounds(ctx: &Context) -> Result<bool, CliError> {
    let bc = &ctx.config.bounds;
    let mut checks = Vec::new();
    let mut k = 0;
    for maximal in [false, true] {
        for &n in &bc.ns {
            for &m in &bc.multiples {
                let lambda = m * bc.b * (n as f64).sqrt();
                k += 1;
                checks.push(empirical_tail(n, bc.b, lambda, bc.runs, derived_seed(ctx.seed, k), maximal)?);
            }
        }
    }
    say!(ctx, "{:>8} {:>6} {:>12} {:>12} {:>12} verdict", "variant", "N", "lambda", "bound", "frequency");
    for c in &checks {
        say!(
            ctx,
            "{:>8} {:>6} {:>12.6} {:>12.6} {:>12.6} {}",
            if c.maximal { "maximal" } else { "plain" },
            c.n,
            c.lambda,
            c.bound,
            c.frequency,
            verdict(c.passed())
        );
    }
    let passed = checks.iter().all(TailCheck::passed);
    let mut csv = String::from("variant,n,lambda,bound,frequency,std_error,passed\n");
    for c in &checks {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            if c.maximal { "maximal" } else { "plain" },
            c.n,
            num(c.lambda),
            num(c.bound),
            num(c.frequency),
            num(c.std_error),
            c.passed()
        ));
    }
    ctx.out.write("bounds.csv", csv.as_bytes())?;
    let report = BoundsReport { command: "bounds", seed: ctx.seed, b: bc.b, runs: bc.runs, checks, passed };
    ctx.out.json("bounds.json", &report)?;
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tugwar::oracle::ConvergenceRow;

    fn table(errors: &[f64]) -> ConvergenceTable {
        let mut rows: Vec<ConvergenceRow> = Vec::new();
        for (k, &e) in errors.iter().enumerate() {
            let ratio = rows.last().map(|r| r.error / e);
            rows.push(ConvergenceRow { epsilon: 0.2 / 2f64.powi(k as i32), h: 0.01, error: e, ratio });
        }
        ConvergenceTable { rows, reference_oscillation: 1.0 }
    }

    #[test]
    fn verdict_rules() {
        let cc = ConvergeConfig::default();
        let all = |t: &ConvergenceTable, se| convergence_verdicts(t, se, &cc).iter().all(|v| v.passed);
        assert!(all(&table(&[0.2, 0.1, 0.04]), None));
        // a non-decreasing row fails even with the other rules met
        let rising = convergence_verdicts(&table(&[0.2, 0.04, 0.04]), None, &cc);
        assert!(!rising.iter().find(|v| v.check == "strictly-decreasing").unwrap().passed);
        assert!(!all(&table(&[0.2, 0.15, 0.1]), None));
        assert!(!all(&table(&[0.2, 0.1, 0.06]), None));
        assert!(all(&table(&[0.3]), Some(0.01)));
        assert!(!all(&table(&[0.5]), Some(0.01)));
    }
}
