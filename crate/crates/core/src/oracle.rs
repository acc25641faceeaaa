//! Independent references for the scaling limit: the exact quadratic
//! solution of `(n+p)u_t = Δu + (p−2)Δ∞ᴺu`, an explicit finite-difference
//! solver for the same equation with varying `p(x,t)`, and ε → 0
//! convergence studies of the DPP values against either.
//!
//! Everything here works in `f64`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::dpp::{solve_value, ValueFunction};
use crate::error::{Error, Result};
use crate::fields::PExponentField;
use crate::grid::{make_grid, DomainSpec};
use crate::payoff::Payoff;
use crate::table::{Interpolation, RegularTable};

/// `|x|² + 2(n+p−2)/(n+p)·t`.
pub fn exact_quadratic(n: usize, p: f64, x: &[f64], t: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::InvalidParameter(format!("exact quadratic needs p > 2, got {p}")));
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    Ok(x.iter().map(|v| v * v).sum::<f64>() + quadratic_time_coefficient(n, p) * t)
}

pub fn quadratic_time_coefficient(n: usize, p: f64) -> f64 {
    let n = n as f64;
    2.0 * (n + p - 2.0) / (n + p)
}

/// Scheme parameters. `dt = None` picks the default CFL step; `sigma = None`
/// uses `10⁻⁸` times the sup of the initial data (at least `10⁻⁸`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdParams {
    pub h: f64,
    pub dt: Option<f64>,
    pub sigma: Option<f64>,
    pub horizon: f64,
    /// Times at which the solution is kept; `horizon` is always kept.
    pub snapshots: Vec<f64>,
}

impl FdParams {
    pub fn new(h: f64, horizon: f64) -> Self {
        Self { h, dt: None, sigma: None, horizon, snapshots: Vec::new() }
    }
}

/// Largest explicit step accepted, `h²(n+p_min)/(2n + 2(p_max−2) + 2)`.
pub fn cfl_bound(n: usize, h: f64, p_min: f64, p_max: f64) -> f64 {
    let n = n as f64;
    h * h * (n + p_min) / (2.0 * n + 2.0 * (p_max - 2.0) + 2.0)
}

/// Default step: a fifth of [`cfl_bound`].
pub fn default_dt(n: usize, h: f64, p_min: f64, p_max: f64) -> f64 {
    0.2 * cfl_bound(n, h, p_min, p_max)
}

/// Finite-difference solution kept at a list of snapshot times.
#[derive(Debug, Clone)]
pub struct PDESolution {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub sigma: f64,
    pub steps: usize,
    origin: Vec<f64>,
    shape: Vec<usize>,
    unknown: Vec<bool>,
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

impl PDESolution {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn node_count(&self) -> usize {
        self.unknown.len()
    }

    pub fn unknown_mask(&self) -> &[bool] {
        &self.unknown
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut rest = node;
        let mut x = vec![0.0; self.n];
        for i in (0..self.n).rev() {
            x[i] = self.origin[i] + (rest % self.shape[i]) as f64 * self.h;
            rest /= self.shape[i];
        }
        x
    }

    fn table(&self, k: usize) -> RegularTable<f64> {
        RegularTable::new(
            self.origin.clone(),
            vec![self.h; self.n],
            self.shape.clone(),
            self.slices[k].clone(),
            Interpolation::Linear,
        )
        .expect("solution slices are finite and shaped")
    }

    /// Multilinear in space, linear in time between snapshots; `None`
    /// outside the kept time range.
    pub fn eval(&self, x: &[f64], t: f64) -> Option<f64> {
        let tol = 1e-12 * (1.0 + t.abs());
        let last = *self.times.last()?;
        if t < self.times[0] - tol || t > last + tol {
            return None;
        }
        let k = self.times.partition_point(|&s| s < t - tol);
        let k = k.min(self.times.len() - 1);
        if (self.times[k] - t).abs() <= tol || k == 0 {
            return Some(self.table(k).eval(x));
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some((1.0 - w) * self.table(k - 1).eval(x) + w * self.table(k).eval(x))
    }

    /// Batch evaluation at one snapshot index.
    pub fn evaluator(&self, k: usize) -> impl Fn(&[f64]) -> f64 {
        let t = self.table(k);
        move |x| t.eval(x)
    }
}

/// Explicit finite differences for `u_t = [Δu + (p−2)Δ∞ᴺu]/(n+p)` on a
/// lattice anchored at the domain center, Dirichlet data from `data` on the
/// nodes outside Ω and initial data `data(·, 0)`.
pub fn fd_solve(
    domain: &DomainSpec<f64>,
    field: &dyn PExponentField<f64>,
    data: &dyn Payoff<f64>,
    params: &FdParams,
) -> Result<PDESolution> {
    let p_max = match field.p_max() {
        Some(v) => v,
        None => sampled_p_max(domain, field, params)?,
    };
    solve_inner(domain, &|x, t| field.p(x, t), field.p_min(), p_max, data, params)
}

/// The `p ≡ 2` limit, `(n+2)u_t = Δu`; available only to this solver.
pub fn fd_solve_heat(domain: &DomainSpec<f64>, data: &dyn Payoff<f64>, params: &FdParams) -> Result<PDESolution> {
    solve_inner(domain, &|_, _| 2.0, 2.0, 2.0, data, params)
}

fn sampled_p_max(domain: &DomainSpec<f64>, field: &dyn PExponentField<f64>, params: &FdParams) -> Result<f64> {
    let lat = Lattice::new(domain, params.h)?;
    let mut m = f64::NEG_INFINITY;
    for k in 0..=8 {
        let t = params.horizon * k as f64 / 8.0;
        for node in 0..lat.len {
            m = m.max(field.p(&lat.coords(node), t));
        }
    }
    Ok(m)
}

struct Lattice {
    n: usize,
    h: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    fn new(domain: &DomainSpec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter("h_fd must be positive".into()));
        }
        let n = domain.dim();
        let ext = domain.extents();
        let half: Vec<usize> = ext.iter().map(|w| (w / h - 1e-9).ceil().max(1.0) as usize).collect();
        let shape: Vec<usize> = half.iter().map(|k| 2 * k + 1).collect();
        let origin: Vec<f64> = (0..n).map(|i| domain.center[i] - half[i] as f64 * h).collect();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let len = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).ok_or(Error::GridTooLarge(usize::MAX))?;
        if len > 50_000_000 {
            return Err(Error::GridTooLarge(len));
        }
        Ok(Self { n, h, origin, shape, strides, len })
    }

    fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.origin[i] + ((node / self.strides[i]) % self.shape[i]) as f64 * self.h).collect()
    }
}

fn solve_inner(
    domain: &DomainSpec<f64>,
    p: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    p_min: f64,
    p_max: f64,
    data: &dyn Payoff<f64>,
    params: &FdParams,
) -> Result<PDESolution> {
    if !(params.horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let lat = Lattice::new(domain, params.h)?;
    let n = lat.n;
    let h = lat.h;
    let bound = cfl_bound(n, h, p_min, p_max);
    let dt_max = params.dt.unwrap_or_else(|| default_dt(n, h, p_min, p_max));
    if !(dt_max > 0.0) || dt_max > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: dt_max, bound });
    }
    let coords: Vec<Vec<f64>> = (0..lat.len).map(|i| lat.coords(i)).collect();
    let unknown: Vec<bool> = coords.iter().map(|x| domain.inner_distance(x) > 1e-9 * h).collect();
    let active: Vec<usize> = (0..lat.len).filter(|&i| unknown[i]).collect();
    let fixed: Vec<usize> = (0..lat.len).filter(|&i| !unknown[i]).collect();

    let mut u: Vec<f64> = coords.iter().map(|x| data.eval(x, 0.0)).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinitePayoff { x: Vec::new(), t: 0.0 });
    }
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let sigma = params.sigma.unwrap_or(1e-8 * scale);

    let mut marks: Vec<f64> = params.snapshots.iter().copied().filter(|&t| t > 0.0 && t < params.horizon).collect();
    marks.push(params.horizon);
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));

    let mut times = Vec::new();
    let mut slices = Vec::new();
    if params.snapshots.contains(&0.0) {
        times.push(0.0);
        slices.push(u.clone());
    }

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut dt_used = 0.0f64;
    let mut next = vec![0.0; lat.len];
    for &mark in &marks {
        let sub = ((mark - t) / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = (mark - t) / sub as f64;
        dt_used = dt_used.max(dt);
        for s in 0..sub {
            let t_new = if s + 1 == sub { mark } else { t + dt };
            let prev = &u;
            let updates: Vec<f64> =
                active.par_iter().map(|&i| prev[i] + dt * rate(prev, i, &lat, p(&coords[i], t), sigma)).collect();
            next.copy_from_slice(prev);
            for (&i, v) in active.iter().zip(updates) {
                next[i] = v;
            }
            for &i in &fixed {
                next[i] = data.eval(&coords[i], t_new);
            }
            std::mem::swap(&mut u, &mut next);
            t = t_new;
            steps += 1;
            if u.iter().any(|v| !v.is_finite() || v.abs() > 1e8 * scale) {
                return Err(Error::Blowup { step: steps });
            }
        }
        times.push(mark);
        slices.push(u.clone());
    }
    Ok(PDESolution { n, h, dt: dt_used, sigma, steps, origin: lat.origin, shape: lat.shape, unknown, times, slices })
}

/// `[Δu + (p−2)Δ∞ᴺu]/(n+p)` by centered differences at node `i`.
fn rate(u: &[f64], i: usize, lat: &Lattice, p: f64, sigma: f64) -> f64 {
    let n = lat.n;
    let h = lat.h;
    let c = u[i];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    for a in 0..n {
        let sa = lat.strides[a];
        grad[a] = (u[i + sa] - u[i - sa]) / (2.0 * h);
        hess[a * n + a] = (u[i + sa] - 2.0 * c + u[i - sa]) / (h * h);
        for b in (a + 1)..n {
            let sb = lat.strides[b];
            let m = (u[i + sa + sb] - u[i + sa - sb] - u[i - sa + sb] + u[i - sa - sb]) / (4.0 * h * h);
            hess[a * n + b] = m;
            hess[b * n + a] = m;
        }
    }
    let lap: f64 = (0..n).map(|a| hess[a * n + a]).sum();
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let inf_lap = if g2.sqrt() >= sigma {
        let mut q = 0.0;
        for a in 0..n {
            for b in 0..n {
                q += grad[a] * hess[a * n + b] * grad[b];
            }
        }
        q / g2
    } else if n == 1 {
        hess[0]
    } else {
        let ev = DMatrix::from_row_slice(n, n, &hess).symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
        0.5 * (lo + hi)
    };
    (lap + (p - 2.0) * inf_lap) / (n as f64 + p)
}

/// `sup |u_h − u_{2h}|` over the cylinder nodes of the `h` solution at its
/// snapshot times inside `[cyl.t_from, cyl.t_to]`.
pub fn fd_self_error(
    domain: &DomainSpec<f64>,
    field: &dyn PExponentField<f64>,
    data: &dyn Payoff<f64>,
    params: &FdParams,
    cyl: &InteriorCylinder,
) -> Result<f64> {
    let fine = fd_solve(domain, field, data, params)?;
    let mut coarse_params = params.clone();
    coarse_params.h = 2.0 * params.h;
    coarse_params.dt = params.dt.map(|d| 4.0 * d);
    let coarse = fd_solve(domain, field, data, &coarse_params)?;
    let mut worst: f64 = 0.0;
    for (k, &t) in fine.times().iter().enumerate() {
        if !cyl.contains_time(t) {
            continue;
        }
        let Some(kc) = coarse.times().iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs())) else {
            continue;
        };
        let ce = coarse.evaluator(kc);
        for node in 0..fine.node_count() {
            let x = fine.coords(node);
            if cyl.contains_point(&x) {
                worst = worst.max((fine.slice(k)[node] - ce(&x)).abs());
            }
        }
    }
    Ok(worst)
}

/// `{|x − center| ≤ radius} × [t_from, t_to]`, well inside Ω_T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorCylinder {
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_from: f64,
    pub t_to: f64,
}

impl InteriorCylinder {
    pub fn contains_point(&self, x: &[f64]) -> bool {
        crate::num::distance(x, &self.center) <= self.radius * (1.0 + 1e-12)
    }

    pub fn contains_time(&self, t: f64) -> bool {
        let tol = 1e-12 * (1.0 + t.abs());
        t >= self.t_from - tol && t <= self.t_to + tol
    }
}

/// How the lattice spacing follows ε in a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpacingRule {
    /// `h = c·ε²`. The open-ball stencil misses the rim by up to `h`, which
    /// costs `O(h/ε)` per unit time; this rule makes that vanish as ε → 0.
    EpsSquared(f64),
    /// `h = ratio·ε`.
    Ratio(f64),
}

impl SpacingRule {
    pub fn spacing(self, epsilon: f64) -> f64 {
        match self {
            SpacingRule::EpsSquared(c) => c * epsilon * epsilon,
            SpacingRule::Ratio(r) => r * epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub h: f64,
    pub error: f64,
    /// `error(previous row) / error(this row)`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Oscillation of the reference over the cylinder (finest grid).
    pub reference_oscillation: f64,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error <= w[0].error)
    }

    pub fn min_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,h,error,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.6e}")).unwrap_or_default();
            s.push_str(&format!("{:.6e},{:.6e},{:.6e},{}\n", r.epsilon, r.h, r.error, ratio));
        }
        s
    }
}

/// Sup error of `v` against `reference` over the cylinder, plus the range
/// of the reference there. Only lattice nodes on marching slices count.
pub fn cylinder_error(
    v: &ValueFunction<f64>,
    reference: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    cyl: &InteriorCylinder,
) -> Result<(f64, f64, f64)> {
    let g = v.grid();
    let nodes: Vec<usize> = g.interior_nodes().filter(|&i| cyl.contains_point(g.coords(i))).collect();
    let mut err: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut seen = false;
    for s in g.first_marching_slice()..g.slice_count() {
        let t = g.slice_time(s);
        if !cyl.contains_time(t) {
            continue;
        }
        for &i in &nodes {
            let r = reference(g.coords(i), t);
            if !r.is_finite() {
                return Err(Error::Precondition(format!("reference undefined at t = {t}")));
            }
            err = err.max((v.get(i, s) - r).abs());
            lo = lo.min(r);
            hi = hi.max(r);
            seen = true;
        }
    }
    if !seen {
        return Err(Error::EmptySample("no lattice node in the comparison cylinder".into()));
    }
    Ok((err, lo, hi))
}

/// One DPP solve per ε (strictly decreasing), compared with `reference`
/// over `cyl`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    domain: &DomainSpec<f64>,
    field: &dyn PExponentField<f64>,
    payoff: &dyn Payoff<f64>,
    reference: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    horizon: f64,
    cyl: &InteriorCylinder,
    spacing: SpacingRule,
    epsilons: &[f64],
) -> Result<ConvergenceTable> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("need at least one epsilon".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("epsilons must be strictly decreasing".into()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut osc = 0.0;
    for &eps in epsilons {
        let h = spacing.spacing(eps);
        let grid = Arc::new(make_grid(domain.clone(), h, eps, horizon)?);
        let v = solve_value(&grid, field, payoff)?;
        let (error, lo, hi) = cylinder_error(&v, reference, cyl)?;
        osc = hi - lo;
        let ratio = rows.last().map(|r| r.error / error);
        rows.push(ConvergenceRow { epsilon: eps, h, error, ratio });
    }
    Ok(ConvergenceTable { rows, reference_oscillation: osc })
}
