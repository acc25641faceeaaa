//! Read-only measurements on value functions: oscillations, Lipschitz and
//! time-Hölder quotients, Hölder exponent fits, Harnack quotients and the
//! local lower bound along pulled paths.

use rand::Rng;
use serde::Serialize;

use crate::dpp::ValueFunction;
use crate::error::{Error, Result};
use crate::num::{distance, Real};
use crate::rng::substream;

/// Pair sets larger than this are subsampled.
pub const MAX_PAIRS: usize = 100_000;

/// Fixed seed for pair subsampling.
pub const PROBE_SEED: u64 = 0x7567_7761_7270;

/// Space-time window `B_r(x₀) × [t₀ − height, t₀]`, closed in both
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSpec<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub t_top: T,
    pub height: T,
}

impl<T: Real> CylinderSpec<T> {
    /// Cylinder of height `r²`.
    pub fn new(center: Vec<T>, radius: T, t_top: T) -> Result<Self> {
        Self::with_height(center, radius, t_top, radius * radius)
    }

    pub fn with_height(center: Vec<T>, radius: T, t_top: T, height: T) -> Result<Self> {
        if !(radius > T::zero()) || !(height >= T::zero()) {
            return Err(Error::InvalidParameter("cylinder radius must be positive and height nonnegative".into()));
        }
        Ok(Self { center, radius, t_top, height })
    }

    /// Nodes of the grid in the closed ball.
    pub fn nodes(&self, v: &ValueFunction<T>) -> Vec<usize> {
        let g = v.grid();
        let r = self.radius * T::lit(1.0 + 1e-12);
        (0..g.node_count()).filter(|&i| distance(g.coords(i), &self.center) <= r).collect()
    }

    /// Slices whose times lie in `[t_top − height, t_top]`.
    pub fn slices(&self, v: &ValueFunction<T>) -> Vec<usize> {
        let g = v.grid();
        let tol = g.epsilon() * g.epsilon() * T::lit(1e-9);
        let lo = self.t_top - self.height - tol;
        let hi = self.t_top + tol;
        (0..g.slice_count()).filter(|&s| (lo..=hi).contains(&g.slice_time(s))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientSample<T> {
    /// `(node, slice)` of the two points.
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub separation: T,
    pub quotient: T,
}

/// Sampled quotients, their maximum and a power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport<T> {
    pub probe: &'static str,
    pub samples: Vec<QuotientSample<T>>,
    pub max_quotient: T,
    /// Fitted exponent; `None` when the fit is degenerate.
    pub exponent: Option<T>,
    pub r_squared: Option<T>,
    pub radius: T,
    pub epsilon: T,
    /// Oscillations per radius (Hölder fits only).
    pub oscillations: Vec<(T, T)>,
    pub exhaustive: bool,
    pub warnings: Vec<String>,
}

fn range_over<T: Real>(v: &ValueFunction<T>, nodes: &[usize], slices: &[usize]) -> Option<(T, T)> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &s in slices {
        let row = v.slice(s);
        for &i in nodes {
            lo = lo.min(row[i]);
            hi = hi.max(row[i]);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// `max − min` of `v` over the nodes and slices of the cylinder.
pub fn oscillation<T: Real>(v: &ValueFunction<T>, cyl: &CylinderSpec<T>) -> Result<T> {
    let (lo, hi) = range_over(v, &cyl.nodes(v), &cyl.slices(v))
        .ok_or_else(|| Error::EmptySample("cylinder contains no grid points".into()))?;
    Ok(hi - lo)
}

/// Ordinary least squares of `ys` on `xs`: slope and R².
pub fn least_squares<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T)> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().map(|v| v.as_f64()).sum::<f64>() / nf;
    let my = ys.iter().map(|v| v.as_f64()).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x.as_f64() - mx, y.as_f64() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((T::lit(slope), T::lit(r2)))
}

/// All pairs when `total` is small, else `MAX_PAIRS` accepted draws from a
/// fixed-seed stream.
fn pairs_from(
    total: usize,
    draw: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Option<(usize, usize)>,
    all: impl Fn() -> Vec<(usize, usize)>,
) -> (Vec<(usize, usize)>, bool) {
    if total <= MAX_PAIRS {
        return (all(), true);
    }
    let mut rng = substream(PROBE_SEED, 0);
    let mut out = Vec::with_capacity(MAX_PAIRS);
    let mut attempts = 0usize;
    while out.len() < MAX_PAIRS && attempts < 50 * MAX_PAIRS {
        attempts += 1;
        if let Some(p) = draw(&mut rng) {
            out.push(p);
        }
    }
    (out, false)
}

fn fit_samples<T: Real>(
    samples: &[QuotientSample<T>],
    numer: impl Fn(&QuotientSample<T>) -> T,
) -> (Option<T>, Option<T>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in samples {
        let d = numer(s);
        if d > T::zero() && s.separation > T::zero() {
            xs.push(s.separation.ln());
            ys.push(d.ln());
        }
    }
    match least_squares(&xs, &ys) {
        Some((slope, r2)) => (Some(slope), Some(r2)),
        None => (None, None),
    }
}

/// Same-slice quotients `|v(x,t) − v(y,t)|/|x − y|` over pairs in the
/// cylinder with `|x − y| ≥ min_separation ≥ ε`.
pub fn spatial_lipschitz_probe<T: Real>(
    v: &ValueFunction<T>,
    cyl: &CylinderSpec<T>,
    min_separation: T,
) -> Result<RegularityReport<T>> {
    let g = v.grid();
    let eps = g.epsilon();
    if min_separation < eps * T::lit(1.0 - 1e-12) {
        return Err(Error::Precondition("separations must be at least epsilon".into()));
    }
    let nodes = cyl.nodes(v);
    let slices = cyl.slices(v);
    let mut warnings = Vec::new();
    if !v.constant_p() {
        warnings.push("value function was not produced with a constant exponent".to_string());
    }
    let m = nodes.len();
    let sep = |i: usize, j: usize| distance(g.coords(i), g.coords(j));
    let mut node_pairs = Vec::new();
    if m * m.saturating_sub(1) / 2 * slices.len() <= MAX_PAIRS {
        for a in 0..m {
            for b in a + 1..m {
                if sep(nodes[a], nodes[b]) >= min_separation {
                    node_pairs.push((nodes[a], nodes[b]));
                }
            }
        }
    }
    let (pairs, exhaustive) = pairs_from(
        m * m.saturating_sub(1) / 2 * slices.len(),
        |rng| {
            let s = slices[rng.random_range(0..slices.len())];
            let (a, b) = (nodes[rng.random_range(0..m)], nodes[rng.random_range(0..m)]);
            (a != b && sep(a, b) >= min_separation).then_some((s * g.node_count() + a, b))
        },
        || {
            let mut all = Vec::with_capacity(node_pairs.len() * slices.len());
            for &s in &slices {
                all.extend(node_pairs.iter().map(|&(a, b)| (s * g.node_count() + a, b)));
            }
            all
        },
    );
    let samples: Vec<QuotientSample<T>> = pairs
        .into_iter()
        .map(|(code, j)| {
            let (s, i) = (code / g.node_count(), code % g.node_count());
            let d = sep(i, j);
            QuotientSample { a: (i, s), b: (j, s), separation: d, quotient: (v.get(i, s) - v.get(j, s)).abs() / d }
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptySample("no admissible pairs in the cylinder".into()));
    }
    let max_quotient = samples.iter().map(|s| s.quotient).fold(T::zero(), T::max);
    let (exponent, r_squared) = fit_samples(&samples, |s| s.quotient * s.separation);
    Ok(RegularityReport {
        probe: "spatial-lipschitz",
        samples,
        max_quotient,
        exponent,
        r_squared,
        radius: cyl.radius,
        epsilon: eps,
        oscillations: Vec::new(),
        exhaustive,
        warnings,
    })
}

/// Same-node quotients `|v(x,t₁) − v(x,t₀)|/|t₁ − t₀|^{1/2}` with gaps in
/// `[min_gap, height]`, `min_gap ≥ ε²`.
pub fn time_holder_probe<T: Real>(
    v: &ValueFunction<T>,
    cyl: &CylinderSpec<T>,
    min_gap: T,
) -> Result<RegularityReport<T>> {
    let g = v.grid();
    let eps = g.epsilon();
    let tol = eps * eps * T::lit(1e-9);
    if min_gap < eps * eps - tol {
        return Err(Error::Precondition("time gaps must be at least epsilon squared".into()));
    }
    let nodes = cyl.nodes(v);
    let slices = cyl.slices(v);
    let mut slice_pairs = Vec::new();
    for (a, &s0) in slices.iter().enumerate() {
        for &s1 in &slices[a + 1..] {
            let gap = g.slice_time(s1) - g.slice_time(s0);
            if gap >= min_gap - tol && gap <= cyl.height + tol {
                slice_pairs.push((s0, s1));
            }
        }
    }
    let total = slice_pairs.len() * nodes.len();
    let (pairs, exhaustive) = pairs_from(
        total,
        |rng| {
            let sp = slice_pairs[rng.random_range(0..slice_pairs.len())];
            Some((sp.0 * g.node_count() + nodes[rng.random_range(0..nodes.len())], sp.1))
        },
        || {
            let mut all = Vec::with_capacity(total);
            for &(s0, s1) in &slice_pairs {
                for &i in &nodes {
                    all.push((s0 * g.node_count() + i, s1));
                }
            }
            all
        },
    );
    let samples: Vec<QuotientSample<T>> = pairs
        .into_iter()
        .map(|(code, s1)| {
            let (s0, i) = (code / g.node_count(), code % g.node_count());
            let gap = g.slice_time(s1) - g.slice_time(s0);
            let dv = (v.get(i, s1) - v.get(i, s0)).abs();
            QuotientSample { a: (i, s0), b: (i, s1), separation: gap, quotient: dv / gap.sqrt() }
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptySample("no admissible time pairs in the cylinder".into()));
    }
    let max_quotient = samples.iter().map(|s| s.quotient).fold(T::zero(), T::max);
    let (exponent, r_squared) = fit_samples(&samples, |s| s.quotient * s.separation.sqrt());
    Ok(RegularityReport {
        probe: "time-holder",
        samples,
        max_quotient,
        exponent,
        r_squared,
        radius: cyl.radius,
        epsilon: eps,
        oscillations: Vec::new(),
        exhaustive,
        warnings: Vec::new(),
    })
}

/// Least-squares slope of `log osc(Q_r)` against `log r` over nested
/// cylinders `Q_r = B_r(center) × [t_top − r², t_top]`.
pub fn holder_fit<T: Real>(v: &ValueFunction<T>, center: &[T], t_top: T, radii: &[T]) -> Result<RegularityReport<T>> {
    if radii.len() < 3 {
        return Err(Error::InvalidParameter("holder_fit needs at least three radii".into()));
    }
    let eps = v.grid().epsilon();
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("radii must be strictly decreasing".into()));
    }
    let mut warnings = Vec::new();
    if radii.iter().any(|&r| r < T::lit(5.0) * eps * T::lit(1.0 - 1e-12)) {
        warnings.push("some radii are below 5 epsilon".to_string());
    }
    let mut oscillations = Vec::new();
    for &r in radii {
        let cyl = CylinderSpec::new(center.to_vec(), r, t_top)?;
        oscillations.push((r, oscillation(v, &cyl)?));
    }
    let positive: Vec<(T, T)> = oscillations.iter().copied().filter(|&(_, o)| o > T::zero()).collect();
    let (exponent, r_squared) = if positive.len() == oscillations.len() {
        let xs: Vec<T> = positive.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<T> = positive.iter().map(|p| p.1.ln()).collect();
        match least_squares(&xs, &ys) {
            Some((s, r2)) => (Some(s), Some(r2)),
            None => (None, None),
        }
    } else {
        if positive.is_empty() {
            warnings.push("oscillation vanishes on every window; exponent undefined".to_string());
        } else {
            warnings.push("oscillation vanishes on some windows; exponent undefined".to_string());
        }
        (None, None)
    };
    let max_quotient = oscillations.iter().map(|p| p.1).fold(T::zero(), T::max);
    Ok(RegularityReport {
        probe: "holder-fit",
        samples: Vec::new(),
        max_quotient,
        exponent,
        r_squared,
        radius: radii[0],
        epsilon: eps,
        oscillations,
        exhaustive: true,
        warnings,
    })
}

/// Waiting-time Harnack quotient `sup_{B_r} v(·, t₀ − r²) / inf_{B_r} v(·, t₀)`.
pub fn harnack_quotient<T: Real>(v: &ValueFunction<T>, x0: &[T], r: T, t0: T) -> Result<T> {
    let g = v.grid();
    let positive = (g.first_marching_slice()..g.slice_count()).all(|s| v.slice(s).iter().all(|&x| x > T::zero()));
    if !positive {
        return Err(Error::Precondition("value function must be positive for t > 0".into()));
    }
    if g.domain().inner_distance(x0) < T::lit(10.0) * r * T::lit(1.0 - 1e-12) {
        return Err(Error::Precondition("B_10r(x0) must lie inside the domain".into()));
    }
    let tol = g.epsilon() * g.epsilon() * T::lit(1e-9);
    if t0 - r * r < -tol || t0 > g.horizon() + g.epsilon() * g.epsilon() {
        return Err(Error::Precondition("[t0 - r^2, t0] must lie in (0, T]".into()));
    }
    let ball = CylinderSpec::with_height(x0.to_vec(), r, t0, T::zero())?.nodes(v);
    let early = g.nearest_slice(t0 - r * r);
    let late = g.nearest_slice(t0);
    let (_, sup) = range_over(v, &ball, &[early]).ok_or_else(|| Error::EmptySample("empty ball".into()))?;
    let (inf, _) = range_over(v, &ball, &[late]).ok_or_else(|| Error::EmptySample("empty ball".into()))?;
    if inf == T::zero() {
        return Err(Error::Precondition("infimum vanishes".into()));
    }
    Ok(sup / inf)
}

/// One `(x, t₂) / (y, t₁)` pair for the local bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalPair {
    pub upper: (usize, usize),
    pub lower: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalBoundReport<T> {
    pub checked: usize,
    pub inadmissible: usize,
    pub violations: usize,
    /// Smallest `v(x,t₂) / ((inf α/2)^a v(y,t₁))` over checked pairs.
    pub worst_ratio: T,
}

impl<T: Real> LocalBoundReport<T> {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checked > 0
    }
}

/// Asserts `v(x,t₂) ≥ (inf_α/2)^a · v(y,t₁)` for every admissible pair:
/// `0 < t₂ − t₁ < aε²/2` and `|x − y| < 2(t₂ − t₁)/ε`.
pub fn local_bound_check<T: Real>(
    v: &ValueFunction<T>,
    pairs: &[LocalPair],
    a: u32,
    inf_alpha: T,
) -> LocalBoundReport<T> {
    let g = v.grid();
    let eps = g.epsilon();
    let factor = (inf_alpha / T::lit(2.0)).powi(a as i32);
    let mut report = LocalBoundReport { checked: 0, inadmissible: 0, violations: 0, worst_ratio: T::infinity() };
    for p in pairs {
        let (x, s2) = p.upper;
        let (y, s1) = p.lower;
        let dt = g.slice_time(s2) - g.slice_time(s1);
        let admissible = dt > T::zero()
            && dt < T::from_count(a as usize) * eps * eps / T::lit(2.0)
            && distance(g.coords(x), g.coords(y)) < T::lit(2.0) * dt / eps;
        if !admissible {
            report.inadmissible += 1;
            continue;
        }
        report.checked += 1;
        let lhs = v.get(x, s2);
        let rhs = factor * v.get(y, s1);
        if lhs < rhs {
            report.violations += 1;
        }
        if rhs > T::zero() {
            report.worst_ratio = report.worst_ratio.min(lhs / rhs);
        }
    }
    report
}

/// Samples pairs reachable by a pull of `j < a` stencil steps through
/// interior nodes on marching slices, which is the geometry the local
/// bound describes on the lattice.
pub fn sample_local_pairs<T: Real>(v: &ValueFunction<T>, a: u32, count: usize, seed: u64) -> Result<Vec<LocalPair>> {
    let g = v.grid();
    if a < 2 {
        return Err(Error::InvalidParameter("a must be at least 2 for slice-aligned pairs".into()));
    }
    let table = g.stencil_table()?;
    let interior: Vec<usize> = g.interior_nodes().collect();
    let first = g.first_marching_slice();
    if g.slice_count() <= first || interior.is_empty() {
        return Err(Error::EmptySample("no marching slices".into()));
    }
    let mut rng = substream(seed, 0);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::EmptySample("could not sample admissible pairs".into()));
        }
        let x = interior[rng.random_range(0..interior.len())];
        let s2 = rng.random_range(first..g.slice_count());
        let j = rng.random_range(1..a as usize);
        if s2 < j {
            continue;
        }
        let mut node = x;
        let mut ok = true;
        for step in 0..j {
            if step > 0 && (!g.is_interior(node) || s2 - step < first) {
                ok = false;
                break;
            }
            let members = table.members(node).expect("interior node");
            node = members[rng.random_range(0..members.len())] as usize;
        }
        if ok {
            out.push(LocalPair { upper: (x, s2), lower: (node, s2 - j) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, DomainSpec};
    use std::sync::Arc;

    fn quad_1d(h: f64, eps: f64, t: f64, half: f64) -> ValueFunction<f64> {
        let g = Arc::new(make_grid(DomainSpec::cube(1, half).unwrap(), h, eps, t).unwrap());
        ValueFunction::from_fn(g, |x, t| x[0] * x[0] + 4.0 / 3.0 * t)
    }

    #[test]
    fn oscillation_of_the_quadratic() {
        // slices every 0.125 hit 0.75 and 1
        let v = quad_1d(0.125, 0.5, 1.0, 1.0);
        let cyl = CylinderSpec::with_height(vec![0.0], 0.5, 1.0, 0.25).unwrap();
        let osc = oscillation(&v, &cyl).unwrap();
        assert!((osc - (0.25 + 4.0 / 3.0 - 1.0)).abs() < 1e-12, "{osc}");
    }

    #[test]
    fn oscillation_shrinks_with_the_cylinder() {
        let v = quad_1d(0.05, 0.2, 1.0, 1.0);
        let mut last = f64::INFINITY;
        for r in [0.8, 0.6, 0.4, 0.2] {
            let o = oscillation(&v, &CylinderSpec::new(vec![0.1], r, 0.9).unwrap()).unwrap();
            assert!(o <= last);
            last = o;
        }
    }

    #[test]
    fn time_quotient_of_the_quadratic() {
        let dom = DomainSpec::cube(2, 1.0f64).unwrap();
        let g = Arc::new(make_grid(dom, 0.075, 0.3, 0.5).unwrap());
        let v = ValueFunction::from_fn(g, |x, t| x[0] * x[0] + x[1] * x[1] + 4.0 / 3.0 * t);
        let cyl = CylinderSpec::with_height(vec![0.0, 0.0], 0.2, 0.45, 0.09).unwrap();
        let rep = time_holder_probe(&v, &cyl, 0.09).unwrap();
        assert!((rep.max_quotient - 0.4).abs() < 1e-12, "{}", rep.max_quotient);
        assert!(rep.samples.iter().all(|s| (s.quotient - 0.4).abs() < 1e-12));
    }

    #[test]
    fn affine_lipschitz_quotient() {
        let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0f64).unwrap(), 0.05, 0.2, 0.5).unwrap());
        let v = ValueFunction::from_fn(g, |x, _t| -1.7 * x[0] + 0.3);
        let rep = spatial_lipschitz_probe(&v, &CylinderSpec::new(vec![0.0], 0.5, 0.5).unwrap(), 0.2).unwrap();
        assert!((rep.max_quotient - 1.7).abs() < 1e-12);
        assert!(rep.exhaustive);
    }

    #[test]
    fn harnack_quotient_of_the_quadratic() {
        let v = quad_1d(0.125, 0.5, 1.0, 5.5);
        let q = harnack_quotient(&v, &[0.0], 0.5, 1.0).unwrap();
        assert!((q - 0.9375).abs() < 1e-12, "{q}");
    }

    #[test]
    fn harnack_needs_room() {
        let v = quad_1d(0.125, 0.5, 1.0, 2.0);
        assert!(matches!(harnack_quotient(&v, &[0.0], 0.5, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn smooth_holder_slope_exceeds_one() {
        let v = quad_1d(0.01, 0.04, 1.0, 1.0);
        let rep = holder_fit(&v, &[0.0], 1.0, &[0.8, 0.5, 0.3, 0.2]).unwrap();
        assert!(rep.exponent.unwrap() >= 1.0);
    }

    #[test]
    fn constant_holder_fit_is_undefined() {
        let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.01, 0.04, 1.0).unwrap());
        let v = ValueFunction::from_fn(g, |_x, _t| 2.0);
        let rep = holder_fit(&v, &[0.0], 1.0, &[0.8, 0.5, 0.3]).unwrap();
        assert_eq!(rep.exponent, None);
        assert!(rep.oscillations.iter().all(|o| o.1 == 0.0));
    }

    #[test]
    fn local_bound_on_constants() {
        let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.5).unwrap());
        let v = ValueFunction::from_fn(g, |_x, _t| 3.0);
        let pairs = sample_local_pairs(&v, 2, 200, 5).unwrap();
        let rep = local_bound_check(&v, &pairs, 2, 1.0 / 3.0);
        assert_eq!(rep.checked, 200);
        assert!(rep.passed());
    }
}
