use rand::Rng;

use super::{scan, BarrierReport};
use crate::error::{Error, Result};
use crate::fields::{eval_probabilities, PExponentField};
use crate::grid::SpaceTimeGrid;

/// `v̄ = c + 7r⁻²A·t + 2r⁻²A|x|²` (upper) or its mirror
/// `v̲ = c − 7r⁻²A·t − 2r⁻²A|x|²` (lower).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBarrier {
    pub a: f64,
    pub r: f64,
    pub offset: f64,
    pub upper: bool,
}

impl TimeBarrier {
    pub fn new(a: f64, r: f64, offset: f64, upper: bool) -> Result<Self> {
        if !(a >= 0.0) || !(r > 0.0) {
            return Err(Error::InvalidParameter("need A >= 0 and r > 0".into()));
        }
        Ok(Self { a, r, offset, upper })
    }

    fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let x2: f64 = x.iter().map(|c| c * c).sum();
        let k = self.a / (self.r * self.r);
        self.offset + self.sign() * k * (7.0 * t + 2.0 * x2)
    }

    /// Signed one-step margin in the continuum ball, with the offset
    /// cancelled algebraically: for the upper barrier
    /// `v̄(x,t) − [α/2(sup + inf) + β·mean] v̄(·, t − ε²/2)`, for the lower
    /// barrier the same expression with the roles reversed.
    pub fn continuum_margin(&self, x: &[f64], alpha: f64, beta: f64, epsilon: f64) -> f64 {
        let n = x.len() as f64;
        let len = crate::num::norm(x);
        let x2 = len * len;
        let sup = (len + epsilon).powi(2);
        let inf = (len - epsilon).max(0.0).powi(2);
        let mean = x2 + n * epsilon * epsilon / (n + 2.0);
        let k = self.a / (self.r * self.r);
        // both barriers reduce to the same quantity; for the lower one the
        // sup of v̲ is minus the inf of the quadratic and vice versa
        k * (3.5 * epsilon * epsilon - 2.0 * (alpha / 2.0 * (sup + inf) + beta * mean - x2))
    }
}

/// Samples interior `(x, t)` and checks the strict one-step inequality of
/// the barrier with continuum ball moments. Margins are normalized by
/// `r⁻²Aε²`; `A = 0` is reported as a degenerate pass.
pub fn verify_time_barrier(
    tb: &TimeBarrier,
    field: &dyn PExponentField<f64>,
    grid: &SpaceTimeGrid<f64>,
    samples: usize,
    seed: u64,
) -> Result<BarrierReport> {
    let eps = grid.epsilon();
    let n = grid.dim();
    let domain = grid.domain();
    let ext = domain.extents();
    let label = if tb.upper { "time-barrier-upper" } else { "time-barrier-lower" };
    let mut template =
        BarrierReport::new(label, n, vec![("A", tb.a), ("r", tb.r), ("offset", tb.offset), ("epsilon", eps)], seed);
    if tb.a == 0.0 {
        template.degenerate = true;
    }
    let unit = tb.a / (tb.r * tb.r) * eps * eps;
    let err = std::sync::Mutex::new(None);
    let rep = scan(&template, samples, seed, |rng, rep| {
        let x = loop {
            let x: Vec<f64> = (0..n).map(|i| domain.center[i] + ext[i] * (2.0 * rng.random::<f64>() - 1.0)).collect();
            if domain.contains(&x) {
                break x;
            }
        };
        let t = eps * eps / 2.0 + rng.random::<f64>() * (grid.horizon() - eps * eps / 2.0).max(0.0);
        let pr = match eval_probabilities(field, &x, t, n) {
            Ok(pr) => pr,
            Err(e) => {
                *err.lock().expect("poisoned") = Some(e);
                return;
            }
        };
        let margin = tb.continuum_margin(&x, pr.alpha, pr.beta, eps);
        let rel = if unit > 0.0 { margin / unit } else { 0.0 };
        let near = crate::num::norm(&x) < eps;
        let ok = if tb.a == 0.0 { margin == 0.0 } else { margin > 0.0 };
        rep.record_regime(if near { "|x|<eps" } else { "|x|>=eps" }, rel, ok);
    });
    if let Some(e) = err.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(rep)
}

/// The same inequality on the lattice: every interior node and marching
/// slice, with sup, inf and mean over the grid stencil.
pub fn verify_time_barrier_lattice(
    tb: &TimeBarrier,
    field: &dyn PExponentField<f64>,
    grid: &SpaceTimeGrid<f64>,
) -> Result<BarrierReport> {
    let eps = grid.epsilon();
    let label = if tb.upper { "time-barrier-lattice-upper" } else { "time-barrier-lattice-lower" };
    let mut rep = BarrierReport::new(label, grid.dim(), vec![("A", tb.a), ("r", tb.r), ("offset", tb.offset)], 0);
    rep.degenerate = tb.a == 0.0;
    let op = crate::dpp::DppOperator::new(grid, field)?;
    let unit = tb.a / (tb.r * tb.r) * eps * eps;
    let tol = 1e-12 * (tb.offset.abs() + unit + 1.0);
    for s in grid.first_marching_slice()..grid.slice_count() {
        let tp = grid.slice_time(s - 1);
        let prev: Vec<f64> = (0..grid.node_count()).map(|i| tb.eval(grid.coords(i), tp)).collect();
        let rhs = op.apply_interior(&prev, s)?;
        for (rank, r) in rhs.into_iter().enumerate() {
            let node = op.table().node(rank);
            let here = tb.eval(grid.coords(node), grid.slice_time(s));
            let margin = tb.sign() * (here - r);
            let rel = if unit > 0.0 { margin / unit } else { 0.0 };
            let ok = if tb.a == 0.0 { margin.abs() <= tol } else { margin > tol };
            rep.record(rel, ok);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_margin_away_from_origin() {
        let tb = TimeBarrier::new(2.0, 0.5, 1.0, true).unwrap();
        let (alpha, beta, eps) = (0.3, 0.7, 0.1);
        let m = tb.continuum_margin(&[0.4, 0.3], alpha, beta, eps);
        let expect = 2.0 / 0.25 * eps * eps * (3.5 - 2.0 * alpha - 2.0 * beta * 2.0 / 4.0);
        assert!((m - expect).abs() < 1e-13);
        assert!(m > 0.0);
    }

    #[test]
    fn margin_positive_for_all_alpha() {
        let tb = TimeBarrier::new(1.0, 1.0, 0.0, false).unwrap();
        for k in 1..100 {
            let alpha = k as f64 / 100.0;
            for x in [0.0, 0.05, 0.2, 0.9] {
                assert!(tb.continuum_margin(&[x], alpha, 1.0 - alpha, 0.1) > 0.0);
            }
        }
    }

    #[test]
    fn zero_oscillation_is_degenerate() {
        let tb = TimeBarrier::new(0.0, 1.0, 3.0, true).unwrap();
        let g = crate::grid::make_grid(crate::grid::DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.5).unwrap();
        let p = crate::fields::ConstantP::new(4.0).unwrap();
        let rep = verify_time_barrier(&tb, &p, &g, 100, 1).unwrap();
        assert!(rep.degenerate && rep.passed());
    }
}
