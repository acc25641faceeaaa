//! Payoffs F on the parabolic boundary strip and their restriction to the grid.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::num::Real;
use crate::table::RegularTable;

/// Bounded payoff `F(x, t)` prescribed on Γ^ε_T.
pub trait Payoff<T: Real>: Send + Sync {
    fn eval(&self, x: &[T], t: T) -> T;

    /// A bound `M` with `|F| <= M`, when known in closed form.
    fn bound(&self) -> Option<T> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPayoff<T>(pub T);

impl<T: Real> Payoff<T> for ConstantPayoff<T> {
    fn eval(&self, _x: &[T], _t: T) -> T {
        self.0
    }
    fn bound(&self) -> Option<T> {
        Some(self.0.abs())
    }
}

/// One term `coeff · x₁^{a₁} ⋯ xₙ^{aₙ} · t^{b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial<T> {
    pub coeff: T,
    pub x_powers: Vec<u32>,
    pub t_power: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPayoff<T> {
    terms: Vec<Monomial<T>>,
}

impl<T: Real> PolynomialPayoff<T> {
    pub fn new(terms: Vec<Monomial<T>>) -> Self {
        Self { terms }
    }

    /// `|x|² + c·t` in dimension `n`.
    pub fn quadratic(n: usize, time_coeff: T) -> Self {
        let mut terms: Vec<Monomial<T>> = (0..n)
            .map(|i| {
                let mut x_powers = vec![0; n];
                x_powers[i] = 2;
                Monomial { coeff: T::one(), x_powers, t_power: 0 }
            })
            .collect();
        terms.push(Monomial { coeff: time_coeff, x_powers: vec![0; n], t_power: 1 });
        Self { terms }
    }
}

impl<T: Real> Payoff<T> for PolynomialPayoff<T> {
    fn eval(&self, x: &[T], t: T) -> T {
        self.terms
            .iter()
            .map(|m| {
                let mut v = m.coeff * t.powi(m.t_power as i32);
                for (xi, &a) in x.iter().zip(&m.x_powers) {
                    v = v * xi.powi(a as i32);
                }
                v
            })
            .sum()
    }
}

/// Payoff tabulated over (x, t), time on the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPayoff<T> {
    table: RegularTable<T>,
}

impl<T: Real> TabulatedPayoff<T> {
    pub fn new(table: RegularTable<T>) -> Self {
        Self { table }
    }
}

impl<T: Real> Payoff<T> for TabulatedPayoff<T> {
    fn eval(&self, x: &[T], t: T) -> T {
        let mut q = x.to_vec();
        q.push(t);
        self.table.eval(&q)
    }
    fn bound(&self) -> Option<T> {
        Some(self.table.max_value().abs().max(self.table.min_value().abs()))
    }
}

/// Payoff given by a closure.
pub struct FnPayoff<F>(pub F);

impl<T: Real, F: Fn(&[T], T) -> T + Send + Sync> Payoff<T> for FnPayoff<F> {
    fn eval(&self, x: &[T], t: T) -> T {
        (self.0)(x, t)
    }
}

/// Payoff values on the node/slice pairs of Γ^ε_T: every strip node on every
/// slice and every node on the slices with t ≤ 0.
#[derive(Debug, Clone)]
pub struct BoundaryData<T> {
    nodes: usize,
    slices: usize,
    values: Vec<T>,
    mask: Vec<bool>,
    min: T,
    max: T,
}

impl<T: Real> BoundaryData<T> {
    /// Boundary value at `(node, slice)`, `None` for interior nodes at t > 0.
    pub fn get(&self, node: usize, slice: usize) -> Option<T> {
        let i = slice * self.nodes + node;
        self.mask[i].then(|| self.values[i])
    }

    /// Row of boundary values on one slice; entries for interior nodes at
    /// t > 0 are zero placeholders.
    pub fn slice(&self, slice: usize) -> &[T] {
        &self.values[slice * self.nodes..(slice + 1) * self.nodes]
    }

    pub fn slice_count(&self) -> usize {
        self.slices
    }

    pub fn min(&self) -> T {
        self.min
    }

    pub fn max(&self) -> T {
        self.max
    }

    /// `max |F|` over the extended values.
    pub fn sup_norm(&self) -> T {
        self.min.abs().max(self.max.abs())
    }
}

/// Restricts `payoff` to the grid's parabolic boundary strip.
pub fn extend_payoff<T: Real>(payoff: &dyn Payoff<T>, grid: &SpaceTimeGrid<T>) -> Result<BoundaryData<T>> {
    let nodes = grid.node_count();
    let slices = grid.slice_count();
    let mut values = vec![T::zero(); nodes * slices];
    let mut mask = vec![false; nodes * slices];
    let (mut min, mut max) = (T::infinity(), T::neg_infinity());
    for s in 0..slices {
        let t = grid.slice_time(s);
        for node in 0..nodes {
            if !grid.on_boundary_strip(node, s) {
                continue;
            }
            let x = grid.coords(node);
            let v = payoff.eval(x, t);
            if !v.is_finite() {
                return Err(Error::NonFinitePayoff { x: x.iter().map(|c| c.as_f64()).collect(), t: t.as_f64() });
            }
            let i = s * nodes + node;
            values[i] = v;
            mask[i] = true;
            min = min.min(v);
            max = max.max(v);
        }
    }
    Ok(BoundaryData { nodes, slices, values, mask, min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, DomainSpec};

    #[test]
    fn constant_payoff_fills_the_strip() {
        let g = make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.3).unwrap();
        let b = extend_payoff(&ConstantPayoff(1.0), &g).unwrap();
        for s in 0..g.slice_count() {
            for node in 0..g.node_count() {
                let expect_boundary = !g.is_interior(node) || g.slice_time(s) <= 0.0;
                assert_eq!(b.get(node, s).is_some(), expect_boundary);
                if let Some(v) = b.get(node, s) {
                    assert_eq!(v, 1.0);
                }
            }
        }
    }

    #[test]
    fn quadratic_strip_values_match_closed_form() {
        let dom = DomainSpec::new_ball(vec![0.0f64, 0.0], 1.0).unwrap();
        let g = make_grid(dom, 0.1, 0.4, 0.5).unwrap();
        let b = extend_payoff(&PolynomialPayoff::quadratic(2, 4.0 / 3.0), &g).unwrap();
        for s in 0..g.slice_count() {
            let t = g.slice_time(s);
            for node in 0..g.node_count() {
                if let Some(v) = b.get(node, s) {
                    let x = g.coords(node);
                    let exact = x[0] * x[0] + x[1] * x[1] + 4.0 / 3.0 * t;
                    assert!((v - exact).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn non_finite_payoff_is_reported() {
        let g = make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.3).unwrap();
        let f = FnPayoff(|x: &[f64], _t: f64| if x[0] > 1.1 { f64::NAN } else { 0.0 });
        assert!(matches!(extend_payoff(&f, &g), Err(Error::NonFinitePayoff { .. })));
    }
}
