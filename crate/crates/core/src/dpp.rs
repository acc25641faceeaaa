//! Forward march of the parabolic dynamic programming principle.
//!
//! Each interior node on slice `k ≥ 2` receives
//! `α/2·(max + min) + β·mean` of slice `k − 1` over its ε-ball stencil, with
//! α, β evaluated at the node and the new slice time. Strip nodes and the two
//! initial slices carry the payoff.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{probabilities_from_p, PExponentField, ProbabilityPair};
use crate::grid::{SpaceTimeGrid, StencilTable};
use crate::num::Real;
use crate::payoff::{extend_payoff, BoundaryData, Payoff};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    DppMarch,
    MonteCarlo,
    Oracle,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::DppMarch => "dpp-march",
            Source::MonteCarlo => "monte-carlo",
            Source::Oracle => "oracle",
        }
    }
}

/// Values on every node of every slice of a grid.
#[derive(Debug, Clone)]
pub struct ValueFunction<T> {
    grid: Arc<SpaceTimeGrid<T>>,
    values: Vec<T>,
    residual: Option<T>,
    source: Source,
    constant_p: bool,
}

impl<T: Real> ValueFunction<T> {
    pub fn from_values(grid: Arc<SpaceTimeGrid<T>>, values: Vec<T>, source: Source) -> Result<Self> {
        let expected = grid.node_count() * grid.slice_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(Self { grid, values, residual: None, source, constant_p: false })
    }

    /// Samples a closed-form function on every node and slice.
    pub fn from_fn(grid: Arc<SpaceTimeGrid<T>>, f: impl Fn(&[T], T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.node_count() * grid.slice_count());
        for s in 0..grid.slice_count() {
            let t = grid.slice_time(s);
            for node in 0..grid.node_count() {
                values.push(f(grid.coords(node), t));
            }
        }
        Self { grid, values, residual: None, source: Source::Oracle, constant_p: false }
    }

    pub fn grid(&self) -> &SpaceTimeGrid<T> {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<SpaceTimeGrid<T>> {
        &self.grid
    }

    pub fn get(&self, node: usize, slice: usize) -> T {
        self.values[slice * self.grid.node_count() + node]
    }

    pub fn set(&mut self, node: usize, slice: usize, v: T) {
        let n = self.grid.node_count();
        self.values[slice * n + node] = v;
        self.residual = None;
    }

    pub fn slice(&self, slice: usize) -> &[T] {
        let n = self.grid.node_count();
        &self.values[slice * n..(slice + 1) * n]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn source(&self) -> Source {
        self.source
    }

    /// Stored DPP residual, `None` if never computed or invalidated by `set`.
    pub fn residual(&self) -> Option<T> {
        self.residual
    }

    pub fn set_residual(&mut self, r: T) {
        self.residual = Some(r);
    }

    /// Whether the value function was produced with a constant exponent.
    pub fn constant_p(&self) -> bool {
        self.constant_p
    }

    pub fn with_constant_p(mut self, flag: bool) -> Self {
        self.constant_p = flag;
        self
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// The one-step DPP operator of a grid and exponent field.
pub struct DppOperator<'a, T: Real> {
    grid: &'a SpaceTimeGrid<T>,
    table: StencilTable,
    field: &'a dyn PExponentField<T>,
}

impl<'a, T: Real> DppOperator<'a, T> {
    pub fn new(grid: &'a SpaceTimeGrid<T>, field: &'a dyn PExponentField<T>) -> Result<Self> {
        Ok(Self { grid, table: grid.stencil_table()?, field })
    }

    pub fn grid(&self) -> &SpaceTimeGrid<T> {
        self.grid
    }

    pub fn table(&self) -> &StencilTable {
        &self.table
    }

    /// α, β at an interior node on slice `slice`.
    pub fn probabilities(&self, node: usize, slice: usize) -> Result<ProbabilityPair<T>> {
        let x = self.grid.coords(node);
        let t = self.grid.slice_time(slice);
        let p = self.field.p(x, t);
        probabilities_from_p(p, self.grid.dim()).ok_or_else(|| Error::ExponentOutOfRange {
            p: p.as_f64(),
            x: x.iter().map(|v| v.as_f64()).collect(),
            t: t.as_f64(),
        })
    }

    /// `α/2·(max + min) + β·mean` of `prev` over the stencil of the interior
    /// node with the given stencil rank.
    fn expression_rank(&self, prev: &[T], rank: usize, pr: ProbabilityPair<T>, slice: usize) -> Result<T> {
        let members = self.table.members_of_rank(rank);
        let mut hi = T::neg_infinity();
        let mut lo = T::infinity();
        let mut sum = T::zero();
        for &m in members {
            let v = prev[m as usize];
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { node: m as usize, slice: slice - 1 });
            }
            hi = hi.max(v);
            lo = lo.min(v);
            sum = sum + v;
        }
        let mean = sum / T::from_count(members.len());
        Ok(pr.alpha / T::lit(2.0) * (hi + lo) + pr.beta * mean)
    }

    /// DPP right-hand side at an interior `node` on `slice`, reading `prev`
    /// (the full slice `slice - 1`).
    pub fn expression(&self, prev: &[T], node: usize, slice: usize) -> Result<T> {
        let rank = self.table.rank(node).ok_or_else(|| Error::Precondition(format!("node {node} is not interior")))?;
        let pr = self.probabilities(node, slice)?;
        self.expression_rank(prev, rank, pr, slice)
    }

    /// Interior values of slice `slice` from the full previous slice, in
    /// stencil-rank order.
    pub fn apply_interior(&self, prev: &[T], slice: usize) -> Result<Vec<T>> {
        if prev.len() != self.grid.node_count() {
            return Err(Error::DimensionMismatch { expected: self.grid.node_count(), got: prev.len() });
        }
        let constant =
            if self.field.is_constant() { Some(self.probabilities(self.table.node(0), slice)?) } else { None };
        (0..self.table.len())
            .into_par_iter()
            .map(|rank| {
                let pr = match constant {
                    Some(pr) => pr,
                    None => self.probabilities(self.table.node(rank), slice)?,
                };
                self.expression_rank(prev, rank, pr, slice)
            })
            .collect()
    }
}

/// One DPP step: produces slice `slice` from `prev` (slice `slice - 1`),
/// with strip nodes set to the payoff.
pub fn dpp_step<T: Real>(
    op: &DppOperator<'_, T>,
    prev: &[T],
    slice: usize,
    boundary: &BoundaryData<T>,
) -> Result<Vec<T>> {
    if slice < op.grid.first_marching_slice() || slice >= op.grid.slice_count() {
        return Err(Error::InvalidParameter(format!("slice {slice} is not a marching slice")));
    }
    let interior = op.apply_interior(prev, slice)?;
    let mut out = boundary.slice(slice).to_vec();
    for (rank, v) in interior.into_iter().enumerate() {
        out[op.table.node(rank)] = v;
    }
    Ok(out)
}

const DUMP_MAGIC: &[u8; 4] = b"TUGV";
const DUMP_VERSION: u32 = 1;

/// A DPP march that can be advanced slice by slice and checkpointed.
pub struct DppMarch<'a, T: Real> {
    grid: Arc<SpaceTimeGrid<T>>,
    op: DppOperator<'a, T>,
    boundary: BoundaryData<T>,
    values: Vec<T>,
    completed: usize,
}

impl<'a, T: Real> DppMarch<'a, T> {
    pub fn new(
        grid: &'a Arc<SpaceTimeGrid<T>>,
        field: &'a dyn PExponentField<T>,
        payoff: &dyn Payoff<T>,
    ) -> Result<Self> {
        let boundary = extend_payoff(payoff, grid)?;
        let op = DppOperator::new(grid, field)?;
        let nodes = grid.node_count();
        let first = grid.first_marching_slice();
        let mut values = Vec::with_capacity(nodes * grid.slice_count());
        for s in 0..first {
            values.extend_from_slice(boundary.slice(s));
        }
        Ok(Self { grid: Arc::clone(grid), op, boundary, values, completed: first })
    }

    /// Number of slices already filled.
    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn is_done(&self) -> bool {
        self.completed == self.grid.slice_count()
    }

    /// Advances by at most `slices` slices.
    pub fn advance(&mut self, slices: usize) -> Result<()> {
        let nodes = self.grid.node_count();
        let end = self.completed.saturating_add(slices).min(self.grid.slice_count());
        while self.completed < end {
            let s = self.completed;
            let prev = &self.values[(s - 1) * nodes..s * nodes];
            let next = dpp_step(&self.op, prev, s, &self.boundary)?;
            self.values.extend_from_slice(&next);
            self.completed += 1;
        }
        Ok(())
    }

    /// Binary checkpoint: magic, version, grid signature, completed slices,
    /// then the filled values as little-endian `f64`.
    pub fn dump(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(64 + self.values.len() * 8);
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
        for v in [g.node_count() as u64, g.slice_count() as u64, self.completed as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [g.h(), g.epsilon(), g.horizon()] {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out
    }

    /// Restores a march from `dump()` output taken on an identical grid.
    pub fn resume(
        grid: &'a Arc<SpaceTimeGrid<T>>,
        field: &'a dyn PExponentField<T>,
        payoff: &dyn Payoff<T>,
        bytes: &[u8],
    ) -> Result<Self> {
        let mut march = Self::new(grid, field, payoff)?;
        let mut cur = bytes;
        let mut take = |k: usize| -> Result<&[u8]> {
            if cur.len() < k {
                return Err(Error::BadDump("truncated".into()));
            }
            let (head, tail) = cur.split_at(k);
            cur = tail;
            Ok(head)
        };
        if take(4)? != DUMP_MAGIC {
            return Err(Error::BadDump("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
        if u32_at(take(4)?) != DUMP_VERSION {
            return Err(Error::BadDump("unsupported version".into()));
        }
        let n = u32_at(take(4)?) as usize;
        let nodes = u64_at(take(8)?) as usize;
        let slices = u64_at(take(8)?) as usize;
        let completed = u64_at(take(8)?) as usize;
        let sig = [f64_at(take(8)?), f64_at(take(8)?), f64_at(take(8)?)];
        let same = n == grid.dim()
            && nodes == grid.node_count()
            && slices == grid.slice_count()
            && sig == [grid.h().as_f64(), grid.epsilon().as_f64(), grid.horizon().as_f64()];
        if !same {
            return Err(Error::BadDump("grid signature does not match".into()));
        }
        if completed < grid.first_marching_slice() || completed > slices {
            return Err(Error::BadDump("completed slice count out of range".into()));
        }
        let body = take(completed * nodes * 8)?;
        march.values = body.chunks_exact(8).map(|c| T::lit(f64_at(c))).collect();
        march.completed = completed;
        Ok(march)
    }

    /// Completes the march and returns the value function with its residual.
    pub fn finish(mut self) -> Result<ValueFunction<T>> {
        self.advance(usize::MAX)?;
        let constant_p = self.op.field.is_constant();
        let mut v = ValueFunction::from_values(Arc::clone(&self.grid), self.values, Source::DppMarch)?
            .with_constant_p(constant_p);
        let r = residual_with(&self.op, &v)?;
        v.set_residual(r);
        Ok(v)
    }
}

/// Marches the DPP over the whole grid.
pub fn solve_value<T: Real>(
    grid: &Arc<SpaceTimeGrid<T>>,
    field: &dyn PExponentField<T>,
    payoff: &dyn Payoff<T>,
) -> Result<ValueFunction<T>> {
    DppMarch::new(grid, field, payoff)?.finish()
}

fn residual_with<T: Real>(op: &DppOperator<'_, T>, v: &ValueFunction<T>) -> Result<T> {
    let g = v.grid();
    let mut worst = T::zero();
    for s in g.first_marching_slice()..g.slice_count() {
        let rhs = op.apply_interior(v.slice(s - 1), s)?;
        for (rank, r) in rhs.into_iter().enumerate() {
            let d = (v.get(op.table.node(rank), s) - r).abs();
            if !(d <= worst) {
                worst = if d.is_nan() { T::infinity() } else { d };
            }
        }
    }
    Ok(worst)
}

/// Max over interior nodes of marching slices of the DPP defect of `v`.
pub fn dpp_residual<T: Real>(v: &ValueFunction<T>, field: &dyn PExponentField<T>) -> Result<T> {
    let op = DppOperator::new(v.grid(), field)?;
    residual_with(&op, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ConstantP;
    use crate::grid::{ball_stencil, make_grid, DomainSpec};
    use crate::payoff::{ConstantPayoff, PolynomialPayoff};

    fn line(h: f64, eps: f64, t: f64) -> Arc<SpaceTimeGrid<f64>> {
        Arc::new(make_grid(DomainSpec::cube(1, 1.0).unwrap(), h, eps, t).unwrap())
    }

    #[test]
    fn constant_payoff_is_a_fixed_point() {
        let g = line(0.05, 0.2, 0.5);
        let p = ConstantP::new(4.0).unwrap();
        let v = solve_value(&g, &p, &ConstantPayoff(1.0)).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0));
        assert_eq!(v.residual(), Some(0.0));
    }

    #[test]
    fn affine_prev_is_reproduced() {
        let dom = DomainSpec::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = make_grid(dom, 0.05, 0.2, 0.1).unwrap();
        let p = ConstantP::new(3.0).unwrap();
        let op = DppOperator::new(&g, &p).unwrap();
        let prev: Vec<f64> = (0..g.node_count()).map(|i| 0.7 * g.coords(i)[0] - 0.2 * g.coords(i)[1] + 0.5).collect();
        let out = op.apply_interior(&prev, 2).unwrap();
        for (rank, v) in out.iter().enumerate() {
            assert!((v - prev[op.table().node(rank)]).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_step_matches_brute_force_and_continuum() {
        let (h, eps) = (0.005, 0.2);
        let g = line(h, eps, 0.1);
        let p = ConstantP::new(4.0).unwrap();
        let op = DppOperator::new(&g, &p).unwrap();
        let prev: Vec<f64> = (0..g.node_count()).map(|i| g.coords(i)[0].powi(2)).collect();
        let node = g.nearest_node(&[0.3]).unwrap();
        let got = op.expression(&prev, node, 2).unwrap();

        let s = ball_stencil(&g, node).unwrap();
        let vals: Vec<f64> = s.members.iter().map(|&m| prev[m]).collect();
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        let mean: f64 = vals.iter().zip(&s.mean_weights).map(|(v, w)| v * w).sum();
        let brute = 0.2 * (hi + lo) + 0.6 * mean;
        assert!((got - brute).abs() < 1e-14);

        let continuum = 0.09 + 0.6 * eps * eps;
        // rim shave and midpoint quadrature both enter at O(h/ε)·ε²
        assert!((got - continuum).abs() < 2.0 * h * eps, "{got} vs {continuum}");
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let g = line(0.05, 0.2, 0.3);
        let p = ConstantP::new(4.0).unwrap();
        let mut v = solve_value(&g, &p, &PolynomialPayoff::quadratic(1, 1.6)).unwrap();
        let node = g.nearest_node(&[0.0]).unwrap();
        let before = v.get(node, 5);
        v.set(node, 5, before + 1.0);
        assert!(dpp_residual(&v, &p).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn dump_and_resume_reproduce_the_march() {
        let g = line(0.05, 0.2, 0.4);
        let p = ConstantP::new(4.0).unwrap();
        let f = PolynomialPayoff::quadratic(1, 1.6);
        let full = solve_value(&g, &p, &f).unwrap();
        let mut m = DppMarch::new(&g, &p, &f).unwrap();
        m.advance(3).unwrap();
        let bytes = m.dump();
        let resumed = DppMarch::resume(&g, &p, &f, &bytes).unwrap().finish().unwrap();
        assert_eq!(full.values(), resumed.values());
        assert!(matches!(DppMarch::resume(&g, &p, &f, &bytes[..10]), Err(Error::BadDump(_))));
    }

    #[test]
    fn generic_over_f32() {
        let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0f32).unwrap(), 0.05, 0.2, 0.2).unwrap());
        let p = ConstantP::new(4.0f32).unwrap();
        let v = solve_value(&g, &p, &ConstantPayoff(2.0f32)).unwrap();
        assert!(v.values().iter().all(|&x| x == 2.0));
    }
}
