//! Domain geometry, the space-time lattice and ε-ball stencils.
//!
//! The lattice is anchored at the domain center with spacing `h` and covers
//! Ω together with its ε-boundary strip Γ_ε. Time slices are
//! `t_k = -ε²/2 + k·ε²/2`, so slices 0 and 1 (t ≤ 0) carry initial data and
//! every slice from 2 on is produced by one DPP step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Relative shave applied to the step radius: stencil members satisfy
/// `|y - x| <= ε·(1 - STENCIL_SHAVE)`.
pub const STENCIL_SHAVE: f64 = 1e-12;

/// Lattice points closer than this fraction of `h` to ∂Ω are treated as
/// boundary points.
const BOUNDARY_SNAP: f64 = 1e-9;

/// Upper bound on the number of cells in the lattice bounding box.
const MAX_LATTICE_CELLS: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainKind<T> {
    /// Axis-aligned box `|x_i - c_i| < half_widths[i]`.
    Box { half_widths: Vec<T> },
    /// Open ball `|x - c| < radius`.
    Ball { radius: T },
}

/// A bounded domain Ω ⊂ ℝⁿ: an axis-aligned box or a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    pub kind: DomainKind<T>,
    pub center: Vec<T>,
}

impl<T: Real> DomainSpec<T> {
    pub fn new_box(center: Vec<T>, half_widths: Vec<T>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("domain dimension must be at least 1".into()));
        }
        if half_widths.len() != center.len() {
            return Err(Error::DimensionMismatch { expected: center.len(), got: half_widths.len() });
        }
        if half_widths.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidParameter("box half-widths must be positive".into()));
        }
        Ok(Self { kind: DomainKind::Box { half_widths }, center })
    }

    pub fn new_ball(center: Vec<T>, radius: T) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("domain dimension must be at least 1".into()));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidParameter("ball radius must be positive".into()));
        }
        Ok(Self { kind: DomainKind::Ball { radius }, center })
    }

    /// Symmetric box `[-w, w]ⁿ` centered at the origin.
    pub fn cube(n: usize, half_width: T) -> Result<Self> {
        Self::new_box(vec![T::zero(); n], vec![half_width; n])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Signed margin: positive inside Ω (distance to the boundary along the
    /// worst axis for boxes), negative outside.
    fn inner_margin(&self, x: &[T]) -> T {
        match &self.kind {
            DomainKind::Box { half_widths } => x
                .iter()
                .zip(&self.center)
                .zip(half_widths)
                .map(|((&xi, &ci), &wi)| wi - (xi - ci).abs())
                .fold(T::infinity(), T::min),
            DomainKind::Ball { radius } => *radius - crate::num::distance(x, &self.center),
        }
    }

    /// Distance from an interior point to ∂Ω (largest inscribed ball radius
    /// centered at `x`); negative outside.
    pub fn inner_distance(&self, x: &[T]) -> T {
        self.inner_margin(x)
    }

    /// Strict membership in the open domain.
    pub fn contains(&self, x: &[T]) -> bool {
        self.inner_margin(x) > T::zero()
    }

    /// Distance from a point outside Ω to ∂Ω; zero for points in the closure.
    pub fn distance_outside(&self, x: &[T]) -> T {
        match &self.kind {
            DomainKind::Box { half_widths } => x
                .iter()
                .zip(&self.center)
                .zip(half_widths)
                .map(|((&xi, &ci), &wi)| {
                    let d = ((xi - ci).abs() - wi).max(T::zero());
                    d * d
                })
                .sum::<T>()
                .sqrt(),
            DomainKind::Ball { radius } => (crate::num::distance(x, &self.center) - *radius).max(T::zero()),
        }
    }

    /// Half-extent of the bounding box along each axis.
    pub fn extents(&self) -> Vec<T> {
        match &self.kind {
            DomainKind::Box { half_widths } => half_widths.clone(),
            DomainKind::Ball { radius } => vec![*radius; self.dim()],
        }
    }
}

/// Spatial lattice over Ω ∪ Γ_ε plus the time slicing.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid<T> {
    domain: DomainSpec<T>,
    h: T,
    epsilon: T,
    horizon: T,
    n: usize,
    /// Per-axis bound on lattice coordinates, `|k_i| <= reach[i]`.
    reach: Vec<i32>,
    /// Flattened lattice coordinates, `n` per node, lexicographic order.
    lattice: Vec<i32>,
    /// Flattened physical coordinates, `n` per node.
    coords: Vec<T>,
    interior: Vec<bool>,
    /// Dense map from bounding-box cell to node id (`u32::MAX` = absent).
    lookup: Vec<u32>,
    /// Stencil offsets in lattice units, lexicographically ordered.
    offsets: Vec<i32>,
    slice_count: usize,
}

/// Lattice nodes within distance `ε(1 - 10⁻¹²)` of a center node, with the
/// uniform mean weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BallStencil<T> {
    pub center: usize,
    pub members: Vec<usize>,
    pub mean_weights: Vec<T>,
}

/// Builds the lattice and slicing for `domain` with spacing `h`, step radius
/// `epsilon` and time horizon `horizon`.
pub fn make_grid<T: Real>(domain: DomainSpec<T>, h: T, epsilon: T, horizon: T) -> Result<SpaceTimeGrid<T>> {
    let (hf, ef, tf) = (h.as_f64(), epsilon.as_f64(), horizon.as_f64());
    if !(hf > 0.0) || !hf.is_finite() {
        return Err(Error::InvalidParameter("lattice spacing h must be positive".into()));
    }
    if !(tf > 0.0) || !tf.is_finite() {
        return Err(Error::InvalidParameter("time horizon T must be positive".into()));
    }
    if !ef.is_finite() || ef < 4.0 * hf * (1.0 - STENCIL_SHAVE) {
        return Err(Error::StencilResolution { epsilon: ef, min: 4.0 * hf });
    }
    let n = domain.dim();
    let extents = domain.extents();
    let reach: Vec<i32> = extents.iter().map(|w| ((w.as_f64() + ef) / hf * (1.0 + 1e-12)).ceil() as i32 + 1).collect();
    let cells = reach.iter().try_fold(1usize, |acc, &r| acc.checked_mul(2 * r as usize + 1)).unwrap_or(usize::MAX);
    if cells > MAX_LATTICE_CELLS {
        return Err(Error::GridTooLarge(cells));
    }

    let snap = T::lit(BOUNDARY_SNAP) * h;
    let strip_limit = epsilon + snap;
    let mut lattice = Vec::new();
    let mut coords = Vec::new();
    let mut interior = Vec::new();
    let mut lookup = vec![u32::MAX; cells];
    let mut k: Vec<i32> = reach.iter().map(|&r| -r).collect();
    let mut x = vec![T::zero(); n];
    for slot in lookup.iter_mut() {
        for i in 0..n {
            x[i] = domain.center[i] + h * T::lit(k[i] as f64);
        }
        let inside = domain.inner_margin(&x) > snap;
        let in_strip = !inside && domain.distance_outside(&x) <= strip_limit;
        if inside || in_strip {
            *slot = interior.len() as u32;
            lattice.extend_from_slice(&k);
            coords.extend_from_slice(&x);
            interior.push(inside);
        }
        // Advance the odometer with the last axis fastest.
        for i in (0..n).rev() {
            if k[i] < reach[i] {
                k[i] += 1;
                break;
            }
            k[i] = -reach[i];
        }
    }
    if interior.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let ratio = ef / hf;
    let r_max = ratio.floor() as i32;
    let limit = (ratio * (1.0 - STENCIL_SHAVE)).powi(2);
    let mut offsets = Vec::new();
    let mut o: Vec<i32> = vec![-r_max; n];
    loop {
        let sq: f64 = o.iter().map(|&v| (v as f64) * (v as f64)).sum();
        if sq <= limit {
            offsets.extend_from_slice(&o);
        }
        let mut done = true;
        for i in (0..n).rev() {
            if o[i] < r_max {
                o[i] += 1;
                done = false;
                break;
            }
            o[i] = -r_max;
        }
        if done {
            break;
        }
    }

    let half_step = ef * ef / 2.0;
    let marching = (tf / half_step - 1e-9).ceil().max(1.0) as usize;
    Ok(SpaceTimeGrid {
        domain,
        h,
        epsilon,
        horizon,
        n,
        reach,
        lattice,
        coords,
        interior,
        lookup,
        offsets,
        slice_count: marching + 2,
    })
}

impl<T: Real> SpaceTimeGrid<T> {
    pub fn domain(&self) -> &DomainSpec<T> {
        &self.domain
    }
    pub fn h(&self) -> T {
        self.h
    }
    pub fn epsilon(&self) -> T {
        self.epsilon
    }
    pub fn horizon(&self) -> T {
        self.horizon
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn node_count(&self) -> usize {
        self.interior.len()
    }
    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    /// Physical coordinates of a node.
    pub fn coords(&self, node: usize) -> &[T] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }

    pub fn lattice_coords(&self, node: usize) -> &[i32] {
        &self.lattice[node * self.n..(node + 1) * self.n]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.interior[node]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.interior.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Node at the given lattice coordinates, if present.
    pub fn node_at(&self, k: &[i32]) -> Option<usize> {
        let mut cell = 0usize;
        for (i, &ki) in k.iter().enumerate() {
            if ki.abs() > self.reach[i] {
                return None;
            }
            cell = cell * (2 * self.reach[i] as usize + 1) + (ki + self.reach[i]) as usize;
        }
        match self.lookup[cell] {
            u32::MAX => None,
            id => Some(id as usize),
        }
    }

    /// Lattice node nearest to a physical point, if present.
    pub fn nearest_node(&self, x: &[T]) -> Option<usize> {
        if x.len() != self.n {
            return None;
        }
        let k: Vec<i32> =
            x.iter().zip(&self.domain.center).map(|(&xi, &ci)| ((xi - ci) / self.h).round().as_f64() as i32).collect();
        self.node_at(&k)
    }

    /// Number of stencil members (identical for every interior node).
    pub fn stencil_size(&self) -> usize {
        self.offsets.len() / self.n
    }

    /// Stencil offsets in lattice units.
    pub fn stencil_offsets(&self) -> impl Iterator<Item = &[i32]> + '_ {
        self.offsets.chunks_exact(self.n)
    }

    /// Physical offset vector of the `j`-th stencil member.
    pub fn offset_vector(&self, j: usize) -> Vec<T> {
        self.offsets[j * self.n..(j + 1) * self.n].iter().map(|&o| self.h * T::lit(o as f64)).collect()
    }

    pub fn slice_count(&self) -> usize {
        self.slice_count
    }

    /// First slice with `t > 0`; DPP steps produce this slice and every later one.
    pub fn first_marching_slice(&self) -> usize {
        2
    }

    /// Slice times spaced by exactly `ε²/2`, computed from the origin.
    pub fn slice_time(&self, k: usize) -> T {
        T::lit(k as f64 - 1.0) * (self.epsilon * self.epsilon / T::lit(2.0))
    }

    pub fn slice_times(&self) -> Vec<T> {
        (0..self.slice_count).map(|k| self.slice_time(k)).collect()
    }

    /// Slice whose time is nearest to `t`, clamped to the grid.
    pub fn nearest_slice(&self, t: T) -> usize {
        let half = self.epsilon.as_f64().powi(2) / 2.0;
        let k = (t.as_f64() / half + 1.0).round();
        k.clamp(0.0, (self.slice_count - 1) as f64) as usize
    }

    /// True for a node/slice pair on the parabolic boundary strip Γ^ε_T.
    pub fn on_boundary_strip(&self, node: usize, slice: usize) -> bool {
        !self.interior[node] || slice < self.first_marching_slice()
    }

    /// Identifiers of the stencil members of `node`, or `None` if truncated.
    pub(crate) fn stencil_members_into(&self, node: usize, out: &mut Vec<usize>) -> bool {
        out.clear();
        let base = self.lattice_coords(node).to_vec();
        let mut k = vec![0i32; self.n];
        for off in self.offsets.chunks_exact(self.n) {
            for i in 0..self.n {
                k[i] = base[i] + off[i];
            }
            match self.node_at(&k) {
                Some(id) => out.push(id),
                None => return false,
            }
        }
        true
    }

    /// Flattened stencil table for all interior nodes: entry `r` holds the
    /// members of the `r`-th interior node in `interior_nodes()` order.
    pub fn stencil_table(&self) -> Result<StencilTable> {
        let m = self.stencil_size();
        let mut members = Vec::with_capacity(self.interior_count() * m);
        let mut rank = vec![u32::MAX; self.node_count()];
        let mut nodes = Vec::with_capacity(self.interior_count());
        let mut buf = Vec::with_capacity(m);
        for node in self.interior_nodes() {
            if !self.stencil_members_into(node, &mut buf) {
                return Err(Error::StencilTruncated { node });
            }
            rank[node] = nodes.len() as u32;
            nodes.push(node as u32);
            members.extend(buf.iter().map(|&id| id as u32));
        }
        Ok(StencilTable { width: m, members, nodes, rank })
    }
}

/// Precomputed stencil membership for every interior node.
#[derive(Debug, Clone)]
pub struct StencilTable {
    width: usize,
    members: Vec<u32>,
    nodes: Vec<u32>,
    rank: Vec<u32>,
}

impl StencilTable {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    /// Interior node of the given rank.
    pub fn node(&self, rank: usize) -> usize {
        self.nodes[rank] as usize
    }
    pub fn members_of_rank(&self, rank: usize) -> &[u32] {
        &self.members[rank * self.width..(rank + 1) * self.width]
    }
    /// Rank of an interior node, `None` for strip nodes.
    pub fn rank(&self, node: usize) -> Option<usize> {
        match self.rank.get(node) {
            Some(&r) if r != u32::MAX => Some(r as usize),
            _ => None,
        }
    }
    /// Stencil members of an interior node, `None` for strip nodes.
    pub fn members(&self, node: usize) -> Option<&[u32]> {
        self.rank(node).map(|r| self.members_of_rank(r))
    }
}

/// Stencil of `node` with uniform mean weights.
pub fn ball_stencil<T: Real>(grid: &SpaceTimeGrid<T>, node: usize) -> Result<BallStencil<T>> {
    if node >= grid.node_count() {
        return Err(Error::InvalidParameter(format!("node {node} out of range")));
    }
    let mut members = Vec::new();
    if !grid.stencil_members_into(node, &mut members) {
        return Err(Error::StencilTruncated { node });
    }
    let w = T::one() / T::from_count(members.len());
    Ok(BallStencil { center: node, mean_weights: vec![w; members.len()], members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64, eps: f64, t: f64) -> SpaceTimeGrid<f64> {
        make_grid(DomainSpec::cube(1, 1.0).unwrap(), h, eps, t).unwrap()
    }

    #[test]
    fn one_dimensional_box_counts() {
        let g = line(0.05, 0.2, 1.0);
        let closure = (0..g.node_count()).filter(|&i| g.coords(i)[0].abs() <= 1.0 + 1e-12).count();
        assert_eq!(closure, 41);
        assert_eq!(g.interior_count(), 39);
        // strip reaches 0.2 beyond each endpoint
        assert_eq!(g.node_count(), 49);
        let marching = g.slice_count() - g.first_marching_slice();
        assert_eq!(marching, 50);
        assert!(g.slice_time(g.slice_count() - 1) >= 1.0 - 1e-12);
        assert_eq!(g.slice_time(1), 0.0);
        assert!((g.slice_time(0) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn slice_spacing_is_exact_from_origin() {
        let g = line(0.05, 0.2, 1.0);
        for k in 0..g.slice_count() {
            assert_eq!(g.slice_time(k), (k as f64 - 1.0) * (0.2 * 0.2 / 2.0));
        }
    }

    #[test]
    fn ball_interior_mask_matches_point_test() {
        let dom = DomainSpec::new_ball(vec![0.0f64, 0.0], 1.0).unwrap();
        let g = make_grid(dom, 0.1, 0.4, 0.5).unwrap();
        for i in 0..g.node_count() {
            let x = g.coords(i);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert_eq!(g.is_interior(i), r < 1.0 - 1e-9, "node {i} at {x:?}");
            assert!(r <= 1.4 + 1e-9);
        }
    }

    #[test]
    fn coarse_epsilon_rejected() {
        let err = make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.1, 0.2, 1.0).unwrap_err();
        assert!(matches!(err, Error::StencilResolution { .. }));
    }

    #[test]
    fn stencil_excludes_rim_nodes() {
        let g = line(0.1, 0.4, 1.0);
        let c = g.nearest_node(&[0.0]).unwrap();
        let s = ball_stencil(&g, c).unwrap();
        let xs: Vec<f64> = s.members.iter().map(|&m| (g.coords(m)[0] * 10.0).round() / 10.0).collect();
        assert_eq!(xs, vec![-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3]);
        let total: f64 = s.mean_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(s.mean_weights.iter().all(|&w| (w - 1.0 / 7.0).abs() < 1e-16));
    }

    #[test]
    fn interior_stencils_are_point_symmetric() {
        let dom = DomainSpec::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = make_grid(dom, 0.1, 0.4, 0.5).unwrap();
        for node in g.interior_nodes() {
            let s = ball_stencil(&g, node).unwrap();
            let c = g.lattice_coords(node).to_vec();
            for &m in &s.members {
                let y = g.lattice_coords(m);
                let mirror: Vec<i32> = c.iter().zip(y).map(|(&a, &b)| 2 * a - b).collect();
                let id = g.node_at(&mirror).unwrap();
                assert!(s.members.contains(&id));
            }
        }
    }

    #[test]
    fn strip_nodes_deep_in_the_collar_are_truncated() {
        let g = line(0.1, 0.4, 1.0);
        let edge = g.nearest_node(&[1.4]).unwrap();
        assert!(matches!(ball_stencil(&g, edge), Err(Error::StencilTruncated { .. })));
    }

    #[test]
    fn stencil_table_matches_single_stencils() {
        let dom = DomainSpec::new_box(vec![0.0, 0.0], vec![0.5, 0.7]).unwrap();
        let g = make_grid(dom, 0.05, 0.2, 0.1).unwrap();
        let table = g.stencil_table().unwrap();
        assert_eq!(table.len(), g.interior_count());
        for node in g.interior_nodes() {
            let s = ball_stencil(&g, node).unwrap();
            let from_table: Vec<usize> = table.members(node).unwrap().iter().map(|&m| m as usize).collect();
            assert_eq!(s.members, from_table);
        }
    }
}
