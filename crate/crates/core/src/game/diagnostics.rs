use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dpp::{Source, ValueFunction};
use crate::error::{Error, Result};
use crate::num::{distance, Real};
use crate::rng::substream;

use super::{run_game, Game, Mode, StoppingRule, Strategy, TrajectoryPoint};

/// Increment statistics of `|x_k − z|` for one bin of `|x_{k−1} − z|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_increment: f64,
    pub std_error: f64,
    /// `None` when the bin holds too few samples to judge.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub bins: Vec<DriftBin>,
    pub bound: f64,
    pub min_count: usize,
}

impl MartingaleReport {
    /// True when every bin with enough samples passes.
    pub fn passed(&self) -> bool {
        self.bins.iter().all(|b| b.pass != Some(false))
    }

    pub fn judged_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.pass.is_some()).count()
    }
}

/// Empirical check of `E[|x_k − z| | ℱ_{k−1}] ≤ |x_{k−1} − z| + Cε²`,
/// binned by `|x_{k−1} − z|` with a 4σ allowance per bin.
pub fn supermartingale_diagnostic<T: Real>(
    trajectories: &[Vec<TrajectoryPoint<T>>],
    z: &[T],
    c: f64,
    epsilon: f64,
    bins: usize,
    min_count: usize,
) -> Result<MartingaleReport> {
    if bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    let mut pairs = Vec::new();
    for tr in trajectories {
        for w in tr.windows(2) {
            let before = distance(&w[0].x, z).as_f64();
            let after = distance(&w[1].x, z).as_f64();
            pairs.push((before, after - before));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptySample("trajectories contain no moves".into()));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); bins];
    for &(d, inc) in &pairs {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        sums[b].0 += 1;
        sums[b].1 += inc;
        sums[b].2 += inc * inc;
    }
    let bound = c * epsilon * epsilon;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(b, &(count, s, s2))| {
            let (mean, se) = if count >= 2 {
                let mean = s / count as f64;
                let var = ((s2 - count as f64 * mean * mean) / (count - 1) as f64).max(0.0);
                (mean, (var / count as f64).sqrt())
            } else {
                (if count == 1 { s } else { 0.0 }, f64::INFINITY)
            };
            let pass = (count >= min_count).then_some(mean <= bound + 4.0 * se);
            DriftBin {
                lower: lo + b as f64 * width,
                upper: lo + (b + 1) as f64 * width,
                count,
                mean_increment: mean,
                std_error: se,
                pass,
            }
        })
        .collect();
    Ok(MartingaleReport { bins, bound, min_count })
}

/// Value function estimated by greedy-versus-greedy lattice play from every
/// interior node and marching slice; boundary entries are the payoff.
/// Also returns the largest standard error over the estimated entries.
pub fn monte_carlo_value<T: Real>(
    game: &Game<'_, T>,
    guide: &Arc<ValueFunction<T>>,
    runs: usize,
    seed: u64,
) -> Result<(ValueFunction<T>, T)> {
    if game.mode() != Mode::Lattice {
        return Err(Error::OffLattice);
    }
    let grid = Arc::clone(guide.grid_arc());
    let g = &*grid;
    let nodes = g.node_count();
    let first = g.first_marching_slice();
    let s1 = Strategy::Greedy { values: Arc::clone(guide) };
    let s2 = Strategy::Greedy { values: Arc::clone(guide) };
    let jobs: Vec<(usize, usize)> =
        (first..g.slice_count()).flat_map(|s| g.interior_nodes().map(move |node| (node, s))).collect();
    let estimates: Vec<(T, T)> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(node, s))| {
            let x = g.coords(node).to_vec();
            let t = g.slice_time(s);
            let mut samples = Vec::with_capacity(runs);
            for r in 0..runs {
                let stream = substream(seed, (j * runs + r) as u64);
                let (mut a, mut b) = (s1.clone(), s2.clone());
                let out = run_game(game, (&x, t), &mut a, &mut b, &StoppingRule::BoundaryExit, stream, false)?;
                samples.push(out.value);
            }
            let est = super::ValueEstimate::from_samples(&samples)?;
            Ok((est.mean, est.std_error))
        })
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(nodes * g.slice_count());
    for s in 0..g.slice_count() {
        let t = g.slice_time(s);
        for node in 0..nodes {
            values.push(game.payoff.eval(g.coords(node), t));
        }
    }
    let mut worst = T::zero();
    for (&(node, s), &(mean, se)) in jobs.iter().zip(&estimates) {
        values[s * nodes + node] = mean;
        worst = worst.max(se);
    }
    let v = ValueFunction::from_values(grid, values, Source::MonteCarlo)?.with_constant_p(guide.constant_p());
    Ok((v, worst))
}
