//! Trajectory-level simulation of the game and Monte Carlo value estimates.
//!
//! Continuum games move the token to arbitrary points and draw random moves
//! uniformly from the ε-ball. Lattice games keep the token on grid nodes,
//! snap strategy moves to the nearest stencil offset and draw random moves
//! uniformly over the stencil, so their expected payoff is exactly the
//! discrete DPP value.

mod diagnostics;
mod strategy;

pub use diagnostics::{monte_carlo_value, supermartingale_diagnostic, DriftBin, MartingaleReport};
pub use strategy::{
    cancellation_strategy, fractional_pull_strategy, greedy_dpp_strategy, move_cap, pull_toward_strategy, Strategy,
};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dpp::ValueFunction;
use crate::error::{Error, Result};
use crate::fields::{eval_probabilities, PExponentField};
use crate::grid::{SpaceTimeGrid, StencilTable};
use crate::num::{norm, Real};
use crate::payoff::Payoff;
use crate::rng::{substream, uniform_in_ball, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mover {
    PlayerI,
    PlayerII,
    Random,
}

impl Mover {
    pub fn as_str(self) -> &'static str {
        match self {
            Mover::PlayerI => "I",
            Mover::PlayerII => "II",
            Mover::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Maximizer,
    Minimizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Move<T> {
    pub mover: Mover,
    pub vector: Vec<T>,
}

/// Token position, time, step count, move history and random stream.
#[derive(Debug, Clone)]
pub struct GameState<T> {
    x: Vec<T>,
    t0: T,
    k: usize,
    history: Vec<Move<T>>,
    lattice: Option<(usize, usize)>,
    random_sum: Vec<T>,
    /// Coin tosses won by Player I minus those won by Player II.
    coin_lead: i64,
    rng: StreamRng,
}

impl<T: Real> GameState<T> {
    pub fn x(&self) -> &[T] {
        &self.x
    }
    pub fn steps(&self) -> usize {
        self.k
    }
    pub fn start_time(&self) -> T {
        self.t0
    }
    pub fn history(&self) -> &[Move<T>] {
        &self.history
    }
    /// Node and slice of a lattice game.
    pub fn lattice_position(&self) -> Option<(usize, usize)> {
        self.lattice
    }
    pub fn random_sum(&self) -> &[T] {
        &self.random_sum
    }
    pub fn coin_lead(&self) -> i64 {
        self.coin_lead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Continuum,
    Lattice,
}

/// Immutable game data: geometry, fields, payoff and mode.
pub struct Game<'a, T: Real> {
    grid: &'a SpaceTimeGrid<T>,
    field: &'a dyn PExponentField<T>,
    payoff: &'a dyn Payoff<T>,
    mode: Mode,
    table: Option<StencilTable>,
    continuation: Option<&'a ValueFunction<T>>,
}

impl<'a, T: Real> Game<'a, T> {
    /// A continuum game on the grid's domain and ε.
    pub fn continuum(grid: &'a SpaceTimeGrid<T>, field: &'a dyn PExponentField<T>, payoff: &'a dyn Payoff<T>) -> Self {
        Self { grid, field, payoff, mode: Mode::Continuum, table: None, continuation: None }
    }

    /// A game constrained to the grid's nodes and slices.
    pub fn lattice(
        grid: &'a SpaceTimeGrid<T>,
        field: &'a dyn PExponentField<T>,
        payoff: &'a dyn Payoff<T>,
    ) -> Result<Self> {
        let table = grid.stencil_table()?;
        Ok(Self { grid, field, payoff, mode: Mode::Lattice, table: Some(table), continuation: None })
    }

    /// Value paid when a stopping rule fires before Γ^ε_T is reached
    /// (lattice games only); without it the payoff is evaluated at the stop.
    pub fn with_continuation(mut self, v: &'a ValueFunction<T>) -> Self {
        self.continuation = Some(v);
        self
    }

    pub fn grid(&self) -> &SpaceTimeGrid<T> {
        self.grid
    }
    pub fn epsilon(&self) -> T {
        self.grid.epsilon()
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub(crate) fn stencil_members(&self, node: usize) -> Result<&[u32]> {
        let table = self.table.as_ref().ok_or(Error::OffLattice)?;
        table.members(node).ok_or(Error::OffLattice)
    }

    fn half_step(&self) -> T {
        self.grid.epsilon() * self.grid.epsilon() / T::lit(2.0)
    }

    /// Token time after `k` rounds from `t0`.
    fn time(&self, state: &GameState<T>) -> T {
        match state.lattice {
            Some((_, s)) => self.grid.slice_time(s),
            None => state.t0 - T::from_count(state.k) * self.half_step(),
        }
    }

    /// Initial state at `(x0, t0)`; lattice games snap to the nearest node
    /// and slice.
    pub fn start(&self, x0: &[T], t0: T, rng: StreamRng) -> Result<GameState<T>> {
        let n = self.grid.dim();
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
        }
        let (x, t0, lattice) = match self.mode {
            Mode::Continuum => {
                if !self.grid.domain().contains(x0) || !(t0 > T::zero()) {
                    return Err(Error::StartOutsideCylinder);
                }
                (x0.to_vec(), t0, None)
            }
            Mode::Lattice => {
                let node = self.grid.nearest_node(x0).ok_or(Error::StartOutsideCylinder)?;
                let slice = self.grid.nearest_slice(t0);
                if !self.grid.is_interior(node) || slice < self.grid.first_marching_slice() {
                    return Err(Error::StartOutsideCylinder);
                }
                (self.grid.coords(node).to_vec(), self.grid.slice_time(slice), Some((node, slice)))
            }
        };
        Ok(GameState { x, t0, k: 0, history: Vec::new(), lattice, random_sum: vec![T::zero(); n], coin_lead: 0, rng })
    }

    /// Whether the token lies in Γ^ε_T.
    pub fn in_boundary_strip(&self, state: &GameState<T>) -> bool {
        match state.lattice {
            Some((node, slice)) => self.grid.on_boundary_strip(node, slice),
            None => {
                let t = self.time(state);
                !self.grid.domain().contains(&state.x) || t <= self.half_step() * T::lit(1e-9)
            }
        }
    }

    /// Maximum number of rounds from `t0`: `2ε⁻²t₀ + 1`.
    pub fn step_bound(&self, t0: T) -> usize {
        ((t0 / self.half_step()).as_f64() + 1e-9).floor() as usize + 1
    }

    /// One round: α picks a coin round, the coin picks the mover; otherwise
    /// the move is random. Time drops by ε²/2.
    pub fn play_round(
        &self,
        state: &mut GameState<T>,
        strat_i: &mut Strategy<T>,
        strat_ii: &mut Strategy<T>,
    ) -> Result<Mover> {
        let t = self.time(state);
        let alpha = eval_probabilities(self.field, &state.x, t, self.grid.dim())?.alpha;
        let u: f64 = state.rng.random();
        let mover = if u < alpha.as_f64() / 2.0 {
            Mover::PlayerI
        } else if u < alpha.as_f64() {
            Mover::PlayerII
        } else {
            Mover::Random
        };
        let cap = move_cap(self.epsilon());
        let proposal = match mover {
            Mover::PlayerI => Some(strat_i.decide(self, state, Role::Maximizer)?),
            Mover::PlayerII => Some(strat_ii.decide(self, state, Role::Minimizer)?),
            Mover::Random => None,
        };
        if let Some(v) = &proposal {
            let len = norm(v);
            if !(len <= cap * T::lit(1.0 + 1e-14)) {
                return Err(Error::MoveTooLong { length: len.as_f64(), cap: cap.as_f64() });
            }
        }
        let vector = match state.lattice {
            Some((node, slice)) => {
                let members = self.stencil_members(node)?;
                let j = match &proposal {
                    Some(v) => self.nearest_offset(v),
                    None => state.rng.random_range(0..members.len()),
                };
                let next = members[j] as usize;
                let vector: Vec<T> =
                    self.grid.coords(next).iter().zip(self.grid.coords(node)).map(|(&a, &b)| a - b).collect();
                state.x = self.grid.coords(next).to_vec();
                state.lattice = Some((next, slice - 1));
                vector
            }
            None => {
                let v = match proposal {
                    Some(v) => v,
                    None => uniform_in_ball(&mut state.rng, self.grid.dim(), cap),
                };
                for (xi, &vi) in state.x.iter_mut().zip(&v) {
                    *xi = *xi + vi;
                }
                v
            }
        };
        match mover {
            Mover::PlayerI => state.coin_lead += 1,
            Mover::PlayerII => state.coin_lead -= 1,
            Mover::Random => {
                for (s, &v) in state.random_sum.iter_mut().zip(&vector) {
                    *s = *s + v;
                }
            }
        }
        state.k += 1;
        state.history.push(Move { mover, vector });
        Ok(mover)
    }

    /// Index of the stencil offset nearest to `v`, ties to the lowest index.
    fn nearest_offset(&self, v: &[T]) -> usize {
        let h = self.grid.h();
        let mut best = (0, T::infinity());
        for (j, off) in self.grid.stencil_offsets().enumerate() {
            let d: T = off.iter().zip(v).map(|(&o, &c)| (h * T::lit(o as f64) - c).powi(2)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule<T> {
    /// First entry into Γ^ε_T.
    BoundaryExit,
    /// Truncation used with cancellation strategies: the canceller wins
    /// `canceller_lead` more coin tosses, the opponent wins `opponent_lead`
    /// more, the random moves sum to length above `radius`, or the time
    /// budget runs out.
    LipschitzFour { canceller: Role, canceller_lead: u32, opponent_lead: u32, radius: T },
    /// Exit from the closed cylinder `|x - center| < radius`, `t > t_bottom`.
    CylinderExit { center: Vec<T>, radius: T, t_bottom: T },
    /// First time at or below `t_level`.
    LevelHit { t_level: T },
}

impl<T: Real> StoppingRule<T> {
    /// The truncation rule for a canceller pulling from `x` toward `z` inside
    /// a ball of radius `r`.
    pub fn lipschitz_four(canceller: Role, x: &[T], z: &[T], r: T, epsilon: T) -> Self {
        let lead = |d: T| (d / epsilon).ceil().as_f64().max(1.0) as u32;
        StoppingRule::LipschitzFour {
            canceller,
            canceller_lead: lead(crate::num::distance(x, z)),
            opponent_lead: lead(r),
            radius: r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Token left Ω.
    SpatialExit,
    /// Time reached t ≤ 0.
    TimeExhausted,
    CancellerLead,
    OpponentLead,
    RandomDrift,
    CylinderExit,
    LevelHit,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::SpatialExit => "spatial-exit",
            StopReason::TimeExhausted => "time-exhausted",
            StopReason::CancellerLead => "canceller-lead",
            StopReason::OpponentLead => "opponent-lead",
            StopReason::RandomDrift => "random-drift",
            StopReason::CylinderExit => "cylinder-exit",
            StopReason::LevelHit => "level-hit",
        }
    }

    /// Whether the stop is the entry into Γ^ε_T.
    pub fn is_boundary(self) -> bool {
        matches!(self, StopReason::SpatialExit | StopReason::TimeExhausted)
    }
}

/// One state of a recorded trajectory and the move that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub k: usize,
    pub x: Vec<T>,
    pub t: T,
    pub mover: Option<Mover>,
    pub vector: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct GameOutcome<T> {
    pub value: T,
    pub reason: StopReason,
    pub steps: usize,
    pub final_x: Vec<T>,
    pub final_t: T,
    pub trajectory: Option<Vec<TrajectoryPoint<T>>>,
}

fn stop_reason<T: Real>(game: &Game<'_, T>, state: &GameState<T>, rule: &StoppingRule<T>) -> Option<StopReason> {
    if game.in_boundary_strip(state) {
        let spatial = match state.lattice {
            Some((node, _)) => !game.grid.is_interior(node),
            None => !game.grid.domain().contains(&state.x),
        };
        return Some(match (spatial, rule) {
            (true, _) => StopReason::SpatialExit,
            (false, StoppingRule::LipschitzFour { .. }) => StopReason::TimeExhausted,
            (false, _) => StopReason::TimeExhausted,
        });
    }
    let t = game.time(state);
    match rule {
        StoppingRule::BoundaryExit => None,
        StoppingRule::LipschitzFour { canceller, canceller_lead, opponent_lead, radius } => {
            let lead = match canceller {
                Role::Maximizer => state.coin_lead,
                Role::Minimizer => -state.coin_lead,
            };
            if lead >= *canceller_lead as i64 {
                Some(StopReason::CancellerLead)
            } else if -lead >= *opponent_lead as i64 {
                Some(StopReason::OpponentLead)
            } else if norm(&state.random_sum) > *radius {
                Some(StopReason::RandomDrift)
            } else {
                None
            }
        }
        StoppingRule::CylinderExit { center, radius, t_bottom } => {
            let out = crate::num::distance(&state.x, center) >= *radius || t <= *t_bottom;
            out.then_some(StopReason::CylinderExit)
        }
        StoppingRule::LevelHit { t_level } => (t <= *t_level).then_some(StopReason::LevelHit),
    }
}

/// Plays rounds until Γ^ε_T is entered or the stopping rule fires.
#[allow(clippy::too_many_arguments)]
pub fn run_game<T: Real>(
    game: &Game<'_, T>,
    start: (&[T], T),
    strat_i: &mut Strategy<T>,
    strat_ii: &mut Strategy<T>,
    stopping: &StoppingRule<T>,
    rng: StreamRng,
    record: bool,
) -> Result<GameOutcome<T>> {
    let mut state = game.start(start.0, start.1, rng)?;
    let bound = game.step_bound(state.t0);
    let mut trajectory =
        record.then(|| vec![TrajectoryPoint { k: 0, x: state.x.clone(), t: state.t0, mover: None, vector: None }]);
    let reason = loop {
        if let Some(r) = stop_reason(game, &state, stopping) {
            break r;
        }
        if state.k >= bound {
            return Err(Error::StepBoundOverflow { bound });
        }
        let mover = game.play_round(&mut state, strat_i, strat_ii)?;
        if let Some(tr) = trajectory.as_mut() {
            let last = state.history.last().expect("round appended a move");
            tr.push(TrajectoryPoint {
                k: state.k,
                x: state.x.clone(),
                t: game.time(&state),
                mover: Some(mover),
                vector: Some(last.vector.clone()),
            });
        }
    };
    let t = game.time(&state);
    let value = match (reason.is_boundary(), game.continuation, state.lattice) {
        (false, Some(v), Some((node, slice))) => v.get(node, slice),
        _ => game.payoff.eval(&state.x, t),
    };
    if !value.is_finite() {
        return Err(Error::NonFinitePayoff { x: state.x.iter().map(|c| c.as_f64()).collect(), t: t.as_f64() });
    }
    Ok(GameOutcome { value, reason, steps: state.k, final_x: state.x, final_t: t, trajectory })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub runs: usize,
}

impl<T: Real> ValueEstimate<T> {
    /// Sample mean and `std/√N` (unbiased variance) of realizations.
    pub fn from_samples(samples: &[T]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::EmptySample("a value estimate needs at least two runs".into()));
        }
        let mean = samples.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self { mean: T::lit(mean), std_error: T::lit((var / n as f64).sqrt()), runs: n })
    }
}

/// Realizations of `runs` independent games; run `i` uses substream `i` of
/// `seed`, and results are returned in run order.
pub fn sample_values<T: Real>(
    game: &Game<'_, T>,
    start: (&[T], T),
    strat_i: &Strategy<T>,
    strat_ii: &Strategy<T>,
    stopping: &StoppingRule<T>,
    runs: usize,
    seed: u64,
) -> Result<Vec<T>> {
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut s1 = strat_i.clone();
            let mut s2 = strat_ii.clone();
            run_game(game, start, &mut s1, &mut s2, stopping, substream(seed, i as u64), false).map(|o| o.value)
        })
        .collect()
}

/// Monte Carlo estimate of the expected payoff under the given strategies.
pub fn estimate_value<T: Real>(
    game: &Game<'_, T>,
    start: (&[T], T),
    strat_i: &Strategy<T>,
    strat_ii: &Strategy<T>,
    stopping: &StoppingRule<T>,
    runs: usize,
    seed: u64,
) -> Result<ValueEstimate<T>> {
    if runs < 2 {
        return Err(Error::InvalidParameter("estimate_value needs N >= 2".into()));
    }
    let samples = sample_values(game, start, strat_i, strat_ii, stopping, runs, seed)?;
    ValueEstimate::from_samples(&samples)
}
