use std::sync::Arc;

use crate::dpp::ValueFunction;
use crate::error::{Error, Result};
use crate::num::{distance, norm, Real};

use super::{Game, GameState, Mover, Role};

/// A player's decision rule. Strategies with bookkeeping (cancellation) are
/// cloned fresh for every trajectory.
#[derive(Debug, Clone)]
pub enum Strategy<T: Real> {
    /// Always the zero vector.
    Zero,
    /// Pull toward `target`. With `stay` the player lands on the target when
    /// it is within reach and then stays; without it every step has full
    /// length unless the token sits exactly on the target.
    PullToward { target: Vec<T>, stay: bool },
    /// Steps of fixed length toward `target`, landing on it when in reach.
    FractionalPull { target: Vec<T>, step: T },
    /// Full-length steps directly away from `origin`.
    PushAway { origin: Vec<T> },
    /// Negate the earliest uncanceled opponent coin move, otherwise pull in
    /// the fixed direction `target - start` (or `target - x` with
    /// `use_current`).
    Cancellation { target: Vec<T>, start: Vec<T>, use_current: bool, canceled: usize, cursor: usize },
    /// Move to the stencil member optimizing the next-slice value.
    Greedy { values: Arc<ValueFunction<T>> },
}

/// Returns move `min(cap, |z - x|)` toward `z` (or full cap without `stay`).
pub fn pull_toward_strategy<T: Real>(target: Vec<T>, stay_if_possible: bool) -> Strategy<T> {
    Strategy::PullToward { target, stay: stay_if_possible }
}

/// Moves `|x₀ - y|/a` toward `y` per won coin toss.
pub fn fractional_pull_strategy<T: Real>(x0: &[T], target: Vec<T>, a: usize, epsilon: T) -> Result<Strategy<T>> {
    if a == 0 {
        return Err(Error::InvalidParameter("a must be at least 1".into()));
    }
    let step = distance(x0, &target) / T::from_count(a);
    let cap = move_cap(epsilon);
    if step > cap {
        return Err(Error::Precondition(format!("step |x0 - y|/a = {step} exceeds the reach {cap} of one move")));
    }
    Ok(Strategy::FractionalPull { target, step })
}

pub fn cancellation_strategy<T: Real>(target: Vec<T>, x0: Vec<T>) -> Strategy<T> {
    Strategy::Cancellation { target, start: x0, use_current: false, canceled: 0, cursor: 0 }
}

pub fn greedy_dpp_strategy<T: Real>(values: Arc<ValueFunction<T>>) -> Strategy<T> {
    Strategy::Greedy { values }
}

/// Longest admissible move, `ε(1 - 10⁻¹²)`.
pub fn move_cap<T: Real>(epsilon: T) -> T {
    epsilon * T::lit(1.0 - crate::grid::STENCIL_SHAVE)
}

fn toward<T: Real>(from: &[T], to: &[T], len: T) -> Vec<T> {
    let d: Vec<T> = to.iter().zip(from).map(|(&a, &b)| a - b).collect();
    let l = norm(&d);
    if l == T::zero() {
        return vec![T::zero(); from.len()];
    }
    d.into_iter().map(|c| c / l * len).collect()
}

impl<T: Real> Strategy<T> {
    /// Move vector for the player with `role` at `state`.
    pub fn decide(&mut self, game: &Game<'_, T>, state: &GameState<T>, role: Role) -> Result<Vec<T>> {
        let cap = move_cap(game.epsilon());
        let x = state.x();
        let n = x.len();
        match self {
            Strategy::Zero => Ok(vec![T::zero(); n]),
            Strategy::PullToward { target, stay } => {
                let d = distance(x, target);
                if *stay && d <= cap {
                    Ok(target.iter().zip(x).map(|(&a, &b)| a - b).collect())
                } else if *stay {
                    Ok(toward(x, target, cap))
                } else {
                    Ok(toward(x, target, if d == T::zero() { T::zero() } else { cap }))
                }
            }
            Strategy::FractionalPull { target, step } => {
                let d = distance(x, target);
                if d <= *step {
                    Ok(target.iter().zip(x).map(|(&a, &b)| a - b).collect())
                } else {
                    Ok(toward(x, target, *step))
                }
            }
            Strategy::PushAway { origin } => {
                let mut v = toward(origin, x, cap);
                if v.iter().all(|&c| c == T::zero()) {
                    v[0] = cap;
                }
                Ok(v)
            }
            Strategy::Cancellation { target, start, use_current, canceled, cursor } => {
                let opponent = role.opponent().mover();
                let history = state.history();
                if let Some(j) = (*cursor..history.len()).find(|&j| history[j].mover == opponent) {
                    *cursor = j + 1;
                    *canceled += 1;
                    return Ok(history[j].vector.iter().map(|&c| -c).collect());
                }
                *cursor = history.len();
                let from: &[T] = if *use_current { x } else { start };
                Ok(toward(from, target, cap))
            }
            Strategy::Greedy { values } => {
                let (node, slice) = state.lattice_position().ok_or(Error::OffLattice)?;
                let grid = game.grid();
                if values.grid().node_count() != grid.node_count() || values.grid().slice_count() != grid.slice_count()
                {
                    return Err(Error::Precondition("greedy value function is on a different grid".into()));
                }
                let members = game.stencil_members(node)?;
                let prev = values.slice(slice - 1);
                let mut best = members[0] as usize;
                for &m in &members[1..] {
                    let m = m as usize;
                    let better = match role {
                        Role::Maximizer => prev[m] > prev[best],
                        Role::Minimizer => prev[m] < prev[best],
                    };
                    if better {
                        best = m;
                    }
                }
                Ok(grid.coords(best).iter().zip(grid.coords(node)).map(|(&a, &b)| a - b).collect())
            }
        }
    }

    /// Number of opponent moves canceled so far (cancellation strategies).
    pub fn canceled(&self) -> usize {
        match self {
            Strategy::Cancellation { canceled, .. } => *canceled,
            _ => 0,
        }
    }
}

impl Role {
    pub fn opponent(self) -> Role {
        match self {
            Role::Maximizer => Role::Minimizer,
            Role::Minimizer => Role::Maximizer,
        }
    }

    /// Player I maximizes, Player II minimizes.
    pub fn mover(self) -> Mover {
        match self {
            Role::Maximizer => Mover::PlayerI,
            Role::Minimizer => Mover::PlayerII,
        }
    }
}
