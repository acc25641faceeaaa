//! Numerical laboratory for time-dependent tug-of-war games with varying
//! probabilities.
//!
//! The value function of the game is computed by marching the parabolic
//! dynamic programming principle on a lattice ([`dpp`]), cross-checked by
//! Monte Carlo play ([`game`]) and by an independent finite-difference
//! solver of the normalized p(x,t)-parabolic equation ([`oracle`]).
//! [`probes`], [`barriers`] and [`bounds`] measure the regularity estimates,
//! comparison-function inequalities and concentration bounds that the
//! theory asserts about these games.
//!
//! All numerical types are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix `f64`.

// `!(a > b)` rejects NaN along with the failed comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod bounds;
pub mod dpp;
pub mod error;
pub mod fields;
pub mod game;
pub mod grid;
pub mod num;
pub mod oracle;
pub mod payoff;
pub mod probes;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use num::Real;

pub type Domain = grid::DomainSpec<f64>;
pub type Grid = grid::SpaceTimeGrid<f64>;
pub type Values = dpp::ValueFunction<f64>;
pub type Probabilities = fields::ProbabilityPair<f64>;
pub type Cylinder = probes::CylinderSpec<f64>;
pub type Report = probes::RegularityReport<f64>;
