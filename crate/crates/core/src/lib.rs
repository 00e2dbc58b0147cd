//! Numerical lab for Nash equilibria of macroscopic market-making games.
//!
//! A group of market makers post ask/bid quote gaps against deterministic
//! order flows. The crate builds equilibria for three regimes:
//!
//! - the linear-intensity game, in closed form ([`linear_game`]);
//! - the general decreasing-intensity game, as a two-point boundary-value
//!   problem driven by the Isaacs fixed point ([`isaacs`], [`game_solver`]);
//! - the two-player heterogeneous-penalty linear game ([`hetero`]).
//!
//! [`riccati`] holds the matrix Riccati machinery used to certify
//! decoupling fields, and [`cli`] the file-level `run` / `check` / `sweep`
//! drivers behind the `mmg` binary.
//!
//! Agents are always indexed by ascending initial inventory.

pub mod cli;
pub mod error;
pub mod game_solver;
pub mod hetero;
pub mod intensity;
pub mod isaacs;
pub mod linear_game;
pub mod ode;
pub mod riccati;
pub mod scenario;

pub use error::{Error, Result};
pub use intensity::IntensityFunction;
pub use scenario::{load_scenario, CoefficientPath, MarketScenario, TimeGrid};
