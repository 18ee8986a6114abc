//! Mirror-descent dynamics for congestion games.
//!
//! [`game`] holds the model, [`bregman`] the per-player mirror step,
//! [`bulletin`] and [`bandit`] the two feedback models.

pub mod bandit;
pub mod bregman;
pub mod bulletin;
pub mod format;
pub mod game;
pub mod generate;
pub mod minimize;
pub mod poly;

pub use bregman::{BregmanError, Euclidean, FeasibleSet, GeometryKind, MirrorMap, NegativeEntropy};
pub use game::{
    CongestionGame, CostViolation, FlowProfile, GameError, PolynomialCost, SmoothnessParams,
};
pub use poly::Polynomial;
