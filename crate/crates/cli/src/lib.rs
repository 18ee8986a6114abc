//! Experiment harness for the congestion dynamics.

pub mod experiment;

pub use experiment::{
    run_experiment, Algorithm, ExperimentSpec, GameSource, Outcome, SocialCost, Target,
};
