//! Safe reinforcement learning for power-grid topology reconfiguration.
//!
//! The crate is organized around four subsystems:
//!
//! * grid physics: [`case`], [`topology`], [`graph`], [`powerflow`], [`limits`]
//! * episodic environment: [`chronics`], [`env`]
//! * replay refinement: [`replay`], [`prompt`], [`advisor`], [`refine`]
//! * learning and evaluation: [`nn`], [`feature`], [`actions`], [`learner`],
//!   [`trainer`], [`metrics`]

pub mod actions;
pub mod advisor;
pub mod case;
pub mod chronics;
pub mod env;
pub mod error;
pub mod feature;
pub mod fixtures;
pub mod graph;
pub mod learner;
pub mod limits;
pub mod metrics;
pub mod nn;
pub mod powerflow;
pub mod prompt;
pub mod refine;
pub mod replay;
pub mod topology;
pub mod trainer;

pub use error::CoreError;
