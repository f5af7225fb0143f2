//! Reward-model-free policy optimization from pairwise trajectory preferences.
//!
//! The optimizers ([`optimizer::zpg_run`], [`optimizer::zbcpg_run`]) perturb the
//! policy parameters along a random direction, compare trajectories from the
//! current and perturbed policies through a simulated preference oracle, turn
//! the preference frequencies into a value-difference estimate through the
//! inverse link, and take a zeroth-order gradient ascent step.
//!
//! [`diagnostics`] checks the estimators against exact value oracles on small
//! finite MDPs.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod optimizer;
pub mod perturb;
pub mod policy;
pub mod preference;
pub mod rng;

pub use env::{EnvModel, Reward, Trajectory};
pub use error::{Error, Result};
pub use optimizer::{HyperParams, OptResult};
pub use policy::{ParamVector, PolicyModel};
pub use preference::LinkFunction;
pub use rng::{RngStream, StreamId};
