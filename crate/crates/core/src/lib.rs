//! A framework for reinforcement-learning research on retro-console games.

pub mod abi;
pub mod agents;
pub mod bench;
pub mod config;
pub mod cores;
pub mod env;
pub mod error;
pub mod experiments;
pub mod expert;
pub mod harness;
pub mod wrappers;

pub use abi::{
    Button, ButtonMask, Core, CoreConfig, CoreInfo, CoreState, Frame, GameCore, StateVars,
};
pub use error::{Error, Result};
