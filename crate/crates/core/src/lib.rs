//! Energy-aware cell-free massive MIMO network simulator with multi-agent
//! reinforcement learning control of AP antennas and sleep modes.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod mappo;
pub mod metrics;
pub mod nn;
pub mod phy;
pub mod power;
pub mod traffic;

pub use config::{ScenarioConfig, SimRng};
pub use error::{ConfigError, PhyError, PowerError};
