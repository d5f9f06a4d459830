//! A conditionally timelocked payment game between miners, with forks.
//!
//! Miners race for blocks; each block carries one kind of transaction set.
//! The modules cover the state model, rewards and settlement, strategies,
//! Monte Carlo play, an exact enumerating oracle, attack-cost bounds,
//! ingestion of fee and pool-share data, and the transaction template graph.

pub mod attack_economics;
pub mod economics;
pub mod empirics;
pub mod error;
pub mod game_core;
pub mod oracle;
pub mod sim_engine;
pub mod strategies;
pub mod tx_graph;

pub use economics::{settle, validate_params, DepositState, GameParams, Sat, SettlementReport, SAT_PER_BTC};
pub use error::{Error, Result};
pub use game_core::{Action, Block, Chain, Decision, GlobalState, TxSetKind};
pub use oracle::{Oracle, StrategySpace, EPSILON};
pub use strategies::{BuiltinStrategy, Strategy, StrategyProfile, StrategyRef};
