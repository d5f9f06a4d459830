//! Shared fixtures for the benchmarks.

use forkgame_core::GameParams;

/// Three miners, six rounds, timelock three, deposit by the strongest.
pub fn reference_params() -> GameParams {
    GameParams::new(vec![0.5, 0.3, 0.2], 6, 3)
        .expect("valid powers")
        .with_premiums(10_000, 120_000)
        .with_deposit(0, 350_000_000)
}
