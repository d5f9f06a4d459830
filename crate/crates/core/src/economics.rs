//! Reward model, settlement of a finished game and checks on the
//! mining-power distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game_core::{longest_chain, GlobalState, TxSetKind};

/// Integer satoshi. All money in the crate is kept in this unit.
pub type Sat = i64;

pub const SAT_PER_BTC: Sat = 100_000_000;

/// Scalar inputs of one game instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Mining-power fractions, one per player.
    pub powers: Vec<f64>,
    pub rounds: u32,
    pub timelock: u32,
    pub base_reward: Sat,
    pub txs_per_block: i64,
    pub avg_tx_fee: Sat,
    /// Block fee total of a block carrying the revocation transaction.
    pub revocation_fee: Sat,
    /// Block fee total of a block carrying the bribing transaction.
    pub bribe_fee: Sat,
    pub deposit_slots: i64,
    pub reclaim_slots: i64,
    /// Per-slot fee of the deposit set. `None` means `revocation_fee - block_fee`.
    pub deposit_slot_fee: Option<Sat>,
    /// Per-slot fee of the reclaim set. `None` means `avg_tx_fee`.
    pub reclaim_slot_fee: Option<Sat>,
    pub penalty: Sat,
    /// Player that created the deposit set before round 1, if any.
    pub depositor: Option<usize>,
    pub strict_distribution: bool,
}

impl GameParams {
    /// Builds parameters with 2022-like fee defaults. Powers are normalized unless
    /// they already sum to one up to rounding.
    pub fn new(powers: Vec<f64>, rounds: u32, timelock: u32) -> Result<Self> {
        let powers = normalize_powers(&powers)?;
        if timelock >= rounds {
            return Err(Error::InvalidParams(format!(
                "timelock {timelock} must be shorter than the game ({rounds} rounds)"
            )));
        }
        let m = 1500;
        let fbar = 10_000;
        Ok(GameParams {
            powers,
            rounds,
            timelock,
            base_reward: 625_000_000,
            txs_per_block: m,
            avg_tx_fee: fbar,
            revocation_fee: m * fbar + fbar,
            bribe_fee: m * fbar + fbar,
            deposit_slots: 1,
            reclaim_slots: 1,
            deposit_slot_fee: None,
            reclaim_slot_fee: None,
            penalty: 0,
            depositor: None,
            strict_distribution: false,
        })
    }

    pub fn with_fees(mut self, base_reward: Sat, txs_per_block: i64, avg_tx_fee: Sat) -> Self {
        self.base_reward = base_reward;
        self.txs_per_block = txs_per_block;
        self.avg_tx_fee = avg_tx_fee;
        self
    }

    /// Sets the revocation and bribe block fees as premiums over the average block fee.
    pub fn with_premiums(mut self, revocation_premium: Sat, bribe_premium: Sat) -> Self {
        self.revocation_fee = self.block_fee() + revocation_premium;
        self.bribe_fee = self.block_fee() + bribe_premium;
        self
    }

    pub fn with_deposit(mut self, depositor: usize, penalty: Sat) -> Self {
        self.depositor = Some(depositor);
        self.penalty = penalty;
        self
    }

    pub fn with_slot_fees(mut self, deposit_slot_fee: Sat, reclaim_slot_fee: Sat) -> Self {
        self.deposit_slot_fee = Some(deposit_slot_fee);
        self.reclaim_slot_fee = Some(reclaim_slot_fee);
        self
    }

    pub fn n(&self) -> usize {
        self.powers.len()
    }

    /// Fee total of an average block.
    pub fn block_fee(&self) -> Sat {
        self.txs_per_block * self.avg_tx_fee
    }

    pub fn revocation_premium(&self) -> Sat {
        self.revocation_fee - self.block_fee()
    }

    pub fn bribe_premium(&self) -> Sat {
        self.bribe_fee - self.block_fee()
    }

    pub fn deposit_slot_fee(&self) -> Sat {
        self.deposit_slot_fee.unwrap_or(self.revocation_fee - self.block_fee())
    }

    pub fn reclaim_slot_fee(&self) -> Sat {
        self.reclaim_slot_fee.unwrap_or(self.avg_tx_fee)
    }

    pub fn deposit_block_fee(&self) -> Sat {
        (self.txs_per_block - self.deposit_slots) * self.avg_tx_fee
            + self.deposit_slots * self.deposit_slot_fee()
    }

    pub fn reclaim_block_fee(&self) -> Sat {
        (self.txs_per_block - self.reclaim_slots) * self.avg_tx_fee
            + self.reclaim_slots * self.reclaim_slot_fee()
    }

    pub fn deposit_created(&self) -> bool {
        self.depositor.is_some()
    }

    /// Index of the player with the largest power (lowest index on ties).
    pub fn strongest(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.powers.iter().enumerate() {
            if p > self.powers[best] {
                best = i;
            }
        }
        best
    }

    pub fn weakest_power(&self) -> f64 {
        self.powers.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn normalize_powers(powers: &[f64]) -> Result<Vec<f64>> {
    if powers.is_empty() {
        return Err(Error::InvalidParams("at least one player is required".into()));
    }
    if powers.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::InvalidParams("all powers must be positive".into()));
    }
    let total: f64 = powers.iter().sum();
    // already normalized up to rounding: keep the caller's decimals
    if (total - 1.0).abs() <= 1e-12 {
        return Ok(powers.to_vec());
    }
    Ok(powers.iter().map(|p| p / total).collect())
}

/// Miner-side reward of a block of the given kind.
pub fn reward_of(kind: TxSetKind, params: &GameParams) -> Sat {
    let fee = match kind {
        TxSetKind::Unrelated => params.block_fee(),
        TxSetKind::Txs1 => params.revocation_fee,
        TxSetKind::Txs2 => params.bribe_fee,
        TxSetKind::TxsP1 => params.deposit_block_fee(),
        TxSetKind::TxsP2 => params.reclaim_block_fee(),
    };
    params.base_reward + fee
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepositState {
    NotPosted,
    LockedLost,
    Reclaimed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub per_player_reward: Vec<Sat>,
    pub winning_chain_id: u32,
    pub deposit_state: DepositState,
}

/// Pays out the winning chain of a finished game and settles the deposit.
pub fn settle(state: &GlobalState, params: &GameParams) -> Result<SettlementReport> {
    if state.round <= params.rounds {
        return Err(Error::GameNotOver {
            round: state.round,
            rounds: params.rounds,
        });
    }
    Ok(settle_chain_of(state, params))
}

/// Settlement without the game-over check; used by the oracle on terminal nodes.
pub(crate) fn settle_chain_of(state: &GlobalState, params: &GameParams) -> SettlementReport {
    let chain = longest_chain(state);
    let mut rewards = vec![0; params.n()];
    let mut has_p1 = false;
    let mut has_p2 = false;
    for b in &chain.blocks {
        rewards[b.winner] += reward_of(b.txset, params);
        has_p1 |= b.txset == TxSetKind::TxsP1;
        has_p2 |= b.txset == TxSetKind::TxsP2;
    }
    let deposit_state = match (has_p1, has_p2) {
        (false, _) => DepositState::NotPosted,
        (true, true) => DepositState::Reclaimed,
        (true, false) => DepositState::LockedLost,
    };
    if deposit_state == DepositState::LockedLost {
        if let Some(d) = params.depositor {
            rewards[d] -= params.penalty;
        }
    }
    SettlementReport {
        per_player_reward: rewards,
        winning_chain_id: chain.chain_id,
        deposit_state,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

/// Lists every broken invariant. Distribution assumptions are warnings
/// unless `strict_distribution` is set.
pub fn validate_params(params: &GameParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut err = |m: &str| {
        out.push(Violation {
            severity: Severity::Error,
            message: m.to_string(),
        })
    };
    let p = &params.powers;
    if p.is_empty() {
        err("at least one player is required");
        return out;
    }
    if p.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        err("all powers must be positive");
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        err("powers must sum to 1");
    }
    if params.timelock >= params.rounds {
        err("timelock must be shorter than the game");
    }
    if params.base_reward < 0 || params.avg_tx_fee < 0 || params.penalty < 0 {
        err("money amounts must be non-negative");
    }
    if params.revocation_fee < 0 || params.bribe_fee < 0 {
        err("money amounts must be non-negative");
    }
    if params.deposit_slots < 0
        || params.reclaim_slots < 0
        || params.deposit_slots > params.txs_per_block
        || params.reclaim_slots > params.txs_per_block
    {
        err("special slot counts must lie within the block size");
    }
    if let Some(d) = params.depositor {
        if d >= p.len() {
            err("depositor index out of range");
        }
    }

    let sev = if params.strict_distribution {
        Severity::Error
    } else {
        Severity::Warning
    };
    let mut assume = |m: &str| {
        out.push(Violation {
            severity: sev,
            message: m.to_string(),
        })
    };
    let max = p.iter().cloned().fold(f64::MIN, f64::max);
    if max < 0.20 {
        assume("strongest power must be at least 20%");
    }
    if p.iter().filter(|&&x| x == max).count() > 1 {
        assume("strongest miner must be unique");
    }
    if !p.iter().any(|&x| x > 0.01 && x < 0.02) {
        assume("some player must hold between 1% and 2%");
    }
    let small: f64 = p.iter().filter(|&&x| x < 0.01).sum();
    if small > 0.05 {
        assume("players under 1% must hold at most 5% together");
    }
    if p.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-100 {
        assume("weakest power must exceed 1e-100");
    }
    if (params.avg_tx_fee as f64) >= 1e-4 * params.base_reward as f64 {
        out.push(Violation {
            severity: Severity::Warning,
            message: "average transaction fee should stay below 1e-4 of the base reward".into(),
        });
    }
    out
}
