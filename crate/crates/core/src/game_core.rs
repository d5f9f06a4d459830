//! Game state values and the legal-move rules.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::economics::{reward_of, GameParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxSetKind {
    Unrelated,
    Txs1,
    Txs2,
    TxsP1,
    TxsP2,
}

impl TxSetKind {
    pub const ALL: [TxSetKind; 5] = [
        TxSetKind::Unrelated,
        TxSetKind::Txs1,
        TxSetKind::Txs2,
        TxSetKind::TxsP1,
        TxSetKind::TxsP2,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub txset: TxSetKind,
    pub winner: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chain {
    pub blocks: Vec<Block>,
    pub created_round: u32,
    pub chain_id: u32,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn last_kind(&self) -> Option<TxSetKind> {
        self.blocks.last().map(|b| b.txset)
    }

    pub fn contains(&self, kind: TxSetKind) -> bool {
        self.blocks.iter().any(|b| b.txset == kind)
    }

    /// True once the shared output was spent by either the revocation or the bribe.
    pub fn output_spent(&self) -> bool {
        self.contains(TxSetKind::Txs1) || self.contains(TxSetKind::Txs2)
    }

    /// Deposit posted and not yet reclaimed on this chain.
    pub fn deposit_locked(&self) -> bool {
        self.contains(TxSetKind::TxsP1) && !self.contains(TxSetKind::TxsP2)
    }

    /// Sum of the miner rewards `player` collected on this chain.
    pub fn reward_of_player(&self, player: usize, params: &GameParams) -> i64 {
        self.blocks
            .iter()
            .filter(|b| b.winner == player)
            .map(|b| reward_of(b.txset, params))
            .sum()
    }

    fn prefix(&self) -> Chain {
        Chain {
            blocks: self.blocks[..self.blocks.len().saturating_sub(1)].to_vec(),
            created_round: self.created_round,
            chain_id: self.chain_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalState {
    pub chains: Vec<Chain>,
    pub round: u32,
    pub next_chain_id: u32,
}

impl GlobalState {
    pub fn chain(&self, id: u32) -> Option<&Chain> {
        self.chains.iter().find(|c| c.chain_id == id)
    }

    /// Short stable digest of the state, used in traces.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.round.to_le_bytes());
        for c in &self.chains {
            h.update(c.chain_id.to_le_bytes());
            h.update(c.created_round.to_le_bytes());
            h.update((c.blocks.len() as u64).to_le_bytes());
            for b in &c.blocks {
                h.update([b.txset.ordinal()]);
                h.update((b.winner as u64).to_le_bytes());
            }
        }
        let out = h.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds a single-chain state from a block list (handy for tests and scenarios).
    pub fn from_blocks(blocks: Vec<Block>, round: u32) -> GlobalState {
        GlobalState {
            chains: vec![Chain {
                blocks,
                created_round: 0,
                chain_id: 0,
            }],
            round,
            next_chain_id: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    Fork,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub target_chain_id: u32,
    pub decision: Decision,
    pub txset: TxSetKind,
}

impl Action {
    pub fn cont(chain: u32, txset: TxSetKind) -> Action {
        Action {
            target_chain_id: chain,
            decision: Decision::Continue,
            txset,
        }
    }

    pub fn fork(chain: u32, txset: TxSetKind) -> Action {
        Action {
            target_chain_id: chain,
            decision: Decision::Fork,
            txset,
        }
    }
}

pub fn new_state() -> GlobalState {
    GlobalState {
        chains: vec![Chain {
            blocks: Vec::new(),
            created_round: 0,
            chain_id: 0,
        }],
        round: 1,
        next_chain_id: 1,
    }
}

/// Transaction sets that may extend `chain` in `round`, in kind order.
pub fn feasible_txsets(
    chain: &Chain,
    round: u32,
    params: &GameParams,
    p1_created: bool,
) -> Vec<TxSetKind> {
    let mut out = vec![TxSetKind::Unrelated];
    let spent = chain.output_spent();
    if !spent {
        out.push(TxSetKind::Txs1);
        if chain.len() >= params.timelock as usize {
            out.push(TxSetKind::Txs2);
        }
    }
    if p1_created && round == 1 && chain.is_empty() {
        out.push(TxSetKind::TxsP1);
    }
    if chain.contains(TxSetKind::Txs2) && !chain.contains(TxSetKind::TxsP2) {
        out.push(TxSetKind::TxsP2);
    }
    out
}

/// Forks are only started against a block that blocks a strictly better one,
/// and only while no other chain already offers that better set.
pub fn is_fork_legal(state: &GlobalState, chain: &Chain, params: &GameParams) -> Result<bool> {
    let last = chain.last_kind().ok_or(Error::EmptyChain)?;
    let offered_elsewhere = state
        .chains
        .iter()
        .any(|c| c.chain_id != chain.chain_id && !c.contains(last));
    if offered_elsewhere {
        return Ok(false);
    }
    Ok(match last {
        TxSetKind::Txs1 => reward_of(TxSetKind::Txs2, params) > reward_of(TxSetKind::Txs1, params),
        TxSetKind::TxsP1 => {
            reward_of(TxSetKind::Txs1, params) > reward_of(TxSetKind::TxsP1, params)
        }
        _ => false,
    })
}

/// Sets a fork may put in place of the last block. Re-mining the same kind is excluded.
pub fn fork_txsets(chain: &Chain, round: u32, params: &GameParams) -> Vec<TxSetKind> {
    let Some(last) = chain.last_kind() else {
        return Vec::new();
    };
    feasible_txsets(&chain.prefix(), round, params, params.deposit_created())
        .into_iter()
        .filter(|&k| k != last)
        .collect()
}

/// Every action available in `state`, continues before forks, chains in state order.
pub fn feasible_actions(state: &GlobalState, params: &GameParams) -> Vec<Action> {
    let mut out = Vec::new();
    for c in &state.chains {
        for k in feasible_txsets(c, state.round, params, params.deposit_created()) {
            out.push(Action::cont(c.chain_id, k));
        }
    }
    for c in &state.chains {
        if matches!(is_fork_legal(state, c, params), Ok(true)) {
            for k in fork_txsets(c, state.round, params) {
                out.push(Action::fork(c.chain_id, k));
            }
        }
    }
    out
}

pub fn is_feasible(state: &GlobalState, action: &Action, params: &GameParams) -> bool {
    check_action(state, action, params).is_ok()
}

fn check_action(state: &GlobalState, action: &Action, params: &GameParams) -> std::result::Result<(), String> {
    let chain = state
        .chain(action.target_chain_id)
        .ok_or_else(|| format!("no chain with id {}", action.target_chain_id))?;
    match action.decision {
        Decision::Continue => {
            if !feasible_txsets(chain, state.round, params, params.deposit_created())
                .contains(&action.txset)
            {
                return Err(format!("{:?} cannot extend chain {}", action.txset, chain.chain_id));
            }
        }
        Decision::Fork => {
            match is_fork_legal(state, chain, params) {
                Err(_) => return Err("cannot fork an empty chain".into()),
                Ok(false) => return Err(format!("fork of chain {} is not legal", chain.chain_id)),
                Ok(true) => {}
            }
            if !fork_txsets(chain, state.round, params).contains(&action.txset) {
                return Err(format!("{:?} cannot replace the last block", action.txset));
            }
        }
    }
    Ok(())
}

/// Applies the winner's action. The round counter is left to the caller.
pub fn apply_action(
    state: &GlobalState,
    action: &Action,
    winner: usize,
    params: &GameParams,
) -> Result<GlobalState> {
    let illegal = |reason: String| Error::IllegalAction {
        player: winner,
        round: state.round,
        reason,
    };
    if winner >= params.n() {
        return Err(illegal(format!("winner {winner} out of range")));
    }
    check_action(state, action, params).map_err(illegal)?;
    let mut next = state.clone();
    let block = Block {
        txset: action.txset,
        winner,
    };
    let idx = next
        .chains
        .iter()
        .position(|c| c.chain_id == action.target_chain_id)
        .expect("checked above");
    match action.decision {
        Decision::Continue => next.chains[idx].blocks.push(block),
        Decision::Fork => {
            let mut blocks = next.chains[idx].blocks.clone();
            *blocks.last_mut().expect("checked above") = block;
            next.chains.push(Chain {
                blocks,
                created_round: state.round,
                chain_id: next.next_chain_id,
            });
            next.next_chain_id += 1;
        }
    }
    Ok(next)
}

/// Drops every chain that some other chain outruns by at least one block.
pub fn abandon(state: &GlobalState) -> GlobalState {
    let max = state.chains.iter().map(Chain::len).max().unwrap_or(0);
    GlobalState {
        chains: state
            .chains
            .iter()
            .filter(|c| c.len() == max)
            .cloned()
            .collect(),
        round: state.round,
        next_chain_id: state.next_chain_id,
    }
}

/// The oldest of the longest chains.
pub fn longest_chain(state: &GlobalState) -> &Chain {
    state
        .chains
        .iter()
        .min_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then(a.created_round.cmp(&b.created_round))
                .then(a.chain_id.cmp(&b.chain_id))
        })
        .expect("state holds at least one chain")
}

/// One full game step: apply, abandon, advance the round.
pub fn step(state: &GlobalState, action: &Action, winner: usize, params: &GameParams) -> Result<GlobalState> {
    let mut next = abandon(&apply_action(state, action, winner, params)?);
    next.round += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TxSetKind::*;

    fn params() -> GameParams {
        GameParams::new(vec![0.5, 0.3, 0.2], 8, 2)
            .unwrap()
            .with_premiums(10_000, 400_000)
            .with_deposit(0, 1)
    }

    fn chain(kinds: &[TxSetKind]) -> Chain {
        Chain {
            blocks: kinds.iter().map(|&txset| Block { txset, winner: 0 }).collect(),
            created_round: 0,
            chain_id: 0,
        }
    }

    #[test]
    fn new_state_shape() {
        let s = new_state();
        assert_eq!(s.chains.len(), 1);
        assert_eq!(s.round, 1);
        assert_eq!(longest_chain(&s).chain_id, 0);
        assert!(longest_chain(&s).is_empty());
    }

    #[test]
    fn feasible_on_empty_first_round() {
        let p = params();
        assert_eq!(feasible_txsets(&chain(&[]), 1, &p, true), vec![Unrelated, Txs1, TxsP1]);
        assert_eq!(feasible_txsets(&chain(&[]), 1, &p, false), vec![Unrelated, Txs1]);
    }

    #[test]
    fn feasible_after_timelock() {
        let p = params();
        assert_eq!(
            feasible_txsets(&chain(&[Unrelated, Unrelated]), 3, &p, true),
            vec![Unrelated, Txs1, Txs2]
        );
        assert_eq!(feasible_txsets(&chain(&[Unrelated]), 2, &p, true), vec![Unrelated, Txs1]);
    }

    #[test]
    fn feasible_after_bribe() {
        let p = params();
        assert_eq!(
            feasible_txsets(&chain(&[Unrelated, Unrelated, Txs2]), 4, &p, true),
            vec![Unrelated, TxsP2]
        );
        assert_eq!(
            feasible_txsets(&chain(&[Unrelated, Unrelated, Txs2, TxsP2]), 5, &p, true),
            vec![Unrelated]
        );
    }

    #[test]
    fn fork_legality() {
        let p = params();
        let s = new_state();
        assert_eq!(is_fork_legal(&s, &chain(&[Unrelated, Txs1]), &p), Ok(true));
        assert_eq!(is_fork_legal(&s, &chain(&[Unrelated]), &p), Ok(false));
        assert_eq!(is_fork_legal(&s, &chain(&[]), &p), Err(Error::EmptyChain));
        let mut low = p.clone();
        low.bribe_fee = low.revocation_fee;
        assert_eq!(is_fork_legal(&s, &chain(&[Unrelated, Txs1]), &low), Ok(false));
        // default deposit slot fee makes the deposit set cheaper than the revocation set
        assert_eq!(is_fork_legal(&s, &chain(&[TxsP1]), &p), Ok(true));
    }

    #[test]
    fn fork_duplicates_with_replaced_tip() {
        let p = params();
        let mut s = new_state();
        s = step(&s, &Action::cont(0, Unrelated), 0, &p).unwrap();
        s = step(&s, &Action::cont(0, Txs1), 1, &p).unwrap();
        let forked = apply_action(&s, &Action::fork(0, Unrelated), 2, &p).unwrap();
        assert_eq!(forked.chains.len(), 2);
        let new = forked.chain(1).unwrap();
        assert_eq!(new.created_round, 3);
        assert_eq!(new.blocks[0], Block { txset: Unrelated, winner: 0 });
        assert_eq!(new.blocks[1], Block { txset: Unrelated, winner: 2 });
        assert_eq!(forked.chain(0).unwrap(), s.chain(0).unwrap());
    }

    #[test]
    fn continue_on_empty() {
        let p = params();
        let s = apply_action(&new_state(), &Action::cont(0, Unrelated), 0, &p).unwrap();
        assert_eq!(s.chains.len(), 1);
        assert_eq!(s.chains[0].len(), 1);
    }

    #[test]
    fn fork_on_empty_is_illegal() {
        let p = params();
        let r = apply_action(&new_state(), &Action::fork(0, Unrelated), 0, &p);
        assert!(matches!(r, Err(Error::IllegalAction { .. })));
        let r = apply_action(&new_state(), &Action::cont(0, Txs2), 0, &p);
        assert!(matches!(r, Err(Error::IllegalAction { .. })));
    }

    #[test]
    fn abandon_rules() {
        let mut s = new_state();
        s.chains = vec![chain(&[Unrelated; 3]), Chain { chain_id: 1, ..chain(&[Unrelated; 2]) }];
        let a = abandon(&s);
        assert_eq!(a.chains.len(), 1);
        assert_eq!(a.chains[0].len(), 3);
        s.chains[0] = chain(&[Unrelated; 2]);
        assert_eq!(abandon(&s).chains.len(), 2);
    }

    #[test]
    fn longest_prefers_oldest() {
        let mut s = new_state();
        let mut b = chain(&[Unrelated; 2]);
        b.chain_id = 1;
        b.created_round = 2;
        s.chains = vec![b, chain(&[Unrelated; 2])];
        assert_eq!(longest_chain(&s).chain_id, 0);
        s.chains[0].blocks.push(Block { txset: Unrelated, winner: 1 });
        assert_eq!(longest_chain(&s).chain_id, 1);
    }

    fn check_chain_invariants(c: &Chain, t: usize) {
        let spend = c.blocks.iter().filter(|b| matches!(b.txset, Txs1 | Txs2)).count();
        assert!(spend <= 1);
        for (i, b) in c.blocks.iter().enumerate() {
            match b.txset {
                TxsP1 => assert_eq!(i, 0),
                Txs2 => assert!(i >= t),
                TxsP2 => assert!(c.blocks[..i].iter().any(|x| x.txset == Txs2)),
                _ => {}
            }
        }
    }

    proptest! {
        #[test]
        fn random_legal_play_keeps_invariants(picks in proptest::collection::vec((0usize..64, 0usize..3), 1..12)) {
            let p = GameParams::new(vec![0.5, 0.3, 0.2], 12, 2)
                .unwrap()
                .with_premiums(10_000, 400_000)
                .with_deposit(0, 1);
            let mut s = new_state();
            for (pick, winner) in picks {
                let acts = feasible_actions(&s, &p);
                for a in &acts {
                    prop_assert!(is_feasible(&s, a, &p));
                    if a.decision == Decision::Continue && a.txset == TxsP2 {
                        prop_assert!(s.chain(a.target_chain_id).unwrap().contains(Txs2));
                    }
                }
                let a = acts[pick % acts.len()];
                let applied = apply_action(&s, &a, winner, &p).unwrap();
                let next = abandon(&applied);
                prop_assert_eq!(abandon(&next), next.clone());
                prop_assert!(next.chains.len() <= 2);
                let len = next.chains[0].len();
                prop_assert!(next.chains.iter().all(|c| c.len() == len));
                let mut ids: Vec<_> = next.chains.iter().map(|c| c.chain_id).collect();
                ids.dedup();
                prop_assert_eq!(ids.len(), next.chains.len());
                for c in &next.chains {
                    check_chain_invariants(c, p.timelock as usize);
                    prop_assert!(c.created_round <= s.round);
                }
                s = next;
                s.round += 1;
            }
            let fin = longest_chain(&s);
            prop_assert!(!(fin.contains(Txs1) && fin.contains(Txs2)));
        }
    }
}
