//! Deterministic strategies, the built-in library and the credibility filter
//! applied to fork threats.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::economics::{reward_of, GameParams};
use crate::error::Error;
use crate::game_core::{
    feasible_txsets, fork_txsets, is_feasible, is_fork_legal, Action, Chain, Decision,
    GlobalState, TxSetKind,
};

/// A player's decision rule. Must be a pure function of its inputs.
pub trait Strategy: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn decide(&self, state: &GlobalState, player: usize, params: &GameParams) -> Action;
}

pub type StrategyRef = Arc<dyn Strategy>;

/// One strategy per player.
#[derive(Clone, Debug)]
pub struct StrategyProfile {
    pub strategies: Vec<StrategyRef>,
}

impl StrategyProfile {
    pub fn new(strategies: Vec<StrategyRef>) -> Self {
        StrategyProfile { strategies }
    }

    pub fn uniform(kind: BuiltinStrategy, n: usize) -> Self {
        StrategyProfile::new((0..n).map(|_| kind.as_ref()).collect())
    }

    /// `special` for player `who`, `rest` for everybody else.
    pub fn one_vs_rest(special: BuiltinStrategy, who: usize, rest: BuiltinStrategy, n: usize) -> Self {
        StrategyProfile::new(
            (0..n)
                .map(|i| if i == who { special.as_ref() } else { rest.as_ref() })
                .collect(),
        )
    }

    /// The attack profile: the depositor threatens, everybody else waits.
    pub fn bribe_and_fork(params: &GameParams) -> Self {
        let s = params.depositor.unwrap_or_else(|| params.strongest());
        Self::one_vs_rest(
            BuiltinStrategy::FeatherForkThreatener,
            s,
            BuiltinStrategy::PenaltyAwareWaiter,
            params.n(),
        )
    }

    pub fn with_replaced(&self, player: usize, strategy: StrategyRef) -> Self {
        let mut s = self.clone();
        s.strategies[player] = strategy;
        s
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.strategies.iter().map(|s| s.name()).collect()
    }

    /// Parses a named profile or a comma list of strategy names.
    pub fn parse(spec: &str, params: &GameParams) -> Result<Self, Error> {
        let n = params.n();
        match spec {
            "bribe-and-fork" => return Ok(Self::bribe_and_fork(params)),
            "greedy" => return Ok(Self::uniform(BuiltinStrategy::GreedyDefault, n)),
            "txs1-rush" => return Ok(Self::uniform(BuiltinStrategy::MineTxs1First, n)),
            "waiters" => return Ok(Self::uniform(BuiltinStrategy::BribeWaiter, n)),
            _ => {}
        }
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() == 1 {
            let k: BuiltinStrategy = parts[0].parse()?;
            return Ok(Self::uniform(k, n));
        }
        if parts.len() != n {
            return Err(Error::InvalidParams(format!(
                "profile lists {} strategies for {} players",
                parts.len(),
                n
            )));
        }
        let mut out = Vec::with_capacity(n);
        for p in parts {
            out.push(p.parse::<BuiltinStrategy>()?.as_ref());
        }
        Ok(Self::new(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinStrategy {
    GreedyDefault,
    MineTxs1First,
    BribeWaiter,
    FeatherForkThreatener,
    PenaltyAwareWaiter,
}

impl BuiltinStrategy {
    pub const ALL: [BuiltinStrategy; 5] = [
        BuiltinStrategy::GreedyDefault,
        BuiltinStrategy::MineTxs1First,
        BuiltinStrategy::BribeWaiter,
        BuiltinStrategy::FeatherForkThreatener,
        BuiltinStrategy::PenaltyAwareWaiter,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BuiltinStrategy::GreedyDefault => "greedy-default",
            BuiltinStrategy::MineTxs1First => "mine-txs1-first",
            BuiltinStrategy::BribeWaiter => "bribe-waiter",
            BuiltinStrategy::FeatherForkThreatener => "feather-fork-threatener",
            BuiltinStrategy::PenaltyAwareWaiter => "penalty-aware-waiter",
        }
    }

    pub fn as_ref(self) -> StrategyRef {
        Arc::new(self)
    }
}

impl fmt::Display for BuiltinStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BuiltinStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        BuiltinStrategy::ALL
            .into_iter()
            .find(|b| b.id() == norm || format!("{b:?}").to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

pub fn builtin(name: &str) -> Result<StrategyRef, Error> {
    Ok(name.parse::<BuiltinStrategy>()?.as_ref())
}

/// Chain a player extends: most own reward first, then a chain without the
/// revocation set, then the oldest.
pub fn preferred_chain<'a>(state: &'a GlobalState, player: usize, params: &GameParams) -> &'a Chain {
    let max = state.chains.iter().map(Chain::len).max().unwrap_or(0);
    state
        .chains
        .iter()
        .filter(|c| c.len() == max)
        .min_by(|a, b| {
            b.reward_of_player(player, params)
                .cmp(&a.reward_of_player(player, params))
                .then(a.contains(TxSetKind::Txs1).cmp(&b.contains(TxSetKind::Txs1)))
                .then(a.created_round.cmp(&b.created_round))
                .then(a.chain_id.cmp(&b.chain_id))
        })
        .expect("state holds at least one chain")
}

/// Highest-reward kind among `kinds`; ties go to the lower ordinal.
pub fn best_kind(kinds: &[TxSetKind], params: &GameParams) -> Option<TxSetKind> {
    kinds
        .iter()
        .copied()
        .min_by(|a, b| {
            reward_of(*b, params)
                .cmp(&reward_of(*a, params))
                .then(a.ordinal().cmp(&b.ordinal()))
        })
}

fn waiter_kind(kinds: &[TxSetKind], params: &GameParams) -> TxSetKind {
    let allowed: Vec<_> = kinds
        .iter()
        .copied()
        .filter(|k| !matches!(k, TxSetKind::Txs1 | TxSetKind::TxsP1))
        .collect();
    best_kind(&allowed, params).unwrap_or(TxSetKind::Unrelated)
}

impl Strategy for BuiltinStrategy {
    fn name(&self) -> String {
        self.id().to_string()
    }

    fn decide(&self, state: &GlobalState, player: usize, params: &GameParams) -> Action {
        let chain = preferred_chain(state, player, params);
        let id = chain.chain_id;
        let kinds = feasible_txsets(chain, state.round, params, params.deposit_created());
        let has = |k: TxSetKind| kinds.contains(&k);
        let greedy = || best_kind(&kinds, params).unwrap_or(TxSetKind::Unrelated);
        let kind = match self {
            BuiltinStrategy::GreedyDefault => greedy(),
            BuiltinStrategy::MineTxs1First => {
                if has(TxSetKind::Txs1) {
                    TxSetKind::Txs1
                } else {
                    greedy()
                }
            }
            BuiltinStrategy::BribeWaiter => waiter_kind(&kinds, params),
            BuiltinStrategy::FeatherForkThreatener => {
                if has(TxSetKind::TxsP1) {
                    TxSetKind::TxsP1
                } else {
                    if chain.last_kind() == Some(TxSetKind::Txs1)
                        && chain.deposit_locked()
                        && is_fork_legal(state, chain, params) == Ok(true)
                    {
                        let repl = fork_txsets(chain, state.round, params);
                        return Action::fork(id, waiter_kind(&repl, params));
                    }
                    waiter_kind(&kinds, params)
                }
            }
            BuiltinStrategy::PenaltyAwareWaiter => {
                if has(TxSetKind::TxsP1) {
                    TxSetKind::TxsP1
                } else if chain.contains(TxSetKind::TxsP1) {
                    waiter_kind(&kinds, params)
                } else if has(TxSetKind::Txs1) {
                    TxSetKind::Txs1
                } else {
                    greedy()
                }
            }
        };
        Action::cont(id, kind)
    }
}

/// Ordering used to pick among equally valued actions: continue before fork,
/// then the richer set, then the lower kind ordinal.
pub fn tie_rank(a: &Action, params: &GameParams) -> (u8, i64, u8) {
    (
        match a.decision {
            Decision::Continue => 0,
            Decision::Fork => 1,
        },
        -reward_of(a.txset, params),
        a.txset.ordinal(),
    )
}

/// Replaces a fork that does not strictly beat the best continue under `value`.
pub fn credible_threat_filter(
    player: usize,
    proposed: Action,
    state: &GlobalState,
    params: &GameParams,
    value: &dyn Fn(&Action) -> f64,
) -> Action {
    let _ = player;
    if proposed.decision != Decision::Fork {
        return proposed;
    }
    let mut best: Option<(Action, f64)> = None;
    for c in &state.chains {
        for k in feasible_txsets(c, state.round, params, params.deposit_created()) {
            let a = Action::cont(c.chain_id, k);
            let v = value(&a);
            let better = match &best {
                None => true,
                Some((b, bv)) => {
                    v > *bv + crate::oracle::EPSILON
                        || ((v - *bv).abs() <= crate::oracle::EPSILON
                            && tie_rank(&a, params) < tie_rank(b, params))
                }
            };
            if better {
                best = Some((a, v));
            }
        }
    }
    match best {
        Some((cont, cv)) if value(&proposed) <= cv + crate::oracle::EPSILON => cont,
        _ => proposed,
    }
}

/// One-step lookahead value of `action` for `player` if it wins this round:
/// expected own reward on the chain that survives, deposit exposure and bribe
/// share, plus the per-round floor of mining unrelated sets afterwards.
pub fn heuristic_value(state: &GlobalState, player: usize, action: &Action, params: &GameParams) -> f64 {
    let Some(chain) = state.chain(action.target_chain_id) else {
        return f64::NEG_INFINITY;
    };
    if !is_feasible(state, action, params) {
        return f64::NEG_INFINITY;
    }
    let lam = params.powers[player];
    let remaining = params.rounds.saturating_sub(state.round) as f64;
    let floor = remaining * lam * (params.block_fee() + params.base_reward) as f64;
    let block = crate::game_core::Block {
        txset: action.txset,
        winner: player,
    };
    let mut next = chain.clone();
    match action.decision {
        Decision::Continue => {
            next.blocks.push(block);
            prospect(&next, player, remaining, params) + floor
        }
        Decision::Fork => {
            let displaced = *chain.blocks.last().expect("feasible fork");
            *next.blocks.last_mut().expect("feasible fork") = block;
            let survive = if remaining == 0.0 {
                0.0
            } else if displaced.winner == player {
                1.0
            } else {
                1.0 - params.powers[displaced.winner]
            };
            survive * prospect(&next, player, remaining, params)
                + (1.0 - survive) * prospect(chain, player, remaining, params)
                + floor
        }
    }
}

fn prospect(chain: &Chain, player: usize, remaining: f64, params: &GameParams) -> f64 {
    let lam = params.powers[player];
    let f = params.block_fee();
    let mut v = chain.reward_of_player(player, params) as f64;
    if params.depositor == Some(player)
        && chain.deposit_locked()
        && chain.contains(TxSetKind::Txs1)
    {
        v -= params.penalty as f64;
    }
    if remaining > 0.0 {
        if !chain.output_spent() {
            v += lam * (params.bribe_fee - f).max(0) as f64;
        } else if chain.contains(TxSetKind::Txs2) && !chain.contains(TxSetKind::TxsP2) {
            v += lam * (params.reclaim_block_fee() - f).max(0) as f64;
        }
    }
    v
}

/// Wraps a strategy so its forks pass the credibility filter under the
/// one-step heuristic value.
#[derive(Debug, Clone)]
pub struct Credible(pub StrategyRef);

impl Strategy for Credible {
    fn name(&self) -> String {
        format!("credible({})", self.0.name())
    }

    fn decide(&self, state: &GlobalState, player: usize, params: &GameParams) -> Action {
        let a = self.0.decide(state, player, params);
        credible_threat_filter(player, a, state, params, &|x| {
            heuristic_value(state, player, x, params)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_core::{new_state, step, Block};
    use TxSetKind::*;

    fn attack_params() -> GameParams {
        let p = GameParams::new(vec![0.5, 0.3, 0.2], 6, 3)
            .unwrap()
            .with_premiums(10_000, 500_000);
        let pen = ((p.block_fee() + p.base_reward) as f64 * 0.5).floor() as i64 + 1;
        p.with_deposit(0, pen).with_slot_fees(10_000, 20_000)
    }

    fn state(kinds: &[(TxSetKind, usize)], round: u32) -> GlobalState {
        GlobalState::from_blocks(
            kinds.iter().map(|&(txset, winner)| Block { txset, winner }).collect(),
            round,
        )
    }

    #[test]
    fn greedy_takes_bribe_after_timelock() {
        let p = attack_params();
        let s = state(&[(TxsP1, 0), (Unrelated, 1), (Unrelated, 2)], 4);
        assert_eq!(BuiltinStrategy::GreedyDefault.decide(&s, 1, &p), Action::cont(0, Txs2));
    }

    #[test]
    fn threatener_posts_deposit_first() {
        let p = attack_params();
        let a = BuiltinStrategy::FeatherForkThreatener.decide(&new_state(), 0, &p);
        assert_eq!(a, Action::cont(0, TxsP1));
    }

    #[test]
    fn threatener_forks_revocation() {
        let p = attack_params();
        let s = state(&[(TxsP1, 0), (Unrelated, 1), (Txs1, 2)], 4);
        let a = BuiltinStrategy::FeatherForkThreatener.decide(&s, 0, &p);
        assert_eq!(a.decision, Decision::Fork);
        assert_eq!(a.txset, Unrelated);
    }

    #[test]
    fn waiters_skip_revocation() {
        let p = attack_params();
        let s = state(&[(TxsP1, 0)], 2);
        assert_eq!(BuiltinStrategy::BribeWaiter.decide(&s, 1, &p), Action::cont(0, Unrelated));
        assert_eq!(BuiltinStrategy::PenaltyAwareWaiter.decide(&s, 1, &p), Action::cont(0, Unrelated));
        let bare = state(&[(Unrelated, 0)], 2);
        assert_eq!(BuiltinStrategy::PenaltyAwareWaiter.decide(&bare, 1, &p), Action::cont(0, Txs1));
        assert_eq!(BuiltinStrategy::MineTxs1First.decide(&bare, 1, &p), Action::cont(0, Txs1));
    }

    #[test]
    fn reclaim_follows_bribe() {
        let p = attack_params();
        let s = state(&[(TxsP1, 0), (Unrelated, 1), (Unrelated, 2), (Txs2, 1)], 5);
        for b in BuiltinStrategy::ALL {
            if b != BuiltinStrategy::MineTxs1First {
                assert_eq!(b.decide(&s, 2, &p), Action::cont(0, TxsP2), "{b}");
            }
        }
    }

    #[test]
    fn fork_chain_preferred_by_bystanders() {
        let p = attack_params();
        let mut s = state(&[(TxsP1, 0), (Unrelated, 1)], 3);
        s = step(&s, &Action::cont(0, Txs1), 2, &p).unwrap();
        s = crate::game_core::abandon(
            &crate::game_core::apply_action(&s, &Action::fork(0, Unrelated), 0, &p).unwrap(),
        );
        s.round += 1;
        assert_eq!(preferred_chain(&s, 1, &p).chain_id, 1);
        assert_eq!(preferred_chain(&s, 0, &p).chain_id, 1);
        assert_eq!(preferred_chain(&s, 2, &p).chain_id, 0);
    }

    #[test]
    fn names_round_trip() {
        for b in BuiltinStrategy::ALL {
            assert_eq!(b.id().parse::<BuiltinStrategy>().unwrap(), b);
        }
        assert!(matches!("nope".parse::<BuiltinStrategy>(), Err(Error::UnknownStrategy(_))));
        assert_eq!("FeatherForkThreatener".parse::<BuiltinStrategy>().unwrap(), BuiltinStrategy::FeatherForkThreatener);
    }

    #[test]
    fn filter_keeps_deposit_backed_threat() {
        let p = attack_params();
        let s = state(&[(TxsP1, 0), (Unrelated, 1), (Txs1, 2)], 4);
        let fork = Action::fork(0, Unrelated);
        let out = credible_threat_filter(0, fork, &s, &p, &|a| heuristic_value(&s, 0, a, &p));
        assert_eq!(out, fork);
    }

    #[test]
    fn filter_drops_cheap_threat() {
        // no deposit and a bribe premium far below the revocation miner's share
        let p = GameParams::new(vec![0.5, 0.3, 0.2], 6, 2)
            .unwrap()
            .with_premiums(10_000, 500_000);
        let s = state(&[(Unrelated, 0), (Unrelated, 0), (Txs1, 1)], 4);
        let fork = Action::fork(0, Txs2);
        let out = credible_threat_filter(2, fork, &s, &p, &|a| heuristic_value(&s, 2, a, &p));
        assert_eq!(out.decision, Decision::Continue);
    }

    #[test]
    fn filter_passes_continue() {
        let p = attack_params();
        let s = new_state();
        let a = Action::cont(0, Unrelated);
        assert_eq!(credible_threat_filter(1, a, &s, &p, &|_| 0.0), a);
    }

    #[test]
    fn profile_parsing() {
        let p = attack_params();
        let prof = StrategyProfile::parse("bribe-and-fork", &p).unwrap();
        assert_eq!(prof.names()[0], "feather-fork-threatener");
        assert_eq!(prof.names()[2], "penalty-aware-waiter");
        let prof = StrategyProfile::parse("greedy-default,bribe-waiter,mine-txs1-first", &p).unwrap();
        assert_eq!(prof.len(), 3);
        assert!(StrategyProfile::parse("greedy-default,bribe-waiter", &p).is_err());
    }
}
