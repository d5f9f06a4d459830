//! Abstract UTXO graph of the bribe-and-fork construction: templates with
//! spending conditions, a static validator, and a confirmation replayer.
//!
//! Signatures are party grants, not cryptography. The deposit committee
//! (`n` signers, `m` needed, the strongest miner among them) signs a deposit
//! spend only when the spending transaction's own preconditions hold, unless
//! `collusion` is set, in which case a coalition of `m - 1` signs anything.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::economics::{DepositState, Sat};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxId {
    Funding,
    CommitmentOld,
    Tx1,
    Tx2,
    TxB,
    TxP1,
    TxP2,
}

impl TxId {
    pub const ALL: [TxId; 7] = [
        TxId::Funding,
        TxId::CommitmentOld,
        TxId::Tx1,
        TxId::Tx2,
        TxId::TxB,
        TxId::TxP1,
        TxId::TxP2,
    ];
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    /// Channel party holding the revocation secret.
    Cheated,
    /// Channel party publishing the old state.
    Cheater,
    Strongest,
    /// Whoever mines the bribe.
    BlockMiner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutRef {
    pub tx: TxId,
    pub index: usize,
}

impl fmt::Display for OutRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tx, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    KeyOwner(Party),
    MultiSig { m: u32, n: u32, must_include: Party },
    RelativeTimelock { blocks: u32, then: Box<Condition> },
    AnyOf(Vec<Condition>),
    RequiresConfirmedOutput(OutRef),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutput {
    pub amount_sat: Sat,
    pub condition: Condition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxTemplate {
    pub id: TxId,
    /// Party authorizing the spend.
    pub signer: Party,
    pub inputs: Vec<OutRef>,
    /// Value entering from outside the graph.
    pub external_in_sat: Sat,
    pub outputs: Vec<TxOutput>,
    /// Preconditions beyond the spent outputs' locks.
    pub conditions: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxGraph {
    pub txs: Vec<TxTemplate>,
    /// The committee behind the deposit signs unconditionally.
    pub collusion: bool,
}

pub const DUMMY_SAT: Sat = 1;
/// Output index of the strongest miner's marker in the bribe.
pub const DUMMY_INDEX: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackGraphParams {
    pub channel_amount: Sat,
    pub bribe_fee: Sat,
    pub deposit: Sat,
    pub timelock: u32,
    pub m: u32,
    pub n: u32,
    pub revocation_fee: Sat,
    pub deposit_tx_fee: Sat,
    pub reclaim_tx_fee: Sat,
}

impl AttackGraphParams {
    pub fn new(channel_amount: Sat, bribe_fee: Sat, deposit: Sat, timelock: u32, m: u32, n: u32) -> Self {
        AttackGraphParams {
            channel_amount,
            bribe_fee,
            deposit,
            timelock,
            m,
            n,
            revocation_fee: 10_000,
            deposit_tx_fee: 10_000,
            reclaim_tx_fee: 10_000,
        }
    }
}

impl Default for AttackGraphParams {
    fn default() -> Self {
        AttackGraphParams::new(10_000_000, 500_000, 320_000_001, 3, 5, 9)
    }
}

fn out(tx: TxId, index: usize) -> OutRef {
    OutRef { tx, index }
}

/// The canonical construction.
pub fn build_attack_graph(p: &AttackGraphParams) -> Result<TxGraph> {
    let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
    if p.m > p.n || p.m == 0 {
        return bad("multisig threshold m must satisfy 1 <= m <= n");
    }
    if p.channel_amount <= 0 || p.deposit <= 0 || p.timelock == 0 {
        return bad("channel amount, deposit and timelock must be positive");
    }
    if p.bribe_fee <= DUMMY_SAT || p.bribe_fee >= p.channel_amount {
        return bad("bribe must exceed the marker output and stay below the channel amount");
    }
    if p.revocation_fee < 0 || p.revocation_fee >= p.channel_amount {
        return bad("revocation fee must lie in [0, channel amount)");
    }
    if p.deposit_tx_fee < 0 || p.reclaim_tx_fee < 0 || p.reclaim_tx_fee > p.deposit + DUMMY_SAT {
        return bad("deposit fees must be non-negative and covered by the deposit");
    }
    let c = p.channel_amount;
    let committee = Condition::MultiSig {
        m: p.m,
        n: p.n,
        must_include: Party::Strongest,
    };
    let txs = vec![
        TxTemplate {
            id: TxId::Funding,
            signer: Party::Cheater,
            inputs: vec![],
            external_in_sat: c,
            outputs: vec![TxOutput {
                amount_sat: c,
                condition: Condition::MultiSig {
                    m: 2,
                    n: 2,
                    must_include: Party::Cheated,
                },
            }],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::CommitmentOld,
            signer: Party::Cheater,
            inputs: vec![out(TxId::Funding, 0)],
            external_in_sat: 0,
            outputs: vec![TxOutput {
                amount_sat: c,
                condition: Condition::AnyOf(vec![
                    Condition::KeyOwner(Party::Cheated),
                    Condition::RelativeTimelock {
                        blocks: p.timelock,
                        then: Box::new(Condition::KeyOwner(Party::Cheater)),
                    },
                ]),
            }],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::Tx1,
            signer: Party::Cheated,
            inputs: vec![out(TxId::CommitmentOld, 0)],
            external_in_sat: 0,
            outputs: vec![TxOutput {
                amount_sat: c - p.revocation_fee,
                condition: Condition::KeyOwner(Party::Cheated),
            }],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::Tx2,
            signer: Party::Cheater,
            inputs: vec![out(TxId::CommitmentOld, 0)],
            external_in_sat: 0,
            outputs: vec![TxOutput {
                amount_sat: c,
                condition: Condition::KeyOwner(Party::Cheater),
            }],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::TxB,
            signer: Party::Cheater,
            inputs: vec![out(TxId::Tx2, 0)],
            external_in_sat: 0,
            outputs: vec![
                TxOutput {
                    amount_sat: p.bribe_fee - DUMMY_SAT,
                    condition: Condition::KeyOwner(Party::BlockMiner),
                },
                TxOutput {
                    amount_sat: DUMMY_SAT,
                    condition: Condition::KeyOwner(Party::Strongest),
                },
                TxOutput {
                    amount_sat: c - p.bribe_fee,
                    condition: Condition::KeyOwner(Party::Cheater),
                },
            ],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::TxP1,
            signer: Party::Strongest,
            inputs: vec![],
            external_in_sat: p.deposit + p.deposit_tx_fee,
            outputs: vec![TxOutput {
                amount_sat: p.deposit,
                condition: committee.clone(),
            }],
            conditions: vec![],
        },
        TxTemplate {
            id: TxId::TxP2,
            signer: Party::Strongest,
            inputs: vec![out(TxId::TxP1, 0), out(TxId::TxB, DUMMY_INDEX)],
            external_in_sat: 0,
            outputs: vec![TxOutput {
                amount_sat: p.deposit + DUMMY_SAT - p.reclaim_tx_fee,
                condition: Condition::KeyOwner(Party::Strongest),
            }],
            conditions: vec![
                committee,
                Condition::RequiresConfirmedOutput(out(TxId::TxB, DUMMY_INDEX)),
            ],
        },
    ];
    Ok(TxGraph {
        txs,
        collusion: false,
    })
}

impl TxGraph {
    pub fn get(&self, id: TxId) -> Option<&TxTemplate> {
        self.txs.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: TxId) -> Option<&mut TxTemplate> {
        self.txs.iter_mut().find(|t| t.id == id)
    }

    pub fn output(&self, r: OutRef) -> Option<&TxOutput> {
        self.get(r.tx).and_then(|t| t.outputs.get(r.index))
    }

    pub fn input_value(&self, tx: &TxTemplate) -> Option<Sat> {
        let mut v = tx.external_in_sat;
        for r in &tx.inputs {
            v += self.output(*r)?.amount_sat;
        }
        Some(v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<TxGraph> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Pairs of transactions spending the same output.
    pub fn conflicts(&self) -> Vec<(TxId, TxId, OutRef)> {
        let mut found = Vec::new();
        for (i, a) in self.txs.iter().enumerate() {
            for b in &self.txs[i + 1..] {
                for r in &a.inputs {
                    if b.inputs.contains(r) {
                        found.push((a.id, b.id, *r));
                    }
                }
            }
        }
        found
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every branch of `c` the party `who` could satisfy, with the timelock guarding it.
fn paths_for(c: &Condition, who: Party, lock: u32, acc: &mut Vec<u32>) {
    match c {
        Condition::KeyOwner(p) if *p == who => acc.push(lock),
        Condition::RelativeTimelock { blocks, then } => paths_for(then, who, lock.max(*blocks), acc),
        Condition::AnyOf(cs) => cs.iter().for_each(|c| paths_for(c, who, lock, acc)),
        _ => {}
    }
}

pub fn validate_graph(g: &TxGraph) -> ValidationReport {
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String, violation: &str| {
        if !pass {
            violations.push(violation.to_string());
        }
        checks.push(CheckResult {
            name: name.to_string(),
            pass,
            detail,
        });
    };

    for id in TxId::ALL {
        check(
            &format!("present:{id}"),
            g.get(id).is_some(),
            String::new(),
            &format!("missing transaction {id}"),
        );
    }
    let dangling: Vec<String> = g
        .txs
        .iter()
        .flat_map(|t| t.inputs.iter().map(move |r| (t.id, *r)))
        .filter(|(_, r)| g.output(*r).is_none())
        .map(|(t, r)| format!("{t} spends missing output {r}"))
        .collect();
    check(
        "references",
        dangling.is_empty(),
        dangling.join("; "),
        "inputs reference missing outputs",
    );

    let conflicts = g.conflicts();
    let pair = conflicts
        .iter()
        .any(|(a, b, _)| matches!((a, b), (TxId::Tx1, TxId::Tx2) | (TxId::Tx2, TxId::Tx1)));
    check(
        "conflict_pair",
        pair,
        conflicts
            .iter()
            .map(|(a, b, r)| format!("{a}/{b} on {r}"))
            .collect::<Vec<_>>()
            .join("; "),
        "revocation and old-state spend must conflict",
    );

    let timelock_ok = g.get(TxId::Tx2).is_some_and(|t2| {
        t2.inputs.iter().all(|r| {
            g.output(*r).is_some_and(|o| {
                let mut locks = Vec::new();
                paths_for(&o.condition, t2.signer, 0, &mut locks);
                !locks.is_empty() && locks.iter().all(|&l| l > 0)
            })
        })
    });
    check(
        "old_state_timelocked",
        timelock_ok,
        String::new(),
        "cond₂ must be encumbered with a timelock",
    );

    let dummy = out(TxId::TxB, DUMMY_INDEX);
    let reclaim_ok = g.get(TxId::TxP2).is_some_and(|p2| {
        p2.inputs.contains(&dummy)
            && p2
                .conditions
                .contains(&Condition::RequiresConfirmedOutput(dummy))
    });
    check(
        "reclaim_needs_bribe",
        reclaim_ok,
        String::new(),
        "deposit reclaimable without bribe confirmation",
    );

    let deposit_ok = g.get(TxId::TxP1).is_some_and(|p1| {
        matches!(
            p1.outputs.first().map(|o| &o.condition),
            Some(Condition::MultiSig { m, n, must_include: Party::Strongest }) if m <= n && *m >= 1
        )
    });
    check(
        "deposit_multisig",
        deposit_ok,
        String::new(),
        "deposit must be locked by a multisignature including the strongest miner",
    );

    let shape = g.get(TxId::TxB).is_some_and(|b| b.outputs.len() == 3)
        && g.get(TxId::TxP2).is_some_and(|p| p.inputs.len() == 2);
    check(
        "shape",
        shape,
        String::new(),
        "bribe must have three outputs and the reclaim two inputs",
    );

    for t in &g.txs {
        let out_v: Sat = t.outputs.iter().map(|o| o.amount_sat).sum();
        let in_v = g.input_value(t);
        let ok = in_v.is_some_and(|v| v >= out_v) && t.outputs.iter().all(|o| o.amount_sat >= 0);
        check(
            &format!("value:{}", t.id),
            ok,
            format!("in {in_v:?} out {out_v}"),
            &format!("outputs exceed inputs in {}", t.id),
        );
    }
    ValidationReport { checks, violations }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerScenario {
    /// Confirmations in order, with heights. The funding output is taken as
    /// confirmed at height 0 when it is not listed.
    pub steps: Vec<(TxId, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnedOutput {
    pub output: OutRef,
    pub amount_sat: Sat,
    pub controllers: Vec<Party>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ownership {
    pub confirmed: Vec<TxId>,
    pub unspent: Vec<OwnedOutput>,
    /// Transactions that can never confirm any more.
    pub dead: Vec<TxId>,
    pub deposit: DepositState,
    pub fees_sat: Sat,
    pub confirmed_input_sat: Sat,
    pub confirmed_output_sat: Sat,
}

impl Ownership {
    pub fn held_by(&self, party: Party) -> Sat {
        self.unspent
            .iter()
            .filter(|o| o.controllers == [party])
            .map(|o| o.amount_sat)
            .sum()
    }
}

struct Ledger {
    confirmed: BTreeMap<TxId, u32>,
    order: Vec<TxId>,
    spent: BTreeMap<OutRef, TxId>,
}

enum Fail {
    Conflict(String),
    Condition(String),
}

/// Ranks failure messages so `AnyOf` reports the most informative branch.
fn severity(msg: &str) -> u8 {
    if msg.contains("signed by") {
        0
    } else {
        1
    }
}

impl Ledger {
    fn eval(
        &self,
        g: &TxGraph,
        c: &Condition,
        tx: &TxTemplate,
        spent_height: u32,
        height: u32,
    ) -> std::result::Result<(), String> {
        match c {
            Condition::KeyOwner(p) => {
                if tx.signer == *p {
                    Ok(())
                } else {
                    Err(format!("{} must be signed by {p:?}", tx.id))
                }
            }
            Condition::MultiSig { m, n, must_include } => {
                if *must_include != Party::Strongest {
                    // channel outputs: both parties pre-signed the commitments
                    return Ok(());
                }
                if tx.signer != *must_include {
                    return Err(format!("{} must be signed by {must_include:?}", tx.id));
                }
                let pre_ok = tx.conditions.iter().all(|pc| {
                    !matches!(pc, Condition::RequiresConfirmedOutput(_))
                        || self.eval(g, pc, tx, spent_height, height).is_ok()
                });
                let others = if g.collusion {
                    m.saturating_sub(1)
                } else if pre_ok {
                    n - 1
                } else {
                    0
                };
                if 1 + others >= *m {
                    Ok(())
                } else {
                    Err(format!(
                        "multisig {m}-of-{n} for {} not reached: {} grants",
                        tx.id,
                        1 + others
                    ))
                }
            }
            Condition::RelativeTimelock { blocks, then } => {
                if height < spent_height + blocks {
                    return Err(format!(
                        "relative timelock of {blocks} blocks not expired: height {height} < {}",
                        spent_height + blocks
                    ));
                }
                self.eval(g, then, tx, spent_height, height)
            }
            Condition::AnyOf(cs) => {
                let mut worst: Option<String> = None;
                for c in cs {
                    match self.eval(g, c, tx, spent_height, height) {
                        Ok(()) => return Ok(()),
                        Err(e) => {
                            if worst.as_ref().is_none_or(|w| severity(&e) > severity(w)) {
                                worst = Some(e);
                            }
                        }
                    }
                }
                Err(worst.unwrap_or_else(|| "empty alternative".into()))
            }
            Condition::RequiresConfirmedOutput(r) => {
                let ok = self
                    .confirmed
                    .get(&r.tx)
                    .is_some_and(|&h| h <= height && g.output(*r).is_some());
                if ok {
                    Ok(())
                } else {
                    Err(format!("{} requires confirmed output {r}", tx.id))
                }
            }
        }
    }

    fn try_confirm(&self, g: &TxGraph, id: TxId, height: u32) -> std::result::Result<(), Fail> {
        let tx = g
            .get(id)
            .ok_or_else(|| Fail::Condition(format!("{id} is not in the graph")))?;
        if self.confirmed.contains_key(&id) {
            return Err(Fail::Conflict(format!("{id} is already confirmed")));
        }
        if let Some(&last) = self.order.last().and_then(|t| self.confirmed.get(t)) {
            if height < last {
                return Err(Fail::Condition(format!("{id} at height {height} precedes height {last}")));
            }
        }
        for r in &tx.inputs {
            if let Some(by) = self.spent.get(r) {
                return Err(Fail::Conflict(format!("{id} spends {r}, already spent by {by}")));
            }
            let Some(&h) = self.confirmed.get(&r.tx) else {
                return Err(Fail::Condition(format!("{id} spends {r} before it is confirmed")));
            };
            let o = g
                .output(*r)
                .ok_or_else(|| Fail::Condition(format!("{id} spends missing output {r}")))?;
            self.eval(g, &o.condition, tx, h, height).map_err(Fail::Condition)?;
        }
        for c in &tx.conditions {
            // preconditions are the committee's policy, dropped under collusion
            if g.collusion && matches!(c, Condition::RequiresConfirmedOutput(_)) {
                continue;
            }
            self.eval(g, c, tx, height, height).map_err(Fail::Condition)?;
        }
        Ok(())
    }

    fn confirm(&mut self, g: &TxGraph, id: TxId, height: u32) {
        for r in &g.get(id).expect("checked").inputs {
            self.spent.insert(*r, id);
        }
        self.confirmed.insert(id, height);
        self.order.push(id);
    }

    fn new(g: &TxGraph, first: Option<TxId>) -> Ledger {
        let mut l = Ledger {
            confirmed: BTreeMap::new(),
            order: Vec::new(),
            spent: BTreeMap::new(),
        };
        if first != Some(TxId::Funding) && g.get(TxId::Funding).is_some() {
            l.confirmed.insert(TxId::Funding, 0);
            l.order.push(TxId::Funding);
        }
        l
    }
}

fn controllers(c: &Condition, acc: &mut BTreeSet<Party>) {
    match c {
        Condition::KeyOwner(p) => {
            acc.insert(*p);
        }
        Condition::MultiSig { must_include, .. } => {
            acc.insert(*must_include);
        }
        Condition::RelativeTimelock { then, .. } => controllers(then, acc),
        Condition::AnyOf(cs) => cs.iter().for_each(|c| controllers(c, acc)),
        Condition::RequiresConfirmedOutput(_) => {}
    }
}

fn summarize(g: &TxGraph, l: &Ledger) -> Ownership {
    let mut unspent = Vec::new();
    let mut fees = 0;
    let mut cin = 0;
    let mut cout = 0;
    for id in &l.order {
        let t = g.get(*id).expect("confirmed txs exist");
        let i = g.input_value(t).unwrap_or(0);
        let o: Sat = t.outputs.iter().map(|o| o.amount_sat).sum();
        cin += i;
        cout += o;
        fees += i - o;
        for (k, o) in t.outputs.iter().enumerate() {
            let r = out(*id, k);
            if !l.spent.contains_key(&r) {
                let mut acc = BTreeSet::new();
                controllers(&o.condition, &mut acc);
                unspent.push(OwnedOutput {
                    output: r,
                    amount_sat: o.amount_sat,
                    controllers: acc.into_iter().collect(),
                });
            }
        }
    }
    // dead: some input is spent by another tx, or depends on a dead tx
    let mut dead: BTreeSet<TxId> = BTreeSet::new();
    loop {
        let before = dead.len();
        for t in &g.txs {
            if l.confirmed.contains_key(&t.id) || dead.contains(&t.id) {
                continue;
            }
            let blocked = t.inputs.iter().any(|r| {
                l.spent.get(r).is_some_and(|by| *by != t.id) || dead.contains(&r.tx)
            });
            if blocked {
                dead.insert(t.id);
            }
        }
        if dead.len() == before {
            break;
        }
    }
    let deposit = match (
        l.confirmed.contains_key(&TxId::TxP1),
        l.confirmed.contains_key(&TxId::TxP2),
    ) {
        (false, _) => DepositState::NotPosted,
        (true, true) => DepositState::Reclaimed,
        (true, false) => DepositState::LockedLost,
    };
    Ownership {
        confirmed: l.order.clone(),
        unspent,
        dead: dead.into_iter().collect(),
        deposit,
        fees_sat: fees,
        confirmed_input_sat: cin,
        confirmed_output_sat: cout,
    }
}

/// Replays `scenario`, enforcing conflicts and spending conditions.
pub fn simulate_confirmation(g: &TxGraph, scenario: &LedgerScenario) -> Result<Ownership> {
    let mut l = Ledger::new(g, scenario.steps.first().map(|s| s.0));
    for &(id, h) in &scenario.steps {
        match l.try_confirm(g, id, h) {
            Ok(()) => l.confirm(g, id, h),
            Err(Fail::Conflict(m)) => return Err(Error::ConflictViolation(m)),
            Err(Fail::Condition(m)) => return Err(Error::ConditionViolation(m)),
        }
    }
    Ok(summarize(g, &l))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationSummary {
    pub sequences: u64,
    pub valid: u64,
    pub rejected: u64,
    pub co_confirmed: u64,
    pub reclaim_without_bribe: u64,
    pub value_mismatch: u64,
    pub reclaimed: u64,
}

impl EnumerationSummary {
    pub fn properties_hold(&self) -> bool {
        self.co_confirmed == 0 && self.reclaim_without_bribe == 0 && self.value_mismatch == 0
    }
}

/// Replays every ordering of every subset of the graph's transactions. Each
/// transaction confirms at the earliest height not below its predecessor at
/// which its conditions hold; orderings that cannot replay are rejected.
pub fn enumerate_scenarios(g: &TxGraph) -> EnumerationSummary {
    let ids: Vec<TxId> = g.txs.iter().map(|t| t.id).collect();
    let horizon: u32 = g
        .txs
        .iter()
        .flat_map(|t| t.outputs.iter())
        .map(|o| max_lock(&o.condition))
        .max()
        .unwrap_or(0)
        + 1;
    let mut s = EnumerationSummary::default();
    let mut used = vec![false; ids.len()];
    let mut l = Ledger::new(g, Some(TxId::Funding));
    walk(g, &ids, &mut used, &mut l, horizon, &mut s);
    s
}

fn max_lock(c: &Condition) -> u32 {
    match c {
        Condition::RelativeTimelock { blocks, then } => blocks + max_lock(then),
        Condition::AnyOf(cs) => cs.iter().map(max_lock).max().unwrap_or(0),
        _ => 0,
    }
}

fn record(g: &TxGraph, l: &Ledger, s: &mut EnumerationSummary) {
    s.sequences += 1;
    s.valid += 1;
    let o = summarize(g, l);
    if l.confirmed.contains_key(&TxId::Tx1) && l.confirmed.contains_key(&TxId::Tx2) {
        s.co_confirmed += 1;
    }
    if o.deposit == DepositState::Reclaimed {
        s.reclaimed += 1;
        if !l.confirmed.contains_key(&TxId::TxB) {
            s.reclaim_without_bribe += 1;
        }
    }
    let unspent: Sat = o.unspent.iter().map(|u| u.amount_sat).sum();
    let spent_in: Sat = l.spent.keys().filter_map(|r| g.output(*r)).map(|x| x.amount_sat).sum();
    if o.confirmed_output_sat + o.fees_sat != o.confirmed_input_sat
        || unspent + spent_in != o.confirmed_output_sat
    {
        s.value_mismatch += 1;
    }
}

fn walk(
    g: &TxGraph,
    ids: &[TxId],
    used: &mut Vec<bool>,
    l: &mut Ledger,
    horizon: u32,
    s: &mut EnumerationSummary,
) {
    record(g, l, s);
    let base = l
        .order
        .last()
        .and_then(|t| l.confirmed.get(t))
        .copied()
        .unwrap_or(0);
    for (k, &id) in ids.iter().enumerate() {
        if used[k] {
            continue;
        }
        let h = (base..=base + horizon).find(|&h| l.try_confirm(g, id, h).is_ok());
        match h {
            Some(h) => {
                used[k] = true;
                let saved = (l.confirmed.clone(), l.order.clone(), l.spent.clone());
                l.confirm(g, id, h);
                walk(g, ids, used, l, horizon, s);
                (l.confirmed, l.order, l.spent) = saved;
                used[k] = false;
            }
            None => {
                // every extension of this prefix through `id` is rejected
                s.sequences += 1;
                s.rejected += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> TxGraph {
        build_attack_graph(&AttackGraphParams::default()).unwrap()
    }

    #[test]
    fn canonical_graph_validates() {
        let r = validate_graph(&graph());
        assert!(r.ok(), "{:?}", r.violations);
    }

    #[test]
    fn revocation_and_old_state_conflict() {
        let c = graph().conflicts();
        assert_eq!(c, vec![(TxId::Tx1, TxId::Tx2, out(TxId::CommitmentOld, 0))]);
    }

    #[test]
    fn reclaim_condition_set() {
        let g = graph();
        let p2 = g.get(TxId::TxP2).unwrap();
        assert_eq!(
            p2.conditions,
            vec![
                Condition::MultiSig { m: 5, n: 9, must_include: Party::Strongest },
                Condition::RequiresConfirmedOutput(out(TxId::TxB, 1)),
            ]
        );
    }

    #[test]
    fn bad_threshold() {
        let p = AttackGraphParams::new(1_000_000, 500_000, 10, 3, 4, 3);
        assert!(matches!(build_attack_graph(&p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn missing_dummy_input_is_flagged() {
        let mut g = graph();
        g.get_mut(TxId::TxP2).unwrap().inputs.retain(|r| r.tx != TxId::TxB);
        let r = validate_graph(&g);
        assert!(r.violations.contains(&"deposit reclaimable without bribe confirmation".to_string()));
    }

    #[test]
    fn missing_timelock_is_flagged() {
        let mut g = graph();
        g.get_mut(TxId::CommitmentOld).unwrap().outputs[0].condition = Condition::AnyOf(vec![
            Condition::KeyOwner(Party::Cheated),
            Condition::KeyOwner(Party::Cheater),
        ]);
        let r = validate_graph(&g);
        assert!(r.violations.contains(&"cond₂ must be encumbered with a timelock".to_string()));
    }

    #[test]
    fn revocation_scenario() {
        let g = graph();
        let o = simulate_confirmation(
            &g,
            &LedgerScenario {
                steps: vec![(TxId::CommitmentOld, 10), (TxId::Tx1, 11)],
            },
        )
        .unwrap();
        assert_eq!(o.held_by(Party::Cheated), 10_000_000 - 10_000);
        assert_eq!(o.dead, vec![TxId::Tx2, TxId::TxB, TxId::TxP2]);
        assert_eq!(o.deposit, DepositState::NotPosted);
    }

    #[test]
    fn bribe_scenario_reclaims() {
        let g = graph();
        let h = 10;
        let o = simulate_confirmation(
            &g,
            &LedgerScenario {
                steps: vec![
                    (TxId::CommitmentOld, h),
                    (TxId::TxP1, h),
                    (TxId::Tx2, h + 3),
                    (TxId::TxB, h + 3),
                    (TxId::TxP2, h + 4),
                ],
            },
        )
        .unwrap();
        assert_eq!(o.held_by(Party::Cheater), 10_000_000 - 500_000);
        assert_eq!(o.held_by(Party::BlockMiner), 500_000 - 1);
        assert_eq!(o.deposit, DepositState::Reclaimed);
        assert_eq!(o.held_by(Party::Strongest), 320_000_001 + 1 - 10_000);
    }

    #[test]
    fn early_old_state_spend_hits_timelock() {
        let g = graph();
        let e = simulate_confirmation(
            &g,
            &LedgerScenario {
                steps: vec![(TxId::CommitmentOld, 10), (TxId::Tx2, 11)],
            },
        )
        .unwrap_err();
        assert!(matches!(e, Error::ConditionViolation(m) if m.contains("timelock")));
    }

    #[test]
    fn double_spend_is_conflict() {
        let g = graph();
        let e = simulate_confirmation(
            &g,
            &LedgerScenario {
                steps: vec![(TxId::CommitmentOld, 1), (TxId::Tx1, 2), (TxId::Tx2, 9)],
            },
        )
        .unwrap_err();
        assert!(matches!(e, Error::ConflictViolation(_)));
    }

    #[test]
    fn reclaim_needs_bribe_at_runtime() {
        let g = graph();
        let e = simulate_confirmation(
            &g,
            &LedgerScenario {
                steps: vec![(TxId::TxP1, 1), (TxId::TxP2, 2)],
            },
        )
        .unwrap_err();
        assert!(matches!(e, Error::ConditionViolation(_)));
    }

    #[test]
    fn collusion_unlocks_mutated_reclaim() {
        let mut g = graph();
        let p2 = g.get_mut(TxId::TxP2).unwrap();
        p2.inputs.retain(|r| r.tx != TxId::TxB);
        p2.outputs[0].amount_sat -= DUMMY_SAT;
        let sc = LedgerScenario {
            steps: vec![(TxId::TxP1, 1), (TxId::TxP2, 2)],
        };
        assert!(simulate_confirmation(&g, &sc).is_err());
        g.collusion = true;
        assert_eq!(simulate_confirmation(&g, &sc).unwrap().deposit, DepositState::Reclaimed);
    }

    #[test]
    fn json_round_trip() {
        let g = graph();
        assert_eq!(TxGraph::from_json(&g.to_json()).unwrap(), g);
        assert!(TxGraph::from_json("{").is_err());
    }

    #[test]
    fn exhaustive_properties() {
        for collusion in [false, true] {
            let mut g = graph();
            g.collusion = collusion;
            let s = enumerate_scenarios(&g);
            assert!(s.properties_hold(), "{s:?}");
            assert!(s.reclaimed > 0);
        }
    }
}
