//! Exact expected utilities by enumerating every winner sequence, best-response
//! and dominance queries, and the report of equilibrium hypotheses.
//!
//! When every power is a short decimal (e.g. 0.5, 0.3, 0.2) the enumeration
//! runs in scaled 128-bit integers and all comparisons are exact. Otherwise,
//! or on overflow, it falls back to double precision.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_economics::{
    bf_bribe_raw_general, bf_bribe_raw_simplified, decimal_ratio, escape_weight, penalty_floor,
};
use crate::economics::{reward_of, settle_chain_of, validate_params, GameParams, Sat, Severity};
use crate::error::{Error, Result};
use crate::game_core::{feasible_actions, step, Action, GlobalState, TxSetKind};
use crate::strategies::{tie_rank, BuiltinStrategy, StrategyProfile, StrategyRef};

/// Strictness tolerance on utilities, in satoshi.
pub const EPSILON: f64 = 1e-6;
/// Default cap on enumerated leaves.
pub const DEFAULT_BUDGET: f64 = 1e7;

enum EvalErr {
    Game(Error),
    Overflow,
}

impl From<Error> for EvalErr {
    fn from(e: Error) -> Self {
        EvalErr::Game(e)
    }
}

trait Field: Copy + Send + Sync + PartialOrd {
    fn zero() -> Self;
    fn sat(v: Sat) -> Self;
    fn add(self, o: Self) -> Option<Self>;
    fn mul(self, o: Self) -> Option<Self>;
}

impl Field for i128 {
    fn zero() -> Self {
        0
    }
    fn sat(v: Sat) -> Self {
        v as i128
    }
    fn add(self, o: Self) -> Option<Self> {
        self.checked_add(o)
    }
    fn mul(self, o: Self) -> Option<Self> {
        self.checked_mul(o)
    }
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn sat(v: Sat) -> Self {
        v as f64
    }
    fn add(self, o: Self) -> Option<Self> {
        Some(self + o)
    }
    fn mul(self, o: Self) -> Option<Self> {
        Some(self * o)
    }
}

/// Integer weights `k_i` with `lambda_i = k_i / den`, when the powers allow it.
fn exact_weights(params: &GameParams) -> Option<(Vec<i128>, i128)> {
    let ratios: Vec<_> = params.powers.iter().map(|&p| decimal_ratio(p)).collect::<Option<_>>()?;
    let den = ratios.iter().map(|r| r.1).max()?;
    let k: Vec<i128> = ratios.iter().map(|&(n, d)| n * (den / d)).collect();
    (k.iter().sum::<i128>() == den).then_some((k, den))
}

fn levels(state: &GlobalState, params: &GameParams) -> u32 {
    (params.rounds + 1).saturating_sub(state.round)
}

fn check_budget(state: &GlobalState, params: &GameParams, budget: f64) -> Result<()> {
    let required = (params.n() as f64).powi(levels(state, params) as i32);
    if required > budget {
        return Err(Error::InstanceTooLarge {
            required,
            limit: budget,
        });
    }
    Ok(())
}

fn leaf<F: Field>(state: &GlobalState, params: &GameParams) -> Vec<F> {
    settle_chain_of(state, params)
        .per_player_reward
        .into_iter()
        .map(F::sat)
        .collect()
}

fn weighted_sum<F: Field>(parts: Vec<(F, Vec<F>)>, n: usize) -> std::result::Result<Vec<F>, EvalErr> {
    let mut acc = vec![F::zero(); n];
    for (w, v) in parts {
        for i in 0..n {
            acc[i] = acc[i].add(w.mul(v[i]).ok_or(EvalErr::Overflow)?).ok_or(EvalErr::Overflow)?;
        }
    }
    Ok(acc)
}

fn decide(profile: &StrategyProfile, state: &GlobalState, w: usize, params: &GameParams) -> Action {
    profile.strategies[w].decide(state, w, params)
}

/// Scaled utility vector of the subgame at `state`. `over` replaces one
/// player's action at this node only.
fn eval<F: Field>(
    state: &GlobalState,
    profile: &StrategyProfile,
    params: &GameParams,
    w: &[F],
    over: Option<(usize, Action)>,
) -> std::result::Result<Vec<F>, EvalErr> {
    if state.round > params.rounds {
        return Ok(leaf(state, params));
    }
    let n = params.n();
    let mut parts = Vec::with_capacity(n);
    for (win, &wt) in w.iter().enumerate() {
        let a = match over {
            Some((p, a)) if p == win => a,
            _ => decide(profile, state, win, params),
        };
        let next = step(state, &a, win, params)?;
        parts.push((wt, eval(&next, profile, params, w, None)?));
    }
    weighted_sum(parts, n)
}

/// Same as `eval` but with the first level fanned out over threads.
fn eval_root<F: Field>(
    state: &GlobalState,
    profile: &StrategyProfile,
    params: &GameParams,
    w: &[F],
    over: Option<(usize, Action)>,
) -> std::result::Result<Vec<F>, EvalErr> {
    if state.round > params.rounds {
        return Ok(leaf(state, params));
    }
    let parts: Vec<std::result::Result<(F, Vec<F>), EvalErr>> = (0..params.n())
        .into_par_iter()
        .map(|win| {
            let a = match over {
                Some((p, a)) if p == win => a,
                _ => decide(profile, state, win, params),
            };
            let next = step(state, &a, win, params)?;
            Ok((w[win], eval(&next, profile, params, w, None)?))
        })
        .collect();
    weighted_sum(parts.into_iter().collect::<std::result::Result<_, _>>()?, params.n())
}

/// A utility vector that remembers whether it was computed exactly.
#[derive(Clone, Debug)]
enum Utils {
    Exact { num: Vec<i128>, scale: i128 },
    Float(Vec<f64>),
}

impl Utils {
    fn to_f64(&self) -> Vec<f64> {
        match self {
            Utils::Exact { num, scale } => num.iter().map(|&v| v as f64 / *scale as f64).collect(),
            Utils::Float(v) => v.clone(),
        }
    }

    /// `self[i] - other[i]` in satoshi, computed exactly when possible.
    fn diff(&self, other: &Utils, i: usize) -> f64 {
        match (self, other) {
            (Utils::Exact { num: a, scale }, Utils::Exact { num: b, .. }) => {
                (a[i] - b[i]) as f64 / *scale as f64
            }
            _ => self.to_f64()[i] - other.to_f64()[i],
        }
    }
}

fn compute(
    state: &GlobalState,
    profile: &StrategyProfile,
    params: &GameParams,
    over: Option<(usize, Action)>,
) -> Result<Utils> {
    if profile.len() != params.n() {
        return Err(Error::InvalidParams(format!(
            "profile has {} strategies for {} players",
            profile.len(),
            params.n()
        )));
    }
    if let Some((k, den)) = exact_weights(params) {
        let scale = den.checked_pow(levels(state, params));
        if let Some(scale) = scale {
            match eval_root::<i128>(state, profile, params, &k, over) {
                Ok(num) => return Ok(Utils::Exact { num, scale }),
                Err(EvalErr::Game(e)) => return Err(e),
                Err(EvalErr::Overflow) => {}
            }
        }
    }
    match eval_root::<f64>(state, profile, params, &params.powers, over) {
        Ok(v) => Ok(Utils::Float(v)),
        Err(EvalErr::Game(e)) => Err(e),
        Err(EvalErr::Overflow) => unreachable!("float arithmetic does not overflow"),
    }
}

/// Enumeration settings.
#[derive(Clone, Copy, Debug)]
pub struct Oracle {
    pub budget: f64,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub action: Action,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub action: Action,
    /// Gap to the runner-up; infinite when only one action is feasible, zero on ties.
    pub margin: f64,
    pub ties: Vec<Action>,
    pub values: Vec<ActionValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport {
    pub player: usize,
    pub is_best_response: bool,
    pub witness_strategy: Option<String>,
    /// Best deviation utility minus the profile utility.
    pub utility_gap: f64,
    pub baseline: f64,
    pub deviations: Vec<(String, f64)>,
}

/// Deviation set for best-response checks.
#[derive(Clone, Debug)]
pub enum StrategySpace {
    /// A finite list of strategies.
    Library(Vec<StrategyRef>),
    /// Every pure strategy, solved by backward induction on the player's own nodes.
    Full,
}

impl StrategySpace {
    pub fn builtin() -> Self {
        StrategySpace::Library(BuiltinStrategy::ALL.iter().map(|b| b.as_ref()).collect())
    }
}

impl Oracle {
    pub fn new(budget: f64) -> Self {
        Oracle { budget }
    }

    /// Expected final reward of every player in the subgame starting at `from`.
    pub fn exact_utilities(
        &self,
        profile: &StrategyProfile,
        params: &GameParams,
        from: &GlobalState,
    ) -> Result<Vec<f64>> {
        check_budget(from, params, self.budget)?;
        Ok(compute(from, profile, params, None)?.to_f64())
    }

    /// The action of `player` at `state` whose one-shot substitution maximizes
    /// its utility, everything else held fixed.
    pub fn dominating_action(
        &self,
        state: &GlobalState,
        player: usize,
        params: &GameParams,
        profile: &StrategyProfile,
    ) -> Result<Dominance> {
        check_budget(state, params, self.budget * 0.1)
            .map_err(|_| Error::InstanceTooLarge {
                required: (params.n() as f64).powi(levels(state, params) as i32) * 10.0,
                limit: self.budget,
            })?;
        if state.round > params.rounds {
            return Err(Error::Domain("game is already over".into()));
        }
        let acts = feasible_actions(state, params);
        let mut scored: Vec<(Action, Utils)> = Vec::with_capacity(acts.len());
        for a in acts {
            scored.push((a, compute(state, profile, params, Some((player, a)))?));
        }
        let base = scored[0].1.clone();
        // order by exact gain over an arbitrary common reference, then tie rank
        let mut keyed: Vec<(Action, f64)> = scored
            .iter()
            .map(|(a, u)| (*a, u.diff(&base, player)))
            .collect();
        keyed.sort_by(|x, y| {
            y.1.partial_cmp(&x.1)
                .unwrap()
                .then(tie_rank(&x.0, params).cmp(&tie_rank(&y.0, params)))
        });
        let (best, best_v) = keyed[0];
        let ties: Vec<Action> = keyed[1..]
            .iter()
            .filter(|(_, v)| (best_v - v).abs() <= EPSILON)
            .map(|(a, _)| *a)
            .collect();
        let margin = match keyed.get(1) {
            None => f64::INFINITY,
            Some(_) if !ties.is_empty() => 0.0,
            Some((_, v)) => best_v - v,
        };
        let values = scored
            .iter()
            .map(|(a, u)| ActionValue {
                action: *a,
                utility: u.to_f64()[player],
            })
            .collect();
        Ok(Dominance {
            action: best,
            margin,
            ties,
            values,
        })
    }

    /// Checks whether `player` can gain more than `EPSILON` by deviating within `space`.
    pub fn best_response_check(
        &self,
        profile: &StrategyProfile,
        player: usize,
        params: &GameParams,
        space: &StrategySpace,
    ) -> Result<BestResponseReport> {
        let root = crate::game_core::new_state();
        check_budget(&root, params, self.budget)?;
        let base = compute(&root, profile, params, None)?;
        let baseline = base.to_f64()[player];
        let mut deviations = Vec::new();
        match space {
            StrategySpace::Library(list) => {
                for s in list {
                    let alt = profile.with_replaced(player, s.clone());
                    let u = compute(&root, &alt, params, None)?;
                    deviations.push((s.name(), u.diff(&base, player)));
                }
            }
            StrategySpace::Full => {
                let mut memo = HashMap::new();
                let best = best_response_value(&root, profile, player, params, &mut memo)?;
                deviations.push(("optimal-response".to_string(), best - baseline));
            }
        }
        let (witness, gap) = deviations
            .iter()
            .fold((None, f64::NEG_INFINITY), |(w, g), (name, d)| {
                if *d > g {
                    (Some(name.clone()), *d)
                } else {
                    (w, g)
                }
            });
        let is_br = gap <= EPSILON;
        Ok(BestResponseReport {
            player,
            is_best_response: is_br,
            witness_strategy: if is_br { None } else { witness },
            utility_gap: gap,
            baseline,
            deviations,
        })
    }

    /// Best-response checks for every player.
    pub fn nash_check(
        &self,
        profile: &StrategyProfile,
        params: &GameParams,
        space: &StrategySpace,
    ) -> Result<Vec<BestResponseReport>> {
        (0..params.n())
            .map(|i| self.best_response_check(profile, i, params, space))
            .collect()
    }
}

/// Value of the best pure response of `player` against the rest of `profile`.
fn best_response_value(
    state: &GlobalState,
    profile: &StrategyProfile,
    player: usize,
    params: &GameParams,
    memo: &mut HashMap<GlobalState, f64>,
) -> Result<f64> {
    if state.round > params.rounds {
        return Ok(settle_chain_of(state, params).per_player_reward[player] as f64);
    }
    if let Some(v) = memo.get(state) {
        return Ok(*v);
    }
    let mut total = 0.0;
    for (w, &lam) in params.powers.iter().enumerate() {
        let v = if w == player {
            let mut best = f64::NEG_INFINITY;
            for a in feasible_actions(state, params) {
                let next = step(state, &a, w, params)?;
                best = best.max(best_response_value(&next, profile, player, params, memo)?);
            }
            best
        } else {
            let a = decide(profile, state, w, params);
            best_response_value(&step(state, &a, w, params)?, profile, player, params, memo)?
        };
        total += lam * v;
    }
    memo.insert(state.clone(), total);
    Ok(total)
}

pub fn exact_utilities(profile: &StrategyProfile, params: &GameParams, from: &GlobalState) -> Result<Vec<f64>> {
    Oracle::default().exact_utilities(profile, params, from)
}

pub fn dominating_action(
    state: &GlobalState,
    player: usize,
    params: &GameParams,
    profile: &StrategyProfile,
) -> Result<Dominance> {
    Oracle::default().dominating_action(state, player, params, profile)
}

pub fn best_response_check(
    profile: &StrategyProfile,
    player: usize,
    params: &GameParams,
    space: &StrategySpace,
) -> Result<BestResponseReport> {
    Oracle::default().best_response_check(profile, player, params, space)
}

/// Exact one-shot value of `action` for `player`, usable as the continuation
/// value of the credibility filter on enumerable instances.
pub fn action_value(
    state: &GlobalState,
    player: usize,
    action: Action,
    params: &GameParams,
    profile: &StrategyProfile,
) -> Result<f64> {
    check_budget(state, params, DEFAULT_BUDGET)?;
    Ok(compute(state, profile, params, Some((player, action)))?.to_f64()[player])
}

/// Probability of every terminal state reachable from `from` under `profile`.
pub fn outcome_distribution(
    profile: &StrategyProfile,
    params: &GameParams,
    from: &GlobalState,
) -> Result<Vec<(GlobalState, f64)>> {
    check_budget(from, params, DEFAULT_BUDGET)?;
    let mut acc: HashMap<GlobalState, f64> = HashMap::new();
    let mut order = Vec::new();
    fn walk(
        s: &GlobalState,
        p: f64,
        profile: &StrategyProfile,
        params: &GameParams,
        acc: &mut HashMap<GlobalState, f64>,
        order: &mut Vec<GlobalState>,
    ) -> Result<()> {
        if s.round > params.rounds {
            if !acc.contains_key(s) {
                order.push(s.clone());
            }
            *acc.entry(s.clone()).or_insert(0.0) += p;
            return Ok(());
        }
        for (w, &lam) in params.powers.iter().enumerate() {
            let a = decide(profile, s, w, params);
            walk(&step(s, &a, w, params)?, p * lam, profile, params, acc, order)?;
        }
        Ok(())
    }
    walk(from, 1.0, profile, params, &mut acc, &mut order)?;
    Ok(order.into_iter().map(|s| {
        let p = acc[&s];
        (s, p)
    }).collect())
}

/// One named hypothesis with its computed quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub value: f64,
    pub threshold: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub bribe_premium: Sat,
    pub reward_order_holds: bool,
    pub continue_threshold: Sat,
    pub continue_holds: bool,
    pub fork_thresholds: Vec<f64>,
    pub no_fork_holds: Vec<bool>,
    pub small_bribe: bool,
    pub revocation_above_fee: bool,
    pub y: f64,
    pub y_term: f64,
    pub txs1_first_holds: bool,
    pub strongest: usize,
    pub bribe_over_strongest: f64,
    pub fee_ratio: f64,
    pub survive_cap: f64,
    pub penalty_threshold: f64,
    pub penalty_floor: Sat,
    pub penalty_holds: bool,
    pub deposit_deters_holds: bool,
    pub escape_weight: f64,
    pub general_bound: Option<f64>,
    pub simplified_bound: f64,
    pub reclaim_above_fee: bool,
    pub weakest_above_escape: bool,
    pub y_term_half: f64,
    pub window_exists: bool,
    pub main_holds: bool,
    pub strongest_unique: bool,
    pub strict_flags: Vec<String>,
}

impl ConditionReport {
    /// Flat view: one entry per hypothesis.
    pub fn entries(&self) -> Vec<ConditionEntry> {
        let e = |name: &str, value: f64, threshold: Option<f64>, pass: bool| ConditionEntry {
            name: name.to_string(),
            value,
            threshold,
            pass,
        };
        let prem = self.bribe_premium as f64;
        let mut out = vec![
            e("reward_order", prem, None, self.reward_order_holds),
            e("continue_threshold", prem, Some(self.continue_threshold as f64), self.continue_holds),
        ];
        for (i, (t, ok)) in self.fork_thresholds.iter().zip(&self.no_fork_holds).enumerate() {
            out.push(e(&format!("no_fork_threshold_player_{i}"), prem, Some(*t), *ok));
        }
        out.extend([
            e("small_bribe", prem, None, self.small_bribe),
            e("revocation_above_fee", prem, None, self.revocation_above_fee),
            e("y", self.y, None, self.y > 0.0),
            e("y_term", self.y_term, Some(0.0), self.y_term > 0.0),
            e("txs1_first", prem, None, self.txs1_first_holds),
            e("bribe_over_strongest", prem, Some(self.bribe_over_strongest), prem > self.bribe_over_strongest),
            e("fee_ratio", self.fee_ratio, Some(self.survive_cap), self.fee_ratio > self.survive_cap),
            e("penalty", self.penalty_floor as f64, Some(self.penalty_threshold), self.penalty_holds),
            e("deposit_deters", prem, None, self.deposit_deters_holds),
            e("escape_weight", self.escape_weight, None, true),
            e(
                "general_bound",
                prem,
                self.general_bound,
                self.general_bound.is_some_and(|b| prem > b),
            ),
            e("simplified_bound", prem, Some(self.simplified_bound), prem > self.simplified_bound),
            e("reclaim_above_fee", prem, None, self.reclaim_above_fee),
            e("weakest_above_escape", self.escape_weight, None, self.weakest_above_escape),
            e("y_term_half", self.y_term_half, Some(0.0), self.y_term_half > 0.0),
            e("window_exists", prem, None, self.window_exists),
            e("main", prem, None, self.main_holds),
            e("strongest_unique", 0.0, None, self.strongest_unique),
        ]);
        out
    }
}

/// Evaluates every equilibrium hypothesis on `params`.
pub fn theorem_conditions(params: &GameParams) -> ConditionReport {
    let b = params.base_reward;
    let f = params.block_fee();
    let f1 = params.revocation_fee;
    let d1 = f1 - f;
    let prem = params.bribe_premium();
    let fb = (f + b) as f64;
    let t = params.timelock;
    let s = params.strongest();
    let lam_s = params.powers[s];

    let u = reward_of(TxSetKind::Unrelated, params);
    let reward_order_holds = reward_of(TxSetKind::Txs2, params) > reward_of(TxSetKind::Txs1, params)
        && reward_of(TxSetKind::Txs1, params) > u
        && reward_of(TxSetKind::TxsP2, params) > u;

    let fork_thresholds: Vec<f64> = params.powers.iter().map(|l| l * fb).collect();
    let no_fork_holds = fork_thresholds.iter().map(|&th| (prem as f64) < th).collect();

    let small_bribe = (prem as i128) * 100 < (f + b) as i128;
    let below_own = |l: f64| (prem as f64) * l < d1 as f64;
    let y: f64 = params
        .powers
        .iter()
        .filter(|&&l| l > 0.01 && below_own(l))
        .sum();
    let y_term = 1.0 - 1.01 * (1.0 - y).powi(t as i32);
    let txs1_first_holds = small_bribe && f1 > f && y_term > 0.0;

    let bribe_over_strongest = d1 as f64 / lam_s;
    let fee_ratio = fb / (f1 + b) as f64;
    let survive_cap = 1.0 - lam_s * lam_s;
    let penalty_threshold = lam_s * fb;
    let floor = penalty_floor(lam_s, f, b);
    let penalty_holds = params.penalty >= floor;
    let deposit_deters_holds =
        (prem as f64) > bribe_over_strongest && fee_ratio > survive_cap && penalty_holds;

    let escape = escape_weight(t);
    let general_bound = (lam_s > escape && f1 > f).then(|| {
        bf_bribe_raw_general(
            params.avg_tx_fee,
            f1,
            f,
            lam_s,
            t,
            params.deposit_slots,
            params.reclaim_slots,
            params.deposit_slot_fee(),
            params.reclaim_slot_fee(),
        )
    });
    let simplified_bound = bf_bribe_raw_simplified(params.avg_tx_fee, f1, f, lam_s);
    let reclaim_above_fee = params.reclaim_block_fee() > f;
    let weakest_above_escape = params.weakest_power() > escape;
    let y_term_half = 1.0 - 1.01 * (1.0 - y).powf(t as f64 / 2.0);
    let window_exists = params
        .powers
        .iter()
        .any(|&l| l > 0.01 && l < 0.02 && below_own(l));
    let main_holds = general_bound.is_some_and(|g| prem as f64 > g)
        && fee_ratio > survive_cap
        && f1 > f
        && reclaim_above_fee
        && weakest_above_escape
        && small_bribe
        && y_term_half > 0.0;

    let strongest_unique = params.powers.iter().filter(|&&l| l == lam_s).count() == 1;
    let strict_flags = validate_params(params)
        .into_iter()
        .map(|v| match v.severity {
            Severity::Error => format!("error: {}", v.message),
            Severity::Warning => format!("warning: {}", v.message),
        })
        .collect();

    ConditionReport {
        bribe_premium: prem,
        reward_order_holds,
        continue_threshold: f1 + b,
        continue_holds: prem < f1 + b,
        fork_thresholds,
        no_fork_holds,
        small_bribe,
        revocation_above_fee: f1 > f,
        y,
        y_term,
        txs1_first_holds,
        strongest: s,
        bribe_over_strongest,
        fee_ratio,
        survive_cap,
        penalty_threshold,
        penalty_floor: floor,
        penalty_holds,
        deposit_deters_holds,
        escape_weight: escape,
        general_bound,
        simplified_bound,
        reclaim_above_fee,
        weakest_above_escape,
        y_term_half,
        window_exists,
        main_holds,
        strongest_unique,
        strict_flags,
    }
}
