//! Monte Carlo play of a strategy profile.
//!
//! Winners are drawn from a counter-based stream: trial `t` of seed `s` reads
//! stream `t` of a ChaCha8 generator keyed by `s`, and round `r` reads a fixed
//! word offset in it, so any trial can be replayed alone and the result does
//! not depend on the thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{settle, GameParams, Sat, SettlementReport};
use crate::error::{Error, Result};
use crate::game_core::{new_state, step, Action, GlobalState};
use crate::strategies::StrategyProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub state_digest: String,
    /// What each player would have done had it won.
    pub proposed: Vec<Action>,
    pub winner: usize,
    pub applied: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub seed: u64,
    pub trial: u64,
    pub rounds: Vec<RoundRecord>,
    pub final_state: GlobalState,
    pub settlement: SettlementReport,
}

impl GameTrace {
    /// One JSON object per round followed by one for the settlement.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rounds {
            let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        let line = serde_json::to_string(&serde_json::json!({
            "settlement": self.settlement,
            "final_state_digest": self.final_state.digest(),
        }))
        .map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
        Ok(())
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Inverse-CDF draw over the normalized powers.
fn draw_winner(rng: &mut ChaCha8Rng, round: u32, powers: &[f64]) -> usize {
    rng.set_word_pos(round as u128 * 2);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in powers.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    powers.len() - 1
}

/// The winner sequence of a trial, independent of the strategies.
pub fn winner_sequence(params: &GameParams, seed: u64, trial: u64) -> Vec<usize> {
    let mut rng = trial_rng(seed, trial);
    (1..=params.rounds)
        .map(|r| draw_winner(&mut rng, r, &params.powers))
        .collect()
}

fn check_profile(profile: &StrategyProfile, params: &GameParams) -> Result<()> {
    if profile.len() != params.n() {
        return Err(Error::InvalidParams(format!(
            "profile has {} strategies for {} players",
            profile.len(),
            params.n()
        )));
    }
    Ok(())
}

/// Plays one game along a fixed winner sequence.
pub fn play_sequence(
    profile: &StrategyProfile,
    params: &GameParams,
    winners: &[usize],
) -> Result<(Vec<RoundRecord>, GlobalState)> {
    check_profile(profile, params)?;
    let mut state = new_state();
    let mut records = Vec::with_capacity(winners.len());
    for &w in winners {
        let proposed: Vec<Action> = (0..params.n())
            .map(|i| profile.strategies[i].decide(&state, i, params))
            .collect();
        let applied = proposed[w];
        let digest = state.digest();
        let round = state.round;
        state = step(&state, &applied, w, params)?;
        records.push(RoundRecord {
            round,
            state_digest: digest,
            proposed,
            winner: w,
            applied,
        });
    }
    Ok((records, state))
}

/// Trial `trial` of seed `seed`, with a full trace.
pub fn run_trial(profile: &StrategyProfile, params: &GameParams, seed: u64, trial: u64) -> Result<GameTrace> {
    let winners = winner_sequence(params, seed, trial);
    let (rounds, final_state) = play_sequence(profile, params, &winners)?;
    let settlement = settle(&final_state, params)?;
    Ok(GameTrace {
        seed,
        trial,
        rounds,
        final_state,
        settlement,
    })
}

pub fn run_game(profile: &StrategyProfile, params: &GameParams, seed: u64) -> Result<GameTrace> {
    run_trial(profile, params, seed, 0)
}

/// Rewards only, without building records.
fn trial_rewards(profile: &StrategyProfile, params: &GameParams, seed: u64, trial: u64) -> Result<Vec<Sat>> {
    let mut rng = trial_rng(seed, trial);
    let mut state = new_state();
    for r in 1..=params.rounds {
        let w = draw_winner(&mut rng, r, &params.powers);
        let a = profile.strategies[w].decide(&state, w, params);
        state = step(&state, &a, w, params)?;
    }
    Ok(settle(&state, params)?.per_player_reward)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Set when fewer than two trials make the standard error meaningless.
    pub degenerate: bool,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn estimate(samples: &[f64]) -> UtilityEstimate {
    let n = samples.len();
    if n == 0 {
        return UtilityEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            trials: 0,
            degenerate: true,
        };
    }
    let mean = pairwise_sum(samples) / n as f64;
    if n < 2 {
        return UtilityEstimate {
            mean,
            stderr: f64::NAN,
            trials: 1,
            degenerate: true,
        };
    }
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    UtilityEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        trials: n as u64,
        degenerate: false,
    }
}

/// Per-player mean reward over `trials` independent games.
pub fn estimate_utilities(
    profile: &StrategyProfile,
    params: &GameParams,
    trials: u64,
    seed: u64,
) -> Result<Vec<UtilityEstimate>> {
    check_profile(profile, params)?;
    let rewards: Vec<Vec<Sat>> = (0..trials)
        .into_par_iter()
        .map(|t| trial_rewards(profile, params, seed, t))
        .collect::<Result<_>>()?;
    Ok((0..params.n())
        .map(|i| {
            let col: Vec<f64> = rewards.iter().map(|r| r[i] as f64).collect();
            estimate(&col)
        })
        .collect())
}
