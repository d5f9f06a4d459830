//! Flat key-value parameter files.
//!
//! ```toml
//! lambda = "0.5,0.485,0.015"
//! rounds = 6
//! timelock = 3
//! base_reward_btc = "6.25"
//! avg_tx_fee_sat = 10000
//! ```
//!
//! Money keys take exactly one of the `_sat` (integer) or `_btc` (decimal,
//! string or number) suffixes.

use std::path::Path;

use forkgame_core::empirics::parse_btc;
use forkgame_core::{GameParams, Sat};
use toml::{Table, Value};

const MONEY: [&str; 7] = [
    "base_reward",
    "avg_tx_fee",
    "revocation_fee",
    "bribe_fee",
    "deposit_slot_fee",
    "reclaim_slot_fee",
    "penalty",
];
const PLAIN: [&str; 8] = [
    "lambda",
    "rounds",
    "timelock",
    "txs_per_block",
    "deposit_slots",
    "reclaim_slots",
    "depositor",
    "strict",
];

fn money(t: &Table, key: &str) -> Result<Option<Sat>, String> {
    let sat = t.get(&format!("{key}_sat"));
    let btc = t.get(&format!("{key}_btc"));
    match (sat, btc) {
        (Some(_), Some(_)) => Err(format!("both {key}_sat and {key}_btc given")),
        (Some(Value::Integer(v)), None) => Ok(Some(*v)),
        (Some(v), None) => Err(format!("{key}_sat must be an integer, got {v}")),
        (None, Some(Value::String(s))) => parse_btc(s).map(Some).map_err(|e| format!("{key}_btc: {e}")),
        (None, Some(Value::Float(f))) => parse_btc(&format!("{f}")).map(Some).map_err(|e| format!("{key}_btc: {e}")),
        (None, Some(Value::Integer(i))) => parse_btc(&i.to_string()).map(Some).map_err(|e| format!("{key}_btc: {e}")),
        (None, Some(v)) => Err(format!("{key}_btc must be a decimal, got {v}")),
        (None, None) => Ok(None),
    }
}

fn int(t: &Table, key: &str) -> Result<Option<i64>, String> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(v)) => Ok(Some(*v)),
        Some(v) => Err(format!("{key} must be an integer, got {v}")),
    }
}

fn parse_lambda(v: &Value) -> Result<Vec<f64>, String> {
    let items: Vec<String> = match v {
        Value::String(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
        Value::Array(a) => a.iter().map(|x| x.to_string()).collect(),
        other => return Err(format!("lambda must be a comma list, got {other}")),
    };
    items
        .iter()
        .map(|x| x.parse::<f64>().map_err(|_| format!("bad power {x:?} in lambda")))
        .collect()
}

pub fn parse_params(text: &str) -> Result<GameParams, String> {
    let t: Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    for k in t.keys() {
        let known = PLAIN.contains(&k.as_str())
            || MONEY
                .iter()
                .any(|m| *k == format!("{m}_sat") || *k == format!("{m}_btc"));
        if !known {
            return Err(format!("unknown key {k:?}"));
        }
    }
    let lambda = parse_lambda(t.get("lambda").ok_or("missing key \"lambda\"")?)?;
    let rounds = int(&t, "rounds")?.ok_or("missing key \"rounds\"")?;
    let timelock = int(&t, "timelock")?.ok_or("missing key \"timelock\"")?;
    if rounds < 1 || timelock < 0 || rounds > u32::MAX as i64 {
        return Err("rounds must be positive and timelock non-negative".into());
    }
    let mut p = GameParams::new(lambda, rounds as u32, timelock as u32).map_err(|e| e.to_string())?;
    if let Some(b) = money(&t, "base_reward")? {
        p.base_reward = b;
    }
    if let Some(m) = int(&t, "txs_per_block")? {
        p.txs_per_block = m;
    }
    if let Some(f) = money(&t, "avg_tx_fee")? {
        p.avg_tx_fee = f;
    }
    let f = p.block_fee();
    p.revocation_fee = money(&t, "revocation_fee")?.unwrap_or(f + p.avg_tx_fee);
    p.bribe_fee = money(&t, "bribe_fee")?.unwrap_or(f + p.avg_tx_fee);
    if let Some(c) = int(&t, "deposit_slots")? {
        p.deposit_slots = c;
    }
    if let Some(c) = int(&t, "reclaim_slots")? {
        p.reclaim_slots = c;
    }
    p.deposit_slot_fee = money(&t, "deposit_slot_fee")?;
    p.reclaim_slot_fee = money(&t, "reclaim_slot_fee")?;
    p.penalty = money(&t, "penalty")?.unwrap_or(0);
    if let Some(d) = int(&t, "depositor")? {
        if d < 0 {
            return Err("depositor must be a player index".into());
        }
        p.depositor = Some(d as usize);
    }
    match t.get("strict") {
        None => {}
        Some(Value::Boolean(b)) => p.strict_distribution = *b,
        Some(v) => return Err(format!("strict must be a boolean, got {v}")),
    }
    Ok(p)
}

pub fn load_params(path: &Path) -> Result<GameParams, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_params(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let p = parse_params("lambda = \"0.5,0.3,0.2\"\nrounds = 5\ntimelock = 2\n").unwrap();
        assert_eq!(p.powers, vec![0.5, 0.3, 0.2]);
        assert_eq!(p.base_reward, 625_000_000);
    }

    #[test]
    fn btc_and_sat_keys() {
        let p = parse_params(
            "lambda = \"0.5,0.5\"\nrounds = 3\ntimelock = 1\nbase_reward_btc = \"6.25\"\npenalty_btc = 3.2\nbribe_fee_sat = 15500000\n",
        )
        .unwrap();
        assert_eq!(p.base_reward, 625_000_000);
        assert_eq!(p.penalty, 320_000_000);
        assert_eq!(p.bribe_fee, 15_500_000);
    }

    #[test]
    fn rejects_duplicate_money_and_unknown_keys() {
        let base = "lambda = \"1\"\nrounds = 3\ntimelock = 1\n";
        assert!(parse_params(&format!("{base}penalty_sat = 1\npenalty_btc = \"1\"\n")).is_err());
        assert!(parse_params(&format!("{base}lamda = 3\n")).is_err());
        assert!(parse_params("rounds = 3\ntimelock = 1\n").is_err());
    }
}
