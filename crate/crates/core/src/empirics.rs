//! Fee and pool-share data: CSV ingestion, summary statistics, and game
//! parameters derived from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::economics::{validate_params, GameParams, Sat, Severity, Violation, SAT_PER_BTC};
use crate::error::{Error, Result};

pub const FEE_HEADER: [&str; 4] = ["week", "avg_block_fee_btc", "avg_tx_fee_btc", "tx_per_block"];
pub const POOL_HEADER: [&str; 2] = ["pool", "blocks"];

/// Hashrates of common mining devices, in hashes per second.
pub const DEVICE_HASHRATES: [(&str, f64); 4] = [
    ("Nvidia GeForce RTX 4090", 2.75e8),
    ("Nvidia GeForce RTX 3090", 9.4e7),
    ("Bitmain Antminer S19 XP Hyd", 2.55e14),
    ("Baikal BK-G28", 2.8e10),
];

/// Total Bitcoin hashrate in 2022, hashes per second.
pub const NETWORK_HASHRATE_2022: f64 = 2e20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeeRecord {
    pub period: String,
    pub avg_block_fee_sat: Sat,
    pub avg_tx_fee_sat: Sat,
    pub avg_tx_per_block: f64,
}

impl FeeRecord {
    /// True when the block fee matches fee-per-tx times tx count within 10%.
    pub fn is_consistent(&self) -> bool {
        let implied = self.avg_tx_fee_sat as f64 * self.avg_tx_per_block;
        let actual = self.avg_block_fee_sat as f64;
        (implied - actual).abs() <= 0.1 * actual.abs().max(implied.abs())
    }
}

/// Parses a BTC decimal string into satoshi without going through floats.
pub fn parse_btc(s: &str) -> std::result::Result<Sat, String> {
    let t = s.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(format!("not a BTC amount: {s:?}"));
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(format!("not a BTC amount: {s:?}"));
    }
    let frac_trim = frac.trim_end_matches('0');
    if frac_trim.len() > 8 {
        return Err(format!("more than 8 fraction digits: {s:?}"));
    }
    let whole: Sat = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| format!("amount out of range: {s:?}"))?
    };
    let frac_sat: Sat = format!("{frac_trim:0<8}").parse().unwrap_or(0);
    let v = whole
        .checked_mul(SAT_PER_BTC)
        .and_then(|w| w.checked_add(frac_sat))
        .ok_or_else(|| format!("amount out of range: {s:?}"))?;
    Ok(if neg { -v } else { v })
}

/// Satoshi as a BTC decimal string with eight fraction digits.
pub fn format_btc(sat: Sat) -> String {
    let sign = if sat < 0 { "-" } else { "" };
    let a = sat.unsigned_abs();
    let unit = SAT_PER_BTC as u64;
    format!("{sign}{}.{:08}", a / unit, a % unit)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "expected header {}, found {}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Parses weekly fee records from CSV text.
pub fn parse_fee_csv(text: &str) -> Result<Vec<FeeRecord>> {
    if text.trim().is_empty() {
        return Err(Error::Schema("empty file, expected a header".into()));
    }
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    check_header(&header, &FEE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let bad = |message: String| Error::Parse { line, message };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let tx_per_block: f64 = field(3)
            .parse()
            .map_err(|_| bad(format!("tx_per_block is not a number: {:?}", field(3))))?;
        if !tx_per_block.is_finite() || tx_per_block < 0.0 {
            return Err(bad("tx_per_block must be non-negative".into()));
        }
        let r = FeeRecord {
            period: field(0).to_string(),
            avg_block_fee_sat: parse_btc(field(1)).map_err(bad)?,
            avg_tx_fee_sat: parse_btc(field(2)).map_err(bad)?,
            avg_tx_per_block: tx_per_block,
        };
        if r.avg_block_fee_sat < 0 || r.avg_tx_fee_sat < 0 {
            return Err(bad("fees must be non-negative".into()));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_fee_csv(path: impl AsRef<Path>) -> Result<Vec<FeeRecord>> {
    parse_fee_csv(&std::fs::read_to_string(path)?)
}

/// Periods whose block fee disagrees with tx fee times tx count.
pub fn consistency_warnings(records: &[FeeRecord]) -> Vec<String> {
    records
        .iter()
        .filter(|r| !r.is_consistent())
        .map(|r| format!("{}: block fee differs from tx fee x tx count by more than 10%", r.period))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeeSummary {
    pub periods: usize,
    pub min_block_fee_sat: Sat,
    pub max_block_fee_sat: Sat,
    pub mean_block_fee_sat: f64,
    pub min_tx_fee_sat: Sat,
    pub max_tx_fee_sat: Sat,
    pub mean_tx_fee_sat: f64,
    pub mean_tx_per_block: f64,
}

pub fn fee_summary(records: &[FeeRecord]) -> Result<FeeSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = records.len() as f64;
    let block: Vec<Sat> = records.iter().map(|r| r.avg_block_fee_sat).collect();
    let tx: Vec<Sat> = records.iter().map(|r| r.avg_tx_fee_sat).collect();
    Ok(FeeSummary {
        periods: records.len(),
        min_block_fee_sat: *block.iter().min().unwrap(),
        max_block_fee_sat: *block.iter().max().unwrap(),
        mean_block_fee_sat: block.iter().map(|&v| v as i128).sum::<i128>() as f64 / n,
        min_tx_fee_sat: *tx.iter().min().unwrap(),
        max_tx_fee_sat: *tx.iter().max().unwrap(),
        mean_tx_fee_sat: tx.iter().map(|&v| v as i128).sum::<i128>() as f64 / n,
        mean_tx_per_block: records.iter().map(|r| r.avg_tx_per_block).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolShare {
    pub pool: String,
    pub blocks: u64,
    pub share: f64,
}

/// Pools sorted by share, largest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolShareTable {
    pub rows: Vec<PoolShare>,
    pub total_blocks: u64,
}

impl PoolShareTable {
    pub fn share_of(&self, pool: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.pool == pool).map(|r| r.share)
    }

    /// Share of the largest pool.
    pub fn strongest_share(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.share)
    }

    /// Pools holding strictly between 1% and 2%.
    pub fn window_pools(&self) -> Vec<&PoolShare> {
        self.rows
            .iter()
            .filter(|r| r.share > 0.01 && r.share < 0.02)
            .collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.share).collect()
    }
}

pub fn pool_shares(block_counts: &[(String, u64)]) -> Result<PoolShareTable> {
    let total: u64 = block_counts.iter().map(|(_, c)| *c).sum();
    if block_counts.is_empty() || total == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rows: Vec<PoolShare> = block_counts
        .iter()
        .map(|(name, c)| PoolShare {
            pool: name.clone(),
            blocks: *c,
            share: *c as f64 / total as f64,
        })
        .collect();
    // stable: equal counts keep input order
    rows.sort_by(|a, b| b.blocks.cmp(&a.blocks));
    Ok(PoolShareTable {
        rows,
        total_blocks: total,
    })
}

pub fn parse_pool_csv(text: &str) -> Result<Vec<(String, u64)>> {
    if text.trim().is_empty() {
        return Err(Error::Schema("empty file, expected a header".into()));
    }
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    check_header(&header, &POOL_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let name = rec.get(0).unwrap_or("").to_string();
        if name.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty pool name".into(),
            });
        }
        let blocks = rec.get(1).unwrap_or("").parse::<u64>().map_err(|_| Error::Parse {
            line,
            message: format!("block count is not a non-negative integer: {:?}", rec.get(1).unwrap_or("")),
        })?;
        out.push((name, blocks));
    }
    Ok(out)
}

pub fn load_pool_csv(path: impl AsRef<Path>) -> Result<Vec<(String, u64)>> {
    parse_pool_csv(&std::fs::read_to_string(path)?)
}

/// Fraction of total hashrate held by a single device.
pub fn estimate_lambda_min(device_hashrate: f64, network_hashrate: f64) -> Result<f64> {
    if !(device_hashrate > 0.0 && device_hashrate.is_finite()) {
        return Err(Error::Domain("device hashrate must be positive".into()));
    }
    if !(network_hashrate > 0.0 && network_hashrate.is_finite()) {
        return Err(Error::Domain("network hashrate must be positive".into()));
    }
    if device_hashrate > network_hashrate {
        return Err(Error::Domain("device hashrate exceeds the network".into()));
    }
    Ok(device_hashrate / network_hashrate)
}

/// Game terms not taken from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameTerms {
    pub base_reward: Sat,
    pub rounds: u32,
    pub timelock: u32,
    pub revocation_fee: Sat,
    pub bribe_fee: Sat,
    pub penalty: Sat,
}

/// Parameters whose fees and powers come from the data. The strongest pool
/// posts the deposit when `penalty > 0`. Distribution assumptions are
/// enforced; the returned warnings are the non-fatal findings.
pub fn derive_game_params(
    fees: &[FeeRecord],
    shares: &PoolShareTable,
    terms: &GameTerms,
) -> Result<(GameParams, Vec<Violation>)> {
    let s = fee_summary(fees)?;
    if shares.rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let f_bar = s.mean_tx_fee_sat.round() as Sat;
    let m = s.mean_tx_per_block.round() as i64;
    let mut p = GameParams::new(shares.powers(), terms.rounds, terms.timelock)?
        .with_fees(terms.base_reward, m, f_bar);
    p.revocation_fee = terms.revocation_fee;
    p.bribe_fee = terms.bribe_fee;
    if terms.penalty > 0 {
        let s = p.strongest();
        p = p.with_deposit(s, terms.penalty);
    }
    p.strict_distribution = true;
    let found = validate_params(&p);
    let errors: Vec<&str> = found
        .iter()
        .filter(|v| v.severity == Severity::Error)
        .map(|v| v.message.as_str())
        .collect();
    if !errors.is_empty() {
        return Err(Error::InvalidParams(errors.join("; ")));
    }
    Ok((p, found))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn btc_parsing() {
        assert_eq!(parse_btc("0.00016"), Ok(16_000));
        assert_eq!(parse_btc("1"), Ok(100_000_000));
        assert_eq!(parse_btc("0.225"), Ok(22_500_000));
        assert_eq!(parse_btc(".5"), Ok(50_000_000));
        assert_eq!(parse_btc("0.100000000"), Ok(10_000_000));
        assert!(parse_btc("0.000000001").is_err());
        assert!(parse_btc("1e-4").is_err());
        assert!(parse_btc("").is_err());
    }

    #[test]
    fn empty_fee_file_is_schema_error() {
        assert!(matches!(parse_fee_csv(""), Err(Error::Schema(_))));
        assert!(matches!(parse_fee_csv("a,b\n1,2\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "week,avg_block_fee_btc,avg_tx_fee_btc,tx_per_block\n2022-W01,0.1,0.0001,1000\n2022-W02,abc,0.0001,1000\n";
        match parse_fee_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_pool() {
        let t = pool_shares(&[("solo".into(), 7)]).unwrap();
        assert_eq!(t.rows[0].share, 1.0);
        assert!(matches!(pool_shares(&[]), Err(Error::EmptyInput)));
        assert!(matches!(pool_shares(&[("x".into(), 0)]), Err(Error::EmptyInput)));
    }

    #[test]
    fn lambda_min_examples() {
        let v = estimate_lambda_min(2.75e8, 2e20).unwrap();
        assert!((v - 1.375e-12).abs() < 1e-24);
        assert!((estimate_lambda_min(9.4e7, 2e20).unwrap() - 4.7e-13).abs() < 1e-25);
        assert_eq!(estimate_lambda_min(5.0, 5.0).unwrap(), 1.0);
        assert!(estimate_lambda_min(6.0, 5.0).is_err());
        assert!(estimate_lambda_min(0.0, 5.0).is_err());
    }

    #[test]
    fn uniform_week_echoes() {
        let rec = FeeRecord {
            period: "2022-W01".into(),
            avg_block_fee_sat: 15_000_000,
            avg_tx_fee_sat: 10_000,
            avg_tx_per_block: 1500.0,
        };
        let shares = pool_shares(&[("a".into(), 60), ("b".into(), 25), ("c".into(), 15)]).unwrap();
        let terms = GameTerms {
            base_reward: 625_000_000,
            rounds: 6,
            timelock: 3,
            revocation_fee: 15_010_000,
            bribe_fee: 15_500_000,
            penalty: 0,
        };
        // no 1-2% pool: strict mode rejects
        assert!(matches!(
            derive_game_params(&[rec.clone()], &shares, &terms),
            Err(Error::InvalidParams(m)) if m.contains("between 1% and 2%")
        ));
        let shares = pool_shares(&[("a".into(), 600), ("b".into(), 385), ("c".into(), 15)]).unwrap();
        let (p, _) = derive_game_params(&[rec], &shares, &terms).unwrap();
        assert_eq!(p.avg_tx_fee, 10_000);
        assert_eq!(p.txs_per_block, 1500);
        assert_eq!(p.block_fee(), 15_000_000);
        assert_eq!(p.powers, vec![0.6, 0.385, 0.015]);
    }

    proptest! {
        #[test]
        fn btc_round_trip(sat in 0i64..21_000_000 * SAT_PER_BTC) {
            prop_assert_eq!(parse_btc(&format_btc(sat)), Ok(sat));
        }

        #[test]
        fn shares_scale_invariant(counts in prop::collection::vec(1u64..10_000, 1..20), k in 1u64..1000) {
            let a: Vec<(String, u64)> = counts.iter().enumerate().map(|(i, c)| (format!("p{i}"), *c)).collect();
            let b: Vec<(String, u64)> = a.iter().map(|(n, c)| (n.clone(), c * k)).collect();
            let ta = pool_shares(&a).unwrap();
            let tb = pool_shares(&b).unwrap();
            for (x, y) in ta.rows.iter().zip(&tb.rows) {
                prop_assert_eq!(&x.pool, &y.pool);
                prop_assert!((x.share - y.share).abs() <= 1e-15);
            }
            let total: f64 = ta.rows.iter().map(|r| r.share).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(ta.rows.windows(2).all(|w| w[0].share >= w[1].share));
        }
    }
}
