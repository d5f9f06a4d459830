//! Closed-form attack cost calculators.
//!
//! Bounds round up, ceilings round down. Power fractions are read through
//! their shortest decimal form so that values like `0.2` divide exactly;
//! when that does not fit in 128 bits the float value is used, snapped to an
//! integer when it lies within 1e-9 relative of one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::economics::{Sat, SAT_PER_BTC};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    Legacy,
    BfGeneral,
    BfSimplified,
    FeasibilityCeiling,
    PenaltyFloor,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            BoundKind::Legacy => "legacy",
            BoundKind::BfGeneral => "bf-general",
            BoundKind::BfSimplified => "bf-simplified",
            BoundKind::FeasibilityCeiling => "feasibility-ceiling",
            BoundKind::PenaltyFloor => "penalty-floor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostQuote {
    pub bound_kind: BoundKind,
    pub value_sat: Sat,
    /// Real-valued bound before rounding.
    pub raw: f64,
    pub inputs: BTreeMap<String, f64>,
    pub fiat_value: Option<f64>,
}

/// `x` as `num / den` read from its shortest decimal representation.
pub(crate) fn decimal_ratio(x: f64) -> Option<(i128, i128)> {
    if !x.is_finite() {
        return None;
    }
    let s = format!("{x}");
    let (neg, s) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.as_str()),
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 30 {
        return None;
    }
    let den = 10i128.checked_pow(frac.len() as u32)?;
    let mut num: i128 = 0;
    for c in int.chars().chain(frac.chars()) {
        num = num.checked_mul(10)?.checked_add(c.to_digit(10)? as i128)?;
    }
    Some((if neg { -num } else { num }, den))
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `ceil(amount / lambda)` or `floor(...)`, exact when possible.
fn over_power(amount: i128, lambda: f64, up: bool) -> Sat {
    if let Some((n, d)) = decimal_ratio(lambda) {
        if let Some(num) = amount.checked_mul(d) {
            let v = if up { div_ceil(num, n) } else { div_floor(num, n) };
            return v as Sat;
        }
    }
    let x = snap(amount as f64 / lambda);
    (if up { x.ceil() } else { x.floor() }) as Sat
}

fn check_power(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0, 1], got {v}")))
    }
}

/// Bribe needed without forks: `ceil((f1 - f) / lambda_min)`.
pub fn legacy_bribe_bound(f1: Sat, f: Sat, lambda_min: f64) -> Result<Sat> {
    if f1 <= f {
        return Err(Error::Domain("revocation fee must exceed the block fee".into()));
    }
    check_power("weakest power", lambda_min)?;
    Ok(over_power((f1 - f) as i128, lambda_min, true))
}

pub fn legacy_bribe_raw(f1: Sat, f: Sat, lambda_min: f64) -> f64 {
    (f1 - f) as f64 / lambda_min
}

/// `0.05^(T/2)`, the weight left on paths where every sizeable miner skipped the revocation.
pub fn escape_weight(timelock: u32) -> f64 {
    0.05f64.powf(timelock as f64 / 2.0)
}

#[allow(clippy::too_many_arguments)]
pub fn bf_bribe_raw_general(
    f_bar: Sat,
    f1: Sat,
    f: Sat,
    lambda_s: f64,
    timelock: u32,
    c_p1: i64,
    c_p2: i64,
    f_bar_p1: Sat,
    f_bar_p2: Sat,
) -> f64 {
    let num = (c_p1 * f_bar_p1 + c_p1 * f_bar + c_p2 * f_bar_p2 + (f1 - f)) as f64;
    num / (lambda_s - escape_weight(timelock)) + (c_p2 * f_bar) as f64
}

/// Bribe premium sufficient with the self-penalty deposit, full form.
#[allow(clippy::too_many_arguments)]
pub fn bf_bribe_bound_general(
    f_bar: Sat,
    f1: Sat,
    f: Sat,
    lambda_s: f64,
    timelock: u32,
    c_p1: i64,
    c_p2: i64,
    f_bar_p1: Sat,
    f_bar_p2: Sat,
) -> Result<Sat> {
    if f1 <= f {
        return Err(Error::Domain("revocation fee must exceed the block fee".into()));
    }
    check_power("strongest power", lambda_s)?;
    if lambda_s <= escape_weight(timelock) {
        return Err(Error::Domain(format!(
            "strongest power {lambda_s} must exceed 0.05^(T/2) = {}",
            escape_weight(timelock)
        )));
    }
    let raw = bf_bribe_raw_general(f_bar, f1, f, lambda_s, timelock, c_p1, c_p2, f_bar_p1, f_bar_p2);
    Ok(snap(raw).ceil() as Sat)
}

pub fn bf_bribe_raw_simplified(f_bar: Sat, f1: Sat, f: Sat, lambda_s: f64) -> f64 {
    (2 * f_bar + 2 * (f1 - f)) as f64 / lambda_s + f_bar as f64
}

/// `ceil((2 f_bar + 2 (f1 - f)) / lambda_s + f_bar)`.
pub fn bf_bribe_bound_simplified(f_bar: Sat, f1: Sat, f: Sat, lambda_s: f64) -> Result<Sat> {
    if f1 < f {
        return Err(Error::Domain("revocation fee must not be below the block fee".into()));
    }
    check_power("strongest power", lambda_s)?;
    Ok(over_power((2 * f_bar + 2 * (f1 - f)) as i128, lambda_s, true) + f_bar)
}

/// Largest bribe premium that still leaves a 1-2% miner preferring the revocation:
/// `floor((f1 - f) / lambda_j)`.
pub fn feasibility_ceiling(f1: Sat, f: Sat, lambda_j: f64) -> Result<Sat> {
    if f1 < f {
        return Err(Error::Domain("revocation fee must not be below the block fee".into()));
    }
    check_power("miner power", lambda_j)?;
    Ok(over_power((f1 - f) as i128, lambda_j, false))
}

/// Smallest deposit strictly above `lambda_s (f + B)`.
pub fn penalty_floor(lambda_s: f64, f: Sat, base: Sat) -> Sat {
    let amount = (f + base) as i128;
    if let Some((n, d)) = decimal_ratio(lambda_s) {
        if let Some(num) = amount.checked_mul(n) {
            return div_floor(num, d) as Sat + 1;
        }
    }
    snap(lambda_s * amount as f64).floor() as Sat + 1
}

/// Satoshi to currency units at `price` per BTC, rounded to cents (half away from zero).
pub fn to_fiat(amount_sat: Sat, price_per_btc: f64) -> Result<f64> {
    if !(price_per_btc > 0.0) {
        return Err(Error::Domain("price must be positive".into()));
    }
    if let Some((n, d)) = decimal_ratio(price_per_btc) {
        let num = (amount_sat as i128).checked_mul(n).and_then(|v| v.checked_mul(100));
        if let (Some(num), Some(den)) = (num, d.checked_mul(SAT_PER_BTC as i128)) {
            let q = num / den;
            let r = num % den;
            let cents = match (2 * r.abs() >= den, num < 0) {
                (true, true) => q - 1,
                (true, false) => q + 1,
                _ => q,
            };
            return Ok(cents as f64 / 100.0);
        }
    }
    Ok((amount_sat as f64 / SAT_PER_BTC as f64 * price_per_btc * 100.0).round() / 100.0)
}

/// Inputs for a full quote table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub f_bar: Sat,
    pub f1: Sat,
    pub f: Sat,
    pub lambda_min: f64,
    pub lambda_s: f64,
    pub lambda_j: f64,
    pub timelock: u32,
    pub base_reward: Sat,
    pub price: Option<f64>,
}

/// All five quotes. The general bound uses unit slot counts, the deposit slot fee
/// `f1 - f` and the reclaim slot fee `f_bar`.
pub fn quote_all(inp: &CostInputs) -> Result<Vec<CostQuote>> {
    let mut inputs = BTreeMap::new();
    inputs.insert("f_bar".to_string(), inp.f_bar as f64);
    inputs.insert("f1".to_string(), inp.f1 as f64);
    inputs.insert("f".to_string(), inp.f as f64);
    inputs.insert("lambda_min".to_string(), inp.lambda_min);
    inputs.insert("lambda_s".to_string(), inp.lambda_s);
    inputs.insert("lambda_j".to_string(), inp.lambda_j);
    inputs.insert("timelock".to_string(), inp.timelock as f64);
    inputs.insert("base_reward".to_string(), inp.base_reward as f64);
    let d = inp.f1 - inp.f;
    let fiat = |v: Sat| -> Result<Option<f64>> { inp.price.map(|p| to_fiat(v, p)).transpose() };
    let mk = |kind, value_sat, raw| -> Result<CostQuote> {
        Ok(CostQuote {
            bound_kind: kind,
            value_sat,
            raw,
            inputs: inputs.clone(),
            fiat_value: fiat(value_sat)?,
        })
    };
    let general = bf_bribe_bound_general(inp.f_bar, inp.f1, inp.f, inp.lambda_s, inp.timelock, 1, 1, d, inp.f_bar)?;
    Ok(vec![
        mk(
            BoundKind::Legacy,
            legacy_bribe_bound(inp.f1, inp.f, inp.lambda_min)?,
            legacy_bribe_raw(inp.f1, inp.f, inp.lambda_min),
        )?,
        mk(
            BoundKind::BfGeneral,
            general,
            bf_bribe_raw_general(inp.f_bar, inp.f1, inp.f, inp.lambda_s, inp.timelock, 1, 1, d, inp.f_bar),
        )?,
        mk(
            BoundKind::BfSimplified,
            bf_bribe_bound_simplified(inp.f_bar, inp.f1, inp.f, inp.lambda_s)?,
            bf_bribe_raw_simplified(inp.f_bar, inp.f1, inp.f, inp.lambda_s),
        )?,
        mk(
            BoundKind::FeasibilityCeiling,
            feasibility_ceiling(inp.f1, inp.f, inp.lambda_j)?,
            d as f64 / inp.lambda_j,
        )?,
        mk(
            BoundKind::PenaltyFloor,
            penalty_floor(inp.lambda_s, inp.f, inp.base_reward),
            inp.lambda_s * (inp.f + inp.base_reward) as f64,
        )?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    const FBAR: Sat = 10_000;
    const F: Sat = 1500 * FBAR;

    // independent rational oracle: ceil/floor of p/q from decimal strings
    fn ratio(s: &str) -> Ratio<i128> {
        let (i, f) = s.split_once('.').unwrap_or((s, ""));
        let den = 10i128.pow(f.len() as u32);
        let num: i128 = format!("{i}{f}").parse().unwrap();
        Ratio::new(num, den)
    }

    #[test]
    fn legacy_examples() {
        assert_eq!(legacy_bribe_bound(F + FBAR, F, 1e-4).unwrap(), 100_000_000);
        assert_eq!(legacy_bribe_bound(F + FBAR, F, 1e-12).unwrap(), 10_000_000_000_000_000);
        assert_eq!(legacy_bribe_bound(F + FBAR, F, 1.0).unwrap(), FBAR);
        assert!(legacy_bribe_bound(F, F, 0.5).is_err());
        assert!(legacy_bribe_bound(F + 1, F, 0.0).is_err());
        assert!(legacy_bribe_bound(F + 1, F, 1.5).is_err());
    }

    #[test]
    fn simplified_examples() {
        assert_eq!(bf_bribe_bound_simplified(FBAR, F + FBAR, F, 0.2).unwrap(), 210_000);
        assert_eq!(bf_bribe_bound_simplified(FBAR, F, F, 0.2).unwrap(), 2 * FBAR * 5 + FBAR);
        assert_eq!(bf_bribe_bound_simplified(FBAR, F + FBAR, F, 1.0).unwrap(), 5 * FBAR);
    }

    #[test]
    fn general_examples() {
        let v = bf_bribe_bound_general(FBAR, F + FBAR, F, 0.2, 110, 1, 1, FBAR, FBAR).unwrap();
        assert!((v - 210_000).abs() <= 1, "{v}");
        // T=2: denominator 0.15, exact value 40000/0.15 + 10000 = 276666.67
        let v = bf_bribe_bound_general(FBAR, F + FBAR, F, 0.2, 2, 1, 1, FBAR, FBAR).unwrap();
        let oracle = Ratio::new(40_000i128 * 100, 15) + Ratio::from_integer(10_000);
        assert_eq!(v as i128, oracle.ceil().to_integer());
        assert!(bf_bribe_bound_general(FBAR, F + FBAR, F, 0.05, 2, 1, 1, FBAR, FBAR).is_err());
    }

    #[test]
    fn general_converges_to_simplified() {
        let g = bf_bribe_bound_general(FBAR, F + FBAR, F, 0.2, 200, 1, 1, FBAR, FBAR).unwrap();
        let s = bf_bribe_bound_simplified(FBAR, F + FBAR, F, 0.2).unwrap();
        assert!((g - s).abs() <= 1);
    }

    #[test]
    fn ceiling_examples() {
        assert_eq!(feasibility_ceiling(F + FBAR, F, 0.02).unwrap(), 500_000);
        assert_eq!(feasibility_ceiling(F + FBAR, F, 0.01).unwrap(), 100 * FBAR);
        assert_eq!(feasibility_ceiling(F + FBAR, F, 1.0).unwrap(), FBAR);
    }

    #[test]
    fn penalty_examples() {
        let fb = 640_000_000;
        assert_eq!(penalty_floor(0.2, F, fb - F), 128_000_001);
        assert_eq!(penalty_floor(1e-18, F, fb - F), 1);
        assert_eq!(penalty_floor(1.0, F, fb - F), fb + 1);
    }

    #[test]
    fn fiat_examples() {
        assert_eq!(to_fiat(500_000, 25_000.0).unwrap(), 125.00);
        assert_eq!(to_fiat(210_000, 25_000.0).unwrap(), 52.50);
        assert_eq!(to_fiat(100_000_000, 23_530.92).unwrap(), 23_530.92);
        assert!(to_fiat(1, 0.0).is_err());
    }

    #[test]
    fn legacy_over_simplified_ratio() {
        // 10^8 / 210 000 = 10 000 / 21, about 476
        let l = legacy_bribe_bound(F + FBAR, F, 1e-4).unwrap();
        let s = bf_bribe_bound_simplified(FBAR, F + FBAR, F, 0.2).unwrap();
        assert_eq!(Ratio::new(l as i128, s as i128), Ratio::new(10_000, 21));
        // the thousandfold gap needs a weakest miner below about 4.8e-5
        let l = legacy_bribe_bound(F + FBAR, F, 4e-5).unwrap();
        assert!(Ratio::new(l as i128, s as i128) >= Ratio::from_integer(1000));
    }

    proptest! {
        #[test]
        fn exact_against_rational_oracle(d in 1i64..10_000_000, milli in 1u32..1000) {
            let lam_s = format!("0.{milli:03}");
            let lam: f64 = lam_s.parse().unwrap();
            let q = Ratio::from_integer(d as i128) / ratio(&lam_s);
            prop_assert_eq!(legacy_bribe_bound(F + d, F, lam).unwrap() as i128, q.ceil().to_integer());
            prop_assert_eq!(feasibility_ceiling(F + d, F, lam).unwrap() as i128, q.floor().to_integer());
            let s = Ratio::from_integer((2 * FBAR + 2 * d) as i128) / ratio(&lam_s) + Ratio::from_integer(FBAR as i128);
            prop_assert_eq!(bf_bribe_bound_simplified(FBAR, F + d, F, lam).unwrap() as i128, s.ceil().to_integer());
        }

        #[test]
        fn bounds_decrease_in_power(d in 1i64..1_000_000, a in 1u32..999, b in 1u32..999) {
            prop_assume!(a < b);
            let (la, lb) = (a as f64 / 1000.0, b as f64 / 1000.0);
            prop_assert!(legacy_bribe_bound(F + d, F, la).unwrap() >= legacy_bribe_bound(F + d, F, lb).unwrap());
            prop_assert!(bf_bribe_bound_simplified(FBAR, F + d, F, la).unwrap() >= bf_bribe_bound_simplified(FBAR, F + d, F, lb).unwrap());
            prop_assert!(feasibility_ceiling(F + d, F, la).unwrap() >= feasibility_ceiling(F + d, F, lb).unwrap());
            prop_assert!(legacy_bribe_raw(F + d, F, la) > legacy_bribe_raw(F + d, F, lb));
            if lb > escape_weight(10) && la > escape_weight(10) {
                prop_assert!(bf_bribe_raw_general(FBAR, F + d, F, la, 10, 1, 1, d, FBAR) > bf_bribe_raw_general(FBAR, F + d, F, lb, 10, 1, 1, d, FBAR));
            }
        }
    }
}
