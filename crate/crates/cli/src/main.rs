//! `forkgame`: simulations, oracle checks, cost quotes, empirics and
//! transaction-graph tools.
//!
//! Exit codes: 0 ok, 2 usage or configuration error, 3 runtime error,
//! 4 instance over the enumeration budget.

mod config;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forkgame_core::attack_economics::{quote_all, CostInputs, CostQuote};
use forkgame_core::empirics::{
    consistency_warnings, derive_game_params, estimate_lambda_min, fee_summary, load_fee_csv,
    load_pool_csv, pool_shares, GameTerms, DEVICE_HASHRATES, NETWORK_HASHRATE_2022,
};
use forkgame_core::oracle::{theorem_conditions, Oracle, StrategySpace};
use forkgame_core::sim_engine::{estimate_utilities, run_game};
use forkgame_core::tx_graph::{
    build_attack_graph, enumerate_scenarios, simulate_confirmation, validate_graph,
    AttackGraphParams, LedgerScenario, TxGraph, TxId,
};
use forkgame_core::{validate_params, Error, GameParams, Sat, StrategyProfile, SAT_PER_BTC};
use serde::Serialize;
use serde_json::json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    JsonLines,
}

#[derive(Parser, Debug)]
#[command(name = "forkgame", version, about = "Timelock bribing game with feather forks")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Monte Carlo utilities of a strategy profile.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        /// Profile name (bribe-and-fork, greedy, txs1-rush, waiters), one
        /// strategy name for everybody, or a comma list with one per player.
        #[arg(long, default_value = "bribe-and-fork")]
        profile: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the round-by-round trace of trial 0 as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Equilibrium hypotheses and exact best-response checks.
    Oracle {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "bribe-and-fork")]
        profile: String,
        /// Maximum number of enumerated leaves.
        #[arg(long, default_value_t = forkgame_core::oracle::DEFAULT_BUDGET)]
        budget: f64,
        /// Deviation set: the built-in library, or every pure strategy.
        #[arg(long, value_enum, default_value_t = Space::Library)]
        space: Space,
    },
    /// Bribe bounds and their fiat value.
    Cost {
        #[arg(long, default_value_t = 10_000, allow_hyphen_values = true)]
        f_bar: Sat,
        /// Revocation block fee; defaults to f + f_bar.
        #[arg(long, allow_hyphen_values = true)]
        f1: Option<Sat>,
        /// Average block fee; defaults to 1500 f_bar.
        #[arg(long, allow_hyphen_values = true)]
        f: Option<Sat>,
        #[arg(long, default_value_t = 1e-4, allow_hyphen_values = true)]
        lambda_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda_s: Option<f64>,
        #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
        lambda_j: f64,
        #[arg(long, default_value_t = 144)]
        timelock: u32,
        #[arg(long, default_value_t = 625_000_000, allow_hyphen_values = true)]
        base_reward: Sat,
        /// Fiat price of one BTC.
        #[arg(long, default_value_t = 25_000.0, allow_hyphen_values = true)]
        price: f64,
    },
    /// Fee and pool-share statistics and the parameters derived from them.
    Empirics {
        #[arg(long)]
        fees: PathBuf,
        #[arg(long)]
        pools: PathBuf,
        #[arg(long, default_value_t = NETWORK_HASHRATE_2022)]
        network_hashrate: f64,
        #[arg(long, default_value_t = 6)]
        rounds: u32,
        #[arg(long, default_value_t = 3)]
        timelock: u32,
        /// Bribe premium over the average block fee, in multiples of the average tx fee.
        #[arg(long, default_value_t = 30)]
        bribe_multiple: i64,
    },
    /// Build, validate or replay the attack transaction graph.
    Txgraph {
        #[command(subcommand)]
        action: GraphCmd,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Space {
    Library,
    Full,
}

#[derive(clap::Args, Debug)]
struct GraphArgs {
    #[arg(long, default_value_t = 10_000_000)]
    channel_sat: Sat,
    #[arg(long, default_value_t = 500_000)]
    bribe_sat: Sat,
    #[arg(long, default_value_t = 320_000_001)]
    deposit_sat: Sat,
    #[arg(long, default_value_t = 3)]
    timelock: u32,
    #[arg(long, default_value_t = 5)]
    m: u32,
    #[arg(long, default_value_t = 9)]
    n: u32,
    /// Read the graph from a JSON file instead of building it.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// The deposit committee signs anything.
    #[arg(long)]
    collusion: bool,
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Print the graph as JSON.
    Build(GraphArgs),
    /// Static checks.
    Validate(GraphArgs),
    /// Replay confirmations given as `Tx@height` items, comma separated.
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        steps: String,
    },
    /// Replay every ordering of every subset of transactions.
    Enumerate(GraphArgs),
}

enum Failure {
    Usage(String),
    Runtime(String),
    Budget(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InstanceTooLarge { .. } => Failure::Budget(e.to_string()),
            Error::IllegalAction { .. }
            | Error::GameNotOver { .. }
            | Error::EmptyChain
            | Error::ConflictViolation(_)
            | Error::ConditionViolation(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Out {
    format: Format,
    w: io::StdoutLock<'static>,
}

impl Out {
    /// Writes one record: JSON when asked for, otherwise the human rendering of it.
    fn emit<T: Serialize>(&mut self, kind: &str, rec: &T, human: impl FnOnce(&T) -> String) {
        let line = match self.format {
            Format::JsonLines => {
                let mut v = serde_json::to_value(rec).expect("records serialize");
                if let serde_json::Value::Object(m) = &mut v {
                    m.insert("record".into(), json!(kind));
                }
                v.to_string()
            }
            Format::Human => human(rec),
        };
        let _ = writeln!(self.w, "{line}");
    }

    fn note(&mut self, msg: &str) {
        if self.format == Format::Human {
            let _ = writeln!(self.w, "{msg}");
        } else {
            let _ = writeln!(self.w, "{}", json!({"record": "note", "message": msg}));
        }
    }
}

fn load(path: &PathBuf) -> Result<GameParams, Failure> {
    config::load_params(path).map_err(Failure::Usage)
}

fn check_params(p: &GameParams, out: &mut Out) -> CmdResult {
    use forkgame_core::economics::Severity;
    let v = validate_params(p);
    for x in &v {
        if x.severity == Severity::Warning {
            out.note(&format!("warning: {}", x.message));
        }
    }
    let errs: Vec<_> = v
        .iter()
        .filter(|x| x.severity == Severity::Error)
        .map(|x| x.message.clone())
        .collect();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Failure::Usage(errs.join("; ")))
    }
}

fn btc(sat: f64) -> String {
    format!("{:.8}", sat / SAT_PER_BTC as f64)
}

fn cmd_simulate(
    out: &mut Out,
    params: &PathBuf,
    profile: &str,
    trials: u64,
    seed: u64,
    trace: Option<&PathBuf>,
) -> CmdResult {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let p = load(params)?;
    check_params(&p, out)?;
    let prof = StrategyProfile::parse(profile, &p)?;
    let est = estimate_utilities(&prof, &p, trials, seed)?;
    for (i, (e, name)) in est.iter().zip(prof.names()).enumerate() {
        let rec = json!({
            "player": i, "power": p.powers[i], "strategy": name,
            "mean_sat": e.mean, "stderr_sat": e.stderr, "trials": e.trials, "degenerate": e.degenerate,
        });
        out.emit("utility", &rec, |r| {
            format!(
                "player {:>2}  power {:<8} {:<24} mean {:>16.2} sat ({} BTC)  stderr {:>12.2}",
                r["player"],
                r["power"].as_f64().unwrap_or(0.0),
                name,
                e.mean,
                btc(e.mean),
                e.stderr
            )
        });
    }
    if let Some(path) = trace {
        let t = run_game(&prof, &p, seed)?;
        let f = std::fs::File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        t.write_jsonl(io::BufWriter::new(f))?;
        out.note(&format!("trace of trial 0 written to {}", path.display()));
    }
    Ok(())
}

fn cmd_oracle(out: &mut Out, params: &PathBuf, profile: &str, budget: f64, space: Space) -> CmdResult {
    let p = load(params)?;
    check_params(&p, out)?;
    let prof = StrategyProfile::parse(profile, &p)?;
    let report = theorem_conditions(&p);
    for e in report.entries() {
        out.emit("condition", &e, |e| {
            format!(
                "{:<32} {:<5} value {}{}",
                e.name,
                if e.pass { "pass" } else { "FAIL" },
                e.value,
                e.threshold.map(|t| format!("  threshold {t}")).unwrap_or_default()
            )
        });
    }
    let space = match space {
        Space::Library => StrategySpace::builtin(),
        Space::Full => StrategySpace::Full,
    };
    let checks = Oracle::new(budget).nash_check(&prof, &p, &space)?;
    let mut all = true;
    for r in &checks {
        all &= r.is_best_response;
        out.emit("best_response", r, |r| {
            format!(
                "player {:>2} best response: {:<5} baseline {:.4} sat  gap {:.4} sat{}",
                r.player,
                r.is_best_response,
                r.baseline,
                r.utility_gap,
                r.witness_strategy
                    .as_ref()
                    .map(|w| format!("  deviation: {w}"))
                    .unwrap_or_default()
            )
        });
    }
    out.emit("equilibrium", &json!({"nash": all, "profile": prof.names()}), |r| {
        format!("profile is a Nash equilibrium: {}", r["nash"])
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cost(
    out: &mut Out,
    f_bar: Sat,
    f1: Option<Sat>,
    f: Option<Sat>,
    lambda_min: f64,
    lambda_s: Option<f64>,
    lambda_j: f64,
    timelock: u32,
    base_reward: Sat,
    price: f64,
) -> CmdResult {
    if f_bar < 0 || f1.is_some_and(|v| v < 0) || f.is_some_and(|v| v < 0) || base_reward < 0 {
        return Err(Failure::Usage("fees and rewards must be non-negative".into()));
    }
    let f = f.unwrap_or(1500 * f_bar);
    let f1 = f1.unwrap_or(f + f_bar);
    let lambda_s = match lambda_s {
        Some(v) => v,
        None => {
            out.note("--lambda-s not given; using 0.2, the share above which the largest 2022 pools sat");
            0.2
        }
    };
    let quotes: Vec<CostQuote> = quote_all(&CostInputs {
        f_bar,
        f1,
        f,
        lambda_min,
        lambda_s,
        lambda_j,
        timelock,
        base_reward,
        price: Some(price),
    })?;
    for q in &quotes {
        out.emit("quote", q, |q| {
            format!(
                "{:<22} {:>16} sat  {:>14} BTC  {:>14}  ({:.1} x f_bar)",
                q.bound_kind.label(),
                q.value_sat,
                btc(q.value_sat as f64),
                q.fiat_value.map(|v| format!("${v:.2}")).unwrap_or_default(),
                q.value_sat as f64 / f_bar.max(1) as f64
            )
        });
    }
    Ok(())
}

fn cmd_empirics(
    out: &mut Out,
    fees: &PathBuf,
    pools: &PathBuf,
    network: f64,
    rounds: u32,
    timelock: u32,
    bribe_multiple: i64,
) -> CmdResult {
    let recs = load_fee_csv(fees)?;
    let counts = load_pool_csv(pools)?;
    for w in consistency_warnings(&recs) {
        out.note(&format!("warning: {w}"));
    }
    let s = fee_summary(&recs)?;
    out.emit("fee_summary", &s, |s| {
        format!(
            "{} periods; block fee {} to {} BTC (mean {}); tx fee {} to {} BTC (mean {}); {:.1} tx per block",
            s.periods,
            btc(s.min_block_fee_sat as f64),
            btc(s.max_block_fee_sat as f64),
            btc(s.mean_block_fee_sat),
            btc(s.min_tx_fee_sat as f64),
            btc(s.max_tx_fee_sat as f64),
            btc(s.mean_tx_fee_sat),
            s.mean_tx_per_block
        )
    });
    let table = pool_shares(&counts)?;
    for r in &table.rows {
        out.emit("pool_share", r, |r| {
            format!("{:<20} {:>7} blocks  {:>8.3}%", r.pool, r.blocks, r.share * 100.0)
        });
    }
    for (name, h) in DEVICE_HASHRATES {
        let l = estimate_lambda_min(h, network)?;
        out.emit(
            "lambda_min",
            &json!({"device": name, "hashrate": h, "network_hashrate": network, "lambda": l}),
            |_| format!("{name:<28} {h:>10.3e} H/s  share {l:.3e}"),
        );
    }
    let f_bar = s.mean_tx_fee_sat.round() as Sat;
    let f = f_bar * s.mean_tx_per_block.round() as Sat;
    let base = 625_000_000;
    let lam_s = table.strongest_share();
    let terms = GameTerms {
        base_reward: base,
        rounds,
        timelock,
        revocation_fee: f + f_bar,
        bribe_fee: f + bribe_multiple * f_bar,
        penalty: forkgame_core::attack_economics::penalty_floor(lam_s, f, base),
    };
    match derive_game_params(&recs, &table, &terms) {
        Ok((p, warnings)) => {
            for w in warnings {
                out.note(&format!("warning: {}", w.message));
            }
            out.emit("derived_params", &p, |p| {
                format!(
                    "derived: {} players, strongest {:.5}, f_bar {} sat, m {}, f {} sat, f1 {} sat, f2 {} sat, penalty {} sat",
                    p.n(),
                    lam_s,
                    p.avg_tx_fee,
                    p.txs_per_block,
                    p.block_fee(),
                    p.revocation_fee,
                    p.bribe_fee,
                    p.penalty
                )
            });
        }
        Err(e) => out.note(&format!("derived parameters rejected: {e}")),
    }
    Ok(())
}

fn graph_of(a: &GraphArgs) -> Result<TxGraph, Failure> {
    let mut g = match &a.graph {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            TxGraph::from_json(&text)?
        }
        None => build_attack_graph(&AttackGraphParams::new(
            a.channel_sat,
            a.bribe_sat,
            a.deposit_sat,
            a.timelock,
            a.m,
            a.n,
        ))?,
    };
    g.collusion |= a.collusion;
    Ok(g)
}

fn parse_steps(s: &str) -> Result<LedgerScenario, Failure> {
    let mut steps = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (name, h) = item
            .split_once('@')
            .ok_or_else(|| Failure::Usage(format!("expected Tx@height, got {item:?}")))?;
        let id = TxId::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| Failure::Usage(format!("unknown transaction {name:?}")))?;
        let h: u32 = h
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad height in {item:?}")))?;
        steps.push((id, h));
    }
    Ok(LedgerScenario { steps })
}

fn cmd_txgraph(out: &mut Out, action: &GraphCmd) -> CmdResult {
    match action {
        GraphCmd::Build(a) => {
            let g = graph_of(a)?;
            match out.format {
                Format::Human => {
                    let _ = writeln!(out.w, "{}", g.to_json());
                }
                Format::JsonLines => out.emit("graph", &g, |_| String::new()),
            }
            Ok(())
        }
        GraphCmd::Validate(a) => {
            let r = validate_graph(&graph_of(a)?);
            for c in &r.checks {
                out.emit("check", c, |c| {
                    format!(
                        "{:<28} {}{}",
                        c.name,
                        if c.pass { "pass" } else { "FAIL" },
                        if c.detail.is_empty() { String::new() } else { format!("  ({})", c.detail) }
                    )
                });
            }
            for v in &r.violations {
                out.emit("violation", &json!({"message": v}), |_| format!("violation: {v}"));
            }
            if r.ok() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("{} violation(s)", r.violations.len())))
            }
        }
        GraphCmd::Simulate { graph, steps } => {
            let g = graph_of(graph)?;
            let o = simulate_confirmation(&g, &parse_steps(steps)?)?;
            out.emit("ownership", &o, |o| {
                let mut s = format!("confirmed {:?}; deposit {:?}; fees {} sat", o.confirmed, o.deposit, o.fees_sat);
                for u in &o.unspent {
                    s.push_str(&format!("\n  {} {} sat -> {:?}", u.output, u.amount_sat, u.controllers));
                }
                if !o.dead.is_empty() {
                    s.push_str(&format!("\n  dead: {:?}", o.dead));
                }
                s
            });
            Ok(())
        }
        GraphCmd::Enumerate(a) => {
            let s = enumerate_scenarios(&graph_of(a)?);
            out.emit("enumeration", &s, |s| {
                format!(
                    "{} orderings ({} replayable, {} rejected); co-confirmed revocation/old state: {}; reclaim without bribe: {}; value mismatches: {}",
                    s.sequences, s.valid, s.rejected, s.co_confirmed, s.reclaim_without_bribe, s.value_mismatch
                )
            });
            if s.properties_hold() {
                Ok(())
            } else {
                Err(Failure::Runtime("graph properties violated".into()))
            }
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("FORKGAME_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("FORKGAME_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Failure::Usage("FORKGAME_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    init_threads()?;
    let mut out = Out {
        format: cli.format,
        w: io::stdout().lock(),
    };
    match &cli.cmd {
        Cmd::Simulate {
            params,
            profile,
            trials,
            seed,
            trace,
        } => cmd_simulate(&mut out, params, profile, *trials, *seed, trace.as_ref()),
        Cmd::Oracle {
            params,
            profile,
            budget,
            space,
        } => cmd_oracle(&mut out, params, profile, *budget, *space),
        Cmd::Cost {
            f_bar,
            f1,
            f,
            lambda_min,
            lambda_s,
            lambda_j,
            timelock,
            base_reward,
            price,
        } => cmd_cost(
            &mut out,
            *f_bar,
            *f1,
            *f,
            *lambda_min,
            *lambda_s,
            *lambda_j,
            *timelock,
            *base_reward,
            *price,
        ),
        Cmd::Empirics {
            fees,
            pools,
            network_hashrate,
            rounds,
            timelock,
            bribe_multiple,
        } => cmd_empirics(&mut out, fees, pools, *network_hashrate, *rounds, *timelock, *bribe_multiple),
        Cmd::Txgraph { action } => cmd_txgraph(&mut out, action),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Budget(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
    }
}
