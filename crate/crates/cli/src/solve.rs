use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use graphecon_core::auction::trace::{write_events, write_prices};
use graphecon_core::auction::{run_auction, AuctionConfig, AuctionError, Instrumentation, RunResult};
use graphecon_core::io::{certificate_to_json, Certificate};
use graphecon_core::verifier::verify_approx_equilibrium;
use graphecon_core::{Economy, NumericMode, Rational, Scalar};
use serde_json::{json, Value};

use crate::common::{create, economy, load_doc, pass_or_fail, positive_arg, resolve_mode, usage, write_json, write_text, CliError};

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub economy: PathBuf,
    /// Price step; prices are powers of 1 + eps.
    #[arg(long, default_value = "1/10")]
    pub eps: String,
    /// Certificate file; without it the certificate is embedded in the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run report; stdout by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-round statistics as CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Writes PREFIX.events.csv and PREFIX.prices.csv.
    #[arg(long, value_name = "PREFIX")]
    pub trace: Option<String>,
    #[arg(long)]
    pub max_raises: Option<u64>,
    /// Turn order as a comma separated permutation of agent ids.
    #[arg(long, value_delimiter = ',')]
    pub seed_order: Option<Vec<usize>>,
    /// Run even if the economy fails the standing assumptions.
    #[arg(long)]
    pub force: bool,
    /// Audit the invariants after every turn.
    #[arg(long)]
    pub audit: bool,
    #[arg(long, default_value_t = 20_000_000)]
    pub max_turns: u64,
}

pub fn run(mode: Option<NumericMode>, args: SolveArgs) -> Result<ExitCode, CliError> {
    let doc = load_doc(&args.economy)?;
    match resolve_mode(mode, Some(&doc))? {
        NumericMode::Exact => solve::<Rational>(&doc, &args),
        NumericMode::Float => solve::<f64>(&doc, &args),
    }
}

pub fn config<S: Scalar>(args: &SolveArgs) -> Result<AuctionConfig<S>, CliError> {
    let mut cfg = AuctionConfig::new(positive_arg::<S>("eps", &args.eps)?);
    cfg.schedule = args.seed_order.clone();
    cfg.force = args.force;
    cfg.max_raises = args.max_raises;
    cfg.max_turns = args.max_turns;
    cfg.record_trace = args.trace.is_some();
    if args.audit {
        cfg.instrumentation = Instrumentation::EveryTurn;
    }
    Ok(cfg)
}

/// Maps engine errors onto the exit-code contract.
pub fn engine_error(e: AuctionError) -> CliError {
    match e {
        e if e.is_guard() => CliError::Guard(e.to_string()),
        AuctionError::BadEpsilon(_) | AuctionError::BadSchedule(_) => usage(e),
        e => CliError::Failed(e.to_string()),
    }
}

fn solve<S: Scalar>(doc: &Value, args: &SolveArgs) -> Result<ExitCode, CliError> {
    let e: Economy<S> = economy(doc)?;
    let cfg = config::<S>(args)?;
    let eps = cfg.eps.clone();
    let res = run_auction(&e, cfg).map_err(engine_error)?;
    let verdict = verify_approx_equilibrium(&e, &res.prices, &res.plan, &eps).map_err(|err| CliError::Failed(err.to_string()))?;
    let cert = certificate_to_json(&Certificate { prices: res.prices.clone(), plan: res.plan.clone() });
    if let Some(path) = &args.out {
        write_text(Some(path), &graphecon_core::io::to_pretty(&cert))?;
    }
    if let Some(path) = &args.stats {
        write_stats(path, &res)?;
    }
    if let Some(prefix) = &args.trace {
        let events = PathBuf::from(format!("{prefix}.events.csv"));
        let prices = PathBuf::from(format!("{prefix}.prices.csv"));
        write_events(create(&events)?, &res.trace).map_err(usage)?;
        write_prices(create(&prices)?, &res.stats.price_trajectory).map_err(usage)?;
    }
    let (m, l) = (e.agents(), e.goods());
    let bound = res.stats.raise_bound(m, l, &eps);
    let mut report = json!({
        "status": if verdict.passed { "ok" } else { "verification_failed" },
        "mode": S::MODE,
        "eps": eps.to_json(),
        "termination": res.termination,
        "counters": res.stats.counters,
        "p_max": res.stats.p_max.to_json(),
        "raise_bound": bound,
        "raise_bound_holds": res.stats.counters.raise_price_calls <= bound,
        "threshold": res.stats.threshold.to_json(),
        "tau_trajectory": res.stats.tau_trajectory.iter().map(|(n, t)| json!([n, t.to_json()])).collect::<Vec<_>>(),
        "surplus": res.surplus.iter().map(Scalar::to_json).collect::<Vec<_>>(),
        "invariant_checks": res.stats.invariant_checks,
        "invariant_violations": res.stats.invariant_violations,
        "verification": { "passed": verdict.passed, "failing": verdict.failing_conditions() },
        "warnings": res.warnings,
        "wall_time_ms": res.stats.wall_time_ms,
    });
    if args.out.is_none() {
        report["certificate"] = cert;
    }
    write_json(args.report.as_deref(), &report)?;
    if !verdict.passed {
        eprintln!("graphecon: solver output failed verification: {:?}", verdict.failing_conditions());
    }
    Ok(pass_or_fail(verdict.passed))
}

fn write_stats<S: Scalar>(path: &Path, res: &RunResult<S>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["round", "raise_price_calls", "tau", "total_surplus", "total_free_surplus"]).map_err(usage)?;
    for r in &res.stats.rounds {
        w.write_record([r.round.to_string(), r.raise_price_calls.to_string(), r.tau.to_string(), r.total_surplus.to_string(), r.total_free_surplus.to_string()])
            .map_err(usage)?;
    }
    w.flush().map_err(usage)
}
