use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use graphecon_core::auction::{AuctionConfig, AuctionState, Instrumentation};
use graphecon_core::economy::{outflow_vector, supply_vector};
use graphecon_core::generators::{gen_breadth_chain, gen_pmax_chain, random_economy, RandomSpec};
use graphecon_core::verifier::verify_approx_equilibrium;
use graphecon_core::{Economy, NumericMode, Rational, Scalar};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::common::{create, positive_arg, resolve_mode, usage, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Breadth,
    Pmax,
    Random,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value = "1/10")]
    pub eps: String,
    /// Chain lengths for the breadth and pmax suites.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Resale bound of the breadth chain.
    #[arg(long, default_value = "1/2")]
    pub b: String,
    /// Preference ratio of the pmax chain.
    #[arg(long, default_value = "2")]
    pub alpha: String,
    /// Number of random instances.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Seed of the first random instance; instance n uses seed + n.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Audit invariants after every turn (always on for the random suite).
    #[arg(long)]
    pub audit: bool,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_turns: u64,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV output; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Row {
    pub suite: &'static str,
    pub index: usize,
    pub m: usize,
    pub l: usize,
    pub eps: String,
    pub status: String,
    pub rounds: u64,
    pub raises: u64,
    pub raise_bound: u64,
    pub p_max: f64,
    /// Last agent's price for its own good (pmax suite only).
    pub p_mm: Option<f64>,
    /// Good 0 consumed by the last agent from its neighbour (breadth suite only).
    pub far_end_flow: Option<f64>,
    pub wall_ms: f64,
    pub clearing_residual: f64,
    pub violations: usize,
    pub verified: bool,
}

pub fn run(mode: Option<NumericMode>, args: BenchArgs) -> Result<ExitCode, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.unwrap_or(0)).build().map_err(usage)?;
    let rows = pool.install(|| match resolve_mode(mode, None)? {
        NumericMode::Exact => rows::<Rational>(&args),
        NumericMode::Float => rows::<f64>(&args),
    })?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(r).map_err(usage)?;
    }
    w.flush().map_err(usage)?;
    if failed > 0 {
        eprintln!("graphecon: {failed} of {} instances did not finish cleanly", rows.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn rows<S: Scalar>(args: &BenchArgs) -> Result<Vec<Row>, CliError> {
    let eps: S = positive_arg("eps", &args.eps)?;
    let (name, instances): (&'static str, Vec<Economy<S>>) = match args.suite {
        Suite::Breadth => {
            let b: S = positive_arg("b", &args.b)?;
            let sizes = args.sizes.clone().unwrap_or_else(|| (3..=8).collect());
            ("breadth", sizes.iter().map(|&m| gen_breadth_chain(m, &b).map_err(usage)).collect::<Result<_, _>>()?)
        }
        Suite::Pmax => {
            let alpha: S = positive_arg("alpha", &args.alpha)?;
            let sizes = args.sizes.clone().unwrap_or_else(|| (3..=6).collect());
            ("pmax", sizes.iter().map(|&m| gen_pmax_chain(m, &alpha).map_err(usage)).collect::<Result<_, _>>()?)
        }
        Suite::Random => ("random", (0..args.count).map(|n| random_economy(args.seed + n as u64, &random_spec(n))).collect()),
    };
    let audit = args.audit || args.suite == Suite::Random;
    let force = args.suite == Suite::Pmax;
    Ok(instances.par_iter().enumerate().map(|(n, e)| instance(name, n, e, &eps, audit, force, args.max_turns)).collect())
}

/// Shape of random instance `n`: 2 to 6 agents and 2 to 4 goods, cycling.
pub fn random_spec(n: usize) -> RandomSpec {
    RandomSpec { agents: 2 + n % 5, goods: 2 + (n / 5) % 3, edge_prob: 0.3, endow_prob: 0.4, max_bound_quarters: 4 }
}

fn instance<S: Scalar>(suite: &'static str, index: usize, e: &Economy<S>, eps: &S, audit: bool, force: bool, max_turns: u64) -> Row {
    let (m, l) = (e.agents(), e.goods());
    let mut row = Row {
        suite,
        index,
        m,
        l,
        eps: eps.to_string(),
        status: String::new(),
        rounds: 0,
        raises: 0,
        raise_bound: 0,
        p_max: 1.0,
        p_mm: None,
        far_end_flow: None,
        wall_ms: 0.0,
        clearing_residual: 0.0,
        violations: 0,
        verified: false,
    };
    let mut cfg = AuctionConfig::new(eps.clone());
    cfg.force = force;
    cfg.max_turns = max_turns;
    if audit {
        cfg.instrumentation = Instrumentation::EveryTurn;
    }
    let start = std::time::Instant::now();
    let mut st = match AuctionState::new(e.clone(), cfg) {
        Ok(st) => st,
        Err(err) => {
            row.status = format!("error: {err}");
            return row;
        }
    };
    let outcome = st.drive();
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row.rounds = st.counters().rounds_completed;
    row.raises = st.counters().raise_price_calls;
    row.p_max = Scalar::to_f64(st.p_max());
    row.raise_bound = (m * l) as u64 * (graphecon_core::scalar::ceil_log(&(S::one() + eps.clone()), st.p_max()) + 1);
    row.violations = st.violations().len();
    let plan = st.settled_plan();
    match suite {
        "pmax" => row.p_mm = Some(Scalar::to_f64(st.price(m - 1, m - 1))),
        "breadth" => row.far_end_flow = Some(Scalar::to_f64(&plan.consumption(m - 1, m - 2, 0))),
        _ => {}
    }
    for i in 0..m {
        let (supply, out) = (supply_vector(e, &plan, i), outflow_vector(e, &plan, i));
        for k in 0..l {
            let s = Scalar::to_f64(&supply[k]);
            if s > 0.0 {
                row.clearing_residual = row.clearing_residual.max((s - Scalar::to_f64(&out[k])) / s);
            }
        }
    }
    row.verified = verify_approx_equilibrium(e, st.prices(), &plan, eps).is_ok_and(|r| r.passed);
    row.status = match outcome {
        Ok(()) if row.violations > 0 => "invariant_violation".into(),
        Ok(()) if !row.verified => "verification_failed".into(),
        Ok(()) => "ok".into(),
        Err(err) if err.is_guard() => format!("guard: {err}"),
        Err(err) => format!("error: {err}"),
    };
    info!("{suite} #{index}: {} after {} raises", row.status, row.raises);
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_sizes_stay_small() {
        for n in 0..200 {
            let s = random_spec(n);
            assert!((2..=6).contains(&s.agents) && (2..=4).contains(&s.goods));
        }
        // Every size combination appears.
        let mut seen: Vec<_> = (0..15).map(|n| (random_spec(n).agents, random_spec(n).goods)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 15);
    }
}
