use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Subcommand};
use graphecon_core::generators::{
    gen_asymmetric_broker, gen_breadth_chain, gen_broker, gen_epsilon_kko_broker, gen_pmax_chain, random_economy, GenError, RandomSpec,
};
use graphecon_core::io::{certificate_to_json, economy_to_json, to_pretty, Certificate};
use graphecon_core::{Economy, NumericMode, Rational, Scalar};

use crate::common::{resolve_mode, scalar_arg, usage, write_text, CliError};

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
    /// Economy file; stdout by default.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Analytic certificate, for generators that have one.
    #[arg(long, global = true)]
    pub cert: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum GenKind {
    /// Three-agent broker economy.
    Broker {
        #[arg(long, default_value = "1/2")]
        b: String,
    },
    /// Broker whose middle agent only wants good 1.
    AsymmetricBroker {
        #[arg(long, default_value = "3/4")]
        b: String,
    },
    /// Asymmetric broker with padded endowments and no resale.
    KkoBroker {
        #[arg(long, default_value = "1/10")]
        pad: String,
    },
    /// Broker chain of m agents.
    Breadth {
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, default_value = "1/2")]
        b: String,
    },
    /// Chain of m agents and m goods with preference ratio alpha.
    Pmax {
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, default_value = "2")]
        alpha: String,
    },
    /// Seeded random economy passing every assumption.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        agents: usize,
        #[arg(long, default_value_t = 3)]
        goods: usize,
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
        #[arg(long, default_value_t = 0.4)]
        endow_prob: f64,
        #[arg(long, default_value_t = 4)]
        max_bound_quarters: i64,
    },
}

pub fn run(mode: Option<NumericMode>, args: GenArgs) -> Result<ExitCode, CliError> {
    match resolve_mode(mode, None)? {
        NumericMode::Exact => generate::<Rational>(&args),
        NumericMode::Float => generate::<f64>(&args),
    }
}

fn generate<S: Scalar>(args: &GenArgs) -> Result<ExitCode, CliError> {
    let gen_err = |e: GenError| usage(e);
    let (e, cert): (Economy<S>, Option<Certificate<S>>) = match &args.kind {
        GenKind::Broker { b } => gen_broker(&scalar_arg::<S>("b", b)?).map(|(e, c)| (e, Some(c))).map_err(gen_err)?,
        GenKind::AsymmetricBroker { b } => gen_asymmetric_broker(&scalar_arg::<S>("b", b)?).map(|(e, c)| (e, Some(c))).map_err(gen_err)?,
        GenKind::KkoBroker { pad } => gen_epsilon_kko_broker(&scalar_arg::<S>("pad", pad)?).map(|(e, c)| (e, Some(c))).map_err(gen_err)?,
        GenKind::Breadth { m, b } => (gen_breadth_chain(*m, &scalar_arg::<S>("b", b)?).map_err(gen_err)?, None),
        GenKind::Pmax { m, alpha } => (gen_pmax_chain(*m, &scalar_arg::<S>("alpha", alpha)?).map_err(gen_err)?, None),
        GenKind::Random { seed, agents, goods, edge_prob, endow_prob, max_bound_quarters } => {
            if *agents == 0 || *goods == 0 || *max_bound_quarters < 1 || !(0.0..=1.0).contains(edge_prob) || !(*endow_prob > 0.0 && *endow_prob <= 1.0) {
                return Err(usage("random: need agents, goods and max-bound-quarters >= 1 and edge-prob in [0, 1] and endow-prob in (0, 1]"));
            }
            let spec = RandomSpec { agents: *agents, goods: *goods, edge_prob: *edge_prob, endow_prob: *endow_prob, max_bound_quarters: *max_bound_quarters };
            (random_economy(*seed, &spec), None)
        }
    };
    write_text(args.out.as_deref(), &to_pretty(&economy_to_json(&e)))?;
    match (&args.cert, cert) {
        (Some(path), Some(c)) => write_text(Some(path), &to_pretty(&certificate_to_json(&c)))?,
        (Some(_), None) => return Err(usage("this generator has no analytic certificate")),
        _ => {}
    }
    Ok(ExitCode::SUCCESS)
}
