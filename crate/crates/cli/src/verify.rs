use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args};
use graphecon_core::io::{certificate_from_json, check_certificate_shape, Certificate};
use graphecon_core::verifier::{verify_ad, verify_approx_equilibrium, verify_kko, verify_resale_equilibrium, VerifyError};
use graphecon_core::{Economy, NumericMode, Rational, Scalar};
use serde_json::Value;

use crate::common::{economy, load_doc, pass_or_fail, positive_arg, resolve_mode, scalar_arg, usage, write_json, CliError};

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("check").required(true).args(["exact", "approx", "kko", "ad"])))]
pub struct VerifyArgs {
    pub economy: PathBuf,
    pub certificate: PathBuf,
    /// Exact resale equilibrium.
    #[arg(long)]
    pub exact: bool,
    /// (1+EPS)-approximate resale equilibrium.
    #[arg(long, value_name = "EPS")]
    pub approx: Option<String>,
    /// Equilibrium without resale.
    #[arg(long)]
    pub kko: bool,
    /// Classical equilibrium on a complete graph.
    #[arg(long)]
    pub ad: bool,
    /// Slack for the exact checks; 0 in exact mode and 1e-9 in float mode by default.
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(mode: Option<NumericMode>, args: VerifyArgs) -> Result<ExitCode, CliError> {
    let doc = load_doc(&args.economy)?;
    let cert = load_doc(&args.certificate)?;
    match resolve_mode(mode, Some(&doc))? {
        NumericMode::Exact => verify::<Rational>(&doc, &cert, &args),
        NumericMode::Float => verify::<f64>(&doc, &cert, &args),
    }
}

fn verify<S: Scalar>(doc: &Value, cert: &Value, args: &VerifyArgs) -> Result<ExitCode, CliError> {
    let e: Economy<S> = economy(doc)?;
    let cert: Certificate<S> = certificate_from_json(cert)?;
    check_certificate_shape(&e, &cert).map_err(|err| usage(format!("certificate does not fit the economy: {err}")))?;
    let tol: S = match &args.tol {
        Some(t) => scalar_arg("tol", t)?,
        None => match S::MODE {
            NumericMode::Exact => S::zero(),
            NumericMode::Float => S::from_f64_lossy(1e-9),
        },
    };
    let (p, x) = (&cert.prices, &cert.plan);
    let report = if let Some(eps) = &args.approx {
        verify_approx_equilibrium(&e, p, x, &positive_arg::<S>("approx", eps)?)
    } else if args.kko {
        verify_kko(&e, p, x, &tol)
    } else if args.ad {
        verify_ad(&e, p, x, &tol)
    } else {
        verify_resale_equilibrium(&e, p, x, &tol)
    };
    let report = report.map_err(|err| match err {
        VerifyError::ResaleNotAllowed { .. } => CliError::Failed(err.to_string()),
        other => usage(other),
    })?;
    write_json(args.out.as_deref(), &report)?;
    if !report.passed {
        let names: Vec<_> = report.failing_conditions().iter().map(|c| c.name()).collect();
        eprintln!("graphecon: failing conditions: {}", names.join(", "));
    }
    Ok(pass_or_fail(report.passed))
}
