//! Ascending-price auction for approximate resale equilibria.
//!
//! Prices are powers of `1 + ε` and only go up. Agents take turns spending
//! their free surplus: first on idle supply, then by outbidding holders who
//! bought one price step ago, then by asking neighbours with resale capacity
//! to procure the good for them. When none of that works the seller's price
//! is raised. Every holding is booked at the seller's current price or one
//! step below it.

mod audit;
mod engine;
pub mod ledger;
pub mod trace;

use serde::Serialize;
use thiserror::Error;

use crate::assumptions::AssumptionId;
use crate::economy::{AgentId, GoodId, PriceSystem, TradePlan};
use crate::oracles::OracleError;
use crate::scalar::Scalar;

pub use engine::AuctionState;
pub use ledger::{Bucket, Use};
pub use trace::{PricePoint, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Instrumentation {
    Off,
    EveryTurn,
    /// Audit after every n-th turn.
    Sampled(u64),
}

#[derive(Clone, Debug)]
pub struct AuctionConfig<S> {
    pub eps: S,
    /// Turn order; ascending agent ids when `None`.
    pub schedule: Option<Vec<AgentId>>,
    /// Run even if the economy fails the standing assumptions.
    pub force: bool,
    pub max_raises: Option<u64>,
    /// Prices beyond this cap abort the run; `None` means no cap. Defaults
    /// to `2^64`.
    pub price_cap: Option<S>,
    pub max_turns: u64,
    pub instrumentation: Instrumentation,
    pub record_trace: bool,
}

impl<S: Scalar> AuctionConfig<S> {
    pub fn new(eps: S) -> Self {
        AuctionConfig {
            eps,
            schedule: None,
            force: false,
            max_raises: None,
            price_cap: Some(S::from_int(2).powi(64)),
            max_turns: 20_000_000,
            instrumentation: Instrumentation::Off,
            record_trace: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum AuctionError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(String),
    #[error("schedule must be a permutation of 0..{0}")]
    BadSchedule(usize),
    #[error("economy fails assumptions {failing:?}; pass force to run anyway")]
    Assumptions { failing: Vec<AssumptionId> },
    #[error("non-termination guard: {raises} price raises exceed the limit {limit}")]
    RaiseLimit { raises: u64, limit: u64 },
    #[error("non-termination guard: price {price} of good {good} at agent {agent} exceeds the cap")]
    PriceCap { agent: AgentId, good: GoodId, price: String },
    #[error("non-termination guard: {0} turns without terminating")]
    TurnLimit(u64),
    #[error("stalled: no agent can bid and the market is not in approximate equilibrium")]
    Stalled,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl AuctionError {
    /// Guard trips, as opposed to bad input or bugs.
    pub fn is_guard(&self) -> bool {
        matches!(self, AuctionError::RaiseLimit { .. } | AuctionError::PriceCap { .. } | AuctionError::TurnLimit(_) | AuctionError::Stalled)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// No surplus is left anywhere: every market clears exactly.
    ExactLocalClearing,
    /// Leftover surplus is below the clearing threshold.
    SurplusThreshold,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Counters {
    pub raise_price_calls: u64,
    pub skipped_raises: u64,
    pub rounds_completed: u64,
    pub turns: u64,
    pub oracle_calls_demand: u64,
    pub oracle_calls_resale: u64,
    pub assign_calls: u64,
    pub outbid_calls: u64,
    pub reschedule_calls: u64,
    pub update_resale_calls: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord<S> {
    pub round: u64,
    pub raise_price_calls: u64,
    pub tau: S,
    pub total_surplus: S,
    pub total_free_surplus: S,
}

#[derive(Clone, Debug)]
pub struct RunStats<S> {
    pub counters: Counters,
    pub p_max: S,
    pub price_trajectory: Vec<PricePoint>,
    /// `(raise index, τ right after that raise)`.
    pub tau_trajectory: Vec<(u64, S)>,
    pub rounds: Vec<RoundRecord<S>>,
    pub invariant_checks: u64,
    pub invariant_violations: Vec<String>,
    pub threshold: S,
    pub wall_time_ms: f64,
}

impl<S: Scalar> RunStats<S> {
    /// `ℓ·m·⌈log_{1+ε} p_max⌉ + ℓ·m`, the raise-count bound for the run.
    pub fn raise_bound(&self, agents: usize, goods: usize, eps: &S) -> u64 {
        let steps = crate::scalar::ceil_log(&(S::one() + eps.clone()), &self.p_max);
        (agents * goods) as u64 * (steps + 1)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult<S> {
    pub prices: PriceSystem<S>,
    pub plan: TradePlan<S>,
    pub termination: TerminationReason,
    pub stats: RunStats<S>,
    /// Closed-form surplus `s_i` at termination.
    pub surplus: Vec<S>,
    /// Unspent budget `β_i - p·x^i` at termination.
    pub free_surplus: Vec<S>,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceEvent>,
}

/// Runs the auction to termination.
pub fn run_auction<S: Scalar>(
    economy: &crate::economy::Economy<S>,
    config: AuctionConfig<S>,
) -> Result<RunResult<S>, AuctionError> {
    AuctionState::new(economy.clone(), config)?.run()
}
