//! Certificate checks for exact and approximate equilibria, the no-resale
//! and complete-graph special cases, and a grid-search oracle for tiny
//! economies.
//!
//! Every check produces a [`VerifierReport`] listing each condition that was
//! evaluated with its residual, so a failing certificate says where and by
//! how much it fails.

mod brute;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::economy::{budget_of, spend_of, AgentId, Economy, EconomyError, GoodId, PriceSystem, TradePlan};
use crate::oracles::{check_consumption, check_resale, CheckOptions, OptimalityCheck};
use crate::scalar::Scalar;

pub use brute::{brute_force_search, grid_size, BruteForceError, BruteForceResult, Candidate, GridSpec, MAX_GRID_POINTS};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Shape(#[from] EconomyError),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(String),
    #[error("tolerance must be nonnegative, got {0}")]
    BadTolerance(String),
    #[error("plan resells {count} entries; the no-resale check needs y = 0")]
    ResaleNotAllowed { count: usize },
    #[error("the trade graph is not complete")]
    NotComplete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LocalClearing,
    OptimalArbitrage,
    IndividualRationality,
    BudgetUse,
    UniformPrices,
    GlobalClearing,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::LocalClearing => "local_clearing",
            Condition::OptimalArbitrage => "optimal_arbitrage",
            Condition::IndividualRationality => "individual_rationality",
            Condition::BudgetUse => "budget_use",
            Condition::UniformPrices => "uniform_prices",
            Condition::GlobalClearing => "global_clearing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub agent: Option<AgentId>,
    pub good: Option<GoodId>,
    pub passed: bool,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifierReport {
    pub check: &'static str,
    pub passed: bool,
    pub conditions: Vec<ConditionResult>,
}

impl VerifierReport {
    fn new(check: &'static str) -> Self {
        VerifierReport { check, passed: true, conditions: Vec::new() }
    }

    fn push<S: Scalar>(&mut self, condition: Condition, agent: Option<AgentId>, good: Option<GoodId>, passed: bool, residual: &S, detail: Option<String>) {
        self.passed &= passed;
        self.conditions.push(ConditionResult { condition, agent, good, passed, residual: Scalar::to_f64(residual), detail });
    }

    fn push_check<S: Scalar>(&mut self, condition: Condition, agent: AgentId, check: OptimalityCheck<S>) {
        self.push(condition, Some(agent), None, check.optimal, &check.residual, check.detail);
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionResult> {
        self.conditions.iter().filter(|c| !c.passed)
    }

    /// Conditions that failed at least once, in first-failure order.
    pub fn failing_conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for c in self.failures() {
            if !out.contains(&c.condition) {
                out.push(c.condition);
            }
        }
        out
    }

    pub fn max_residual(&self, condition: Condition) -> f64 {
        self.conditions.iter().filter(|c| c.condition == condition).map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Per good at `i`: (local supply `e^i + Σ_j y^{ij}`, outflow `Σ_j x^{ji} + y^{ji}`).
fn flows<S: Scalar>(economy: &Economy<S>, plan: &TradePlan<S>, i: AgentId) -> Vec<(S, S)> {
    (0..economy.goods())
        .map(|k| {
            let (x, y) = plan.sold_by(i, k);
            let stock = plan.resale_of(i).into_iter().filter(|&((_, g), _)| g == k).fold(S::zero(), |acc, (_, v)| acc + v);
            (economy.endowment(i, k).clone() + stock, x + y)
        })
        .collect()
}

/// Pairs `(j, k)` priced at zero where `i` already takes everything `j`
/// has of good `k`.
fn saturated<S: Scalar>(economy: &Economy<S>, prices: &PriceSystem<S>, plan: &TradePlan<S>, i: AgentId) -> BTreeSet<(AgentId, GoodId)> {
    let mine = plan.consumption_of(i);
    let mut out = BTreeSet::new();
    for &j in economy.nbrs(i) {
        let supply = flows(economy, plan, j);
        for (k, (stock, _)) in supply.iter().enumerate() {
            if !prices.get(j, k).is_zero() {
                continue;
            }
            let held = mine.get(&(j, k)).cloned().unwrap_or_else(S::zero);
            if held.approx_ge(stock) {
                out.insert((j, k));
            }
        }
    }
    out
}

fn check_shapes<S: Scalar>(economy: &Economy<S>, prices: &PriceSystem<S>, plan: &TradePlan<S>) -> Result<(), VerifyError> {
    prices.validate(economy, false)?;
    plan.validate(economy)?;
    Ok(())
}

fn check_tol<S: Scalar>(tol: &S) -> Result<(), VerifyError> {
    if *tol < S::zero() {
        return Err(VerifyError::BadTolerance(tol.to_string()));
    }
    Ok(())
}

/// Exact equilibrium: local clearing, optimal resale, and optimal
/// consumption at the induced budgets, each within `tol`.
pub fn verify_resale_equilibrium<S: Scalar>(
    economy: &Economy<S>,
    prices: &PriceSystem<S>,
    plan: &TradePlan<S>,
    tol: &S,
) -> Result<VerifierReport, VerifyError> {
    check_shapes(economy, prices, plan)?;
    check_tol(tol)?;
    let mut report = VerifierReport::new("resale_equilibrium");
    for i in 0..economy.agents() {
        for (k, (supply, outflow)) in flows(economy, plan, i).into_iter().enumerate() {
            let gap = (outflow.clone() - supply.clone()).abs();
            let ok = gap.approx_le(tol);
            let detail = (!ok).then(|| format!("sells {outflow} of supply {supply}"));
            report.push(Condition::LocalClearing, Some(i), Some(k), ok, &gap, detail);
        }
        let mut opts = CheckOptions::exact(tol.clone());
        let resale = check_resale(economy, i, &plan.resale_of(i), prices, economy.resale_bound(i), &opts);
        report.push_check(Condition::OptimalArbitrage, i, resale);
        opts.saturated = saturated(economy, prices, plan, i);
        let budget = budget_of(economy, prices, plan, i);
        let consumption = check_consumption(economy, i, &plan.consumption_of(i), prices, &budget, &opts);
        report.push_check(Condition::IndividualRationality, i, consumption);
    }
    Ok(report)
}

/// `(1+ε)`-approximate equilibrium: clearing and budget use within a factor
/// `1+ε`, and resale and consumption dominated by optimal plans at prices
/// relaxed by `1+ε`.
///
/// Domination is tested directly: each held coordinate must attain the best
/// metric once its own source price is divided by `1+ε`, and the plan must
/// fit the bound or budget measured at the relaxed prices.
pub fn verify_approx_equilibrium<S: Scalar>(
    economy: &Economy<S>,
    prices: &PriceSystem<S>,
    plan: &TradePlan<S>,
    eps: &S,
) -> Result<VerifierReport, VerifyError> {
    check_shapes(economy, prices, plan)?;
    if *eps <= S::zero() {
        return Err(VerifyError::BadEpsilon(eps.to_string()));
    }
    let factor = S::one() + eps.clone();
    let mut report = VerifierReport::new("approx_equilibrium");
    for i in 0..economy.agents() {
        for (k, (supply, outflow)) in flows(economy, plan, i).into_iter().enumerate() {
            let floor = supply.clone() / factor.clone();
            let under = floor.clone() - outflow.clone();
            let over = outflow.clone() - supply.clone();
            let ok = under.approx_le(&S::zero()) && over.approx_le(&S::zero());
            let residual = S::max_of(S::max_of(under, over), S::zero());
            let detail = (!ok).then(|| format!("sells {outflow}, needs between {floor} and {supply}"));
            report.push(Condition::LocalClearing, Some(i), Some(k), ok, &residual, detail);
        }
        let mut opts = CheckOptions::dominated(eps.clone());
        let resale = check_resale(economy, i, &plan.resale_of(i), prices, economy.resale_bound(i), &opts);
        report.push_check(Condition::OptimalArbitrage, i, resale);
        // Budget at the relaxed prices: own prices kept, neighbours' divided.
        let relaxed_budget = {
            let mut beta = S::zero();
            for k in 0..economy.goods() {
                beta = beta + prices.get(i, k).clone() * economy.endowment(i, k).clone();
            }
            for ((j, k), y) in plan.resale_of(i) {
                beta = beta + (prices.get(i, k).clone() - prices.get(j, k).clone() / factor.clone()) * y;
            }
            beta
        };
        opts.saturated = saturated(economy, prices, plan, i);
        let consumption = check_consumption(economy, i, &plan.consumption_of(i), prices, &relaxed_budget, &opts);
        report.push_check(Condition::IndividualRationality, i, consumption);
        let beta = budget_of(economy, prices, plan, i);
        let spend = spend_of(prices, plan, i);
        let under = beta.clone() / factor.clone() - spend.clone();
        let over = spend.clone() - beta.clone();
        let ok = under.approx_le(&S::zero()) && over.approx_le(&S::zero());
        let residual = S::max_of(S::max_of(under, over), S::zero());
        let detail = (!ok).then(|| format!("spends {spend} of budget {beta}"));
        report.push(Condition::BudgetUse, Some(i), None, ok, &residual, detail);
    }
    Ok(report)
}

/// Equilibrium without resale: the plan must carry no resale and is checked
/// as an exact equilibrium with every resale bound set to zero.
pub fn verify_kko<S: Scalar>(
    economy: &Economy<S>,
    prices: &PriceSystem<S>,
    plan: &TradePlan<S>,
    tol: &S,
) -> Result<VerifierReport, VerifyError> {
    let count = plan.resale_entries().filter(|(_, v)| !v.is_zero()).count();
    if count > 0 {
        return Err(VerifyError::ResaleNotAllowed { count });
    }
    let no_resale = economy.with_resale_bounds(vec![S::zero(); economy.agents()])?;
    let mut report = verify_resale_equilibrium(&no_resale, prices, plan, tol)?;
    report.check = "kko";
    Ok(report)
}

/// Classical exchange equilibrium on a complete graph: one price vector for
/// everyone, global clearing, and optimal consumption at `p·e^i`. Resale
/// entries are ignored.
pub fn verify_ad<S: Scalar>(
    economy: &Economy<S>,
    prices: &PriceSystem<S>,
    plan: &TradePlan<S>,
    tol: &S,
) -> Result<VerifierReport, VerifyError> {
    check_shapes(economy, prices, plan)?;
    check_tol(tol)?;
    if !economy.is_complete_graph() {
        return Err(VerifyError::NotComplete);
    }
    let mut report = VerifierReport::new("ad");
    let m = economy.agents();
    let l = economy.goods();
    for i in 1..m {
        for k in 0..l {
            let gap = (prices.get(i, k).clone() - prices.get(0, k).clone()).abs();
            let ok = gap.approx_le(tol);
            let detail = (!ok).then(|| format!("price {} differs from {}", prices.get(i, k), prices.get(0, k)));
            report.push(Condition::UniformPrices, Some(i), Some(k), ok, &gap, detail);
        }
    }
    for k in 0..l {
        let total_e = (0..m).fold(S::zero(), |acc, i| acc + economy.endowment(i, k).clone());
        let total_x = plan.consumption_entries().filter(|&((_, _, g), _)| g == k).fold(S::zero(), |acc, (_, v)| acc + v.clone());
        let gap = (total_x.clone() - total_e.clone()).abs();
        let ok = gap.approx_le(tol);
        let detail = (!ok).then(|| format!("consumed {total_x} of {total_e}"));
        report.push(Condition::GlobalClearing, None, Some(k), ok, &gap, detail);
    }
    let no_resale = TradePlan::new();
    let mut opts = CheckOptions::exact(tol.clone());
    for i in 0..m {
        let budget = budget_of(economy, prices, &no_resale, i);
        opts.saturated = saturated(economy, prices, plan, i);
        let check = check_consumption(economy, i, &plan.consumption_of(i), prices, &budget, &opts);
        report.push_check(Condition::IndividualRationality, i, check);
    }
    Ok(report)
}
