//! Consumption and resale demand oracles for linear utilities, and the
//! optimality tests the verifiers build on.
//!
//! Plans for a single agent are [`PairPlan`]s keyed by `(seller, good)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::economy::{AgentId, Economy, EconomyError, GoodId, PriceSystem, ResaleKind};
use crate::scalar::Scalar;

pub type PairPlan<S> = BTreeMap<(AgentId, GoodId), S>;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("agent {agent}: good {good} is free at neighbour {seller} but has positive utility, demand is unbounded")]
    UnboundedDemand { agent: AgentId, seller: AgentId, good: GoodId },
    #[error("agent {agent}: good {good} is free at neighbour {seller} but priced positively by the agent, arbitrage is unbounded")]
    UnboundedArbitrage { agent: AgentId, seller: AgentId, good: GoodId },
    #[error("agent {agent}: negative budget {value}")]
    NegativeBudget { agent: AgentId, value: String },
    #[error("agent {agent}: call is not monotone ({detail})")]
    NonMonotoneCall { agent: AgentId, detail: String },
    #[error("agent {agent}: no good with positive utility is reachable")]
    NothingDesirable { agent: AgentId },
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

pub fn plan_cost<S: Scalar>(plan: &PairPlan<S>, prices: &PriceSystem<S>) -> S {
    plan.iter().fold(S::zero(), |acc, (&(j, k), q)| acc + prices.get(j, k).clone() * q.clone())
}

pub fn plan_units<S: Scalar>(plan: &PairPlan<S>) -> S {
    plan.values().fold(S::zero(), |acc, q| acc + q.clone())
}

fn add_to<S: Scalar>(plan: &mut PairPlan<S>, key: (AgentId, GoodId), q: S) {
    if q.is_zero() {
        return;
    }
    let cur = plan.remove(&key).unwrap_or_else(S::zero);
    plan.insert(key, cur + q);
}

/// Best bang-per-buck `u^i_k / p^j_k` over `j ≃ i`, and the pairs attaining
/// it in ascending `(k, j)` order. Goods with zero utility are ignored.
pub fn consumption_argmax<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
) -> Result<(S, Vec<(AgentId, GoodId)>), OracleError> {
    economy.check_agent(i)?;
    let mut best: Option<S> = None;
    let mut pairs = Vec::new();
    for k in 0..economy.goods() {
        let u = economy.utility(i, k);
        if u.is_zero() {
            continue;
        }
        for &j in economy.nbrs(i) {
            let p = prices.get(j, k);
            if p.is_zero() {
                return Err(OracleError::UnboundedDemand { agent: i, seller: j, good: k });
            }
            let bang = u.clone() / p.clone();
            match &best {
                Some(b) if bang.rel_lt(b) => {}
                Some(b) if bang.rel_eq(b) => pairs.push((j, k)),
                _ => {
                    best = Some(bang);
                    pairs.clear();
                    pairs.push((j, k));
                }
            }
        }
    }
    let best = best.ok_or(OracleError::NothingDesirable { agent: i })?;
    Ok((best, pairs))
}

/// Optimal linear consumption: the whole budget goes to the first argmax
/// pair in `(k, j)` order.
pub fn linear_consumption_demand<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    budget: &S,
) -> Result<PairPlan<S>, OracleError> {
    extend_consumption(economy, i, prices, budget, &[])
}

/// Keeps `pins` (in the given order) where they are still optimal and fit
/// the budget, then spends what is left on the first argmax pair.
pub fn extend_consumption<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    budget: &S,
    pins: &[((AgentId, GoodId), S)],
) -> Result<PairPlan<S>, OracleError> {
    if *budget < S::zero() {
        return Err(OracleError::NegativeBudget { agent: i, value: budget.to_string() });
    }
    let (_, argmax) = consumption_argmax(economy, i, prices)?;
    let allowed: BTreeSet<_> = argmax.iter().copied().collect();
    let mut plan = PairPlan::new();
    let mut remaining = budget.clone();
    for ((j, k), q) in pins {
        if !allowed.contains(&(*j, *k)) || remaining.is_zero() {
            continue;
        }
        let p = prices.get(*j, *k).clone();
        let take = S::min_of(q.clone(), remaining.clone() / p.clone());
        remaining = (remaining - take.clone() * p).clamp_nonneg();
        add_to(&mut plan, (*j, *k), take);
    }
    if remaining > S::zero() {
        let (j, k) = argmax[0];
        add_to(&mut plan, (j, k), remaining / prices.get(j, k).clone());
    }
    Ok(plan)
}

/// Arguments of a monotone oracle call: prices and budget only go up
/// between the previous call and this one.
#[derive(Clone, Debug)]
pub struct ConsumptionCall<'a, S> {
    pub old_prices: &'a PriceSystem<S>,
    pub new_prices: &'a PriceSystem<S>,
    pub old_budget: S,
    pub new_budget: S,
    pub old_plan: &'a PairPlan<S>,
}

/// Weak-gross-substitutes consumption oracle. Quantities bought at
/// coordinates whose price did not move are never reduced.
pub fn wgs_consumption_oracle<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    call: &ConsumptionCall<'_, S>,
) -> Result<PairPlan<S>, OracleError> {
    economy.check_agent(i)?;
    if call.new_budget < call.old_budget {
        return Err(OracleError::NonMonotoneCall { agent: i, detail: format!("budget fell from {} to {}", call.old_budget, call.new_budget) });
    }
    for &j in economy.nbrs(i) {
        for k in 0..economy.goods() {
            if call.new_prices.get(j, k) < call.old_prices.get(j, k) {
                return Err(OracleError::NonMonotoneCall { agent: i, detail: format!("price of good {k} at {j} fell") });
            }
        }
    }
    // Unchanged coordinates are pinned first so a rise elsewhere cannot
    // crowd them out of the budget.
    let mut pins: Vec<_> = call.old_plan.iter().map(|(&key, q)| (key, q.clone())).collect();
    pins.sort_by_key(|&((j, k), _)| (call.new_prices.get(j, k) != call.old_prices.get(j, k), k, j));
    extend_consumption(economy, i, call.new_prices, &call.new_budget, &pins)
}

/// Per-unit figure of merit of reselling good `k` bought from `j`:
/// the price ratio under credit bounds, the price gap under commodity bounds.
pub fn resale_metric<S: Scalar>(kind: ResaleKind, own: &S, source: &S) -> Option<S> {
    match kind {
        ResaleKind::Credit if source.is_zero() => None,
        ResaleKind::Credit => Some(own.clone() / source.clone()),
        ResaleKind::Commodity => Some(own.clone() - source.clone()),
    }
}

/// Metric value of a break-even resale.
pub fn resale_neutral<S: Scalar>(kind: ResaleKind) -> S {
    match kind {
        ResaleKind::Credit => S::one(),
        ResaleKind::Commodity => S::zero(),
    }
}

/// Best resale metric over `j ~ i` and the profitable pairs attaining it,
/// ascending `(k, j)`. `None` when nothing is strictly profitable.
pub fn resale_argmax<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    kind: ResaleKind,
) -> Result<Option<(S, Vec<(AgentId, GoodId)>)>, OracleError> {
    economy.check_agent(i)?;
    let mut best: Option<S> = None;
    let mut pairs = Vec::new();
    for k in 0..economy.goods() {
        let own = prices.get(i, k);
        for &j in economy.nbrs(i) {
            if j == i {
                continue;
            }
            let src = prices.get(j, k);
            if kind == ResaleKind::Credit && src.is_zero() && own > &S::zero() {
                return Err(OracleError::UnboundedArbitrage { agent: i, seller: j, good: k });
            }
            let Some(m) = resale_metric(kind, own, src) else { continue };
            match &best {
                Some(b) if m.definitely_lt(b) => {}
                Some(b) if m.approx_eq(b) => pairs.push((j, k)),
                _ => {
                    best = Some(m);
                    pairs.clear();
                    pairs.push((j, k));
                }
            }
        }
    }
    Ok(best.filter(|b| b.definitely_gt(&resale_neutral(kind))).map(|b| (b, pairs)))
}

/// Requested goods are served first from their lowest-index argmax source,
/// scaled down uniformly if they exceed the capacity; leftover capacity goes
/// to the first argmax pair.
fn allocate<S: Scalar>(
    pairs: &[(AgentId, GoodId)],
    unit_cost: impl Fn(AgentId, GoodId) -> S,
    capacity: &S,
    request: Option<&[S]>,
) -> PairPlan<S> {
    let mut plan = PairPlan::new();
    let mut remaining = capacity.clone();
    if let Some(req) = request {
        let mut wanted = Vec::new();
        for (k, r) in req.iter().enumerate() {
            if *r <= S::zero() {
                continue;
            }
            if let Some(&(j, _)) = pairs.iter().find(|&&(_, g)| g == k) {
                wanted.push(((j, k), r.clone()));
            }
        }
        let cost = wanted.iter().fold(S::zero(), |acc, ((j, k), r)| acc + unit_cost(*j, *k) * r.clone());
        if cost > S::zero() {
            let scale = if cost > remaining { remaining.clone() / cost.clone() } else { S::one() };
            for ((j, k), r) in wanted {
                add_to(&mut plan, (j, k), r * scale.clone());
            }
            remaining = (remaining - S::min_of(cost, capacity.clone())).clamp_nonneg();
        }
    }
    if remaining > S::zero() {
        let (j, k) = pairs[0];
        let c = unit_cost(j, k);
        add_to(&mut plan, (j, k), remaining / c);
    }
    plan
}

/// Optimal resale under a credit bound: spend all of `credit` on pairs with
/// the largest price ratio `p^i_k / p^j_k`, if that ratio exceeds one.
pub fn credit_resale_demand<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    credit: &S,
    request: Option<&[S]>,
) -> Result<PairPlan<S>, OracleError> {
    if *credit < S::zero() {
        return Err(OracleError::NegativeBudget { agent: i, value: credit.to_string() });
    }
    let Some((_, pairs)) = resale_argmax(economy, i, prices, ResaleKind::Credit)? else {
        return Ok(PairPlan::new());
    };
    if credit.is_zero() {
        return Ok(PairPlan::new());
    }
    Ok(allocate(&pairs, |j, k| prices.get(j, k).clone(), credit, request))
}

/// Optimal resale under a unit bound: `capacity` units on the pairs with the
/// largest positive price gap `p^i_k - p^j_k`.
pub fn commodity_resale_demand<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    capacity: &S,
    request: Option<&[S]>,
) -> Result<PairPlan<S>, OracleError> {
    if *capacity < S::zero() {
        return Err(OracleError::NegativeBudget { agent: i, value: capacity.to_string() });
    }
    let Some((_, pairs)) = resale_argmax(economy, i, prices, ResaleKind::Commodity)? else {
        return Ok(PairPlan::new());
    };
    if capacity.is_zero() {
        return Ok(PairPlan::new());
    }
    Ok(allocate(&pairs, |_, _| S::one(), capacity, request))
}

/// Dispatches on the economy's resale kind.
pub fn resale_demand<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    prices: &PriceSystem<S>,
    bound: &S,
    request: Option<&[S]>,
) -> Result<PairPlan<S>, OracleError> {
    match economy.resale_kind() {
        ResaleKind::Credit => credit_resale_demand(economy, i, prices, bound, request),
        ResaleKind::Commodity => commodity_resale_demand(economy, i, prices, bound, request),
    }
}

/// How much of the resale bound a plan uses: money for credit bounds,
/// units for commodity bounds.
pub fn resale_usage<S: Scalar>(kind: ResaleKind, plan: &PairPlan<S>, prices: &PriceSystem<S>) -> S {
    match kind {
        ResaleKind::Credit => plan_cost(plan, prices),
        ResaleKind::Commodity => plan_units(plan),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityCheck<S> {
    pub optimal: bool,
    /// Size of the worst violation; zero for optimal plans.
    pub residual: S,
    pub detail: Option<String>,
}

impl<S: Scalar> OptimalityCheck<S> {
    fn pass() -> Self {
        OptimalityCheck { optimal: true, residual: S::zero(), detail: None }
    }

    fn fail(residual: S, detail: String) -> Self {
        OptimalityCheck { optimal: false, residual, detail: Some(detail) }
    }
}

/// Knobs shared by the consumption and resale tests.
///
/// Held pairs are compared against the best available pair with their own
/// price relaxed by `1 + slack`. With `full_use` the budget (or bound) must
/// be spent up to the same factor; without it only the upper limit applies.
#[derive(Clone, Debug)]
pub struct CheckOptions<S> {
    pub slack: S,
    pub full_use: bool,
    /// `(seller, good)` pairs whose whole local supply the agent already
    /// holds; a zero price there does not make demand unbounded.
    pub saturated: BTreeSet<(AgentId, GoodId)>,
}

impl<S: Scalar> CheckOptions<S> {
    pub fn exact(slack: S) -> Self {
        CheckOptions { slack, full_use: true, saturated: BTreeSet::new() }
    }

    pub fn dominated(slack: S) -> Self {
        CheckOptions { slack, full_use: false, saturated: BTreeSet::new() }
    }
}

fn within_upper<S: Scalar>(value: &S, limit: &S, slack: &S) -> bool {
    value.approx_le(&(limit.clone() * (S::one() + slack.clone())))
}

fn within_lower<S: Scalar>(value: &S, target: &S, slack: &S) -> bool {
    (value.clone() * (S::one() + slack.clone())).approx_ge(target)
}

/// Is `plan` an optimal consumption bundle for `i` at `budget`, up to `slack`?
pub fn is_optimal_consumption<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    plan: &PairPlan<S>,
    prices: &PriceSystem<S>,
    budget: &S,
    slack: &S,
) -> OptimalityCheck<S> {
    check_consumption(economy, i, plan, prices, budget, &CheckOptions::exact(slack.clone()))
}

pub fn check_consumption<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    plan: &PairPlan<S>,
    prices: &PriceSystem<S>,
    budget: &S,
    opts: &CheckOptions<S>,
) -> OptimalityCheck<S> {
    let slack = &opts.slack;
    let spend = plan_cost(plan, prices);
    if !within_upper(&spend, budget, slack) {
        return OptimalityCheck::fail(spend.clone() - budget.clone(), format!("spends {spend} with budget {budget}"));
    }
    let mut best: Option<S> = None;
    for &j in economy.nbrs(i) {
        for k in 0..economy.goods() {
            let u = economy.utility(i, k);
            if u.is_zero() {
                continue;
            }
            let p = prices.get(j, k);
            if p.is_zero() {
                if !opts.saturated.contains(&(j, k)) {
                    return OptimalityCheck::fail(u.clone(), format!("good {k} is free at {j}, demand is unbounded"));
                }
                continue;
            }
            let bang = u.clone() / p.clone();
            if best.as_ref().map_or(true, |b| bang > *b) {
                best = Some(bang);
            }
        }
    }
    let mut worst = S::zero();
    let mut detail = None;
    for (&(j, k), q) in plan {
        if q.is_zero() {
            continue;
        }
        let p = prices.get(j, k);
        let u = economy.utility(i, k);
        if p.is_zero() {
            continue;
        }
        let Some(best) = &best else {
            // No priced good is worth anything: a priced purchase is waste.
            return OptimalityCheck::fail(p.clone() * q.clone(), format!("buys good {k} from {j} with no value"));
        };
        let relaxed = u.clone() * (S::one() + slack.clone()) / p.clone();
        if relaxed.rel_lt(best) {
            let gap = S::one() - relaxed / best.clone();
            if gap > worst {
                worst = gap;
                detail = Some(format!("bang-per-buck of good {k} from {j} is below the best"));
            }
        }
    }
    if let Some(d) = detail {
        return OptimalityCheck::fail(worst, d);
    }
    if opts.full_use && best.is_some() && !within_lower(&spend, budget, slack) {
        return OptimalityCheck::fail(budget.clone() - spend.clone(), format!("spends {spend} of budget {budget}"));
    }
    OptimalityCheck::pass()
}

/// Is `plan` an optimal resale plan for `i` with bound `bound`, up to `slack`?
pub fn is_optimal_resale<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    plan: &PairPlan<S>,
    prices: &PriceSystem<S>,
    bound: &S,
    slack: &S,
) -> OptimalityCheck<S> {
    check_resale(economy, i, plan, prices, bound, &CheckOptions::exact(slack.clone()))
}

pub fn check_resale<S: Scalar>(
    economy: &Economy<S>,
    i: AgentId,
    plan: &PairPlan<S>,
    prices: &PriceSystem<S>,
    bound: &S,
    opts: &CheckOptions<S>,
) -> OptimalityCheck<S> {
    let kind = economy.resale_kind();
    let slack = &opts.slack;
    let factor = S::one() + slack.clone();
    if plan.keys().any(|&(j, _)| j == i) {
        return OptimalityCheck::fail(S::one(), "resells to itself".into());
    }
    let usage = resale_usage(kind, plan, prices);
    if !within_upper(&usage, bound, slack) {
        return OptimalityCheck::fail(usage.clone() - bound.clone(), format!("resale usage {usage} exceeds bound {bound}"));
    }
    let own = |k: GoodId| prices.get(i, k).clone();
    let mut best = resale_neutral::<S>(kind);
    for &j in economy.nbrs(i) {
        if j == i {
            continue;
        }
        for k in 0..economy.goods() {
            let src = prices.get(j, k);
            if kind == ResaleKind::Credit && src.is_zero() && own(k) > S::zero() {
                if bound.is_zero() {
                    continue;
                }
                return OptimalityCheck::fail(own(k), format!("good {k} is free at {j}, arbitrage is unbounded"));
            }
            if let Some(m) = resale_metric(kind, &own(k), src) {
                if m > best {
                    best = m;
                }
            }
        }
    }
    let mut worst = S::zero();
    let mut detail = None;
    for (&(j, k), q) in plan {
        if q.is_zero() {
            continue;
        }
        let relaxed_src = prices.get(j, k).clone() / factor.clone();
        let Some(m) = resale_metric(kind, &own(k), &relaxed_src) else { continue };
        if m.definitely_lt(&best) {
            let gap = best.clone() - m;
            if gap > worst {
                worst = gap;
                detail = Some(format!("resale of good {k} from {j} is not among the most profitable"));
            }
        }
    }
    if let Some(d) = detail {
        return OptimalityCheck::fail(worst, d);
    }
    let profitable = best.definitely_gt(&resale_neutral(kind));
    if opts.full_use && profitable && !within_lower(&usage, bound, slack) {
        return OptimalityCheck::fail(bound.clone() - usage.clone(), format!("uses {usage} of resale bound {bound}"));
    }
    OptimalityCheck::pass()
}
