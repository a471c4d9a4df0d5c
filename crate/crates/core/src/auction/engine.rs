use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::warn;

use super::ledger::{Bucket, Ledger, Use};
use super::trace::{PricePoint, TraceEvent};
use super::{AuctionConfig, AuctionError, Counters, Instrumentation, RoundRecord, RunResult, RunStats, TerminationReason};
use crate::assumptions::{check_assumptions, AssumptionId};
use crate::economy::{AgentId, Economy, GoodId, PriceSystem, ResaleKind, TradePlan};
use crate::oracles::{consumption_argmax, extend_consumption, resale_argmax, resale_demand, resale_metric, resale_neutral};
use crate::scalar::{ceil_log, Scalar};

/// A quantity asked for at a quoted price. Requests whose seller price has
/// moved since the quote are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Request<S> {
    pub quantity: S,
    pub quoted: S,
}

pub type Requests<S> = BTreeMap<(AgentId, GoodId), Request<S>>;
pub type Fills<S> = BTreeMap<(AgentId, GoodId), S>;

const SETTLE_GUARD: u64 = 10_000_000;

/// Mutable auction state. The public methods are the auction's primitive
/// operations; [`AuctionState::run`] drives them to termination.
pub struct AuctionState<S: Scalar> {
    pub(super) economy: Economy<S>,
    pub(super) config: AuctionConfig<S>,
    pub(super) eps: S,
    pub(super) factor: S,
    pub(super) exponents: Vec<Vec<u32>>,
    pub(super) prices: PriceSystem<S>,
    pub(super) ledger: Ledger<S>,
    /// Incrementally maintained `s_i`.
    pub(super) surplus: Vec<S>,
    touched: BTreeMap<(AgentId, AgentId, GoodId), u64>,
    tick: u64,
    pending: BTreeSet<(AgentId, GoodId)>,
    pub(super) counters: Counters,
    round: u64,
    p_max: S,
    price_log: Vec<PricePoint>,
    tau_log: Vec<(u64, S)>,
    rounds: Vec<RoundRecord<S>>,
    pub(super) tau_baseline: S,
    pub(super) violations: Vec<String>,
    pub(super) checks: u64,
    events: Vec<TraceEvent>,
    warnings: Vec<String>,
    raise_limit: Option<u64>,
    threshold: S,
}

impl<S: Scalar> AuctionState<S> {
    pub fn new(economy: Economy<S>, config: AuctionConfig<S>) -> Result<Self, AuctionError> {
        if config.eps <= S::zero() {
            return Err(AuctionError::BadEpsilon(config.eps.to_string()));
        }
        let m = economy.agents();
        let l = economy.goods();
        if let Some(order) = &config.schedule {
            let set: BTreeSet<_> = order.iter().copied().collect();
            if order.len() != m || set.len() != m || set.iter().any(|&i| i >= m) {
                return Err(AuctionError::BadSchedule(m));
            }
        }
        let mut warnings = Vec::new();
        let report = check_assumptions(&economy);
        let mut failing = report.failing();
        if economy.resale_kind() == ResaleKind::Commodity {
            let msg = "commodity resale bounds: approximation guarantees do not apply".to_string();
            warn!("{msg}");
            warnings.push(msg);
            failing.retain(|&a| a != AssumptionId::Resale);
        }
        if !failing.is_empty() {
            if !config.force {
                return Err(AuctionError::Assumptions { failing });
            }
            let msg = format!("running despite failed assumptions {failing:?}");
            warn!("{msg}");
            warnings.push(msg);
        }
        let eps = config.eps.clone();
        let factor = S::one() + eps.clone();
        let surplus = (0..m).map(|i| economy.endowment_row(i).iter().fold(S::zero(), |a, e| a + e.clone())).collect();
        let mut raise_limit = config.max_raises;
        if let Some(cap) = &config.price_cap {
            let steps = ceil_log(&factor, cap);
            let lim = (m * l) as u64 * steps.max(1);
            raise_limit = Some(raise_limit.map_or(lim, |r| r.min(lim)));
        }
        let threshold = Self::clearing_threshold(&economy, &eps);
        Ok(AuctionState {
            prices: PriceSystem::uniform(m, l, S::one()),
            exponents: vec![vec![0; l]; m],
            ledger: Ledger::new(),
            surplus,
            touched: BTreeMap::new(),
            tick: 0,
            pending: BTreeSet::new(),
            counters: Counters::default(),
            round: 0,
            p_max: S::one(),
            price_log: Vec::new(),
            tau_log: Vec::new(),
            rounds: Vec::new(),
            tau_baseline: S::zero(),
            violations: Vec::new(),
            checks: 0,
            events: Vec::new(),
            warnings,
            raise_limit,
            threshold,
            eps,
            factor,
            economy,
            config,
        })
    }

    /// `ε/(1+ε) · min(e_min, ε/(1+ε) · b_min)` over positive entries.
    fn clearing_threshold(economy: &Economy<S>, eps: &S) -> S {
        let shrink = eps.clone() / (S::one() + eps.clone());
        let positive_min = |it: &mut dyn Iterator<Item = &S>| it.filter(|x| **x > S::zero()).cloned().reduce(S::min_of);
        let e_min = positive_min(&mut economy.endowments().iter().flatten());
        let b_min = positive_min(&mut economy.resale_bounds().iter()).map(|b| shrink.clone() * b);
        let zeta = match (e_min, b_min) {
            (Some(e), Some(b)) => S::min_of(e, b),
            (Some(e), None) => e,
            (None, Some(b)) => b,
            (None, None) => S::one(),
        };
        shrink * zeta
    }

    pub fn economy(&self) -> &Economy<S> {
        &self.economy
    }

    pub fn prices(&self) -> &PriceSystem<S> {
        &self.prices
    }

    pub fn price(&self, j: AgentId, k: GoodId) -> &S {
        self.prices.get(j, k)
    }

    pub fn exponent(&self, j: AgentId, k: GoodId) -> u32 {
        self.exponents[j][k]
    }

    pub fn ledger(&self) -> &Ledger<S> {
        &self.ledger
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn threshold(&self) -> &S {
        &self.threshold
    }

    /// Incrementally tracked surplus `s_i`.
    pub fn surplus(&self, i: AgentId) -> &S {
        &self.surplus[i]
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub(super) fn booked(&self, j: AgentId, k: GoodId, b: Bucket) -> S {
        match b {
            Bucket::New => self.prices.get(j, k).clone(),
            Bucket::Old => self.prices.get(j, k).clone() / self.factor.clone(),
        }
    }

    /// Resale stock `Σ_h y^{jh}_k`.
    pub fn stock(&self, j: AgentId, k: GoodId) -> S {
        self.ledger
            .held_by(j)
            .into_iter()
            .filter(|&(_, g)| g == k)
            .filter_map(|(h, g)| self.ledger.get(j, h, g).map(|x| x.of_use(Use::Resale)))
            .fold(S::zero(), |a, y| a + y)
    }

    pub fn supply(&self, j: AgentId, k: GoodId) -> S {
        self.economy.endowment(j, k).clone() + self.stock(j, k)
    }

    pub fn assigned(&self, j: AgentId, k: GoodId) -> S {
        self.ledger.assigned(j, k)
    }

    pub fn idle(&self, j: AgentId, k: GoodId) -> S {
        self.supply(j, k) - self.assigned(j, k)
    }

    /// `β_i` at current prices.
    pub fn budget(&self, i: AgentId) -> S {
        let mut beta = S::zero();
        for k in 0..self.economy.goods() {
            beta = beta + self.prices.get(i, k).clone() * self.economy.endowment(i, k).clone();
        }
        for (h, k) in self.ledger.held_by(i) {
            let y = self.ledger.get(i, h, k).map(|x| x.of_use(Use::Resale)).unwrap_or_else(S::zero);
            if !y.is_zero() {
                beta = beta + (self.prices.get(i, k).clone() - self.prices.get(h, k).clone()) * y;
            }
        }
        beta
    }

    /// `Σ_j p^j·x^{ij}` at current prices.
    pub fn spend(&self, i: AgentId) -> S {
        self.ledger.held_by(i).into_iter().fold(S::zero(), |acc, (h, k)| {
            let x = self.ledger.get(i, h, k).map(|x| x.of_use(Use::Consumption)).unwrap_or_else(S::zero);
            acc + self.prices.get(h, k).clone() * x
        })
    }

    /// Budget not yet committed to consumption, at current prices.
    pub fn free_surplus(&self, i: AgentId) -> S {
        self.budget(i) - self.spend(i)
    }

    /// `Σ_j p̄^j·x^{ij}` at booked prices.
    pub fn booked_spend(&self, i: AgentId) -> S {
        let mut total = S::zero();
        for (h, k) in self.ledger.held_by(i) {
            let hold = self.ledger.get(i, h, k).expect("indexed holding exists");
            for b in [Bucket::Old, Bucket::New] {
                total = total + self.booked(h, k, b) * hold.get(Use::Consumption, b).clone();
            }
        }
        total
    }

    fn surplus_slack(&self, i: AgentId) -> S {
        S::tol_for(&self.surplus[i], &S::max_of(self.budget(i), self.booked_spend(i)))
    }

    /// Money the agent can still bid: `s_i`, capped by what its budget
    /// leaves after booked spend.
    pub fn spendable(&self, i: AgentId) -> S {
        -self.deficit(i)
    }

    /// Spendable surplus is positive beyond tolerance (relative to the budget).
    pub fn has_surplus(&self, i: AgentId) -> bool {
        self.spendable(i) > self.surplus_slack(i)
    }

    /// How far the agent is over: the larger of `-s_i` and booked spend
    /// beyond the current budget.
    fn deficit(&self, i: AgentId) -> S {
        S::max_of(-self.surplus[i].clone(), self.booked_spend(i) - self.budget(i))
    }

    /// The agent is over budget beyond tolerance.
    pub fn in_deficit(&self, i: AgentId) -> bool {
        self.deficit(i) > self.surplus_slack(i)
    }

    /// `s_i` recomputed from the ledger at booked prices.
    pub fn closed_form_surplus(&self, i: AgentId) -> S {
        let mut s = S::zero();
        for k in 0..self.economy.goods() {
            s = s + self.prices.get(i, k).clone() * self.economy.endowment(i, k).clone();
        }
        for (h, k) in self.ledger.held_by(i) {
            let hold = self.ledger.get(i, h, k).expect("indexed holding exists");
            for b in [Bucket::Old, Bucket::New] {
                let bp = self.booked(h, k, b);
                s = s + (self.prices.get(i, k).clone() - bp.clone()) * hold.get(Use::Resale, b).clone();
                s = s - bp * hold.get(Use::Consumption, b).clone();
            }
        }
        s
    }

    /// Resale usage at booked prices (credit) or in units (commodity).
    pub fn resale_usage(&self, i: AgentId) -> S {
        let mut used = S::zero();
        for (h, k) in self.ledger.held_by(i) {
            let hold = self.ledger.get(i, h, k).expect("indexed holding exists");
            for b in [Bucket::Old, Bucket::New] {
                let y = hold.get(Use::Resale, b).clone();
                used = used
                    + match self.economy.resale_kind() {
                        ResaleKind::Credit => self.booked(h, k, b) * y,
                        ResaleKind::Commodity => y,
                    };
            }
        }
        used
    }

    /// `τ = Σ p̄·(old holdings)`: value booked one step below current prices.
    pub fn tau(&self) -> S {
        self.ledger.entries().fold(S::zero(), |acc, (_, j, k, h)| acc + self.booked(j, k, Bucket::Old) * h.old())
    }

    pub fn total_free_surplus(&self) -> S {
        (0..self.economy.agents()).fold(S::zero(), |a, i| a + self.free_surplus(i))
    }

    /// Quotes current prices for a batch of requested quantities.
    pub fn quote(&self, items: &[((AgentId, GoodId), S)]) -> Requests<S> {
        items.iter().map(|&((j, k), ref q)| ((j, k), Request { quantity: q.clone(), quoted: self.prices.get(j, k).clone() })).collect()
    }

    fn fresh(&self, j: AgentId, k: GoodId, quoted: &S) -> bool {
        self.prices.get(j, k) == quoted
    }

    fn event(&mut self, kind: &'static str, agent: AgentId, counterparty: Option<AgentId>, good: Option<GoodId>, amount: &S, price: &S) {
        if !self.config.record_trace {
            return;
        }
        let tau = self.tau();
        self.events.push(TraceEvent {
            event_seq: self.events.len() as u64,
            round: self.round,
            event_type: kind,
            agent,
            counterparty,
            good,
            amount: amount.to_string(),
            price: price.to_string(),
            surplus_after: self.surplus[agent].to_string(),
            tau: tau.to_string(),
        });
    }

    fn add_holding(&mut self, buyer: AgentId, seller: AgentId, k: GoodId, u: Use, amount: S) {
        if amount.is_zero() {
            return;
        }
        let p = self.prices.get(seller, k).clone();
        let delta = match u {
            Use::Consumption => -(p * amount.clone()),
            Use::Resale => (self.prices.get(buyer, k).clone() - p) * amount.clone(),
        };
        self.surplus[buyer] = self.surplus[buyer].clone() + delta;
        self.ledger.add(buyer, seller, k, u, Bucket::New, amount);
        self.tick += 1;
        self.touched.insert((buyer, seller, k), self.tick);
    }

    fn remove_holding(&mut self, buyer: AgentId, seller: AgentId, k: GoodId, u: Use, b: Bucket, amount: &S) -> S {
        let taken = self.ledger.remove(buyer, seller, k, u, b, amount);
        if taken.is_zero() {
            return taken;
        }
        let bp = self.booked(seller, k, b);
        let delta = match u {
            Use::Consumption => bp * taken.clone(),
            Use::Resale => -((self.prices.get(buyer, k).clone() - bp) * taken.clone()),
        };
        self.surplus[buyer] = self.surplus[buyer].clone() + delta;
        if u == Use::Resale {
            self.pending.insert((buyer, k));
        }
        self.pending.insert((seller, k));
        taken
    }

    /// Hands out idle supply at current prices.
    pub fn assign(&mut self, buyer: AgentId, u: Use, requests: &Requests<S>) -> Fills<S> {
        self.counters.assign_calls += 1;
        let mut fills = Fills::new();
        for (&(j, k), r) in requests {
            if !self.fresh(j, k, &r.quoted) {
                continue;
            }
            let avail = self.idle(j, k);
            if !avail.is_positive_beyond_tol() {
                continue;
            }
            let mut take = S::min_of(r.quantity.clone(), avail);
            if u == Use::Consumption {
                take = S::min_of(take, self.affordable(buyer, self.prices.get(j, k).clone()));
            }
            if take > S::zero() {
                let price = self.prices.get(j, k).clone();
                self.add_holding(buyer, j, k, u, take.clone());
                self.event("assign", buyer, Some(j), Some(k), &take, &price);
                fills.insert((j, k), take);
            }
        }
        fills
    }

    /// Units the buyer's surplus pays for at `unit_cost` each.
    fn affordable(&self, buyer: AgentId, unit_cost: S) -> S {
        let s = self.spendable(buyer).clamp_nonneg();
        if unit_cost <= S::zero() {
            return s;
        }
        s / unit_cost
    }

    /// Takes units booked at the previous price step, from holders in
    /// ascending order (consumption before resale), and rebooks them to the
    /// buyer at the current price. The buyer's own old units cost it only
    /// the price step.
    pub fn outbid(&mut self, buyer: AgentId, u: Use, requests: &Requests<S>) -> Fills<S> {
        self.counters.outbid_calls += 1;
        let mut fills = Fills::new();
        for (&(j, k), r) in requests {
            if !self.fresh(j, k, &r.quoted) {
                continue;
            }
            let price = self.prices.get(j, k).clone();
            let bp = self.booked(j, k, Bucket::Old);
            let mut need = r.quantity.clone();
            let mut got = S::zero();
            for (victim, hold) in self.ledger.holders(j, k) {
                for vu in [Use::Consumption, Use::Resale] {
                    let old = hold.get(vu, Bucket::Old);
                    if !need.is_positive_beyond_tol() || old.is_zero() {
                        continue;
                    }
                    // Rebooking its own units leaves the buyer's holding unchanged,
                    // so only the purse limits it.
                    let rebook = victim == buyer && vu == u && u == Use::Consumption;
                    let mut want = if rebook { old.clone() } else { S::min_of(need.clone(), old.clone()) };
                    if u == Use::Consumption {
                        let unit = if rebook { price.clone() - bp.clone() } else { price.clone() };
                        want = S::min_of(want, self.affordable(buyer, unit));
                    }
                    if want <= S::zero() {
                        continue;
                    }
                    let taken = self.remove_holding(victim, j, k, vu, Bucket::Old, &want);
                    self.event("outbid", victim, Some(buyer), Some(k), &taken, &bp);
                    self.add_holding(buyer, j, k, u, taken.clone());
                    if !rebook {
                        need = need - taken.clone();
                    }
                    got = got + taken;
                }
            }
            if got > S::zero() {
                self.event("outbid_fill", buyer, Some(j), Some(k), &got, &price);
                fills.insert((j, k), got);
            }
        }
        fills
    }

    /// Asks each requested seller with resale capacity to procure the goods
    /// from its own neighbours; raises the seller's price on any shortfall.
    pub fn reschedule_resale(&mut self, buyer: AgentId, u: Use, requests: &Requests<S>) -> Result<Fills<S>, AuctionError> {
        let mut chain = vec![buyer];
        let mut requests = requests.clone();
        if u == Use::Consumption {
            let cost = requests.iter().fold(S::zero(), |a, (&(j, k), r)| a + r.quantity.clone() * self.prices.get(j, k).clone());
            let s = self.spendable(buyer).clamp_nonneg();
            if cost > s {
                let scale = s / cost;
                for r in requests.values_mut() {
                    r.quantity = r.quantity.clone() * scale.clone();
                }
            }
        }
        self.reschedule_inner(buyer, u, &requests, &mut chain)
    }

    fn reschedule_inner(&mut self, buyer: AgentId, u: Use, requests: &Requests<S>, chain: &mut Vec<AgentId>) -> Result<Fills<S>, AuctionError> {
        self.counters.reschedule_calls += 1;
        let mut by_seller: BTreeMap<AgentId, Vec<(GoodId, Request<S>)>> = BTreeMap::new();
        for (&(j, k), r) in requests {
            by_seller.entry(j).or_default().push((k, r.clone()));
        }
        let mut fills = Fills::new();
        for (j, items) in by_seller {
            let items: Vec<_> = items.into_iter().filter(|(k, r)| self.fresh(j, *k, &r.quoted)).collect();
            if items.is_empty() {
                continue;
            }
            if j == buyer || self.economy.resale_bound(j).is_zero() {
                for (k, _) in &items {
                    self.raise_price(j, *k)?;
                }
                continue;
            }
            if chain.contains(&j) {
                continue;
            }
            self.counters.oracle_calls_resale += 1;
            let room = (self.economy.resale_bound(j).clone() - self.resale_usage(j)).clamp_nonneg();
            let mut wanted = vec![S::zero(); self.economy.goods()];
            for (k, r) in &items {
                wanted[*k] = r.quantity.clone();
            }
            let plan = resale_demand(&self.economy, j, &self.prices, &room, Some(&wanted))?;
            let mut sources = Requests::new();
            for (k, r) in &items {
                let mut left = r.quantity.clone();
                for (&(h, g), q) in &plan {
                    if g != *k || !left.is_positive_beyond_tol() {
                        continue;
                    }
                    let take = S::min_of(q.clone(), left.clone());
                    left = left - take.clone();
                    sources.insert((h, g), Request { quantity: take, quoted: self.prices.get(h, g).clone() });
                }
            }
            let mut procured = vec![S::zero(); self.economy.goods()];
            if !sources.is_empty() {
                chain.push(j);
                let mut remaining = sources;
                for step in 0..3 {
                    let got = match step {
                        0 => self.assign(j, Use::Resale, &remaining),
                        1 => self.outbid(j, Use::Resale, &remaining),
                        _ => self.reschedule_inner(j, Use::Resale, &remaining, chain)?,
                    };
                    for (&(h, g), q) in &got {
                        procured[g] = procured[g].clone() + q.clone();
                        if let Some(r) = remaining.get_mut(&(h, g)) {
                            r.quantity = r.quantity.clone() - q.clone();
                        }
                    }
                    remaining.retain(|_, r| r.quantity.is_positive_beyond_tol());
                    if remaining.is_empty() {
                        break;
                    }
                }
                chain.pop();
            }
            for (k, r) in items {
                let got = S::min_of(procured[k].clone(), r.quantity.clone());
                if !self.fresh(j, k, &r.quoted) {
                    continue;
                }
                if got > S::zero() {
                    let price = self.prices.get(j, k).clone();
                    self.add_holding(buyer, j, k, u, got.clone());
                    self.event("reschedule_fill", buyer, Some(j), Some(k), &got, &price);
                    fills.insert((j, k), got.clone());
                }
                if got.definitely_lt(&r.quantity) {
                    self.raise_price(j, k)?;
                }
            }
        }
        Ok(fills)
    }

    /// Raises `p^j_k` by one step unless someone still holds `(j, k)` at
    /// the previous step. Returns whether the price moved.
    pub fn raise_price(&mut self, j: AgentId, k: GoodId) -> Result<bool, AuctionError> {
        if self.ledger.has_old(j, k) {
            self.counters.skipped_raises += 1;
            return Ok(false);
        }
        if self.config.instrumentation != Instrumentation::Off {
            let tau = self.tau();
            if tau.definitely_gt(&self.tau_baseline) {
                self.violations.push(format!("tau rose from {} to {} between raises", self.tau_baseline, tau));
            }
        }
        let p_old = self.prices.get(j, k).clone();
        let gain = self.eps.clone() * p_old.clone() * self.supply(j, k);
        self.surplus[j] = self.surplus[j].clone() + gain;
        self.ledger.age(j, k);
        let p_new = p_old * self.factor.clone();
        self.prices.set(j, k, p_new.clone());
        self.exponents[j][k] += 1;
        self.counters.raise_price_calls += 1;
        if p_new > self.p_max {
            self.p_max = p_new.clone();
        }
        self.price_log.push(PricePoint { round: self.round, agent: j, good: k, price: p_new.to_string() });
        let tau = self.tau();
        self.tau_log.push((self.counters.raise_price_calls, tau.clone()));
        self.tau_baseline = tau;
        self.event("raise_price", j, None, Some(k), &S::zero(), &p_new);
        if let Some(limit) = self.raise_limit {
            if self.counters.raise_price_calls > limit {
                return Err(AuctionError::RaiseLimit { raises: self.counters.raise_price_calls, limit });
            }
        }
        if let Some(cap) = &self.config.price_cap {
            if p_new > *cap {
                return Err(AuctionError::PriceCap { agent: j, good: k, price: format!("{:.6e}", Scalar::to_f64(&p_new)) });
            }
        }
        let resellers: Vec<AgentId> = self.economy.nbrs(j).iter().copied().filter(|&a| self.economy.resale_bound(a) > &S::zero()).collect();
        for a in resellers {
            self.counters.oracle_calls_resale += 1;
            self.revalidate_resale(a)?;
        }
        Ok(true)
    }

    /// Drops resale holdings that are no longer among the most profitable
    /// even with the source price relaxed by one step, or that no longer
    /// make a profit at all.
    fn revalidate_resale(&mut self, a: AgentId) -> Result<(), AuctionError> {
        let kind = self.economy.resale_kind();
        let best = resale_argmax(&self.economy, a, &self.prices, kind)?.map(|(m, _)| m).unwrap_or_else(|| resale_neutral(kind));
        let neutral = resale_neutral::<S>(kind);
        for (h, g) in self.ledger.held_by(a) {
            let Some(hold) = self.ledger.get(a, h, g).cloned() else { continue };
            if hold.of_use(Use::Resale).is_zero() {
                continue;
            }
            let own = self.prices.get(a, g).clone();
            let src = self.prices.get(h, g).clone();
            let relaxed = resale_metric(kind, &own, &(src.clone() / self.factor.clone()));
            let current = resale_metric(kind, &own, &src);
            let keep = relaxed.map_or(false, |m| m.approx_ge(&best)) && current.map_or(false, |m| m.definitely_gt(&neutral));
            if keep {
                continue;
            }
            for b in [Bucket::Old, Bucket::New] {
                let amt = hold.get(Use::Resale, b).clone();
                let taken = self.remove_holding(a, h, g, Use::Resale, b, &amt);
                if !taken.is_zero() {
                    self.event("unwind_resale", a, Some(h), Some(g), &taken, &src);
                }
            }
        }
        Ok(())
    }

    /// Restores local feasibility after holdings moved: strips buyers of
    /// over-sold goods (consumption first, then resale, propagating
    /// downstream), returns idle resale stock to its sources, and makes
    /// agents whose spending exceeds their budget give back their most
    /// recent purchases.
    pub fn settle(&mut self) -> Result<(), AuctionError> {
        let mut steps = 0u64;
        loop {
            steps += 1;
            if steps > SETTLE_GUARD {
                return Err(AuctionError::Internal("settling did not converge".into()));
            }
            if let Some((j, k)) = self.pending.pop_first() {
                let sup = self.supply(j, k);
                let asg = self.assigned(j, k);
                if asg.definitely_gt(&sup) {
                    self.update_resale(j, k, asg - sup);
                } else if sup.definitely_gt(&asg) {
                    let st = self.stock(j, k);
                    if st > S::zero() {
                        self.release(j, k, S::min_of(sup - asg, st));
                    }
                }
                continue;
            }
            let m = self.economy.agents();
            if let Some(i) = (0..m).find(|&i| self.in_deficit(i)) {
                self.unassign_lifo(i)?;
                continue;
            }
            return Ok(());
        }
    }

    /// Strips `excess` units of `(j, k)` from its holders: consumption
    /// before resale, previous price step before current.
    pub fn update_resale(&mut self, j: AgentId, k: GoodId, excess: S) {
        self.counters.update_resale_calls += 1;
        let mut left = excess;
        for u in [Use::Consumption, Use::Resale] {
            for b in [Bucket::Old, Bucket::New] {
                for (victim, hold) in self.ledger.holders(j, k) {
                    let amt = hold.get(u, b);
                    if !left.is_positive_beyond_tol() || amt.is_zero() {
                        continue;
                    }
                    let want = S::min_of(left.clone(), amt.clone());
                    let taken = self.remove_holding(victim, j, k, u, b, &want);
                    let bp = self.booked(j, k, b);
                    self.event("update_resale", victim, Some(j), Some(k), &taken, &bp);
                    left = left - taken;
                }
            }
        }
    }

    fn release(&mut self, j: AgentId, k: GoodId, amount: S) {
        let mut left = amount;
        for (h, g) in self.ledger.held_by(j) {
            if g != k {
                continue;
            }
            for b in [Bucket::New, Bucket::Old] {
                let amt = self.ledger.amount(j, h, g, Use::Resale, b);
                if !left.is_positive_beyond_tol() || amt.is_zero() {
                    continue;
                }
                let want = S::min_of(left.clone(), amt);
                let taken = self.remove_holding(j, h, k, Use::Resale, b, &want);
                let bp = self.booked(h, k, b);
                self.event("release_resale", j, Some(h), Some(k), &taken, &bp);
                left = left - taken;
            }
        }
    }

    /// Returns the agent's most recent consumption purchases, refunded at
    /// their booked price, until its surplus is nonnegative again.
    fn unassign_lifo(&mut self, i: AgentId) -> Result<(), AuctionError> {
        let mut held: Vec<(u64, AgentId, GoodId)> = self
            .ledger
            .held_by(i)
            .into_iter()
            .filter(|&(j, k)| self.ledger.get(i, j, k).is_some_and(|h| !h.of_use(Use::Consumption).is_zero()))
            .map(|(j, k)| (self.touched.get(&(i, j, k)).copied().unwrap_or(0), j, k))
            .collect();
        held.sort_by(|a, b| b.cmp(a));
        for (_, j, k) in held {
            for b in [Bucket::New, Bucket::Old] {
                if !self.in_deficit(i) {
                    return Ok(());
                }
                let amt = self.ledger.amount(i, j, k, Use::Consumption, b);
                if amt.is_zero() {
                    continue;
                }
                let bp = self.booked(j, k, b);
                let want = S::min_of(self.deficit(i) / bp.clone(), amt);
                let taken = self.remove_holding(i, j, k, Use::Consumption, b, &want);
                self.event("unassign", i, Some(j), Some(k), &taken, &bp);
            }
        }
        if self.in_deficit(i) {
            // Float drift from large flows that have since been unwound.
            self.surplus[i] = self.closed_form_surplus(i);
        }
        if self.in_deficit(i) {
            return Err(AuctionError::Internal(format!("agent {i} is short {} with nothing left to return", self.deficit(i))));
        }
        Ok(())
    }

    /// One bidding turn of agent `i`: bids its surplus on the goods its
    /// demand oracle asks for beyond what it holds. Returns whether any
    /// bid was placed.
    pub fn turn(&mut self, i: AgentId) -> Result<bool, AuctionError> {
        self.counters.turns += 1;
        if !self.has_surplus(i) {
            return Ok(false);
        }
        self.counters.oracle_calls_demand += 1;
        let (_, argmax) = consumption_argmax(&self.economy, i, &self.prices)?;
        let optimal: BTreeSet<_> = argmax.iter().copied().collect();
        let mut pins = Vec::new();
        for (j, k) in self.ledger.held_by(i) {
            let x = self.ledger.get(i, j, k).map(|h| h.of_use(Use::Consumption)).unwrap_or_else(S::zero);
            if !x.is_zero() && optimal.contains(&(j, k)) {
                pins.push(((j, k), x));
            }
        }
        pins.sort_by_key(|&((j, k), _)| (k, j));
        let budget = self.budget(i);
        let plan = extend_consumption(&self.economy, i, &self.prices, &budget, &pins)?;
        let mut wanted = Vec::new();
        for ((j, k), q) in plan {
            let have = pins.iter().find(|(p, _)| *p == (j, k)).map(|(_, x)| x.clone()).unwrap_or_else(S::zero);
            let extra = q - have;
            if extra.is_positive_beyond_tol() {
                wanted.push(((j, k), extra));
            }
        }
        let requests = self.quote(&wanted);
        for ((j, k), r) in &requests {
            let (j, k, q, p) = (*j, *k, r.quantity.clone(), r.quoted.clone());
            self.event("demand_query", i, Some(j), Some(k), &q, &p);
        }
        let mut filled = !self.assign(i, Use::Consumption, &requests).is_empty() || !self.outbid(i, Use::Consumption, &requests).is_empty();
        if !filled {
            // Other optimal sources may still have idle or old units.
            let open: Vec<_> = argmax
                .iter()
                .map(|&(j, k)| ((j, k), self.idle(j, k).clamp_nonneg() + self.ledger.holders(j, k).iter().fold(S::zero(), |a, (_, h)| a + h.old())))
                .filter(|(_, q)| q.is_positive_beyond_tol())
                .collect();
            if !open.is_empty() {
                let alt = self.quote(&open);
                filled = !self.assign(i, Use::Consumption, &alt).is_empty() || !self.outbid(i, Use::Consumption, &alt).is_empty();
            }
        }
        if !filled {
            if requests.is_empty() {
                return Ok(false);
            }
            self.reschedule_resale(i, Use::Consumption, &requests)?;
        }
        self.settle()?;
        self.event("turn_end", i, None, None, &S::zero(), &S::zero());
        Ok(true)
    }

    /// Every supply is fully assigned.
    pub fn clears_exactly(&self) -> bool {
        let (m, l) = (self.economy.agents(), self.economy.goods());
        (0..m).all(|j| (0..l).all(|k| self.assigned(j, k).approx_ge(&self.supply(j, k))))
    }

    /// Every agent's booked spend is at least `β_i/(1+ε)`.
    pub fn budgets_settled(&self) -> bool {
        (0..self.economy.agents()).all(|i| (self.factor.clone() * self.booked_spend(i)).approx_ge(&self.budget(i)))
    }

    /// Budgets are settled and either every market clears exactly or the
    /// total surplus is below the threshold.
    pub fn terminated(&self) -> bool {
        self.budgets_settled() && (self.clears_exactly() || self.total_surplus().approx_le(&self.threshold))
    }

    pub fn total_surplus(&self) -> S {
        self.surplus.iter().cloned().fold(S::zero(), |a, s| a + s)
    }

    /// Makes agents whose purchases cost more than their budget at current
    /// prices return their most recent ones. Returns whether anything moved.
    fn enforce_budgets(&mut self) -> Result<bool, AuctionError> {
        let mut moved = false;
        for i in 0..self.economy.agents() {
            let mut held: Vec<(u64, AgentId, GoodId)> = self
                .ledger
                .held_by(i)
                .into_iter()
                .filter(|&(j, k)| self.ledger.get(i, j, k).is_some_and(|h| !h.of_use(Use::Consumption).is_zero()))
                .map(|(j, k)| (self.touched.get(&(i, j, k)).copied().unwrap_or(0), j, k))
                .collect();
            held.sort_by(|a, b| b.cmp(a));
            for (_, j, k) in held {
                for b in [Bucket::Old, Bucket::New] {
                    let (spend, beta) = (self.spend(i), self.budget(i));
                    if !spend.definitely_gt(&beta) {
                        break;
                    }
                    let amt = self.ledger.amount(i, j, k, Use::Consumption, b);
                    if amt.is_zero() {
                        continue;
                    }
                    let p = self.prices.get(j, k).clone();
                    let want = S::min_of((spend - beta) / p.clone(), amt);
                    let taken = self.remove_holding(i, j, k, Use::Consumption, b, &want);
                    self.event("unassign", i, Some(j), Some(k), &taken, &p);
                    moved = true;
                }
            }
        }
        self.settle()?;
        Ok(moved)
    }

    fn record_round(&mut self) {
        let m = self.economy.agents();
        let total_surplus = self.surplus.iter().cloned().fold(S::zero(), |a, s| a + s);
        let total_free = (0..m).fold(S::zero(), |a, i| a + self.free_surplus(i));
        self.rounds.push(RoundRecord {
            round: self.round,
            raise_price_calls: self.counters.raise_price_calls,
            tau: self.tau(),
            total_surplus,
            total_free_surplus: total_free,
        });
    }

    fn maybe_audit(&mut self) {
        let due = match self.config.instrumentation {
            Instrumentation::Off => false,
            Instrumentation::EveryTurn => true,
            Instrumentation::Sampled(n) => n > 0 && self.counters.turns % n == 0,
        };
        if due {
            self.audit();
        }
    }

    pub fn run(mut self) -> Result<RunResult<S>, AuctionError> {
        let start = Instant::now();
        self.drive()?;
        Ok(self.finish(start))
    }

    /// Runs the auction in place until it terminates or a guard fires.
    /// Statistics gathered so far stay readable either way.
    pub fn drive(&mut self) -> Result<(), AuctionError> {
        let order: Vec<AgentId> = self.config.schedule.clone().unwrap_or_else(|| (0..self.economy.agents()).collect());
        self.maybe_audit();
        loop {
            let mut acted = false;
            for &i in &order {
                loop {
                    if self.terminated() {
                        self.record_round();
                        return Ok(());
                    }
                    if !self.turn(i)? {
                        break;
                    }
                    acted = true;
                    if self.counters.turns > self.config.max_turns {
                        return Err(AuctionError::TurnLimit(self.counters.turns));
                    }
                    self.maybe_audit();
                }
            }
            self.record_round();
            self.round += 1;
            self.counters.rounds_completed += 1;
            if !acted && !self.enforce_budgets()? {
                return Err(AuctionError::Stalled);
            }
        }
    }

    pub fn p_max(&self) -> &S {
        &self.p_max
    }

    /// Current holdings as a trade plan.
    pub fn plan(&self) -> TradePlan<S> {
        let mut plan = TradePlan::new();
        for (i, j, k, h) in self.ledger.entries() {
            plan.add_consumption(i, j, k, h.of_use(Use::Consumption));
            plan.add_resale(i, j, k, h.of_use(Use::Resale));
        }
        plan
    }

    /// The plan handed out at termination: units still booked at the old
    /// price are scaled down until each buyer's spend at current prices
    /// fits its budget. The scale never drops below `1/(1+ε)`.
    pub fn settled_plan(&self) -> TradePlan<S> {
        let m = self.economy.agents();
        let mut scale = vec![S::one(); m];
        for (i, c) in scale.iter_mut().enumerate() {
            let (mut fresh, mut old) = (S::zero(), S::zero());
            for (h, k) in self.ledger.held_by(i) {
                let hold = self.ledger.get(i, h, k).expect("indexed holding exists");
                let p = self.prices.get(h, k).clone();
                fresh = fresh + p.clone() * hold.get(Use::Consumption, Bucket::New).clone();
                old = old + p * hold.get(Use::Consumption, Bucket::Old).clone();
            }
            let beta = self.budget(i);
            if (fresh.clone() + old.clone()).definitely_gt(&beta) && old > S::zero() {
                let fit = (beta - fresh) / old;
                *c = S::max_of(S::min_of(fit, S::one()), S::one() / self.factor.clone());
            }
        }
        let mut plan = TradePlan::new();
        for (i, j, k, h) in self.ledger.entries() {
            let x = h.get(Use::Consumption, Bucket::New).clone() + h.get(Use::Consumption, Bucket::Old).clone() * scale[i].clone();
            plan.add_consumption(i, j, k, x);
            plan.add_resale(i, j, k, h.of_use(Use::Resale));
        }
        plan
    }

    fn finish(mut self, start: Instant) -> RunResult<S> {
        if self.config.instrumentation != Instrumentation::Off {
            self.audit();
        }
        let m = self.economy.agents();
        let free: Vec<S> = (0..m).map(|i| self.free_surplus(i)).collect();
        let termination = if self.clears_exactly() { TerminationReason::ExactLocalClearing } else { TerminationReason::SurplusThreshold };
        let surplus = (0..m).map(|i| self.closed_form_surplus(i)).collect();
        RunResult {
            prices: self.prices.clone(),
            plan: self.settled_plan(),
            termination,
            surplus,
            free_surplus: free,
            warnings: std::mem::take(&mut self.warnings),
            trace: std::mem::take(&mut self.events),
            stats: RunStats {
                counters: self.counters.clone(),
                p_max: self.p_max.clone(),
                price_trajectory: std::mem::take(&mut self.price_log),
                tau_trajectory: std::mem::take(&mut self.tau_log),
                rounds: std::mem::take(&mut self.rounds),
                invariant_checks: self.checks,
                invariant_violations: std::mem::take(&mut self.violations),
                threshold: self.threshold.clone(),
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            },
        }
    }
}
