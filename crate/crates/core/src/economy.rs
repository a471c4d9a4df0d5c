//! Economies on a trade graph, price systems and trade plans.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub type AgentId = usize;
pub type GoodId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResaleKind {
    /// Agent `i` may spend at most `b_i` on resale purchases.
    #[default]
    Credit,
    /// Agent `i` may hold at most `b_i` units of resale stock in total.
    Commodity,
}

#[derive(Debug, Error, PartialEq)]
pub enum EconomyError {
    #[error("economy needs at least one agent and one good (got {agents} agents, {goods} goods)")]
    Empty { agents: usize, goods: usize },
    #[error("{field}: expected length {expected}, got {got}")]
    Shape { field: String, expected: usize, got: usize },
    #[error("{field}: value {value} is negative")]
    Negative { field: String, value: String },
    #[error("edges: endpoint {endpoint} out of range for {agents} agents")]
    EdgeOutOfRange { endpoint: usize, agents: usize },
    #[error("utilities[{agent}]: agent has no strictly positive utility coefficient")]
    Satiated { agent: AgentId },
    #[error("agent {agent} out of range ({agents} agents)")]
    AgentOutOfRange { agent: AgentId, agents: usize },
    #[error("good {good} out of range ({goods} goods)")]
    GoodOutOfRange { good: GoodId, goods: usize },
    #[error("trade ({i}, {j}, good {k}) is not supported by an edge")]
    NotAnEdge { i: AgentId, j: AgentId, k: GoodId },
    #[error("resale entry ({i}, {i}, good {k}) must be zero: agents cannot resell to themselves")]
    SelfResale { i: AgentId, k: GoodId },
    #[error("prices: {0}")]
    Prices(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Economy<S> {
    agents: usize,
    goods: usize,
    edges: BTreeSet<(AgentId, AgentId)>,
    neighborhoods: Vec<Vec<AgentId>>,
    endowments: Vec<Vec<S>>,
    utilities: Vec<Vec<S>>,
    resale_bounds: Vec<S>,
    resale_kind: ResaleKind,
}

fn check_rows<S: Scalar>(field: &str, rows: &[Vec<S>], m: usize, l: usize) -> Result<(), EconomyError> {
    if rows.len() != m {
        return Err(EconomyError::Shape { field: field.into(), expected: m, got: rows.len() });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != l {
            return Err(EconomyError::Shape { field: format!("{field}[{i}]"), expected: l, got: row.len() });
        }
        for (k, v) in row.iter().enumerate() {
            if *v < S::zero() {
                return Err(EconomyError::Negative { field: format!("{field}[{i}][{k}]"), value: v.to_string() });
            }
        }
    }
    Ok(())
}

impl<S: Scalar> Economy<S> {
    /// Builds and validates an economy. Self-loops and duplicate or reversed
    /// edges in `edges` are accepted and normalised away.
    pub fn new(
        agents: usize,
        goods: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
        endowments: Vec<Vec<S>>,
        utilities: Vec<Vec<S>>,
        resale_bounds: Vec<S>,
        resale_kind: ResaleKind,
    ) -> Result<Self, EconomyError> {
        if agents == 0 || goods == 0 {
            return Err(EconomyError::Empty { agents, goods });
        }
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            for endpoint in [a, b] {
                if endpoint >= agents {
                    return Err(EconomyError::EdgeOutOfRange { endpoint, agents });
                }
            }
            if a != b {
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
        check_rows("endowments", &endowments, agents, goods)?;
        check_rows("utilities", &utilities, agents, goods)?;
        if resale_bounds.len() != agents {
            return Err(EconomyError::Shape { field: "resale_bounds".into(), expected: agents, got: resale_bounds.len() });
        }
        for (i, b) in resale_bounds.iter().enumerate() {
            if *b < S::zero() {
                return Err(EconomyError::Negative { field: format!("resale_bounds[{i}]"), value: b.to_string() });
            }
        }
        for (i, row) in utilities.iter().enumerate() {
            if !row.iter().any(|u| *u > S::zero()) {
                return Err(EconomyError::Satiated { agent: i });
            }
        }
        let mut neighborhoods: Vec<Vec<AgentId>> = (0..agents).map(|i| vec![i]).collect();
        for &(a, b) in &edge_set {
            neighborhoods[a].push(b);
            neighborhoods[b].push(a);
        }
        for n in &mut neighborhoods {
            n.sort_unstable();
        }
        Ok(Economy { agents, goods, edges: edge_set, neighborhoods, endowments, utilities, resale_bounds, resale_kind })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn resale_kind(&self) -> ResaleKind {
        self.resale_kind
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    /// Closed neighbourhood of `i` (includes `i`), ascending.
    pub fn neighbors(&self, i: AgentId) -> Result<&[AgentId], EconomyError> {
        self.check_agent(i)?;
        Ok(&self.neighborhoods[i])
    }

    /// Unchecked variant of [`Economy::neighbors`] for internal loops.
    pub(crate) fn nbrs(&self, i: AgentId) -> &[AgentId] {
        &self.neighborhoods[i]
    }

    /// `i ≃ j`: adjacent or equal.
    pub fn is_adjacent(&self, i: AgentId, j: AgentId) -> bool {
        i == j || self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn endowment(&self, i: AgentId, k: GoodId) -> &S {
        &self.endowments[i][k]
    }

    pub fn endowment_row(&self, i: AgentId) -> &[S] {
        &self.endowments[i]
    }

    pub fn utility(&self, i: AgentId, k: GoodId) -> &S {
        &self.utilities[i][k]
    }

    pub fn utility_row(&self, i: AgentId) -> &[S] {
        &self.utilities[i]
    }

    pub fn resale_bound(&self, i: AgentId) -> &S {
        &self.resale_bounds[i]
    }

    pub fn resale_bounds(&self) -> &[S] {
        &self.resale_bounds
    }

    pub fn endowments(&self) -> &[Vec<S>] {
        &self.endowments
    }

    pub fn utilities(&self) -> &[Vec<S>] {
        &self.utilities
    }

    pub fn check_agent(&self, i: AgentId) -> Result<(), EconomyError> {
        if i >= self.agents {
            Err(EconomyError::AgentOutOfRange { agent: i, agents: self.agents })
        } else {
            Ok(())
        }
    }

    pub fn check_good(&self, k: GoodId) -> Result<(), EconomyError> {
        if k >= self.goods {
            Err(EconomyError::GoodOutOfRange { good: k, goods: self.goods })
        } else {
            Ok(())
        }
    }

    pub fn is_complete_graph(&self) -> bool {
        self.edges.len() == self.agents * (self.agents - 1) / 2
    }

    /// Same economy with different resale bounds.
    pub fn with_resale_bounds(&self, bounds: Vec<S>) -> Result<Self, EconomyError> {
        Economy::new(
            self.agents,
            self.goods,
            self.edges.iter().copied(),
            self.endowments.clone(),
            self.utilities.clone(),
            bounds,
            self.resale_kind,
        )
    }

    pub fn with_resale_kind(mut self, kind: ResaleKind) -> Self {
        self.resale_kind = kind;
        self
    }

    /// Converts every coefficient to another scalar type.
    pub fn convert<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Economy<T> {
        let rows = |v: &Vec<Vec<S>>| v.iter().map(|r| r.iter().map(&f).collect()).collect();
        Economy {
            agents: self.agents,
            goods: self.goods,
            edges: self.edges.clone(),
            neighborhoods: self.neighborhoods.clone(),
            endowments: rows(&self.endowments),
            utilities: rows(&self.utilities),
            resale_bounds: self.resale_bounds.iter().map(&f).collect(),
            resale_kind: self.resale_kind,
        }
    }
}

/// Agent-specific prices `p^i_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSystem<S> {
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> PriceSystem<S> {
    pub fn new(rows: Vec<Vec<S>>) -> Self {
        PriceSystem { rows }
    }

    pub fn uniform(agents: usize, goods: usize, value: S) -> Self {
        PriceSystem { rows: vec![vec![value; goods]; agents] }
    }

    pub fn get(&self, i: AgentId, k: GoodId) -> &S {
        &self.rows[i][k]
    }

    pub fn set(&mut self, i: AgentId, k: GoodId, value: S) {
        self.rows[i][k] = value;
    }

    pub fn row(&self, i: AgentId) -> &[S] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn scaled(&self, factor: &S) -> Self {
        PriceSystem { rows: self.rows.iter().map(|r| r.iter().map(|p| p.clone() * factor.clone()).collect()).collect() }
    }

    pub fn max_price(&self) -> S {
        self.rows.iter().flatten().cloned().fold(S::zero(), S::max_of)
    }

    /// Shape check plus non-negativity; `strict` also demands positivity.
    pub fn validate(&self, economy: &Economy<S>, strict: bool) -> Result<(), EconomyError> {
        if self.rows.len() != economy.agents() {
            return Err(EconomyError::Shape { field: "prices".into(), expected: economy.agents(), got: self.rows.len() });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != economy.goods() {
                return Err(EconomyError::Shape { field: format!("prices[{i}]"), expected: economy.goods(), got: row.len() });
            }
            for (k, p) in row.iter().enumerate() {
                if *p < S::zero() || (strict && p.is_zero()) {
                    return Err(EconomyError::Prices(format!("p[{i}][{k}] = {p} is not {}", if strict { "positive" } else { "non-negative" })));
                }
            }
        }
        Ok(())
    }
}

/// Sparse consumption `x^{ij}_k` and resale `y^{ij}_k` tensors keyed by
/// `(buyer i, seller j, good k)`. Zero entries are never stored.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TradePlan<S> {
    consumption: BTreeMap<(AgentId, AgentId, GoodId), S>,
    resale: BTreeMap<(AgentId, AgentId, GoodId), S>,
}

impl<S: Scalar> TradePlan<S> {
    pub fn new() -> Self {
        TradePlan { consumption: BTreeMap::new(), resale: BTreeMap::new() }
    }

    pub fn consumption(&self, i: AgentId, j: AgentId, k: GoodId) -> S {
        self.consumption.get(&(i, j, k)).cloned().unwrap_or_else(S::zero)
    }

    pub fn resale(&self, i: AgentId, j: AgentId, k: GoodId) -> S {
        self.resale.get(&(i, j, k)).cloned().unwrap_or_else(S::zero)
    }

    pub fn consumption_entries(&self) -> impl Iterator<Item = ((AgentId, AgentId, GoodId), &S)> {
        self.consumption.iter().map(|(k, v)| (*k, v))
    }

    pub fn resale_entries(&self) -> impl Iterator<Item = ((AgentId, AgentId, GoodId), &S)> {
        self.resale.iter().map(|(k, v)| (*k, v))
    }

    /// Overwrites an entry without graph checks; see [`TradePlan::validate`].
    pub fn set_consumption(&mut self, i: AgentId, j: AgentId, k: GoodId, amount: S) {
        set_entry(&mut self.consumption, (i, j, k), amount);
    }

    pub fn set_resale(&mut self, i: AgentId, j: AgentId, k: GoodId, amount: S) {
        set_entry(&mut self.resale, (i, j, k), amount);
    }

    pub fn add_consumption(&mut self, i: AgentId, j: AgentId, k: GoodId, amount: S) {
        let cur = self.consumption(i, j, k);
        self.set_consumption(i, j, k, cur + amount);
    }

    pub fn add_resale(&mut self, i: AgentId, j: AgentId, k: GoodId, amount: S) {
        let cur = self.resale(i, j, k);
        self.set_resale(i, j, k, cur + amount);
    }

    pub fn has_resale(&self) -> bool {
        !self.resale.is_empty()
    }

    /// Edge support, range, sign and `y^{ii} = 0` checks.
    pub fn validate(&self, economy: &Economy<S>) -> Result<(), EconomyError> {
        for (tensor, is_resale) in [(&self.consumption, false), (&self.resale, true)] {
            for (&(i, j, k), v) in tensor {
                economy.check_agent(i)?;
                economy.check_agent(j)?;
                economy.check_good(k)?;
                if *v < S::zero() {
                    let name = if is_resale { "resale" } else { "consumption" };
                    return Err(EconomyError::Negative { field: format!("{name}[{i}][{j}][{k}]"), value: v.to_string() });
                }
                if is_resale && i == j {
                    return Err(EconomyError::SelfResale { i, k });
                }
                if !economy.is_adjacent(i, j) {
                    return Err(EconomyError::NotAnEdge { i, j, k });
                }
            }
        }
        Ok(())
    }

    /// `x^i`: agent `i`'s consumption keyed by `(seller, good)`.
    pub fn consumption_of(&self, i: AgentId) -> BTreeMap<(AgentId, GoodId), S> {
        self.consumption.range((i, 0, 0)..(i + 1, 0, 0)).map(|(&(_, j, k), v)| ((j, k), v.clone())).collect()
    }

    /// `y^i`: agent `i`'s resale purchases keyed by `(source, good)`.
    pub fn resale_of(&self, i: AgentId) -> BTreeMap<(AgentId, GoodId), S> {
        self.resale.range((i, 0, 0)..(i + 1, 0, 0)).map(|(&(_, j, k), v)| ((j, k), v.clone())).collect()
    }

    /// Total amount of good `k` bought from `j` by anyone, for consumption
    /// and resale separately.
    pub fn sold_by(&self, j: AgentId, k: GoodId) -> (S, S) {
        let pick = |t: &BTreeMap<(AgentId, AgentId, GoodId), S>| {
            t.iter().filter(|(&(_, s, g), _)| s == j && g == k).fold(S::zero(), |acc, (_, v)| acc + v.clone())
        };
        (pick(&self.consumption), pick(&self.resale))
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> TradePlan<T> {
        TradePlan {
            consumption: self.consumption.iter().map(|(k, v)| (*k, f(v))).collect(),
            resale: self.resale.iter().map(|(k, v)| (*k, f(v))).collect(),
        }
    }
}

fn set_entry<S: Scalar>(map: &mut BTreeMap<(AgentId, AgentId, GoodId), S>, key: (AgentId, AgentId, GoodId), amount: S) {
    if amount.is_zero() {
        map.remove(&key);
    } else {
        map.insert(key, amount);
    }
}

/// `d^i = Σ_j x^{ji}`: consumption the neighbours of `i` buy from `i`.
pub fn demand_vector<S: Scalar>(economy: &Economy<S>, plan: &TradePlan<S>, i: AgentId) -> Vec<S> {
    let mut d = vec![S::zero(); economy.goods()];
    for ((_, j, k), v) in plan.consumption_entries() {
        if j == i {
            d[k] = d[k].clone() + v.clone();
        }
    }
    d
}

/// Everything sold by `i`: consumption demand plus resale purchases from `i`.
pub fn outflow_vector<S: Scalar>(economy: &Economy<S>, plan: &TradePlan<S>, i: AgentId) -> Vec<S> {
    let mut d = demand_vector(economy, plan, i);
    for ((_, j, k), v) in plan.resale_entries() {
        if j == i {
            d[k] = d[k].clone() + v.clone();
        }
    }
    d
}

/// Local supply of `i`: endowment plus resale stock bought by `i`.
pub fn supply_vector<S: Scalar>(economy: &Economy<S>, plan: &TradePlan<S>, i: AgentId) -> Vec<S> {
    let mut s = economy.endowment_row(i).to_vec();
    for ((_, k), v) in plan.resale_of(i) {
        s[k] = s[k].clone() + v;
    }
    s
}

/// `β_i(p, y) = p^i·e^i + Σ_j (p^i - p^j)·y^{ij}`.
pub fn budget_of<S: Scalar>(economy: &Economy<S>, prices: &PriceSystem<S>, plan: &TradePlan<S>, i: AgentId) -> S {
    let mut beta = S::zero();
    for k in 0..economy.goods() {
        beta = beta + prices.get(i, k).clone() * economy.endowment(i, k).clone();
    }
    for ((j, k), y) in plan.resale_of(i) {
        beta = beta + (prices.get(i, k).clone() - prices.get(j, k).clone()) * y;
    }
    beta
}

/// `Σ_j p^j·x^{ij}`.
pub fn spend_of<S: Scalar>(prices: &PriceSystem<S>, plan: &TradePlan<S>, i: AgentId) -> S {
    plan.consumption_of(i).into_iter().fold(S::zero(), |acc, ((j, k), x)| acc + prices.get(j, k).clone() * x)
}

/// `u^i · Σ_j x^{ij}`.
pub fn utility_of<S: Scalar>(economy: &Economy<S>, plan: &TradePlan<S>, i: AgentId) -> S {
    plan.consumption_of(i).into_iter().fold(S::zero(), |acc, ((_, k), x)| acc + economy.utility(i, k).clone() * x)
}
