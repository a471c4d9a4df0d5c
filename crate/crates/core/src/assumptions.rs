//! Checks of the standing assumptions on an economy: non-satiation,
//! resale well-posedness, participation, useful goods and supply-graph
//! reachability.

use std::collections::{BTreeSet, VecDeque};

use petgraph::algo::{ford_fulkerson, tarjan_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::economy::{AgentId, Economy, GoodId, ResaleKind};
use crate::scalar::Scalar;

/// `paths[i][j]`: a trade path joins `i` and `j`, i.e. a path whose
/// interior nodes all have positive resale bound.
pub fn trade_path_reachability<S: Scalar>(economy: &Economy<S>) -> Vec<Vec<bool>> {
    let m = economy.agents();
    let mut out = vec![vec![false; m]; m];
    for (start, row) in out.iter_mut().enumerate() {
        row[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in economy.nbrs(v) {
                if row[w] {
                    continue;
                }
                row[w] = true;
                if economy.resale_bound(w) > &S::zero() {
                    queue.push_back(w);
                }
            }
        }
    }
    out
}

/// Is `i` on some simple trade path between `a` and `b`?
///
/// For an interior `i` this asks for two vertex-disjoint paths from `i` to
/// `a` and to `b` through resale-capable agents, found as a unit-capacity
/// flow of value two on the vertex-split graph.
pub fn on_trade_path<S: Scalar>(economy: &Economy<S>, i: AgentId, a: AgentId, b: AgentId) -> bool {
    if i == a || i == b {
        return true;
    }
    if a == b || economy.resale_bound(i) <= &S::zero() {
        return false;
    }
    let m = economy.agents();
    let usable = |v: AgentId| v == a || v == b || economy.resale_bound(v) > &S::zero();
    // Node v splits into in(v) = 2v and out(v) = 2v + 1; 2m is the sink.
    let mut g: DiGraph<(), u32> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..=2 * m).map(|_| g.add_node(())).collect();
    let sink = nodes[2 * m];
    for v in 0..m {
        if !usable(v) {
            continue;
        }
        let cap = if v == i { 2 } else { 1 };
        g.add_edge(nodes[2 * v], nodes[2 * v + 1], cap);
        for &w in economy.nbrs(v) {
            // Endpoints are not passed through, so they get no outgoing arcs.
            if w != v && usable(w) && v != a && v != b {
                g.add_edge(nodes[2 * v + 1], nodes[2 * w], 1);
            }
        }
    }
    g.add_edge(nodes[2 * a + 1], sink, 1);
    g.add_edge(nodes[2 * b + 1], sink, 1);
    let (flow, _) = ford_fulkerson(&g, nodes[2 * i], sink);
    flow >= 2
}

/// Directed supply graphs, one per good, plus their union.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupplyGraph {
    pub per_good: Vec<BTreeSet<(AgentId, AgentId)>>,
    pub union: BTreeSet<(AgentId, AgentId)>,
}

/// `(i, j) ∈ E^S_k` iff `e^i_k > 0`, `u^j_k > 0` and a trade path joins them.
pub fn build_supply_graph<S: Scalar>(economy: &Economy<S>) -> SupplyGraph {
    let paths = trade_path_reachability(economy);
    let m = economy.agents();
    let mut per_good = vec![BTreeSet::new(); economy.goods()];
    let mut union = BTreeSet::new();
    for (k, edges) in per_good.iter_mut().enumerate() {
        for i in 0..m {
            if economy.endowment(i, k) <= &S::zero() {
                continue;
            }
            for j in 0..m {
                if economy.utility(j, k) > &S::zero() && paths[i][j] {
                    edges.insert((i, j));
                    union.insert((i, j));
                }
            }
        }
    }
    SupplyGraph { per_good, union }
}

/// Connected components of the trade graph, each ascending, ordered by
/// smallest member.
pub fn connected_components<S: Scalar>(economy: &Economy<S>) -> Vec<Vec<AgentId>> {
    let m = economy.agents();
    let mut seen = vec![false; m];
    let mut comps = Vec::new();
    for s in 0..m {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in economy.nbrs(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AssumptionId {
    #[serde(rename = "utilities")]
    Utilities,
    #[serde(rename = "resale")]
    Resale,
    #[serde(rename = "participation")]
    Participation,
    #[serde(rename = "useful_goods")]
    UsefulGoods,
    #[serde(rename = "reachability")]
    Reachability,
}

impl AssumptionId {
    pub fn number(self) -> u8 {
        match self {
            AssumptionId::Utilities => 1,
            AssumptionId::Resale => 2,
            AssumptionId::Participation => 3,
            AssumptionId::UsefulGoods => 4,
            AssumptionId::Reachability => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Agent with no positive utility coefficient.
    Satiated { agent: AgentId },
    /// Commodity bounds with positive capacity somewhere.
    CommodityBound { agent: AgentId },
    /// Agent with `b_i = 0` missing good `good` from its endowment.
    NonParticipant { agent: AgentId, good: GoodId },
    /// Good desired in a component where nobody is endowed with it.
    MissingGood { good: GoodId, component: Vec<AgentId> },
    /// Agent desiring a good that no supplier can reach.
    NoSupplier { agent: AgentId, good: GoodId },
    /// Unendowed agent not intermediating any supply of `good`.
    NotIntermediary { agent: AgentId, good: GoodId },
    /// Endowed agents of a component split into several strongly connected parts.
    NotStronglyConnected { component: Vec<AgentId>, parts: Vec<Vec<AgentId>> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub assumption: AssumptionId,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub verdicts: Vec<Verdict>,
    /// Goods ignored per component because nobody there has or wants them.
    pub excluded_goods: Vec<(Vec<AgentId>, Vec<GoodId>)>,
    /// Strongly connected cover of the endowed agents, per component.
    pub scc_cover: Vec<Vec<Vec<AgentId>>>,
    pub supply_graph: SupplyGraph,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, id: AssumptionId) -> &Verdict {
        self.verdicts.iter().find(|v| v.assumption == id).expect("every assumption has a verdict")
    }

    pub fn failing(&self) -> Vec<AssumptionId> {
        self.verdicts.iter().filter(|v| !v.passed).map(|v| v.assumption).collect()
    }
}

fn verdict(assumption: AssumptionId, witnesses: Vec<Witness>) -> Verdict {
    Verdict { assumption, passed: witnesses.is_empty(), witnesses }
}

pub fn check_assumptions<S: Scalar>(economy: &Economy<S>) -> AssumptionReport {
    let m = economy.agents();
    let l = economy.goods();
    let pos = |x: &S| *x > S::zero();
    let endowed = |i: AgentId| economy.endowment_row(i).iter().any(pos);
    let comps = connected_components(economy);
    let mut comp_of = vec![0; m];
    for (c, members) in comps.iter().enumerate() {
        for &i in members {
            comp_of[i] = c;
        }
    }
    // relevant[c][k]: someone in component c has or wants good k.
    let relevant: Vec<Vec<bool>> = comps
        .iter()
        .map(|members| (0..l).map(|k| members.iter().any(|&i| pos(economy.endowment(i, k)) || pos(economy.utility(i, k)))).collect())
        .collect();
    let excluded_goods = comps
        .iter()
        .zip(&relevant)
        .map(|(members, rel)| (members.clone(), (0..l).filter(|&k| !rel[k]).collect::<Vec<_>>()))
        .filter(|(_, ks)| !ks.is_empty())
        .collect();

    let utilities = (0..m).filter(|&i| !economy.utility_row(i).iter().any(pos)).map(|agent| Witness::Satiated { agent }).collect();

    let resale = match economy.resale_kind() {
        ResaleKind::Credit => Vec::new(),
        ResaleKind::Commodity => (0..m).filter(|&i| pos(economy.resale_bound(i))).map(|agent| Witness::CommodityBound { agent }).collect(),
    };

    let mut participation = Vec::new();
    for i in 0..m {
        if pos(economy.resale_bound(i)) {
            continue;
        }
        for k in 0..l {
            if relevant[comp_of[i]][k] && !pos(economy.endowment(i, k)) {
                participation.push(Witness::NonParticipant { agent: i, good: k });
                break;
            }
        }
    }

    let mut useful = Vec::new();
    for (c, members) in comps.iter().enumerate() {
        for k in 0..l {
            if relevant[c][k] && !members.iter().any(|&i| pos(economy.endowment(i, k))) {
                useful.push(Witness::MissingGood { good: k, component: members.clone() });
            }
        }
    }

    let supply = build_supply_graph(economy);
    let mut reach = Vec::new();
    for i in 0..m {
        for k in 0..l {
            if pos(economy.utility(i, k)) && !supply.per_good[k].iter().any(|&(_, j)| j == i) {
                reach.push(Witness::NoSupplier { agent: i, good: k });
            }
        }
    }
    for i in 0..m {
        if endowed(i) {
            continue;
        }
        for k in 0..l {
            if !relevant[comp_of[i]][k] {
                continue;
            }
            let covered = supply.per_good[k].iter().any(|&(a, b)| endowed(b) && on_trade_path(economy, i, a, b));
            if !covered {
                reach.push(Witness::NotIntermediary { agent: i, good: k });
            }
        }
    }
    let mut scc_cover = Vec::new();
    for members in &comps {
        let nodes: Vec<AgentId> = members.iter().copied().filter(|&i| endowed(i)).collect();
        let mut g: DiGraph<AgentId, ()> = DiGraph::new();
        let idx: Vec<NodeIndex> = nodes.iter().map(|&i| g.add_node(i)).collect();
        for (x, &a) in nodes.iter().enumerate() {
            for (y, &b) in nodes.iter().enumerate() {
                if a != b && supply.union.contains(&(a, b)) {
                    g.add_edge(idx[x], idx[y], ());
                }
            }
        }
        let mut parts: Vec<Vec<AgentId>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<AgentId> = c.into_iter().map(|n| g[n]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        parts.sort();
        if parts.len() > 1 {
            reach.push(Witness::NotStronglyConnected { component: members.clone(), parts: parts.clone() });
        }
        scc_cover.push(parts);
    }

    AssumptionReport {
        verdicts: vec![
            verdict(AssumptionId::Utilities, utilities),
            verdict(AssumptionId::Resale, resale),
            verdict(AssumptionId::Participation, participation),
            verdict(AssumptionId::UsefulGoods, useful),
            verdict(AssumptionId::Reachability, reach),
        ],
        excluded_goods,
        scc_cover,
        supply_graph: supply,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn broker(b: i64) -> Economy<Rational> {
        Economy::new(
            3,
            2,
            [(0, 1), (1, 2)],
            vec![vec![q(1), q(0)], vec![q(0), q(0)], vec![q(0), q(1)]],
            vec![vec![q(0), q(1)], vec![q(1), q(1)], vec![q(1), q(0)]],
            vec![q(b); 3],
            ResaleKind::Credit,
        )
        .unwrap()
    }

    #[test]
    fn broker_paths_go_through_the_middle() {
        assert!(trade_path_reachability(&broker(1))[0][2]);
        assert!(!trade_path_reachability(&broker(0))[0][2]);
        assert!(on_trade_path(&broker(1), 1, 0, 2));
        assert!(!on_trade_path(&broker(0), 1, 0, 2));
    }

    #[test]
    fn broker_supply_graph_and_verdicts() {
        let e = broker(1);
        let sg = build_supply_graph(&e);
        assert!(sg.per_good[0].contains(&(0, 2)));
        assert!(sg.per_good[1].contains(&(2, 0)));
        assert!(check_assumptions(&e).all_pass());
        let r = check_assumptions(&broker(0));
        assert_eq!(r.failing(), vec![AssumptionId::Participation, AssumptionId::Reachability]);
        // Every agent has a zero coordinate, the broker most visibly.
        assert!(r.verdict(AssumptionId::Participation).witnesses.contains(&Witness::NonParticipant { agent: 1, good: 0 }));
    }

    #[test]
    fn commodity_bounds_fail_resale_assumption() {
        let e = broker(1).with_resale_kind(ResaleKind::Commodity);
        assert_eq!(check_assumptions(&e).failing(), vec![AssumptionId::Resale]);
    }

    #[test]
    fn unowned_good_gives_empty_supply() {
        let e = Economy::new(2, 2, [(0, 1)], vec![vec![q(1), q(0)], vec![q(1), q(0)]], vec![vec![q(1), q(1)], vec![q(1), q(0)]], vec![q(0); 2], ResaleKind::Credit).unwrap();
        let sg = build_supply_graph(&e);
        assert!(sg.per_good[1].is_empty());
        let r = check_assumptions(&e);
        assert!(!r.verdict(AssumptionId::UsefulGoods).passed);
    }

    #[test]
    fn single_agent_reflexive_edge() {
        let e = Economy::new(1, 1, [], vec![vec![q(1)]], vec![vec![q(1)]], vec![q(0)], ResaleKind::Credit).unwrap();
        assert!(build_supply_graph(&e).per_good[0].contains(&(0, 0)));
        assert!(check_assumptions(&e).all_pass());
    }

    #[test]
    fn simple_path_test_rejects_backtracking() {
        // Star 0-1, 1-2, 1-3 with everyone able to resell: agent 3 hangs off
        // the only route between 0 and 2, so it cannot sit on a simple path.
        let e = Economy::new(4, 1, [(0, 1), (1, 2), (1, 3)], vec![vec![q(1)]; 4], vec![vec![q(1)]; 4], vec![q(1); 4], ResaleKind::Credit).unwrap();
        assert!(on_trade_path(&e, 1, 0, 2));
        assert!(!on_trade_path(&e, 3, 0, 2));
    }
}
