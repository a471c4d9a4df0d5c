use graphecon_core::assumptions::{build_supply_graph, check_assumptions, trade_path_reachability};
use graphecon_core::auction::{run_auction, AuctionConfig, Instrumentation};
use graphecon_core::generators::{random_economy, RandomSpec};
use graphecon_core::io::{economy_from_json, economy_to_json};
use graphecon_core::oracles::{consumption_argmax, credit_resale_demand, linear_consumption_demand, plan_cost, wgs_consumption_oracle, ConsumptionCall};
use graphecon_core::verifier::verify_approx_equilibrium;
use graphecon_core::economy::budget_of;
use graphecon_core::{Economy, PriceSystem, Rational, ResaleKind, Scalar, TradePlan};
use proptest::prelude::*;

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

/// Small exact economies: up to 5 agents and 3 goods, arbitrary graphs.
fn economies() -> impl Strategy<Value = Economy<Rational>> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(m, l)| {
        let pairs = m * (m - 1) / 2;
        (
            Just((m, l)),
            prop::collection::vec(any::<bool>(), pairs),
            prop::collection::vec(0i64..4, m * l),
            prop::collection::vec(0i64..4, m * l),
            prop::collection::vec(0i64..3, m),
        )
            .prop_map(|((m, l), on, endow, util, bounds)| {
                let mut edges = Vec::new();
                let mut idx = 0;
                for a in 0..m {
                    for b in a + 1..m {
                        if on[idx] {
                            edges.push((a, b));
                        }
                        idx += 1;
                    }
                }
                let rows = |v: &[i64]| (0..m).map(|i| (0..l).map(|k| q(v[i * l + k], 2)).collect::<Vec<_>>()).collect::<Vec<_>>();
                let mut u = rows(&util);
                for row in &mut u {
                    if row.iter().all(|x| *x == q(0, 1)) {
                        row[0] = q(1, 1);
                    }
                }
                let b = bounds.iter().map(|&x| q(x, 2)).collect();
                Economy::new(m, l, edges, rows(&endow), u, b, ResaleKind::Credit).unwrap()
            })
    })
}

/// An economy together with positive prices on its shape.
fn priced() -> impl Strategy<Value = (Economy<Rational>, PriceSystem<Rational>)> {
    economies().prop_flat_map(|e| {
        let (m, l) = (e.agents(), e.goods());
        prop::collection::vec((1i64..9, 1i64..5), m * l)
            .prop_map(move |raw| (e.clone(), PriceSystem::new((0..m).map(|i| (0..l).map(|k| q(raw[i * l + k].0, raw[i * l + k].1)).collect()).collect())))
    })
}

fn scaled(p: &PriceSystem<Rational>, a: &Rational) -> PriceSystem<Rational> {
    p.scaled(a)
}

/// Every simple path from `a` to `b`, checked for interior resale capacity.
fn trade_path_by_enumeration(e: &Economy<Rational>, a: usize, b: usize) -> bool {
    fn go(e: &Economy<Rational>, v: usize, b: usize, seen: &mut Vec<bool>) -> bool {
        for &w in e.neighbors(v).unwrap() {
            if seen[w] {
                continue;
            }
            if w == b {
                return true;
            }
            if *e.resale_bound(w) > q(0, 1) {
                seen[w] = true;
                if go(e, w, b, seen) {
                    return true;
                }
                seen[w] = false;
            }
        }
        false
    }
    if a == b {
        return true;
    }
    let mut seen = vec![false; e.agents()];
    seen[a] = true;
    go(e, a, b, &mut seen)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consumption_demand_is_scale_invariant((e, p) in priced(), budget in 0i64..12, i in 0usize..5) {
        let i = i % e.agents();
        let beta = q(budget, 3);
        let base = linear_consumption_demand(&e, i, &p, &beta).unwrap();
        for a in [q(1, 3), q(7, 1)] {
            let other = linear_consumption_demand(&e, i, &scaled(&p, &a), &(beta.clone() * a.clone())).unwrap();
            prop_assert_eq!(&base, &other);
        }
    }

    #[test]
    fn credit_resale_is_scale_invariant((e, p) in priced(), credit in 0i64..12, i in 0usize..5) {
        let i = i % e.agents();
        let b = q(credit, 4);
        let base = credit_resale_demand(&e, i, &p, &b, None).unwrap();
        for a in [q(1, 3), q(7, 1)] {
            let other = credit_resale_demand(&e, i, &scaled(&p, &a), &(b.clone() * a.clone()), None).unwrap();
            prop_assert_eq!(&base, &other);
        }
    }

    #[test]
    fn demand_is_normalised_and_exhausts_the_budget((e, p) in priced(), budget in 1i64..12, i in 0usize..5) {
        let i = i % e.agents();
        prop_assert!(linear_consumption_demand(&e, i, &p, &q(0, 1)).unwrap().is_empty());
        prop_assert!(credit_resale_demand(&e, i, &p, &q(0, 1), None).unwrap().is_empty());
        let beta = q(budget, 2);
        let plan = linear_consumption_demand(&e, i, &p, &beta).unwrap();
        prop_assert_eq!(plan_cost(&plan, &p), beta);
    }

    #[test]
    fn wgs_oracle_keeps_unchanged_coordinates(
        (e, p) in priced(),
        budget in 0i64..12,
        extra in 0i64..6,
        bumps in prop::collection::vec(prop::option::of(1i64..4), 15),
        i in 0usize..5,
    ) {
        let i = i % e.agents();
        let (m, l) = (e.agents(), e.goods());
        let mut raised = p.clone();
        for j in 0..m {
            for k in 0..l {
                if let Some(t) = bumps[(j * l + k) % bumps.len()] {
                    raised.set(j, k, p.get(j, k).clone() * q(4 + t, 4));
                }
            }
        }
        let (old_budget, new_budget) = (q(budget, 2), q(budget + extra, 2));
        let old_plan = linear_consumption_demand(&e, i, &p, &old_budget).unwrap();
        let call = ConsumptionCall { old_prices: &p, new_prices: &raised, old_budget, new_budget: new_budget.clone(), old_plan: &old_plan };
        let new_plan = wgs_consumption_oracle(&e, i, &call).unwrap();
        for (&(j, k), x) in &old_plan {
            if raised.get(j, k) == p.get(j, k) {
                prop_assert!(new_plan.get(&(j, k)).is_some_and(|y| y >= x), "({}, {}) dropped", j, k);
            }
        }
        // The new plan is optimal at the new prices and budget.
        let (_, argmax) = consumption_argmax(&e, i, &raised).unwrap();
        prop_assert!(new_plan.keys().all(|key| argmax.contains(key)));
        prop_assert_eq!(plan_cost(&new_plan, &raised), new_budget);
    }

    #[test]
    fn raising_a_source_price_never_buys_more_from_it((e, p) in priced(), credit in 1i64..8, i in 0usize..5, pick in 0usize..15) {
        let i = i % e.agents();
        let nb: Vec<_> = e.neighbors(i).unwrap().iter().copied().filter(|&j| j != i).collect();
        prop_assume!(!nb.is_empty());
        let (j, k) = (nb[pick % nb.len()], pick % e.goods());
        let b = q(credit, 2);
        let mut raised = p.clone();
        raised.set(j, k, p.get(j, k).clone() * q(11, 10));
        let before = credit_resale_demand(&e, i, &p, &b, None).unwrap();
        let after = credit_resale_demand(&e, i, &raised, &b, None).unwrap();
        let zero = q(0, 1);
        prop_assert!(after.get(&(j, k)).unwrap_or(&zero) <= before.get(&(j, k)).unwrap_or(&zero));
    }

    #[test]
    fn budget_is_linear_in_endowments_and_resale(
        (e, p) in priced(),
        other in prop::collection::vec(0i64..4, 15),
        ys in prop::collection::vec((0i64..4, 0i64..4), 15),
        c in 1i64..5,
        i in 0usize..5,
    ) {
        let i = i % e.agents();
        let (m, l) = (e.agents(), e.goods());
        let with_endow = |rows: Vec<Vec<Rational>>| {
            Economy::new(m, l, e.edges().collect::<Vec<_>>(), rows, e.utilities().to_vec(), e.resale_bounds().to_vec(), ResaleKind::Credit).unwrap()
        };
        let e2 = with_endow((0..m).map(|a| (0..l).map(|k| q(other[(a * l + k) % 15], 3)).collect()).collect());
        let sum = with_endow((0..m).map(|a| (0..l).map(|k| e.endowment(a, k).clone() + e2.endowment(a, k).clone()).collect()).collect());
        let times = with_endow((0..m).map(|a| (0..l).map(|k| e.endowment(a, k).clone() * q(c, 1)).collect()).collect());
        let nb: Vec<_> = e.neighbors(i).unwrap().iter().copied().filter(|&j| j != i).collect();
        let (mut y1, mut y2, mut y12, mut yc) = (TradePlan::new(), TradePlan::new(), TradePlan::new(), TradePlan::new());
        for (n, &j) in nb.iter().enumerate() {
            for k in 0..l {
                let (a, b) = ys[(n * l + k) % 15];
                y1.set_resale(i, j, k, q(a, 2));
                y2.set_resale(i, j, k, q(b, 2));
                y12.set_resale(i, j, k, q(a + b, 2));
                yc.set_resale(i, j, k, q(a * c, 2));
            }
        }
        prop_assert_eq!(budget_of(&sum, &p, &y12, i), budget_of(&e, &p, &y1, i) + budget_of(&e2, &p, &y2, i));
        prop_assert_eq!(budget_of(&times, &p, &yc, i), budget_of(&e, &p, &y1, i) * q(c, 1));
    }

    #[test]
    fn trade_paths_match_enumeration(e in economies()) {
        let p = trade_path_reachability(&e);
        let m = e.agents();
        for a in 0..m {
            prop_assert!(p[a][a]);
            for b in 0..m {
                prop_assert_eq!(p[a][b], p[b][a]);
                prop_assert_eq!(p[a][b], trade_path_by_enumeration(&e, a, b));
            }
        }
    }

    #[test]
    fn supply_edges_meet_their_definition(e in economies()) {
        let g = build_supply_graph(&e);
        let zero = q(0, 1);
        for k in 0..e.goods() {
            for i in 0..e.agents() {
                for j in 0..e.agents() {
                    let expected = *e.endowment(i, k) > zero && *e.utility(j, k) > zero && trade_path_by_enumeration(&e, i, j);
                    prop_assert_eq!(g.per_good[k].contains(&(i, j)), expected);
                }
            }
        }
    }

    #[test]
    fn complete_graph_with_full_endowments_passes(m in 1usize..=5, l in 1usize..=3, raw in prop::collection::vec((1i64..5, 0i64..4), 15), b in 0i64..3) {
        let edges: Vec<_> = (0..m).flat_map(|a| (a + 1..m).map(move |c| (a, c))).collect();
        let endow = (0..m).map(|i| (0..l).map(|k| q(raw[(i * l + k) % 15].0, 2)).collect()).collect();
        let util = (0..m).map(|i| (0..l).map(|k| q(raw[(i * l + k) % 15].1 + (k == 0) as i64, 1)).collect()).collect();
        let e = Economy::new(m, l, edges, endow, util, vec![q(b, 2); m], ResaleKind::Credit).unwrap();
        let report = check_assumptions(&e);
        prop_assert!(report.all_pass(), "{:?}", report.failing());
    }

    #[test]
    fn economy_json_round_trips(e in economies()) {
        let back: Economy<Rational> = economy_from_json(&economy_to_json(&e)).unwrap();
        prop_assert_eq!(back, e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn auction_runs_keep_their_invariants(seed in 0u64..10_000, m in 2usize..=4, l in 1usize..=3) {
        let spec = RandomSpec { agents: m, goods: l, edge_prob: 0.3, endow_prob: 0.4, max_bound_quarters: 4 };
        let e: Economy<f64> = random_economy(seed, &spec);
        let mut cfg = AuctionConfig::new(0.1);
        cfg.instrumentation = Instrumentation::EveryTurn;
        cfg.max_turns = 200_000;
        let mut st = graphecon_core::auction::AuctionState::new(e.clone(), cfg).unwrap();
        let outcome = st.drive();
        prop_assert!(st.violations().is_empty(), "{:?}", st.violations());
        let bound = (m * l) as u64 * (graphecon_core::scalar::ceil_log(&1.1, st.p_max()) + 1);
        prop_assert!(st.counters().raise_price_calls <= bound);
        if outcome.is_ok() {
            let res = run_auction(&e, AuctionConfig::new(0.1)).unwrap();
            let report = verify_approx_equilibrium(&e, &res.prices, &res.plan, &0.1).unwrap();
            prop_assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
        }
    }
}
