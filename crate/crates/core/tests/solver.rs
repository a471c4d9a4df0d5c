use graphecon_core::auction::{run_auction, AuctionConfig, AuctionError, AuctionState, Instrumentation, TerminationReason};
use graphecon_core::economy::utility_of;
use graphecon_core::generators::{broker_economy, gen_breadth_chain, gen_pmax_chain};
use graphecon_core::verifier::verify_approx_equilibrium;
use graphecon_core::{Economy, Rational, ResaleKind, Scalar};

fn instrumented<S: Scalar>(eps: S) -> AuctionConfig<S> {
    let mut cfg = AuctionConfig::new(eps);
    cfg.instrumentation = Instrumentation::EveryTurn;
    cfg
}

fn solve_and_verify<S: Scalar>(e: &Economy<S>, cfg: AuctionConfig<S>) -> graphecon_core::auction::RunResult<S> {
    let eps = cfg.eps.clone();
    let res = run_auction(e, cfg).expect("auction terminates");
    assert!(res.stats.invariant_violations.is_empty(), "{:?}", res.stats.invariant_violations);
    let report = verify_approx_equilibrium(e, &res.prices, &res.plan, &eps).unwrap();
    assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
    res
}

#[test]
fn broker_float_runs_verify() {
    for eps in [0.1, 0.05] {
        let e = broker_economy(0.5, [1.0, 1.0]);
        let res = solve_and_verify(&e, instrumented(eps));
        // Good 1 travels 2 -> 1 -> 0 and good 0 travels 0 -> 1 -> 2.
        assert!(res.plan.resale(1, 2, 1) > 0.0);
        assert!(res.plan.resale(1, 0, 0) > 0.0);
        assert!(res.plan.consumption(0, 1, 1) > 0.0);
        assert!(res.plan.consumption(2, 1, 0) > 0.0);
    }
}

#[test]
fn broker_exact_run_verifies() {
    let e = broker_economy(Rational::from_ratio(1, 2), [Rational::from_int(1), Rational::from_int(1)]);
    let res = solve_and_verify(&e, instrumented(Rational::from_ratio(1, 10)));
    assert!(res.stats.invariant_checks > 0);
    for i in 0..3 {
        assert!(utility_of(&e, &res.plan, i) > Rational::from_int(0));
    }
}

#[test]
fn exact_and_float_agree_on_the_broker() {
    let exact = broker_economy(Rational::from_ratio(1, 2), [Rational::from_int(1), Rational::from_int(1)]);
    let float = broker_economy(0.5, [1.0, 1.0]);
    let a = run_auction(&exact, AuctionConfig::new(Rational::from_ratio(1, 10))).unwrap();
    let b = run_auction(&float, AuctionConfig::new(0.1)).unwrap();
    for i in 0..3 {
        for k in 0..2 {
            let (pa, pb) = (Scalar::to_f64(a.prices.get(i, k)), *b.prices.get(i, k));
            assert!((pa - pb).abs() <= 1e-9 * pa, "price ({i},{k}): {pa} vs {pb}");
        }
        let (ua, ub) = (Scalar::to_f64(&utility_of(&exact, &a.plan, i)), utility_of(&float, &b.plan, i));
        assert!((ua - ub).abs() < 1e-6, "utility of {i}: {ua} vs {ub}");
    }
}

#[test]
fn runs_are_deterministic() {
    let e = gen_breadth_chain(5, &0.5).unwrap();
    let a = run_auction(&e, AuctionConfig::new(0.1)).unwrap();
    let b = run_auction(&e, AuctionConfig::new(0.1)).unwrap();
    assert_eq!(a.prices, b.prices);
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.stats.counters, b.stats.counters);
}

#[test]
fn breadth_chain_moves_goods_end_to_end() {
    let e = gen_breadth_chain(6, &0.5).unwrap();
    let res = solve_and_verify(&e, instrumented(0.05));
    assert!(res.plan.consumption(5, 4, 0) > 0.0);
    assert!(res.plan.consumption(0, 1, 1) > 0.0);
    for i in 1..4 {
        assert!(res.plan.resale(i, i + 1, 1) > 0.0, "agent {i} does not pass good 1 along");
    }
}

#[test]
fn pmax_chain_needs_force_and_then_verifies() {
    let e = gen_pmax_chain(4, &2.0).unwrap();
    assert!(matches!(run_auction(&e, AuctionConfig::new(0.1)), Err(AuctionError::Assumptions { .. })));
    let mut cfg = instrumented(0.1);
    cfg.force = true;
    let res = solve_and_verify(&e, cfg);
    assert!(res.prices.get(3, 3) > res.prices.get(0, 0));
    assert!(res.stats.counters.raise_price_calls <= res.stats.raise_bound(4, 4, &0.1));
    assert!(!res.warnings.is_empty());
}

#[test]
fn complete_graph_exchange() {
    let e = Economy::new(
        3,
        3,
        [(0, 1), (0, 2), (1, 2)],
        vec![vec![1.0, 0.5, 0.5], vec![0.5, 1.0, 0.5], vec![0.5, 0.5, 1.0]],
        vec![vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0], vec![2.0, 3.0, 1.0]],
        vec![0.25; 3],
        ResaleKind::Credit,
    )
    .unwrap();
    let res = solve_and_verify(&e, instrumented(0.1));
    assert!(matches!(res.termination, TerminationReason::ExactLocalClearing | TerminationReason::SurplusThreshold));
}

#[test]
fn custom_schedule_still_verifies() {
    let e = broker_economy(0.5, [1.0, 1.0]);
    let mut cfg = instrumented(0.1);
    cfg.schedule = Some(vec![2, 1, 0]);
    solve_and_verify(&e, cfg);
}

#[test]
fn trace_is_sequential() {
    let e = broker_economy(0.5, [1.0, 1.0]);
    let mut cfg = AuctionConfig::new(0.1);
    cfg.record_trace = true;
    let res = run_auction(&e, cfg).unwrap();
    assert!(!res.trace.is_empty());
    assert!(res.trace.iter().enumerate().all(|(n, ev)| ev.event_seq == n as u64));
    for kind in ["demand_query", "assign", "raise_price", "turn_end"] {
        assert!(res.trace.iter().any(|ev| ev.event_type == kind), "no {kind} event");
    }
    assert_eq!(res.stats.price_trajectory.len() as u64, res.stats.counters.raise_price_calls);
}

#[test]
fn raise_limit_is_a_guard() {
    let e = broker_economy(0.5, [1.0, 1.0]);
    let mut cfg = AuctionConfig::new(0.1);
    cfg.max_raises = Some(2);
    let err = run_auction(&e, cfg).unwrap_err();
    assert!(matches!(err, AuctionError::RaiseLimit { limit: 2, .. }));
    assert!(err.is_guard());
}

#[test]
fn drive_keeps_statistics_readable() {
    let e = broker_economy(0.5, [1.0, 1.0]);
    let mut st = AuctionState::new(e, instrumented(0.1)).unwrap();
    st.drive().unwrap();
    assert!(st.terminated());
    assert!(st.violations().is_empty());
    assert!(*st.p_max() > 1.0);
}

#[test]
fn commodity_bounds_run_with_a_warning() {
    let e = broker_economy(0.5, [1.0, 1.0]).with_resale_kind(ResaleKind::Commodity);
    let res = run_auction(&e, AuctionConfig::new(0.1)).unwrap();
    assert!(res.warnings.iter().any(|w| w.contains("commodity")));
}
