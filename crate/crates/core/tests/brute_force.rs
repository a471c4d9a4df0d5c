use graphecon_core::generators::broker_economy;
use graphecon_core::verifier::{brute_force_search, verify_approx_equilibrium, BruteForceError, GridSpec};
use graphecon_core::{Economy, ResaleKind};

#[test]
fn broker_grid_contains_the_analytic_point() {
    // b = 1/2: prices (1/2, 1), (1, 1), (1, 1/2) sum to 5; the cell is 1/4.
    let e = broker_economy(0.5, [1.0, 1.0]);
    let res = brute_force_search(&e, &GridSpec { depth: 20, total: 5.0 }, 0.05).unwrap();
    let target = [[0.5, 1.0], [1.0, 1.0], [1.0, 0.5]];
    let hit = res.candidates.iter().find(|c| (0..3).all(|i| (0..2).all(|k| (c.prices.get(i, k) - target[i][k]).abs() < 1e-12)));
    let hit = hit.expect("analytic prices are a candidate");
    assert!(hit.residual < 1e-9);
    for c in &res.candidates {
        assert!(verify_approx_equilibrium(&e, &c.prices, &c.plan, &0.1).unwrap().passed);
    }
}

#[test]
fn single_agent_grid_is_one_point() {
    let e = Economy::new(1, 1, [], vec![vec![1.0]], vec![vec![1.0]], vec![0.0], ResaleKind::Credit).unwrap();
    let res = brute_force_search(&e, &GridSpec::new(1), 0.05).unwrap();
    assert_eq!(res.points, 1);
    assert_eq!(res.candidates.len(), 1);
    assert_eq!(res.candidates[0].plan.consumption(0, 0, 0), 1.0);
}

#[test]
fn swap_candidates_price_both_endowments_alike() {
    // Each agent owns the good the other one wants.
    let e = Economy::new(2, 2, [(0, 1)], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0; 2], ResaleKind::Credit)
        .unwrap();
    let grid = GridSpec { depth: 12, total: 1.0 };
    let res = brute_force_search(&e, &grid, 0.05).unwrap();
    assert!(!res.candidates.is_empty());
    for c in &res.candidates {
        let (a, b) = (c.prices.get(0, 0), c.prices.get(1, 1));
        assert!((a - b).abs() / a.max(*b) < 0.05, "{a} vs {b}");
        assert!(verify_approx_equilibrium(&e, &c.prices, &c.plan, &0.1).unwrap().passed);
    }
    assert!(res.points > res.candidates.len());
}

#[test]
fn rejects_nonpositive_total() {
    let e = broker_economy(0.5, [1.0, 1.0]);
    assert_eq!(brute_force_search(&e, &GridSpec { depth: 10, total: 0.0 }, 0.05).unwrap_err(), BruteForceError::BadTotal(0.0));
}
