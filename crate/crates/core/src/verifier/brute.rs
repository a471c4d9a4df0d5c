//! Exhaustive grid search for approximate equilibria of tiny economies.
//!
//! Each grid point fixes every local price. Resale demand follows from the
//! prices alone; consumption money is then routed from buyers to the local
//! supplies they would happily buy from by a max-flow, and the point is
//! scored by the worst relative shortfall of unsold supply or unspent budget.

use petgraph::algo::ford_fulkerson;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::economy::{Economy, PriceSystem, ResaleKind, TradePlan};
use crate::oracles::{resale_metric, resale_neutral};

/// Largest grid the search will enumerate.
pub const MAX_GRID_POINTS: u128 = 2_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum BruteForceError {
    #[error("grid of depth {depth} over {coords} prices has {points} points, more than {limit}")]
    TooLarge { depth: usize, coords: usize, points: u128, limit: u128 },
    #[error("depth {depth} leaves no grid point with all {coords} prices positive")]
    TooShallow { depth: usize, coords: usize },
    #[error("grid total must be positive, got {0}")]
    BadTotal(f64),
}

/// Price grid: every local price is a positive multiple of `total / depth`
/// and all prices sum to `total`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub depth: usize,
    pub total: f64,
}

impl GridSpec {
    pub fn new(depth: usize) -> Self {
        GridSpec { depth, total: 1.0 }
    }

    pub fn cell(&self) -> f64 {
        self.total / self.depth as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub prices: PriceSystem<f64>,
    pub plan: TradePlan<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResult {
    /// Points with residual below the tolerance, in enumeration order.
    pub candidates: Vec<Candidate>,
    /// Lowest-residual point overall.
    pub best: Option<Candidate>,
    pub points: usize,
}

/// Number of compositions of `depth` into `coords` positive parts.
pub fn grid_size(coords: usize, depth: usize) -> u128 {
    if coords == 0 || depth < coords {
        return 0;
    }
    let (n, k) = ((depth - 1) as u128, (coords - 1) as u128);
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

pub fn brute_force_search(economy: &Economy<f64>, grid: &GridSpec, tol: f64) -> Result<BruteForceResult, BruteForceError> {
    if !(grid.total > 0.0) {
        return Err(BruteForceError::BadTotal(grid.total));
    }
    let m = economy.agents();
    let l = economy.goods();
    let coords = m * l;
    let points = grid_size(coords, grid.depth);
    if points == 0 {
        return Err(BruteForceError::TooShallow { depth: grid.depth, coords });
    }
    if points > MAX_GRID_POINTS {
        return Err(BruteForceError::TooLarge { depth: grid.depth, coords, points, limit: MAX_GRID_POINTS });
    }
    let mut out = BruteForceResult { candidates: Vec::new(), best: None, points: 0 };
    // Bar positions in 1..depth splitting depth into coords positive parts.
    let mut cuts: Vec<usize> = (1..coords).collect();
    loop {
        let parts = parts_of(&cuts, grid.depth);
        let rows = (0..m).map(|i| (0..l).map(|k| parts[i * l + k] as f64 * grid.cell()).collect()).collect();
        let prices = PriceSystem::new(rows);
        let (plan, residual) = score(economy, &prices, tol);
        out.points += 1;
        let cand = Candidate { prices, plan, residual };
        if residual < tol {
            out.candidates.push(cand.clone());
        }
        if out.best.as_ref().map_or(true, |b| residual < b.residual) {
            out.best = Some(cand);
        }
        if !next_cuts(&mut cuts, grid.depth) {
            break;
        }
    }
    Ok(out)
}

fn parts_of(cuts: &[usize], depth: usize) -> Vec<usize> {
    let mut parts = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0;
    for &c in cuts {
        parts.push(c - prev);
        prev = c;
    }
    parts.push(depth - prev);
    parts
}

/// Next strictly increasing cut sequence in `1..depth`, lexicographically.
fn next_cuts(cuts: &mut [usize], depth: usize) -> bool {
    let n = cuts.len();
    for idx in (0..n).rev() {
        if cuts[idx] < depth - (n - idx) {
            cuts[idx] += 1;
            for t in idx + 1..n {
                cuts[t] = cuts[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Plan and residual at one price point; infinite residual when resale
/// demand alone exceeds a seller's stock.
fn score(economy: &Economy<f64>, prices: &PriceSystem<f64>, tol: f64) -> (TradePlan<f64>, f64) {
    let m = economy.agents();
    let l = economy.goods();
    let kind = economy.resale_kind();
    let relax = 1.0 + tol;
    let mut plan = TradePlan::new();

    for i in 0..m {
        let bound = *economy.resale_bound(i);
        if bound <= 0.0 {
            continue;
        }
        let mut scored = Vec::new();
        for &j in economy.nbrs(i) {
            if j == i {
                continue;
            }
            for k in 0..l {
                let own = prices.get(i, k);
                let src = prices.get(j, k);
                if let (Some(m_exact), Some(m_relaxed)) = (resale_metric(kind, own, src), resale_metric(kind, own, &(src / relax))) {
                    scored.push(((j, k), m_exact, m_relaxed));
                }
            }
        }
        let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        if best <= resale_neutral::<f64>(kind) {
            continue;
        }
        let tied: Vec<_> = scored.iter().filter(|s| s.2 >= best && s.1 > resale_neutral::<f64>(kind)).map(|s| s.0).collect();
        let unit = |j: usize, k: usize| match kind {
            ResaleKind::Credit => *prices.get(j, k),
            ResaleKind::Commodity => 1.0,
        };
        let weights: Vec<f64> = tied.iter().map(|&(j, k)| unit(j, k) * economy.endowment(j, k)).collect();
        let total: f64 = weights.iter().sum();
        for (idx, &(j, k)) in tied.iter().enumerate() {
            let share = if total > 0.0 { weights[idx] / total } else { 1.0 / tied.len() as f64 };
            plan.add_resale(i, j, k, bound * share / unit(j, k));
        }
    }

    // Stock left for consumers at each (seller, good).
    let mut left = vec![vec![0.0; l]; m];
    for (j, row) in left.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            let stock = economy.endowment(j, k) + plan.resale_of(j).iter().filter(|(&(_, g), _)| g == k).map(|(_, v)| v).sum::<f64>();
            let resold = plan.sold_by(j, k).1;
            if resold > stock * (1.0 + 1e-12) + 1e-12 {
                return (plan, f64::INFINITY);
            }
            *slot = (stock - resold).max(0.0);
        }
    }
    let budgets: Vec<f64> = (0..m).map(|i| crate::economy::budget_of(economy, prices, &plan, i)).collect();

    // source -> buyer (budget) -> (seller, good) -> sink (value of stock left)
    let mut g = DiGraph::<(), f64>::new();
    let source = g.add_node(());
    let sink = g.add_node(());
    let buyers: Vec<_> = (0..m).map(|_| g.add_node(())).collect();
    let stocks: Vec<Vec<_>> = (0..m).map(|_| (0..l).map(|_| g.add_node(())).collect()).collect();
    for (j, row) in left.iter().enumerate() {
        for (k, &q) in row.iter().enumerate() {
            if q > 0.0 {
                g.add_edge(stocks[j][k], sink, q * prices.get(j, k));
            }
        }
    }
    let mut routes = Vec::new();
    for i in 0..m {
        if budgets[i] <= 0.0 {
            continue;
        }
        let mut best = 0.0f64;
        for &j in economy.nbrs(i) {
            for k in 0..l {
                best = best.max(economy.utility(i, k) / prices.get(j, k));
            }
        }
        if best <= 0.0 {
            continue;
        }
        g.add_edge(source, buyers[i], budgets[i]);
        for &j in economy.nbrs(i) {
            for k in 0..l {
                let u = *economy.utility(i, k);
                if u > 0.0 && u * relax / prices.get(j, k) >= best && left[j][k] > 0.0 {
                    let e = g.add_edge(buyers[i], stocks[j][k], budgets[i]);
                    routes.push((e, i, j, k));
                }
            }
        }
    }
    let (_, flows) = ford_fulkerson(&g, source, sink);
    let mut spent = vec![0.0; m];
    let mut sold = vec![vec![0.0; l]; m];
    for (e, i, j, k) in routes {
        let money = flows[e.index()];
        if money > 0.0 {
            let q = money / prices.get(j, k);
            plan.add_consumption(i, j, k, q);
            spent[i] += money;
            sold[j][k] += q;
        }
    }
    let mut residual = 0.0f64;
    for i in 0..m {
        if budgets[i] > 0.0 {
            residual = residual.max((budgets[i] - spent[i]) / budgets[i]);
        }
        for k in 0..l {
            let stock = economy.endowment(i, k) + plan.resale_of(i).iter().filter(|(&(_, g), _)| g == k).map(|(_, v)| v).sum::<f64>();
            if stock > 0.0 {
                let out = sold[i][k] + plan.sold_by(i, k).1;
                residual = residual.max((stock - out) / stock);
            }
        }
    }
    (plan, residual.max(0.0))
}
