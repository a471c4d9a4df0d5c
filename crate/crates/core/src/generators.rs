//! Hand-solved economies with their closed-form equilibria, benchmark
//! families, and random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assumptions::check_assumptions;
use crate::economy::{Economy, PriceSystem, ResaleKind, TradePlan};
use crate::io::Certificate;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("{param} = {value} is out of range: {expected}")]
    OutOfRange { param: &'static str, value: String, expected: &'static str },
    #[error("{what} is irrational for this input; use float mode")]
    Irrational { what: &'static str },
}

fn zero<S: Scalar>() -> S {
    S::zero()
}

fn one<S: Scalar>() -> S {
    S::one()
}

fn path_edges(m: usize) -> Vec<(usize, usize)> {
    (1..m).map(|i| (i - 1, i)).collect()
}

fn check_b<S: Scalar>(b: &S) -> Result<(), GenError> {
    if *b <= S::zero() || *b > S::from_int(2) {
        return Err(GenError::OutOfRange { param: "b", value: b.to_string(), expected: "0 < b <= 2" });
    }
    Ok(())
}

/// The three-agent broker economy: agents 0 and 2 own one good each and want
/// the other one, agent 1 sits between them, owns nothing and likes both.
pub fn broker_economy<S: Scalar>(b: S, u_middle: [S; 2]) -> Economy<S> {
    Economy::new(
        3,
        2,
        path_edges(3),
        vec![vec![one(), zero()], vec![zero(), zero()], vec![zero(), one()]],
        vec![vec![zero(), one()], u_middle.to_vec(), vec![one(), zero()]],
        vec![b.clone(), b.clone(), b],
        ResaleKind::Credit,
    )
    .expect("broker economy is well formed")
}

/// Broker economy with its equilibrium at `α = √(b/2)`.
pub fn gen_broker<S: Scalar>(b: &S) -> Result<(Economy<S>, Certificate<S>), GenError> {
    check_b(b)?;
    let alpha = (b.clone() / S::from_int(2)).sqrt_checked().ok_or(GenError::Irrational { what: "sqrt(b/2)" })?;
    let economy = broker_economy(b.clone(), [one(), one()]);
    let a = alpha.clone();
    let prices = PriceSystem::new(vec![vec![a.clone(), one()], vec![one(), one()], vec![one(), a.clone()]]);
    let mut plan = TradePlan::new();
    plan.set_resale(1, 0, 0, a.clone());
    plan.set_resale(1, 2, 1, a.clone());
    plan.set_consumption(0, 1, 1, a.clone());
    plan.set_consumption(2, 1, 0, a.clone());
    plan.set_consumption(1, 0, 0, one::<S>() - a.clone());
    plan.set_consumption(1, 2, 1, one::<S>() - a);
    Ok((economy, Certificate { prices, plan }))
}

/// Broker variant where the middle agent only wants good 1; equilibrium at
/// `α = (√(1+4b) - 1)/2`.
pub fn gen_asymmetric_broker<S: Scalar>(b: &S) -> Result<(Economy<S>, Certificate<S>), GenError> {
    check_b(b)?;
    let root = (one::<S>() + S::from_int(4) * b.clone()).sqrt_checked().ok_or(GenError::Irrational { what: "sqrt(1+4b)" })?;
    let a = (root - one()) / S::from_int(2);
    let economy = broker_economy(b.clone(), [zero(), one()]);
    let inv = one::<S>() / a.clone();
    let prices = PriceSystem::new(vec![vec![a.clone(), inv.clone()], vec![one(), inv], vec![one(), one()]]);
    let a2 = a.clone() * a;
    let mut plan = TradePlan::new();
    plan.set_resale(1, 0, 0, one());
    plan.set_resale(1, 2, 1, a2.clone());
    plan.set_consumption(0, 1, 1, a2.clone());
    plan.set_consumption(2, 1, 0, one());
    plan.set_consumption(1, 2, 1, one::<S>() - a2);
    Ok((economy, Certificate { prices, plan }))
}

/// Asymmetric broker without resale and with every endowment padded by
/// `pad`, plus its resale-free equilibrium.
pub fn gen_epsilon_kko_broker<S: Scalar>(pad: &S) -> Result<(Economy<S>, Certificate<S>), GenError> {
    if *pad <= S::zero() || *pad >= S::one() {
        return Err(GenError::OutOfRange { param: "eps_pad", value: pad.to_string(), expected: "0 < eps_pad < 1" });
    }
    let e = pad.clone();
    let economy = Economy::new(
        3,
        2,
        path_edges(3),
        vec![vec![one(), e.clone()], vec![e.clone(), e.clone()], vec![e.clone(), one()]],
        vec![vec![zero(), one()], vec![zero(), one()], vec![one(), zero()]],
        vec![zero(), zero(), zero()],
        ResaleKind::Credit,
    )
    .expect("padded broker economy is well formed");
    let prices = PriceSystem::new(vec![vec![zero(), e.clone()], vec![one(), e.clone()], vec![one(), e.clone()]]);
    let mut plan = TradePlan::new();
    plan.set_consumption(0, 0, 0, one());
    plan.set_consumption(0, 0, 1, e.clone());
    plan.set_consumption(1, 1, 1, e.clone());
    plan.set_consumption(1, 2, 1, one());
    plan.set_consumption(2, 2, 0, e.clone());
    plan.set_consumption(2, 1, 0, e);
    Ok((economy, Certificate { prices, plan }))
}

/// Chain of `m` agents: the ends own one good each and want the other's,
/// everyone in between owns nothing, likes both goods and can resell `b`.
pub fn gen_breadth_chain<S: Scalar>(m: usize, b: &S) -> Result<Economy<S>, GenError> {
    if m < 3 {
        return Err(GenError::OutOfRange { param: "m", value: m.to_string(), expected: "m >= 3" });
    }
    if *b <= S::zero() {
        return Err(GenError::OutOfRange { param: "b", value: b.to_string(), expected: "b > 0" });
    }
    let mut endow = vec![vec![zero(), zero()]; m];
    let mut util = vec![vec![one(), one()]; m];
    endow[0] = vec![one(), zero()];
    util[0] = vec![zero(), one()];
    endow[m - 1] = vec![zero(), one()];
    util[m - 1] = vec![one(), zero()];
    Ok(Economy::new(m, 2, path_edges(m), endow, util, vec![b.clone(); m], ResaleKind::Credit).expect("chain is well formed"))
}

/// Chain of `m` agents and `m` goods; agent `i` owns one unit of good `i`,
/// values it at 1 and values its right neighbour's good at `alpha`.
/// Nobody can resell.
pub fn gen_pmax_chain<S: Scalar>(m: usize, alpha: &S) -> Result<Economy<S>, GenError> {
    if m < 2 {
        return Err(GenError::OutOfRange { param: "m", value: m.to_string(), expected: "m >= 2" });
    }
    if *alpha <= S::one() {
        return Err(GenError::OutOfRange { param: "alpha", value: alpha.to_string(), expected: "alpha > 1" });
    }
    let mut endow = vec![vec![zero::<S>(); m]; m];
    let mut util = vec![vec![zero::<S>(); m]; m];
    for i in 0..m {
        endow[i][i] = one();
        util[i][i] = one();
        if i + 1 < m {
            util[i][i + 1] = alpha.clone();
        }
    }
    Ok(Economy::new(m, m, path_edges(m), endow, util, vec![zero(); m], ResaleKind::Credit).expect("chain is well formed"))
}

/// Shape of the random instances drawn by [`random_economy`].
#[derive(Clone, Debug)]
pub struct RandomSpec {
    pub agents: usize,
    pub goods: usize,
    /// Probability of each extra edge beyond a random spanning tree.
    pub edge_prob: f64,
    /// Probability that an agent owns a given good.
    pub endow_prob: f64,
    /// Resale bounds are drawn uniformly from `{1/4, 2/4, ..., max_bound_quarters/4}`.
    pub max_bound_quarters: i64,
}

/// Draws a connected credit-resale economy with sparse endowments, positive
/// resale bounds for everyone, and small rational coefficients, resampling
/// until it passes every assumption check.
pub fn random_economy<S: Scalar>(seed: u64, spec: &RandomSpec) -> Economy<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, l) = (spec.agents, spec.goods);
    let val = |rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64| S::from_ratio(rng.gen_range(lo..=hi), den);
    loop {
        let mut edges = Vec::new();
        for i in 1..m {
            edges.push((rng.gen_range(0..i), i));
        }
        for i in 0..m {
            for j in i + 1..m {
                if rng.gen_bool(spec.edge_prob) {
                    edges.push((i, j));
                }
            }
        }
        let mut endow = vec![vec![S::zero(); l]; m];
        let mut util = vec![vec![S::zero(); l]; m];
        for i in 0..m {
            for k in 0..l {
                if rng.gen_bool(spec.endow_prob) {
                    endow[i][k] = val(&mut rng, 1, 4, 2);
                }
                if rng.gen_bool(0.7) {
                    util[i][k] = val(&mut rng, 1, 4, 1);
                }
            }
            if util[i].iter().all(|u| u.is_zero()) {
                let k = rng.gen_range(0..l);
                util[i][k] = S::one();
            }
        }
        let bounds = (0..m).map(|_| val(&mut rng, 1, spec.max_bound_quarters, 4)).collect();
        let Ok(e) = Economy::new(m, l, edges, endow, util, bounds, ResaleKind::Credit) else { continue };
        if has_local_buyers(&e) && check_assumptions(&e).all_pass() {
            return e;
        }
    }
}

/// Every endowed good is valued by its owner or by a neighbour that owns
/// something itself.
fn has_local_buyers<S: Scalar>(e: &Economy<S>) -> bool {
    let owns = |i: usize| (0..e.goods()).any(|k| !e.endowment(i, k).is_zero());
    (0..e.agents()).all(|j| (0..e.goods()).all(|k| e.endowment(j, k).is_zero() || e.nbrs(j).iter().any(|&i| *e.utility(i, k) > S::zero() && owns(i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn broker_out_of_range() {
        assert!(matches!(gen_broker(&Rational::from_int(3)), Err(GenError::OutOfRange { .. })));
        assert!(matches!(gen_broker(&Rational::from_ratio(1, 3)), Err(GenError::Irrational { .. })));
        assert!(gen_broker(&(1.0f64 / 3.0)).is_ok());
    }

    #[test]
    fn chain_of_three_is_the_broker() {
        let b = Rational::from_ratio(1, 2);
        assert_eq!(gen_breadth_chain(3, &b).unwrap(), gen_broker(&b).unwrap().0);
    }

    #[test]
    fn random_economies_are_reproducible() {
        let spec = RandomSpec { agents: 4, goods: 3, edge_prob: 0.3, endow_prob: 0.5, max_bound_quarters: 4 };
        let a: Economy<Rational> = random_economy(7, &spec);
        let b: Economy<Rational> = random_economy(7, &spec);
        assert_eq!(a, b);
        assert!(check_assumptions(&a).all_pass());
    }
}
