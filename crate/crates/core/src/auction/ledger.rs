//! Who holds what at which booked price.
//!
//! Each `(buyer, seller, good)` entry splits into consumption and resale
//! quantities, each booked either at the seller's current price (new) or at
//! the price one step below (old).

use std::collections::{BTreeMap, BTreeSet};

use crate::economy::{AgentId, GoodId};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Use {
    Consumption,
    Resale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    Old,
    New,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Holding<S> {
    amounts: [S; 4],
}

fn slot(u: Use, b: Bucket) -> usize {
    match (u, b) {
        (Use::Consumption, Bucket::Old) => 0,
        (Use::Consumption, Bucket::New) => 1,
        (Use::Resale, Bucket::Old) => 2,
        (Use::Resale, Bucket::New) => 3,
    }
}

impl<S: Scalar> Holding<S> {
    fn empty() -> Self {
        Holding { amounts: [S::zero(), S::zero(), S::zero(), S::zero()] }
    }

    pub fn get(&self, u: Use, b: Bucket) -> &S {
        &self.amounts[slot(u, b)]
    }

    pub fn of_use(&self, u: Use) -> S {
        self.get(u, Bucket::Old).clone() + self.get(u, Bucket::New).clone()
    }

    pub fn old(&self) -> S {
        self.get(Use::Consumption, Bucket::Old).clone() + self.get(Use::Resale, Bucket::Old).clone()
    }

    pub fn total(&self) -> S {
        self.amounts.iter().fold(S::zero(), |a, x| a + x.clone())
    }

    fn is_empty(&self) -> bool {
        self.amounts.iter().all(|x| x.is_zero())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Ledger<S> {
    by_seller: BTreeMap<(AgentId, GoodId, AgentId), Holding<S>>,
    by_buyer: BTreeSet<(AgentId, AgentId, GoodId)>,
}

impl<S: Scalar> Ledger<S> {
    pub fn new() -> Self {
        Ledger { by_seller: BTreeMap::new(), by_buyer: BTreeSet::new() }
    }

    pub fn get(&self, buyer: AgentId, seller: AgentId, good: GoodId) -> Option<&Holding<S>> {
        self.by_seller.get(&(seller, good, buyer))
    }

    pub fn amount(&self, buyer: AgentId, seller: AgentId, good: GoodId, u: Use, b: Bucket) -> S {
        self.get(buyer, seller, good).map(|h| h.get(u, b).clone()).unwrap_or_else(S::zero)
    }

    /// Holders of `(seller, good)` in ascending buyer order.
    pub fn holders(&self, seller: AgentId, good: GoodId) -> Vec<(AgentId, Holding<S>)> {
        self.by_seller.range((seller, good, 0)..=(seller, good, usize::MAX)).map(|(&(_, _, b), h)| (b, h.clone())).collect()
    }

    /// `(seller, good)` pairs the buyer holds anything of, ascending.
    pub fn held_by(&self, buyer: AgentId) -> Vec<(AgentId, GoodId)> {
        self.by_buyer.range((buyer, 0, 0)..=(buyer, usize::MAX, usize::MAX)).map(|&(_, j, k)| (j, k)).collect()
    }

    pub fn assigned(&self, seller: AgentId, good: GoodId) -> S {
        self.by_seller
            .range((seller, good, 0)..=(seller, good, usize::MAX))
            .fold(S::zero(), |a, (_, h)| a + h.total())
    }

    pub fn has_old(&self, seller: AgentId, good: GoodId) -> bool {
        self.by_seller.range((seller, good, 0)..=(seller, good, usize::MAX)).any(|(_, h)| !h.old().is_zero())
    }

    pub fn add(&mut self, buyer: AgentId, seller: AgentId, good: GoodId, u: Use, b: Bucket, amount: S) {
        if amount.is_zero() {
            return;
        }
        let h = self.by_seller.entry((seller, good, buyer)).or_insert_with(Holding::empty);
        let s = slot(u, b);
        h.amounts[s] = h.amounts[s].clone() + amount;
        self.by_buyer.insert((buyer, seller, good));
    }

    /// Removes up to `amount` from one slot and returns what was removed.
    /// Float leftovers below tolerance are swept away with it.
    pub fn remove(&mut self, buyer: AgentId, seller: AgentId, good: GoodId, u: Use, b: Bucket, amount: &S) -> S {
        let key = (seller, good, buyer);
        let Some(h) = self.by_seller.get_mut(&key) else { return S::zero() };
        let s = slot(u, b);
        let have = h.amounts[s].clone();
        let mut take = S::min_of(have.clone(), amount.clone());
        let left = have - take.clone();
        if left.is_negligible() {
            take = take + left;
            h.amounts[s] = S::zero();
        } else {
            h.amounts[s] = left;
        }
        if h.is_empty() {
            self.by_seller.remove(&key);
            self.by_buyer.remove(&(buyer, seller, good));
        }
        take
    }

    /// Moves every new-bucket quantity of `(seller, good)` into the old bucket.
    pub fn age(&mut self, seller: AgentId, good: GoodId) {
        for (_, h) in self.by_seller.range_mut((seller, good, 0)..=(seller, good, usize::MAX)) {
            for u in [Use::Consumption, Use::Resale] {
                let n = std::mem::replace(&mut h.amounts[slot(u, Bucket::New)], S::zero());
                let o = slot(u, Bucket::Old);
                h.amounts[o] = h.amounts[o].clone() + n;
            }
        }
    }

    /// All entries as `(buyer, seller, good, holding)`.
    pub fn entries(&self) -> impl Iterator<Item = (AgentId, AgentId, GoodId, &Holding<S>)> {
        self.by_seller.iter().map(|(&(j, k, i), h)| (i, j, k, h))
    }
}
