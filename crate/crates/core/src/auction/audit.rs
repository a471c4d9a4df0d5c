//! Runtime checks of the auction's invariants.

use super::engine::AuctionState;
use super::ledger::{Bucket, Use};
use crate::oracles::{consumption_argmax, resale_argmax, resale_metric, resale_neutral};
use crate::scalar::Scalar;

const MAX_RECORDED: usize = 50;

impl<S: Scalar> AuctionState<S> {
    /// Checks every invariant against the current state and returns the
    /// violations found (also recorded in the run statistics).
    pub fn audit(&mut self) -> Vec<String> {
        self.checks += 1;
        let found = self.invariant_violations();
        for v in &found {
            if self.violations.len() < MAX_RECORDED {
                self.violations.push(v.clone());
            }
        }
        found
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let e = &self.economy;
        let m = e.agents();
        let l = e.goods();
        let kind = e.resale_kind();
        let mut out = Vec::new();
        for i in 0..m {
            // Surplus bookkeeping.
            let closed = self.closed_form_surplus(i);
            let scale = S::max_of(S::max_of(S::one(), closed.abs()), S::max_of(self.budget(i).abs(), self.booked_spend(i)));
            let drift = (closed.clone() - self.surplus[i].clone()).abs();
            if drift.definitely_gt(&(S::tolerance() * S::from_int(1000) * scale.clone())) {
                out.push(format!("surplus of agent {i}: tracked {} but ledger gives {closed}", self.surplus[i]));
            }
            // Surplus stays nonnegative and booked spend stays within the budget.
            if (closed.clone() + S::tolerance() * scale.clone()).definitely_lt(&S::zero()) {
                out.push(format!("inv2: agent {i} has negative surplus {closed}"));
            }
            let (booked, beta) = (self.booked_spend(i), self.budget(i));
            if booked.definitely_gt(&beta) {
                out.push(format!("inv5: agent {i} booked spend {booked} exceeds budget {beta}"));
            }
            // Resale holdings stay near-optimal and within the bound.
            let held = self.ledger.held_by(i);
            let has_resale = held.iter().any(|&(h, k)| self.ledger.get(i, h, k).is_some_and(|x| !x.of_use(Use::Resale).is_zero()));
            if has_resale {
                if e.resale_bound(i).is_zero() {
                    out.push(format!("inv1: agent {i} resells with zero bound"));
                }
                let best = match resale_argmax(e, i, &self.prices, kind) {
                    Ok(b) => b.map(|(m, _)| m).unwrap_or_else(|| resale_neutral(kind)),
                    Err(err) => {
                        out.push(format!("inv1: agent {i}: {err}"));
                        continue;
                    }
                };
                for &(h, k) in &held {
                    let y = self.ledger.get(i, h, k).map(|x| x.of_use(Use::Resale)).unwrap_or_else(S::zero);
                    if y.is_zero() {
                        continue;
                    }
                    let relaxed = resale_metric(kind, self.prices.get(i, k), &(self.prices.get(h, k).clone() / self.factor.clone()));
                    if !relaxed.is_some_and(|r| r.approx_ge(&best)) {
                        out.push(format!("inv1: agent {i} holds good {k} from {h} off the relaxed argmax"));
                    }
                }
                let usage = self.resale_usage(i);
                if usage.definitely_gt(e.resale_bound(i)) {
                    out.push(format!("inv1: agent {i} resale usage {usage} exceeds bound {}", e.resale_bound(i)));
                }
            }
            // Consumption at (relaxed) best bang-per-buck.
            if let Ok((best, _)) = consumption_argmax(e, i, &self.prices) {
                for &(h, k) in &held {
                    let x = self.ledger.get(i, h, k).map(|x| x.of_use(Use::Consumption)).unwrap_or_else(S::zero);
                    if x.is_zero() {
                        continue;
                    }
                    let bang = e.utility(i, k).clone() * self.factor.clone() / self.prices.get(h, k).clone();
                    if bang.rel_lt(&best) {
                        out.push(format!("inv2: agent {i} consumes good {k} from {h} off the relaxed argmax"));
                    }
                }
            }
            for k in 0..l {
                let idle = self.idle(i, k);
                if idle.definitely_lt(&S::zero()) {
                    out.push(format!("inv3: good {k} at agent {i} is over-assigned by {}", -idle));
                } else if e.endowment(i, k).is_zero() && idle.definitely_gt(&S::zero()) {
                    out.push(format!("inv4: agent {i} has idle resale stock {idle} of good {k}"));
                }
                if self.exponent(i, k) == 0 && self.ledger.has_old(i, k) {
                    out.push(format!("two-price: holdings of good {k} at {i} booked below the initial price"));
                }
            }
        }
        for (i, j, k, h) in self.ledger.entries() {
            for (u, b) in [(Use::Consumption, Bucket::Old), (Use::Consumption, Bucket::New), (Use::Resale, Bucket::Old), (Use::Resale, Bucket::New)] {
                if h.get(u, b).definitely_lt(&S::zero()) {
                    out.push(format!("ledger: negative holding of good {k} by {i} from {j}"));
                }
            }
        }
        out
    }
}
