//! Exchange economies on trade graphs with bounded resale.
//!
//! Agents sit on an undirected graph and trade only with neighbours. Each
//! agent may also buy goods from one neighbour and resell them to another,
//! up to a credit or unit bound. The crate provides demand oracles, an
//! assumption checker, an ascending-price auction that finds approximate
//! equilibria, verifiers for exact and approximate equilibria, and
//! generators for a few hand-solved economies.

pub mod assumptions;
pub mod auction;
pub mod economy;
pub mod generators;
pub mod io;
pub mod oracles;
pub mod scalar;
pub mod verifier;

pub use economy::{AgentId, Economy, EconomyError, GoodId, PriceSystem, ResaleKind, TradePlan};
pub use scalar::{NumericMode, Rational, Scalar};
