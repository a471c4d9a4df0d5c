//! Event and price-trajectory logs written as CSV.

use std::io::Write;

use serde::Serialize;

use crate::economy::{AgentId, GoodId};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub event_seq: u64,
    pub round: u64,
    pub event_type: &'static str,
    pub agent: AgentId,
    pub counterparty: Option<AgentId>,
    pub good: Option<GoodId>,
    pub amount: String,
    pub price: String,
    pub surplus_after: String,
    pub tau: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricePoint {
    pub round: u64,
    pub agent: AgentId,
    pub good: GoodId,
    pub price: String,
}

pub fn write_events<W: Write>(out: W, events: &[TraceEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(e)?;
    }
    if events.is_empty() {
        w.write_record(["event_seq", "round", "event_type", "agent", "counterparty", "good", "amount", "price", "surplus_after", "tau"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prices<W: Write>(out: W, points: &[PricePoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    if points.is_empty() {
        w.write_record(["round", "agent", "good", "price"])?;
    }
    w.flush()?;
    Ok(())
}
