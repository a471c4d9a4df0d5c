//! JSON economy and certificate files.
//!
//! Numbers are written as JSON integers when integral and as `"num/den"`
//! strings otherwise; readers accept either form plus decimal literals.

use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::economy::{Economy, EconomyError, PriceSystem, ResaleKind, TradePlan};
use crate::scalar::{scalar_from_json, NumericMode, Scalar};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Field { field: field.into(), message: message.into() }
}

pub fn parse_json(text: &str) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, IoError> {
    obj.get(key).ok_or_else(|| field_err(key, "missing"))
}

fn as_usize(v: &Value, field: &str) -> Result<usize, IoError> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| field_err(field, format!("expected a non-negative integer, got {v}")))
}

fn scalar_at<S: Scalar>(v: &Value, field: &str) -> Result<S, IoError> {
    scalar_from_json(v).map_err(|e| field_err(field, e.to_string()))
}

fn vector<S: Scalar>(v: &Value, field: &str) -> Result<Vec<S>, IoError> {
    let arr = v.as_array().ok_or_else(|| field_err(field, "expected an array"))?;
    arr.iter().enumerate().map(|(i, x)| scalar_at(x, &format!("{field}[{i}]"))).collect()
}

fn matrix<S: Scalar>(v: &Value, field: &str) -> Result<Vec<Vec<S>>, IoError> {
    let arr = v.as_array().ok_or_else(|| field_err(field, "expected an array of rows"))?;
    arr.iter().enumerate().map(|(i, row)| vector(row, &format!("{field}[{i}]"))).collect()
}

/// Numeric mode requested by an economy file, if any.
pub fn declared_mode(doc: &Value) -> Result<Option<NumericMode>, IoError> {
    match doc.get("numeric_mode") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s.parse().map(Some).map_err(|e: crate::scalar::ScalarError| field_err("numeric_mode", e.to_string())),
        Some(other) => Err(field_err("numeric_mode", format!("expected a string, got {other}"))),
    }
}

pub fn economy_from_json<S: Scalar>(doc: &Value) -> Result<Economy<S>, IoError> {
    let obj = doc.as_object().ok_or_else(|| field_err("<root>", "expected an object"))?;
    let agents = as_usize(get(obj, "agents")?, "agents")?;
    let goods = as_usize(get(obj, "goods")?, "goods")?;
    let edges_v = get(obj, "edges")?.as_array().ok_or_else(|| field_err("edges", "expected an array of pairs"))?;
    let mut edges = Vec::with_capacity(edges_v.len());
    for (n, e) in edges_v.iter().enumerate() {
        let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| field_err(format!("edges[{n}]"), "expected [i, j]"))?;
        edges.push((as_usize(&pair[0], &format!("edges[{n}][0]"))?, as_usize(&pair[1], &format!("edges[{n}][1]"))?));
    }
    let endowments = matrix(get(obj, "endowments")?, "endowments")?;
    let utilities = matrix(get(obj, "utilities")?, "utilities")?;
    let bounds = match obj.get("resale_bounds") {
        Some(v) => vector(v, "resale_bounds")?,
        None => vec![S::zero(); agents],
    };
    let kind = match obj.get("resale_kind") {
        None | Some(Value::Null) => ResaleKind::Credit,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| field_err("resale_kind", format!("expected \"credit\" or \"commodity\", got {v}")))?,
    };
    declared_mode(doc)?;
    Ok(Economy::new(agents, goods, edges, endowments, utilities, bounds, kind)?)
}

pub fn economy_to_json<S: Scalar>(economy: &Economy<S>) -> Value {
    let rows = |r: &[Vec<S>]| Value::Array(r.iter().map(|row| Value::Array(row.iter().map(S::to_json).collect())).collect());
    json!({
        "agents": economy.agents(),
        "goods": economy.goods(),
        "edges": economy.edges().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
        "endowments": rows(economy.endowments()),
        "utilities": rows(economy.utilities()),
        "resale_bounds": economy.resale_bounds().iter().map(S::to_json).collect::<Vec<_>>(),
        "resale_kind": economy.resale_kind(),
        "numeric_mode": S::MODE,
    })
}

/// Prices plus a trade plan, as produced by the solver or generators.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<S> {
    pub prices: PriceSystem<S>,
    pub plan: TradePlan<S>,
}

pub fn certificate_from_json<S: Scalar>(doc: &Value) -> Result<Certificate<S>, IoError> {
    let obj = doc.as_object().ok_or_else(|| field_err("<root>", "expected an object"))?;
    let prices = PriceSystem::new(matrix(get(obj, "prices")?, "prices")?);
    let mut plan = TradePlan::new();
    for (name, is_resale) in [("consumption", false), ("resale", true)] {
        let Some(v) = obj.get(name) else { continue };
        let arr = v.as_array().ok_or_else(|| field_err(name, "expected an array of [i, j, k, amount]"))?;
        for (n, t) in arr.iter().enumerate() {
            let field = format!("{name}[{n}]");
            let t = t.as_array().filter(|t| t.len() == 4).ok_or_else(|| field_err(&field, "expected [i, j, k, amount]"))?;
            let i = as_usize(&t[0], &field)?;
            let j = as_usize(&t[1], &field)?;
            let k = as_usize(&t[2], &field)?;
            let amount: S = scalar_at(&t[3], &field)?;
            if is_resale {
                plan.add_resale(i, j, k, amount);
            } else {
                plan.add_consumption(i, j, k, amount);
            }
        }
    }
    Ok(Certificate { prices, plan })
}

pub fn certificate_to_json<S: Scalar>(cert: &Certificate<S>) -> Value {
    let triples = |it: Box<dyn Iterator<Item = ((usize, usize, usize), &S)> + '_>| {
        Value::Array(it.map(|((i, j, k), v)| json!([i, j, k, v.to_json()])).collect())
    };
    json!({
        "prices": cert.prices.rows().iter().map(|r| r.iter().map(S::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "consumption": triples(Box::new(cert.plan.consumption_entries())),
        "resale": triples(Box::new(cert.plan.resale_entries())),
    })
}

/// Checks that a certificate matches an economy's shape and graph.
pub fn check_certificate_shape<S: Scalar>(economy: &Economy<S>, cert: &Certificate<S>) -> Result<(), EconomyError> {
    cert.prices.validate(economy, false)?;
    cert.plan.validate(economy)
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialise");
    s.push('\n');
    s
}
