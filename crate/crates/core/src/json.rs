//! JSON forms of databases, interval tuples and conditional worlds.
//!
//! Database: `{"relations": {"R": {"arity": 2, "tuples": [[1, {"null": 1}]],
//! "multiplicities": [1]}}, "nulls": {"1": {"kind": "normal", "mu": 2.0,
//! "sigma": 0.5}}}`. Multiplicities default to 1.
//!
//! Interval tuple: `[{"lo": "-inf", "hi": "n1 + 1", "lo_closed": false,
//! "hi_closed": true}]`; endpoints are numbers, expression text, `"-inf"` or
//! `"+inf"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::condworld::{ConditionSet, ConditionalDatabase, ConditionalWorld};
use crate::model::{Bag, BagRelation, IncompleteDatabase, ModelError, NullId, Value};
use crate::query::parser::{parse_expr, ParseError};
use crate::query::{Bound, IntervalSpec, IntervalTuple};
use crate::random::Distribution;
use crate::ratfn::RatFn;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad expression `{text}`: {source}")]
    Expr { text: String, source: ParseError },
    #[error("relation {relation}: {message}")]
    Relation { relation: String, message: String },
    #[error("bad null id `{0}`")]
    NullId(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Null { null: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationJson<T> {
    arity: usize,
    tuples: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multiplicities: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatabaseJson {
    relations: BTreeMap<String, RelationJson<Entry>>,
    #[serde(default)]
    nulls: BTreeMap<String, Distribution>,
}

fn bag_from<T: Ord + Clone, U>(
    name: &str,
    rel: RelationJson<U>,
    mut entry: impl FnMut(U) -> Result<T, JsonError>,
) -> Result<Bag<T>, JsonError> {
    let bad = |message: String| JsonError::Relation {
        relation: name.to_string(),
        message,
    };
    let mults = rel.multiplicities.unwrap_or_else(|| vec![1; rel.tuples.len()]);
    if mults.len() != rel.tuples.len() {
        return Err(bad(format!("{} tuples but {} multiplicities", rel.tuples.len(), mults.len())));
    }
    let mut bag = Bag::new(rel.arity);
    for (row, m) in rel.tuples.into_iter().zip(mults) {
        let row = row.into_iter().map(&mut entry).collect::<Result<Vec<T>, _>>()?;
        bag.insert(row, m).map_err(|e| bad(e.to_string()))?;
    }
    Ok(bag)
}

fn bag_to<T: Ord + Clone, U>(bag: &Bag<T>, entry: impl Fn(&T) -> U) -> RelationJson<U> {
    let (tuples, mults) = bag.iter().map(|(row, m)| (row.iter().map(&entry).collect(), m)).unzip();
    RelationJson {
        arity: bag.arity(),
        tuples,
        multiplicities: Some(mults),
    }
}

fn parse_null_id(key: &str) -> Result<NullId, JsonError> {
    let digits = key.strip_prefix('n').unwrap_or(key);
    digits.parse().map(NullId).map_err(|_| JsonError::NullId(key.to_string()))
}

pub fn database_from_json(text: &str) -> Result<IncompleteDatabase, JsonError> {
    let raw: DatabaseJson = serde_json::from_str(text)?;
    let relations = raw
        .relations
        .into_iter()
        .map(|(name, rel)| {
            let bag = bag_from(&name, rel, |e| match e {
                Entry::Real(x) => Ok(Value::real(x)?),
                Entry::Null { null } => Ok(Value::Null(NullId(null))),
            })?;
            Ok((name, bag))
        })
        .collect::<Result<BTreeMap<String, BagRelation>, JsonError>>()?;
    let nulls = raw
        .nulls
        .into_iter()
        .map(|(k, d)| Ok((parse_null_id(&k)?, d)))
        .collect::<Result<_, JsonError>>()?;
    Ok(IncompleteDatabase::new(relations, nulls)?)
}

pub fn database_to_json(db: &IncompleteDatabase) -> Json {
    let raw = DatabaseJson {
        relations: db
            .relations()
            .iter()
            .map(|(name, rel)| {
                let rel = bag_to(rel, |v| match v {
                    Value::Real(x) => Entry::Real(*x),
                    Value::Null(id) => Entry::Null { null: id.0 },
                });
                (name.clone(), rel)
            })
            .collect(),
        nulls: db.annotations().iter().map(|(id, d)| (id.0.to_string(), *d)).collect(),
    };
    serde_json::to_value(raw).expect("database serializes")
}

pub fn complete_relation_to_json(rel: &BagRelation) -> Json {
    let rel = bag_to(rel, |v| match v {
        Value::Real(x) => json!(x),
        Value::Null(id) => json!({ "null": id.0 }),
    });
    serde_json::to_value(rel).expect("relation serializes")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EndpointJson {
    Number(f64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct IntervalJson {
    lo: EndpointJson,
    hi: EndpointJson,
    #[serde(default)]
    lo_closed: bool,
    #[serde(default)]
    hi_closed: bool,
}

fn expr(text: &str) -> Result<crate::expr::RatExpr, JsonError> {
    parse_expr(text).map_err(|source| JsonError::Expr {
        text: text.to_string(),
        source,
    })
}

fn bound_from(e: EndpointJson) -> Result<Bound, JsonError> {
    match e {
        EndpointJson::Number(x) => Ok(Bound::Finite(crate::expr::RatExpr::Const(x))),
        EndpointJson::Text(t) => match t.trim() {
            "-inf" => Ok(Bound::NegInf),
            "+inf" | "inf" => Ok(Bound::PosInf),
            other => Ok(Bound::Finite(expr(other)?)),
        },
    }
}

fn bound_to(b: &Bound) -> EndpointJson {
    match b {
        Bound::NegInf => EndpointJson::Text("-inf".into()),
        Bound::PosInf => EndpointJson::Text("+inf".into()),
        Bound::Finite(crate::expr::RatExpr::Const(x)) => EndpointJson::Number(*x),
        Bound::Finite(e) => EndpointJson::Text(e.to_string()),
    }
}

pub fn intervals_from_json(text: &str) -> Result<IntervalTuple, JsonError> {
    let raw: Vec<IntervalJson> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|i| {
            let lo = bound_from(i.lo)?;
            let hi = bound_from(i.hi)?;
            if lo == Bound::PosInf || hi == Bound::NegInf {
                return Err(JsonError::Invalid("interval endpoints are the wrong way round".into()));
            }
            Ok(IntervalSpec::new(lo, i.lo_closed, hi, i.hi_closed))
        })
        .collect()
}

pub fn intervals_to_json(a: &[IntervalSpec]) -> Json {
    let raw: Vec<IntervalJson> = a
        .iter()
        .map(|spec| IntervalJson {
            lo: bound_to(spec.lower()),
            hi: bound_to(spec.upper()),
            lo_closed: spec.lower_closed(),
            hi_closed: spec.upper_closed(),
        })
        .collect();
    serde_json::to_value(raw).expect("intervals serialize")
}

#[derive(Debug, Serialize, Deserialize)]
struct PairJson {
    relations: BTreeMap<String, RelationJson<String>>,
    condition: Vec<String>,
    #[serde(default)]
    infeasible: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldJson {
    pairs: Vec<PairJson>,
    #[serde(default)]
    nulls: BTreeMap<String, Distribution>,
    #[serde(default)]
    pair_count: usize,
    #[serde(default)]
    pruned_count: usize,
}

/// Every pair of `world`; pairs with a syntactically unsatisfiable
/// condition are flagged `infeasible` and counted in `pruned_count`.
pub fn world_to_json(world: &ConditionalWorld) -> Json {
    let pairs: Vec<PairJson> = world
        .pairs
        .iter()
        .map(|p| PairJson {
            relations: p
                .relations
                .iter()
                .map(|(name, bag)| (name.clone(), bag_to(bag, ToString::to_string)))
                .collect(),
            condition: p.condition.members().map(ToString::to_string).collect(),
            infeasible: p.condition.is_contradictory(),
        })
        .collect();
    let raw = WorldJson {
        pair_count: pairs.len(),
        pruned_count: pairs.iter().filter(|p| p.infeasible).count(),
        pairs,
        nulls: world.annotations.iter().map(|(id, d)| (id.0.to_string(), *d)).collect(),
    };
    serde_json::to_value(raw).expect("world serializes")
}

fn ratfn(text: &str) -> Result<RatFn, JsonError> {
    RatFn::from_expr(&expr(text)?).map_err(|e| JsonError::Invalid(format!("`{text}`: {e}")))
}

pub fn world_from_json(text: &str) -> Result<ConditionalWorld, JsonError> {
    let raw: WorldJson = serde_json::from_str(text)?;
    let pairs = raw
        .pairs
        .into_iter()
        .map(|p| {
            let relations = p
                .relations
                .into_iter()
                .map(|(name, rel)| {
                    let bag = bag_from(&name, rel, |t| ratfn(&t))?;
                    Ok((name, bag))
                })
                .collect::<Result<_, JsonError>>()?;
            let condition = ConditionSet::new(p.condition.iter().map(|t| ratfn(t)).collect::<Result<Vec<_>, _>>()?);
            Ok(ConditionalDatabase { relations, condition })
        })
        .collect::<Result<_, JsonError>>()?;
    let annotations = raw
        .nulls
        .into_iter()
        .map(|(k, d)| Ok((parse_null_id(&k)?, d)))
        .collect::<Result<_, JsonError>>()?;
    Ok(ConditionalWorld { pairs, annotations })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DB: &str = r#"{"relations": {"R": {"arity": 2, "tuples": [[1, 1], [1, {"null": 1}]], "multiplicities": [1, 2]}},
        "nulls": {"1": {"kind": "normal", "mu": 2.0, "sigma": 0.5}}}"#;

    #[test]
    fn database_round_trip() {
        let db = database_from_json(DB).unwrap();
        let r = db.relation("R").unwrap();
        assert_eq!(r.multiplicity(&[Value::Real(1.0), Value::Null(NullId(1))]), 2);
        let back = database_from_json(&database_to_json(&db).to_string()).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn database_errors() {
        let missing = r#"{"relations": {"R": {"arity": 1, "tuples": [[{"null": 2}]]}}}"#;
        assert!(matches!(database_from_json(missing), Err(JsonError::Model(ModelError::MissingAnnotation(NullId(2))))));
        let ragged = r#"{"relations": {"R": {"arity": 2, "tuples": [[1]]}}}"#;
        assert!(matches!(database_from_json(ragged), Err(JsonError::Relation { .. })));
        let bad_dist = r#"{"relations": {"R": {"arity": 1, "tuples": [[{"null": 1}]]}},
            "nulls": {"1": {"kind": "uniform", "l": 2, "u": 1}}}"#;
        assert!(database_from_json(bad_dist).is_err());
        assert!(matches!(database_from_json("{"), Err(JsonError::Syntax(_))));
    }

    #[test]
    fn intervals_round_trip() {
        let text = r#"[{"lo": "-inf", "hi": "n1 + 1", "hi_closed": true}, {"lo": 2.5, "hi": 3.5, "lo_closed": true, "hi_closed": true}]"#;
        let a = intervals_from_json(text).unwrap();
        assert_eq!(a[0].lower(), &Bound::NegInf);
        assert!(a[0].upper_closed() && !a[0].lower_closed());
        assert_eq!(a[1], IntervalSpec::closed(crate::expr::RatExpr::Const(2.5), crate::expr::RatExpr::Const(3.5)));
        assert_eq!(intervals_from_json(&intervals_to_json(&a).to_string()).unwrap(), a);
        assert!(intervals_from_json(r#"[{"lo": "+inf", "hi": 1}]"#).is_err());
    }

    #[test]
    fn world_round_trip() {
        use crate::condworld::{lift, world_of, LiftOptions};
        let db = database_from_json(DB).unwrap();
        let q = crate::query::parse("select($1 < $2, R)").unwrap();
        let world = lift(&q, &world_of(&db), LiftOptions::default()).unwrap();
        let j = world_to_json(&world);
        assert_eq!(j["pair_count"], 2);
        assert_eq!(j["pruned_count"], 0);
        assert_eq!(world_from_json(&j.to_string()).unwrap(), world);
    }
}
