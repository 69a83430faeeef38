//! Values, marked nulls, bag relations and incomplete databases.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::random::Distribution;

/// Identifier of a marked null `⊥ᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NullId(pub u64);

impl fmt::Display for NullId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// An entry of an incomplete relation: a finite real or a marked null.
#[derive(Debug, Clone, Copy)]
pub enum Value {
    Real(f64),
    Null(NullId),
}

impl Value {
    /// Builds a real entry, folding `-0.0` into `0.0` so that equal reals
    /// share one bag key.
    pub fn real(x: f64) -> Result<Value, ModelError> {
        if !x.is_finite() {
            return Err(ModelError::NonFinite(x));
        }
        Ok(Value::Real(if x == 0.0 { 0.0 } else { x }))
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Null(_) => None,
        }
    }

    pub fn as_null(&self) -> Option<NullId> {
        match self {
            Value::Null(id) => Some(*id),
            Value::Real(_) => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null(_))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reals sort before nulls; reals use the IEEE total order.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Real(_), Value::Null(_)) => Ordering::Less,
            (Value::Null(_), Value::Real(_)) => Ordering::Greater,
            (Value::Null(a), Value::Null(b)) => a.cmp(b),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Real(x) => {
                0u8.hash(state);
                x.to_bits().hash(state);
            }
            Value::Null(id) => {
                1u8.hash(state);
                id.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Null(id) => write!(f, "{id}"),
        }
    }
}

impl From<NullId> for Value {
    fn from(id: NullId) -> Self {
        Value::Null(id)
    }
}

pub type Tuple = Vec<Value>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite real {0} cannot be stored in a relation")]
    NonFinite(f64),
    #[error("tuple of arity {found} does not fit relation of arity {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("multiplicity must be at least 1")]
    ZeroMultiplicity,
    #[error("multiplicity overflow")]
    MultiplicityOverflow,
    #[error("null {0} occurs in the database but has no distribution")]
    MissingAnnotation(NullId),
    #[error("null {0} is annotated but does not occur in the database")]
    UnusedAnnotation(NullId),
    #[error("valuation does not assign null {0}")]
    MissingNull(NullId),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// A finite multiset of equal-arity tuples, stored as tuple → multiplicity.
///
/// The entry type is generic so the same container holds complete tuples,
/// tuples with marked nulls, and symbolic tuples of rational functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag<T: Ord> {
    arity: usize,
    rows: BTreeMap<Vec<T>, u64>,
}

pub type BagRelation = Bag<Value>;

impl<T: Ord + Clone> Bag<T> {
    pub fn new(arity: usize) -> Self {
        Bag {
            arity,
            rows: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Adds `mult` occurrences of `tuple`, merging with equal tuples.
    pub fn insert(&mut self, tuple: Vec<T>, mult: u64) -> Result<(), ModelError> {
        if tuple.len() != self.arity {
            return Err(ModelError::ArityMismatch {
                expected: self.arity,
                found: tuple.len(),
            });
        }
        if mult == 0 {
            return Ok(());
        }
        let slot = self.rows.entry(tuple).or_insert(0);
        *slot = slot
            .checked_add(mult)
            .ok_or(ModelError::MultiplicityOverflow)?;
        Ok(())
    }

    pub fn multiplicity(&self, tuple: &[T]) -> u64 {
        self.rows.get(tuple).copied().unwrap_or(0)
    }

    /// Iterates distinct tuples in ascending order with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<T>, u64)> + '_ {
        self.rows.iter().map(|(t, m)| (t, *m))
    }

    /// Number of distinct tuples.
    pub fn distinct(&self) -> usize {
        self.rows.len()
    }

    /// Sum of multiplicities.
    pub fn total(&self) -> u128 {
        self.rows.values().map(|&m| u128::from(m)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Maps every entry through `f`, re-aggregating tuples that collapse.
    pub fn try_map<U, E, F>(&self, mut f: F) -> Result<Bag<U>, E>
    where
        U: Ord + Clone,
        F: FnMut(&T) -> Result<U, E>,
        E: From<ModelError>,
    {
        let mut out = Bag::new(self.arity);
        for (tuple, mult) in self.iter() {
            let mapped = tuple.iter().map(&mut f).collect::<Result<Vec<U>, E>>()?;
            out.insert(mapped, mult)?;
        }
        Ok(out)
    }
}

impl<T: Ord + Clone> FromIterator<(Vec<T>, u64)> for Bag<T> {
    /// Collects rows into a bag whose arity is taken from the first row.
    ///
    /// Panics on ragged input; use [`Bag::insert`] for fallible construction.
    fn from_iter<I: IntoIterator<Item = (Vec<T>, u64)>>(iter: I) -> Self {
        let mut iter = iter.into_iter().peekable();
        let arity = iter.peek().map_or(0, |(t, _)| t.len());
        let mut bag = Bag::new(arity);
        for (t, m) in iter {
            bag.insert(t, m).expect("rows of one bag must share an arity");
        }
        bag
    }
}

impl BagRelation {
    pub fn nulls(&self) -> impl Iterator<Item = NullId> + '_ {
        self.rows.keys().flatten().filter_map(Value::as_null)
    }

    pub fn is_complete(&self) -> bool {
        self.nulls().next().is_none()
    }
}

/// A valuation: an assignment of reals to marked nulls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Valuation(BTreeMap<NullId, f64>);

impl Valuation {
    pub fn new() -> Self {
        Valuation(BTreeMap::new())
    }

    pub fn insert(&mut self, id: NullId, x: f64) {
        self.0.insert(id, x);
    }

    pub fn get(&self, id: NullId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NullId, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn domain(&self) -> BTreeSet<NullId> {
        self.0.keys().copied().collect()
    }

    /// Replaces a null by its assigned real; reals pass through.
    pub fn apply(&self, value: &Value) -> Result<Value, ModelError> {
        match value {
            Value::Real(_) => Ok(*value),
            Value::Null(id) => {
                let x = self.get(*id).ok_or(ModelError::MissingNull(*id))?;
                Value::real(x)
            }
        }
    }
}

impl FromIterator<(NullId, f64)> for Valuation {
    fn from_iter<I: IntoIterator<Item = (NullId, f64)>>(iter: I) -> Self {
        Valuation(iter.into_iter().collect())
    }
}

/// Named bag relations over reals and marked nulls, together with the
/// distribution attached to every null that occurs in them.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteDatabase {
    relations: BTreeMap<String, BagRelation>,
    annotations: BTreeMap<NullId, Distribution>,
}

impl IncompleteDatabase {
    /// Builds a database, requiring a one-to-one match between the nulls
    /// that occur in the relations and the annotated nulls.
    pub fn new(
        relations: BTreeMap<String, BagRelation>,
        annotations: BTreeMap<NullId, Distribution>,
    ) -> Result<Self, ModelError> {
        let db = IncompleteDatabase {
            relations,
            annotations,
        };
        let used = db.nulls();
        if let Some(id) = used.iter().find(|id| !db.annotations.contains_key(id)) {
            return Err(ModelError::MissingAnnotation(*id));
        }
        if let Some(id) = db.annotations.keys().find(|id| !used.contains(id)) {
            return Err(ModelError::UnusedAnnotation(*id));
        }
        for dist in db.annotations.values() {
            dist.validate()?;
        }
        Ok(db)
    }

    /// A database without nulls.
    pub fn complete(relations: BTreeMap<String, BagRelation>) -> Result<Self, ModelError> {
        Self::new(relations, BTreeMap::new())
    }

    pub fn relation(&self, name: &str) -> Option<&BagRelation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> &BTreeMap<String, BagRelation> {
        &self.relations
    }

    pub fn annotations(&self) -> &BTreeMap<NullId, Distribution> {
        &self.annotations
    }

    pub fn distribution(&self, id: NullId) -> Option<&Distribution> {
        self.annotations.get(&id)
    }

    /// Relation name → arity.
    pub fn schema(&self) -> BTreeMap<String, usize> {
        self.relations
            .iter()
            .map(|(name, rel)| (name.clone(), rel.arity()))
            .collect()
    }

    /// `Null(D)`: every null occurring in some relation.
    pub fn nulls(&self) -> BTreeSet<NullId> {
        self.relations.values().flat_map(BagRelation::nulls).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.relations.values().all(BagRelation::is_complete)
    }
}

pub fn nulls_of(db: &IncompleteDatabase) -> BTreeSet<NullId> {
    db.nulls()
}

/// Replaces every null of `db` by its image under `v`, merging tuples that
/// become equal.
pub fn apply_valuation(
    v: &Valuation,
    db: &IncompleteDatabase,
) -> Result<IncompleteDatabase, ModelError> {
    let relations = db
        .relations
        .iter()
        .map(|(name, rel)| Ok((name.clone(), rel.try_map(|x| v.apply(x))?)))
        .collect::<Result<BTreeMap<_, _>, ModelError>>()?;
    Ok(IncompleteDatabase {
        relations,
        annotations: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64) -> Value {
        Value::real(x).unwrap()
    }

    fn n(i: u64) -> Value {
        Value::Null(NullId(i))
    }

    fn single(rel: BagRelation, annotations: BTreeMap<NullId, Distribution>) -> IncompleteDatabase {
        IncompleteDatabase::new([("R".to_string(), rel)].into(), annotations).unwrap()
    }

    fn uniform() -> Distribution {
        Distribution::Uniform { lo: 0.0, hi: 2.0 }
    }

    #[test]
    fn nulls_of_scans_all_entries() {
        let rel: BagRelation = [(vec![r(1.0), n(1)], 1), (vec![r(1.0), r(1.0)], 1)]
            .into_iter()
            .collect();
        let db = single(rel, [(NullId(1), uniform())].into());
        assert_eq!(nulls_of(&db), [NullId(1)].into());

        let complete: BagRelation = [(vec![r(1.0)], 3)].into_iter().collect();
        assert!(nulls_of(&single(complete, BTreeMap::new())).is_empty());
    }

    #[test]
    fn intro_join_database_has_one_null() {
        let rel_r: BagRelation = [(vec![r(1.0), n(0)], 1)].into_iter().collect();
        let rel_s: BagRelation = [(vec![r(1.0), r(2.0)], 1), (vec![r(1.0), r(3.0)], 1)]
            .into_iter()
            .collect();
        let db = IncompleteDatabase::new(
            [("R".into(), rel_r), ("S".into(), rel_s)].into(),
            [(NullId(0), uniform())].into(),
        )
        .unwrap();
        assert_eq!(db.nulls(), [NullId(0)].into());
    }

    #[test]
    fn valuation_substitutes_and_merges() {
        let rel: BagRelation = [(vec![r(1.0), n(1)], 1)].into_iter().collect();
        let db = single(rel, [(NullId(1), uniform())].into());
        let v: Valuation = [(NullId(1), 3.0)].into_iter().collect();
        let out = apply_valuation(&v, &db).unwrap();
        assert_eq!(out.relation("R").unwrap().multiplicity(&[r(1.0), r(3.0)]), 1);
        assert!(out.is_complete());

        let rel: BagRelation = [(vec![r(1.0), n(1)], 1), (vec![r(1.0), r(1.0)], 1)]
            .into_iter()
            .collect();
        let db = single(rel.clone(), [(NullId(1), uniform())].into());
        let v: Valuation = [(NullId(1), 1.0)].into_iter().collect();
        let out = apply_valuation(&v, &db).unwrap();
        let got = out.relation("R").unwrap();

        // per-occurrence substitution, merged afterwards by hand
        let mut naive: Vec<Vec<Value>> = Vec::new();
        for (t, m) in rel.iter() {
            for _ in 0..m {
                naive.push(t.iter().map(|x| v.apply(x).unwrap()).collect());
            }
        }
        assert_eq!(naive.len(), 2);
        assert!(naive.iter().all(|t| t == &vec![r(1.0), r(1.0)]));
        assert_eq!(got.multiplicity(&[r(1.0), r(1.0)]), 2);
        assert_eq!(got.distinct(), 1);
    }

    #[test]
    fn empty_valuation_on_complete_database_is_identity() {
        let rel: BagRelation = [(vec![r(2.0), r(5.0)], 4)].into_iter().collect();
        let db = single(rel, BTreeMap::new());
        assert_eq!(apply_valuation(&Valuation::new(), &db).unwrap(), db);
    }

    #[test]
    fn missing_null_in_valuation() {
        let rel: BagRelation = [(vec![n(4)], 1)].into_iter().collect();
        let db = single(rel, [(NullId(4), uniform())].into());
        assert_eq!(
            apply_valuation(&Valuation::new(), &db),
            Err(ModelError::MissingNull(NullId(4)))
        );
    }

    #[test]
    fn annotation_map_must_match_nulls() {
        let rel: BagRelation = [(vec![n(1)], 1)].into_iter().collect();
        let missing = IncompleteDatabase::new([("R".into(), rel.clone())].into(), BTreeMap::new());
        assert_eq!(missing, Err(ModelError::MissingAnnotation(NullId(1))));
        let extra = IncompleteDatabase::new(
            [("R".into(), rel)].into(),
            [(NullId(1), uniform()), (NullId(2), uniform())].into(),
        );
        assert_eq!(extra, Err(ModelError::UnusedAnnotation(NullId(2))));
    }

    #[test]
    fn bag_rejects_wrong_arity_and_overflow() {
        let mut bag = BagRelation::new(2);
        assert!(matches!(
            bag.insert(vec![r(1.0)], 1),
            Err(ModelError::ArityMismatch { .. })
        ));
        bag.insert(vec![r(1.0), r(2.0)], u64::MAX).unwrap();
        assert_eq!(
            bag.insert(vec![r(1.0), r(2.0)], 1),
            Err(ModelError::MultiplicityOverflow)
        );
    }

    #[test]
    fn negative_zero_shares_a_key_with_zero() {
        let mut bag = BagRelation::new(1);
        bag.insert(vec![r(-0.0)], 1).unwrap();
        bag.insert(vec![r(0.0)], 1).unwrap();
        assert_eq!(bag.distinct(), 1);
        assert!(Value::real(f64::NAN).is_err());
    }
}
