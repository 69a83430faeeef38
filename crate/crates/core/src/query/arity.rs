//! Output-arity inference and position checking.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Condition, Query};

/// Relation name → arity.
pub type Schema = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{node}: position ${position} is outside arity {arity}")]
    PositionOutOfRange {
        node: String,
        position: usize,
        arity: usize,
    },
    #[error("{node}: operands have arities {left} and {right}")]
    ArityMismatch {
        node: String,
        left: usize,
        right: usize,
    },
}

/// A query tree annotated with the output arity of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArityTree {
    pub arity: usize,
    pub children: Vec<ArityTree>,
}

fn label(q: &Query) -> String {
    let text = q.to_string();
    if text.chars().count() > 60 {
        let head: String = text.chars().take(57).collect();
        format!("`{head}...`")
    } else {
        format!("`{text}`")
    }
}

fn check_positions(
    q: &Query,
    positions: impl IntoIterator<Item = usize>,
    arity: usize,
) -> Result<(), TypeError> {
    for position in positions {
        if position == 0 || position > arity {
            return Err(TypeError::PositionOutOfRange {
                node: label(q),
                position,
                arity,
            });
        }
    }
    Ok(())
}

fn check_condition(q: &Query, c: &Condition, arity: usize) -> Result<(), TypeError> {
    check_positions(q, c.positions(), arity)
}

pub fn check_arity(q: &Query, schema: &Schema) -> Result<ArityTree, TypeError> {
    let children = q
        .children()
        .into_iter()
        .map(|c| check_arity(c, schema))
        .collect::<Result<Vec<_>, _>>()?;
    let child = |i: usize| children[i].arity;
    let arity = match q {
        Query::Base(name) => *schema
            .get(name)
            .ok_or_else(|| TypeError::UnknownRelation(name.clone()))?,
        Query::Literal(lit) => lit.arity,
        Query::Project(positions, _) => {
            check_positions(q, positions.iter().copied(), child(0))?;
            positions.len()
        }
        Query::Select(c, _) => {
            check_condition(q, c, child(0))?;
            child(0)
        }
        Query::Product(..) => child(0) + child(1),
        Query::UnionAll(..) | Query::ExceptAll(..) => {
            if child(0) != child(1) {
                return Err(TypeError::ArityMismatch {
                    node: label(q),
                    left: child(0),
                    right: child(1),
                });
            }
            child(0)
        }
        Query::Apply(f, _) => {
            check_positions(q, f.attrs(), child(0))?;
            child(0) + 1
        }
        Query::SumGroup { group, sum, .. } => {
            check_positions(q, group.iter().copied().chain([*sum]), child(0))?;
            group.len() + 1
        }
        Query::Count { group, .. } => {
            check_positions(q, group.iter().copied(), child(0))?;
            group.len() + 1
        }
        Query::Avg { group, attr, .. }
        | Query::Min { group, attr, .. }
        | Query::Max { group, attr, .. } => {
            check_positions(q, group.iter().copied().chain([*attr]), child(0))?;
            group.len() + 1
        }
        Query::Dedup(_) => child(0),
    };
    Ok(ArityTree { arity, children })
}

/// Output arity of `q`, checking every node along the way.
pub fn arity_of(q: &Query, schema: &Schema) -> Result<usize, TypeError> {
    check_arity(q, schema).map(|t| t.arity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;

    fn schema() -> Schema {
        [("R".to_string(), 2), ("S".to_string(), 1), ("T".to_string(), 3)].into()
    }

    fn arity(text: &str) -> Result<usize, TypeError> {
        arity_of(&parse(text).unwrap(), &schema())
    }

    #[test]
    fn product_adds_arities() {
        assert_eq!(arity("R × S"), Ok(3));
    }

    #[test]
    fn union_requires_equal_arities() {
        assert!(matches!(arity("union(R, T)"), Err(TypeError::ArityMismatch { .. })));
    }

    #[test]
    fn grouping_on_nothing_yields_one_column() {
        assert_eq!(arity("sum[; $1](S)"), Ok(1));
        assert_eq!(arity("count[$1, $2](R)"), Ok(3));
        assert_eq!(arity("apply($1 + $2, R)"), Ok(3));
        assert_eq!(arity("project[](R)"), Ok(0));
    }

    #[test]
    fn positions_are_checked() {
        assert!(matches!(
            arity("select($1 < $3, R)"),
            Err(TypeError::PositionOutOfRange { position: 3, .. })
        ));
        assert!(matches!(arity("apply($4, T)"), Err(TypeError::PositionOutOfRange { .. })));
        assert_eq!(arity("Q"), Err(TypeError::UnknownRelation("Q".into())));
    }

    #[test]
    fn tree_mirrors_query_shape() {
        let tree = check_arity(&parse("union(project[$2](R), S)").unwrap(), &schema()).unwrap();
        assert_eq!(tree.arity, 1);
        assert_eq!(tree.children.len(), 2);
        assert_eq!(tree.children[0].children[0].arity, 2);
    }
}
