//! Query answering over incomplete numerical databases whose marked nulls
//! carry continuous distributions.
//!
//! * [`model`]: values, nulls, bags, databases, valuations
//! * [`random`]: distributions and counter-based random streams
//! * [`expr`] and [`ratfn`]: rational expressions and their canonical forms
//! * [`query`]: the query language, parser, arity checker and desugarer
//! * [`eval`]: bag-semantics evaluation and interval consistency counting
//! * [`approx`]: sampling-based likelihood estimation
//! * [`rewrite`]: compiling a sampling run into a single query
//! * [`condworld`]: conditional worlds and lifted evaluation
//! * [`oracle`]: exact and grid reference likelihoods for small instances
//! * [`json`]: file formats

pub mod approx;
pub mod condworld;
pub mod eval;
pub mod expr;
pub mod json;
pub mod model;
pub mod oracle;
pub mod query;
pub mod random;
pub mod ratfn;
pub mod rewrite;

pub use eval::{count_consistent, eval, EvalError, Mode};
pub use expr::RatExpr;
pub use model::{Bag, BagRelation, IncompleteDatabase, NullId, Valuation, Value};
pub use query::{parse, IntervalSpec, IntervalTuple, Query};
pub use random::Distribution;
