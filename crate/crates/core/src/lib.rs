//! Query evaluation for conjunctive queries with negation: linear-time
//! preprocessing with constant-delay enumeration for free-connex
//! signed-acyclic queries, and the full semiring-aggregation pipeline with
//! range-sum oracles, plus brute-force reference evaluators, an
//! inclusion-exclusion counter and difference-of-queries evaluation.

pub mod algebra;
pub mod cq;
pub mod diff;
pub mod faq;
pub mod frontend;
pub mod gen;
pub mod hypergraph;
pub mod oracle;
pub mod rangesum;
pub mod storage;

pub use algebra::{Semiring, SemiringKind, Value};
pub use frontend::{parse_program, parse_query, Query};
pub use hypergraph::{EliminationSequence, SignedHypergraph, SignedLeafWitness, Vertex};
pub use storage::{Database, Factor, Relation, Schema, Table, Tuple};
