//! Shared fixtures for the benchmark targets.

use signedq_core::frontend::{parse_query, Query};
use signedq_core::gen::scaled_database;
use signedq_core::storage::Database;

pub const RUNNING_QUERY: &str =
    "Q(x1,x2,x3,x4) :- A(x1,x2,x3), U(x3,x4), !V(x4), !R(x2,x3,x4), !S(x1,x2,x3,x4).";

pub const AGG_QUERY: &str = "@semiring counting\n@default R123 = 1\n@default R23 = 1\n\
Agg(x1, x2) :- R1(x1), R2(x2), R3(x3), !R123(x1, x2, x3), !R23(x2, x3).";

pub fn running_instance(size: usize, seed: u64) -> (Query, Database) {
    let q = parse_query(RUNNING_QUERY).expect("fixture parses");
    let db = scaled_database(&q, size, seed);
    (q, db)
}

pub fn aggregate_instance(size: usize, seed: u64) -> (Query, Database) {
    let q = parse_query(AGG_QUERY).expect("fixture parses");
    let db = scaled_database(&q, size, seed);
    (q, db)
}
