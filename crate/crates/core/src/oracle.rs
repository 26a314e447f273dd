//! Brute-force reference evaluators and the inclusion-exclusion counter.
//! Everything here enumerates assignments over active domains and is the
//! ground truth the engines are tested against; none of it is a production
//! path.

use crate::algebra::{AlgebraError, Semiring, Value};
use crate::faq::{self, evaluate, Expr, FactorStore, FaqError};
use crate::frontend::Query;
use crate::hypergraph::{HypergraphError, Vertex};
use crate::storage::{project_tuple, Database, Table, Tuple};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("assignment space of {0} exceeds the brute-force guard of {1}")]
    TooLarge(u128, u64),
    #[error("query is not signed-acyclic")]
    NotSignedAcyclic,
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Faq(#[from] FaqError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("no table loaded for atom {0}")]
    MissingTable(String),
}

pub const BRUTE_FORCE_GUARD: u64 = 10_000_000;

/// Active domain per vertex: every value appearing in a column bound to the
/// variable, in any of the query's tables.
pub fn active_domains(q: &Query, db: &Database) -> Result<Vec<Vec<u32>>, OracleError> {
    let n = q.var_names.len();
    let mut doms: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    for atom in &q.atoms {
        let table = db
            .tables
            .get(&atom.name)
            .ok_or_else(|| OracleError::MissingTable(atom.name.clone()))?;
        let cols: Vec<Vertex> = atom.vars.iter().map(|v| q.var_ids[v]).collect();
        let mut feed = |row: &Tuple| {
            for (c, &v) in cols.iter().enumerate() {
                doms[v as usize].insert(row[c]);
            }
        };
        match table {
            Table::Rel(r) => r.rows().iter().for_each(&mut feed),
            Table::Fac(f) => f.keys().iter().for_each(&mut feed),
        }
    }
    Ok(doms.into_iter().map(|d| d.into_iter().collect()).collect())
}

fn guard_product(doms: &[Vec<u32>]) -> Result<(), OracleError> {
    let mut total: u128 = 1;
    for d in doms {
        total = total.saturating_mul(d.len().max(1) as u128);
        if total > BRUTE_FORCE_GUARD as u128 {
            return Err(OracleError::TooLarge(total, BRUTE_FORCE_GUARD));
        }
    }
    Ok(())
}

/// Walks every assignment over the given domains, invoking the callback with
/// a dense assignment vector.
fn for_each_assignment<F>(doms: &[Vec<u32>], mut f: F) -> Result<(), OracleError>
where
    F: FnMut(&[Option<u32>]) -> Result<(), OracleError>,
{
    guard_product(doms)?;
    let n = doms.len();
    if doms.iter().any(|d| d.is_empty()) && n > 0 {
        return Ok(());
    }
    let mut idx = vec![0usize; n];
    let mut assign: Vec<Option<u32>> = (0..n).map(|i| doms[i].first().copied()).collect();
    loop {
        f(&assign)?;
        let mut d = 0;
        loop {
            if d == n {
                return Ok(());
            }
            idx[d] += 1;
            if idx[d] < doms[d].len() {
                assign[d] = Some(doms[d][idx[d]]);
                break;
            }
            idx[d] = 0;
            assign[d] = Some(doms[d][0]);
            d += 1;
        }
    }
}

/// All answers of a query with negation by assignment enumeration: keep the
/// valuations satisfying every positive atom and no negative atom, project
/// onto the head.
pub fn brute_force_cq(q: &Query, db: &Database) -> Result<BTreeSet<Tuple>, OracleError> {
    let doms = active_domains(q, db)?;
    let atoms: Vec<(Vec<usize>, bool, &Table)> = q
        .atoms
        .iter()
        .map(|a| {
            let cols: Vec<usize> = a.vars.iter().map(|v| q.var_ids[v] as usize).collect();
            let table = db.tables.get(&a.name).unwrap();
            (cols, a.negated, table)
        })
        .collect();
    let head_cols: Vec<usize> = q.head_vars.iter().map(|v| q.var_ids[v] as usize).collect();
    let mut out = BTreeSet::new();
    for_each_assignment(&doms, |assign| {
        let full: Tuple = assign.iter().map(|v| v.unwrap()).collect();
        let ok = atoms.iter().all(|(cols, negated, table)| {
            let t = project_tuple(&full, cols);
            let hit = match table {
                Table::Rel(r) => r.contains(&t),
                Table::Fac(f) => f.contains(&t),
            };
            hit != *negated
        });
        if ok {
            out.insert(project_tuple(&full, &head_cols));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Plus-fold of an expression over all assignments, grouped by the free
/// variables; zero entries are dropped. The expression's own evaluator does
/// the pointwise work, the fold here is independent of the engine pipeline.
pub fn brute_force_expr(
    expr: &Expr,
    store: &FactorStore,
    s: &Semiring,
    doms: &[Vec<u32>],
    free: &[Vertex],
) -> Result<HashMap<Tuple, Value>, OracleError> {
    let free_cols: Vec<usize> = free.iter().map(|&v| v as usize).collect();
    let mut acc: HashMap<Tuple, Value> = HashMap::new();
    for_each_assignment(doms, |assign| {
        let v = evaluate(expr, store, s, assign)?;
        let key: Tuple = free_cols.iter().map(|&c| assign[c].unwrap()).collect();
        match acc.get_mut(&key) {
            Some(cur) => *cur = s.plus(cur, &v)?,
            None => {
                acc.insert(key, v);
            }
        }
        Ok(())
    })?;
    acc.retain(|_, v| !s.is_zero(v));
    Ok(acc)
}

/// Reference for weighted enumeration: exhaustive fold over the flat form of
/// the query, keyed in head-variable order.
pub fn brute_force_faq(q: &Query, db: &Database) -> Result<HashMap<Tuple, Value>, OracleError> {
    let (expr, store) = faq::faq_to_nestfaq(q, db)?;
    let doms = active_domains(q, db)?;
    let free: Vec<Vertex> = q.head_vars.iter().map(|v| q.var_ids[v]).collect();
    brute_force_expr(&expr, &store, &q.semiring, &doms, &free)
}

/// Number of satisfying valuations of the query body via the
/// inclusion-exclusion principle: an alternating sum of negation-free counts,
/// each computed by the counting-semiring aggregation pipeline.
pub fn count_inclusion_exclusion(q: &Query, db: &Database) -> Result<i64, OracleError> {
    if !q.hypergraph.is_signed_acyclic_definition()? {
        return Err(OracleError::NotSignedAcyclic);
    }
    let s = Semiring::instance("counting").unwrap();
    let neg_atoms: Vec<usize> = (0..q.atoms.len()).filter(|&i| q.atoms[i].negated).collect();
    let mut total: i64 = 0;
    for subset in 0u64..(1 << neg_atoms.len()) {
        let mut store = FactorStore::new();
        let mut leaves = Vec::new();
        let mut sets = Vec::new();
        for (i, atom) in q.atoms.iter().enumerate() {
            let include = !atom.negated
                || subset & (1 << neg_atoms.iter().position(|&j| j == i).unwrap()) != 0;
            if !include {
                continue;
            }
            let rel = db
                .relation(&atom.name)
                .ok_or_else(|| OracleError::MissingTable(atom.name.clone()))?;
            let schema =
                crate::storage::Schema::new(atom.vars.iter().map(|v| q.var_ids[v]).collect());
            let mut fac = crate::storage::Factor::new(schema, None);
            for row in rel.rows() {
                fac.insert(row.clone(), s.one()).map_err(FaqError::from)?;
            }
            let set: BTreeSet<Vertex> = atom.vars.iter().map(|v| q.var_ids[v]).collect();
            sets.push(set);
            leaves.push(Expr::Leaf(store.add(atom.name.clone(), fac)));
        }
        let h = crate::hypergraph::SignedHypergraph::new(
            0..q.var_names.len() as Vertex,
            sets,
            Vec::new(),
        )?;
        let order = h
            .elimination_sequence(None)
            .ok_or(OracleError::NotSignedAcyclic)?;
        let mut ops = 0;
        let expr = faq::eliminate(
            Expr::Times(leaves),
            &mut store,
            &s,
            &order.order,
            0,
            crate::rangesum::BackendChoice::Auto,
            &mut ops,
        )?;
        let count = match evaluate(&expr, &store, &s, &[])? {
            Value::Int(c) => c,
            other => {
                return Err(OracleError::Algebra(AlgebraError::TypeMismatch(
                    other, "counting",
                )))
            }
        };
        let sign = if subset.count_ones() % 2 == 0 { 1 } else { -1 };
        total = total
            .checked_add(sign * count)
            .ok_or(OracleError::Algebra(AlgebraError::Overflow))?;
    }
    Ok(total)
}

/// Full-valuation count of a query with negation through the counting
/// pipeline directly (zero-weight rows encode the negated tables). The third
/// leg of the counting cross-check.
pub fn count_via_counting_faq(q: &Query, db: &Database) -> Result<i64, OracleError> {
    let s = Semiring::instance("counting").unwrap();
    let (expr, mut store) = faq::cq_to_counting_expr(q, db)?;
    let order = q
        .hypergraph
        .elimination_sequence(None)
        .ok_or(OracleError::NotSignedAcyclic)?;
    let mut ops = 0;
    let expr = faq::eliminate(
        expr,
        &mut store,
        &s,
        &order.order,
        0,
        crate::rangesum::BackendChoice::Auto,
        &mut ops,
    )?;
    match evaluate(&expr, &store, &s, &[])? {
        Value::Int(c) => Ok(c),
        other => Err(OracleError::Algebra(AlgebraError::TypeMismatch(
            other, "counting",
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::tests::{running_database, RUNNING_QUERY};
    use crate::frontend::parse_query;

    #[test]
    fn brute_force_running_example_has_five_answers() {
        let q = parse_query(RUNNING_QUERY).unwrap();
        let db = running_database(&q);
        let answers = brute_force_cq(&q, &db).unwrap();
        assert_eq!(answers.len(), 5);
    }

    #[test]
    fn empty_positive_relation_gives_empty_result() {
        let q = parse_query("Q(x) :- A(x).").unwrap();
        let mut db = Database::default();
        db.tables.insert(
            "A".into(),
            Table::Rel(crate::storage::Relation::new(crate::storage::Schema::new(
                vec![0],
            ))),
        );
        assert!(brute_force_cq(&q, &db).unwrap().is_empty());
    }

    #[test]
    fn inclusion_exclusion_matches_brute_force_on_running_example() {
        let q = parse_query(RUNNING_QUERY).unwrap();
        let db = running_database(&q);
        assert_eq!(count_inclusion_exclusion(&q, &db).unwrap(), 5);
        assert_eq!(count_via_counting_faq(&q, &db).unwrap(), 5);
    }

    #[test]
    fn inclusion_exclusion_without_negation_is_plain_count() {
        let q = parse_query("Q(x, y) :- A(x, y).").unwrap();
        let mut db = Database::default();
        let mut rel = crate::storage::Relation::new(crate::storage::Schema::new(vec![0, 1]));
        rel.insert(vec![1, 1]);
        rel.insert(vec![1, 2]);
        rel.insert(vec![2, 1]);
        db.tables.insert("A".into(), Table::Rel(rel));
        assert_eq!(count_inclusion_exclusion(&q, &db).unwrap(), 3);
    }
}
