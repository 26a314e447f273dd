//! Difference of two full queries as a deduplicated union of per-atom
//! negation branches.
//!
//! The branch set preserves the output exactly; the union is merged by
//! round-robin over the branch enumerators with a seen-set, so per-emission
//! cost is amortized constant rather than worst-case constant.

use crate::cq::{self, EngineError};
use crate::frontend::{build_query, Atom, FrontendError, Query};
use crate::hypergraph::{is_alpha_acyclic, Vertex};
use crate::storage::{Database, Tuple};
use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("structure violation: {0}")]
    StructureViolation(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check_full_positive(q: &Query, which: &str) -> Result<(), DiffError> {
    if q.atoms.iter().any(|a| a.negated) {
        return Err(DiffError::StructureViolation(format!(
            "{which} must be negation-free"
        )));
    }
    if q.free.len() != q.var_names.len() {
        return Err(DiffError::StructureViolation(format!(
            "{which} must be a full query"
        )));
    }
    Ok(())
}

/// One branch per atom of the subtrahend: the minuend's body conjoined with
/// that atom negated. Each branch is full, hence trivially free-connex, and
/// signed-acyclic under the stated acyclicity hypotheses.
pub fn rewrite_diff(q1: &Query, q2: &Query) -> Result<Vec<Query>, DiffError> {
    check_full_positive(q1, "the minuend")?;
    check_full_positive(q2, "the subtrahend")?;
    let vars1: BTreeSet<&String> = q1.var_names.iter().collect();
    let vars2: BTreeSet<&String> = q2.var_names.iter().collect();
    if vars1 != vars2 {
        return Err(DiffError::StructureViolation(
            "both queries must range over the same variables".into(),
        ));
    }
    let edges1: Vec<BTreeSet<Vertex>> = q1
        .hypergraph
        .pos_edge_ids()
        .map(|e| q1.hypergraph.edge(e).verts.clone())
        .collect();
    if is_alpha_acyclic(&edges1).is_none() {
        return Err(DiffError::StructureViolation(
            "the minuend is not alpha-acyclic".into(),
        ));
    }
    let mut branches = Vec::with_capacity(q2.atoms.len());
    for atom in &q2.atoms {
        // The added atom's edge in the minuend's vertex numbering.
        let mut with_e = edges1.clone();
        with_e.push(atom.vars.iter().map(|v| q1.var_ids[v]).collect());
        if is_alpha_acyclic(&with_e).is_none() {
            return Err(DiffError::StructureViolation(format!(
                "conjoining atom {} breaks alpha-acyclicity",
                atom.name
            )));
        }
        let mut atoms: Vec<Atom> = q1.atoms.clone();
        atoms.push(Atom {
            name: atom.name.clone(),
            vars: atom.vars.clone(),
            negated: true,
        });
        let branch = build_query(
            format!("{}_minus_{}", q1.name, atom.name),
            q1.head_vars.clone(),
            atoms,
            q1.semiring,
            &HashMap::new(),
        )?;
        branches.push(branch);
    }
    Ok(branches)
}

/// Preprocesses every branch, then round-robins their enumerators behind a
/// seen-set so each difference tuple comes out exactly once, in the
/// minuend's head-variable order.
pub fn enumerate_diff(q1: &Query, q2: &Query, db: &Database) -> Result<Vec<Tuple>, DiffError> {
    let branches = rewrite_diff(q1, q2)?;
    let prepared: Vec<cq::Prepared> = branches
        .iter()
        .map(|b| cq::prepare(b, db))
        .collect::<Result<_, _>>()?;
    // All branches share the minuend's head order, so their tuples compare
    // directly once reordered from sequence order to head order.
    let mut streams: Vec<_> = prepared
        .iter()
        .zip(&branches)
        .map(|(p, b)| {
            let reorder: Vec<usize> = b
                .head_vars
                .iter()
                .map(|name| {
                    let v = b.var_ids[name];
                    p.emit_vars.iter().position(|&u| u == v).unwrap()
                })
                .collect();
            (p.enumerate(), reorder)
        })
        .collect();
    let mut seen: HashSet<Tuple> = HashSet::new();
    let mut out = Vec::new();
    let mut live: Vec<bool> = vec![true; streams.len()];
    let mut remaining = streams.len();
    while remaining > 0 {
        for (i, (stream, reorder)) in streams.iter_mut().enumerate() {
            if !live[i] {
                continue;
            }
            match stream.next() {
                Some(t) => {
                    let tuple: Tuple = reorder.iter().map(|&c| t[c]).collect();
                    if seen.insert(tuple.clone()) {
                        out.push(tuple);
                    }
                }
                None => {
                    live[i] = false;
                    remaining -= 1;
                }
            }
        }
    }
    Ok(out)
}
