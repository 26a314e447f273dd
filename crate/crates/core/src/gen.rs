//! Seeded generators for random queries, instances and scaling families.
//! Tests, the acceptance suite and the bench harness all draw from here so
//! runs are reproducible under a fixed seed.

use crate::algebra::{Semiring, SemiringKind, Value};
use crate::frontend::{build_query, Atom, Query};
use crate::hypergraph::{SignedHypergraph, Vertex};
use crate::storage::{Database, Factor, Interner, Relation, Schema, Table, Tuple};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone)]
pub struct GenParams {
    pub max_vars: usize,
    pub max_pos: usize,
    pub max_neg: usize,
    pub dom: usize,
    pub max_rows: usize,
}

impl Default for GenParams {
    fn default() -> GenParams {
        GenParams {
            max_vars: 5,
            max_pos: 3,
            max_neg: 2,
            dom: 6,
            max_rows: 40,
        }
    }
}

/// Random safe signed hypergraph: positive edges drawn until they cover the
/// vertex set, then random negative edges.
pub fn random_hypergraph(rng: &mut StdRng, max_vars: usize, max_edges: usize) -> SignedHypergraph {
    loop {
        let n = rng.gen_range(1..=max_vars);
        let verts: Vec<Vertex> = (0..n as Vertex).collect();
        let mut pos: Vec<BTreeSet<Vertex>> = Vec::new();
        let mut covered: BTreeSet<Vertex> = BTreeSet::new();
        let pos_target = rng.gen_range(1..=max_edges.max(1));
        while covered.len() < n || pos.is_empty() {
            let edge = random_edge(rng, &verts);
            covered.extend(edge.iter().copied());
            pos.push(edge);
            if pos.len() > pos_target + n {
                break;
            }
        }
        if covered.len() < n {
            continue;
        }
        let negs = rng.gen_range(0..=max_edges.saturating_sub(pos.len()));
        let neg: Vec<BTreeSet<Vertex>> = (0..negs).map(|_| random_edge(rng, &verts)).collect();
        if let Ok(h) = SignedHypergraph::new(verts, pos, neg) {
            return h;
        }
    }
}

fn random_edge(rng: &mut StdRng, verts: &[Vertex]) -> BTreeSet<Vertex> {
    let k = rng.gen_range(1..=verts.len().min(4));
    let mut vs = verts.to_vec();
    vs.shuffle(rng);
    vs.into_iter().take(k).collect()
}

fn atoms_from_structure(
    rng: &mut StdRng,
    pos: &[BTreeSet<Vertex>],
    neg: &[BTreeSet<Vertex>],
) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for (i, e) in pos.iter().enumerate() {
        let mut vars: Vec<String> = e.iter().map(|v| format!("x{v}")).collect();
        vars.shuffle(rng);
        atoms.push(Atom {
            name: format!("P{i}"),
            vars,
            negated: false,
        });
    }
    for (i, e) in neg.iter().enumerate() {
        let mut vars: Vec<String> = e.iter().map(|v| format!("x{v}")).collect();
        vars.shuffle(rng);
        atoms.push(Atom {
            name: format!("N{i}"),
            vars,
            negated: true,
        });
    }
    atoms
}

/// Random free-connex signed-acyclic query with negation, by rejection
/// against the definition oracle, plus a database over a small domain.
pub fn random_free_connex_cqn(rng: &mut StdRng, p: &GenParams) -> (Query, Database) {
    loop {
        let n = rng.gen_range(1..=p.max_vars);
        let verts: Vec<Vertex> = (0..n as Vertex).collect();
        let n_pos = rng.gen_range(1..=p.max_pos);
        let mut pos: Vec<BTreeSet<Vertex>> = (0..n_pos).map(|_| random_edge(rng, &verts)).collect();
        let covered: BTreeSet<Vertex> = pos.iter().flatten().copied().collect();
        if covered.len() < n {
            let missing: BTreeSet<Vertex> = verts
                .iter()
                .copied()
                .filter(|v| !covered.contains(v))
                .collect();
            pos.push(missing);
        }
        let n_neg = rng.gen_range(0..=p.max_neg);
        let neg: Vec<BTreeSet<Vertex>> = (0..n_neg).map(|_| random_edge(rng, &verts)).collect();
        let Ok(h) = SignedHypergraph::new(verts.clone(), pos.clone(), neg.clone()) else {
            continue;
        };
        if !h.is_signed_acyclic_definition().unwrap_or(false) {
            continue;
        }
        let free: BTreeSet<Vertex> = if rng.gen_bool(0.3) {
            verts.iter().copied().collect()
        } else {
            verts
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.6))
                .collect()
        };
        if !free.is_empty() {
            let (aug, _) = h.with_free_edge(&free);
            if !aug.is_signed_acyclic_definition().unwrap_or(false) {
                continue;
            }
        }
        let atoms = atoms_from_structure(rng, &pos, &neg);
        let mut head: Vec<String> = free.iter().map(|v| format!("x{v}")).collect();
        head.shuffle(rng);
        let Ok(q) = build_query(
            "Q".into(),
            head,
            atoms,
            Semiring::instance("boolean").unwrap(),
            &HashMap::new(),
        ) else {
            continue;
        };
        let db = random_database(rng, &q, p, None);
        return (q, db);
    }
}

/// Random aggregation instance over the given carrier. Counting weights stay
/// nonnegative and set weights nonempty with total positive tables, keeping
/// the zero-weight classification of the reduction exact (see the module
/// docs on semiring capabilities).
pub fn random_faq_instance(
    rng: &mut StdRng,
    kind: SemiringKind,
    p: &GenParams,
) -> (Query, Database) {
    let s = Semiring::of(kind);
    loop {
        let (q0, _) = random_free_connex_cqn(rng, p);
        let mut defaults = HashMap::new();
        for a in &q0.atoms {
            if a.negated {
                defaults.insert(a.name.clone(), render_weight(&nonzero_weight(rng, &s)));
            }
        }
        let Ok(q) = build_query(
            q0.name.clone(),
            q0.head_vars.clone(),
            q0.atoms.clone(),
            s,
            &defaults,
        ) else {
            continue;
        };
        let db = random_database(rng, &q, p, Some(&s));
        return (q, db);
    }
}

fn render_weight(v: &Value) -> String {
    v.to_string()
}

fn nonzero_weight(rng: &mut StdRng, s: &Semiring) -> Value {
    loop {
        let v = random_weight(rng, s, false);
        if !s.is_zero(&v) {
            return v;
        }
    }
}

fn random_weight(rng: &mut StdRng, s: &Semiring, allow_zero: bool) -> Value {
    match s.kind {
        SemiringKind::Boolean => Value::Bool(!allow_zero || rng.gen_bool(0.8)),
        SemiringKind::Counting => Value::Int(rng.gen_range(if allow_zero { 0..5 } else { 1..5 })),
        SemiringKind::Tropical => {
            if allow_zero && rng.gen_bool(0.1) {
                Value::Real(f64::INFINITY)
            } else {
                Value::Real(rng.gen_range(0..20) as f64 * 0.5)
            }
        }
        SemiringKind::MaxTropical => {
            if allow_zero && rng.gen_bool(0.1) {
                Value::Real(f64::NEG_INFINITY)
            } else {
                Value::Real(rng.gen_range(0..20) as f64 * 0.5)
            }
        }
        SemiringKind::SetUnion => {
            let k = rng.gen_range(1..3);
            Value::Set((0..k).map(|_| rng.gen_range(0..6i64)).collect())
        }
    }
}

/// Random database for a query: unweighted relations in listing mode, or
/// weighted factor tables when a semiring is given.
pub fn random_database(
    rng: &mut StdRng,
    q: &Query,
    p: &GenParams,
    weighted: Option<&Semiring>,
) -> Database {
    let mut db = Database::default();
    let mut interner = Interner::default();
    let ids: Vec<u32> = (0..p.dom)
        .map(|i| interner.intern(&format!("v{i}")))
        .collect();
    for atom in &q.atoms {
        let arity = atom.vars.len();
        let schema = Schema::new(atom.vars.iter().map(|v| q.var_ids[v]).collect());
        match weighted {
            None => {
                let rows = rng.gen_range(0..=p.max_rows);
                let mut rel = Relation::new(schema);
                for _ in 0..rows {
                    let t: Tuple = (0..arity)
                        .map(|_| ids[rng.gen_range(0..ids.len())])
                        .collect();
                    rel.insert(t);
                }
                db.tables.insert(atom.name.clone(), Table::Rel(rel));
            }
            Some(s) => {
                let mut fac = Factor::new(schema, q.defaults.get(&atom.name).cloned());
                // The set semigroup has no annihilating zero; keep its
                // positive tables total so absent rows never matter.
                let total_positive = s.kind == SemiringKind::SetUnion && !atom.negated;
                if total_positive {
                    let mut stack: Vec<Tuple> = vec![Vec::new()];
                    while let Some(t) = stack.pop() {
                        if t.len() == arity {
                            let w = nonzero_weight(rng, s);
                            let _ = fac.insert(t, w);
                            continue;
                        }
                        for &id in &ids {
                            let mut t2 = t.clone();
                            t2.push(id);
                            stack.push(t2);
                        }
                    }
                } else {
                    let rows = rng.gen_range(0..=p.max_rows);
                    for _ in 0..rows {
                        let t: Tuple = (0..arity)
                            .map(|_| ids[rng.gen_range(0..ids.len())])
                            .collect();
                        let allow_zero = s.kind != SemiringKind::SetUnion;
                        let _ = fac.insert(t, random_weight(rng, s, allow_zero));
                    }
                }
                db.tables.insert(atom.name.clone(), Table::Fac(fac));
            }
        }
    }
    db.interner = interner;
    db
}

/// Random admissible difference pair: a full alpha-acyclic minuend and a
/// full subtrahend over the same variables whose atoms each keep the
/// conjunction alpha-acyclic.
pub fn random_diff_pair(rng: &mut StdRng, p: &GenParams) -> (Query, Query, Database) {
    'outer: loop {
        let n = rng.gen_range(2..=p.max_vars);
        let verts: Vec<Vertex> = (0..n as Vertex).collect();
        let mut pos: Vec<BTreeSet<Vertex>> = (0..rng.gen_range(1..=p.max_pos))
            .map(|_| random_edge(rng, &verts))
            .collect();
        let covered: BTreeSet<Vertex> = pos.iter().flatten().copied().collect();
        if covered.len() < n {
            let missing: BTreeSet<Vertex> = verts
                .iter()
                .copied()
                .filter(|v| !covered.contains(v))
                .collect();
            pos.push(missing);
        }
        if crate::hypergraph::is_alpha_acyclic(&pos).is_none() {
            continue;
        }
        // Subtrahend atoms: every conjunction must stay alpha-acyclic and
        // the atoms together must cover the variables.
        let mut sub: Vec<BTreeSet<Vertex>> = Vec::new();
        for _ in 0..rng.gen_range(1..=p.max_pos) {
            let e = random_edge(rng, &verts);
            let mut with_e = pos.clone();
            with_e.push(e.clone());
            if crate::hypergraph::is_alpha_acyclic(&with_e).is_some() {
                sub.push(e);
            }
        }
        let covered2: BTreeSet<Vertex> = sub.iter().flatten().copied().collect();
        if covered2.len() < n {
            let missing: BTreeSet<Vertex> = verts
                .iter()
                .copied()
                .filter(|v| !covered2.contains(v))
                .collect();
            let mut with_e = pos.clone();
            with_e.push(missing.clone());
            if crate::hypergraph::is_alpha_acyclic(&with_e).is_none() {
                continue 'outer;
            }
            sub.push(missing);
        }
        let head: Vec<String> = verts.iter().map(|v| format!("x{v}")).collect();
        let boolean = Semiring::instance("boolean").unwrap();
        let mk = |name: &str, edges: &[BTreeSet<Vertex>], tag: &str, rng: &mut StdRng| {
            let atoms: Vec<Atom> = edges
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let mut vars: Vec<String> = e.iter().map(|v| format!("x{v}")).collect();
                    vars.shuffle(rng);
                    Atom {
                        name: format!("{tag}{i}"),
                        vars,
                        negated: false,
                    }
                })
                .collect();
            build_query(name.into(), head.clone(), atoms, boolean, &HashMap::new())
        };
        let Ok(q1) = mk("Q1", &pos, "A", rng) else {
            continue;
        };
        let Ok(q2) = mk("Q2", &sub, "B", rng) else {
            continue;
        };
        let mut db = random_database(rng, &q1, p, None);
        let db2 = random_database(rng, &q2, p, None);
        for (k, v) in db2.tables {
            db.tables.insert(k, v);
        }
        return (q1, q2, db);
    }
}

/// Synthetic scaling family for an arbitrary query: positive atoms share a
/// sparse row budget, negative atoms draw half their rows by extending
/// random positive rows so the skipping machinery is actually exercised.
pub fn scaled_database(q: &Query, size: usize, seed: u64) -> Database {
    use rand::SeedableRng;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut db = Database::default();
    let mut interner = Interner::default();
    let n_pos = q.atoms.iter().filter(|a| !a.negated).count().max(1);
    let n_neg = q.atoms.iter().filter(|a| a.negated).count();
    let pos_rows = (size / (n_pos + n_neg / 2)).max(1);
    let max_arity = q.atoms.iter().map(|a| a.vars.len()).max().unwrap_or(1);
    let dom = ((pos_rows as f64).powf(1.0 / max_arity as f64).ceil() as usize * 2).max(4);
    let ids: Vec<u32> = (0..dom)
        .map(|i| interner.intern(&format!("v{i}")))
        .collect();

    let mut pos_tables: Vec<(Vec<Vertex>, Vec<Tuple>)> = Vec::new();
    for atom in q.atoms.iter().filter(|a| !a.negated) {
        let cols: Vec<Vertex> = atom.vars.iter().map(|v| q.var_ids[v]).collect();
        let mut rel = Relation::new(Schema::new(cols.clone()));
        for _ in 0..pos_rows {
            let t: Tuple = (0..cols.len())
                .map(|_| ids[rng.gen_range(0..dom)])
                .collect();
            rel.insert(t);
        }
        pos_tables.push((cols.clone(), rel.rows().to_vec()));
        db.tables.insert(atom.name.clone(), Table::Rel(rel));
    }
    for atom in q.atoms.iter().filter(|a| a.negated) {
        let cols: Vec<Vertex> = atom.vars.iter().map(|v| q.var_ids[v]).collect();
        let mut rel = Relation::new(Schema::new(cols.clone()));
        // Never saturate a negative atom's domain; a quarter of its tuple
        // space at most, so low-arity negations keep most values open.
        let space: usize = cols
            .iter()
            .map(|_| dom)
            .fold(1usize, |a, b| a.saturating_mul(b))
            / 4;
        for _ in 0..(pos_rows / 2).max(1).min(space.max(1)) {
            let mut assign: HashMap<Vertex, u32> = HashMap::new();
            if rng.gen_bool(0.5) && !pos_tables.is_empty() {
                let (pcols, prows) = &pos_tables[rng.gen_range(0..pos_tables.len())];
                if let Some(row) = prows.as_slice().choose(&mut rng) {
                    for (c, &v) in pcols.iter().enumerate() {
                        assign.insert(v, row[c]);
                    }
                }
            }
            let t: Tuple = cols
                .iter()
                .map(|v| *assign.get(v).unwrap_or(&ids[rng.gen_range(0..dom)]))
                .collect();
            rel.insert(t);
        }
        db.tables.insert(atom.name.clone(), Table::Rel(rel));
    }
    db.interner = interner;
    db
}
