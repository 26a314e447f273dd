//! Semiring aggregation: guarded-product expressions, the refactor step that
//! isolates an eliminated variable on one spine of the tree, per-leaf
//! aggregation through range-sum oracles, the reduction of a full aggregate
//! query to a plain query with negation, and weighted enumeration.

use crate::algebra::{AlgebraError, Semiring, Value};
use crate::cq::{self, EngineError};
use crate::frontend::Query;
use crate::hypergraph::{EdgeId, Polarity, SignedHypergraph, SignedLeafWitness, Vertex};
use crate::rangesum::{build_oracle, BackendChoice, OracleFamily, RangeSumError, UpperBound};
use crate::storage::{Database, Factor, Relation, Schema, StorageError, Table, Tuple};
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FaqError {
    #[error("negated atom {0} has no @default constant")]
    MissingDefault(String),
    #[error("no table loaded for atom {0}")]
    MissingFactor(String),
    #[error("variable x{0} is unbound during evaluation")]
    UnboundVariable(Vertex),
    #[error("constant leaves must be nonzero")]
    ZeroConstant,
    #[error("invalid leaf witness: {0}")]
    InvalidWitness(String),
    #[error("range-sum oracle missing for chain level {0}")]
    OracleMissing(usize),
    #[error(transparent)]
    RangeSum(#[from] RangeSumError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Engine(#[from] Box<EngineError>),
}

impl From<EngineError> for FaqError {
    fn from(e: EngineError) -> FaqError {
        FaqError::Engine(Box::new(e))
    }
}

pub type FactorId = usize;

/// Append-only store of weighted factor tables; expressions reference
/// factors by id so rewriting steps can share and replace them cheaply.
#[derive(Debug, Clone, Default)]
pub struct FactorStore {
    factors: Vec<Factor>,
    names: Vec<String>,
}

impl FactorStore {
    pub fn new() -> FactorStore {
        FactorStore::default()
    }

    pub fn add(&mut self, name: String, factor: Factor) -> FactorId {
        self.factors.push(factor);
        self.names.push(name);
        self.factors.len() - 1
    }

    pub fn factor(&self, id: FactorId) -> &Factor {
        &self.factors[id]
    }

    pub fn name(&self, id: FactorId) -> &str {
        &self.names[id]
    }

    /// Total stored rows; the |D| of the size bounds.
    pub fn size(&self) -> usize {
        self.factors.iter().map(|f| f.len()).sum()
    }
}

/// Alternating product/guard tree. `Guard(f, inner)` evaluates to the stored
/// weight when the key is present in `f`'s table and to `inner` otherwise.
#[derive(Debug, Clone)]
pub enum Expr {
    Times(Vec<Expr>),
    Guard(FactorId, Box<Expr>),
    Leaf(FactorId),
    Const(Value),
}

impl Expr {
    pub fn times_children(self) -> Vec<Expr> {
        match self {
            Expr::Times(cs) => cs,
            other => vec![other],
        }
    }
}

pub fn contains_var(expr: &Expr, store: &FactorStore, var: Vertex) -> bool {
    match expr {
        Expr::Times(cs) => cs.iter().any(|c| contains_var(c, store, var)),
        Expr::Guard(f, inner) => {
            store.factor(*f).schema.contains(var) || contains_var(inner, store, var)
        }
        Expr::Leaf(f) => store.factor(*f).schema.contains(var),
        Expr::Const(_) => false,
    }
}

fn collect_factors(expr: &Expr, out: &mut Vec<(FactorId, Polarity)>) {
    match expr {
        Expr::Times(cs) => cs.iter().for_each(|c| collect_factors(c, out)),
        Expr::Guard(f, inner) => {
            out.push((*f, Polarity::Neg));
            collect_factors(inner, out);
        }
        Expr::Leaf(f) => out.push((*f, Polarity::Pos)),
        Expr::Const(_) => {}
    }
}

/// Recursive fold of the expression at a full or partial assignment; every
/// factor the active path touches must have its variables bound.
pub fn evaluate(
    expr: &Expr,
    store: &FactorStore,
    s: &Semiring,
    assign: &[Option<u32>],
) -> Result<Value, FaqError> {
    match expr {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Leaf(f) => {
            let fac = store.factor(*f);
            let key = key_for(&fac.schema, assign)?;
            Ok(fac.lookup(&key).cloned().unwrap_or_else(|| s.zero()))
        }
        Expr::Guard(f, inner) => {
            let fac = store.factor(*f);
            let key = key_for(&fac.schema, assign)?;
            match fac.lookup(&key) {
                Some(w) => Ok(w.clone()),
                None => evaluate(inner, store, s, assign),
            }
        }
        Expr::Times(cs) => {
            let mut acc = s.one();
            for c in cs {
                let v = evaluate(c, store, s, assign)?;
                acc = s.times(&acc, &v)?;
            }
            Ok(acc)
        }
    }
}

pub fn key_for(schema: &Schema, assign: &[Option<u32>]) -> Result<Tuple, FaqError> {
    schema
        .vars()
        .iter()
        .map(|&v| {
            assign
                .get(v as usize)
                .copied()
                .flatten()
                .ok_or(FaqError::UnboundVariable(v))
        })
        .collect()
}

/// The signed hypergraph of an expression: positive leaves become positive
/// edges, guard tables negative edges. Returns the factor behind each edge.
pub fn derive_hypergraph(
    expr: &Expr,
    store: &FactorStore,
) -> Result<(SignedHypergraph, Vec<FactorId>), FaqError> {
    let mut factors = Vec::new();
    collect_factors(expr, &mut factors);
    // Nullary factors are global constants, not structure.
    factors.retain(|(f, _)| store.factor(*f).schema.arity() > 0);
    let vertices: BTreeSet<Vertex> = factors
        .iter()
        .flat_map(|(f, _)| store.factor(*f).schema.vars().iter().copied())
        .collect();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut pos_f = Vec::new();
    let mut neg_f = Vec::new();
    for (f, pol) in &factors {
        let set: BTreeSet<Vertex> = store.factor(*f).schema.vars().iter().copied().collect();
        match pol {
            Polarity::Pos => {
                pos.push(set);
                pos_f.push(*f);
            }
            Polarity::Neg => {
                neg.push(set);
                neg_f.push(*f);
            }
        }
    }
    let h = SignedHypergraph::new(vertices, pos, neg)
        .map_err(|e| FaqError::InvalidWitness(e.to_string()))?;
    pos_f.extend(neg_f);
    Ok((h, pos_f))
}

/// Flat expression for a query in aggregation mode: a product of positive
/// factor leaves and one guard per negated atom falling through to its
/// default constant.
pub fn faq_to_nestfaq(q: &Query, db: &Database) -> Result<(Expr, FactorStore), FaqError> {
    let s = &q.semiring;
    let mut store = FactorStore::new();
    let mut leaves = Vec::new();
    let mut guards = Vec::new();
    for atom in &q.atoms {
        let schema = Schema::new(atom.vars.iter().map(|v| q.var_ids[v]).collect());
        let fac = match db.tables.get(&atom.name) {
            Some(Table::Fac(f)) => {
                let mut f = f.clone();
                f.schema = schema;
                f
            }
            Some(Table::Rel(r)) => {
                let mut f = Factor::new(schema, None);
                for row in r.rows() {
                    f.insert(row.clone(), s.one())?;
                }
                f
            }
            None => return Err(FaqError::MissingFactor(atom.name.clone())),
        };
        if atom.negated {
            let default = q
                .defaults
                .get(&atom.name)
                .cloned()
                .ok_or_else(|| FaqError::MissingDefault(atom.name.clone()))?;
            if s.is_zero(&default) {
                return Err(FaqError::ZeroConstant);
            }
            let mut fac = fac;
            fac.default = Some(default.clone());
            let id = store.add(atom.name.clone(), fac);
            guards.push(Expr::Guard(id, Box::new(Expr::Const(default))));
        } else {
            let id = store.add(atom.name.clone(), fac);
            leaves.push(Expr::Leaf(id));
        }
    }
    leaves.extend(guards);
    Ok((Expr::Times(leaves), store))
}

/// Boolean-as-counting encoding of a query with negation: positive rows get
/// weight one; negated rows store zero and fall through to one, so the
/// aggregate counts exactly the satisfying valuations.
pub fn cq_to_counting_expr(q: &Query, db: &Database) -> Result<(Expr, FactorStore), FaqError> {
    let s = Semiring::instance("counting").unwrap();
    let mut store = FactorStore::new();
    let mut leaves = Vec::new();
    let mut guards = Vec::new();
    for atom in &q.atoms {
        let schema = Schema::new(atom.vars.iter().map(|v| q.var_ids[v]).collect());
        let rel = db
            .relation(&atom.name)
            .ok_or_else(|| FaqError::MissingFactor(atom.name.clone()))?;
        let mut fac = Factor::new(schema, None);
        for row in rel.rows() {
            fac.insert(row.clone(), if atom.negated { s.zero() } else { s.one() })?;
        }
        let id = store.add(atom.name.clone(), fac);
        if atom.negated {
            guards.push(Expr::Guard(id, Box::new(Expr::Const(s.one()))));
        } else {
            leaves.push(Expr::Leaf(id));
        }
    }
    leaves.extend(guards);
    Ok((Expr::Times(leaves), store))
}

/// One chain level of a refactored expression: the guard factor and the
/// variable-free siblings that multiply inside it.
#[derive(Debug, Clone)]
pub struct SpineLevel {
    pub guard: FactorId,
    pub mu: Vec<Expr>,
}

/// The spine of a refactored expression: the inclusion chain of guards
/// (innermost first) ending at the pivot leaf.
#[derive(Debug, Clone)]
pub struct Spine {
    pub pivot: FactorId,
    pub levels: Vec<SpineLevel>,
}

#[derive(Debug, Clone)]
pub struct Refactored {
    pub expr: Expr,
    pub spine: Spine,
    pub var: Vertex,
}

enum StashItem {
    Pos(FactorId),
    Neg(FactorId, Expr),
}

struct RefactorCtx<'a> {
    store: &'a mut FactorStore,
    s: &'a Semiring,
    var: Vertex,
    pivot: FactorId,
    chain: Vec<FactorId>,
    assign: Vec<Option<u32>>,
    ops: &'a mut u64,
}

/// Rewrites the expression so that the eliminated variable occurs in at most
/// one child subtree of every product node, with the chain of guards exposed
/// down to the pivot leaf. Pointwise semantics are preserved; factors whose
/// edge sits inside the pivot are absorbed into updated factor tables.
pub fn refactor(
    expr: &Expr,
    store: &mut FactorStore,
    s: &Semiring,
    var: Vertex,
    pivot: FactorId,
    chain: &[FactorId],
    ops: &mut u64,
) -> Result<Refactored, FaqError> {
    let n_vars = 1 + store
        .factors
        .iter()
        .flat_map(|f| f.schema.vars().iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let mut ctx = RefactorCtx {
        store,
        s,
        var,
        pivot,
        chain: chain.to_vec(),
        assign: vec![None; n_vars],
        ops,
    };
    let mut stash = Vec::new();
    let out = process_level(expr.clone().times_children(), &mut stash, &mut ctx)?;
    debug_assert!(stash.is_empty());
    let new_expr = Expr::Times(out);
    let spine = extract_spine(&new_expr, ctx.store, var)?;
    Ok(Refactored {
        expr: new_expr,
        spine,
        var,
    })
}

fn process_level(
    children: Vec<Expr>,
    stash: &mut Vec<StashItem>,
    ctx: &mut RefactorCtx,
) -> Result<Vec<Expr>, FaqError> {
    let mut out = Vec::new();
    let mut queue: VecDeque<Expr> = children.into();
    while let Some(c) = queue.pop_front() {
        match c {
            Expr::Times(gc) => queue.extend(gc),
            Expr::Const(v) => {
                if ctx.s.is_zero(&v) {
                    return Err(FaqError::ZeroConstant);
                }
                out.push(Expr::Const(v));
            }
            Expr::Leaf(f) => {
                if ctx.store.factor(f).schema.contains(ctx.var) {
                    stash.push(StashItem::Pos(f));
                } else {
                    out.push(Expr::Leaf(f));
                }
            }
            Expr::Guard(f, inner) => {
                if ctx.store.factor(f).schema.contains(ctx.var)
                    || contains_var(&inner, ctx.store, ctx.var)
                {
                    stash.push(StashItem::Neg(f, *inner));
                } else {
                    out.push(Expr::Guard(f, inner));
                }
            }
        }
    }
    if stash.is_empty() {
        return Ok(out);
    }
    // Yield the largest hyperedge first: the outermost chain guard still in
    // the stash, or the pivot group once no chain guard is left.
    let mut best: Option<(usize, usize)> = None;
    for (si, item) in stash.iter().enumerate() {
        if let StashItem::Neg(f, _) = item {
            if let Some(cp) = ctx.chain.iter().position(|c| c == f) {
                if best.is_none_or(|(bp, _)| cp > bp) {
                    best = Some((cp, si));
                }
            }
        }
    }
    match best {
        Some((_, si)) => {
            let StashItem::Neg(f, inner) = stash.remove(si) else {
                unreachable!()
            };
            let new_fid = absorb_factor(f, stash, ctx)?;
            let inner_children = process_level(inner.times_children(), stash, ctx)?;
            out.push(Expr::Guard(new_fid, Box::new(Expr::Times(inner_children))));
            Ok(out)
        }
        None => {
            let new_fid = absorb_pivot(std::mem::take(stash), ctx)?;
            out.push(Expr::Leaf(new_fid));
            Ok(out)
        }
    }
}

fn eval_stash_item(item: &StashItem, ctx: &RefactorCtx) -> Result<Value, FaqError> {
    match item {
        StashItem::Pos(f) => {
            let fac = ctx.store.factor(*f);
            let key = key_for(&fac.schema, &ctx.assign)?;
            Ok(fac.lookup(&key).cloned().unwrap_or_else(|| ctx.s.zero()))
        }
        StashItem::Neg(f, inner) => {
            let fac = ctx.store.factor(*f);
            let key = key_for(&fac.schema, &ctx.assign)?;
            match fac.lookup(&key) {
                Some(w) => Ok(w.clone()),
                None => evaluate(inner, ctx.store, ctx.s, &ctx.assign),
            }
        }
    }
}

/// New chain factor: the old rows, each multiplied by the value of the
/// remaining stash at that row. The stash schemas all sit inside this
/// factor's edge, so one pass over the table suffices.
fn absorb_factor(
    fid: FactorId,
    stash: &[StashItem],
    ctx: &mut RefactorCtx,
) -> Result<FactorId, FaqError> {
    let fac = ctx.store.factor(fid).clone();
    let mut updated = Factor::new(fac.schema.clone(), None);
    let cols: Vec<Vertex> = fac.schema.vars().to_vec();
    for (key, wt) in fac.iter() {
        *ctx.ops += 1;
        for (i, &v) in cols.iter().enumerate() {
            ctx.assign[v as usize] = Some(key[i]);
        }
        let mut w = wt.clone();
        for item in stash {
            let x = eval_stash_item(item, ctx)?;
            w = ctx.s.times(&w, &x)?;
        }
        updated.insert(key.clone(), w)?;
        for &v in &cols {
            ctx.assign[v as usize] = None;
        }
    }
    let name = format!("{}'", ctx.store.name(fid));
    Ok(ctx.store.add(name, updated))
}

/// Final absorption into the pivot. When the pivot leaf sits directly in the
/// stash its keys carry all nonzero points; otherwise (the pivot hidden
/// under a same-edge guard) candidate keys come from every stashed factor
/// over the full pivot edge.
fn absorb_pivot(stash: Vec<StashItem>, ctx: &mut RefactorCtx) -> Result<FactorId, FaqError> {
    let pivot_schema = ctx.store.factor(ctx.pivot).schema.clone();
    let uset: BTreeSet<Vertex> = pivot_schema.vars().iter().copied().collect();
    for item in &stash {
        let fid = match item {
            StashItem::Pos(f) | StashItem::Neg(f, _) => *f,
        };
        let iset: BTreeSet<Vertex> = ctx
            .store
            .factor(fid)
            .schema
            .vars()
            .iter()
            .copied()
            .collect();
        if !iset.is_subset(&uset) {
            return Err(FaqError::InvalidWitness(format!(
                "stashed factor {} escapes the pivot edge",
                ctx.store.name(fid)
            )));
        }
    }
    let direct = stash
        .iter()
        .position(|item| matches!(item, StashItem::Pos(f) if *f == ctx.pivot));
    let mut keys: Vec<Tuple> = Vec::new();
    let mut seen: HashSet<Tuple> = HashSet::new();
    match direct {
        Some(_) => {
            for key in ctx.store.factor(ctx.pivot).keys() {
                if seen.insert(key.clone()) {
                    keys.push(key.clone());
                }
            }
        }
        None => {
            // Candidate keys: every full-edge factor table anywhere in the
            // stash (the pivot's zero annihilates all other points).
            let mut fids: Vec<FactorId> = vec![ctx.pivot];
            for item in &stash {
                match item {
                    StashItem::Pos(f) => fids.push(*f),
                    StashItem::Neg(f, inner) => {
                        fids.push(*f);
                        let mut nested = Vec::new();
                        collect_factors(inner, &mut nested);
                        fids.extend(nested.into_iter().map(|(f, _)| f));
                    }
                }
            }
            for fid in fids {
                let fac = ctx.store.factor(fid);
                let fset: BTreeSet<Vertex> = fac.schema.vars().iter().copied().collect();
                if fset != uset {
                    continue;
                }
                let cols = fac.schema.projector(pivot_schema.vars())?;
                for key in fac.keys() {
                    let mapped = crate::storage::project_tuple(key, &cols);
                    if seen.insert(mapped.clone()) {
                        keys.push(mapped);
                    }
                }
            }
        }
    }
    let mut updated = Factor::new(pivot_schema.clone(), None);
    let cols: Vec<Vertex> = pivot_schema.vars().to_vec();
    for key in keys {
        *ctx.ops += 1;
        for (i, &v) in cols.iter().enumerate() {
            ctx.assign[v as usize] = Some(key[i]);
        }
        let mut w = ctx.s.one();
        for item in &stash {
            let x = eval_stash_item(item, ctx)?;
            w = ctx.s.times(&w, &x)?;
        }
        updated.insert(key, w)?;
        for &v in &cols {
            ctx.assign[v as usize] = None;
        }
    }
    let name = format!("{}'", ctx.store.name(ctx.pivot));
    Ok(ctx.store.add(name, updated))
}

/// Walks a refactored expression and returns its spine, verifying along the
/// way that the eliminated variable occurs in at most one child subtree of
/// every product node and that the guards nest down to a pivot leaf.
pub fn extract_spine(expr: &Expr, store: &FactorStore, var: Vertex) -> Result<Spine, FaqError> {
    let Expr::Times(children) = expr else {
        return Err(FaqError::InvalidWitness("root must be a product".into()));
    };
    let mut levels_rev: Vec<SpineLevel> = Vec::new();
    let mut cur: Vec<&Expr> = children.iter().collect();
    loop {
        let with_var: Vec<&Expr> = cur
            .iter()
            .copied()
            .filter(|c| contains_var(c, store, var))
            .collect();
        if with_var.len() != 1 {
            return Err(FaqError::InvalidWitness(format!(
                "x{var} occurs in {} sibling subtrees",
                with_var.len()
            )));
        }
        match with_var[0] {
            Expr::Leaf(f) => {
                levels_rev.reverse();
                return Ok(Spine {
                    pivot: *f,
                    levels: levels_rev,
                });
            }
            Expr::Guard(f, inner) => {
                let inner_children: Vec<&Expr> = match inner.as_ref() {
                    Expr::Times(cs) => cs.iter().collect(),
                    other => vec![other],
                };
                let mu: Vec<Expr> = inner_children
                    .iter()
                    .copied()
                    .filter(|c| !contains_var(c, store, var))
                    .cloned()
                    .collect();
                levels_rev.push(SpineLevel { guard: *f, mu });
                cur = inner_children;
            }
            other => {
                let _ = other;
                return Err(FaqError::InvalidWitness(
                    "spine nodes must be guards or the pivot leaf".into(),
                ));
            }
        }
    }
}

/// Peels the eliminated variable off a refactored expression: the pivot is
/// grouped and plus-folded, each chain factor is replaced by full-range
/// oracle queries at its projected keys, and the spine is rebuilt without
/// the variable.
pub fn aggregate_leaf(
    refd: &Refactored,
    oracles: &OracleFamily,
    store: &mut FactorStore,
    s: &Semiring,
    ops: &mut u64,
) -> Result<Expr, FaqError> {
    let var = refd.var;
    // Pivot: one scan, grouping by the remaining columns.
    let pivot = store.factor(refd.spine.pivot).clone();
    let keep: Vec<usize> = (0..pivot.schema.arity())
        .filter(|&i| pivot.schema.vars()[i] != var)
        .collect();
    let new_pivot_schema = Schema::new(keep.iter().map(|&i| pivot.schema.vars()[i]).collect());
    let mut order: Vec<Tuple> = Vec::new();
    let mut acc: HashMap<Tuple, Value> = HashMap::new();
    for (key, wt) in pivot.iter() {
        *ops += 1;
        let k2: Tuple = keep.iter().map(|&i| key[i]).collect();
        match acc.get_mut(&k2) {
            Some(cur) => *cur = s.plus(cur, wt)?,
            None => {
                order.push(k2.clone());
                acc.insert(k2, wt.clone());
            }
        }
    }
    let mut new_pivot = Factor::new(new_pivot_schema, None);
    for k in order {
        let v = acc.remove(&k).unwrap();
        new_pivot.insert(k, v)?;
    }
    let new_pivot_id = store.add(
        format!("{}\u{2193}", store.name(refd.spine.pivot)),
        new_pivot,
    );

    // Chain levels: full-range oracle query per projected key.
    let mut new_guards: Vec<FactorId> = Vec::new();
    for (i, lvl) in refd.spine.levels.iter().enumerate() {
        let fac = store.factor(lvl.guard).clone();
        let keep: Vec<usize> = (0..fac.schema.arity())
            .filter(|&c| fac.schema.vars()[c] != var)
            .collect();
        let new_schema = Schema::new(keep.iter().map(|&c| fac.schema.vars()[c]).collect());
        let oracle = oracles
            .levels
            .get(i + 1)
            .ok_or(FaqError::OracleMissing(i + 1))?;
        let to_oracle = new_schema.projector(&oracles.level_key_vars[i + 1])?;
        let mut new_fac = Factor::new(new_schema, None);
        let mut seen: HashSet<Tuple> = HashSet::new();
        for key in fac.keys() {
            *ops += 1;
            let k2: Tuple = keep.iter().map(|&c| key[c]).collect();
            if !seen.insert(k2.clone()) {
                continue;
            }
            let okey = crate::storage::project_tuple(&k2, &to_oracle);
            let v = oracle.query(&okey, 1, UpperBound::Bot, s, ops)?;
            new_fac.insert(k2, v)?;
        }
        new_guards.push(store.add(format!("{}\u{2193}", store.name(lvl.guard)), new_fac));
    }

    // Rebuild the spine bottom-up and splice it where the old one sat.
    let mut node = Expr::Leaf(new_pivot_id);
    for (i, lvl) in refd.spine.levels.iter().enumerate() {
        let mut inner = lvl.mu.clone();
        inner.push(node);
        node = Expr::Guard(new_guards[i], Box::new(Expr::Times(inner)));
    }
    let Expr::Times(children) = &refd.expr else {
        unreachable!("refactored root is a product")
    };
    let mut out = Vec::with_capacity(children.len());
    let mut spliced = false;
    for c in children {
        if contains_var(c, store, var) {
            debug_assert!(!spliced);
            out.push(node.clone());
            spliced = true;
        } else {
            out.push(c.clone());
        }
    }
    debug_assert!(spliced);
    Ok(Expr::Times(out))
}

/// Runs signed-elimination steps (refactor, oracle construction,
/// aggregation) for every variable after position `free` of the order,
/// leaving a full expression over the free variables.
pub fn eliminate(
    mut expr: Expr,
    store: &mut FactorStore,
    s: &Semiring,
    order: &[Vertex],
    free: usize,
    choice: BackendChoice,
    ops: &mut u64,
) -> Result<Expr, FaqError> {
    for idx in (free..order.len()).rev() {
        let var = order[idx];
        let (h, edge_factors) = derive_hypergraph(&expr, store)?;
        let w: SignedLeafWitness = h
            .find_signed_leaves()
            .into_iter()
            .find(|w| w.vertex == var)
            .ok_or_else(|| {
                FaqError::InvalidWitness(format!("x{var} is not a signed-leaf at its step"))
            })?;
        let pivot_fid = edge_factors[w.pivot];
        let chain_fids: Vec<FactorId> = w.chain.iter().map(|&e| edge_factors[e]).collect();
        let refd = refactor(&expr, store, s, var, pivot_fid, &chain_fids, ops)?;
        let fam = build_oracle(&refd.spine, store, s, var, choice, ops)?;
        expr = aggregate_leaf(&refd, &fam, store, s, ops)?;
    }
    Ok(expr)
}

/// A full aggregate expression reduced to a plain query with negation:
/// positive atoms keep the nonzero-weight rows, negative atoms keep exactly
/// the zero-weight rows. Nullary factors act as global gates.
#[derive(Debug)]
pub struct CqReduction {
    pub hypergraph: SignedHypergraph,
    pub relations: HashMap<EdgeId, Relation>,
    pub feasible: bool,
}

pub fn reduce_to_cq(
    expr: &Expr,
    store: &FactorStore,
    s: &Semiring,
) -> Result<CqReduction, FaqError> {
    let mut factors = Vec::new();
    collect_factors(expr, &mut factors);
    let mut feasible = true;
    let mut pos_sets = Vec::new();
    let mut neg_sets = Vec::new();
    let mut pos_rels = Vec::new();
    let mut neg_rels = Vec::new();
    let mut vertices: BTreeSet<Vertex> = BTreeSet::new();
    for (fid, pol) in &factors {
        let fac = store.factor(*fid);
        if fac.schema.arity() == 0 {
            let gate_ok = match pol {
                Polarity::Pos => fac.lookup(&[]).is_some_and(|w| !s.is_zero(w)),
                Polarity::Neg => !fac.lookup(&[]).is_some_and(|w| s.is_zero(w)),
            };
            feasible &= gate_ok;
            continue;
        }
        vertices.extend(fac.schema.vars().iter().copied());
        let set: BTreeSet<Vertex> = fac.schema.vars().iter().copied().collect();
        let rows = fac.iter().filter_map(|(k, w)| {
            let keep = match pol {
                Polarity::Pos => !s.is_zero(w),
                Polarity::Neg => s.is_zero(w),
            };
            keep.then(|| k.clone())
        });
        let rel = Relation::from_rows(fac.schema.clone(), rows);
        match pol {
            Polarity::Pos => {
                pos_sets.push(set);
                pos_rels.push(rel);
            }
            Polarity::Neg => {
                neg_sets.push(set);
                neg_rels.push(rel);
            }
        }
    }
    let hypergraph = SignedHypergraph::new(vertices, pos_sets, neg_sets)
        .map_err(|e| FaqError::InvalidWitness(e.to_string()))?;
    let mut relations = HashMap::new();
    for (i, rel) in pos_rels.into_iter().chain(neg_rels).enumerate() {
        relations.insert(i, rel);
    }
    Ok(CqReduction {
        hypergraph,
        relations,
        feasible,
    })
}

/// End-to-end weighted enumeration for a free-connex signed-acyclic query
/// in aggregation mode: eliminate the bound variables, reduce the residual
/// full expression to a query with negation, enumerate it with the listing
/// engine and pair every emitted tuple with its evaluated weight.
pub fn enumerate_faq(
    q: &Query,
    db: &Database,
    choice: BackendChoice,
) -> Result<(Vec<(Tuple, Value)>, u64), FaqError> {
    let s = &q.semiring;
    let (expr, mut store) = faq_to_nestfaq(q, db)?;
    let mut ops = 0u64;
    let answers = enumerate_expr(expr, &mut store, s, q, choice, &mut ops)?;
    Ok((answers, ops))
}

pub(crate) fn enumerate_expr(
    expr: Expr,
    store: &mut FactorStore,
    s: &Semiring,
    q: &Query,
    choice: BackendChoice,
    ops: &mut u64,
) -> Result<Vec<(Tuple, Value)>, FaqError> {
    let f = q.free.len();
    let (augmented, _) = q.hypergraph.with_free_edge(&q.free);
    let free_sorted: Vec<Vertex> = q.free.iter().copied().collect();
    let seq = augmented
        .elimination_sequence(Some(&free_sorted))
        .ok_or_else(|| FaqError::from(cq::free_connex_violation(&augmented)))?;
    let expr_f = eliminate(expr, store, s, &seq.order, f, choice, ops)?;
    if f == 0 {
        let v = evaluate(&expr_f, store, s, &[])?;
        return Ok(if s.is_zero(&v) {
            Vec::new()
        } else {
            vec![(Vec::new(), v)]
        });
    }
    let reduction = reduce_to_cq(&expr_f, store, s)?;
    if !reduction.feasible {
        return Ok(Vec::new());
    }
    let seq_star = reduction
        .hypergraph
        .elimination_sequence(None)
        .ok_or_else(|| FaqError::InvalidWitness("residual query is not signed-acyclic".into()))?;
    let pre = cq::preprocess_full(&reduction.hypergraph, &reduction.relations, &seq_star, None)?;
    *ops += pre.stats.ops;
    let emit_order = seq_star.order.clone();
    let n_assign = emit_order
        .iter()
        .map(|&v| v as usize + 1)
        .max()
        .unwrap_or(0);
    let head_pos: Vec<usize> = q
        .head_vars
        .iter()
        .map(|name| {
            let v = q.var_ids[name];
            emit_order
                .iter()
                .position(|&u| u == v)
                .expect("free var enumerated")
        })
        .collect();
    let mut out = Vec::new();
    for t in pre.enumerate(emit_order.len()) {
        let mut assign = vec![None; n_assign];
        for (i, &v) in emit_order.iter().enumerate() {
            assign[v as usize] = Some(t[i]);
        }
        let wt = evaluate(&expr_f, store, s, &assign)?;
        let tuple: Tuple = head_pos.iter().map(|&i| t[i]).collect();
        out.push((tuple, wt));
    }
    Ok(out)
}

#[cfg(test)]
pub mod tests {
    use super::*;
    use crate::rangesum::build_oracle as build_oracle_family;

    /// The worked aggregation instance over the counting ring, already in
    /// refactored shape (with the (b2,a1,3) key read as (b2,a2,3)):
    /// a product of unary leaves for x1 and x2 and the guard chain
    /// R'_123 over (x1,x2,x3), R'_23 over (x2,x3), pivot R'_3 over x3.
    /// Values: b1,b2 = 0,1; a1,a2,a3 = 0,1,2; x3 ranges over 1..=15.
    pub fn worked_instance() -> (Expr, FactorStore, Semiring) {
        let s = Semiring::instance("counting").unwrap();
        let mut store = FactorStore::new();
        let mut r1 = Factor::new(Schema::new(vec![0]), None);
        r1.insert(vec![0], Value::Int(1)).unwrap();
        r1.insert(vec![1], Value::Int(1)).unwrap();
        let r1 = store.add("R1".into(), r1);
        let mut r2 = Factor::new(Schema::new(vec![1]), None);
        for a in 0..3 {
            r2.insert(vec![a], Value::Int(1)).unwrap();
        }
        let r2 = store.add("R2".into(), r2);
        let mut r3 = Factor::new(Schema::new(vec![2]), None);
        for x in 1..=15u32 {
            r3.insert(vec![x], Value::Int(1)).unwrap();
        }
        let r3 = store.add("R3'".into(), r3);
        let mut r23 = Factor::new(Schema::new(vec![1, 2]), None);
        for (a, x, w) in [(0, 3, 2), (0, 9, 2), (1, 6, 3), (1, 11, 3), (2, 8, 4)] {
            r23.insert(vec![a, x], Value::Int(w)).unwrap();
        }
        let r23 = store.add("R23'".into(), r23);
        let mut r123 = Factor::new(Schema::new(vec![0, 1, 2]), None);
        for (b, a, x, w) in [(0, 0, 4, 5), (0, 0, 15, 5), (1, 1, 3, 6), (1, 1, 12, 6)] {
            r123.insert(vec![b, a, x], Value::Int(w)).unwrap();
        }
        let r123 = store.add("R123'".into(), r123);
        let expr = Expr::Times(vec![
            Expr::Leaf(r1),
            Expr::Leaf(r2),
            Expr::Guard(
                r123,
                Box::new(Expr::Times(vec![Expr::Guard(
                    r23,
                    Box::new(Expr::Times(vec![Expr::Leaf(r3)])),
                )])),
            ),
        ]);
        (expr, store, s)
    }

    #[test]
    fn worked_example_oracle_pairs_and_full_ranges() {
        let (expr, mut store, s) = worked_instance();
        let mut ops = 0;
        // x3 has vertex id 2; the tree is already in refactored shape, so
        // refactoring must pass it through unchanged up to factor copies.
        let (h, edge_factors) = derive_hypergraph(&expr, &store).unwrap();
        let w = h
            .find_signed_leaves()
            .into_iter()
            .find(|w| w.vertex == 2)
            .unwrap();
        let pivot = edge_factors[w.pivot];
        let chain: Vec<FactorId> = w.chain.iter().map(|&e| edge_factors[e]).collect();
        let refd = refactor(&expr, &mut store, &s, 2, pivot, &chain, &mut ops).unwrap();
        assert_eq!(refd.spine.levels.len(), 2);

        let fam =
            build_oracle_family(&refd.spine, &store, &s, 2, BackendChoice::Auto, &mut ops).unwrap();
        assert_eq!(fam.levels.len(), 3);

        // The decomposition for key a1 at chain level 1, exactly as printed:
        // [1,2]:2  {3}:2  [4,4]:1  [5,8]:4  {9}:2  [10,14]:5  [15,15]:1.
        let d = fam.levels[1].get(&[0]).unwrap();
        let got: Vec<(u32, u32, Value)> = d
            .pairs()
            .iter()
            .map(|p| (p.lo, p.hi, p.value.clone()))
            .collect();
        let expect = vec![
            (1, 2, Value::Int(2)),
            (3, 3, Value::Int(2)),
            (4, 4, Value::Int(1)),
            (5, 8, Value::Int(4)),
            (9, 9, Value::Int(2)),
            (10, 14, Value::Int(5)),
            (15, 15, Value::Int(1)),
        ];
        assert_eq!(got, expect);

        // Full-range aggregates: 25 and 29 at the top level, 18 for a3 one
        // level down, 15 for the pivot total.
        let q = |lvl: usize, key: &[u32]| {
            let mut ops = 0;
            fam.levels[lvl]
                .query(key, 1, UpperBound::Bot, &s, &mut ops)
                .unwrap()
        };
        assert_eq!(q(2, &[0, 0]), Value::Int(25));
        assert_eq!(q(2, &[1, 1]), Value::Int(29));
        assert_eq!(q(1, &[2]), Value::Int(18));
        assert_eq!(q(0, &[]), Value::Int(15));

        // Aggregation peels x3 off; the result evaluates like the brute
        // force fold over x3 for every (x1,x2) pair.
        let agg = aggregate_leaf(&refd, &fam, &mut store, &s, &mut ops).unwrap();
        for b in 0..2u32 {
            for a in 0..3u32 {
                let mut expect = s.zero();
                for x in 1..=15u32 {
                    let assign = vec![Some(b), Some(a), Some(x)];
                    let v = evaluate(&expr, &store, &s, &assign).unwrap();
                    expect = s.plus(&expect, &v).unwrap();
                }
                let got = evaluate(&agg, &store, &s, &[Some(b), Some(a)]).unwrap();
                assert_eq!(got, expect, "mismatch at ({b},{a})");
            }
        }
        // Spot values stated for the final expression: 25 at (b1,a1),
        // 29 at (b2,a2), and the 15 fall-through at (b1,a2) is blocked by
        // the middle guard, which stores 19 there.
        assert_eq!(
            evaluate(&agg, &store, &s, &[Some(0), Some(0)]).unwrap(),
            Value::Int(25)
        );
        assert_eq!(
            evaluate(&agg, &store, &s, &[Some(1), Some(1)]).unwrap(),
            Value::Int(29)
        );
        assert_eq!(
            evaluate(&agg, &store, &s, &[Some(1), Some(2)]).unwrap(),
            Value::Int(18)
        );
    }

    #[test]
    fn refactor_childless_variable_keeps_shape() {
        // Only the pivot contains the variable: refactoring reorders at most.
        let s = Semiring::instance("counting").unwrap();
        let mut store = FactorStore::new();
        let mut a = Factor::new(Schema::new(vec![0]), None);
        a.insert(vec![7], Value::Int(2)).unwrap();
        let a = store.add("A".into(), a);
        let mut b = Factor::new(Schema::new(vec![1]), None);
        b.insert(vec![5], Value::Int(3)).unwrap();
        let b = store.add("B".into(), b);
        let expr = Expr::Times(vec![Expr::Leaf(a), Expr::Leaf(b)]);
        let mut ops = 0;
        let refd = refactor(&expr, &mut store, &s, 1, b, &[], &mut ops).unwrap();
        assert!(refd.spine.levels.is_empty());
        let v = evaluate(&refd.expr, &store, &s, &[Some(7), Some(5)]).unwrap();
        assert_eq!(v, Value::Int(6));
    }

    #[test]
    fn nested_pivot_under_same_edge_guard() {
        // A negative edge equal to the pivot edge, guarding the pivot leaf:
        // the pivot absorption must still find every nonzero point.
        let s = Semiring::instance("counting").unwrap();
        let mut store = FactorStore::new();
        let mut n = Factor::new(Schema::new(vec![0]), None);
        n.insert(vec![1], Value::Int(5)).unwrap();
        let n = store.add("N".into(), n);
        let mut u = Factor::new(Schema::new(vec![0]), None);
        u.insert(vec![2], Value::Int(7)).unwrap();
        let u = store.add("U".into(), u);
        // (N(x) |- U(x)): 5 at x=1, 7 at x=2, 0 elsewhere.
        let expr = Expr::Times(vec![Expr::Guard(n, Box::new(Expr::Leaf(u)))]);
        let mut ops = 0;
        let refd = refactor(&expr, &mut store, &s, 0, u, &[], &mut ops).unwrap();
        let new_pivot = refd.spine.pivot;
        assert_eq!(store.factor(new_pivot).lookup(&[1]), Some(&Value::Int(5)));
        assert_eq!(store.factor(new_pivot).lookup(&[2]), Some(&Value::Int(7)));
        for x in 0..4u32 {
            let got = evaluate(&refd.expr, &store, &s, &[Some(x)]).unwrap();
            let expect = evaluate(&expr, &store, &s, &[Some(x)]).unwrap();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn reduce_to_cq_drops_zero_weight_rows() {
        let s = Semiring::instance("counting").unwrap();
        let mut store = FactorStore::new();
        let mut a = Factor::new(Schema::new(vec![0]), None);
        a.insert(vec![1], Value::Int(2)).unwrap();
        a.insert(vec![2], Value::Int(0)).unwrap();
        let a = store.add("A".into(), a);
        let mut n = Factor::new(Schema::new(vec![0]), None);
        n.insert(vec![1], Value::Int(0)).unwrap();
        n.insert(vec![3], Value::Int(4)).unwrap();
        let n = store.add("N".into(), n);
        let expr = Expr::Times(vec![
            Expr::Leaf(a),
            Expr::Guard(n, Box::new(Expr::Const(Value::Int(1)))),
        ]);
        let red = reduce_to_cq(&expr, &store, &s).unwrap();
        assert!(red.feasible);
        // Positive atom keeps only x=1; negative atom keeps only x=1 (its
        // zero-weight row), which then blocks the single candidate.
        let pos = &red.relations[&0];
        assert_eq!(pos.rows(), &[vec![1]]);
        let neg = &red.relations[&1];
        assert_eq!(neg.rows(), &[vec![1]]);
    }

    use crate::storage::{Factor, Schema};
}
