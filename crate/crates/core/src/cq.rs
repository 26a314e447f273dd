//! Preprocessing and constant-delay enumeration for full and free-connex
//! signed-acyclic queries with negation.
//!
//! Eliminating a variable `v` builds a hash of doubly linked lists over the
//! pivot relation, then installs tuple-labeled skipping links, one level per
//! negative atom in the inclusion chain above the pivot. A labeled link may
//! point at the end marker; "defined and bottom" is distinct from "absent",
//! which is what lets a single probe sequence skip every excluded value.

use crate::frontend::Query;
use crate::hypergraph::{
    EdgeId, EliminationSequence, HypergraphError, Polarity, SignedHypergraph, Vertex,
};
use crate::storage::{project_tuple, Database, Relation, Schema, StorageError, Tuple};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid elimination sequence: {0}")]
    InvalidSequence(String),
    #[error("query is not free-connex signed-acyclic{}", witness_text(.witness))]
    FreeConnexViolation {
        witness: Option<Vec<BTreeSet<Vertex>>>,
    },
    #[error("no relation loaded for atom {0}")]
    MissingRelation(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

fn witness_text(w: &Option<Vec<BTreeSet<Vertex>>>) -> String {
    match w {
        Some(sets) => format!(" (cyclic with negative edges {sets:?})"),
        None => String::new(),
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
struct SkipNode {
    /// Domain value of the eliminated variable; heads carry none.
    value: Option<u32>,
    next0: Option<NodeId>,
    prev0: Option<NodeId>,
    /// Level `i` links live at index `i - 1`. A next link stored as `None`
    /// bypasses straight to the end of the list.
    next: Vec<HashMap<Tuple, Option<NodeId>>>,
    prev: Vec<HashMap<Tuple, NodeId>>,
}

impl SkipNode {
    fn new(value: Option<u32>, levels: usize) -> SkipNode {
        SkipNode {
            value,
            next0: None,
            prev0: None,
            next: vec![HashMap::new(); levels],
            prev: vec![HashMap::new(); levels],
        }
    }
}

/// The per-variable list index: one doubly linked list per pivot key, plus
/// labeled skipping links and the bookkeeping table from full pivot tuples
/// to their nodes.
#[derive(Debug, Clone)]
pub struct SkipList {
    pub var: Vertex,
    /// Column order of the pivot relation; the bookkeeping key layout.
    pub pivot_schema: Schema,
    /// Pivot schema minus the variable, ascending; the head key layout.
    pub key_vars: Vec<Vertex>,
    /// Label layout for level `i` at index `i - 1`: chain edge minus the
    /// variable, ascending.
    pub level_vars: Vec<Vec<Vertex>>,
    nodes: Vec<SkipNode>,
    heads: HashMap<Tuple, NodeId>,
    book: HashMap<Tuple, NodeId>,
}

impl SkipList {
    fn levels(&self) -> usize {
        self.level_vars.len()
    }

    pub fn head(&self, key: &[u32]) -> Option<NodeId> {
        self.heads.get(key).copied()
    }

    pub fn value(&self, node: NodeId) -> Option<u32> {
        self.nodes[node].value
    }

    pub fn key_count(&self) -> usize {
        self.heads.len()
    }

    /// Follows the defined next link with the largest level whose label
    /// matches; level 0 is always defined. `labels[i-1]` addresses level `i`
    /// and shorter slices simply cap the probed levels.
    pub fn next_m(&self, node: NodeId, labels: &[Tuple], probes: &mut u64) -> Option<NodeId> {
        let n = &self.nodes[node];
        for lvl in (1..=labels.len().min(self.levels())).rev() {
            *probes += 1;
            if let Some(&link) = n.next[lvl - 1].get(&labels[lvl - 1]) {
                return link;
            }
        }
        *probes += 1;
        n.next0
    }

    pub fn prev_m(&self, node: NodeId, labels: &[Tuple], probes: &mut u64) -> NodeId {
        let n = &self.nodes[node];
        for lvl in (1..=labels.len().min(self.levels())).rev() {
            *probes += 1;
            if let Some(&link) = n.prev[lvl - 1].get(&labels[lvl - 1]) {
                return link;
            }
        }
        *probes += 1;
        n.prev0.expect("prev chain never ends before the head")
    }

    /// Values reached from the head of `key` by repeated `next_m`.
    pub fn iterate<'a>(&'a self, key: &[u32], labels: &'a [Tuple]) -> ListIter<'a> {
        ListIter {
            list: self,
            cur: self.head(key),
            labels,
            probes: 0,
        }
    }
}

pub struct ListIter<'a> {
    list: &'a SkipList,
    cur: Option<NodeId>,
    labels: &'a [Tuple],
    pub probes: u64,
}

impl<'a> Iterator for ListIter<'a> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        let cur = self.cur?;
        match self.list.next_m(cur, self.labels, &mut self.probes) {
            Some(nxt) => {
                self.cur = Some(nxt);
                self.list.nodes[nxt].value
            }
            None => {
                self.cur = None;
                None
            }
        }
    }
}

/// One doubly linked level-0 list per distinct pivot key, nodes in row-scan
/// order, plus the bookkeeping map from full pivot tuples to nodes.
pub fn build_list(
    var: Vertex,
    pivot: &Relation,
    level_vars: Vec<Vec<Vertex>>,
    ops: &mut u64,
) -> Result<SkipList, StorageError> {
    let key_vars: Vec<Vertex> = pivot
        .schema
        .vars()
        .iter()
        .copied()
        .filter(|&u| u != var)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let key_cols = pivot.schema.projector(&key_vars)?;
    let var_col = pivot
        .schema
        .position(var)
        .ok_or_else(|| StorageError::SchemaMismatch(format!("x{var} not in pivot schema")))?;
    let levels = level_vars.len();
    let mut list = SkipList {
        var,
        pivot_schema: pivot.schema.clone(),
        key_vars,
        level_vars,
        nodes: Vec::with_capacity(pivot.len() + 16),
        heads: HashMap::new(),
        book: HashMap::new(),
    };
    let mut tails: HashMap<Tuple, NodeId> = HashMap::new();
    for row in pivot.rows() {
        *ops += 1;
        let key = project_tuple(row, &key_cols);
        let head = match list.heads.get(&key) {
            Some(&h) => h,
            None => {
                let h = list.nodes.len();
                list.nodes.push(SkipNode::new(None, levels));
                list.heads.insert(key.clone(), h);
                tails.insert(key.clone(), h);
                h
            }
        };
        let _ = head;
        let tail = tails[&key];
        let id = list.nodes.len();
        let mut node = SkipNode::new(Some(row[var_col]), levels);
        node.prev0 = Some(tail);
        list.nodes.push(node);
        list.nodes[tail].next0 = Some(id);
        tails.insert(key, id);
        list.book.insert(row.clone(), id);
    }
    Ok(list)
}

/// Installs the level-`level` skipping links for one chain relation: every
/// tuple whose pivot projection survived the alpha-step and whose earlier
/// chain projections are absent gets a labeled bypass of its node, spliced
/// between the current labeled neighbors.
pub fn extend_list(
    list: &mut SkipList,
    level: usize,
    r_n: &Relation,
    earlier: &[&Relation],
    ops: &mut u64,
) -> Result<(), StorageError> {
    debug_assert_eq!(earlier.len(), level - 1);
    let u_cols = r_n.schema.projector(list.pivot_schema.vars())?;
    let label_cols: Vec<Vec<usize>> = (0..level)
        .map(|j| r_n.schema.projector(&list.level_vars[j]))
        .collect::<Result<_, _>>()?;
    let earlier_cols: Vec<(Vec<usize>, &Relation)> = earlier
        .iter()
        .map(|rel| Ok((r_n.schema.projector(rel.schema.vars())?, *rel)))
        .collect::<Result<_, StorageError>>()?;
    for row in r_n.rows() {
        *ops += 1;
        let a_u = project_tuple(row, &u_cols);
        let Some(&node) = list.book.get(&a_u) else {
            continue;
        };
        if earlier_cols.iter().any(|(cols, rel)| {
            *ops += 1;
            rel.contains(&project_tuple(row, cols))
        }) {
            continue;
        }
        let labels: Vec<Tuple> = label_cols
            .iter()
            .map(|cols| project_tuple(row, cols))
            .collect();
        let prev = list.prev_m(node, &labels, ops);
        let next = list.next_m(node, &labels, ops);
        let label = labels[level - 1].clone();
        list.nodes[prev].next[level - 1].insert(label.clone(), next);
        if let Some(nx) = next {
            list.nodes[nx].prev[level - 1].insert(label, prev);
        }
        *ops += 2;
    }
    Ok(())
}

/// Counters accumulated by the preprocessing pass; `ops` grows by a constant
/// for every row touched, hash probe and link install, so its growth with
/// |D| mirrors the time bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreprocessStats {
    pub ops: u64,
}

/// Snapshot of the working database after one elimination step, plus the
/// feasibility flag accumulated so far (an empty nullary pivot projection
/// empties every later reduced query).
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub relations: HashMap<EdgeId, Relation>,
    pub feasible: bool,
}

/// The output of preprocessing: the elimination order (front of `order` is
/// enumerated first) and one skip list per vertex.
#[derive(Debug)]
pub struct Preprocessed {
    pub order: Vec<Vertex>,
    pub lists: Vec<SkipList>,
    pub stats: PreprocessStats,
    /// Cleared when a nullary projected pivot comes out empty, which means
    /// no valuation exists at all.
    pub feasible: bool,
}

fn sorted_minus(set: &BTreeSet<Vertex>, var: Vertex) -> Vec<Vertex> {
    set.iter().copied().filter(|&u| u != var).collect()
}

/// Runs the recursive elimination over a working database keyed by edge id,
/// following the given sequence. When `trace` is provided, the database is
/// snapshot after every elimination step.
pub fn preprocess_full(
    h: &SignedHypergraph,
    rels: &HashMap<EdgeId, Relation>,
    seq: &EliminationSequence,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<Preprocessed, EngineError> {
    if seq.order.len() != h.vertex_count() {
        return Err(EngineError::InvalidSequence(format!(
            "sequence covers {} of {} vertices",
            seq.order.len(),
            h.vertex_count()
        )));
    }
    let mut work = h.clone();
    let mut db: HashMap<EdgeId, Relation> = rels.clone();
    let mut stats = PreprocessStats::default();
    let mut lists: Vec<(Vertex, SkipList)> = Vec::with_capacity(seq.order.len());
    let mut feasible = true;

    for (v, w) in seq.steps() {
        let pivot_id = w.pivot;
        if !work.is_alive(pivot_id) || !work.edge(pivot_id).verts.contains(&v) {
            return Err(EngineError::InvalidSequence(format!(
                "witness pivot {pivot_id} invalid for x{v}"
            )));
        }
        let pivot_set = work.edge(pivot_id).verts.clone();
        let mut r_u = db
            .get(&pivot_id)
            .ok_or_else(|| EngineError::MissingRelation(format!("edge {pivot_id}")))?
            .clone();

        // Alpha-step: fold every atom inside the pivot into the pivot.
        let inside: Vec<EdgeId> = work
            .edge_ids()
            .filter(|&e| {
                e != pivot_id
                    && work.edge(e).verts.contains(&v)
                    && work.edge(e).verts.is_subset(&pivot_set)
            })
            .collect();
        for e in inside {
            let other = db
                .get(&e)
                .ok_or_else(|| EngineError::MissingRelation(format!("edge {e}")))?;
            r_u = match work.edge(e).polarity {
                Polarity::Pos => r_u.semijoin(other, &mut stats.ops)?,
                Polarity::Neg => r_u.antijoin(other, &mut stats.ops)?,
            };
            db.remove(&e);
        }

        // Build the base lists over the filtered pivot.
        let level_vars: Vec<Vec<Vertex>> = w
            .chain
            .iter()
            .map(|&n| sorted_minus(&work.edge(n).verts, v))
            .collect();
        let mut list = build_list(v, &r_u, level_vars, &mut stats.ops)?;

        // Beta-step: install skipping links chain edge by chain edge, then
        // shrink the chain relations. Membership checks during the installs
        // run against the original chain relations, so all replacements are
        // applied after the loop.
        let chain_rels: Vec<Relation> = w
            .chain
            .iter()
            .map(|&n| {
                db.get(&n)
                    .cloned()
                    .ok_or_else(|| EngineError::MissingRelation(format!("edge {n}")))
            })
            .collect::<Result<_, _>>()?;
        for (i, r_n) in chain_rels.iter().enumerate() {
            let earlier: Vec<&Relation> = chain_rels[..i].iter().collect();
            extend_list(&mut list, i + 1, r_n, &earlier, &mut stats.ops)?;
        }

        // Replacement: keep exactly the projected chain tuples whose key has
        // a list but whose traversal is empty, so the recursion can prune
        // prefixes that do not extend to an answer.
        for (i, r_n) in chain_rels.iter().enumerate() {
            let minus_v: Vec<Vertex> = r_n
                .schema
                .vars()
                .iter()
                .copied()
                .filter(|&u| u != v)
                .collect();
            let projected = r_n.project(&minus_v, &mut stats.ops)?;
            let key_cols = projected.schema.projector(&list.key_vars)?;
            let label_cols: Vec<Vec<usize>> = (0..=i)
                .map(|j| projected.schema.projector(&list.level_vars[j]))
                .collect::<Result<_, _>>()?;
            let mut replacement = Relation::new(projected.schema.clone());
            for row in projected.rows() {
                stats.ops += 1;
                let Some(head) = list.head(&project_tuple(row, &key_cols)) else {
                    continue;
                };
                let labels: Vec<Tuple> = label_cols
                    .iter()
                    .map(|cols| project_tuple(row, cols))
                    .collect();
                if list.next_m(head, &labels, &mut stats.ops).is_none() {
                    replacement.insert(row.clone());
                }
            }
            db.insert(w.chain[i], replacement);
        }

        // Project the pivot and recurse on the reduced hypergraph.
        let minus_v: Vec<Vertex> = r_u
            .schema
            .vars()
            .iter()
            .copied()
            .filter(|&u| u != v)
            .collect();
        let projected = r_u.project(&minus_v, &mut stats.ops)?;
        if projected.schema.arity() == 0 {
            // The edge disappears from the reduced hypergraph; an empty
            // nullary projection means the whole query has no answers.
            feasible &= !projected.is_empty();
            db.remove(&pivot_id);
        } else {
            db.insert(pivot_id, projected);
        }
        work = work.remove_leaf(w)?;
        lists.push((v, list));
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceStep {
                relations: db.clone(),
                feasible,
            });
        }
    }

    // Store lists in sequence order (front of `order` first).
    let mut by_var: HashMap<Vertex, SkipList> = lists.into_iter().collect();
    let ordered: Vec<SkipList> = seq
        .order
        .iter()
        .map(|v| by_var.remove(v).expect("one list per vertex"))
        .collect();
    Ok(Preprocessed {
        order: seq.order.clone(),
        lists: ordered,
        stats,
        feasible,
    })
}

/// Streaming enumerator: nested iteration over the first `emit_len` lists in
/// sequence order. Tracks label-probe counts per emission gap, which is the
/// quantity the constant-delay property bounds.
pub struct Enumerator<'a> {
    pre: &'a Preprocessed,
    emit_len: usize,
    assign: Vec<Option<u32>>,
    cursors: Vec<Option<NodeId>>,
    started: bool,
    done: bool,
    probes: u64,
    gap_start: u64,
    pub max_gap_probes: u64,
    pub gap_count: u64,
    pub total_gap_probes: u64,
}

impl Preprocessed {
    pub fn enumerate(&self, emit_len: usize) -> Enumerator<'_> {
        let n_vars = self
            .order
            .iter()
            .copied()
            .max()
            .map(|v| v as usize + 1)
            .unwrap_or(0);
        Enumerator {
            pre: self,
            emit_len,
            assign: vec![None; n_vars],
            cursors: vec![None; self.order.len()],
            started: false,
            done: false,
            probes: 0,
            gap_start: 0,
            max_gap_probes: 0,
            gap_count: 0,
            total_gap_probes: 0,
        }
    }
}

impl<'a> Enumerator<'a> {
    fn key_of(&self, depth: usize) -> Tuple {
        self.pre.lists[depth]
            .key_vars
            .iter()
            .map(|&u| self.assign[u as usize].expect("key var assigned"))
            .collect()
    }

    fn labels_of(&self, depth: usize) -> Vec<Tuple> {
        self.pre.lists[depth]
            .level_vars
            .iter()
            .map(|vars| {
                vars.iter()
                    .map(|&u| self.assign[u as usize].expect("label var assigned"))
                    .collect()
            })
            .collect()
    }

    /// Advances the cursor at `depth`; a `None` cursor restarts from the
    /// head for the current prefix.
    fn advance(&mut self, depth: usize) -> bool {
        let list = &self.pre.lists[depth];
        let node = match self.cursors[depth] {
            Some(n) => n,
            None => match list.head(&self.key_of(depth)) {
                Some(h) => h,
                None => return false,
            },
        };
        let labels = self.labels_of(depth);
        match list.next_m(node, &labels, &mut self.probes) {
            Some(nxt) => {
                self.cursors[depth] = Some(nxt);
                self.assign[list.var as usize] = list.value(nxt);
                true
            }
            None => false,
        }
    }

    fn record_gap(&mut self) {
        let gap = self.probes - self.gap_start;
        self.gap_start = self.probes;
        self.max_gap_probes = self.max_gap_probes.max(gap);
        self.total_gap_probes += gap;
        self.gap_count += 1;
    }

    pub fn probes(&self) -> u64 {
        self.probes
    }
}

impl<'a> Iterator for Enumerator<'a> {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.done || self.emit_len == 0 || !self.pre.feasible {
            self.done = true;
            return None;
        }
        let f = self.emit_len;
        let mut depth = if self.started { f - 1 } else { 0 };
        if !self.started {
            self.started = true;
            self.cursors[0] = None;
        }
        loop {
            if self.advance(depth) {
                if depth + 1 == f {
                    self.record_gap();
                    let out = self
                        .pre
                        .order
                        .iter()
                        .take(f)
                        .map(|&v| self.assign[v as usize].unwrap())
                        .collect();
                    return Some(out);
                }
                depth += 1;
                self.cursors[depth] = None;
            } else {
                if depth == 0 {
                    self.done = true;
                    self.record_gap();
                    return None;
                }
                self.cursors[depth] = None;
                depth -= 1;
            }
        }
    }
}

/// A query prepared for enumeration: the augmented hypergraph was
/// preprocessed as if the query were full; enumeration touches only the
/// lists of the free variables.
#[derive(Debug)]
pub struct Prepared {
    pub pre: Preprocessed,
    pub emit_len: usize,
    /// Free variables in emission order (the first `emit_len` of `order`).
    pub emit_vars: Vec<Vertex>,
    full_order_len: usize,
}

impl Prepared {
    pub fn enumerate(&self) -> Enumerator<'_> {
        self.pre.enumerate(self.emit_len)
    }

    /// Boolean queries: probe whether any full answer exists.
    pub fn any_full_answer(&self) -> bool {
        self.pre.enumerate(self.full_order_len).next().is_some()
    }

    /// All answers, with the free variables reordered from sequence order to
    /// the query's head order.
    pub fn answers(&self, q: &Query) -> Vec<Tuple> {
        if self.emit_len == 0 {
            return if self.any_full_answer() {
                vec![Vec::new()]
            } else {
                Vec::new()
            };
        }
        let reorder: Vec<usize> = q
            .head_vars
            .iter()
            .map(|name| {
                let v = q.var_ids[name];
                self.emit_vars.iter().position(|&u| u == v).unwrap()
            })
            .collect();
        self.enumerate()
            .map(|t| reorder.iter().map(|&i| t[i]).collect())
            .collect()
    }
}

/// Relations for every atom of the query, keyed by hypergraph edge id.
pub fn atom_relations(q: &Query, db: &Database) -> Result<HashMap<EdgeId, Relation>, EngineError> {
    let mut out = HashMap::new();
    for (atom, &edge) in q.atoms.iter().zip(&q.atom_edges) {
        let rel = db
            .relation(&atom.name)
            .ok_or_else(|| EngineError::MissingRelation(atom.name.clone()))?;
        out.insert(edge, rel.clone());
    }
    Ok(out)
}

/// Free-connex preprocessing: adjoin the free set as an empty negative
/// relation, obtain a sequence with the free variables first, and preprocess
/// as a full query.
pub fn prepare(q: &Query, db: &Database) -> Result<Prepared, EngineError> {
    prepare_relations(q, atom_relations(q, db)?)
}

pub fn prepare_relations(
    q: &Query,
    mut rels: HashMap<EdgeId, Relation>,
) -> Result<Prepared, EngineError> {
    let (augmented, free_edge) = q.hypergraph.with_free_edge(&q.free);
    let free_sorted: Vec<Vertex> = q.free.iter().copied().collect();
    let seq = augmented
        .elimination_sequence(Some(&free_sorted))
        .ok_or_else(|| free_connex_violation(&augmented))?;
    if let Some(edge) = free_edge {
        rels.insert(edge, Relation::new(Schema::new(free_sorted.clone())));
    }
    let pre = preprocess_full(&augmented, &rels, &seq, None)?;
    let emit_len = q.free.len();
    let emit_vars = seq.order[..emit_len].to_vec();
    Ok(Prepared {
        pre,
        emit_len,
        emit_vars,
        full_order_len: seq.order.len(),
    })
}

pub(crate) fn free_connex_violation(augmented: &SignedHypergraph) -> EngineError {
    let witness = match augmented.is_signed_acyclic_definition() {
        Ok(false) => {
            // Find a smallest failing sub-multiset of negative edges.
            let neg: Vec<EdgeId> = augmented.neg_edge_ids().collect();
            let pos: Vec<BTreeSet<Vertex>> = augmented
                .pos_edge_ids()
                .map(|e| augmented.edge(e).verts.clone())
                .collect();
            let mut found = None;
            'subsets: for subset in 0u64..(1 << neg.len()) {
                let mut edges = pos.clone();
                let mut chosen = Vec::new();
                for (i, &n) in neg.iter().enumerate() {
                    if subset & (1 << i) != 0 {
                        edges.push(augmented.edge(n).verts.clone());
                        chosen.push(augmented.edge(n).verts.clone());
                    }
                }
                if crate::hypergraph::is_alpha_acyclic(&edges).is_none() {
                    found = Some(chosen);
                    break 'subsets;
                }
            }
            found
        }
        _ => None,
    };
    EngineError::FreeConnexViolation { witness }
}
