//! Semigroup range-sum backends and the keyed array decompositions that the
//! aggregation step queries.
//!
//! The inverse-Ackermann-optimal structure from the literature is not built
//! here; the general-semigroup backend is a disjoint sparse table with
//! O(w log w) construction and O(1) queries. Carriers with an additive
//! inverse use plain prefix sums, idempotent carriers a sparse table, both
//! with O(1) queries.

use crate::algebra::{AlgebraError, Semiring, Value};
use crate::storage::Tuple;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RangeSumError {
    #[error("no decomposition stored for key {0:?}")]
    UnknownKey(Tuple),
    #[error("backend {backend:?} is incompatible with the {semiring} carrier")]
    IncompatibleBackend {
        backend: BackendKind,
        semiring: &'static str,
    },
    #[error("range [{lo}, {hi}] is not aligned to break points")]
    MisalignedRange { lo: u32, hi: u32 },
    #[error("decomposition ranges are not contiguous at pair {0}")]
    NotContiguous(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    PrefixSum,
    SparseTable,
    DisjointSparseTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendChoice {
    #[default]
    Auto,
    Force(BackendKind),
}

/// Capability-driven selection: prefix sums need an additive inverse, the
/// sparse table an idempotent addition; the disjoint sparse table covers any
/// semigroup.
pub fn select_backend(s: &Semiring, choice: BackendChoice) -> BackendKind {
    match choice {
        BackendChoice::Force(kind) => kind,
        BackendChoice::Auto => {
            if s.has_additive_inverse {
                BackendKind::PrefixSum
            } else if s.plus_idempotent {
                BackendKind::SparseTable
            } else {
                BackendKind::DisjointSparseTable
            }
        }
    }
}

/// Answers exact plus-folds over inclusive index ranges of the value slice
/// it was built from.
#[derive(Debug, Clone)]
pub enum Backend {
    Prefix {
        prefix: Vec<Value>,
    },
    Sparse {
        levels: Vec<Vec<Value>>,
    },
    Disjoint {
        levels: Vec<Vec<Value>>,
        values: Vec<Value>,
    },
    Empty,
}

impl BackendKind {
    /// Prefix sums need an additive inverse and the sparse table an
    /// idempotent addition; the disjoint sparse table fits any semigroup.
    pub fn compatible_with(self, s: &Semiring) -> bool {
        match self {
            BackendKind::PrefixSum => s.has_additive_inverse,
            BackendKind::SparseTable => s.plus_idempotent,
            BackendKind::DisjointSparseTable => true,
        }
    }
}

pub fn build_backend(
    values: &[Value],
    s: &Semiring,
    kind: BackendKind,
    ops: &mut u64,
) -> Result<Backend, RangeSumError> {
    if !kind.compatible_with(s) {
        return Err(RangeSumError::IncompatibleBackend {
            backend: kind,
            semiring: s.kind.name(),
        });
    }
    let n = values.len();
    if n == 0 {
        return Ok(Backend::Empty);
    }
    match kind {
        BackendKind::PrefixSum => {
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(s.zero());
            for v in values {
                *ops += 1;
                let next = s.plus(prefix.last().unwrap(), v)?;
                prefix.push(next);
            }
            Ok(Backend::Prefix { prefix })
        }
        BackendKind::SparseTable => {
            let mut levels = vec![values.to_vec()];
            let mut span = 1usize;
            while span * 2 <= n {
                let prev = levels.last().unwrap();
                let mut next = Vec::with_capacity(n - span * 2 + 1);
                for i in 0..=(n - span * 2) {
                    *ops += 1;
                    next.push(s.plus(&prev[i], &prev[i + span])?);
                }
                levels.push(next);
                span *= 2;
            }
            Ok(Backend::Sparse { levels })
        }
        BackendKind::DisjointSparseTable => {
            let mut levels = Vec::new();
            let mut half = 1usize;
            while half < n {
                let block = half * 2;
                let mut row = values.to_vec();
                let mut start = 0;
                while start < n {
                    let mid = (start + half).min(n);
                    // Suffix folds toward the middle of the left half.
                    for i in (start..mid.saturating_sub(1)).rev() {
                        *ops += 1;
                        row[i] = s.plus(&values[i], &row[i + 1])?;
                    }
                    // Prefix folds away from the middle of the right half.
                    let end = (start + block).min(n);
                    for i in mid + 1..end {
                        *ops += 1;
                        row[i] = s.plus(&row[i - 1], &values[i])?;
                    }
                    start += block;
                }
                levels.push(row);
                half *= 2;
            }
            Ok(Backend::Disjoint {
                levels,
                values: values.to_vec(),
            })
        }
    }
}

impl Backend {
    /// Plus-fold of the built values over the inclusive range `lo..=hi`.
    pub fn query(
        &self,
        lo: usize,
        hi: usize,
        s: &Semiring,
        ops: &mut u64,
    ) -> Result<Value, RangeSumError> {
        assert!(lo <= hi, "caller filters empty ranges");
        *ops += 1;
        match self {
            Backend::Empty => unreachable!("empty backend never queried"),
            Backend::Prefix { prefix } => {
                let total = prefix[hi + 1].clone();
                let cut = s
                    .neg(&prefix[lo])
                    .expect("prefix backend needs an additive inverse")?;
                Ok(s.plus(&total, &cut)?)
            }
            Backend::Sparse { levels } => {
                let len = hi - lo + 1;
                let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
                let span = 1usize << k;
                Ok(s.plus(&levels[k][lo], &levels[k][hi + 1 - span])?)
            }
            Backend::Disjoint { levels, values } => {
                if lo == hi {
                    return Ok(values[lo].clone());
                }
                let j = usize::BITS as usize - 1 - (lo ^ hi).leading_zeros() as usize;
                Ok(s.plus(&levels[j][lo], &levels[j][hi])?)
            }
        }
    }
}

/// Upper bound of a decomposition query; `Bot` means "to the end".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperBound {
    At(u32),
    Bot,
}

/// One contiguous piece of an array decomposition: an inclusive 1-based
/// range of the conceptual array and the plus-fold of that range.
#[derive(Debug, Clone)]
pub struct Pair {
    pub lo: u32,
    pub hi: u32,
    pub value: Value,
}

/// Contiguous pairs covering `1..=w`, conceptually terminated by the dummy
/// pair `([w+1, bot], zero)`. Queries must align to break points (pair right
/// endpoints); they are answered by the backend over whole pairs.
#[derive(Debug, Clone)]
pub struct ArrayDecomposition {
    pairs: Vec<Pair>,
    pub w: u32,
    by_hi: HashMap<u32, usize>,
    backend: Backend,
}

impl ArrayDecomposition {
    pub fn build(
        pairs: Vec<Pair>,
        w: u32,
        s: &Semiring,
        kind: BackendKind,
        ops: &mut u64,
    ) -> Result<ArrayDecomposition, RangeSumError> {
        let mut expect = 1u32;
        for (i, p) in pairs.iter().enumerate() {
            if p.lo != expect || p.hi < p.lo {
                return Err(RangeSumError::NotContiguous(i));
            }
            expect = p.hi + 1;
        }
        if expect != w + 1 {
            return Err(RangeSumError::NotContiguous(pairs.len()));
        }
        let by_hi = pairs.iter().enumerate().map(|(i, p)| (p.hi, i)).collect();
        let values: Vec<Value> = pairs.iter().map(|p| p.value.clone()).collect();
        let backend = build_backend(&values, s, kind, ops)?;
        Ok(ArrayDecomposition {
            pairs,
            w,
            by_hi,
            backend,
        })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// The dummy terminator `([w+1, bot], zero)` that closes the pair list.
    pub fn dummy_pair(&self, s: &Semiring) -> (u32, UpperBound, Value) {
        (self.w + 1, UpperBound::Bot, s.zero())
    }

    /// Break points in increasing order (right endpoints of the pairs).
    pub fn break_points(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs.iter().map(|p| p.hi)
    }

    /// Exact plus-fold over `[lo, hi]`; both `lo - 1` and `hi` must be break
    /// points. An empty range yields zero.
    pub fn query(
        &self,
        lo: u32,
        hi: UpperBound,
        s: &Semiring,
        ops: &mut u64,
    ) -> Result<Value, RangeSumError> {
        let hi = match hi {
            UpperBound::At(h) => h,
            UpperBound::Bot => self.w,
        };
        if lo > hi {
            return Ok(s.zero());
        }
        let start = if lo == 1 {
            0
        } else {
            match self.by_hi.get(&(lo - 1)) {
                Some(&i) => i + 1,
                None => return Err(RangeSumError::MisalignedRange { lo, hi }),
            }
        };
        let end = match self.by_hi.get(&hi) {
            Some(&i) => i,
            None => return Err(RangeSumError::MisalignedRange { lo, hi }),
        };
        debug_assert!(start <= end);
        self.backend.query(start, end, s, ops)
    }
}

/// Keyed family of array decompositions for one chain level.
#[derive(Debug, Clone)]
pub struct RangeSumOracle {
    decomps: HashMap<Tuple, ArrayDecomposition>,
    key_order: Vec<Tuple>,
}

impl RangeSumOracle {
    pub fn new() -> RangeSumOracle {
        RangeSumOracle {
            decomps: HashMap::new(),
            key_order: Vec::new(),
        }
    }

    pub fn insert(&mut self, key: Tuple, decomp: ArrayDecomposition) {
        if !self.decomps.contains_key(&key) {
            self.key_order.push(key.clone());
        }
        self.decomps.insert(key, decomp);
    }

    pub fn get(&self, key: &[u32]) -> Option<&ArrayDecomposition> {
        self.decomps.get(key)
    }

    pub fn keys(&self) -> &[Tuple] {
        &self.key_order
    }

    pub fn total_pairs(&self) -> usize {
        self.decomps.values().map(|d| d.pairs.len()).sum()
    }

    pub fn query(
        &self,
        key: &[u32],
        lo: u32,
        hi: UpperBound,
        s: &Semiring,
        ops: &mut u64,
    ) -> Result<Value, RangeSumError> {
        let decomp = self
            .decomps
            .get(key)
            .ok_or_else(|| RangeSumError::UnknownKey(key.to_vec()))?;
        decomp.query(lo, hi, s, ops)
    }
}

impl Default for RangeSumOracle {
    fn default() -> Self {
        Self::new()
    }
}


// ---------------------------------------------------------------------------
// Keyed oracle construction over a refactored spine.
// ---------------------------------------------------------------------------

use crate::faq::{evaluate, FactorStore, FaqError, Spine};
use crate::hypergraph::Vertex;
use crate::storage::project_tuple;
use std::collections::{BTreeSet, HashSet};

/// Value-index array for one pivot key: the eliminated variable's values in
/// first-seen order, with their 1-based positions.
#[derive(Debug, Clone, Default)]
pub struct A0Entry {
    pub xs: Vec<u32>,
    pub pos: HashMap<u32, u32>,
}

/// Oracle family for one elimination step: the value-index arrays plus one
/// keyed range-sum oracle per chain level (level 0 covers the pivot).
#[derive(Debug)]
pub struct OracleFamily {
    pub a0_key_vars: Vec<Vertex>,
    pub a0: HashMap<Tuple, A0Entry>,
    pub a0_order: Vec<Tuple>,
    pub levels: Vec<RangeSumOracle>,
    pub level_key_vars: Vec<Vec<Vertex>>,
}

impl OracleFamily {
    pub fn total_pairs(&self) -> usize {
        self.levels.iter().map(|l| l.total_pairs()).sum()
    }
}

struct LevelState {
    last: u32,
    pairs: Vec<Pair>,
    mu: Option<Value>,
}

fn sorted_key_vars(schema: &crate::storage::Schema, var: Vertex) -> Vec<Vertex> {
    schema
        .vars()
        .iter()
        .copied()
        .filter(|&v| v != var)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Positions of the eliminated variable and the ascending key variables
/// inside a factor's own column order, for key reconstruction.
fn rebuild_cols(
    schema: &crate::storage::Schema,
    var: Vertex,
    key_vars: &[Vertex],
) -> Vec<Option<usize>> {
    schema
        .vars()
        .iter()
        .map(|&v| {
            if v == var {
                None
            } else {
                Some(key_vars.iter().position(|&u| u == v).unwrap())
            }
        })
        .collect()
}

fn rebuild_key(cols: &[Option<usize>], key: &[u32], xn: u32) -> Tuple {
    cols.iter()
        .map(|c| match c {
            None => xn,
            Some(i) => key[*i],
        })
        .collect()
}

/// Builds the value-index arrays and, bottom-up, one keyed decomposition
/// family per chain level. Every level's break points are a subset of the
/// level below (for the projected key), so the internal range queries are
/// always aligned; a misaligned query signals a construction bug and
/// surfaces as an error.
pub fn build_oracle(
    spine: &Spine,
    store: &FactorStore,
    s: &Semiring,
    var: Vertex,
    choice: BackendChoice,
    ops: &mut u64,
) -> Result<OracleFamily, FaqError> {
    let kind = select_backend(s, choice);
    let pivot = store.factor(spine.pivot);
    let u_key_vars = sorted_key_vars(&pivot.schema, var);
    let n_assign = 1 + store_max_var(store, spine) as usize;

    // Value-index arrays over the union of the pivot and all chain tables.
    let mut a0: HashMap<Tuple, A0Entry> = HashMap::new();
    let mut a0_order: Vec<Tuple> = Vec::new();
    let scan_ids: Vec<crate::faq::FactorId> = std::iter::once(spine.pivot)
        .chain(spine.levels.iter().map(|l| l.guard))
        .collect();
    for fid in &scan_ids {
        let fac = store.factor(*fid);
        let key_cols = fac.schema.projector(&u_key_vars)?;
        let var_col = fac
            .schema
            .position(var)
            .ok_or_else(|| FaqError::InvalidWitness(format!("x{var} missing from chain factor")))?;
        for key in fac.keys() {
            *ops += 1;
            let a0key = project_tuple(key, &key_cols);
            let xn = key[var_col];
            let entry = match a0.get_mut(&a0key) {
                Some(e) => e,
                None => {
                    a0_order.push(a0key.clone());
                    a0.entry(a0key).or_default()
                }
            };
            if !entry.pos.contains_key(&xn) {
                entry.xs.push(xn);
                entry.pos.insert(xn, entry.xs.len() as u32);
            }
        }
    }

    // Level 0: trivial decomposition of the pivot weights.
    let pivot_cols = rebuild_cols(&pivot.schema, var, &u_key_vars);
    let mut t0 = RangeSumOracle::new();
    for key in &a0_order {
        let entry = &a0[key];
        let pairs: Vec<Pair> = entry
            .xs
            .iter()
            .enumerate()
            .map(|(idx, &xn)| {
                *ops += 1;
                let full = rebuild_key(&pivot_cols, key, xn);
                Pair {
                    lo: idx as u32 + 1,
                    hi: idx as u32 + 1,
                    value: pivot.lookup(&full).cloned().unwrap_or_else(|| s.zero()),
                }
            })
            .collect();
        let w = entry.xs.len() as u32;
        t0.insert(
            key.clone(),
            ArrayDecomposition::build(pairs, w, s, kind, ops)?,
        );
    }
    let mut levels = vec![t0];
    let mut level_key_vars = vec![u_key_vars.clone()];

    for i in 1..=spine.levels.len() {
        let level = &spine.levels[i - 1];
        let fac_i = store.factor(level.guard);
        let ni_key_vars = sorted_key_vars(&fac_i.schema, var);
        let prev_key_vars = level_key_vars[i - 1].clone();
        let prev_proj: Vec<usize> = prev_key_vars
            .iter()
            .map(|v| ni_key_vars.iter().position(|u| u == v).unwrap())
            .collect();
        let u_from_prev: Vec<usize> = u_key_vars
            .iter()
            .map(|v| prev_key_vars.iter().position(|u| u == v).unwrap())
            .collect();
        let fac_cols = rebuild_cols(&fac_i.schema, var, &ni_key_vars);

        // Extension map: for each (previous key, value position) the target
        // keys whose chain membership puts a break point there.
        let mut g: HashMap<Tuple, HashMap<u32, Vec<Tuple>>> = HashMap::new();
        let mut seen: HashSet<(u32, Tuple)> = HashSet::new();
        let mut target_order: Vec<Tuple> = Vec::new();
        let mut state: HashMap<Tuple, LevelState> = HashMap::new();
        for s_idx in (i - 1)..spine.levels.len() {
            let fs = store.factor(spine.levels[s_idx].guard);
            let cols = fs.schema.projector(&ni_key_vars)?;
            let var_col = fs.schema.position(var).unwrap();
            for key in fs.keys() {
                *ops += 1;
                let key_i = project_tuple(key, &cols);
                let xn = key[var_col];
                if !seen.insert((xn, key_i.clone())) {
                    continue;
                }
                let kp = project_tuple(&key_i, &prev_proj);
                g.entry(kp)
                    .or_default()
                    .entry(xn)
                    .or_default()
                    .push(key_i.clone());
                if let std::collections::hash_map::Entry::Vacant(e) = state.entry(key_i) {
                    target_order.push(e.key().clone());
                    e.insert(LevelState {
                        last: 0,
                        pairs: Vec::new(),
                        mu: None,
                    });
                }
            }
        }

        let mut assign: Vec<Option<u32>> = vec![None; n_assign];
        let mu_of = |key_i: &Tuple,
                     st: &mut LevelState,
                     assign: &mut Vec<Option<u32>>,
                     ops: &mut u64|
         -> Result<Value, FaqError> {
            if let Some(v) = &st.mu {
                return Ok(v.clone());
            }
            for (c, &v) in ni_key_vars.iter().enumerate() {
                assign[v as usize] = Some(key_i[c]);
            }
            let mut acc = s.one();
            for m in &level.mu {
                *ops += 1;
                let x = evaluate(m, store, s, assign)?;
                acc = s.times(&acc, &x)?;
            }
            for &v in &ni_key_vars {
                assign[v as usize] = None;
            }
            st.mu = Some(acc.clone());
            Ok(acc)
        };

        // One scan over the previous level's break points.
        let prev_oracle = &levels[i - 1];
        for key_prev in prev_oracle.keys() {
            let Some(exts_by_xn) = g.get(key_prev) else {
                continue;
            };
            let decomp = prev_oracle.get(key_prev).unwrap();
            let a0key = project_tuple(key_prev, &u_from_prev);
            let entry = &a0[&a0key];
            for bp in decomp.break_points() {
                *ops += 1;
                let xn = entry.xs[bp as usize - 1];
                let Some(exts) = exts_by_xn.get(&xn) else {
                    continue;
                };
                for key_i in exts {
                    let st = state.get_mut(key_i).unwrap();
                    let mu = if st.mu.is_some() {
                        st.mu.clone().unwrap()
                    } else {
                        mu_of(key_i, st, &mut assign, ops)?
                    };
                    if st.last < bp - 1 {
                        let m1 = decomp.query(st.last + 1, UpperBound::At(bp - 1), s, ops)?;
                        let value = s.times(&mu, &m1)?;
                        st.pairs.push(Pair {
                            lo: st.last + 1,
                            hi: bp - 1,
                            value,
                        });
                    }
                    let full = rebuild_key(&fac_cols, key_i, xn);
                    let value = match fac_i.lookup(&full) {
                        Some(w) => w.clone(),
                        None => {
                            let m2 = decomp.query(bp, UpperBound::At(bp), s, ops)?;
                            s.times(&mu, &m2)?
                        }
                    };
                    st.pairs.push(Pair {
                        lo: bp,
                        hi: bp,
                        value,
                    });
                    st.last = bp;
                }
            }
        }

        // Trailing gap up to the end of the value array, then freeze.
        let mut oracle = RangeSumOracle::new();
        for key_i in target_order {
            let mut st = state.remove(&key_i).unwrap();
            let kp = project_tuple(&key_i, &prev_proj);
            let a0key = project_tuple(&kp, &u_from_prev);
            let w = a0[&a0key].xs.len() as u32;
            if st.last < w {
                let mu = if st.mu.is_some() {
                    st.mu.clone().unwrap()
                } else {
                    mu_of(&key_i, &mut st, &mut assign, ops)?
                };
                let m = levels[i - 1].query(&kp, st.last + 1, UpperBound::At(w), s, ops)?;
                let value = s.times(&mu, &m)?;
                st.pairs.push(Pair {
                    lo: st.last + 1,
                    hi: w,
                    value,
                });
            }
            oracle.insert(key_i, ArrayDecomposition::build(st.pairs, w, s, kind, ops)?);
        }
        levels.push(oracle);
        level_key_vars.push(ni_key_vars);
    }

    Ok(OracleFamily {
        a0_key_vars: u_key_vars,
        a0,
        a0_order,
        levels,
        level_key_vars,
    })
}

fn store_max_var(store: &FactorStore, spine: &Spine) -> Vertex {
    let mut max = 0;
    let mut visit = |fid: crate::faq::FactorId| {
        for &v in store.factor(fid).schema.vars() {
            max = max.max(v);
        }
    };
    visit(spine.pivot);
    for l in &spine.levels {
        visit(l.guard);
    }
    max
}
