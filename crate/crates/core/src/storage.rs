//! Listing-representation relations and weighted factors, string interning,
//! CSV ingestion and the hash-based relational operators used by the
//! preprocessing passes.

use crate::algebra::{AlgebraError, Semiring, Value};
use crate::hypergraph::Vertex;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate key {key} in weighted table {path}")]
    DuplicateFactorKey { path: String, key: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Tuples hold interned value ids, one per schema variable.
pub type Tuple = Vec<u32>;

/// Intern table mapping value strings to dense ids in first-seen order. One
/// table serves the whole database so that every query loaded against it
/// sees the same ids.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    by_name: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.by_name.insert(name.to_string(), id);
        self.names.push(name.to_string());
        id
    }

    pub fn lookup(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Ordered variable list; the column layout of a relation or factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    vars: Vec<Vertex>,
    positions: HashMap<Vertex, usize>,
}

impl Schema {
    pub fn new(vars: Vec<Vertex>) -> Schema {
        let positions = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let s = Schema { vars, positions };
        assert_eq!(s.vars.len(), s.positions.len(), "duplicate schema variable");
        s
    }

    pub fn vars(&self) -> &[Vertex] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn position(&self, var: Vertex) -> Option<usize> {
        self.positions.get(&var).copied()
    }

    pub fn contains(&self, var: Vertex) -> bool {
        self.positions.contains_key(&var)
    }

    pub fn is_subset_of(&self, other: &Schema) -> bool {
        self.vars.iter().all(|v| other.contains(*v))
    }

    /// Column indices that project a tuple of this schema onto `target`.
    pub fn projector(&self, target: &[Vertex]) -> Result<Vec<usize>, StorageError> {
        target
            .iter()
            .map(|v| {
                self.position(*v).ok_or_else(|| {
                    StorageError::SchemaMismatch(format!("variable x{v} not in schema"))
                })
            })
            .collect()
    }
}

pub fn project_tuple(tuple: &[u32], cols: &[usize]) -> Tuple {
    cols.iter().map(|&c| tuple[c]).collect()
}

/// Duplicate-free set of tuples in insertion order.
#[derive(Debug, Clone)]
pub struct Relation {
    pub schema: Schema,
    rows: Vec<Tuple>,
    index: HashSet<Tuple>,
}

impl Relation {
    pub fn new(schema: Schema) -> Relation {
        Relation {
            schema,
            rows: Vec::new(),
            index: HashSet::new(),
        }
    }

    pub fn from_rows(schema: Schema, rows: impl IntoIterator<Item = Tuple>) -> Relation {
        let mut r = Relation::new(schema);
        for row in rows {
            r.insert(row);
        }
        r
    }

    /// Inserts a row, silently deduplicating.
    pub fn insert(&mut self, row: Tuple) -> bool {
        debug_assert_eq!(row.len(), self.schema.arity());
        if self.index.contains(&row) {
            return false;
        }
        self.index.insert(row.clone());
        self.rows.push(row);
        true
    }

    pub fn rows(&self) -> &[Tuple] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: &[u32]) -> bool {
        self.index.contains(row)
    }

    /// Keeps the rows of `self` whose projection onto `other`'s schema
    /// appears in `other`. Expected linear time via hashing.
    pub fn semijoin(&self, other: &Relation, ops: &mut u64) -> Result<Relation, StorageError> {
        let cols = self.schema.projector(other.schema.vars())?;
        let mut out = Relation::new(self.schema.clone());
        for row in &self.rows {
            *ops += 1;
            if other.contains(&project_tuple(row, &cols)) {
                out.insert(row.clone());
            }
        }
        Ok(out)
    }

    /// Keeps the rows whose projection does not appear in `other`.
    pub fn antijoin(&self, other: &Relation, ops: &mut u64) -> Result<Relation, StorageError> {
        let cols = self.schema.projector(other.schema.vars())?;
        let mut out = Relation::new(self.schema.clone());
        for row in &self.rows {
            *ops += 1;
            if !other.contains(&project_tuple(row, &cols)) {
                out.insert(row.clone());
            }
        }
        Ok(out)
    }

    /// Duplicate-free projection onto `vars`.
    pub fn project(&self, vars: &[Vertex], ops: &mut u64) -> Result<Relation, StorageError> {
        let cols = self.schema.projector(vars)?;
        let mut out = Relation::new(Schema::new(vars.to_vec()));
        for row in &self.rows {
            *ops += 1;
            out.insert(project_tuple(row, &cols));
        }
        Ok(out)
    }
}

/// Weighted table: a map from tuples to semiring values, plus the default
/// constant a negative factor falls back to off its table.
#[derive(Debug, Clone)]
pub struct Factor {
    pub schema: Schema,
    keys: Vec<Tuple>,
    index: HashMap<Tuple, usize>,
    weights: Vec<Value>,
    pub default: Option<Value>,
}

impl Factor {
    pub fn new(schema: Schema, default: Option<Value>) -> Factor {
        Factor {
            schema,
            keys: Vec::new(),
            index: HashMap::new(),
            weights: Vec::new(),
            default,
        }
    }

    /// Inserts a keyed weight; a repeated key is an error for loaded tables.
    pub fn insert(&mut self, key: Tuple, weight: Value) -> Result<(), StorageError> {
        debug_assert_eq!(key.len(), self.schema.arity());
        if self.index.contains_key(&key) {
            return Err(StorageError::DuplicateFactorKey {
                path: String::new(),
                key: format!("{key:?}"),
            });
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.weights.push(weight);
        Ok(())
    }

    /// Inserts or multiplicatively updates are not needed; preprocessing
    /// replaces weights in place via this accessor.
    pub fn set_weight(&mut self, idx: usize, weight: Value) {
        self.weights[idx] = weight;
    }

    pub fn keys(&self) -> &[Tuple] {
        &self.keys
    }

    pub fn weight_at(&self, idx: usize) -> &Value {
        &self.weights[idx]
    }

    pub fn lookup(&self, key: &[u32]) -> Option<&Value> {
        self.index.get(key).map(|&i| &self.weights[i])
    }

    pub fn contains(&self, key: &[u32]) -> bool {
        self.index.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tuple, &Value)> {
        self.keys.iter().zip(self.weights.iter())
    }
}

/// Either side of the storage layer, keyed by atom name.
#[derive(Debug, Clone)]
pub enum Table {
    Rel(Relation),
    Fac(Factor),
}

/// Atom-name-to-table map plus the interner that fixes value ids.
#[derive(Debug, Clone, Default)]
pub struct Database {
    pub tables: HashMap<String, Table>,
    pub interner: Interner,
}

impl Database {
    pub fn relation(&self, atom: &str) -> Option<&Relation> {
        match self.tables.get(atom) {
            Some(Table::Rel(r)) => Some(r),
            _ => None,
        }
    }

    pub fn factor(&self, atom: &str) -> Option<&Factor> {
        match self.tables.get(atom) {
            Some(Table::Fac(f)) => Some(f),
            _ => None,
        }
    }

    /// Total number of stored rows, the |D| of all complexity statements.
    pub fn size(&self) -> usize {
        self.tables
            .values()
            .map(|t| match t {
                Table::Rel(r) => r.len(),
                Table::Fac(f) => f.len(),
            })
            .sum()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    line.split(',').map(|s| s.trim().to_string()).collect()
}

/// Loads a CSV file whose header names the schema variables (plus a final
/// `weight` column when `weighted`). Rows intern their string values per
/// variable; duplicate rows of an unweighted relation are silently dropped,
/// duplicate keys of a weighted table are an error.
pub fn load_csv(
    path: &Path,
    var_names: &HashMap<String, Vertex>,
    schema_vars: &[String],
    weighted: bool,
    semiring: &Semiring,
    default: Option<Value>,
    interner: &mut Interner,
) -> Result<Table, StorageError> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|source| StorageError::Io {
        path: display.clone(),
        source,
    })?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| StorageError::Parse {
        path: display.clone(),
        line: 1,
        msg: "missing header row".into(),
    })?;
    let mut cols = split_csv_line(header);
    let mut weight_col = None;
    if weighted {
        match cols.last().map(|c| c == "weight") {
            Some(true) => {
                cols.pop();
                weight_col = Some(cols.len());
            }
            _ => {
                return Err(StorageError::Parse {
                    path: display,
                    line: 1,
                    msg: "weighted table must end with a `weight` column".into(),
                })
            }
        }
    }
    // Header columns must name exactly the schema variables.
    let mut expected: Vec<&String> = schema_vars.iter().collect();
    expected.sort();
    let mut got: Vec<&String> = cols.iter().collect();
    got.sort();
    if expected != got {
        return Err(StorageError::Parse {
            path: display,
            line: 1,
            msg: format!("header {cols:?} does not match schema {schema_vars:?}"),
        });
    }
    let order: Vec<usize> = schema_vars
        .iter()
        .map(|v| cols.iter().position(|c| c == v).unwrap())
        .collect();
    let schema = Schema::new(schema_vars.iter().map(|v| var_names[v]).collect());

    let mut rel = Relation::new(schema.clone());
    let mut fac = Factor::new(schema, default);
    for (lineno, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(raw);
        let want = cols.len() + usize::from(weighted);
        if fields.len() != want {
            return Err(StorageError::Parse {
                path: display,
                line: lineno + 1,
                msg: format!("expected {} fields, got {}", want, fields.len()),
            });
        }
        let mut interned: Tuple = vec![0; cols.len()];
        for (c, field) in fields.iter().take(cols.len()).enumerate() {
            interned[c] = interner.intern(field);
        }
        let row: Tuple = order.iter().map(|&c| interned[c]).collect();
        if let Some(wc) = weight_col {
            let weight = semiring
                .parse_weight(&fields[wc])
                .map_err(|e| StorageError::Parse {
                    path: display.clone(),
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
            fac.insert(row, weight)
                .map_err(|_| StorageError::DuplicateFactorKey {
                    path: display.clone(),
                    key: fields[..cols.len()].join(","),
                })?;
        } else {
            rel.insert(row);
        }
    }
    Ok(if weighted {
        Table::Fac(fac)
    } else {
        Table::Rel(rel)
    })
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} rows over {:?}]", self.len(), self.schema.vars())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::SemiringKind;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rel(vars: &[Vertex], rows: &[&[u32]]) -> Relation {
        Relation::from_rows(Schema::new(vars.to_vec()), rows.iter().map(|r| r.to_vec()))
    }

    #[test]
    fn semijoin_antijoin_partition() {
        let r = rel(&[0, 1], &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let s = rel(&[1], &[&[0]]);
        let mut ops = 0;
        let keep = r.semijoin(&s, &mut ops).unwrap();
        let drop = r.antijoin(&s, &mut ops).unwrap();
        assert_eq!(keep.len() + drop.len(), r.len());
        for row in r.rows() {
            assert!(keep.contains(row) ^ drop.contains(row));
        }
    }

    #[test]
    fn semijoin_with_projection_of_self_is_identity() {
        let r = rel(&[0, 1], &[&[0, 0], &[1, 2]]);
        let mut ops = 0;
        let p = r.project(&[1], &mut ops).unwrap();
        let s = r.semijoin(&p, &mut ops).unwrap();
        assert_eq!(s.rows(), r.rows());
    }

    #[test]
    fn operators_match_nested_loop_definition() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let r_rows: Vec<Tuple> = (0..rng.gen_range(0..64))
                .map(|_| vec![rng.gen_range(0..8u32), rng.gen_range(0..8u32)])
                .collect();
            let s_rows: Vec<Tuple> = (0..rng.gen_range(0..64))
                .map(|_| vec![rng.gen_range(0..8u32)])
                .collect();
            let r = Relation::from_rows(Schema::new(vec![0, 1]), r_rows);
            let s = Relation::from_rows(Schema::new(vec![1]), s_rows);
            let mut ops = 0;
            let semi = r.semijoin(&s, &mut ops).unwrap();
            let anti = r.antijoin(&s, &mut ops).unwrap();
            let proj = r.project(&[1], &mut ops).unwrap();
            for row in r.rows() {
                let hit = s.rows().iter().any(|t| t[0] == row[1]);
                assert_eq!(semi.contains(row), hit);
                assert_eq!(anti.contains(row), !hit);
            }
            let mut expect: Vec<Tuple> = r.rows().iter().map(|t| vec![t[1]]).collect();
            expect.sort();
            expect.dedup();
            let mut got: Vec<Tuple> = proj.rows().to_vec();
            got.sort();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn project_full_schema_is_identity() {
        let r = rel(&[0, 1], &[&[3, 4], &[5, 6]]);
        let mut ops = 0;
        let p = r.project(&[0, 1], &mut ops).unwrap();
        assert_eq!(p.rows(), r.rows());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let r = rel(&[0, 1], &[&[0, 0]]);
        let s = rel(&[2], &[&[0]]);
        let mut ops = 0;
        assert!(matches!(
            r.semijoin(&s, &mut ops),
            Err(StorageError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("signedq-storage-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("u.csv");
        std::fs::write(&path, "x3,x4\nc1,d1\nc1,d2\nc1,d1\n").unwrap();
        let mut names = HashMap::new();
        names.insert("x3".to_string(), 2u32);
        names.insert("x4".to_string(), 3u32);
        let mut interner = Interner::default();
        let table = load_csv(
            &path,
            &names,
            &["x3".into(), "x4".into()],
            false,
            &Semiring::of(SemiringKind::Boolean),
            None,
            &mut interner,
        )
        .unwrap();
        match table {
            Table::Rel(r) => {
                assert_eq!(r.len(), 2); // duplicate dropped
                assert_eq!(interner.name(r.rows()[0][0]), "c1");
            }
            _ => panic!("expected relation"),
        }

        // Malformed weight in a counting factor.
        let path = dir.join("w.csv");
        std::fs::write(&path, "x3,weight\nc1,abc\n").unwrap();
        let res = load_csv(
            &path,
            &names,
            &["x3".into()],
            true,
            &Semiring::of(SemiringKind::Counting),
            None,
            &mut interner,
        );
        assert!(res.is_err());

        // Empty file with header only.
        let path = dir.join("e.csv");
        std::fs::write(&path, "x3,x4\n").unwrap();
        let table = load_csv(
            &path,
            &names,
            &["x3".into(), "x4".into()],
            false,
            &Semiring::of(SemiringKind::Boolean),
            None,
            &mut interner,
        )
        .unwrap();
        match table {
            Table::Rel(r) => assert!(r.is_empty()),
            _ => panic!(),
        }

        // Duplicate factor key.
        let path = dir.join("d.csv");
        std::fs::write(&path, "x3,weight\nc1,1\nc1,2\n").unwrap();
        let res = load_csv(
            &path,
            &names,
            &["x3".into()],
            true,
            &Semiring::of(SemiringKind::Counting),
            None,
            &mut interner,
        );
        assert!(matches!(res, Err(StorageError::DuplicateFactorKey { .. })));
    }
}
