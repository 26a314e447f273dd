//! Command-line surface: analyze, enumerate, aggregate, count, diff and a
//! synthetic scaling bench. Data directories hold one CSV per atom, named
//! `<Atom>.csv`, with a header row of variable names (plus a trailing
//! `weight` column for weighted tables).
//!
//! Exit codes: 0 on success, 2 on parse errors, 1 on anything else
//! (structural rejections included).

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use signedq_core::algebra::{Semiring, Value};
use signedq_core::frontend::{parse_program, parse_query, FrontendError, Query};
use signedq_core::gen::scaled_database;
use signedq_core::oracle;
use signedq_core::rangesum::{BackendChoice, BackendKind};
use signedq_core::storage::{load_csv, Database, Tuple};
use signedq_core::{cq, diff, faq};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "signedq",
    about = "constant-delay enumeration and semiring aggregation for queries with negation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    PrefixSum,
    SparseTable,
    DisjointSparseTable,
}

impl BackendArg {
    fn choice(self) -> BackendChoice {
        match self {
            BackendArg::Auto => BackendChoice::Auto,
            BackendArg::PrefixSum => BackendChoice::Force(BackendKind::PrefixSum),
            BackendArg::SparseTable => BackendChoice::Force(BackendKind::SparseTable),
            BackendArg::DisjointSparseTable => {
                BackendChoice::Force(BackendKind::DisjointSparseTable)
            }
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Report safety, acyclicity, free-connexity and the elimination order.
    Analyze { query: PathBuf },
    /// Stream the answers of a query with negation as CSV rows.
    Enumerate {
        query: PathBuf,
        data_dir: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        /// Cross-check against the brute-force evaluator; fail on mismatch.
        #[arg(long)]
        oracle: bool,
    },
    /// Stream weighted answers of an aggregation query.
    Aggregate {
        query: PathBuf,
        data_dir: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        oracle: bool,
        /// Override the query file's @semiring directive.
        #[arg(long)]
        semiring: Option<String>,
        #[arg(long, value_enum, default_value = "auto")]
        backend: BackendArg,
    },
    /// Count the satisfying valuations by inclusion-exclusion.
    Count {
        query: PathBuf,
        data_dir: PathBuf,
        #[arg(long)]
        oracle: bool,
    },
    /// Difference of the two full queries in the file, first minus second.
    Diff {
        query: PathBuf,
        data_dir: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        oracle: bool,
    },
    /// Synthetic scaling runs; rows go to standard output as CSV.
    Bench {
        query: PathBuf,
        /// Comma-separated instance sizes, e.g. 1000,10000,100000.
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        /// enumerate or aggregate.
        #[arg(long, default_value = "enumerate")]
        mode: String,
        #[arg(long, value_enum, default_value = "auto")]
        backend: BackendArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<FrontendError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn read_query(path: &Path) -> Result<Query> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_query(&text)?)
}

/// Loads one CSV per atom; the header decides whether the table is weighted.
fn load_data(q: &Query, dir: &Path, allow_weights: bool) -> Result<Database> {
    let mut db = Database::default();
    for atom in &q.atoms {
        let path = dir.join(format!("{}.csv", atom.name));
        let head = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .next()
            .unwrap_or_default()
            .to_string();
        let weighted = head
            .split(',')
            .next_back()
            .map(|c| c.trim() == "weight")
            .unwrap_or(false);
        if weighted && !allow_weights {
            bail!(
                "{} carries a weight column; weighted tables are for aggregate mode",
                path.display()
            );
        }
        let names: HashMap<String, u32> = atom
            .vars
            .iter()
            .map(|v| (v.clone(), q.var_ids[v]))
            .collect();
        let table = load_csv(
            &path,
            &names,
            &atom.vars,
            weighted,
            &q.semiring,
            q.defaults.get(&atom.name).cloned(),
            &mut db.interner,
        )?;
        db.tables.insert(atom.name.clone(), table);
    }
    Ok(db)
}

fn print_row(db: &Database, tuple: &[u32], weight: Option<&Value>) {
    let mut row: Vec<String> = tuple
        .iter()
        .map(|&id| db.interner.name(id).to_string())
        .collect();
    if let Some(w) = weight {
        row.push(w.to_string());
    }
    println!("{}", row.join(","));
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Analyze { query } => cmd_analyze(&query),
        Cmd::Enumerate {
            query,
            data_dir,
            limit,
            oracle,
        } => cmd_enumerate(&query, &data_dir, limit, oracle),
        Cmd::Aggregate {
            query,
            data_dir,
            limit,
            oracle,
            semiring,
            backend,
        } => cmd_aggregate(&query, &data_dir, limit, oracle, semiring, backend.choice()),
        Cmd::Count {
            query,
            data_dir,
            oracle,
        } => cmd_count(&query, &data_dir, oracle),
        Cmd::Diff {
            query,
            data_dir,
            limit,
            oracle,
        } => cmd_diff(&query, &data_dir, limit, oracle),
        Cmd::Bench {
            query,
            sizes,
            mode,
            backend,
        } => cmd_bench(&query, &sizes, &mode, backend.choice()),
    }
}

fn cmd_analyze(path: &Path) -> Result<ExitCode> {
    let q = read_query(path)?;
    let g = &q.hypergraph;
    println!("query: {}", q.name);
    println!("variables: {}", q.var_names.join(", "));
    println!("free: {{{}}}", q.head_vars.join(", "));
    println!("safe: yes");
    println!(
        "alpha-acyclic positive part: {}",
        yesno(g.positive_alpha_acyclic())
    );
    let greedy = g.is_signed_acyclic_greedy();
    print!("signed-acyclic: {}", yesno(greedy));
    match g.is_signed_acyclic_definition() {
        Ok(d) => println!(" (definition oracle agrees: {})", yesno(d == greedy)),
        Err(_) => println!(" (definition oracle skipped: too many negative edges)"),
    }
    let fc = g.is_free_connex(&q.free);
    println!("free-connex: {}", yesno(fc));
    if !greedy || !fc {
        let (aug, _) = g.with_free_edge(&q.free);
        if let Ok(false) = aug.is_signed_acyclic_definition() {
            println!("witness: some union of negative edges with the positive part is cyclic");
        }
        return Ok(ExitCode::from(1));
    }
    let free_sorted: Vec<u32> = q.free.iter().copied().collect();
    let (aug, _) = g.with_free_edge(&q.free);
    if let Some(seq) = aug.elimination_sequence(Some(&free_sorted)) {
        let names: Vec<&str> = seq.order.iter().map(|&v| q.var_name(v)).collect();
        println!("elimination order: ({})", names.join(", "));
        for (v, w) in seq.steps() {
            let pivot_atomish: Vec<String> = aug
                .edge(w.pivot)
                .verts
                .iter()
                .map(|&u| q.var_name(u).to_string())
                .collect();
            println!(
                "  eliminate {}: pivot {{{}}}, chain depth {}",
                q.var_name(v),
                pivot_atomish.join(","),
                w.chain.len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn yesno(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_enumerate(path: &Path, dir: &Path, limit: Option<usize>, oracle: bool) -> Result<ExitCode> {
    let q = read_query(path)?;
    let db = load_data(&q, dir, false)?;
    let prepared = cq::prepare(&q, &db)?;
    let answers = prepared.answers(&q);
    println!("{}", q.head_vars.join(","));
    for t in answers.iter().take(limit.unwrap_or(usize::MAX)) {
        print_row(&db, t, None);
    }
    if oracle {
        let expect = oracle::brute_force_cq(&q, &db)?;
        let got: std::collections::BTreeSet<Tuple> = answers.iter().cloned().collect();
        if got != expect || got.len() != answers.len() {
            bail!("oracle mismatch: engine and brute force disagree");
        }
        eprintln!("oracle check passed: {} answers", answers.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_aggregate(
    path: &Path,
    dir: &Path,
    limit: Option<usize>,
    oracle: bool,
    semiring: Option<String>,
    backend: BackendChoice,
) -> Result<ExitCode> {
    let mut q = read_query(path)?;
    if let Some(name) = semiring {
        q = q.with_semiring(Semiring::instance(&name)?)?;
    }
    let db = load_data(&q, dir, true)?;
    let (answers, _ops) = faq::enumerate_faq(&q, &db, backend)?;
    let mut header = q.head_vars.join(",");
    header.push_str(if q.head_vars.is_empty() {
        "weight"
    } else {
        ",weight"
    });
    println!("{header}");
    for (t, w) in answers.iter().take(limit.unwrap_or(usize::MAX)) {
        print_row(&db, t, Some(w));
    }
    if oracle {
        let expect = oracle::brute_force_faq(&q, &db)?;
        let got: HashMap<Tuple, Value> = answers.iter().cloned().collect();
        if got.len() != answers.len() || got != expect {
            bail!("oracle mismatch: aggregation and brute force disagree");
        }
        eprintln!("oracle check passed: {} answers", answers.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_count(path: &Path, dir: &Path, oracle: bool) -> Result<ExitCode> {
    let q = read_query(path)?;
    let db = load_data(&q, dir, false)?;
    let count = oracle::count_inclusion_exclusion(&q, &db)?;
    println!("{count}");
    if oracle {
        // Full-valuation count: compare against assignment enumeration of
        // the body and the counting pipeline.
        let full = full_body_query(&q)?;
        let bf = oracle::brute_force_cq(&full, &db)?.len() as i64;
        let cf = oracle::count_via_counting_faq(&q, &db)?;
        if bf != count || cf != count {
            bail!("oracle mismatch: {count} vs brute force {bf} vs counting pipeline {cf}");
        }
        eprintln!("oracle check passed");
    }
    Ok(ExitCode::SUCCESS)
}

/// The query with every body variable in the head, for valuation counting.
fn full_body_query(q: &Query) -> Result<Query> {
    let body: Vec<String> = q
        .atoms
        .iter()
        .map(|a| {
            format!(
                "{}{}({})",
                if a.negated { "!" } else { "" },
                a.name,
                a.vars.join(",")
            )
        })
        .collect();
    let text = format!("Qfull({}) :- {}.", q.var_names.join(","), body.join(", "));
    Ok(parse_query(&text)?)
}

fn cmd_diff(path: &Path, dir: &Path, limit: Option<usize>, oracle: bool) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path)?;
    let queries = parse_program(&text)?;
    let [q1, q2] = queries.as_slice() else {
        bail!(
            "diff expects exactly two queries in the file, found {}",
            queries.len()
        );
    };
    let mut db = load_data(q1, dir, false)?;
    // The subtrahend's tables load against the same interner.
    for atom in &q2.atoms {
        if db.tables.contains_key(&atom.name) {
            continue;
        }
        let path = dir.join(format!("{}.csv", atom.name));
        let names: HashMap<String, u32> = atom
            .vars
            .iter()
            .map(|v| (v.clone(), q2.var_ids[v]))
            .collect();
        let table = load_csv(
            &path,
            &names,
            &atom.vars,
            false,
            &q2.semiring,
            None,
            &mut db.interner,
        )?;
        db.tables.insert(atom.name.clone(), table);
    }
    let answers = diff::enumerate_diff(q1, q2, &db)?;
    println!("{}", q1.head_vars.join(","));
    for t in answers.iter().take(limit.unwrap_or(usize::MAX)) {
        print_row(&db, t, None);
    }
    if oracle {
        let a1 = oracle::brute_force_cq(q1, &db)?;
        let a2 = oracle::brute_force_cq(q2, &db)?;
        let expect: std::collections::BTreeSet<Tuple> = a1.difference(&a2).cloned().collect();
        let got: std::collections::BTreeSet<Tuple> = answers.iter().cloned().collect();
        if got != expect || got.len() != answers.len() {
            bail!("oracle mismatch: difference and brute force disagree");
        }
        eprintln!("oracle check passed: {} answers", answers.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn seed_from_env() -> u64 {
    std::env::var("SQ_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0xC0DE)
}

fn cmd_bench(path: &Path, sizes: &[usize], mode: &str, backend: BackendChoice) -> Result<ExitCode> {
    let q = read_query(path)?;
    let seed = seed_from_env();
    match mode {
        "enumerate" => {
            println!("size,rows,preprocess_ns,preprocess_ops,answers,max_delay_probes,mean_delay_probes,max_delay_ns,mean_delay_ns");
            for &size in sizes {
                let db = scaled_database(&q, size, seed);
                let rows = db.size();
                let t0 = Instant::now();
                let prepared = cq::prepare(&q, &db)?;
                let preprocess_ns = t0.elapsed().as_nanos();
                let mut stream = prepared.enumerate();
                let mut answers = 0u64;
                let mut max_gap_ns = 0u128;
                let mut total_ns = 0u128;
                let mut last = Instant::now();
                for _t in stream.by_ref() {
                    let gap = last.elapsed().as_nanos();
                    last = Instant::now();
                    max_gap_ns = max_gap_ns.max(gap);
                    total_ns += gap;
                    answers += 1;
                }
                let mean_probes = if stream.gap_count > 0 {
                    stream.total_gap_probes as f64 / stream.gap_count as f64
                } else {
                    0.0
                };
                let mean_ns = if answers > 0 {
                    total_ns as f64 / answers as f64
                } else {
                    0.0
                };
                println!(
                    "{size},{rows},{preprocess_ns},{},{answers},{},{mean_probes:.2},{max_gap_ns},{mean_ns:.1}",
                    prepared.pre.stats.ops, stream.max_gap_probes
                );
            }
        }
        "aggregate" => {
            println!("size,rows,preprocess_ns,preprocess_ops,answers");
            for &size in sizes {
                let db = scaled_database(&q, size, seed);
                let rows = db.size();
                let t0 = Instant::now();
                let (answers, ops) = faq::enumerate_faq(&q, &db, backend)?;
                let ns = t0.elapsed().as_nanos();
                println!("{size},{rows},{ns},{ops},{}", answers.len());
            }
        }
        other => return Err(anyhow!("unknown bench mode `{other}`")),
    }
    Ok(ExitCode::SUCCESS)
}
