//! Labelled graph corpora: Erdős–Rényi sampling, isomorphism deduplication,
//! exact clique labels and the JSON-lines manifest format.

mod io;
pub mod iso;
pub mod wl;

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{all_pairs, popcount, Bits, Graph};

pub use io::{load_manifest, read_manifest, save_manifest, write_manifest};

/// Isomorphism classes of graphs on `n` vertices, `n = 0..=7`.
pub const GRAPH_CLASSES: [usize; 8] = [1, 1, 2, 4, 11, 34, 156, 1044];

/// Largest `n` for which the exact isomorphism check backs up WL-2.
pub const EXACT_ISO_LIMIT: usize = 16;

/// Largest `n` accepted by exhaustive cells.
pub const EXHAUSTIVE_LIMIT: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub graph: Graph,
    pub omega: usize,
    /// All maximum cliques, sorted.
    pub max_cliques: Vec<Bits>,
    /// `None` for exhaustively enumerated entries.
    pub edge_probability: Option<f64>,
    /// Seed that reproduces the graph through [`sample_er`].
    pub source_seed: Option<u64>,
}

impl DatasetEntry {
    pub fn label(graph: Graph, edge_probability: Option<f64>, source_seed: Option<u64>) -> Result<Self> {
        let label = graph.max_clique_label()?;
        Ok(Self {
            graph,
            omega: label.omega,
            max_cliques: label.max_cliques,
            edge_probability,
            source_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Checks the stored label against the graph.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.max_cliques.is_empty() {
            return Err("no target bitstrings".into());
        }
        for &b in &self.max_cliques {
            if popcount(b) != self.omega {
                return Err(format!("target {b:#b} has weight {} but omega is {}", popcount(b), self.omega));
            }
            if !self.graph.is_clique(b) {
                return Err(format!("target {b:#b} is not a clique"));
            }
        }
        let truth = self.graph.max_clique_label().map_err(|e| e.to_string())?;
        if truth.omega != self.omega || truth.max_cliques != self.max_cliques {
            return Err(format!(
                "label disagrees with exact oracle (omega {} vs {})",
                self.omega, truth.omega
            ));
        }
        Ok(())
    }
}

/// `(n, p)` of an evaluation cell, `p = None` for exhaustive entries.
pub type CellKey = (usize, Option<f64>);

/// One generation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cell {
    /// Every isomorphism class on `n` vertices.
    All { n: usize },
    /// `count` pairwise non-isomorphic samples from G(n, p).
    Sampled { n: usize, p: f64, count: usize },
}

impl Cell {
    pub fn n(&self) -> usize {
        match *self {
            Cell::All { n } | Cell::Sampled { n, .. } => n,
        }
    }

    /// Parses a comma-free cell list item:
    /// `all:N[-M]` or `er:N[-M]:P[-Q[@STEP]]:COUNT`, expanding ranges.
    pub fn parse_many(s: &str) -> Result<Vec<Cell>> {
        let bad = || Error::Config(format!("bad cell `{s}`; expected all:N[-M] or er:N[-M]:P[-Q[@STEP]]:COUNT"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["all", ns] => Ok(parse_int_range(ns).ok_or_else(bad)?.map(|n| Cell::All { n }).collect()),
            ["er", ns, ps, count] => {
                let ns: Vec<usize> = parse_int_range(ns).ok_or_else(bad)?.collect();
                let ps = parse_real_range(ps).ok_or_else(bad)?;
                let count: usize = count.parse().map_err(|_| bad())?;
                Ok(ns
                    .iter()
                    .flat_map(|&n| ps.iter().map(move |&p| Cell::Sampled { n, p, count }))
                    .collect())
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::All { n } => write!(f, "all:{n}"),
            Cell::Sampled { n, p, count } => write!(f, "er:{n}:{p}:{count}"),
        }
    }
}

fn parse_int_range(s: &str) -> Option<std::ops::RangeInclusive<usize>> {
    match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (a.parse().ok()?, b.parse().ok()?);
            (a <= b).then_some(a..=b)
        }
        None => {
            let a = s.parse().ok()?;
            Some(a..=a)
        }
    }
}

fn parse_real_range(s: &str) -> Option<Vec<f64>> {
    let (range, step) = match s.split_once('@') {
        Some((r, st)) => (r, Some(st.parse::<f64>().ok()?)),
        None => (s, None),
    };
    match range.split_once('-') {
        None => Some(vec![range.parse().ok()?]),
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.parse().ok()?, b.parse().ok()?);
            let step = step.unwrap_or(0.1);
            if step <= 0.0 || a > b {
                return None;
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            // round to suppress float drift so 0.1-0.9@0.1 yields 0.3 rather than 0.30000000000000004
            Some((0..=count).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Entries grouped by `(n, p)`, `p = None` for exhaustive entries, in first-seen order.
    pub fn groups(&self) -> Vec<(CellKey, Vec<usize>)> {
        group_indices(&self.entries)
    }
}

pub(crate) fn group_indices(entries: &[DatasetEntry]) -> Vec<(CellKey, Vec<usize>)> {
    let mut out: Vec<(CellKey, Vec<usize>)> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let key = (e.n(), e.edge_probability);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => out.push((key, vec![i])),
        }
    }
    out
}

/// G(n, p): each pair included independently with probability `p`, in
/// ascending pair order, from a ChaCha8 stream seeded by `seed`.
pub fn sample_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<_> = all_pairs(n).filter(|_| rng.random::<f64>() < p).collect();
    Graph::new(n, edges)
}

/// Incremental WL-2 deduplicator; for `n <= 16` certificate collisions are
/// resolved by an exact isomorphism test.
#[derive(Default)]
pub struct Deduplicator {
    n: Option<usize>,
    buckets: HashMap<Vec<u64>, Vec<(Graph, Vec<u64>)>>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` when `g` is new (and records it).
    pub fn insert(&mut self, g: &Graph) -> Result<bool> {
        match self.n {
            Some(n) if n != g.n() => return Err(Error::MixedSizes(n, g.n())),
            _ => self.n = Some(g.n()),
        }
        let r = wl::refine(g);
        let bucket = self.buckets.entry(r.certificate).or_default();
        let duplicate = bucket.iter().any(|(rep, rep_colours)| {
            g.n() > EXACT_ISO_LIMIT
                || iso::find_isomorphism(g, rep, &r.vertex_colours, rep_colours).is_some()
        });
        if !duplicate {
            bucket.push((g.clone(), r.vertex_colours));
        }
        Ok(!duplicate)
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One representative per equivalence class, in first-seen order.
pub fn dedup_wl2(graphs: &[Graph]) -> Result<Vec<Graph>> {
    let mut dedup = Deduplicator::new();
    let mut out = Vec::new();
    for g in graphs {
        if dedup.insert(g)? {
            out.push(g.clone());
        }
    }
    Ok(out)
}

/// Every labelled graph on `n` vertices, in edge-code order.
pub fn all_labelled_graphs(n: usize) -> Result<Vec<Graph>> {
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::OverBudget {
            n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let pairs: Vec<_> = all_pairs(n).collect();
    (0u64..1 << pairs.len())
        .map(|code| Graph::new(n, crate::graph::ones(code).map(|i| pairs[i])))
        .collect()
}

/// One representative of every isomorphism class on `n` vertices.
pub fn all_classes(n: usize) -> Result<Vec<Graph>> {
    dedup_wl2(&all_labelled_graphs(n)?)
}

fn cell_seed(global: u64, index: usize, cell: &Cell) -> u64 {
    crate::seed::derive_seed(global, &format!("{index}/{cell}"))
}

/// A graph with its edge probability and reproducing seed.
type Sourced = (Graph, Option<f64>, Option<u64>);

fn cell_graphs(cell: &Cell, index: usize, seed: u64) -> Result<Vec<Sourced>> {
    let err = |reason: String| Error::Cell {
        cell: cell.to_string(),
        reason,
    };
    match *cell {
        Cell::All { n } => {
            if n == 0 || n > EXHAUSTIVE_LIMIT {
                return Err(err(format!("exhaustive cells support 1 <= n <= {EXHAUSTIVE_LIMIT}")));
            }
            Ok(all_classes(n)?.into_iter().map(|g| (g, None, None)).collect())
        }
        Cell::Sampled { n, p, count } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::BadProbability(p));
            }
            if n == 0 {
                return Err(err("n must be at least 1".into()));
            }
            if let Some(&classes) = GRAPH_CLASSES.get(n) {
                if count > classes {
                    return Err(err(format!(
                        "requested {count} graphs but only {classes} isomorphism classes exist"
                    )));
                }
            }
            let mut stream = ChaCha8Rng::seed_from_u64(cell_seed(seed, index, cell));
            let budget = 2_000 * count.max(1) + 10_000;
            let mut dedup = Deduplicator::new();
            let mut out = Vec::with_capacity(count);
            for _ in 0..budget {
                if out.len() == count {
                    break;
                }
                let graph_seed: u64 = stream.random();
                let g = sample_er(n, p, graph_seed)?;
                if dedup.insert(&g)? {
                    out.push((g, Some(p), Some(graph_seed)));
                }
            }
            if out.len() < count {
                return Err(err(format!(
                    "found only {} distinct classes after {budget} samples",
                    out.len()
                )));
            }
            Ok(out)
        }
    }
}

/// Generates and labels every cell. Deterministic in `seed`.
pub fn build_dataset(cells: &[Cell], seed: u64) -> Result<DatasetManifest> {
    if cells.is_empty() {
        return Err(Error::Config("no dataset cells given".into()));
    }
    let per_cell = exec::map_range(cells.len(), |i| cell_graphs(&cells[i], i, seed));
    let mut graphs = Vec::new();
    for cell in per_cell {
        graphs.extend(cell?);
    }
    let entries = exec::try_map(&graphs, |(g, p, s)| DatasetEntry::label(g.clone(), *p, *s))?;
    Ok(DatasetManifest {
        version: 1,
        seed,
        cells: cells.to_vec(),
        entries,
    })
}
