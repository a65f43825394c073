//! JSON-lines dataset files.
//!
//! Line 1 is the header `{version, seed, cells, count}`; each further line is
//! one entry `{n, edges, p, omega, max_cliques, seed}` with bitstrings written
//! most-significant vertex first (vertex 0 rightmost).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, DatasetEntry, DatasetManifest};
use crate::error::{Error, Result};
use crate::graph::{bits_from_str, bits_to_string, Graph};

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    cells: Vec<Cell>,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    n: usize,
    edges: Vec<[usize; 2]>,
    p: Option<f64>,
    omega: usize,
    max_cliques: Vec<String>,
    seed: Option<u64>,
}

pub fn write_manifest<W: Write>(m: &DatasetManifest, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = Header {
        version: m.version,
        seed: m.seed,
        cells: m.cells.clone(),
        count: m.entries.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for e in &m.entries {
        let line = EntryLine {
            n: e.n(),
            edges: e.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
            p: e.edge_probability,
            omega: e.omega,
            max_cliques: e.max_cliques.iter().map(|&b| bits_to_string(b, e.n())).collect(),
            seed: e.source_seed,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<R: std::io::Read>(r: R) -> Result<DatasetManifest> {
    let mut lines = BufReader::new(r).lines();
    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
    let header_text = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))??;
    let header: Header =
        serde_json::from_str(&header_text).map_err(|e| parse_err(1, e.to_string()))?;
    let mut entries = Vec::with_capacity(header.count);
    for (idx, text) in lines.enumerate() {
        let line_no = idx + 2;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: EntryLine =
            serde_json::from_str(&text).map_err(|e| parse_err(line_no, e.to_string()))?;
        let graph = Graph::new(raw.n, raw.edges.iter().map(|&[u, v]| (u, v)))
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        let mut max_cliques = raw
            .max_cliques
            .iter()
            .map(|s| {
                if s.len() != raw.n {
                    return None;
                }
                bits_from_str(s)
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(line_no, "malformed bitstring".into()))?;
        max_cliques.sort_unstable();
        let entry = DatasetEntry {
            graph,
            omega: raw.omega,
            max_cliques,
            edge_probability: raw.p,
            source_seed: raw.seed,
        };
        entry
            .validate()
            .map_err(|msg| Error::Validation { line: line_no, msg })?;
        entries.push(entry);
    }
    if entries.len() != header.count {
        return Err(parse_err(
            entries.len() + 2,
            format!("expected {} entries, found {} (truncated?)", header.count, entries.len()),
        ));
    }
    Ok(DatasetManifest {
        version: header.version,
        seed: header.seed,
        cells: header.cells,
        entries,
    })
}

pub fn save_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    write_manifest(m, std::fs::File::create(path)?)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    read_manifest(std::fs::File::open(path)?)
}
