//! Two-dimensional Weisfeiler-Leman colour refinement.
//!
//! Every ordered vertex pair starts with its atomic type (diagonal, edge,
//! non-edge). Each round recolours `(u, v)` by its old colour together with
//! the multiset `{ (c(u, w), c(w, v)) : w }`, until the number of colour
//! classes stops growing. The certificate is the sequence of per-round colour
//! histograms, so isomorphic graphs always get equal certificates.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::graph::Graph;

fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// Stable pair colouring plus the isomorphism-invariant certificate.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub certificate: Vec<u64>,
    /// Colour of `(v, v)` for each vertex, comparable across graphs.
    pub vertex_colours: Vec<u64>,
}

pub fn refine(g: &Graph) -> Refinement {
    let n = g.n();
    let mut colours: Vec<u64> = (0..n * n)
        .map(|idx| {
            let (u, v) = (idx / n, idx % n);
            if u == v {
                0
            } else if g.has_edge(u, v) {
                1
            } else {
                2
            }
        })
        .collect();
    let mut classes = count_classes(&colours);
    let mut certificate = vec![histogram_hash(&colours)];
    let mut signature = Vec::with_capacity(n);
    loop {
        let next: Vec<u64> = (0..n * n)
            .map(|idx| {
                let (u, v) = (idx / n, idx % n);
                signature.clear();
                signature.extend((0..n).map(|w| (colours[u * n + w], colours[w * n + v])));
                signature.sort_unstable();
                hash_of(&(colours[idx], &signature))
            })
            .collect();
        let next_classes = count_classes(&next);
        colours = next;
        certificate.push(histogram_hash(&colours));
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    Refinement {
        certificate,
        vertex_colours: (0..n).map(|v| colours[v * n + v]).collect(),
    }
}

fn count_classes(colours: &[u64]) -> usize {
    let mut sorted = colours.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

fn histogram_hash(colours: &[u64]) -> u64 {
    let mut sorted = colours.to_vec();
    sorted.sort_unstable();
    hash_of(&sorted)
}
