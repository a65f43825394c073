//! Simple undirected graphs, vertex permutations and exact clique labelling.
//!
//! Vertex subsets are `u64` bitmasks throughout the crate: bit `i` (least
//! significant = vertex 0) marks membership of vertex `i`. The same encoding
//! indexes computational basis states, so qubit `i` is vertex `i`.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Vertex-indicator bitstring, vertex 0 in the least significant bit.
pub type Bits = u64;

/// Largest vertex count representable by a [`Bits`] mask.
pub const MAX_VERTICES: usize = 64;

/// Largest graph the exact clique oracle accepts.
pub const CLIQUE_ORACLE_LIMIT: usize = 24;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Bits>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, edges={:?})", self.n, self.edges)
    }
}

impl Graph {
    /// Builds a graph from an edge list. Pairs are normalised to `u < v` and
    /// sorted; self-loops, repeated pairs and out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        if n > MAX_VERTICES {
            return Err(Error::OverBudget {
                n,
                limit: MAX_VERTICES,
            });
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at {a}")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if !set.insert((u, v)) {
                return Err(Error::InvalidGraph(format!("repeated edge ({u},{v})")));
            }
        }
        Ok(Self::from_sorted(n, set.into_iter().collect()))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![0; n];
        for &(u, v) in &edges {
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        Self { n, edges, adj }
    }

    /// Builds a graph from per-vertex neighbour masks (assumed symmetric, loop-free).
    pub(crate) fn from_adjacency(adj: Vec<Bits>) -> Self {
        let n = adj.len();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if adj[u] >> v & 1 == 1 {
                    edges.push((u, v));
                }
            }
        }
        Self { n, edges, adj }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, all_pairs(n))
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|v| (v - 1, v)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges in ascending lexicographic `(u, v)` order, `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.adj[u] >> v & 1 == 1
    }

    /// Neighbour mask of `v`.
    pub fn neighbours(&self, v: usize) -> Bits {
        self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].count_ones() as usize
    }

    /// Mask with every vertex set.
    pub fn full_mask(&self) -> Bits {
        full_mask(self.n)
    }

    /// Vertex pairs absent from the edge set, ascending.
    pub fn complement_edges(&self) -> Vec<(usize, usize)> {
        all_pairs(self.n).filter(|&(u, v)| !self.has_edge(u, v)).collect()
    }

    pub fn complement(&self) -> Graph {
        Self::from_sorted(self.n, self.complement_edges())
    }

    /// Relabels vertex `i` as `perm(i)`.
    pub fn permute(&self, perm: &Permutation) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::PermutationLength {
                expected: self.n,
                got: perm.len(),
            });
        }
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (perm.apply(u), perm.apply(v));
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        Ok(Self::from_sorted(self.n, edges))
    }

    /// Induced subgraph on the vertices of `mask`, re-indexed densely in
    /// ascending order. Returns the subgraph and the original id of each new vertex.
    pub fn induced(&self, mask: Bits) -> (Graph, Vec<usize>) {
        let ids: Vec<usize> = (0..self.n).filter(|&v| mask >> v & 1 == 1).collect();
        let adj = ids
            .iter()
            .map(|&orig| {
                ids.iter()
                    .enumerate()
                    .filter(|&(_, &other)| self.has_edge(orig, other))
                    .fold(0, |m, (j, _)| m | 1 << j)
            })
            .collect();
        (Self::from_adjacency(adj), ids)
    }

    /// True iff every pair of selected vertices is adjacent. Empty and
    /// singleton selections are cliques.
    pub fn is_clique(&self, bits: Bits) -> bool {
        let mut rest = bits;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if v >= self.n || rest & !self.adj[v] != 0 {
                return false;
            }
        }
        true
    }

    /// Clique number and every maximum clique, by Bron-Kerbosch with
    /// pivoting and a size bound.
    pub fn max_clique_label(&self) -> Result<CliqueLabel> {
        if self.n > CLIQUE_ORACLE_LIMIT {
            return Err(Error::OverBudget {
                n: self.n,
                limit: CLIQUE_ORACLE_LIMIT,
            });
        }
        let mut search = MaxCliques {
            adj: &self.adj,
            best: 0,
            found: Vec::new(),
        };
        search.expand(0, self.full_mask(), 0);
        let mut max_cliques = search.found;
        max_cliques.sort_unstable();
        Ok(CliqueLabel {
            omega: search.best,
            max_cliques,
        })
    }
}

struct MaxCliques<'a> {
    adj: &'a [Bits],
    best: usize,
    found: Vec<Bits>,
}

impl MaxCliques<'_> {
    fn expand(&mut self, r: Bits, mut p: Bits, mut x: Bits) {
        let size = r.count_ones() as usize;
        if p == 0 {
            if x == 0 {
                // r is maximal
                if size > self.best {
                    self.best = size;
                    self.found.clear();
                }
                if size == self.best {
                    self.found.push(r);
                }
            }
            return;
        }
        if size + (p.count_ones() as usize) < self.best {
            return;
        }
        let pivot_pool = p | x;
        let pivot = ones(pivot_pool)
            .max_by_key(|&u| (p & self.adj[u]).count_ones())
            .expect("p is non-empty");
        let mut candidates = p & !self.adj[pivot];
        while candidates != 0 {
            let v = candidates.trailing_zeros() as usize;
            candidates &= candidates - 1;
            let nv = self.adj[v];
            self.expand(r | 1 << v, p & nv, x & nv);
            p &= !(1 << v);
            x |= 1 << v;
        }
    }
}

/// Clique number together with all maximum cliques as vertex masks (sorted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueLabel {
    pub omega: usize,
    pub max_cliques: Vec<Bits>,
}

/// A bijection on `0..n`, stored as the image of each point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::NotAPermutation(images));
            }
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            images: (0..n).collect(),
        }
    }

    /// Transposition of `a` and `b` on `0..n`.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(a, b);
        Self { images }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.shuffle(rng);
        Self { images }
    }

    /// Every permutation of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self {
                images: cur.clone(),
            });
            // next lexicographic permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn inverse(&self) -> Self {
        let mut images = vec![0; self.images.len()];
        for (i, &s) in self.images.iter().enumerate() {
            images[s] = i;
        }
        Self { images }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Moves bit `i` of `bits` to position `perm(i)`.
    pub fn permute_bits(&self, bits: Bits) -> Bits {
        self.images
            .iter()
            .enumerate()
            .filter(|&(i, _)| bits >> i & 1 == 1)
            .fold(0, |acc, (_, &s)| acc | 1 << s)
    }
}

/// All pairs `(u, v)` with `u < v < n`, ascending.
pub fn all_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |u| (u + 1..n).map(move |v| (u, v)))
}

pub fn full_mask(n: usize) -> Bits {
    if n >= 64 {
        Bits::MAX
    } else {
        (1 << n) - 1
    }
}

/// Indices of set bits, ascending.
pub fn ones(bits: Bits) -> impl Iterator<Item = usize> {
    let mut rest = bits;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(v)
        }
    })
}

pub fn popcount(bits: Bits) -> usize {
    bits.count_ones() as usize
}

/// Renders an `n`-bit string most-significant vertex first (vertex 0 rightmost).
pub fn bits_to_string(bits: Bits, n: usize) -> String {
    (0..n).rev().map(|i| if bits >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Inverse of [`bits_to_string`].
pub fn bits_from_str(s: &str) -> Option<Bits> {
    if s.is_empty() || s.len() > MAX_VERTICES {
        return None;
    }
    s.chars().try_fold(0, |acc: Bits, c| match c {
        '0' => Some(acc << 1),
        '1' => Some(acc << 1 | 1),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_label(g: &Graph) -> (usize, Vec<Bits>) {
        let mut best = 0;
        let mut found = Vec::new();
        for s in 0..(1u64 << g.n()) {
            let ok = ones(s).all(|u| ones(s).all(|v| u == v || g.has_edge(u, v)));
            if !ok {
                continue;
            }
            let k = popcount(s);
            if k > best {
                best = k;
                found.clear();
            }
            if k == best {
                found.push(s);
            }
        }
        (best, found)
    }

    fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
        Graph::new(n, all_pairs(n).filter(|_| rng.random_bool(p))).unwrap()
    }

    #[test]
    fn complement_edges_examples() {
        assert!(Graph::complete(3).unwrap().complement_edges().is_empty());
        assert_eq!(
            Graph::empty(3).unwrap().complement_edges(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
        assert_eq!(Graph::path(3).unwrap().complement_edges(), vec![(0, 2)]);
    }

    #[test]
    fn complement_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let g = random_graph(7, 0.4, &mut rng);
            assert_eq!(g.complement().complement(), g);
            let c = g.complement_edges();
            assert!(c.iter().all(|&(u, v)| !g.has_edge(u, v)));
            assert_eq!(c.len() + g.edges().len(), 21);
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(0, []).is_err());
    }

    #[test]
    fn permute_examples() {
        let p = Graph::path(3).unwrap();
        assert_eq!(p.permute(&Permutation::identity(3)).unwrap(), p);
        let swapped = p.permute(&Permutation::swap(3, 0, 2)).unwrap();
        assert_eq!(swapped.edges(), &[(0, 1), (1, 2)]);
        assert!(matches!(
            p.permute(&Permutation::identity(4)),
            Err(Error::PermutationLength { .. })
        ));
    }

    #[test]
    fn permutation_validation_and_enumeration() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let all = Permutation::all(4);
        assert_eq!(all.len(), 24);
        let distinct: BTreeSet<_> = all.iter().map(|p| p.images().to_vec()).collect();
        assert_eq!(distinct.len(), 24);
        let s = Permutation::new(vec![2, 0, 1]).unwrap();
        assert!(s.inverse().images().iter().enumerate().all(|(i, &x)| s.apply(x) == i));
        assert_eq!(s.permute_bits(0b001), 0b100);
    }

    #[test]
    fn max_clique_examples() {
        let k3 = Graph::complete(3).unwrap().max_clique_label().unwrap();
        assert_eq!(k3.omega, 3);
        assert_eq!(k3.max_cliques, vec![0b111]);
        let path = Graph::path(3).unwrap().max_clique_label().unwrap();
        assert_eq!(path.omega, 2);
        assert_eq!(path.max_cliques, vec![0b011, 0b110]);
        let empty = Graph::empty(3).unwrap().max_clique_label().unwrap();
        assert_eq!(empty.omega, 1);
        assert_eq!(empty.max_cliques, vec![0b001, 0b010, 0b100]);
        assert!(Graph::empty(25).unwrap().max_clique_label().is_err());
    }

    #[test]
    fn is_clique_examples() {
        let k3 = Graph::complete(3).unwrap();
        let p = Graph::path(3).unwrap();
        assert!(k3.is_clique(0b111));
        assert!(!p.is_clique(0b101));
        assert!(p.is_clique(0));
        assert!(p.is_clique(0b100));
    }

    #[test]
    fn oracle_agrees_on_all_small_labelled_graphs() {
        for n in 1..=5 {
            let pairs: Vec<_> = all_pairs(n).collect();
            for code in 0u64..(1 << pairs.len()) {
                let g = Graph::new(n, ones(code).map(|i| pairs[i])).unwrap();
                let label = g.max_clique_label().unwrap();
                let (omega, found) = brute_force_label(&g);
                assert_eq!(label.omega, omega, "{g:?}");
                assert_eq!(label.max_cliques, found, "{g:?}");
            }
        }
    }

    #[test]
    fn oracle_agrees_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 6..=8 {
            for i in 0..1000 {
                let p = 0.1 + 0.8 * (i % 9) as f64 / 8.0;
                let g = random_graph(n, p, &mut rng);
                let label = g.max_clique_label().unwrap();
                let (omega, found) = brute_force_label(&g);
                assert_eq!((label.omega, label.max_cliques), (omega, found));
            }
        }
    }

    #[test]
    fn label_is_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g = random_graph(8, 0.5, &mut rng);
            let s = Permutation::random(8, &mut rng);
            let a = g.max_clique_label().unwrap();
            let b = g.permute(&s).unwrap().max_clique_label().unwrap();
            assert_eq!(a.omega, b.omega);
            let mut mapped: Vec<_> = a.max_cliques.iter().map(|&c| s.permute_bits(c)).collect();
            mapped.sort_unstable();
            assert_eq!(mapped, b.max_cliques);
        }
    }

    #[test]
    fn induced_subgraph_reindexes() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (1, 3)]).unwrap();
        let (sub, ids) = g.induced(0b1110);
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(sub.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn bitstring_text_convention() {
        assert_eq!(bits_to_string(0b011, 3), "011");
        assert_eq!(bits_to_string(0b001, 4), "0001");
        assert_eq!(bits_from_str("0001"), Some(1));
        assert_eq!(bits_from_str("01x"), None);
    }
}
