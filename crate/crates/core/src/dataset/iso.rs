//! Exact isomorphism test by backtracking over colour-compatible vertex maps.

use crate::graph::{Graph, Permutation};

/// Finds `s` with `g.permute(s) == h`, if any. `colours_*` must be
/// isomorphism-invariant vertex colours (e.g. from WL refinement).
pub fn find_isomorphism(
    g: &Graph,
    h: &Graph,
    colours_g: &[u64],
    colours_h: &[u64],
) -> Option<Permutation> {
    let n = g.n();
    if n != h.n() || g.edges().len() != h.edges().len() {
        return None;
    }
    let key = |graph: &Graph, colours: &[u64], v: usize| (colours[v], graph.degree(v));
    let mut kg: Vec<_> = (0..n).map(|v| key(g, colours_g, v)).collect();
    let mut kh: Vec<_> = (0..n).map(|v| key(h, colours_h, v)).collect();
    let (kg_v, kh_v) = (kg.clone(), kh.clone());
    kg.sort_unstable();
    kh.sort_unstable();
    if kg != kh {
        return None;
    }
    // map vertices of rare classes first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (kg_v.iter().filter(|&&k| k == kg_v[v]).count(), v));

    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    if extend(g, h, &order, 0, &kg_v, &kh_v, &mut map, &mut used) {
        Some(Permutation::new(map).expect("backtracking builds a bijection"))
    } else {
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn extend(
    g: &Graph,
    h: &Graph,
    order: &[usize],
    depth: usize,
    kg: &[(u64, usize)],
    kh: &[(u64, usize)],
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    let Some(&v) = order.get(depth) else {
        return true;
    };
    for w in 0..h.n() {
        if used[w] || kg[v] != kh[w] {
            continue;
        }
        let consistent = order[..depth]
            .iter()
            .all(|&u| g.has_edge(u, v) == h.has_edge(map[u], w));
        if !consistent {
            continue;
        }
        map[v] = w;
        used[w] = true;
        if extend(g, h, order, depth + 1, kg, kh, map, used) {
            return true;
        }
        used[w] = false;
        map[v] = usize::MAX;
    }
    false
}
