//! Pine: grow a clique by sampling a vertex from a heuristic distribution,
//! restricting to its neighbourhood, and recursing until nothing is left.
//! The output is a clique by construction.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::apply_ansatz;
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{ones, popcount, Bits, Graph};
use crate::seed::derive_seed;
use crate::training::Checkpoint;

/// Largest graph the exact success-probability evaluator accepts.
pub const EXACT_PINE_LIMIT: usize = 16;

const DEGREE_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum NodeHeuristic {
    QuantumMarginal(Arc<Checkpoint>),
    Uniform,
    Degree,
}

impl NodeHeuristic {
    pub fn name(&self) -> &'static str {
        match self {
            NodeHeuristic::QuantumMarginal(_) => "quantum",
            NodeHeuristic::Uniform => "uniform",
            NodeHeuristic::Degree => "degree",
        }
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn node_distribution(h: &NodeHeuristic, g: &Graph) -> Result<Vec<f64>> {
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidGraph("no vertices to choose from".into()));
    }
    Ok(match h {
        NodeHeuristic::Uniform => uniform(n),
        NodeHeuristic::Degree => {
            let w: Vec<f64> = (0..n).map(|v| g.degree(v) as f64 + DEGREE_SMOOTHING).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        }
        NodeHeuristic::QuantumMarginal(ck) => {
            let marginals = apply_ansatz(&ck.spec, g, &ck.theta)?.marginals();
            let total: f64 = marginals.iter().sum();
            if total > 0.0 {
                marginals.into_iter().map(|m| m / total).collect()
            } else {
                uniform(n)
            }
        }
    })
}

/// Index drawn from `dist` with one uniform variate and a cumulative sum.
/// Rounding slack at the top end falls to the last index with mass.
fn draw(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PineStep {
    pub subgraph_size: usize,
    /// Original vertex id.
    pub chosen: usize,
    /// Distribution over the subgraph's vertices in ascending original id.
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PineTrace {
    pub steps: Vec<PineStep>,
    pub clique: Bits,
}

impl PineTrace {
    pub fn size(&self) -> usize {
        popcount(self.clique)
    }
}

pub fn pine_run(g: &Graph, h: &NodeHeuristic, seed: u64) -> Result<PineTrace> {
    if g.n() == 0 {
        return Err(Error::InvalidGraph("no vertices to choose from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alive = g.full_mask();
    let mut steps = Vec::new();
    let mut clique = 0;
    while alive != 0 {
        let (sub, ids) = g.induced(alive);
        let distribution = node_distribution(h, &sub)?;
        let chosen = ids[draw(&distribution, rng.random::<f64>())];
        clique |= 1 << chosen;
        alive &= g.neighbours(chosen);
        steps.push(PineStep {
            subgraph_size: sub.n(),
            chosen,
            distribution,
        });
    }
    Ok(PineTrace { steps, clique })
}

/// Exact probability that `pine_run` returns a maximum clique, by walking the
/// recursion tree. Subgraph distributions are cached per vertex set, and
/// partial results per (vertex set, vertices still needed).
pub fn pine_success_prob(g: &Graph, h: &NodeHeuristic) -> Result<f64> {
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidGraph("no vertices to choose from".into()));
    }
    if n > EXACT_PINE_LIMIT {
        return Err(Error::OverBudget {
            n,
            limit: EXACT_PINE_LIMIT,
        });
    }
    let omega = g.max_clique_label()?.omega;
    let mut walker = Walker {
        g,
        h,
        dists: HashMap::new(),
        memo: HashMap::new(),
    };
    walker.success(g.full_mask(), omega)
}

struct Walker<'a> {
    g: &'a Graph,
    h: &'a NodeHeuristic,
    dists: HashMap<Bits, Vec<f64>>,
    memo: HashMap<(Bits, usize), f64>,
}

impl Walker<'_> {
    fn success(&mut self, alive: Bits, need: usize) -> Result<f64> {
        if alive == 0 {
            return Ok(if need == 0 { 1.0 } else { 0.0 });
        }
        // every surviving vertex is adjacent to all picks so far; too few
        // of them means the target size is out of reach
        if need == 0 || popcount(alive) < need {
            return Ok(0.0);
        }
        if let Some(&p) = self.memo.get(&(alive, need)) {
            return Ok(p);
        }
        if !self.dists.contains_key(&alive) {
            let (sub, _) = self.g.induced(alive);
            self.dists.insert(alive, node_distribution(self.h, &sub)?);
        }
        let dist = self.dists[&alive].clone();
        let mut total = 0.0;
        for (k, v) in ones(alive).enumerate() {
            if dist[k] > 0.0 {
                total += dist[k] * self.success(alive & self.g.neighbours(v), need - 1)?;
            }
        }
        self.memo.insert((alive, need), total);
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub runs: usize,
    pub successes: usize,
    pub estimate: f64,
    /// Binomial standard error of `estimate`.
    pub std_err: f64,
}

/// Seed of run `index` in a batch keyed by `seed`.
pub fn run_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &format!("pine/{index}"))
}

/// Independent seeded runs, in parallel.
pub fn pine_runs(g: &Graph, h: &NodeHeuristic, runs: usize, seed: u64) -> Result<Vec<PineTrace>> {
    let seeds: Vec<u64> = (0..runs).map(|i| run_seed(seed, i)).collect();
    exec::try_map(&seeds, |&s| pine_run(g, h, s))
}

pub fn pine_monte_carlo(g: &Graph, h: &NodeHeuristic, runs: usize, seed: u64) -> Result<MonteCarlo> {
    if runs == 0 {
        return Err(Error::Config("Monte Carlo needs at least one run".into()));
    }
    let omega = g.max_clique_label()?.omega;
    let seeds: Vec<u64> = (0..runs).map(|i| run_seed(seed, i)).collect();
    let hits = exec::try_map(&seeds, |&s| pine_run(g, h, s).map(|t| t.size() == omega))?;
    let successes = hits.iter().filter(|&&x| x).count();
    let estimate = successes as f64 / runs as f64;
    Ok(MonteCarlo {
        runs,
        successes,
        estimate,
        std_err: (estimate * (1.0 - estimate) / runs as f64).sqrt(),
    })
}

/// One sampled run, as written to result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PineRow {
    pub graph_id: usize,
    pub heuristic: String,
    pub run: usize,
    pub success: bool,
    pub clique_size: usize,
    pub omega: usize,
    pub trace_length: usize,
}

pub fn pine_rows(
    graph_id: usize,
    g: &Graph,
    h: &NodeHeuristic,
    runs: usize,
    seed: u64,
) -> Result<Vec<PineRow>> {
    let omega = g.max_clique_label()?.omega;
    Ok(pine_runs(g, h, runs, seed)?
        .into_iter()
        .enumerate()
        .map(|(run, t)| PineRow {
            graph_id,
            heuristic: h.name().into(),
            run,
            success: t.size() == omega,
            clique_size: t.size(),
            omega,
            trace_length: t.steps.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzSpec, ParameterSet};
    use crate::dataset::sample_er;
    use crate::graph::Permutation;

    fn triangle_plus_pendant() -> Graph {
        Graph::new(4, [(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap()
    }

    fn zero_checkpoint() -> NodeHeuristic {
        let spec = AnsatzSpec::rook(2);
        NodeHeuristic::QuantumMarginal(Arc::new(
            Checkpoint::fixed(spec, ParameterSet::zeros(&spec)).unwrap(),
        ))
    }

    fn rook_heuristic(seed: u64) -> NodeHeuristic {
        let spec = AnsatzSpec::rook(2);
        let theta = crate::training::init_params(&spec, seed).unwrap();
        let theta = ParameterSet(theta.0.iter().map(|x| x * 40.0).collect());
        NodeHeuristic::QuantumMarginal(Arc::new(Checkpoint::fixed(spec, theta).unwrap()))
    }

    #[test]
    fn distributions() {
        let k4 = Graph::complete(4).unwrap();
        assert_eq!(node_distribution(&NodeHeuristic::Uniform, &k4).unwrap(), vec![0.25; 4]);
        let d = node_distribution(&NodeHeuristic::Degree, &Graph::path(3).unwrap()).unwrap();
        for (x, y) in d.iter().zip([0.25, 0.5, 0.25]) {
            assert!((x - y).abs() < 1e-9);
        }
        let iso = node_distribution(&NodeHeuristic::Degree, &Graph::empty(3).unwrap()).unwrap();
        assert!(iso.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(node_distribution(&zero_checkpoint(), &k4).unwrap(), vec![0.25; 4]);
        let q = node_distribution(&rook_heuristic(1), &triangle_plus_pendant()).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-10 && q.iter().all(|&x| x >= 0.0));
        let (nothing, _) = k4.induced(0);
        assert!(node_distribution(&NodeHeuristic::Uniform, &nothing).is_err());
    }

    #[test]
    fn draw_uses_cumulative_mass() {
        let d = [0.2, 0.0, 0.5, 0.3];
        assert_eq!(draw(&d, 0.0), 0);
        assert_eq!(draw(&d, 0.2), 2);
        assert_eq!(draw(&d, 0.69), 2);
        assert_eq!(draw(&d, 0.7), 3);
        assert_eq!(draw(&[0.5, 0.5 - 1e-17, 0.0], 0.999_999_999_999_999_9), 1);
    }

    #[test]
    fn small_cases() {
        for seed in 0..20 {
            let t = pine_run(&Graph::complete(4).unwrap(), &NodeHeuristic::Degree, seed).unwrap();
            assert_eq!(t.clique, 0b1111);
            assert_eq!(t.steps.iter().map(|s| s.subgraph_size).collect::<Vec<_>>(), vec![4, 3, 2, 1]);
            let single = pine_run(&Graph::empty(1).unwrap(), &NodeHeuristic::Uniform, seed).unwrap();
            assert_eq!(single.clique, 1);
            let p = pine_run(&Graph::path(3).unwrap(), &NodeHeuristic::Uniform, seed).unwrap();
            assert_eq!(p.size(), 2);
        }
        assert_eq!(pine_success_prob(&Graph::complete(4).unwrap(), &NodeHeuristic::Uniform).unwrap(), 1.0);
        assert_eq!(pine_success_prob(&Graph::path(3).unwrap(), &NodeHeuristic::Uniform).unwrap(), 1.0);
    }

    #[test]
    fn triangle_plus_pendant_exact_value() {
        // picks 0 or 1 always finish the triangle; pick 2 finishes it with
        // probability 2/3; pick 3 ends at the edge {2,3}
        let g = triangle_plus_pendant();
        let exact = pine_success_prob(&g, &NodeHeuristic::Uniform).unwrap();
        assert!((exact - (0.25 + 0.25 + 0.25 * 2.0 / 3.0)).abs() < 1e-15);
        let mc = pine_monte_carlo(&g, &NodeHeuristic::Uniform, 20_000, 5).unwrap();
        assert!((mc.estimate - exact).abs() < 3.0 * mc.std_err, "{mc:?} vs {exact}");
    }

    #[test]
    fn traces_are_cliques_and_shrink() {
        for seed in 0..40 {
            let g = sample_er(9, 0.5, seed).unwrap();
            for h in [NodeHeuristic::Uniform, NodeHeuristic::Degree, rook_heuristic(seed)] {
                let t = pine_run(&g, &h, seed).unwrap();
                assert!(g.is_clique(t.clique));
                assert!(t.steps.len() <= g.n());
                assert!(t.steps.windows(2).all(|w| w[1].subgraph_size < w[0].subgraph_size));
                // the last pick leaves nothing: the result is maximal
                assert!(ones(g.full_mask() & !t.clique).all(|v| g.neighbours(v) & t.clique != t.clique));
            }
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = sample_er(8, 0.6, 2).unwrap();
        let h = rook_heuristic(3);
        assert_eq!(pine_runs(&g, &h, 30, 9).unwrap(), pine_runs(&g, &h, 30, 9).unwrap());
    }

    #[test]
    fn exact_rook_probability_is_relabelling_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let g = sample_er(7, 0.5, seed).unwrap();
            let h = rook_heuristic(seed);
            let p = pine_success_prob(&g, &h).unwrap();
            let q = pine_success_prob(&g.permute(&Permutation::random(7, &mut rng)).unwrap(), &h).unwrap();
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn exact_limit() {
        let big = Graph::empty(EXACT_PINE_LIMIT + 1).unwrap();
        assert!(matches!(
            pine_success_prob(&big, &NodeHeuristic::Uniform),
            Err(Error::OverBudget { .. })
        ));
        // a graph whose only maximal cliques are maximum: every run succeeds
        let two_triangles = Graph::new(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let p = pine_success_prob(&two_triangles, &NodeHeuristic::Degree).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn rows_report_success() {
        let rows = pine_rows(7, &triangle_plus_pendant(), &NodeHeuristic::Uniform, 50, 1).unwrap();
        assert_eq!(rows.len(), 50);
        assert!(rows.iter().all(|r| r.graph_id == 7 && r.omega == 3 && r.success == (r.clique_size == 3)));
        assert!(rows.iter().any(|r| !r.success));
    }
}
