//! Symmetry audits: equivariance of the ansatz, invariance of losses under
//! vertex relabelling, accuracy on relabelled datasets, and local symmetry
//! metrics of the two-qubit (anti-)edge gadgets.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_ansatz, build_plan, edge_gadget, AnsatzSpec, ParameterSet};
use crate::dataset::{sample_er, DatasetEntry};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{Graph, Permutation};
use crate::objective::{LossConfig, PreparedEntry};
use crate::seed::derive_seed;
use crate::statevector::{Gate, StateVector};
use crate::training::Checkpoint;

/// Up to this size every permutation is tested; above it a sample is drawn.
pub const EXHAUSTIVE_PERMUTATIONS: usize = 5;
pub const SAMPLED_PERMUTATIONS: usize = 50;

/// Every permutation for small `n`, otherwise a seeded sample.
pub fn permutations_for(n: usize, seed: u64) -> Vec<Permutation> {
    if n <= EXHAUSTIVE_PERMUTATIONS {
        Permutation::all(n)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..SAMPLED_PERMUTATIONS).map(|_| Permutation::random(n, &mut rng)).collect()
    }
}

/// Largest amplitude gap between the ansatz on the relabelled graph and the
/// relabelled output of the ansatz on the original graph.
pub fn check_equivariance(spec: &AnsatzSpec, g: &Graph, theta: &ParameterSet, sigma: &Permutation) -> Result<f64> {
    let base = apply_ansatz(spec, g, theta)?.permute_qubits(sigma)?;
    let moved = apply_ansatz(spec, &g.permute(sigma)?, theta)?;
    Ok(base.max_abs_diff(&moved))
}

/// The entry with vertices relabelled by `sigma` and its label carried along.
pub fn permute_entry(entry: &DatasetEntry, sigma: &Permutation) -> Result<DatasetEntry> {
    let mut max_cliques: Vec<_> = entry.max_cliques.iter().map(|&b| sigma.permute_bits(b)).collect();
    max_cliques.sort_unstable();
    Ok(DatasetEntry {
        graph: entry.graph.permute(sigma)?,
        omega: entry.omega,
        max_cliques,
        edge_probability: entry.edge_probability,
        source_seed: entry.source_seed,
    })
}

/// Largest loss change over `perms`.
pub fn check_loss_invariance(
    loss: LossConfig,
    spec: &AnsatzSpec,
    entry: &DatasetEntry,
    theta: &ParameterSet,
    perms: &[Permutation],
) -> Result<f64> {
    theta.check(spec)?;
    let base = PreparedEntry::new(spec, loss, entry)?.forward(&theta.0)?.loss.scalar;
    let deltas = exec::try_map(perms, |sigma| {
        let moved = PreparedEntry::new(spec, loss, &permute_entry(entry, sigma)?)?;
        Ok::<_, Error>((moved.forward(&theta.0)?.loss.scalar - base).abs())
    })?;
    Ok(deltas.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDrop {
    pub index: usize,
    pub n: usize,
    pub original: f64,
    pub permuted_mean: f64,
    pub drop: f64,
}

/// Accuracy of each entry against the mean over `per_entry` random
/// relabellings of it, seeded per entry.
pub fn permuted_accuracy_drop(
    checkpoint: &Checkpoint,
    loss: LossConfig,
    entries: &[DatasetEntry],
    per_entry: usize,
    seed: u64,
) -> Result<Vec<AccuracyDrop>> {
    checkpoint.validate()?;
    if per_entry == 0 {
        return Err(Error::Config("need at least one permutation per entry".into()));
    }
    let spec = &checkpoint.spec;
    let theta = &checkpoint.theta.0;
    let indices: Vec<usize> = (0..entries.len()).collect();
    exec::try_map(&indices, |&index| {
        let entry = &entries[index];
        let original = PreparedEntry::new(spec, loss, entry)?.evaluate(theta)?.accuracy;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("drop/{index}")));
        let mut total = 0.0;
        for _ in 0..per_entry {
            let sigma = Permutation::random(entry.n(), &mut rng);
            total += PreparedEntry::new(spec, loss, &permute_entry(entry, &sigma)?)?
                .evaluate(theta)?
                .accuracy;
        }
        let permuted_mean = total / per_entry as f64;
        Ok(AccuracyDrop {
            index,
            n: entry.n(),
            original,
            permuted_mean,
            drop: original - permuted_mean,
        })
    })
}

/// A relabelling under which a non-equivariant model changes its output.
#[derive(Debug, Clone)]
pub struct Witness {
    pub entry: DatasetEntry,
    pub theta: ParameterSet,
    pub sigma: Permutation,
    pub amplitude_deviation: f64,
    pub loss_delta: f64,
}

/// Seeded random search over graphs on `n` vertices, angles in `[0, 2 pi)` and
/// non-identity relabellings; keeps the largest loss change found.
pub fn search_witness(spec: &AnsatzSpec, loss: LossConfig, n: usize, seed: u64, tries: usize) -> Result<Witness> {
    if n < 2 || tries == 0 {
        return Err(Error::Config("witness search needs n >= 2 and at least one try".into()));
    }
    let mut best: Option<Witness> = None;
    for t in 0..tries {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("witness/{t}")));
        let graph = sample_er(n, 0.5, rng.random())?;
        let entry = DatasetEntry::label(graph, Some(0.5), None)?;
        let theta = ParameterSet(
            (0..spec.param_count())
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
        );
        let sigma = loop {
            let s = Permutation::random(n, &mut rng);
            if !s.is_identity() {
                break s;
            }
        };
        let loss_delta = check_loss_invariance(loss, spec, &entry, &theta, std::slice::from_ref(&sigma))?;
        if best.as_ref().is_none_or(|b| loss_delta > b.loss_delta) {
            let amplitude_deviation = check_equivariance(spec, &entry.graph, &theta, &sigma)?;
            best = Some(Witness {
                entry,
                theta,
                sigma,
                amplitude_deviation,
                loss_delta,
            });
        }
    }
    Ok(best.expect("at least one try"))
}

/// Local symmetry metrics of one layer's edge or anti-edge gadget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSymmetry {
    pub layer: usize,
    pub kind: String,
    /// `||U - SWAP U SWAP||`.
    pub swap_asymmetry: f64,
    /// Largest `||[U_uv, U_uw]||` over gadgets sharing one vertex.
    pub commutator_norm: f64,
    /// `||e^{-i phi} U - I||` with `phi = arg tr U`.
    pub identity_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub spec: AnsatzSpec,
    pub layers: Vec<LayerSymmetry>,
    pub loss_invariance_delta: Option<f64>,
}

type CMatrix = DMatrix<Complex64>;

/// Dense unitary of a gate list on `n` qubits, column `k` = image of `|k>`.
fn unitary(n: usize, gates: &[(Gate, usize)], theta: &[f64]) -> Result<CMatrix> {
    let dim = 1usize << n;
    let mut u = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[k] = Complex64::new(1.0, 0.0);
        let mut state = StateVector::from_amplitudes(amps)?;
        for &(gate, slot) in gates {
            state.apply(gate, theta[slot])?;
        }
        for (row, a) in state.amplitudes().iter().enumerate() {
            u[(row, k)] = *a;
        }
    }
    Ok(u)
}

fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn swap_matrix() -> CMatrix {
    let mut s = CMatrix::zeros(4, 4);
    for (from, to) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        s[(to, from)] = Complex64::new(1.0, 0.0);
    }
    s
}

pub fn gate_symmetry_metrics(spec: &AnsatzSpec, theta: &ParameterSet) -> Result<SymmetryReport> {
    spec.validate()?;
    theta.check(spec)?;
    let t = &theta.0;
    let swap = swap_matrix();
    let mut layers = Vec::with_capacity(2 * spec.layers);
    for layer in 0..spec.layers {
        for (kind, base) in [
            ("edge", spec.edge_slots(layer).start),
            ("anti_edge", spec.anti_edge_slots(layer).start),
        ] {
            let u = unitary(2, &edge_gadget(spec, 0, 1, base), t)?;
            let swap_asymmetry = spectral_norm(&(&u - &swap * &u * &swap));

            let mut commutator_norm: f64 = 0.0;
            for (p, q) in [((0, 1), (0, 2)), ((0, 1), (1, 2)), ((0, 2), (1, 2))] {
                let a = unitary(3, &edge_gadget(spec, p.0, p.1, base), t)?;
                let b = unitary(3, &edge_gadget(spec, q.0, q.1, base), t)?;
                commutator_norm = commutator_norm.max(spectral_norm(&(&a * &b - &b * &a)));
            }

            let trace = u.trace();
            let phase = if trace.norm() > 1e-12 {
                Complex64::from_polar(1.0, -trace.arg())
            } else {
                Complex64::new(1.0, 0.0)
            };
            let identity_distance = spectral_norm(&(u * phase - CMatrix::identity(4, 4)));

            layers.push(LayerSymmetry {
                layer,
                kind: kind.into(),
                swap_asymmetry,
                commutator_norm,
                identity_distance,
            });
        }
    }
    Ok(SymmetryReport {
        spec: *spec,
        layers,
        loss_invariance_delta: None,
    })
}

pub fn write_symmetry_csv<W: std::io::Write>(rows: &[LayerSymmetry], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(["layer", "kind", "swap_asymmetry", "commutator_norm", "identity_distance"])?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// The circuit plan of `spec` on `g` applied to an arbitrary starting state.
pub fn apply_plan_to(spec: &AnsatzSpec, g: &Graph, theta: &[f64], mut state: StateVector) -> Result<StateVector> {
    let plan = build_plan(spec, g)?;
    if theta.len() != plan.n_slots {
        return Err(Error::Length {
            expected: plan.n_slots,
            got: theta.len(),
        });
    }
    for pg in &plan.gates {
        state.apply(pg.gate, theta[pg.slot])?;
    }
    Ok(state)
}
