//! Graph-encoded layered circuits.
//!
//! Each layer applies, in order, a node sub-layer (`RX RZ RX` on every vertex),
//! an edge sub-layer over the graph's edges and an anti-edge sub-layer over
//! its non-edges, both in ascending `(u, v)` order. Parameters are tied: all
//! vertices share one node triple per layer, all edges one edge vector and
//! all non-edges one anti-edge vector, so the parameter layout does not
//! depend on the graph.
//!
//! Two edge gadgets are supported:
//! * [`Family::Rook`]: `ZZ(b0)` followed by `RZ(b1)` on both endpoints. Diagonal
//!   and symmetric in the endpoints, so the circuit is permutation-equivariant.
//! * [`Family::MilleFeuille`]: `M` two-qubit blocks of
//!   `RY(i) RY(j) RZ(i) RZ(j) CRX(j -> i)`, five angles per block, with the
//!   higher-index vertex controlling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::statevector::{Gate, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Rook,
    MilleFeuille,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rook" => Ok(Family::Rook),
            "millefeuille" | "mille-feuille" | "mf" => Ok(Family::MilleFeuille),
            _ => Err(Error::Config(format!("unknown ansatz family `{s}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Rook => "Rook",
            Family::MilleFeuille => "MilleFeuille",
        })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub family: Family,
    #[serde(rename = "L")]
    pub layers: usize,
    /// SIM4 blocks per (anti-)edge gadget; `None` for Rook.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub inner_layers: Option<usize>,
    #[serde(default = "default_true")]
    pub include_initial_state: bool,
}

impl AnsatzSpec {
    pub fn rook(layers: usize) -> Self {
        Self {
            family: Family::Rook,
            layers,
            inner_layers: None,
            include_initial_state: true,
        }
    }

    pub fn mille_feuille(layers: usize, inner_layers: usize) -> Self {
        Self {
            family: Family::MilleFeuille,
            layers,
            inner_layers: Some(inner_layers),
            include_initial_state: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("ansatz needs at least one layer".into()));
        }
        match (self.family, self.inner_layers) {
            (Family::Rook, None) => Ok(()),
            (Family::MilleFeuille, Some(m)) if m >= 1 => Ok(()),
            (Family::Rook, Some(_)) => Err(Error::Config("Rook takes no inner layer count".into())),
            (Family::MilleFeuille, _) => {
                Err(Error::Config("MilleFeuille needs an inner layer count >= 1".into()))
            }
        }
    }

    /// Angles per edge (and per anti-edge) gadget in one layer.
    pub fn edge_width(&self) -> usize {
        match self.family {
            Family::Rook => 2,
            Family::MilleFeuille => 5 * self.inner_layers.unwrap_or(1),
        }
    }

    pub fn layer_width(&self) -> usize {
        3 + 2 * self.edge_width()
    }

    fn initial_width(&self) -> usize {
        if self.include_initial_state {
            3
        } else {
            0
        }
    }

    /// Number of trainable angles; independent of the graph.
    pub fn param_count(&self) -> usize {
        self.layer_width() * self.layers + self.initial_width()
    }

    /// First slot of the initial-state Euler angles.
    pub fn initial_slots(&self) -> Option<std::ops::Range<usize>> {
        self.include_initial_state.then_some(0..3)
    }

    pub fn node_slots(&self, layer: usize) -> std::ops::Range<usize> {
        let base = self.initial_width() + layer * self.layer_width();
        base..base + 3
    }

    pub fn edge_slots(&self, layer: usize) -> std::ops::Range<usize> {
        let base = self.node_slots(layer).end;
        base..base + self.edge_width()
    }

    pub fn anti_edge_slots(&self, layer: usize) -> std::ops::Range<usize> {
        let base = self.edge_slots(layer).end;
        base..base + self.edge_width()
    }

    pub fn describe(&self) -> String {
        match self.inner_layers {
            Some(m) => format!("{}(L={}, M={m})", self.family, self.layers),
            None => format!("{}(L={})", self.family, self.layers),
        }
    }
}

/// Flat parameter vector in canonical slot order: initial Euler angles, then
/// per layer node triple, edge vector, anti-edge vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSet(pub Vec<f64>);

impl ParameterSet {
    pub fn zeros(spec: &AnsatzSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub fn check(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.0.len() != spec.param_count() {
            return Err(Error::Length {
                expected: spec.param_count(),
                got: self.0.len(),
            });
        }
        if let Some(i) = self.0.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which part of a layer a gate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublayer {
    Initial,
    Node,
    Edge,
    AntiEdge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedGate {
    pub gate: Gate,
    /// Parameter slot supplying the angle.
    pub slot: usize,
    /// `None` for the initial-state preamble.
    pub layer: Option<usize>,
    pub sublayer: Sublayer,
}

/// Gate list for one graph, each gate tagged with the slot it reads. Applied to
/// `|0...0>`; the initial product state is the leading preamble.
#[derive(Debug, Clone)]
pub struct CircuitPlan {
    pub n_qubits: usize,
    pub n_slots: usize,
    pub gates: Vec<PlannedGate>,
}

impl CircuitPlan {
    /// Runs the plan on `|0...0>`.
    pub fn apply(&self, theta: &[f64]) -> Result<StateVector> {
        if theta.len() != self.n_slots {
            return Err(Error::Length {
                expected: self.n_slots,
                got: theta.len(),
            });
        }
        let mut state = StateVector::zero(self.n_qubits)?;
        for g in &self.gates {
            state.apply_unchecked(g.gate, theta[g.slot]);
        }
        Ok(state)
    }

    /// Same gates acting on relabelled qubits.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> CircuitPlan {
        CircuitPlan {
            gates: self
                .gates
                .iter()
                .map(|g| PlannedGate {
                    gate: g.gate.relabel(&f),
                    ..*g
                })
                .collect(),
            ..*self
        }
    }
}

/// The gates of one (anti-)edge gadget on `(i, j)`, `i < j`, reading slots
/// `base..base + spec.edge_width()`.
pub fn edge_gadget(spec: &AnsatzSpec, i: usize, j: usize, base: usize) -> Vec<(Gate, usize)> {
    match spec.family {
        Family::Rook => vec![
            (Gate::Zz(i, j), base),
            (Gate::Rz(i), base + 1),
            (Gate::Rz(j), base + 1),
        ],
        Family::MilleFeuille => (0..spec.inner_layers.unwrap_or(1))
            .flat_map(|m| {
                let s = base + 5 * m;
                [
                    (Gate::Ry(i), s),
                    (Gate::Ry(j), s + 1),
                    (Gate::Rz(i), s + 2),
                    (Gate::Rz(j), s + 3),
                    (
                        Gate::Crx {
                            control: j,
                            target: i,
                        },
                        s + 4,
                    ),
                ]
            })
            .collect(),
    }
}

pub fn build_plan(spec: &AnsatzSpec, graph: &Graph) -> Result<CircuitPlan> {
    spec.validate()?;
    let n = graph.n();
    let mut gates = Vec::new();
    let mut push = |gate, slot, layer, sublayer| {
        gates.push(PlannedGate {
            gate,
            slot,
            layer,
            sublayer,
        })
    };
    if let Some(init) = spec.initial_slots() {
        for v in 0..n {
            push(Gate::Rx(v), init.start, None, Sublayer::Initial);
            push(Gate::Rz(v), init.start + 1, None, Sublayer::Initial);
            push(Gate::Rx(v), init.start + 2, None, Sublayer::Initial);
        }
    }
    let anti_edges = graph.complement_edges();
    for layer in 0..spec.layers {
        let node = spec.node_slots(layer);
        for v in 0..n {
            push(Gate::Rx(v), node.start, Some(layer), Sublayer::Node);
            push(Gate::Rz(v), node.start + 1, Some(layer), Sublayer::Node);
            push(Gate::Rx(v), node.start + 2, Some(layer), Sublayer::Node);
        }
        for (pairs, base, tag) in [
            (graph.edges(), spec.edge_slots(layer).start, Sublayer::Edge),
            (&anti_edges[..], spec.anti_edge_slots(layer).start, Sublayer::AntiEdge),
        ] {
            for &(u, v) in pairs {
                for (gate, slot) in edge_gadget(spec, u, v, base) {
                    push(gate, slot, Some(layer), tag);
                }
            }
        }
    }
    Ok(CircuitPlan {
        n_qubits: n,
        n_slots: spec.param_count(),
        gates,
    })
}

/// Output state of the ansatz on `graph`.
pub fn apply_ansatz(spec: &AnsatzSpec, graph: &Graph, theta: &ParameterSet) -> Result<StateVector> {
    theta.check(spec)?;
    build_plan(spec, graph)?.apply(&theta.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Permutation;
    use crate::statevector::GateKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn random_theta(spec: &AnsatzSpec, rng: &mut ChaCha8Rng) -> ParameterSet {
        ParameterSet((0..spec.param_count()).map(|_| rng.random_range(-3.0..3.0)).collect())
    }

    #[test]
    fn param_counts() {
        assert_eq!(AnsatzSpec::rook(5).param_count(), 38);
        assert_eq!(AnsatzSpec::rook(20).param_count(), 143);
        assert_eq!(AnsatzSpec::mille_feuille(5, 2).param_count(), 118);
        assert_eq!(AnsatzSpec::mille_feuille(20, 5).param_count(), 1063);
    }

    #[test]
    fn spec_validation() {
        assert!(AnsatzSpec::rook(0).validate().is_err());
        assert!(AnsatzSpec::mille_feuille(2, 0).validate().is_err());
        let mut bad = AnsatzSpec::rook(2);
        bad.inner_layers = Some(3);
        assert!(bad.validate().is_err());
        assert_eq!("mf".parse::<Family>().unwrap(), Family::MilleFeuille);
        assert!("circle".parse::<Family>().is_err());
    }

    fn count(plan: &CircuitPlan, tag: Sublayer) -> usize {
        plan.gates.iter().filter(|g| g.sublayer == tag).count()
    }

    #[test]
    fn rook_structure_on_two_vertices() {
        let spec = AnsatzSpec::rook(1);
        let k2 = Graph::complete(2).unwrap();
        let plan = build_plan(&spec, &k2).unwrap();
        assert_eq!(count(&plan, Sublayer::Node), 6);
        assert_eq!(count(&plan, Sublayer::Edge), 3);
        assert_eq!(count(&plan, Sublayer::AntiEdge), 0);
        let zz = plan.gates.iter().filter(|g| g.gate.kind() == GateKind::Zz).count();
        assert_eq!(zz, 1);

        let empty = build_plan(&spec, &Graph::empty(2).unwrap()).unwrap();
        assert_eq!(count(&empty, Sublayer::Edge), 0);
        assert_eq!(count(&empty, Sublayer::AntiEdge), 3);
    }

    #[test]
    fn mille_feuille_structure_on_two_vertices() {
        let spec = AnsatzSpec::mille_feuille(1, 1);
        let plan = build_plan(&spec, &Graph::complete(2).unwrap()).unwrap();
        assert_eq!(count(&plan, Sublayer::Node), 6);
        assert_eq!(count(&plan, Sublayer::Edge), 5);
        assert_eq!(count(&plan, Sublayer::AntiEdge), 0);
        let edge_slots: BTreeSet<_> = plan
            .gates
            .iter()
            .filter(|g| g.sublayer == Sublayer::Edge)
            .map(|g| g.slot)
            .collect();
        assert_eq!(edge_slots.len(), 5);
        let crx = plan.gates.iter().find(|g| g.gate.kind() == GateKind::Crx).unwrap();
        assert_eq!(crx.gate, Gate::Crx { control: 1, target: 0 });
    }

    #[test]
    fn every_slot_is_read() {
        // a graph with both edges and non-edges touches every slot
        let g = Graph::path(4).unwrap();
        for spec in [
            AnsatzSpec::rook(3),
            AnsatzSpec::mille_feuille(2, 3),
            AnsatzSpec {
                include_initial_state: false,
                ..AnsatzSpec::rook(2)
            },
        ] {
            let plan = build_plan(&spec, &g).unwrap();
            let used: BTreeSet<_> = plan.gates.iter().map(|g| g.slot).collect();
            assert_eq!(used.len(), spec.param_count());
            assert_eq!(*used.iter().max().unwrap() + 1, spec.param_count());
        }
    }

    #[test]
    fn zero_angles_give_all_zero_state() {
        let g = Graph::path(4).unwrap();
        for spec in [AnsatzSpec::rook(2), AnsatzSpec::mille_feuille(2, 2)] {
            let s = apply_ansatz(&spec, &g, &ParameterSet::zeros(&spec)).unwrap();
            assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn preamble_equals_product_state() {
        let spec = AnsatzSpec::rook(1);
        let mut theta = ParameterSet::zeros(&spec);
        theta.0[..3].copy_from_slice(&[0.3, 1.2, -0.7]);
        let g = Graph::empty(3).unwrap();
        let mut plan = build_plan(&spec, &g).unwrap();
        plan.gates.retain(|g| g.sublayer == Sublayer::Initial);
        let a = plan.apply(&theta.0).unwrap();
        let b = StateVector::product_state(3, [0.3, 1.2, -0.7]).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let spec = AnsatzSpec::rook(1);
        let g = Graph::complete(2).unwrap();
        assert!(apply_ansatz(&spec, &g, &ParameterSet(vec![0.0; 3])).is_err());
    }

    #[test]
    fn rook_is_relabelling_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = AnsatzSpec::rook(2);
        for _ in 0..20 {
            let g = Graph::new(5, crate::graph::all_pairs(5).filter(|_| rng.random_bool(0.5))).unwrap();
            let theta = random_theta(&spec, &mut rng);
            let sigma = Permutation::random(5, &mut rng);
            let base = apply_ansatz(&spec, &g, &theta).unwrap();
            let moved = apply_ansatz(&spec, &g.permute(&sigma).unwrap(), &theta).unwrap();
            assert!(base.permute_qubits(&sigma).unwrap().max_abs_diff(&moved) < 1e-10);
        }
    }

    #[test]
    fn rook_on_triangle_is_relabelling_invariant_in_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = AnsatzSpec::rook(3);
        let k3 = Graph::complete(3).unwrap();
        let theta = random_theta(&spec, &mut rng);
        let base = apply_ansatz(&spec, &k3, &theta).unwrap().probabilities();
        for sigma in Permutation::all(3) {
            let p = apply_ansatz(&spec, &k3.permute(&sigma).unwrap(), &theta)
                .unwrap()
                .probabilities();
            for b in 0..8u64 {
                let pb = p[sigma.permute_bits(b) as usize];
                assert!((pb - base[b as usize]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rook_edge_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = AnsatzSpec::rook(1);
        let g = Graph::new(4, [(0, 1), (1, 2), (0, 3)]).unwrap();
        let theta = random_theta(&spec, &mut rng);
        let plan = build_plan(&spec, &g).unwrap();
        let mut shuffled = plan.clone();
        let start = shuffled
            .gates
            .iter()
            .position(|g| g.sublayer != Sublayer::Initial && g.sublayer != Sublayer::Node)
            .unwrap();
        shuffled.gates[start..].reverse();
        let a = plan.apply(&theta.0).unwrap();
        let b = shuffled.apply(&theta.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn spec_serialises_with_short_keys() {
        let json = serde_json::to_string(&AnsatzSpec::mille_feuille(5, 2)).unwrap();
        assert!(json.contains("\"L\":5") && json.contains("\"M\":2"));
        let rook: AnsatzSpec = serde_json::from_str(r#"{"family":"Rook","L":3}"#).unwrap();
        assert_eq!(rook, AnsatzSpec::rook(3));
    }
}
