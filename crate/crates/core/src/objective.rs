//! Binds a loss choice to a dataset entry: which observable is read out, which
//! bitstrings count as correct, and the per-entry evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_plan, AnsatzSpec, CircuitPlan, ParameterSet};
use crate::dataset::DatasetEntry;
use crate::error::{Error, Result};
use crate::graph::{popcount, Bits};
use crate::observables::{
    self as obs, argmax, CraterTarget, DiagObservable, LossValue, ObservableKind, TaskKind,
    DEFAULT_EPS,
};
use crate::statevector::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Dist,
    LogWrong,
    /// Evaluation only.
    Argmax,
    Mse,
    Mountain,
    Crater,
}

impl LossKind {
    pub fn task(&self) -> TaskKind {
        match self {
            LossKind::Dist | LossKind::LogWrong | LossKind::Argmax => TaskKind::MaxClique,
            LossKind::Mse | LossKind::Mountain | LossKind::Crater => TaskKind::CliqueNumber,
        }
    }

    pub fn observable(&self) -> ObservableKind {
        match self {
            LossKind::Dist | LossKind::LogWrong | LossKind::Argmax => ObservableKind::Bitstring,
            LossKind::Mse | LossKind::Mountain => ObservableKind::Mountain,
            LossKind::Crater => ObservableKind::Crater,
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, LossKind::Argmax)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Dist => "dist",
            LossKind::LogWrong => "logwrong",
            LossKind::Argmax => "argmax",
            LossKind::Mse => "mse",
            LossKind::Mountain => "mountain",
            LossKind::Crater => "crater",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "dist" => LossKind::Dist,
            "logwrong" => LossKind::LogWrong,
            "argmax" => LossKind::Argmax,
            "mse" => LossKind::Mse,
            "mountain" => LossKind::Mountain,
            "crater" => LossKind::Crater,
            _ => return Err(Error::Config(format!("unknown loss `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Mixing weight for Mountain and penalty weight for Crater.
    pub alpha: f64,
    pub eps: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            alpha: 0.5,
            eps: DEFAULT_EPS,
        }
    }
}

/// Per-entry metrics. `accuracy` is argmax correctness for Max-Clique and
/// rounded-readout correctness for Clique-Number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntryMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub dist_acc: f64,
    pub sureness: f64,
    /// Size of the argmax clique over omega, 0 if the argmax is no clique.
    /// Max-Clique only.
    pub approx_ratio: Option<f64>,
    pub expectation: f64,
}

/// An entry prepared for repeated evaluation under one ansatz and loss.
#[derive(Debug, Clone)]
pub struct PreparedEntry {
    pub plan: CircuitPlan,
    pub loss: LossConfig,
    pub n: usize,
    pub omega: usize,
    /// Correct bitstrings: the maximum cliques (Max-Clique) or every string of
    /// weight omega (Clique-Number).
    pub targets: Vec<Bits>,
    pub max_cliques: Vec<Bits>,
    pub eigenvalues: Vec<f64>,
    /// Regression target of the readout expectation.
    pub y: f64,
    pub band: Option<CraterTarget>,
    /// Clique indicator per basis state; Max-Clique only.
    graph_is_clique: Vec<bool>,
}

/// Result of one forward evaluation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub state: StateVector,
    pub probs: Vec<f64>,
    pub expectation: f64,
    pub loss: LossValue,
}

impl PreparedEntry {
    pub fn new(spec: &AnsatzSpec, loss: LossConfig, entry: &DatasetEntry) -> Result<Self> {
        let plan = build_plan(spec, &entry.graph)?;
        Self::with_plan(plan, loss, entry)
    }

    pub fn with_plan(plan: CircuitPlan, loss: LossConfig, entry: &DatasetEntry) -> Result<Self> {
        let n = entry.n();
        let targets = match loss.kind.task() {
            TaskKind::MaxClique => entry.max_cliques.clone(),
            TaskKind::CliqueNumber => obs::weight_class(n, entry.omega),
        };
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        let eigenvalues = DiagObservable::new(loss.kind.observable(), n).eigenvalues;
        let band = (loss.kind == LossKind::Crater)
            .then(|| CraterTarget::for_clique_number(entry.omega, n));
        let y = match (loss.kind, band) {
            (_, Some(b)) => b.target,
            _ => entry.omega as f64,
        };
        let graph_is_clique = if loss.kind.task() == TaskKind::MaxClique {
            (0..1u64 << n).map(|b| entry.graph.is_clique(b)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            plan,
            loss,
            n,
            omega: entry.omega,
            targets,
            max_cliques: entry.max_cliques.clone(),
            eigenvalues,
            y,
            band,
            graph_is_clique,
        })
    }

    pub fn is_target(&self, b: usize) -> bool {
        self.targets.binary_search(&(b as Bits)).is_ok()
    }

    /// Loss from output probabilities.
    pub fn loss_from_probs(&self, probs: &[f64]) -> (LossValue, f64) {
        let e: f64 = probs.iter().zip(&self.eigenvalues).map(|(p, l)| p * l).sum();
        let cfg = self.loss;
        let value = match cfg.kind {
            LossKind::Dist => LossValue::plain(
                obs::loss_dist(probs, &self.targets).expect("targets checked non-empty"),
            ),
            LossKind::LogWrong => LossValue::plain(obs::loss_logwrong(probs, &self.targets, cfg.eps)),
            LossKind::Argmax => LossValue::plain(obs::loss_argmax(probs, &self.targets)),
            LossKind::Mse => LossValue::plain(obs::loss_mse(e, self.y)),
            LossKind::Mountain => {
                obs::loss_mountain(probs, e, &self.targets, self.y, cfg.alpha, cfg.eps)
            }
            LossKind::Crater => obs::loss_crater(e, self.band.expect("crater band"), cfg.alpha),
        };
        (value, e)
    }

    pub fn forward(&self, theta: &[f64]) -> Result<Forward> {
        let state = self.plan.apply(theta)?;
        let probs = state.probabilities();
        let (loss, expectation) = self.loss_from_probs(&probs);
        Ok(Forward {
            state,
            probs,
            expectation,
            loss,
        })
    }

    pub fn metrics_from(&self, fwd: &Forward) -> EntryMetrics {
        let probs = &fwd.probs;
        let e = fwd.expectation;
        let best = argmax(probs);
        let (accuracy, approx_ratio) = match self.loss.kind.task() {
            TaskKind::MaxClique => {
                let acc = 1.0 - obs::loss_argmax(probs, &self.targets);
                let ratio = if self.graph_is_clique[best] {
                    popcount(best as Bits) as f64 / self.omega as f64
                } else {
                    0.0
                };
                (acc, Some(ratio))
            }
            TaskKind::CliqueNumber => {
                let k = match self.loss.kind {
                    LossKind::Crater => obs::round_crater(e, self.n),
                    _ => obs::round_mountain(e, self.n),
                };
                (if k == self.omega { 1.0 } else { 0.0 }, None)
            }
        };
        EntryMetrics {
            loss: fwd.loss.scalar,
            accuracy,
            dist_acc: obs::metric_distribution_accuracy(probs, &self.targets),
            sureness: obs::metric_sureness_argmax(probs, &self.targets),
            approx_ratio,
            expectation: e,
        }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<EntryMetrics> {
        Ok(self.metrics_from(&self.forward(theta)?))
    }
}

/// Loss of a single entry under `spec` and `theta`.
pub fn entry_loss(
    loss: LossConfig,
    spec: &AnsatzSpec,
    entry: &DatasetEntry,
    theta: &ParameterSet,
) -> Result<LossValue> {
    theta.check(spec)?;
    Ok(PreparedEntry::new(spec, loss, entry)?.forward(&theta.0)?.loss)
}
