//! Diagonal readout observables, losses and evaluation metrics.
//!
//! Probability vectors are indexed by basis state (vertex mask). Target sets
//! are sorted, duplicate-free lists of masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{popcount, Bits};

/// Log-stability constant used when none is configured.
pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableKind {
    /// Identity readout; only the output distribution matters.
    Bitstring,
    /// Hamming weight, eigenvalues `0..=n`.
    Mountain,
    /// Sign of `n/2 - weight`: `+1` below half, `-1` above, `0` at exactly half.
    Crater,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagObservable {
    pub kind: ObservableKind,
    pub n: usize,
    pub eigenvalues: Vec<f64>,
}

impl DiagObservable {
    pub fn new(kind: ObservableKind, n: usize) -> Self {
        let eigenvalues = (0..1u64 << n)
            .map(|b| {
                let w = popcount(b);
                match kind {
                    ObservableKind::Bitstring => 1.0,
                    ObservableKind::Mountain => w as f64,
                    ObservableKind::Crater => match (2 * w).cmp(&n) {
                        std::cmp::Ordering::Less => 1.0,
                        std::cmp::Ordering::Greater => -1.0,
                        std::cmp::Ordering::Equal => 0.0,
                    },
                }
            })
            .collect();
        Self { kind, n, eigenvalues }
    }
}

/// A scalar loss with named sub-terms for logging.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub scalar: f64,
    pub components: Vec<(&'static str, f64)>,
}

impl LossValue {
    pub fn plain(scalar: f64) -> Self {
        Self {
            scalar,
            components: Vec::new(),
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    /// `name=value` pairs joined by `;`.
    pub fn components_string(&self) -> String {
        self.components
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn is_target(targets: &[Bits], b: usize) -> bool {
    targets.binary_search(&(b as Bits)).is_ok()
}

/// Probability mass outside the target set.
pub fn wrong_mass(probs: &[f64], targets: &[Bits]) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|&(b, _)| !is_target(targets, b))
        .map(|(_, p)| p)
        .sum()
}

/// Sum of squared probabilities of non-target strings.
pub fn loss_dist(probs: &[f64], targets: &[Bits]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    Ok(probs
        .iter()
        .enumerate()
        .filter(|&(b, _)| !is_target(targets, b))
        .map(|(_, p)| p * p)
        .sum())
}

/// `log(eps + wrong mass)`.
pub fn loss_logwrong(probs: &[f64], targets: &[Bits], eps: f64) -> f64 {
    (eps + wrong_mass(probs, targets)).ln()
}

/// Most probable basis state; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (b, &p)| if p > best.1 { (b, p) } else { best })
        .0
}

/// 0 if the most probable string is a target, 1 otherwise.
pub fn loss_argmax(probs: &[f64], targets: &[Bits]) -> f64 {
    if is_target(targets, argmax(probs)) {
        0.0
    } else {
        1.0
    }
}

pub fn loss_mse(expectation: f64, y: f64) -> f64 {
    (expectation - y).powi(2)
}

/// `(1 - alpha) * mse + alpha * logwrong`.
pub fn loss_mountain(
    probs: &[f64],
    expectation: f64,
    targets: &[Bits],
    y: f64,
    alpha: f64,
    eps: f64,
) -> LossValue {
    let mse = loss_mse(expectation, y);
    let logwrong = loss_logwrong(probs, targets, eps);
    LossValue {
        scalar: (1.0 - alpha) * mse + alpha * logwrong,
        components: vec![("mse", mse), ("logwrong", logwrong)],
    }
}

/// Target expectation and closed acceptance band for a Crater readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CraterTarget {
    pub target: f64,
    pub lo: f64,
    pub hi: f64,
}

impl CraterTarget {
    pub fn new(target: f64, lo: f64, hi: f64) -> Result<Self> {
        if lo > hi || !(lo..=hi).contains(&target) {
            return Err(Error::BadInterval { lo, hi });
        }
        Ok(Self { target, lo, hi })
    }

    /// Clique number `k` on `n` vertices maps to `1 - 2k/n` with half-width `1/n`.
    pub fn for_clique_number(k: usize, n: usize) -> Self {
        let t = 1.0 - 2.0 * k as f64 / n as f64;
        let half = 1.0 / n as f64;
        Self {
            target: t,
            lo: t - half,
            hi: t + half,
        }
    }

    pub fn contains(&self, e: f64) -> bool {
        (self.lo..=self.hi).contains(&e)
    }
}

/// `mse + alpha * [expectation outside band]`.
pub fn loss_crater(expectation: f64, band: CraterTarget, alpha: f64) -> LossValue {
    let mse = loss_mse(expectation, band.target);
    let penalty = if band.contains(expectation) { 0.0 } else { 1.0 };
    LossValue {
        scalar: mse + alpha * penalty,
        components: vec![("mse", mse), ("penalty", penalty)],
    }
}

/// Probability mass on target strings.
pub fn metric_distribution_accuracy(probs: &[f64], targets: &[Bits]) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|&(b, _)| is_target(targets, b))
        .map(|(_, p)| p)
        .sum()
}

/// Mass of the most probable string when it is a target, else 0.
pub fn metric_sureness_argmax(probs: &[f64], targets: &[Bits]) -> f64 {
    let b = argmax(probs);
    (1.0 - loss_argmax(probs, targets)) * probs[b]
}

/// Nearest clique number for a Hamming-weight expectation, halves rounding up,
/// clamped to `1..=n`.
pub fn round_mountain(expectation: f64, n: usize) -> usize {
    let k = (expectation + 0.5).floor();
    k.clamp(1.0, n as f64) as usize
}

/// Nearest Crater bin: inverts `t(k) = 1 - 2k/n`, clamped to `1..=n`.
pub fn round_crater(expectation: f64, n: usize) -> usize {
    let k = ((1.0 - expectation) * n as f64 / 2.0 + 0.5).floor();
    k.clamp(1.0, n as f64) as usize
}

/// All `n`-bit strings of a given weight, ascending.
pub fn weight_class(n: usize, weight: usize) -> Vec<Bits> {
    (0..1u64 << n).filter(|&b| popcount(b) == weight).collect()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    MaxClique,
    CliqueNumber,
}

/// Chance of guessing right with a uniform random bitstring, for one graph.
pub fn random_baseline_single(task: TaskKind, n: usize, omega: usize, n_max_cliques: usize) -> f64 {
    let space = (1u64 << n) as f64;
    match task {
        TaskKind::MaxClique => n_max_cliques as f64 / space,
        TaskKind::CliqueNumber => binomial(n, omega) / space,
    }
}

/// Mean of per-entry random-guess success over `(n, omega, |MC|)` triples.
pub fn metric_random_baseline(task: TaskKind, entries: &[(usize, usize, usize)]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    entries
        .iter()
        .map(|&(n, omega, k)| random_baseline_single(task, n, omega, k))
        .sum::<f64>()
        / entries.len() as f64
}

/// One row of the training / evaluation metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub step: usize,
    pub loss: f64,
    pub loss_components: String,
    pub grad_norm_mean: f64,
    pub argmax_acc: Option<f64>,
    pub dist_acc: Option<f64>,
    pub sureness: Option<f64>,
}

pub fn write_metric_rows<W: std::io::Write>(rows: &[MetricRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record([
            "run_id",
            "step",
            "loss",
            "loss_components",
            "grad_norm_mean",
            "argmax_acc",
            "dist_acc",
            "sureness",
        ])?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metric_rows<R: std::io::Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_reader(r);
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
