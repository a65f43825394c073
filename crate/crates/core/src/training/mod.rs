//! Adam training with per-epoch model selection, plus cross-validation and
//! warm starts. The optimisation loop is sequential; each batch fans out over
//! entries and reduces in input order, so a seeded run is bitwise repeatable.

pub mod adam;
pub mod checkpoint;
pub mod cv;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use cv::{cross_validate, fold_assignment, CellSummary, CvReport, FoldResult};

use crate::ansatz::{AnsatzSpec, ParameterSet};
use crate::dataset::{group_indices, DatasetEntry};
use crate::error::{Error, Result};
use crate::exec;
use crate::gradients::{batch_gradient, grad_stats, GradientVector};
use crate::objective::{EntryMetrics, LossConfig, LossKind, PreparedEntry};
use crate::observables::{metric_random_baseline, LossValue, MetricRow, TaskKind};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ArgmaxAcc,
    SurenessArgmax,
    Loss,
}

impl Selection {
    /// Higher is better.
    pub fn score(&self, m: &DatasetMetrics) -> f64 {
        match self {
            Selection::ArgmaxAcc => m.accuracy,
            Selection::SurenessArgmax => m.sureness,
            Selection::Loss => -m.loss,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Selection::ArgmaxAcc => "argmax_acc",
            Selection::SurenessArgmax => "sureness_argmax",
            Selection::Loss => "loss",
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "argmax_acc" | "argmax" | "accuracy" => Selection::ArgmaxAcc,
            "sureness_argmax" | "sureness" => Selection::SurenessArgmax,
            "loss" => Selection::Loss,
            _ => return Err(Error::Config(format!("unknown selection criterion `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub selection: Selection,
    pub loss: LossConfig,
    /// Independent restarts; the best selected checkpoint over all of them wins.
    pub restarts: usize,
    /// Keep every per-entry gradient in the log (memory heavy).
    #[serde(default)]
    pub store_batch_gradients: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 100,
            max_epochs: 500,
            seed: 0,
            selection: Selection::ArgmaxAcc,
            loss: LossConfig::new(LossKind::LogWrong),
            restarts: 1,
            store_batch_gradients: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if !self.loss.kind.is_differentiable() {
            return bad(format!("cannot train on `{}`", self.loss.kind.name()));
        }
        if !(0.0..=1.0).contains(&self.loss.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.loss.alpha));
        }
        if !(self.loss.eps.is_finite() && self.loss.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.loss.eps));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Initial circuit slots ~ U[0, 0.01]; the three initial-state slots ~ U[0, 1].
pub fn init_params(spec: &AnsatzSpec, seed: u64) -> Result<ParameterSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = spec.initial_slots().unwrap_or(0..0);
    Ok(ParameterSet(
        (0..spec.param_count())
            .map(|slot| {
                let u: f64 = rng.random();
                if initial.contains(&slot) {
                    u
                } else {
                    0.01 * u
                }
            })
            .collect(),
    ))
}

/// Mean of per-entry metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub count: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub dist_acc: f64,
    pub sureness: f64,
    pub approx_ratio: Option<f64>,
}

impl DatasetMetrics {
    pub fn mean(per_entry: &[EntryMetrics]) -> Result<Self> {
        if per_entry.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let k = per_entry.len() as f64;
        let avg = |f: fn(&EntryMetrics) -> f64| per_entry.iter().map(f).sum::<f64>() / k;
        let approx_ratio = per_entry
            .iter()
            .map(|m| m.approx_ratio)
            .sum::<Option<f64>>()
            .map(|s| s / k);
        Ok(Self {
            count: per_entry.len(),
            loss: avg(|m| m.loss),
            accuracy: avg(|m| m.accuracy),
            dist_acc: avg(|m| m.dist_acc),
            sureness: avg(|m| m.sureness),
            approx_ratio,
        })
    }
}

pub fn prepare_entries(
    spec: &AnsatzSpec,
    loss: LossConfig,
    entries: &[DatasetEntry],
) -> Result<Vec<PreparedEntry>> {
    spec.validate()?;
    exec::try_map(entries, |e| PreparedEntry::new(spec, loss, e))
}

pub fn evaluate_prepared(prepared: &[PreparedEntry], theta: &[f64]) -> Result<Vec<EntryMetrics>> {
    exec::try_map(prepared, |p| p.evaluate(theta))
}

/// Per-entry metrics of a checkpoint on `entries` and their mean.
pub fn evaluate_dataset(
    checkpoint: &Checkpoint,
    loss: LossConfig,
    entries: &[DatasetEntry],
) -> Result<(Vec<EntryMetrics>, DatasetMetrics)> {
    checkpoint.validate()?;
    let prepared = prepare_entries(&checkpoint.spec, loss, entries)?;
    let per_entry = evaluate_prepared(&prepared, &checkpoint.theta.0)?;
    let summary = DatasetMetrics::mean(&per_entry)?;
    Ok((per_entry, summary))
}

/// Metrics of one `(n, p)` evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n: usize,
    pub p: Option<f64>,
    pub metrics: DatasetMetrics,
    pub random_baseline: f64,
}

/// Groups per-entry metrics by `(n, p)` in first-seen order.
pub fn cell_metrics(
    task: TaskKind,
    entries: &[DatasetEntry],
    per_entry: &[EntryMetrics],
) -> Result<Vec<CellMetrics>> {
    if entries.len() != per_entry.len() {
        return Err(Error::Length {
            expected: entries.len(),
            got: per_entry.len(),
        });
    }
    group_indices(entries)
        .into_iter()
        .map(|((n, p), idx)| {
            let picked: Vec<_> = idx.iter().map(|&i| per_entry[i]).collect();
            let triples: Vec<_> = idx
                .iter()
                .map(|&i| (n, entries[i].omega, entries[i].max_cliques.len()))
                .collect();
            Ok(CellMetrics {
                n,
                p,
                metrics: DatasetMetrics::mean(&picked)?,
                random_baseline: metric_random_baseline(task, &triples),
            })
        })
        .collect()
}

/// One visited parameter vector `theta_step`. `loss` and `grad_aggregate` come
/// from the batch whose gradient produced the next update; the last row of a
/// restart, which has no next update, uses the whole training set instead.
/// `eval` is filled at epoch boundaries (and for the starting parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub restart: usize,
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub components: Vec<(&'static str, f64)>,
    /// Mean over coordinates of the batch mean of `|g|`.
    pub grad_aggregate: f64,
    pub eval: Option<DatasetMetrics>,
    pub batch_gradients: Option<Vec<GradientVector>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<StepRow>,
}

impl TrainingLog {
    pub fn to_metric_rows(&self, run_id: &str) -> Vec<MetricRow> {
        let many = self.rows.iter().any(|r| r.restart > 0);
        self.rows
            .iter()
            .map(|r| MetricRow {
                run_id: if many {
                    format!("{run_id}/r{}", r.restart)
                } else {
                    run_id.to_string()
                },
                step: r.step,
                loss: r.loss,
                loss_components: LossValue {
                    scalar: r.loss,
                    components: r.components.clone(),
                }
                .components_string(),
                grad_norm_mean: r.grad_aggregate,
                argmax_acc: r.eval.map(|m| m.accuracy),
                dist_acc: r.eval.map(|m| m.dist_acc),
                sureness: r.eval.map(|m| m.sureness),
            })
            .collect()
    }

    /// Mean `grad_aggregate` over the first `steps` update rows of a restart.
    pub fn mean_grad_aggregate(&self, restart: usize, steps: usize) -> Option<f64> {
        let picked: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.restart == restart)
            .take(steps)
            .map(|r| r.grad_aggregate)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub seed: u64,
    pub best_score: f64,
    pub best_step: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub log: TrainingLog,
    pub restarts: Vec<RestartOutcome>,
}

/// Cold-start training; selection is scored on the training entries.
pub fn train(config: &TrainConfig, spec: &AnsatzSpec, entries: &[DatasetEntry]) -> Result<TrainRun> {
    train_with(config, spec, entries, None, None)
}

/// Training initialised from `checkpoint` instead of random parameters. The
/// layout is size independent, so the checkpoint may come from other sizes.
pub fn warm_start(
    config: &TrainConfig,
    spec: &AnsatzSpec,
    entries: &[DatasetEntry],
    checkpoint: &Checkpoint,
) -> Result<TrainRun> {
    if checkpoint.spec != *spec {
        return Err(Error::SpecMismatch {
            expected: spec.describe(),
            found: checkpoint.spec.describe(),
        });
    }
    checkpoint.validate()?;
    train_with(config, spec, entries, None, Some(&checkpoint.theta))
}

struct Best {
    score: f64,
    loss: f64,
    theta: Vec<f64>,
    step: usize,
    epoch: usize,
    restart: usize,
}

impl Best {
    /// Strictly higher score, or equal score at strictly lower loss.
    fn beaten_by(&self, score: f64, loss: f64) -> bool {
        score > self.score || (score == self.score && loss < self.loss)
    }
}

fn ensure_finite(step: usize, loss: f64, grad: &[f64], context: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            step,
            detail: format!("batch loss {loss} ({context})"),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            step,
            detail: format!("gradient slot {i} is {} ({context})", grad[i]),
        });
    }
    Ok(())
}

/// Training with an optional validation split for model selection and
/// optional starting parameters.
pub fn train_with(
    config: &TrainConfig,
    spec: &AnsatzSpec,
    entries: &[DatasetEntry],
    validation: Option<&[DatasetEntry]>,
    init: Option<&ParameterSet>,
) -> Result<TrainRun> {
    config.validate()?;
    spec.validate()?;
    if entries.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(theta) = init {
        theta.check(spec)?;
    }
    let train_set = prepare_entries(spec, config.loss, entries)?;
    let val_set = validation
        .map(|v| {
            if v.is_empty() {
                return Err(Error::EmptyBatch);
            }
            prepare_entries(spec, config.loss, v)
        })
        .transpose()?;
    let select_on = val_set.as_deref().unwrap_or(&train_set);
    let all_train: Vec<&PreparedEntry> = train_set.iter().collect();

    let mut log = TrainingLog::default();
    let mut outcomes = Vec::with_capacity(config.restarts);
    let mut overall: Option<Best> = None;

    for restart in 0..config.restarts {
        let seed = if restart == 0 {
            config.seed
        } else {
            derive_seed(config.seed, &format!("restart/{restart}"))
        };
        let mut theta = match init {
            Some(t) => t.0.clone(),
            None => init_params(spec, seed)?.0,
        };
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle"));
        let mut adam = Adam::new(theta.len());
        let mut step = 0usize;

        let evaluate = |theta: &[f64], step: usize| -> Result<DatasetMetrics> {
            let m = DatasetMetrics::mean(&evaluate_prepared(select_on, theta)?)?;
            if !m.loss.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    detail: format!("selection loss {} (restart {restart})", m.loss),
                });
            }
            Ok(m)
        };

        let first = evaluate(&theta, 0)?;
        let mut best = Best {
            score: config.selection.score(&first),
            loss: first.loss,
            theta: theta.clone(),
            step: 0,
            epoch: 0,
            restart,
        };
        let mut pending = Some(first);
        let mut order: Vec<usize> = (0..train_set.len()).collect();

        for epoch in 1..=config.max_epochs {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&PreparedEntry> = chunk.iter().map(|&i| &train_set[i]).collect();
                let bg = batch_gradient(&batch, &theta)?;
                ensure_finite(step, bg.loss, &bg.mean.0, &format!("restart {restart}, epoch {epoch}"))?;
                let aggregate = grad_stats(&bg.per_entry)?.aggregate;
                log.rows.push(StepRow {
                    restart,
                    step,
                    epoch: epoch - 1,
                    loss: bg.loss,
                    components: bg.components,
                    grad_aggregate: aggregate,
                    eval: pending.take(),
                    batch_gradients: config.store_batch_gradients.then_some(bg.per_entry),
                });
                adam.step(&mut theta, &bg.mean.0, config.learning_rate);
                step += 1;
            }
            let m = evaluate(&theta, step)?;
            let score = config.selection.score(&m);
            if best.beaten_by(score, m.loss) {
                best = Best {
                    score,
                    loss: m.loss,
                    theta: theta.clone(),
                    step,
                    epoch,
                    restart,
                };
            }
            pending = Some(m);
        }

        let last = batch_gradient(&all_train, &theta)?;
        let aggregate = grad_stats(&last.per_entry)?.aggregate;
        log.rows.push(StepRow {
            restart,
            step,
            epoch: config.max_epochs,
            loss: last.loss,
            components: last.components,
            grad_aggregate: aggregate,
            eval: pending.take(),
            batch_gradients: config.store_batch_gradients.then_some(last.per_entry),
        });
        outcomes.push(RestartOutcome {
            restart,
            seed,
            best_score: best.score,
            best_step: best.step,
            final_loss: last.loss,
        });
        overall = match overall {
            Some(o) if !o.beaten_by(best.score, best.loss) => Some(o),
            _ => Some(best),
        };
    }

    let best = overall.expect("at least one restart");
    let checkpoint = Checkpoint {
        spec: *spec,
        theta: ParameterSet(best.theta),
        metadata: CheckpointMeta {
            selection_score: Some(best.score),
            selection: config.selection.name().into(),
            step: best.step,
            epoch: best.epoch,
            restart: best.restart,
            loss: Some(best.loss),
            config_fingerprint: config.fingerprint(),
        },
    };
    Ok(TrainRun {
        checkpoint,
        log,
        restarts: outcomes,
    })
}
