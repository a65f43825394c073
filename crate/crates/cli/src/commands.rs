use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use qgnn::ansatz::{AnsatzSpec, Family};
use qgnn::audit::{gate_symmetry_metrics, permutations_for, permuted_accuracy_drop, check_loss_invariance, write_symmetry_csv};
use qgnn::calibration::{corrected_accuracy, fit_shift, raw_accuracy, CalPoint, Readout, ShiftMode};
use qgnn::dataset::{build_dataset, load_manifest, save_manifest, DatasetEntry};
use qgnn::graph::bits_to_string;
use qgnn::objective::{LossConfig, LossKind, PreparedEntry};
use qgnn::observables::{metric_distribution_accuracy, write_metric_rows, DEFAULT_EPS};
use qgnn::pine::{pine_monte_carlo, pine_runs, pine_success_prob, NodeHeuristic, EXACT_PINE_LIMIT};
use qgnn::seed::derive_seed;
use qgnn::training::{cell_metrics, cross_validate, evaluate_dataset, train_with, Checkpoint, Selection, TrainConfig};

use crate::record::{run_id, Outputs};
use crate::{AuditArgs, CalibrateArgs, Cli, Command, EvalArgs, GenDataArgs, HeuristicArg, PineArgs, PlotArgs, TrainArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Eval(a) => eval(a, cli.seed),
        Command::Pine(a) => pine(a, cli.seed),
        Command::Audit(a) => audit(a, cli.seed),
        Command::Calibrate(a) => calibrate(a, cli.seed),
        Command::Plot(a) => plot(a, cli.seed),
    }
}

fn load_data(path: &Path) -> Result<Vec<DatasetEntry>> {
    let m = load_manifest(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if m.entries.is_empty() {
        bail!("dataset {} has no entries", path.display());
    }
    Ok(m.entries)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn fmt_p(p: Option<f64>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

fn gen_data(a: &GenDataArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let mut out = Outputs::new(a.force, Outputs::beside(&a.out));
    let path = out.claim(a.out.clone())?;
    let cells: Vec<_> = a.cells.iter().flat_map(|c| c.0.iter().cloned()).collect();
    let manifest = build_dataset(&cells, seed)?;
    save_manifest(&manifest, &path)?;
    for ((n, p), idx) in manifest.groups() {
        println!("n={n} p={} count={}", p.map_or("all".into(), |p| p.to_string()), idx.len());
    }
    println!("total={}", manifest.entries.len());
    let cells_text: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
    out.finish("gen-data", seed, json!({ "cells": cells_text }))
}

/// Training options as read from a config file; every field optional so a
/// file may set only some of them. The persisted effective config uses the
/// same shape with everything filled in, so it can be fed back as `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub family: Option<Family>,
    pub layers: Option<usize>,
    pub inner_layers: Option<usize>,
    pub include_initial_state: Option<bool>,
    pub loss: Option<LossKind>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub selection: Option<Selection>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub cv_iterations: Option<usize>,
}

const DEFAULT_LAYERS: usize = 5;
const DEFAULT_INNER_LAYERS: usize = 2;
const DEFAULT_CV_ITERATIONS: usize = 1;

/// Flag > config file > built-in default.
pub fn effective_options(a: &TrainArgs, seed: Option<u64>, file: TrainOptions) -> TrainOptions {
    let d = TrainConfig::default();
    let family = a.family.or(file.family).unwrap_or(Family::Rook);
    let folds = a.folds.or(file.folds);
    TrainOptions {
        family: Some(family),
        layers: Some(a.layers.or(file.layers).unwrap_or(DEFAULT_LAYERS)),
        inner_layers: match family {
            Family::Rook => None,
            Family::MilleFeuille => Some(a.inner_layers.or(file.inner_layers).unwrap_or(DEFAULT_INNER_LAYERS)),
        },
        include_initial_state: Some(if a.no_initial_state {
            false
        } else {
            file.include_initial_state.unwrap_or(true)
        }),
        loss: Some(a.loss.or(file.loss).unwrap_or(d.loss.kind)),
        alpha: Some(a.alpha.or(file.alpha).unwrap_or(d.loss.alpha)),
        eps: Some(file.eps.unwrap_or(DEFAULT_EPS)),
        learning_rate: Some(a.lr.or(file.learning_rate).unwrap_or(d.learning_rate)),
        batch_size: Some(a.batch_size.or(file.batch_size).unwrap_or(d.batch_size)),
        max_epochs: Some(a.epochs.or(file.max_epochs).unwrap_or(d.max_epochs)),
        selection: Some(a.selection.or(file.selection).unwrap_or(d.selection)),
        restarts: Some(a.restarts.or(file.restarts).unwrap_or(d.restarts)),
        seed: Some(seed.or(file.seed).unwrap_or(d.seed)),
        folds,
        cv_iterations: folds.map(|_| a.cv_iterations.or(file.cv_iterations).unwrap_or(DEFAULT_CV_ITERATIONS)),
    }
}

fn spec_and_config(o: &TrainOptions) -> (AnsatzSpec, TrainConfig) {
    let layers = o.layers.expect("filled");
    let mut spec = match o.family.expect("filled") {
        Family::Rook => AnsatzSpec::rook(layers),
        Family::MilleFeuille => AnsatzSpec::mille_feuille(layers, o.inner_layers.expect("filled")),
    };
    spec.include_initial_state = o.include_initial_state.expect("filled");
    let config = TrainConfig {
        learning_rate: o.learning_rate.expect("filled"),
        batch_size: o.batch_size.expect("filled"),
        max_epochs: o.max_epochs.expect("filled"),
        seed: o.seed.expect("filled"),
        selection: o.selection.expect("filled"),
        loss: LossConfig {
            kind: o.loss.expect("filled"),
            alpha: o.alpha.expect("filled"),
            eps: o.eps.expect("filled"),
        },
        restarts: o.restarts.expect("filled"),
        store_batch_gradients: false,
    };
    (spec, config)
}

fn train(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let file = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing config {}", p.display()))?,
        None => TrainOptions::default(),
    };
    let opts = effective_options(a, seed, file);
    let (spec, config) = spec_and_config(&opts);
    spec.validate()?;
    config.validate()?;
    println!(
        "effective config: family={} L={} params={} loss={} lr={} batch={} epochs={} selection={} restarts={} seed={}",
        spec.family,
        spec.layers,
        spec.param_count(),
        config.loss.kind.name(),
        config.learning_rate,
        config.batch_size,
        config.max_epochs,
        config.selection.name(),
        config.restarts,
        config.seed
    );

    let mut out = Outputs::new(a.force, a.out.join("run.json"));
    let config_path = out.claim(a.out.join("config.json"))?;
    let cv = opts.folds.map(|f| (f, opts.cv_iterations.expect("filled")));
    let paths = match cv {
        Some(_) => vec![out.claim(a.out.join("cv_cells.csv"))?, out.claim(a.out.join("cv_folds.csv"))?],
        None => vec![
            out.claim(a.out.join("checkpoint.json"))?,
            out.claim(a.out.join("metrics.csv"))?,
            out.claim(a.out.join("restarts.json"))?,
        ],
    };

    let entries = load_data(&a.data)?;
    let opts_json = serde_json::to_value(&opts)?;
    std::fs::write(&config_path, serde_json::to_string_pretty(&opts_json)? + "\n")?;
    let mut record_config = opts_json;
    record_config["data"] = json!(a.data);
    record_config["warm_start"] = json!(a.warm_start);
    record_config["validation"] = json!(a.validation);

    if let Some((folds, iterations)) = cv {
        if a.warm_start.is_some() || a.validation.is_some() {
            bail!("--warm-start and --validation do not apply to cross-validation");
        }
        let report = cross_validate(&config, &spec, &entries, folds, iterations)?;
        let mut w = csv::Writer::from_path(&paths[0])?;
        w.write_record([
            "n", "p", "samples", "accuracy_mean", "accuracy_std", "dist_acc_mean", "dist_acc_std",
            "sureness_mean", "sureness_std", "loss_mean", "loss_std", "random_baseline",
        ])?;
        for c in &report.cells {
            w.write_record([
                c.n.to_string(),
                fmt_p(c.p),
                c.samples.to_string(),
                c.accuracy_mean.to_string(),
                c.accuracy_std.to_string(),
                c.dist_acc_mean.to_string(),
                c.dist_acc_std.to_string(),
                c.sureness_mean.to_string(),
                c.sureness_std.to_string(),
                c.loss_mean.to_string(),
                c.loss_std.to_string(),
                c.random_baseline.to_string(),
            ])?;
            println!(
                "n={} p={} accuracy={:.4}±{:.4} baseline={:.4}",
                c.n,
                c.p.map_or("all".into(), |p| p.to_string()),
                c.accuracy_mean,
                c.accuracy_std,
                c.random_baseline
            );
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(&paths[1])?;
        w.write_record(["iteration", "fold", "test_count", "train_accuracy", "test_accuracy", "test_loss"])?;
        for f in &report.folds {
            w.write_record([
                f.iteration.to_string(),
                f.fold.to_string(),
                f.test.count.to_string(),
                f.train.accuracy.to_string(),
                f.test.accuracy.to_string(),
                f.test.loss.to_string(),
            ])?;
        }
        w.flush()?;
    } else {
        let validation = a.validation.as_deref().map(load_data).transpose()?;
        let init = match &a.warm_start {
            Some(p) => {
                let ck = load_checkpoint(p)?;
                if ck.spec != spec {
                    bail!(qgnn::error::Error::SpecMismatch {
                        expected: spec.describe(),
                        found: ck.spec.describe(),
                    });
                }
                Some(ck.theta)
            }
            None => None,
        };
        let run = train_with(&config, &spec, &entries, validation.as_deref(), init.as_ref())?;
        run.checkpoint.save(&paths[0])?;
        let id = run_id("train", config.seed, &serde_json::to_string(&record_config)?);
        write_metric_rows(&run.log.to_metric_rows(&id), std::fs::File::create(&paths[1])?)?;
        std::fs::write(&paths[2], serde_json::to_string_pretty(&run.restarts)? + "\n")?;
        let m = &run.checkpoint.metadata;
        println!(
            "selected restart={} step={} epoch={} {}={}",
            m.restart,
            m.step,
            m.epoch,
            m.selection,
            fmt_opt(m.selection_score)
        );
    }
    out.finish("train", config.seed, record_config)
}

pub const EVAL_COLUMNS: [&str; 9] = [
    "n",
    "p",
    "count",
    "loss",
    "dist_acc",
    "argmax_acc",
    "sureness",
    "approx_ratio",
    "random_baseline",
];

fn eval(a: &EvalArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let mut out = Outputs::new(a.force, Outputs::beside(&a.out));
    let path = out.claim(a.out.clone())?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let entries = load_data(&a.data)?;
    let loss = LossConfig {
        alpha: a.alpha,
        ..LossConfig::new(a.loss)
    };
    let (per_entry, all) = evaluate_dataset(&ck, loss, &entries)?;
    let task = loss.kind.task();
    let cells = cell_metrics(task, &entries, &per_entry)?;
    let triples: Vec<_> = entries.iter().map(|e| (e.n(), e.omega, e.max_cliques.len())).collect();
    let all_baseline = qgnn::observables::metric_random_baseline(task, &triples);

    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(EVAL_COLUMNS)?;
    let rows = cells
        .iter()
        .map(|c| (c.n.to_string(), fmt_p(c.p), c.metrics, c.random_baseline))
        .chain(std::iter::once(("all".to_string(), String::new(), all, all_baseline)));
    for (n, p, m, baseline) in rows {
        println!(
            "n={n} p={} count={} argmax={:.4} dist={:.4} baseline={:.4}",
            if p.is_empty() { "-" } else { &p },
            m.count,
            m.accuracy,
            m.dist_acc,
            baseline
        );
        w.write_record([
            n,
            p,
            m.count.to_string(),
            m.loss.to_string(),
            m.dist_acc.to_string(),
            m.accuracy.to_string(),
            m.sureness.to_string(),
            fmt_opt(m.approx_ratio),
            baseline.to_string(),
        ])?;
    }
    w.flush()?;
    out.finish(
        "eval",
        seed,
        json!({ "checkpoint": a.checkpoint, "data": a.data, "loss": loss }),
    )
}

fn pine(a: &PineArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let heuristic = match (a.heuristic, &a.checkpoint) {
        (HeuristicArg::Quantum, Some(p)) => NodeHeuristic::QuantumMarginal(Arc::new(load_checkpoint(p)?)),
        (HeuristicArg::Quantum, None) => bail!("the quantum heuristic needs --checkpoint"),
        (HeuristicArg::Uniform, _) => NodeHeuristic::Uniform,
        (HeuristicArg::Degree, _) => NodeHeuristic::Degree,
    };
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let mut out = Outputs::new(a.force, a.out.join("run.json"));
    let runs_path = out.claim(a.out.join("runs.csv"))?;
    let summary_path = out.claim(a.out.join("summary.csv"))?;
    let entries = load_data(&a.data)?;

    let mut runs_w = csv::Writer::from_path(&runs_path)?;
    runs_w.write_record([
        "graph_id", "n", "heuristic", "run", "clique", "clique_size", "omega", "success", "valid", "trace_length",
    ])?;
    let mut sum_w = csv::Writer::from_path(&summary_path)?;
    sum_w.write_record([
        "graph_id", "n", "omega", "heuristic", "runs", "mc_estimate", "mc_std_err", "exact_success", "single_shot",
    ])?;
    let (mut valid, mut total, mut successes) = (0usize, 0usize, 0usize);
    for (id, e) in entries.iter().enumerate() {
        let g = &e.graph;
        let graph_seed = derive_seed(seed, &format!("graph/{id}"));
        let traces = pine_runs(g, &heuristic, a.runs, graph_seed)?;
        for (run, t) in traces.iter().enumerate() {
            let ok = g.is_clique(t.clique);
            valid += ok as usize;
            successes += (t.size() == e.omega) as usize;
            total += 1;
            runs_w.write_record([
                id.to_string(),
                e.n().to_string(),
                heuristic.name().to_string(),
                run.to_string(),
                bits_to_string(t.clique, e.n()),
                t.size().to_string(),
                e.omega.to_string(),
                (t.size() == e.omega).to_string(),
                ok.to_string(),
                t.steps.len().to_string(),
            ])?;
        }
        let mc = pine_monte_carlo(g, &heuristic, a.runs, graph_seed)?;
        let exact = (e.n() <= EXACT_PINE_LIMIT).then(|| pine_success_prob(g, &heuristic)).transpose()?;
        let single_shot = match &heuristic {
            NodeHeuristic::QuantumMarginal(ck) => {
                let probs = PreparedEntry::new(&ck.spec, LossConfig::new(LossKind::Dist), e)?
                    .forward(&ck.theta.0)?
                    .probs;
                Some(metric_distribution_accuracy(&probs, &e.max_cliques))
            }
            _ => None,
        };
        sum_w.write_record([
            id.to_string(),
            e.n().to_string(),
            e.omega.to_string(),
            heuristic.name().to_string(),
            mc.runs.to_string(),
            mc.estimate.to_string(),
            mc.std_err.to_string(),
            fmt_opt(exact),
            fmt_opt(single_shot),
        ])?;
    }
    runs_w.flush()?;
    sum_w.flush()?;
    println!(
        "heuristic={} graphs={} runs={} success_rate={:.4} valid_rate={:.4}",
        heuristic.name(),
        entries.len(),
        total,
        successes as f64 / total as f64,
        valid as f64 / total as f64
    );
    out.finish(
        "pine",
        seed,
        json!({ "heuristic": heuristic.name(), "checkpoint": a.checkpoint, "data": a.data, "runs": a.runs }),
    )
}

#[derive(Serialize)]
struct AuditReport {
    symmetry: qgnn::audit::SymmetryReport,
    max_swap_asymmetry: f64,
    max_commutator_norm: f64,
    permutations_per_entry: usize,
    max_accuracy_drop: Option<f64>,
    mean_accuracy_drop: Option<f64>,
}

fn audit(a: &AuditArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let mut out = Outputs::new(a.force, a.out.join("run.json"));
    let json_path = out.claim(a.out.join("audit.json"))?;
    let csv_path = out.claim(a.out.join("symmetry.csv"))?;
    let drops_path = a.data.as_ref().map(|_| out.claim(a.out.join("drops.csv"))).transpose()?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let loss = LossConfig::new(a.loss);
    let mut symmetry = gate_symmetry_metrics(&ck.spec, &ck.theta)?;
    let mut drops = None;
    if let Some(path) = &a.data {
        let entries = load_data(path)?;
        let mut worst: f64 = 0.0;
        for (i, e) in entries.iter().enumerate() {
            let perms = permutations_for(e.n(), derive_seed(seed, &format!("audit/{i}")));
            worst = worst.max(check_loss_invariance(loss, &ck.spec, e, &ck.theta, &perms)?);
        }
        symmetry.loss_invariance_delta = Some(worst);
        drops = Some(permuted_accuracy_drop(&ck, loss, &entries, a.permutations, seed)?);
    }
    let fold = |f: fn(&qgnn::audit::LayerSymmetry) -> f64| symmetry.layers.iter().map(f).fold(0.0, f64::max);
    let report = AuditReport {
        max_swap_asymmetry: fold(|l| l.swap_asymmetry),
        max_commutator_norm: fold(|l| l.commutator_norm),
        permutations_per_entry: a.permutations,
        max_accuracy_drop: drops.as_ref().map(|d| d.iter().map(|x| x.drop).fold(f64::MIN, f64::max)),
        mean_accuracy_drop: drops
            .as_ref()
            .map(|d| d.iter().map(|x| x.drop).sum::<f64>() / d.len() as f64),
        symmetry,
    };
    write_symmetry_csv(&report.symmetry.layers, std::fs::File::create(&csv_path)?)?;
    if let (Some(path), Some(drops)) = (&drops_path, &drops) {
        let mut w = csv::Writer::from_path(path)?;
        for d in drops {
            w.serialize(d)?;
        }
        w.flush()?;
    }
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "{} swap_asymmetry={:e} commutator={:e} loss_delta={} accuracy_drop={}",
        ck.spec.describe(),
        report.max_swap_asymmetry,
        report.max_commutator_norm,
        fmt_opt(report.symmetry.loss_invariance_delta),
        fmt_opt(report.mean_accuracy_drop)
    );
    out.finish(
        "audit",
        seed,
        json!({ "checkpoint": a.checkpoint, "data": a.data, "loss": loss, "permutations": a.permutations }),
    )
}

fn calibrate(a: &CalibrateArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let readout = match a.loss {
        LossKind::Mountain => Readout::Mountain,
        LossKind::Crater => Readout::Crater,
        other => bail!("calibration needs a mountain or crater readout, not `{}`", other.name()),
    };
    if a.fit_per_size == 0 {
        bail!("--fit-per-size must be at least 1");
    }
    let mut out = Outputs::new(a.force, Outputs::beside(&a.out));
    let path = out.claim(a.out.clone())?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let entries = load_data(&a.data)?;
    let loss = LossConfig::new(a.loss);
    // Fit points: a seeded pseudo-random pick of `fit_per_size` entries per size.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| (entries[i].n(), derive_seed(seed, &format!("calibrate/{i}"))));
    let mut fit = Vec::new();
    let mut held = Vec::new();
    let mut taken = std::collections::HashMap::<usize, usize>::new();
    for &i in &order {
        let e = &entries[i];
        let expectation = PreparedEntry::new(&ck.spec, loss, e)?.forward(&ck.theta.0)?.expectation;
        let point = CalPoint {
            n: e.n(),
            e: expectation,
            omega: e.omega,
        };
        let k = taken.entry(e.n()).or_default();
        if *k < a.fit_per_size {
            *k += 1;
            fit.push(point);
        } else {
            held.push(point);
        }
    }
    let model = fit_shift(&fit, a.mode, readout)?;
    model.save(&path)?;
    let scored = if held.is_empty() { &fit } else { &held };
    let sizes: Vec<usize> = scored.iter().map(|p| p.n).collect();
    model.check_covers(&sizes)?;
    println!(
        "mode={} fit_points={} scored={} raw_accuracy={:.4} corrected_accuracy={:.4}",
        mode_name(a.mode),
        fit.len(),
        scored.len(),
        raw_accuracy(readout, scored)?,
        corrected_accuracy(&model, scored)?
    );
    out.finish(
        "calibrate",
        seed,
        json!({ "checkpoint": a.checkpoint, "data": a.data, "readout": readout, "mode": a.mode, "fit_per_size": a.fit_per_size }),
    )
}

fn mode_name(m: ShiftMode) -> &'static str {
    match m {
        ShiftMode::PerSize => "per_size",
        ShiftMode::LinearInN => "linear_in_n",
        ShiftMode::PerParity => "per_parity",
    }
}

fn plot(a: &PlotArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let mut out = Outputs::new(a.force, Outputs::beside(&a.out));
    let path = out.claim(a.out.clone())?;
    let svg = crate::plot::render(a.kind, &a.input)?;
    std::fs::write(&path, svg)?;
    let inputs: Vec<&PathBuf> = a.input.iter().collect();
    out.finish("plot", seed, json!({ "kind": format!("{:?}", a.kind), "inputs": inputs }))
}
