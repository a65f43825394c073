//! Acceptance criteria, one test per criterion. Each test writes a single
//! `[PASS]`/`[FAIL]` line straight to stderr (bypassing libtest capture) so
//! the verdicts show up in a plain `cargo test` log, then asserts.
//!
//! Run with `cargo test -p qgnn --test acceptance`.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgnn::ansatz::{AnsatzSpec, ParameterSet};
use qgnn::audit::{check_equivariance, check_loss_invariance, search_witness};
use qgnn::calibration::{corrected_accuracy, fit_shift, raw_accuracy, CalPoint, Readout, ShiftMode};
use qgnn::dataset::{all_classes, build_dataset, sample_er, write_manifest, Cell, DatasetEntry};
use qgnn::gradients::adjoint_gradient;
use qgnn::graph::{Graph, Permutation};
use qgnn::objective::{LossConfig, LossKind, PreparedEntry};
use qgnn::observables::{metric_distribution_accuracy, write_metric_rows};
use qgnn::pine::{pine_monte_carlo, pine_run, pine_runs, pine_success_prob, NodeHeuristic};
use qgnn::training::{cross_validate, train, Checkpoint, TrainConfig};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{verdict}] criterion {id:>2} {name}: {detail}");
}

fn random_theta(spec: &AnsatzSpec, rng: &mut ChaCha8Rng) -> ParameterSet {
    ParameterSet((0..spec.param_count()).map(|_| rng.random_range(0.0..TAU)).collect())
}

fn classes_up_to(n_max: usize) -> Vec<Graph> {
    (1..=n_max).flat_map(|n| all_classes(n).unwrap()).collect()
}

fn label(g: Graph) -> DatasetEntry {
    DatasetEntry::label(g, None, None).unwrap()
}

const ALL_LOSSES: [LossKind; 6] = [
    LossKind::Dist,
    LossKind::LogWrong,
    LossKind::Argmax,
    LossKind::Mse,
    LossKind::Mountain,
    LossKind::Crater,
];

#[test]
fn c01_parameter_counts() {
    let cases = [
        (AnsatzSpec::rook(5), 38),
        (AnsatzSpec::rook(20), 143),
        (AnsatzSpec::mille_feuille(5, 2), 118),
        (AnsatzSpec::mille_feuille(20, 5), 1063),
    ];
    let got: Vec<usize> = cases.iter().map(|(s, _)| s.param_count()).collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| g == want);
    report(1, "parameter counts", pass, &format!("got {got:?}, want [38, 143, 118, 1063]"));
    assert!(pass);
}

#[test]
fn c02_dataset_classes() {
    let cells: Vec<Cell> = (2..=6).map(|n| Cell::All { n }).collect();
    let all = build_dataset(&cells, 0).unwrap();
    let n4 = all.entries.iter().filter(|e| e.n() == 4).count();
    let valid = all.entries.iter().all(|e| e.validate().is_ok());
    let pass = all.entries.len() == 207 && n4 == 11 && valid;
    report(
        2,
        "dataset classes",
        pass,
        &format!("n=2..6 gives {} entries (want 207), n=4 gives {n4} (want 11), labels valid: {valid}", all.entries.len()),
    );
    assert!(pass);
}

#[test]
fn c03_equivariance() {
    let spec = AnsatzSpec::rook(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let graphs = classes_up_to(5);
    let mut worst: f64 = 0.0;
    let mut checks = 0usize;
    for _ in 0..10 {
        let theta = random_theta(&spec, &mut rng);
        for g in &graphs {
            for sigma in Permutation::all(g.n()) {
                worst = worst.max(check_equivariance(&spec, g, &theta, &sigma).unwrap());
                checks += 1;
            }
        }
    }
    let pass = worst < 1e-10;
    report(
        3,
        "Rook equivariance",
        pass,
        &format!("{} classes n<=5 x 10 theta x all sigma = {checks} checks, max deviation {worst:.2e} (< 1e-10)", graphs.len()),
    );
    assert!(pass);
}

#[test]
fn c04_loss_invariance() {
    let spec = AnsatzSpec::rook(3);
    let entries: Vec<DatasetEntry> = classes_up_to(5).into_iter().map(label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let thetas: Vec<ParameterSet> = (0..10).map(|_| random_theta(&spec, &mut rng)).collect();
    let mut per_loss = Vec::new();
    for kind in ALL_LOSSES {
        let mut worst: f64 = 0.0;
        for theta in &thetas {
            for e in &entries {
                let perms = Permutation::all(e.n());
                worst = worst.max(check_loss_invariance(LossConfig::new(kind), &spec, e, theta, &perms).unwrap());
            }
        }
        per_loss.push((kind.name(), worst));
    }
    let witness = search_witness(&AnsatzSpec::mille_feuille(2, 1), LossConfig::new(LossKind::Dist), 3, 0, 20).unwrap();
    let rook_ok = per_loss.iter().all(|&(_, d)| d < 1e-10);
    let pass = rook_ok && witness.loss_delta > 1e-3;
    let deltas: Vec<String> = per_loss.iter().map(|(k, d)| format!("{k}={d:.1e}")).collect();
    report(
        4,
        "loss invariance",
        pass,
        &format!(
            "Rook max deltas [{}] (< 1e-10); MilleFeuille witness loss delta {:.3e} (> 1e-3, seed 0)",
            deltas.join(", "),
            witness.loss_delta
        ),
    );
    assert!(pass);
}

#[test]
fn c05_gradient_oracle() {
    const CASES: usize = 100;
    const H: f64 = 1e-5;
    let differentiable = [LossKind::Dist, LossKind::LogWrong, LossKind::Mse, LossKind::Mountain, LossKind::Crater];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut summary = Vec::new();
    let mut pass = true;
    for kind in differentiable {
        let (mut max_rel, mut max_abs): (f64, f64) = (0.0, 0.0);
        let mut failures = 0usize;
        for case in 0..CASES {
            let n = rng.random_range(2..=5);
            let g = sample_er(n, rng.random_range(0.2..0.9), rng.random()).unwrap();
            let spec = if case % 2 == 0 {
                AnsatzSpec::rook(rng.random_range(1..=3))
            } else {
                AnsatzSpec::mille_feuille(rng.random_range(1..=2), rng.random_range(1..=2))
            };
            let prep = PreparedEntry::new(&spec, LossConfig::new(kind), &label(g)).unwrap();
            let theta = random_theta(&spec, &mut rng).0;
            let (_, grad) = adjoint_gradient(&prep, &theta).unwrap();
            for (i, &a) in grad.0.iter().enumerate() {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[i] += H;
                down[i] -= H;
                let fd = (prep.forward(&up).unwrap().loss.scalar - prep.forward(&down).unwrap().loss.scalar) / (2.0 * H);
                let abs = (a - fd).abs();
                let rel = abs / fd.abs().max(f64::MIN_POSITIVE);
                max_abs = max_abs.max(abs);
                if fd.abs() >= 1e-4 {
                    max_rel = max_rel.max(rel);
                }
                // Relative error is meaningless once the gradient sits at the
                // difference quotient's own noise floor.
                if abs > 1e-7 && rel >= 1e-4 {
                    failures += 1;
                }
            }
        }
        pass &= failures == 0;
        summary.push(format!(
            "{}: max rel {max_rel:.1e} (|g| >= 1e-4), max abs {max_abs:.1e}, {failures} bad",
            kind.name()
        ));
    }
    report(
        5,
        "adjoint vs finite differences",
        pass,
        &format!("{CASES} cases per loss, rel < 1e-4 where |err| > 1e-7; {}", summary.join("; ")),
    );
    assert!(pass);
}

fn n5_dataset() -> Vec<DatasetEntry> {
    build_dataset(&[Cell::All { n: 5 }], 0).unwrap().entries
}

#[test]
fn c06_trainability() {
    let data = n5_dataset();
    let config = TrainConfig::default();
    let run = train(&config, &AnsatzSpec::rook(5), &data).unwrap();
    let acc = run.checkpoint.metadata.selection_score.unwrap();
    let pass = acc >= 0.9;
    report(
        6,
        "trainability",
        pass,
        &format!(
            "Rook L=5 on {} n=5 classes, lr={} batch={} epochs={} seed={}: argmax accuracy {acc:.3} at step {} (>= 0.9)",
            data.len(),
            config.learning_rate,
            config.batch_size,
            config.max_epochs,
            config.seed,
            run.checkpoint.metadata.step
        ),
    );
    assert!(pass);
}

/// Expected to fail: see the analysis in the project notes. Kept at the
/// stated protocol rather than tuned until it passes.
#[test]
fn c07_gradient_magnitude_ordering() {
    const STEPS: usize = 50;
    let seeds: Vec<u64> = (0..10).collect();
    let data = n5_dataset();
    let mean_grad = |spec: AnsatzSpec, seed: u64| {
        let config = TrainConfig {
            seed,
            max_epochs: STEPS,
            ..TrainConfig::default()
        };
        let run = train(&config, &spec, &data).unwrap();
        run.log.mean_grad_aggregate(0, STEPS).unwrap()
    };
    let mut rook_wins = 0;
    let (mut rook_sum, mut mf_sum) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for &seed in &seeds {
        let r = mean_grad(AnsatzSpec::rook(5), seed);
        let m = mean_grad(AnsatzSpec::mille_feuille(5, 2), seed);
        rook_wins += (r > m) as usize;
        rook_sum += r;
        mf_sum += m;
        per_seed.push(format!("{seed}:{r:.3}/{m:.3}"));
    }
    let k = seeds.len() as f64;
    let pass = rook_wins >= 8 && rook_sum / k > mf_sum / k;
    report(
        7,
        "gradient ordering Rook > MilleFeuille",
        pass,
        &format!(
            "L=5 (MF M=2), n=5, first {STEPS} steps, seeds {seeds:?}; Rook larger on {rook_wins}/10 (need >= 8); mean Rook {:.3} vs MF {:.3}; per seed rook/mf [{}]",
            rook_sum / k,
            mf_sum / k,
            per_seed.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn c08_pine_safety_and_lift() {
    // trained Rook on every class with n <= 6, evaluated on held-out n = 7 samples
    let train_cells: Vec<Cell> = (2..=6).map(|n| Cell::All { n }).collect();
    let train_set = build_dataset(&train_cells, 0).unwrap().entries;
    let run = train(&TrainConfig::default(), &AnsatzSpec::rook(5), &train_set).unwrap();
    let ck = std::sync::Arc::new(run.checkpoint);
    let quantum = NodeHeuristic::QuantumMarginal(ck.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let heuristics = [NodeHeuristic::Uniform, NodeHeuristic::Degree, quantum.clone()];
    let mut invalid = 0usize;
    for i in 0..1000 {
        let n = rng.random_range(1..=10);
        let g = sample_er(n, rng.random_range(0.0..1.0), rng.random()).unwrap();
        let trace = pine_run(&g, &heuristics[i % 3], rng.random()).unwrap();
        if !g.is_clique(trace.clique) {
            invalid += 1;
        }
    }

    let held_out = build_dataset(
        &[Cell::Sampled {
            n: 7,
            p: 0.5,
            count: 60,
        }],
        8,
    )
    .unwrap()
    .entries;
    let mut lifted = 0usize;
    for e in &held_out {
        let probs = PreparedEntry::new(&ck.spec, LossConfig::new(LossKind::Dist), e)
            .unwrap()
            .forward(&ck.theta.0)
            .unwrap()
            .probs;
        let single_shot = metric_distribution_accuracy(&probs, &e.max_cliques);
        let recursive = pine_success_prob(&e.graph, &quantum).unwrap();
        lifted += (recursive >= single_shot) as usize;
    }
    let share = lifted as f64 / held_out.len() as f64;
    let pass = invalid == 0 && share >= 0.7;
    report(
        8,
        "Pine safety and lift",
        pass,
        &format!(
            "{invalid}/1000 non-clique outputs (want 0); exact Pine >= single-shot on {lifted}/{} held-out n=7 graphs = {:.1}% (>= 70%)",
            held_out.len(),
            100.0 * share
        ),
    );
    assert!(pass);
}

#[test]
fn c09_pine_exact_vs_monte_carlo() {
    const RUNS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_z: f64 = 0.0;
    let mut pass = true;
    for i in 0..20 {
        let n = rng.random_range(4..=10);
        let g = sample_er(n, rng.random_range(0.3..0.8), rng.random()).unwrap();
        let h = if i % 2 == 0 { NodeHeuristic::Uniform } else { NodeHeuristic::Degree };
        let exact = pine_success_prob(&g, &h).unwrap();
        let mc = pine_monte_carlo(&g, &h, RUNS, i).unwrap();
        let sigma = (exact * (1.0 - exact) / RUNS as f64).sqrt();
        let diff = (mc.estimate - exact).abs();
        if sigma == 0.0 {
            pass &= diff == 0.0;
        } else {
            worst_z = worst_z.max(diff / sigma);
            pass &= diff <= 3.0 * sigma;
        }
    }
    report(
        9,
        "exact Pine vs Monte Carlo",
        pass,
        &format!("20 graphs n=4..10, {RUNS} runs each; worst deviation {worst_z:.2} sigma (<= 3)"),
    );
    assert!(pass);
}

#[test]
fn c10_calibration_recovery() {
    const DRIFT: f64 = 0.3;
    const NOISE: f64 = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut point = |n: usize| {
        let omega = rng.random_range(1..=n);
        let e = omega as f64 + DRIFT * (n as f64 - 8.0) + rng.random_range(-NOISE..NOISE);
        CalPoint { n, e, omega }
    };
    let sizes: Vec<usize> = (2..=16).collect();
    let fit: Vec<CalPoint> = sizes.iter().map(|&n| point(n)).collect();
    let test: Vec<CalPoint> = sizes.iter().flat_map(|&n| (0..200).map(move |_| n)).map(&mut point).collect();
    let model = fit_shift(&fit, ShiftMode::LinearInN, Readout::Mountain).unwrap();
    let raw = raw_accuracy(Readout::Mountain, &test).unwrap();
    let corrected = corrected_accuracy(&model, &test).unwrap();
    let pass = corrected >= 0.99;
    report(
        10,
        "calibration recovery",
        pass,
        &format!(
            "drift {DRIFT}(n-8) + U(+-{NOISE}), one fit point per n=2..16, {} test points: raw {:.3}, corrected {corrected:.4} (>= 0.99)",
            test.len(),
            raw
        ),
    );
    assert!(pass);
}

#[test]
fn c11_determinism() {
    let render = |seed: u64| {
        let manifest = build_dataset(
            &[
                Cell::All { n: 4 },
                Cell::Sampled {
                    n: 6,
                    p: 0.5,
                    count: 6,
                },
            ],
            seed,
        )
        .unwrap();
        let mut data = Vec::new();
        write_manifest(&manifest, &mut data).unwrap();
        let config = TrainConfig {
            seed,
            max_epochs: 4,
            batch_size: 5,
            restarts: 2,
            ..TrainConfig::default()
        };
        let run = train(&config, &AnsatzSpec::mille_feuille(2, 1), &manifest.entries).unwrap();
        let mut metrics = Vec::new();
        write_metric_rows(&run.log.to_metric_rows("replay"), &mut metrics).unwrap();
        let checkpoint = run.checkpoint.to_json().unwrap();
        let ck = std::sync::Arc::new(Checkpoint::from_json(&checkpoint).unwrap());
        let traces = pine_runs(&manifest.entries[14].graph, &NodeHeuristic::QuantumMarginal(ck), 50, seed).unwrap();
        let cv = cross_validate(&config, &AnsatzSpec::rook(1), &manifest.entries, 3, 1).unwrap();
        let cv_text = format!("{:?}", cv.cells);
        (data, metrics, checkpoint, format!("{traces:?}"), cv_text)
    };
    let a = render(11);
    let b = render(11);
    let c = render(12);
    let pass = a == b && a.1 != c.1;
    report(
        11,
        "determinism",
        pass,
        &format!(
            "dataset, metric CSV ({} bytes), checkpoint JSON, Pine traces and CV table identical on replay: {}; other seed differs: {}",
            a.1.len(),
            a == b,
            a.1 != c.1
        ),
    );
    assert!(pass);
}
