use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_dataset, train, Checkpoint, DatasetMetrics, TrainConfig};
use crate::ansatz::AnsatzSpec;
use crate::dataset::{group_indices, DatasetEntry};
use crate::error::{Error, Result};
use crate::objective::EntryMetrics;
use crate::observables::metric_random_baseline;
use crate::seed::derive_seed;

/// Fold index per entry for one iteration: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
pub fn fold_assignment(len: usize, folds: usize, seed: u64, iteration: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("folds/{iteration}"))));
    let mut fold = vec![0; len];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub iteration: usize,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub train: DatasetMetrics,
    pub test: DatasetMetrics,
    pub test_per_entry: Vec<EntryMetrics>,
    pub checkpoint: Checkpoint,
}

/// Test metrics of one `(n, p)` cell across all folds and iterations. Each
/// fold contributes one sample (its mean over the cell's test entries);
/// spreads are population standard deviations over those samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub p: Option<f64>,
    pub samples: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub dist_acc_mean: f64,
    pub dist_acc_std: f64,
    pub sureness_mean: f64,
    pub sureness_std: f64,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub random_baseline: f64,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub cells: Vec<CellSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
    (mean, var.sqrt())
}

pub fn cross_validate(
    config: &TrainConfig,
    spec: &AnsatzSpec,
    entries: &[DatasetEntry],
    folds: usize,
    iterations: usize,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if iterations == 0 {
        return Err(Error::Config("need at least one iteration".into()));
    }
    if entries.len() < folds {
        return Err(Error::TooSmall {
            need: folds,
            got: entries.len(),
        });
    }
    let mut results = Vec::with_capacity(folds * iterations);
    for iteration in 0..iterations {
        let assignment = fold_assignment(entries.len(), folds, config.seed, iteration);
        for fold in 0..folds {
            let (test_indices, train_indices): (Vec<usize>, Vec<usize>) =
                (0..entries.len()).partition(|&i| assignment[i] == fold);
            let pick = |idx: &[usize]| idx.iter().map(|&i| entries[i].clone()).collect::<Vec<_>>();
            let (train_set, test_set) = (pick(&train_indices), pick(&test_indices));
            let fold_config = TrainConfig {
                seed: derive_seed(config.seed, &format!("cv/{iteration}/{fold}")),
                ..config.clone()
            };
            let run = train(&fold_config, spec, &train_set)?;
            let (_, train_metrics) = evaluate_dataset(&run.checkpoint, config.loss, &train_set)?;
            let (test_per_entry, test_metrics) = evaluate_dataset(&run.checkpoint, config.loss, &test_set)?;
            results.push(FoldResult {
                iteration,
                fold,
                test_indices,
                train: train_metrics,
                test: test_metrics,
                test_per_entry,
                checkpoint: run.checkpoint,
            });
        }
    }
    let cells = summarise(config, entries, &results)?;
    Ok(CvReport {
        folds: results,
        cells,
    })
}

fn summarise(config: &TrainConfig, entries: &[DatasetEntry], results: &[FoldResult]) -> Result<Vec<CellSummary>> {
    let task = config.loss.kind.task();
    group_indices(entries)
        .into_iter()
        .map(|((n, p), members)| {
            let mut samples = Vec::new();
            for r in results {
                let picked: Vec<EntryMetrics> = r
                    .test_indices
                    .iter()
                    .zip(&r.test_per_entry)
                    .filter(|(i, _)| members.contains(i))
                    .map(|(_, m)| *m)
                    .collect();
                if !picked.is_empty() {
                    samples.push(DatasetMetrics::mean(&picked)?);
                }
            }
            let col = |f: fn(&DatasetMetrics) -> f64| mean_std(&samples.iter().map(f).collect::<Vec<_>>());
            let (accuracy_mean, accuracy_std) = col(|m| m.accuracy);
            let (dist_acc_mean, dist_acc_std) = col(|m| m.dist_acc);
            let (sureness_mean, sureness_std) = col(|m| m.sureness);
            let (loss_mean, loss_std) = col(|m| m.loss);
            let triples: Vec<_> = members
                .iter()
                .map(|&i| (n, entries[i].omega, entries[i].max_cliques.len()))
                .collect();
            Ok(CellSummary {
                n,
                p,
                samples: samples.len(),
                accuracy_mean,
                accuracy_std,
                dist_acc_mean,
                dist_acc_std,
                sureness_mean,
                sureness_std,
                loss_mean,
                loss_std,
                random_baseline: metric_random_baseline(task, &triples),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, Cell};
    use crate::objective::{LossConfig, LossKind};

    #[test]
    fn folds_partition_and_balance() {
        for (len, folds) in [(10, 5), (11, 5), (207, 5), (3, 3)] {
            let a = fold_assignment(len, folds, 7, 0);
            let mut sizes = vec![0; folds];
            a.iter().for_each(|&f| sizes[f] += 1);
            assert_eq!(sizes.iter().sum::<usize>(), len);
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            if len == 10 {
                assert!(sizes.iter().all(|&s| s == 2));
            }
        }
        assert_eq!(fold_assignment(20, 5, 1, 0), fold_assignment(20, 5, 1, 0));
        assert_ne!(fold_assignment(20, 5, 1, 0), fold_assignment(20, 5, 1, 1));
    }

    #[test]
    fn too_small_dataset_is_rejected() {
        let data = build_dataset(&[Cell::All { n: 3 }], 0).unwrap().entries;
        let err = cross_validate(&TrainConfig::default(), &AnsatzSpec::rook(1), &data, 5, 2).unwrap_err();
        assert!(matches!(err, Error::TooSmall { need: 5, got: 4 }));
    }

    #[test]
    fn aggregates_match_manual_recomputation() {
        let data = build_dataset(&[Cell::All { n: 3 }, Cell::All { n: 4 }, Cell::All { n: 2 }], 0)
            .unwrap()
            .entries;
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 4,
            loss: LossConfig::new(LossKind::Dist),
            ..TrainConfig::default()
        };
        let report = cross_validate(&cfg, &AnsatzSpec::rook(1), &data, 5, 2).unwrap();
        assert_eq!(report.folds.len(), 10);

        for it in 0..2 {
            let mut seen: Vec<usize> = report
                .folds
                .iter()
                .filter(|r| r.iteration == it)
                .flat_map(|r| r.test_indices.clone())
                .collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..data.len()).collect::<Vec<_>>());
        }

        let cell = report.cells.iter().find(|c| c.n == 4).unwrap();
        let mut samples = Vec::new();
        for r in &report.folds {
            let accs: Vec<f64> = r
                .test_indices
                .iter()
                .zip(&r.test_per_entry)
                .filter(|(&i, _)| data[i].n() == 4)
                .map(|(_, m)| m.accuracy)
                .collect();
            if !accs.is_empty() {
                samples.push(accs.iter().sum::<f64>() / accs.len() as f64);
            }
        }
        assert_eq!(cell.samples, samples.len());
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((cell.accuracy_mean - mean).abs() < 1e-12);
    }
}
