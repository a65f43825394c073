//! Exact loss gradients with respect to the tied parameter vector.
//!
//! Every loss here is a function of the output probabilities, so its gradient
//! is `sum_b (dL/dp_b) dp_b/dtheta`. The production path is a reverse-mode
//! adjoint sweep: one forward pass, then one backward pass that un-applies
//! each gate from both the state and the adjoint vector `diag(dL/dp) |psi>`.
//! A gate `exp(-i t/2 G)` reading slot `s` contributes `Im <lambda| G |phi>`
//! to `grad[s]`; tied slots accumulate over every gate that reads them.

use crate::ansatz::{AnsatzSpec, CircuitPlan, ParameterSet};
use crate::dataset::DatasetEntry;
use crate::error::{Error, Result};
use crate::exec;
use crate::objective::{LossConfig, LossKind, PreparedEntry};
use crate::observables::LossValue;
use crate::statevector::{GateKind, StateVector};

/// Gradient in canonical slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mean of absolute coordinates.
    pub fn mean_abs(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|g| g.abs()).sum::<f64>() / self.0.len() as f64
    }
}

/// `dL/dp_b` for every basis state.
pub fn loss_weights(prep: &PreparedEntry, probs: &[f64], expectation: f64) -> Result<Vec<f64>> {
    let cfg = prep.loss;
    let wrong: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(b, _)| !prep.is_target(b))
        .map(|(_, p)| p)
        .sum();
    let mse_slope = 2.0 * (expectation - prep.y);
    let weights = probs
        .iter()
        .enumerate()
        .map(|(b, &p)| {
            let outside = !prep.is_target(b);
            let eig = prep.eigenvalues[b];
            match cfg.kind {
                LossKind::Dist => {
                    if outside {
                        2.0 * p
                    } else {
                        0.0
                    }
                }
                LossKind::LogWrong => {
                    if outside {
                        1.0 / (cfg.eps + wrong)
                    } else {
                        0.0
                    }
                }
                LossKind::Mse => mse_slope * eig,
                LossKind::Mountain => {
                    let log_term = if outside { 1.0 / (cfg.eps + wrong) } else { 0.0 };
                    (1.0 - cfg.alpha) * mse_slope * eig + cfg.alpha * log_term
                }
                // the band penalty is piecewise constant
                LossKind::Crater => mse_slope * eig,
                LossKind::Argmax => unreachable!("rejected below"),
            }
        })
        .collect();
    Ok(weights)
}

fn ensure_differentiable(kind: LossKind) -> Result<()> {
    if kind.is_differentiable() {
        Ok(())
    } else {
        Err(Error::NotDifferentiable(kind.name()))
    }
}

/// Loss and adjoint gradient for one prepared entry.
pub fn adjoint_gradient(prep: &PreparedEntry, theta: &[f64]) -> Result<(LossValue, GradientVector)> {
    ensure_differentiable(prep.loss.kind)?;
    let fwd = prep.forward(theta)?;
    let weights = loss_weights(prep, &fwd.probs, fwd.expectation)?;
    let mut lambda = fwd.state.scaled(&weights);
    let mut phi = fwd.state;
    let mut scratch = phi.clone();
    let mut grad = vec![0.0; prep.plan.n_slots];
    for g in prep.plan.gates.iter().rev() {
        let angle = theta[g.slot];
        scratch.copy_from(&phi);
        scratch.apply_generator(g.gate);
        grad[g.slot] += lambda.inner(&scratch).im;
        phi.apply_unchecked(g.gate, -angle);
        lambda.apply_unchecked(g.gate, -angle);
    }
    Ok((fwd.loss, GradientVector(grad)))
}

/// Gradient of one entry's loss under `spec` at `theta`.
pub fn gradient(
    loss: LossConfig,
    spec: &AnsatzSpec,
    entry: &DatasetEntry,
    theta: &ParameterSet,
) -> Result<GradientVector> {
    ensure_differentiable(loss.kind)?;
    theta.check(spec)?;
    let prep = PreparedEntry::new(spec, loss, entry)?;
    Ok(adjoint_gradient(&prep, &theta.0)?.1)
}

fn apply_with_shift(plan: &CircuitPlan, theta: &[f64], shifted: usize, delta: f64) -> StateVector {
    let mut state = StateVector::zero(plan.n_qubits).expect("plan width validated");
    for (k, g) in plan.gates.iter().enumerate() {
        let angle = theta[g.slot] + if k == shifted { delta } else { 0.0 };
        state.apply_unchecked(g.gate, angle);
    }
    state
}

/// Parameter-shift gradient, one pair of shifted circuits per gate. Only for
/// plans made of Pauli rotations (no controlled rotations). Slow; kept to
/// cross-check the adjoint path.
pub fn parameter_shift_gradient(prep: &PreparedEntry, theta: &[f64]) -> Result<GradientVector> {
    ensure_differentiable(prep.loss.kind)?;
    if prep.plan.gates.iter().any(|g| g.gate.kind() == GateKind::Crx) {
        return Err(Error::Config(
            "parameter shift supports Pauli rotations only".into(),
        ));
    }
    let fwd = prep.forward(theta)?;
    let weights = loss_weights(prep, &fwd.probs, fwd.expectation)?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut grad = vec![0.0; prep.plan.n_slots];
    for (k, g) in prep.plan.gates.iter().enumerate() {
        let plus = apply_with_shift(&prep.plan, theta, k, half_pi).probabilities();
        let minus = apply_with_shift(&prep.plan, theta, k, -half_pi).probabilities();
        grad[g.slot] += weights
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(w, (p, m))| w * (p - m) / 2.0)
            .sum::<f64>();
    }
    Ok(GradientVector(grad))
}

/// Mean loss and mean gradient over a batch, plus per-entry gradients.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    pub components: Vec<(&'static str, f64)>,
    pub mean: GradientVector,
    pub per_entry: Vec<GradientVector>,
}

/// Evaluates entries in parallel and reduces in input order, so the result is
/// bitwise independent of scheduling.
pub fn batch_gradient(batch: &[&PreparedEntry], theta: &[f64]) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let results = exec::try_map(batch, |prep| adjoint_gradient(prep, theta))?;
    let count = results.len() as f64;
    let mut mean = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut components: Vec<(&'static str, f64)> = results[0]
        .0
        .components
        .iter()
        .map(|&(k, _)| (k, 0.0))
        .collect();
    for (value, grad) in &results {
        loss += value.scalar;
        for (acc, (_, v)) in components.iter_mut().zip(&value.components) {
            acc.1 += v;
        }
        for (m, g) in mean.iter_mut().zip(&grad.0) {
            *m += g;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    components.iter_mut().for_each(|c| c.1 /= count);
    Ok(BatchGradient {
        loss: loss / count,
        components,
        mean: GradientVector(mean),
        per_entry: results.into_iter().map(|(_, g)| g).collect(),
    })
}

/// Elementwise statistics over a batch of gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStats {
    /// Per coordinate mean of `|g|`.
    pub mean_abs: Vec<f64>,
    /// Per coordinate population variance of `g`.
    pub variance: Vec<f64>,
    /// Mean over coordinates of `mean_abs`.
    pub aggregate: f64,
}

pub fn grad_stats(batch: &[GradientVector]) -> Result<GradStats> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let dim = first.0.len();
    if let Some(bad) = batch.iter().find(|g| g.0.len() != dim) {
        return Err(Error::Length {
            expected: dim,
            got: bad.0.len(),
        });
    }
    let count = batch.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut mean_abs = vec![0.0; dim];
    for g in batch {
        for (i, &x) in g.0.iter().enumerate() {
            mean[i] += x / count;
            mean_abs[i] += x.abs() / count;
        }
    }
    let mut variance = vec![0.0; dim];
    for g in batch {
        for (i, &x) in g.0.iter().enumerate() {
            variance[i] += (x - mean[i]).powi(2) / count;
        }
    }
    let aggregate = if dim == 0 {
        0.0
    } else {
        mean_abs.iter().sum::<f64>() / dim as f64
    };
    Ok(GradStats {
        mean_abs,
        variance,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Permutation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(g: Graph) -> DatasetEntry {
        DatasetEntry::label(g, None, None).unwrap()
    }

    fn central_difference(prep: &PreparedEntry, theta: &[f64], h: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|i| {
                let mut up = theta.to_vec();
                let mut down = theta.to_vec();
                up[i] += h;
                down[i] -= h;
                let lu = prep.forward(&up).unwrap().loss.scalar;
                let ld = prep.forward(&down).unwrap().loss.scalar;
                (lu - ld) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn dist_gradient_matches_differences_at_small_angles() {
        let spec = AnsatzSpec::rook(2);
        let e = entry(Graph::complete(3).unwrap());
        let prep = PreparedEntry::new(&spec, LossConfig::new(LossKind::Dist), &e).unwrap();
        let mut theta = vec![0.0; spec.param_count()];
        theta[..3].copy_from_slice(&[0.4, 0.2, 0.9]);
        let (_, g) = adjoint_gradient(&prep, &theta).unwrap();
        let fd = central_difference(&prep, &theta, 1e-5);
        for (a, b) in g.0.iter().zip(&fd) {
            assert!(a.is_finite());
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-2), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_vanishes_on_target_plateau() {
        // RX(pi) on the single vertex of K1 puts all mass on the unique max clique
        let spec = AnsatzSpec::rook(1);
        let e = entry(Graph::complete(1).unwrap());
        let prep = PreparedEntry::new(&spec, LossConfig::new(LossKind::Dist), &e).unwrap();
        let mut theta = vec![0.0; spec.param_count()];
        theta[0] = std::f64::consts::PI;
        let (loss, g) = adjoint_gradient(&prep, &theta).unwrap();
        assert!(loss.scalar < 1e-30);
        assert!(g.0.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn single_rotation_matches_closed_form() {
        // one RX(t) on |0>: <Z>-like weight readout gives E = sin^2(t/2), so
        // mse against y has derivative 2 (E - y) sin(t) / 2
        let spec = AnsatzSpec::rook(1);
        let e = entry(Graph::complete(1).unwrap());
        let prep = PreparedEntry::new(&spec, LossConfig::new(LossKind::Mse), &e).unwrap();
        for t in [0.3, 1.0, 2.2, -0.7] {
            let mut theta = vec![0.0; spec.param_count()];
            theta[0] = t;
            let (_, g) = adjoint_gradient(&prep, &theta).unwrap();
            let expectation = (t / 2.0).sin().powi(2);
            let closed = 2.0 * (expectation - 1.0) * t.sin() / 2.0;
            assert!((g.0[0] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_has_no_gradient() {
        let spec = AnsatzSpec::rook(1);
        let e = entry(Graph::complete(2).unwrap());
        let err = gradient(
            LossConfig::new(LossKind::Argmax),
            &spec,
            &e,
            &ParameterSet::zeros(&spec),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotDifferentiable("argmax")));
    }

    #[test]
    fn parameter_shift_agrees_with_adjoint_on_rook() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = AnsatzSpec::rook(2);
        let e = entry(Graph::path(4).unwrap());
        for kind in [LossKind::Dist, LossKind::LogWrong, LossKind::Mountain] {
            let prep = PreparedEntry::new(&spec, LossConfig::new(kind), &e).unwrap();
            let theta: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, adj) = adjoint_gradient(&prep, &theta).unwrap();
            let shift = parameter_shift_gradient(&prep, &theta).unwrap();
            for (a, b) in adj.0.iter().zip(&shift.0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let mf = AnsatzSpec::mille_feuille(1, 1);
        let prep = PreparedEntry::new(&mf, LossConfig::new(LossKind::Dist), &e).unwrap();
        assert!(parameter_shift_gradient(&prep, &vec![0.1; mf.param_count()]).is_err());
    }

    #[test]
    fn rook_gradient_is_relabelling_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let spec = AnsatzSpec::rook(2);
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 0), (3, 4), (1, 3)]).unwrap();
        let theta = ParameterSet((0..spec.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect());
        for kind in [LossKind::Dist, LossKind::Mountain, LossKind::Crater] {
            let base = gradient(LossConfig::new(kind), &spec, &entry(g.clone()), &theta).unwrap();
            for _ in 0..5 {
                let s = Permutation::random(5, &mut rng);
                let moved =
                    gradient(LossConfig::new(kind), &spec, &entry(g.permute(&s).unwrap()), &theta).unwrap();
                for (a, b) in base.0.iter().zip(&moved.0) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gradient_is_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = AnsatzSpec::rook(2);
        let e = entry(Graph::path(4).unwrap());
        let theta: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = 0.3;
        let grad_of = |kind, alpha| {
            let cfg = LossConfig {
                alpha,
                ..LossConfig::new(kind)
            };
            adjoint_gradient(&PreparedEntry::new(&spec, cfg, &e).unwrap(), &theta)
                .unwrap()
                .1
        };
        let mse = grad_of(LossKind::Mse, 0.0);
        let log = grad_of(LossKind::Mountain, 1.0);
        let mix = grad_of(LossKind::Mountain, alpha);
        for i in 0..theta.len() {
            let combo = (1.0 - alpha) * mse.0[i] + alpha * log.0[i];
            assert!((combo - mix.0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn tied_slots_accumulate_every_gate() {
        // node slot gradient equals the sum of untied per-gate gradients
        let spec = AnsatzSpec::rook(1);
        let e = entry(Graph::path(3).unwrap());
        let prep = PreparedEntry::new(&spec, LossConfig::new(LossKind::Dist), &e).unwrap();
        let theta: Vec<f64> = (0..spec.param_count()).map(|i| 0.1 * i as f64 + 0.2).collect();
        let (_, tied) = adjoint_gradient(&prep, &theta).unwrap();
        let mut untied = prep.clone();
        let mut untied_theta = theta.clone();
        for g in untied.plan.gates.iter_mut() {
            untied_theta.push(theta[g.slot]);
            g.slot = untied_theta.len() - 1;
        }
        untied.plan.n_slots = untied_theta.len();
        let (_, free) = adjoint_gradient(&untied, &untied_theta).unwrap();
        let mut summed = vec![0.0; theta.len()];
        for (g, free_slot) in prep.plan.gates.iter().zip(theta.len()..) {
            summed[g.slot] += free.0[free_slot];
        }
        for (a, b) in tied.0.iter().zip(&summed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_examples() {
        let same = vec![GradientVector(vec![0.5, -1.0]); 3];
        let s = grad_stats(&same).unwrap();
        assert_eq!(s.variance, vec![0.0, 0.0]);
        let one = grad_stats(&[GradientVector(vec![0.5, -1.0])]).unwrap();
        assert_eq!(one.mean_abs, vec![0.5, 1.0]);
        assert_eq!(one.aggregate, 0.75);
        let pm = grad_stats(&[GradientVector(vec![1.0, -1.0]), GradientVector(vec![-1.0, 1.0])]).unwrap();
        assert_eq!(pm.mean_abs, vec![1.0, 1.0]);
        assert_eq!(pm.variance, vec![1.0, 1.0]);
        assert!(matches!(grad_stats(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn batch_is_order_deterministic() {
        let spec = AnsatzSpec::mille_feuille(1, 2);
        let entries: Vec<_> = crate::dataset::all_classes(4)
            .unwrap()
            .into_iter()
            .map(entry)
            .collect();
        let preps: Vec<_> = entries
            .iter()
            .map(|e| PreparedEntry::new(&spec, LossConfig::new(LossKind::Dist), e).unwrap())
            .collect();
        let refs: Vec<&PreparedEntry> = preps.iter().collect();
        let theta: Vec<f64> = (0..spec.param_count()).map(|i| (i as f64).sin()).collect();
        let a = batch_gradient(&refs, &theta).unwrap();
        let b = batch_gradient(&refs, &theta).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        let sequential: f64 = refs
            .iter()
            .map(|p| adjoint_gradient(p, &theta).unwrap().0.scalar)
            .sum::<f64>()
            / refs.len() as f64;
        assert_eq!(a.loss.to_bits(), sequential.to_bits());
        assert!(batch_gradient(&[], &theta).is_err());
    }
}
