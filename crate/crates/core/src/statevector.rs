//! Dense statevector simulation of the rotation gates used by the graph ansatze.
//!
//! Every rotation is `exp(-i * angle / 2 * P)` for its Pauli word `P`; the
//! controlled rotation applies `exp(-i * angle / 2 * X)` to the target when
//! the control is `|1>`. Amplitude index bit `q` is the value of qubit `q`.

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Bits, Permutation};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 24;

/// Registers at least this wide parallelise inside each gate.
#[cfg(feature = "parallel")]
const PAR_QUBITS: usize = 14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Zz,
    Crx,
}

/// A gate placement without its angle. Two-qubit gates store `(a, b)`; for
/// [`GateKind::Crx`] `a` is the control and `b` the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Rx(usize),
    Ry(usize),
    Rz(usize),
    Zz(usize, usize),
    Crx { control: usize, target: usize },
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rx(_) => GateKind::Rx,
            Gate::Ry(_) => GateKind::Ry,
            Gate::Rz(_) => GateKind::Rz,
            Gate::Zz(..) => GateKind::Zz,
            Gate::Crx { .. } => GateKind::Crx,
        }
    }

    pub fn qubits(&self) -> ([usize; 2], usize) {
        match *self {
            Gate::Rx(q) | Gate::Ry(q) | Gate::Rz(q) => ([q, q], 1),
            Gate::Zz(a, b) => ([a, b], 2),
            Gate::Crx { control, target } => ([control, target], 2),
        }
    }

    /// Same gate acting on relabelled qubits.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::Rx(q) => Gate::Rx(f(q)),
            Gate::Ry(q) => Gate::Ry(f(q)),
            Gate::Rz(q) => Gate::Rz(f(q)),
            Gate::Zz(a, b) => Gate::Zz(f(a), f(b)),
            Gate::Crx { control, target } => Gate::Crx {
                control: f(control),
                target: f(target),
            },
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let ([a, b], arity) = self.qubits();
        for q in [a, b] {
            if q >= n {
                return Err(Error::BadQubit { qubit: q, n });
            }
        }
        if arity == 2 && a == b {
            return Err(Error::BadQubit { qubit: a, n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::OverBudget { n, limit: MAX_QUBITS });
        }
        let mut amps = vec![ZERO; 1 << n];
        amps[0] = ONE;
        Ok(Self { n, amps })
    }

    /// `|psi>^{(x) n}` with `|psi> = RX(e2) RZ(e1) RX(e0) |0>`.
    pub fn product_state(n: usize, euler: [f64; 3]) -> Result<Self> {
        let mut single = Self::zero(1)?;
        single.apply_unchecked(Gate::Rx(0), euler[0]);
        single.apply_unchecked(Gate::Rz(0), euler[1]);
        single.apply_unchecked(Gate::Rx(0), euler[2]);
        let (a0, a1) = (single.amps[0], single.amps[1]);
        let mut state = Self::zero(n)?;
        for (idx, amp) in state.amps.iter_mut().enumerate() {
            let ones = idx.count_ones() as i32;
            *amp = a1.powi(ones) * a0.powi(n as i32 - ones);
        }
        Ok(state)
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Length {
                expected: len.next_power_of_two().max(2),
                got: len,
            });
        }
        Ok(Self {
            n: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply(&mut self, gate: Gate, angle: f64) -> Result<()> {
        gate.validate(self.n)?;
        self.apply_unchecked(gate, angle);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: Gate, angle: f64) {
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        let phase = Complex64::new(c, -s); // e^{-i angle/2}
        match gate {
            Gate::Rx(q) => for_each_pair(&mut self.amps, q, |_, a0, a1| {
                let (x0, x1) = (*a0, *a1);
                *a0 = Complex64::new(c * x0.re + s * x1.im, c * x0.im - s * x1.re);
                *a1 = Complex64::new(s * x0.im + c * x1.re, -s * x0.re + c * x1.im);
            }),
            Gate::Ry(q) => for_each_pair(&mut self.amps, q, |_, a0, a1| {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * c - x1 * s;
                *a1 = x0 * s + x1 * c;
            }),
            Gate::Rz(q) => {
                let conj = phase.conj();
                for_each_amp(&mut self.amps, |idx, a| {
                    *a *= if idx >> q & 1 == 0 { phase } else { conj };
                })
            }
            Gate::Zz(a, b) => {
                let conj = phase.conj();
                for_each_amp(&mut self.amps, |idx, amp| {
                    *amp *= if (idx >> a ^ idx >> b) & 1 == 0 { phase } else { conj };
                })
            }
            Gate::Crx { control, target } => {
                for_each_pair(&mut self.amps, target, |idx, a0, a1| {
                    if idx >> control & 1 == 1 {
                        let (x0, x1) = (*a0, *a1);
                        *a0 = Complex64::new(c * x0.re + s * x1.im, c * x0.im - s * x1.re);
                        *a1 = Complex64::new(s * x0.im + c * x1.re, -s * x0.re + c * x1.im);
                    }
                })
            }
        }
    }

    /// Applies the gate's generator `G` with `U(angle) = exp(-i angle/2 G)`:
    /// the Pauli word for plain rotations, `|1><1| (x) X` for the controlled
    /// rotation. Not unitary for the controlled case.
    pub(crate) fn apply_generator(&mut self, gate: Gate) {
        match gate {
            Gate::Rx(q) => for_each_pair(&mut self.amps, q, |_, a0, a1| std::mem::swap(a0, a1)),
            Gate::Ry(q) => for_each_pair(&mut self.amps, q, |_, a0, a1| {
                let (x0, x1) = (*a0, *a1);
                // Y = [[0, -i], [i, 0]]
                *a0 = Complex64::new(x1.im, -x1.re);
                *a1 = Complex64::new(-x0.im, x0.re);
            }),
            Gate::Rz(q) => for_each_amp(&mut self.amps, |idx, a| {
                if idx >> q & 1 == 1 {
                    *a = -*a;
                }
            }),
            Gate::Zz(x, y) => for_each_amp(&mut self.amps, |idx, a| {
                if (idx >> x ^ idx >> y) & 1 == 1 {
                    *a = -*a;
                }
            }),
            Gate::Crx { control, target } => {
                for_each_pair(&mut self.amps, target, |idx, a0, a1| {
                    if idx >> control & 1 == 1 {
                        std::mem::swap(a0, a1);
                    } else {
                        *a0 = ZERO;
                        *a1 = ZERO;
                    }
                })
            }
        }
    }

    pub(crate) fn copy_from(&mut self, other: &StateVector) {
        self.amps.copy_from_slice(&other.amps);
    }

    /// `diag(weights) |self>`; used as the adjoint seed of a diagonal readout.
    pub(crate) fn scaled(&self, weights: &[f64]) -> StateVector {
        StateVector {
            n: self.n,
            amps: self.amps.iter().zip(weights).map(|(a, w)| a * w).collect(),
        }
    }

    /// Probability of each basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability that measuring `qubit` yields 1.
    pub fn marginal_one(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n {
            return Err(Error::BadQubit { qubit, n: self.n });
        }
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx >> qubit & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Marginal of every qubit in one pass.
    pub fn marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (idx, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, m) in out.iter_mut().enumerate() {
                if idx >> q & 1 == 1 {
                    *m += p;
                }
            }
        }
        out
    }

    /// `sum_b |amp_b|^2 * eigenvalues[b]`.
    pub fn expectation_diag(&self, eigenvalues: &[f64]) -> Result<f64> {
        if eigenvalues.len() != self.amps.len() {
            return Err(Error::Length {
                expected: self.amps.len(),
                got: eigenvalues.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(eigenvalues)
            .map(|(a, e)| a.norm_sqr() * e)
            .sum())
    }

    /// Basis relabelling: amplitude of `b` moves to `perm.permute_bits(b)`.
    pub fn permute_qubits(&self, perm: &Permutation) -> Result<StateVector> {
        if perm.len() != self.n {
            return Err(Error::PermutationLength {
                expected: self.n,
                got: perm.len(),
            });
        }
        let mut amps = vec![ZERO; self.amps.len()];
        for (idx, &a) in self.amps.iter().enumerate() {
            amps[perm.permute_bits(idx as Bits) as usize] = a;
        }
        Ok(StateVector { n: self.n, amps })
    }

    /// Largest amplitude-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Calls `f(low_index, a0, a1)` for every amplitude pair differing in bit `q`.
fn for_each_pair<F>(amps: &mut [Complex64], q: usize, f: F)
where
    F: Fn(usize, &mut Complex64, &mut Complex64) + Sync + Send,
{
    let stride = 1usize << q;
    let block = stride << 1;
    let run = |(chunk_idx, chunk): (usize, &mut [Complex64])| {
        let (lo, hi) = chunk.split_at_mut(stride);
        let base = chunk_idx * block;
        for (j, (a0, a1)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
            f(base + j, a0, a1);
        }
    };
    #[cfg(feature = "parallel")]
    if amps.len() >= 1 << PAR_QUBITS {
        if amps.len() / block >= 64 {
            amps.par_chunks_mut(block).enumerate().for_each(run);
        } else {
            amps.chunks_mut(block).enumerate().for_each(|(chunk_idx, chunk)| {
                let (lo, hi) = chunk.split_at_mut(stride);
                let base = chunk_idx * block;
                lo.par_iter_mut()
                    .zip(hi.par_iter_mut())
                    .enumerate()
                    .for_each(|(j, (a0, a1))| f(base + j, a0, a1));
            });
        }
        return;
    }
    amps.chunks_mut(block).enumerate().for_each(run);
}

fn for_each_amp<F>(amps: &mut [Complex64], f: F)
where
    F: Fn(usize, &mut Complex64) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if amps.len() >= 1 << PAR_QUBITS {
        amps.par_iter_mut().enumerate().for_each(|(i, a)| f(i, a));
        return;
    }
    amps.iter_mut().enumerate().for_each(|(i, a)| f(i, a));
}
