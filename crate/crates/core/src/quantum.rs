//! A small dense quantum-circuit simulator.
//!
//! Qubit 0 is the least significant bit of a basis index. Bitstrings and
//! Pauli words are written most significant qubit first, so the word `"ZI"`
//! acts with `Z` on qubit 1 and the bitstring `"01"` means qubit 0 is set.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fpe::FpeHamiltonian;
use crate::linalg::{gershgorin_bound, symmetric_eigen};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

const UNITARY_TOL: f64 = 1e-12;

/// A gate with its target qubits.
///
/// For multi-qubit gates the local matrix index has bit `j` equal to the
/// state of `targets()[j]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    H(usize),
    X(usize),
    Cx { control: usize, target: usize },
    CPhase { control: usize, target: usize, angle: f64 },
    Swap(usize, usize),
    Unitary { targets: Vec<usize>, matrix: Arc<DMatrix<C64>> },
}

impl Gate {
    /// A dense gate. The payload must be unitary and match the target count.
    pub fn unitary(targets: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = 1usize << targets.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: matrix.nrows(),
            });
        }
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Gate::Unitary {
            targets,
            matrix: Arc::new(matrix),
        })
    }

    pub fn targets(&self) -> Vec<usize> {
        match self {
            Gate::Ry { target, .. } | Gate::Rz { target, .. } | Gate::H(target) | Gate::X(target) => vec![*target],
            Gate::Cx { control, target } | Gate::CPhase { control, target, .. } => vec![*control, *target],
            Gate::Swap(p, q) => vec![*p, *q],
            Gate::Unitary { targets, .. } => targets.clone(),
        }
    }

    pub fn num_targets(&self) -> usize {
        match self {
            Gate::Unitary { targets, .. } => targets.len(),
            Gate::Cx { .. } | Gate::CPhase { .. } | Gate::Swap(..) => 2,
            _ => 1,
        }
    }

    /// Local matrix in the ordering of `targets()`.
    pub fn matrix(&self) -> DMatrix<C64> {
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            Gate::Ry { angle, .. } => {
                let (s, c) = (angle / 2.0).sin_cos();
                DMatrix::from_row_slice(2, 2, &[r(c), r(-s), r(s), r(c)])
            }
            Gate::Rz { angle, .. } => {
                DMatrix::from_row_slice(2, 2, &[C64::from_polar(1.0, -angle / 2.0), ZERO, ZERO, C64::from_polar(1.0, angle / 2.0)])
            }
            Gate::H(_) => {
                let h = r(FRAC_1_SQRT_2);
                DMatrix::from_row_slice(2, 2, &[h, h, h, -h])
            }
            Gate::X(_) => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Gate::Cx { .. } => {
                // bit 0 = control, bit 1 = target
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(2, 2)] = ONE;
                m[(3, 1)] = ONE;
                m[(1, 3)] = ONE;
                m
            }
            Gate::CPhase { angle, .. } => {
                let mut m = DMatrix::identity(4, 4);
                m[(3, 3)] = C64::from_polar(1.0, *angle);
                m
            }
            Gate::Swap(..) => {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(1, 2)] = ONE;
                m[(2, 1)] = ONE;
                m[(3, 3)] = ONE;
                m
            }
            Gate::Unitary { matrix, .. } => (**matrix).clone(),
        }
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Ry { target, angle } => Gate::Ry {
                target: *target,
                angle: -angle,
            },
            Gate::Rz { target, angle } => Gate::Rz {
                target: *target,
                angle: -angle,
            },
            Gate::CPhase { control, target, angle } => Gate::CPhase {
                control: *control,
                target: *target,
                angle: -angle,
            },
            Gate::Unitary { targets, matrix } => Gate::Unitary {
                targets: targets.clone(),
                matrix: Arc::new(matrix.adjoint()),
            },
            other => other.clone(),
        }
    }
}

/// `max |U†U - I|`
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    let p = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((p[(i, j)] - target).norm());
        }
    }
    worst
}

/// An ordered gate list on a fixed register.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(invalid("num_qubits", format!("register size must be in 1..={MAX_QUBITS}, got {num_qubits}")));
        }
        Ok(Self {
            num_qubits,
            gates: Vec::new(),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let targets = gate.targets();
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.num_qubits {
                return Err(Error::QubitOutOfRange {
                    index: t,
                    num_qubits: self.num_qubits,
                });
            }
            if targets[..i].contains(&t) {
                return Err(invalid("targets", format!("qubit {t} appears twice in one gate")));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: other.num_qubits,
            });
        }
        self.gates.extend(other.gates.iter().cloned());
        Ok(())
    }

    /// The adjoint circuit: reversed order, every gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }
}

/// Applies a local matrix to the amplitudes it addresses, one block at a time.
struct Kernel {
    offsets: Vec<usize>,
    mask: usize,
    matrix: Vec<C64>,
}

impl Kernel {
    fn new(gate: &Gate) -> Self {
        let targets = gate.targets();
        let k = targets.len();
        let offsets = (0..1usize << k)
            .map(|s| targets.iter().enumerate().filter(|(j, _)| s >> j & 1 == 1).map(|(_, &t)| 1 << t).sum())
            .collect();
        let mask = targets.iter().map(|&t| 1usize << t).sum();
        let m = gate.matrix();
        let dim = 1 << k;
        let matrix = (0..dim * dim).map(|i| m[(i / dim, i % dim)]).collect();
        Self { offsets, mask, matrix }
    }

    /// `v ← U v` on a `stride`-spaced view of `data` starting at `start`.
    fn apply(&self, data: &mut [C64], len: usize, start: usize, stride: usize, conj: bool, buf: &mut Vec<C64>) {
        let dim = self.offsets.len();
        buf.resize(dim, ZERO);
        for base in (0..len).filter(|b| b & self.mask == 0) {
            for (s, off) in self.offsets.iter().enumerate() {
                let v = data[start + (base + off) * stride];
                buf[s] = if conj { v.conj() } else { v };
            }
            for (r, off) in self.offsets.iter().enumerate() {
                let row = &self.matrix[r * dim..(r + 1) * dim];
                let acc: C64 = row.iter().zip(buf.iter()).map(|(m, v)| m * v).sum();
                data[start + (base + off) * stride] = if conj { acc.conj() } else { acc };
            }
        }
    }
}

/// Shared behaviour of pure and mixed simulation states.
pub trait QuantumState {
    fn num_qubits(&self) -> usize;
    fn apply_gate(&mut self, gate: &Gate) -> Result<()>;
    /// Computational-basis outcome probabilities.
    fn probabilities(&self) -> Vec<f64>;

    fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.num_qubits() != self.num_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits(),
                actual: circuit.num_qubits(),
            });
        }
        for g in circuit.gates() {
            self.apply_gate(g)?;
        }
        Ok(())
    }
}

fn check_targets(gate: &Gate, num_qubits: usize) -> Result<()> {
    match gate.targets().into_iter().find(|&t| t >= num_qubits) {
        Some(index) => Err(Error::QubitOutOfRange { index, num_qubits }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl Statevector {
    /// `|0…0⟩`
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(invalid("num_qubits", format!("register size must be in 1..={MAX_QUBITS}, got {num_qubits}")));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: index,
            });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { num_qubits, amplitudes })
    }

    /// Wrap amplitudes, normalizing them. Length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(invalid("amplitudes", format!("length must be a power of two ≥ 2, got {dim}")));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(invalid("amplitudes", "state has zero or non-finite norm"));
        }
        Ok(Self {
            num_qubits: dim.trailing_zeros() as usize,
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Equal superposition of all basis states.
    pub fn uniform(num_qubits: usize) -> Result<Self> {
        let mut s = Self::zero(num_qubits)?;
        s.amplitudes.fill(ONE);
        Self::from_amplitudes(s.amplitudes)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|ψ⟩ ⊗ |φ⟩` with `self` on the low qubits.
    pub fn tensor_low(&self, high: &Statevector) -> Result<Statevector> {
        let mut amps = Vec::with_capacity(self.dim() * high.dim());
        for h in &high.amplitudes {
            amps.extend(self.amplitudes.iter().map(|l| l * h));
        }
        Statevector::from_amplitudes(amps)
    }

    /// Multiply by the unit phase that makes the largest-magnitude entry
    /// real and positive.
    pub fn fix_global_phase(&mut self) {
        let pivot = self
            .amplitudes
            .iter()
            .copied()
            .fold(ZERO, |best, a| if a.norm_sqr() > best.norm_sqr() { a } else { best });
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            for a in &mut self.amplitudes {
                *a *= phase;
            }
        }
    }

    /// `⟨ψ|P|ψ⟩` for a Pauli word.
    pub fn pauli_expectation(&self, word: &PauliWord) -> f64 {
        let mut acc = ZERO;
        for (k, a) in self.amplitudes.iter().enumerate() {
            acc += self.amplitudes[k ^ word.x_mask].conj() * word.phase(k) * a;
        }
        acc.re
    }

    /// `Σ c_i ⟨ψ|P_i|ψ⟩`
    pub fn expectation(&self, terms: &[PauliTerm]) -> f64 {
        terms.iter().map(|t| t.coefficient * self.pauli_expectation(&t.word)).sum()
    }
}

impl QuantumState for Statevector {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        check_targets(gate, self.num_qubits)?;
        let kernel = Kernel::new(gate);
        let dim = self.dim();
        kernel.apply(&mut self.amplitudes, dim, 0, 1, false, &mut Vec::new());
        Ok(())
    }

    fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Row-major `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Ok(Self::from_statevector(&Statevector::zero(num_qubits)?))
    }

    pub fn from_statevector(psi: &Statevector) -> Self {
        let a = psi.amplitudes();
        let dim = a.len();
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = a[i] * a[j].conj();
            }
        }
        Self {
            num_qubits: psi.num_qubits,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim() + j]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// `max |ρ - ρ†|`
    pub fn hermiticity_deviation(&self) -> f64 {
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue, from the real symmetric embedding of `ρ`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let dim = self.dim();
        let m = DMatrix::from_fn(2 * dim, 2 * dim, |i, j| {
            let z = self.get(i % dim, j % dim);
            match (i < dim, j < dim) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        Ok(symmetric_eigen(&m)?.values[0])
    }

    /// Local depolarizing channel on `targets`:
    /// `ρ → (1-p) ρ + p (I/2^k) ⊗ Tr_targets ρ`.
    pub fn depolarize(&mut self, targets: &[usize], p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", format!("depolarizing probability must lie in [0, 1], got {p}")));
        }
        if let Some(&index) = targets.iter().find(|&&t| t >= self.num_qubits) {
            return Err(Error::QubitOutOfRange {
                index,
                num_qubits: self.num_qubits,
            });
        }
        if p == 0.0 {
            return Ok(());
        }
        let dim = self.dim();
        let k = targets.len();
        let mask: usize = targets.iter().map(|&t| 1usize << t).sum();
        let offsets: Vec<usize> = (0..1usize << k)
            .map(|s| targets.iter().enumerate().filter(|(j, _)| s >> j & 1 == 1).map(|(_, &t)| 1 << t).sum())
            .collect();
        let weight = 1.0 / (1usize << k) as f64;
        let mut out: Vec<C64> = self.entries.iter().map(|z| z * (1.0 - p)).collect();
        for r in (0..dim).filter(|r| r & mask == 0) {
            for c in (0..dim).filter(|c| c & mask == 0) {
                let reduced: C64 = offsets.iter().map(|o| self.entries[(r + o) * dim + c + o]).sum();
                for o in &offsets {
                    out[(r + o) * dim + c + o] += reduced * (p * weight);
                }
            }
        }
        self.entries = out;
        Ok(())
    }
}

impl QuantumState for DensityMatrix {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        check_targets(gate, self.num_qubits)?;
        let kernel = Kernel::new(gate);
        let dim = self.dim();
        let mut buf = Vec::new();
        // U ρ: columns
        for c in 0..dim {
            kernel.apply(&mut self.entries, dim, c, dim, false, &mut buf);
        }
        // (U ρ) U†: each row r becomes conj(U conj(row r))
        for r in 0..dim {
            kernel.apply(&mut self.entries, dim, r * dim, 1, true, &mut buf);
        }
        Ok(())
    }

    fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i).re.max(0.0)).collect()
    }
}

/// Basis index as a bitstring, most significant qubit first.
pub fn bitstring(index: usize, num_qubits: usize) -> String {
    format!("{index:0num_qubits$b}")
}

/// Draw `shots` basis indices from a probability vector.
pub fn sample_indices(probabilities: &[f64], shots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if shots == 0 {
        return Err(invalid("shots", "at least one shot is required"));
    }
    let dist = WeightedIndex::new(probabilities.iter().map(|p| p.max(0.0)))
        .map_err(|e| invalid("probabilities", e.to_string()))?;
    Ok((0..shots).map(|_| dist.sample(rng)).collect())
}

/// Outcome counts per basis index.
pub fn sample_counts(probabilities: &[f64], shots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; probabilities.len()];
    for i in sample_indices(probabilities, shots, rng)? {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Measure every qubit `shots` times. Only observed outcomes appear.
pub fn sample_measurements<S: QuantumState>(state: &S, shots: usize, seed: u64) -> Result<BTreeMap<String, u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = sample_counts(&state.probabilities(), shots, &mut rng)?;
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (bitstring(i, state.num_qubits()), c))
        .collect())
}

/// A Pauli string stored as bit masks. `P|k⟩ = phase(k)·|k ⊕ x_mask⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliWord {
    num_qubits: usize,
    x_mask: usize,
    z_mask: usize,
}

impl PauliWord {
    pub fn parse(word: &str) -> Result<Self> {
        let q = word.chars().count();
        if q == 0 || q > MAX_QUBITS {
            return Err(invalid("word", format!("Pauli word length must be in 1..={MAX_QUBITS}")));
        }
        let (mut x_mask, mut z_mask) = (0, 0);
        for (pos, ch) in word.chars().enumerate() {
            let bit = 1usize << (q - 1 - pos);
            match ch {
                'I' => {}
                'X' => x_mask |= bit,
                'Z' => z_mask |= bit,
                'Y' => {
                    x_mask |= bit;
                    z_mask |= bit;
                }
                other => return Err(invalid("word", format!("unexpected Pauli letter `{other}`"))),
            }
        }
        Ok(Self { num_qubits: q, x_mask, z_mask })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn letter(&self, qubit: usize) -> char {
        let bit = 1 << qubit;
        match (self.x_mask & bit != 0, self.z_mask & bit != 0) {
            (false, false) => 'I',
            (true, false) => 'X',
            (false, true) => 'Z',
            (true, true) => 'Y',
        }
    }

    /// Qubits the word acts on non-trivially.
    pub fn support(&self) -> usize {
        self.x_mask | self.z_mask
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    pub fn is_diagonal(&self) -> bool {
        self.x_mask == 0
    }

    fn phase(&self, k: usize) -> C64 {
        let y = (self.x_mask & self.z_mask).count_ones();
        let sign = if (k & self.z_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        // Y = i·X·Z, so each Y contributes a factor i.
        match y % 4 {
            0 => C64::new(sign, 0.0),
            1 => C64::new(0.0, sign),
            2 => C64::new(-sign, 0.0),
            _ => C64::new(0.0, -sign),
        }
    }

    /// Dense `2^q × 2^q` matrix.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let dim = 1 << self.num_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            m[(k ^ self.x_mask, k)] = self.phase(k);
        }
        m
    }
}

impl std::fmt::Display for PauliWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: String = (0..self.num_qubits).rev().map(|q| self.letter(q)).collect();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub word: PauliWord,
}

impl PauliTerm {
    pub fn new(coefficient: f64, word: &str) -> Result<Self> {
        Ok(Self {
            coefficient,
            word: PauliWord::parse(word)?,
        })
    }
}

/// Terms sharing one measurement basis. Identity letters are measured in
/// `Z`, so the basis word has no `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGroup {
    pub basis: PauliWord,
    /// `(coefficient, support mask)` per term; the term's value on outcome
    /// `k` is `(-1)^{popcount(k & mask)}`.
    pub terms: Vec<(f64, usize)>,
}

impl MeasurementGroup {
    /// Gates rotating the basis onto `Z`: `H` for `X`, `S†H` for `Y`.
    pub fn rotation(&self) -> Vec<Gate> {
        let mut gates = Vec::new();
        for q in 0..self.basis.num_qubits {
            match self.basis.letter(q) {
                'X' => gates.push(Gate::H(q)),
                'Y' => {
                    gates.push(Gate::Rz { target: q, angle: -PI / 2.0 });
                    gates.push(Gate::H(q));
                }
                _ => {}
            }
        }
        gates
    }

    /// `Σ c_i ⟨P_i⟩` from outcome frequencies in the rotated basis.
    pub fn evaluate(&self, frequencies: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(c, mask)| c * parity_expectation(frequencies, mask))
            .sum()
    }
}

/// `Σ_k f_k (-1)^{popcount(k & mask)}`
pub fn parity_expectation(frequencies: &[f64], mask: usize) -> f64 {
    frequencies
        .iter()
        .enumerate()
        .map(|(k, f)| if (k & mask).count_ones() % 2 == 0 { *f } else { -*f })
        .sum()
}

/// Split a Pauli sum into its identity part and measurement groups ordered
/// by basis word.
pub fn group_terms(terms: &[PauliTerm]) -> (f64, Vec<MeasurementGroup>) {
    let mut offset = 0.0;
    let mut groups: BTreeMap<String, MeasurementGroup> = BTreeMap::new();
    for t in terms {
        if t.word.is_identity() {
            offset += t.coefficient;
            continue;
        }
        let full = (1usize << t.word.num_qubits) - 1;
        let basis = PauliWord {
            num_qubits: t.word.num_qubits,
            x_mask: t.word.x_mask,
            z_mask: t.word.z_mask | (full & !t.word.support()),
        };
        groups
            .entry(basis.to_string())
            .or_insert_with(|| MeasurementGroup { basis, terms: Vec::new() })
            .terms
            .push((t.coefficient, t.word.support()));
    }
    (offset, groups.into_values().collect())
}

/// Coefficients below this are dropped by [`pauli_decompose`].
pub const PAULI_CUTOFF: f64 = 1e-14;

/// `H = Σ c_i P_i` with `c_i = Tr(P_i H)/2^q`, for a real symmetric `H`.
pub fn pauli_decompose(hq: &DMatrix<f64>) -> Result<Vec<PauliTerm>> {
    let dim = hq.nrows();
    if dim != hq.ncols() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: hq.ncols(),
        });
    }
    if dim < 2 || !dim.is_power_of_two() {
        return Err(invalid("hq", format!("dimension must be a power of two ≥ 2, got {dim}")));
    }
    let q = dim.trailing_zeros() as usize;
    let mut terms = Vec::new();
    for x_mask in 0..dim {
        for z_mask in 0..dim {
            let word = PauliWord { num_qubits: q, x_mask, z_mask };
            let trace: C64 = (0..dim).map(|k| word.phase(k) * hq[(k, k ^ x_mask)]).sum();
            let c = trace.re / dim as f64;
            if c.abs() >= PAULI_CUTOFF {
                terms.push(PauliTerm { coefficient: c, word });
            }
        }
    }
    terms.sort_by(|a, b| a.word.to_string().cmp(&b.word.to_string()));
    Ok(terms)
}

/// `Σ c_i P_i` as a dense complex matrix.
pub fn pauli_sum_matrix(terms: &[PauliTerm]) -> Result<DMatrix<C64>> {
    let q = terms.first().map(|t| t.word.num_qubits).ok_or_else(|| invalid("terms", "empty Pauli sum"))?;
    let dim = 1 << q;
    let mut m = DMatrix::zeros(dim, dim);
    for t in terms {
        if t.word.num_qubits != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: t.word.num_qubits,
            });
        }
        m += t.word.to_matrix() * C64::new(t.coefficient, 0.0);
    }
    Ok(m)
}

/// `H` embedded in the smallest qubit register that holds it.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedHamiltonian {
    pub matrix: DMatrix<f64>,
    pub num_qubits: usize,
    /// Size of the original (unpadded) matrix.
    pub logical_dim: usize,
    pub penalty: f64,
}

/// Default padding penalty: twice the Gershgorin bound of `H`.
pub fn default_penalty(h: &FpeHamiltonian) -> f64 {
    2.0 * gershgorin_bound(&h.entries)
}

/// Embed `H` top-left in a `2^q × 2^q` matrix, with `penalty` on the padded
/// diagonal. `penalty` must exceed the Gershgorin bound of `H`.
pub fn pad_hamiltonian(h: &FpeHamiltonian, penalty: f64) -> Result<PaddedHamiltonian> {
    let n = h.dim();
    if n == 0 {
        return Err(invalid("H", "empty matrix"));
    }
    let bound = gershgorin_bound(&h.entries);
    if !(penalty > bound) {
        return Err(invalid("penalty", format!("padding penalty {penalty} must exceed the spectral bound {bound}")));
    }
    let num_qubits = (n.next_power_of_two().trailing_zeros() as usize).max(1);
    if num_qubits > MAX_QUBITS {
        return Err(invalid("H", format!("{n} states need more than {MAX_QUBITS} qubits")));
    }
    let dim = 1 << num_qubits;
    let matrix = DMatrix::from_fn(dim, dim, |i, j| match (i < n && j < n, i == j) {
        (true, _) => h.entries[(i, j)],
        (false, true) => penalty,
        (false, false) => 0.0,
    });
    Ok(PaddedHamiltonian {
        matrix,
        num_qubits,
        logical_dim: n,
        penalty,
    })
}

/// How [`matrix_exponential_unitary`] treats `τλ` beyond `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseWrap {
    /// Refuse if `τ·max|λ| ≥ 2π`.
    Reject,
    /// Phases are taken modulo `2π`.
    Allow,
}

/// `exp(iτH)` for real symmetric `H`, through its eigendecomposition.
pub fn matrix_exponential_unitary(hq: &DMatrix<f64>, tau: f64, wrap: PhaseWrap) -> Result<DMatrix<C64>> {
    if !tau.is_finite() {
        return Err(invalid("tau", "time scale must be finite"));
    }
    let eig = symmetric_eigen(hq)?;
    let lambda_max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let product = tau.abs() * lambda_max;
    if wrap == PhaseWrap::Reject && product >= 2.0 * PI {
        return Err(Error::PhaseAliasing { product });
    }
    let dim = hq.nrows();
    let v = eig.vectors.map(|x| C64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        eig.values.iter().map(|&l| C64::from_polar(1.0, tau * l)),
    ));
    Ok(&v * phases * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::{build_fpe_matrix, build_hamiltonian, ModelParams};
    use crate::hermite::BasisSpec;
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn double_well_h(n: usize) -> FpeHamiltonian {
        let p = ModelParams::new(-1.0, 2.0, 1.0).unwrap();
        build_hamiltonian(&build_fpe_matrix(&p, &BasisSpec::new(n, 0.5).unwrap()).unwrap())
    }

    #[test]
    fn hadamard_and_bell() {
        let mut s = Statevector::zero(1).unwrap();
        s.apply_gate(&Gate::H(0)).unwrap();
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        assert!(close(s.amplitudes()[0], h, 1e-15) && close(s.amplitudes()[1], h, 1e-15));

        let mut c = Circuit::new(2).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::Cx { control: 0, target: 1 }).unwrap();
        let mut bell = Statevector::zero(2).unwrap();
        bell.apply_circuit(&c).unwrap();
        let a = bell.amplitudes();
        assert!(close(a[0], h, 1e-15) && close(a[3], h, 1e-15));
        assert!(a[1].norm() < 1e-15 && a[2].norm() < 1e-15);
    }

    #[test]
    fn ry_definition() {
        for &theta in &[0.0, 0.3, PI / 2.0, -2.0] {
            let mut s = Statevector::zero(1).unwrap();
            s.apply_gate(&Gate::Ry { target: 0, angle: theta }).unwrap();
            assert!((s.amplitudes()[0].re - (theta / 2.0).cos()).abs() < 1e-15);
            assert!((s.amplitudes()[1].re - (theta / 2.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn bit_ordering() {
        let mut s = Statevector::zero(3).unwrap();
        s.apply_gate(&Gate::X(0)).unwrap();
        assert_eq!(s.probabilities()[1], 1.0);
        assert_eq!(bitstring(1, 3), "001");
        let counts = sample_measurements(&s, 10, 0).unwrap();
        assert_eq!(counts.get("001"), Some(&10));
        assert_eq!(PauliWord::parse("ZI").unwrap().letter(1), 'Z');
    }

    #[test]
    fn cx_and_swap_semantics() {
        let mut s = Statevector::basis(2, 0b01).unwrap();
        s.apply_gate(&Gate::Cx { control: 0, target: 1 }).unwrap();
        assert_eq!(s.probabilities()[0b11], 1.0);
        s.apply_gate(&Gate::X(0)).unwrap();
        s.apply_gate(&Gate::Swap(0, 1)).unwrap();
        assert_eq!(s.probabilities()[0b01], 1.0);
        let mut t = Statevector::basis(2, 0b10).unwrap();
        t.apply_gate(&Gate::Cx { control: 1, target: 0 }).unwrap();
        assert_eq!(t.probabilities()[0b11], 1.0);
    }

    #[test]
    fn gate_validation() {
        let mut c = Circuit::new(2).unwrap();
        assert_eq!(c.push(Gate::X(2)).unwrap_err(), Error::QubitOutOfRange { index: 2, num_qubits: 2 });
        assert!(c.push(Gate::Cx { control: 1, target: 1 }).is_err());
        let bad = DMatrix::from_element(2, 2, ONE);
        assert!(matches!(Gate::unitary(vec![0], bad), Err(Error::NotUnitary { .. })));
        assert!(Gate::unitary(vec![0, 1], DMatrix::identity(2, 2)).is_err());
        let mut s = Statevector::zero(2).unwrap();
        assert!(s.apply_circuit(&Circuit::new(3).unwrap()).is_err());
    }

    #[test]
    fn inverse_circuit_undoes() {
        let mut c = Circuit::new(3).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::Ry { target: 1, angle: 0.7 }).unwrap();
        c.push(Gate::Rz { target: 2, angle: -1.1 }).unwrap();
        c.push(Gate::CPhase { control: 0, target: 2, angle: 0.4 }).unwrap();
        c.push(Gate::Cx { control: 1, target: 2 }).unwrap();
        c.push(Gate::Swap(0, 2)).unwrap();
        let mut s = Statevector::uniform(3).unwrap();
        s.apply_gate(&Gate::Ry { target: 0, angle: 0.2 }).unwrap();
        let start = s.clone();
        s.apply_circuit(&c).unwrap();
        s.apply_circuit(&c.inverse()).unwrap();
        for (a, b) in s.amplitudes().iter().zip(start.amplitudes()) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn norm_drift_over_many_gates() {
        let mut s = Statevector::zero(4).unwrap();
        for i in 0..1000 {
            let g = match i % 5 {
                0 => Gate::H(i % 4),
                1 => Gate::Ry { target: (i + 1) % 4, angle: 0.1 * i as f64 },
                2 => Gate::Cx { control: i % 4, target: (i + 1) % 4 },
                3 => Gate::Rz { target: (i + 2) % 4, angle: 0.37 },
                _ => Gate::CPhase { control: (i + 3) % 4, target: i % 4, angle: 1.3 },
            };
            s.apply_gate(&g).unwrap();
        }
        assert!((s.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_matches_statevector() {
        let mut c = Circuit::new(3).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::Cx { control: 0, target: 2 }).unwrap();
        c.push(Gate::Ry { target: 1, angle: 0.9 }).unwrap();
        c.push(Gate::Rz { target: 2, angle: 0.3 }).unwrap();
        c.push(Gate::CPhase { control: 1, target: 2, angle: 0.8 }).unwrap();
        let mut psi = Statevector::zero(3).unwrap();
        let mut rho = DensityMatrix::zero(3).unwrap();
        psi.apply_circuit(&c).unwrap();
        rho.apply_circuit(&c).unwrap();
        let want = DensityMatrix::from_statevector(&psi);
        for i in 0..8 {
            for j in 0..8 {
                assert!(close(rho.get(i, j), want.get(i, j), 1e-10));
            }
        }
    }

    #[test]
    fn full_depolarization_is_maximally_mixed() {
        let mut rho = DensityMatrix::zero(2).unwrap();
        rho.apply_gate(&Gate::H(1)).unwrap();
        rho.depolarize(&[0, 1], 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert!(close(rho.get(i, j), C64::new(want, 0.0), 1e-15));
            }
        }
        let mut one = DensityMatrix::zero(2).unwrap();
        one.apply_gate(&Gate::X(1)).unwrap();
        one.depolarize(&[0], 0.5).unwrap();
        let probs = one.probabilities();
        assert!((probs[0b10] - 0.75).abs() < 1e-15 && (probs[0b11] - 0.25).abs() < 1e-15);
        assert!(one.depolarize(&[0], 1.5).is_err());
        assert!(one.depolarize(&[3], 0.1).is_err());
    }

    #[test]
    fn depolarizing_keeps_state_valid() {
        let mut rho = DensityMatrix::zero(3).unwrap();
        for (k, g) in [Gate::H(0), Gate::Cx { control: 0, target: 1 }, Gate::Ry { target: 2, angle: 1.2 }, Gate::Cx { control: 1, target: 2 }]
            .iter()
            .enumerate()
        {
            rho.apply_gate(g).unwrap();
            rho.depolarize(&g.targets(), 0.05 * (k + 1) as f64).unwrap();
            assert!((rho.trace() - ONE).norm() < 1e-10);
            assert!(rho.hermiticity_deviation() < 1e-12);
            assert!(rho.min_eigenvalue().unwrap() > -1e-10);
        }
    }

    #[test]
    fn bell_sampling() {
        let mut bell = Statevector::zero(2).unwrap();
        bell.apply_gate(&Gate::H(0)).unwrap();
        bell.apply_gate(&Gate::Cx { control: 0, target: 1 }).unwrap();
        let shots = 4096;
        let counts = sample_measurements(&bell, shots, 7).unwrap();
        assert!(counts.keys().all(|k| k == "00" || k == "11"));
        let sigma = (0.25 / shots as f64).sqrt();
        let f = counts["00"] as f64 / shots as f64;
        assert!((f - 0.5).abs() < 3.0 * sigma);
        assert_eq!(counts, sample_measurements(&bell, shots, 7).unwrap());
        assert!(sample_measurements(&bell, 0, 7).is_err());
    }

    #[test]
    fn sampling_matches_ground_state() {
        let h = double_well_h(8);
        let padded = pad_hamiltonian(&h, default_penalty(&h)).unwrap();
        let eig = symmetric_eigen(&padded.matrix).unwrap();
        let psi = Statevector::from_real(&eig.vector(0)).unwrap();
        let shots = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = sample_counts(&psi.probabilities(), shots, &mut rng).unwrap();
        for (p, c) in psi.probabilities().iter().zip(counts) {
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            assert!((c as f64 / shots as f64 - p).abs() <= 3.0 * sigma + 1e-12);
        }
    }

    #[test]
    fn pauli_examples() {
        let z = pauli_decompose(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(z, vec![PauliTerm::new(1.0, "Z").unwrap()]);
        let x = pauli_decompose(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(x, vec![PauliTerm::new(1.0, "X").unwrap()]);
        let id = pauli_decompose(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(id.len(), 1);
        assert_eq!(id[0].word.to_string(), "II");
        assert!((id[0].coefficient - 1.0).abs() < 1e-15);
        assert!(pauli_decompose(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn pauli_word_matrices() {
        let y = PauliWord::parse("Y").unwrap().to_matrix();
        assert!(y[(0, 1)] == C64::new(0.0, -1.0) && y[(1, 0)] == C64::new(0.0, 1.0));
        let zi = PauliWord::parse("ZI").unwrap().to_matrix();
        assert_eq!(zi[(2, 2)], -ONE);
        assert_eq!(zi[(1, 1)], ONE);
        assert!(PauliWord::parse("ZQ").is_err());
        assert_eq!(PauliWord::parse("XYZI").unwrap().to_string(), "XYZI");
    }

    #[test]
    fn statevector_pauli_expectations() {
        let plus = Statevector::uniform(1).unwrap();
        let z = [PauliTerm::new(1.0, "Z").unwrap()];
        assert_eq!(Statevector::zero(1).unwrap().expectation(&z), 1.0);
        assert!(plus.expectation(&z).abs() < 1e-15);
        assert!((plus.expectation(&[PauliTerm::new(1.0, "X").unwrap()]) - 1.0).abs() < 1e-15);
        let mut i_plus = Statevector::uniform(1).unwrap();
        i_plus.apply_gate(&Gate::Rz { target: 0, angle: PI / 2.0 }).unwrap();
        assert!((i_plus.expectation(&[PauliTerm::new(1.0, "Y").unwrap()]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grouped_measurement_matches_exact() {
        let h = double_well_h(4);
        let terms = pauli_decompose(&h.entries).unwrap();
        let (offset, groups) = group_terms(&terms);
        assert!(groups.iter().all(|g| !g.basis.to_string().contains('I')));
        let mut psi = Statevector::zero(2).unwrap();
        psi.apply_gate(&Gate::Ry { target: 0, angle: 0.8 }).unwrap();
        psi.apply_gate(&Gate::Cx { control: 0, target: 1 }).unwrap();
        psi.apply_gate(&Gate::Rz { target: 1, angle: 0.5 }).unwrap();
        let mut total = offset;
        for g in &groups {
            let mut rotated = psi.clone();
            for gate in g.rotation() {
                rotated.apply_gate(&gate).unwrap();
            }
            total += g.evaluate(&rotated.probabilities());
        }
        assert!((total - psi.expectation(&terms)).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn pauli_round_trip(q in 1usize..4, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 1 << q;
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-5.0..5.0));
            let h = (&a + a.transpose()) * 0.5;
            let terms = pauli_decompose(&h).unwrap();
            let back = pauli_sum_matrix(&terms).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    prop_assert!((back[(i, j)] - C64::new(h[(i, j)], 0.0)).norm() < 1e-12);
                }
            }
            let psi = Statevector::from_amplitudes((0..dim).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).unwrap();
            let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
            let direct = (v.adjoint() * back * &v)[(0, 0)].re;
            prop_assert!((psi.expectation(&terms) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn padding() {
        let one = FpeHamiltonian::from_symmetric(DMatrix::from_element(1, 1, 4.0)).unwrap();
        let p = pad_hamiltonian(&one, 10.0).unwrap();
        assert_eq!(p.num_qubits, 1);
        assert_eq!(p.matrix, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 10.0]));
        assert!(pad_hamiltonian(&one, 3.0).is_err());

        let h4 = double_well_h(4);
        let p4 = pad_hamiltonian(&h4, default_penalty(&h4)).unwrap();
        assert_eq!(p4.matrix, h4.entries);
        assert_eq!(p4.num_qubits, 2);

        let h6 = double_well_h(6);
        let p6 = pad_hamiltonian(&h6, default_penalty(&h6)).unwrap();
        assert_eq!((p6.num_qubits, p6.logical_dim), (3, 6));
        let small = symmetric_eigen(&h6.entries).unwrap().vector(0);
        let big = symmetric_eigen(&p6.matrix).unwrap().vector(0);
        for i in 0..8 {
            let want = if i < 6 { small[i] } else { 0.0 };
            assert!((big[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_examples() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, PI]);
        let u = matrix_exponential_unitary(&h, 1.0, PhaseWrap::Reject).unwrap();
        assert!(close(u[(0, 0)], ONE, 1e-15) && close(u[(1, 1)], -ONE, 1e-15));
        assert!(u[(0, 1)].norm() < 1e-15);

        let a = double_well_h(4).entries;
        let id = matrix_exponential_unitary(&a, 0.0, PhaseWrap::Reject).unwrap();
        assert!(max_dev(&id, &DMatrix::identity(4, 4)) < 1e-12);
        assert!(matches!(matrix_exponential_unitary(&a, 1.0, PhaseWrap::Reject), Err(Error::PhaseAliasing { .. })));
    }

    fn max_dev(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn exponential_eigenphases() {
        let h = double_well_h(4).entries;
        for &(tau, wrap) in &[(PI / gershgorin_bound(&h), PhaseWrap::Reject), (1.0, PhaseWrap::Allow)] {
            let u = matrix_exponential_unitary(&h, tau, wrap).unwrap();
            assert!(unitarity_deviation(&u) < 1e-12);
            let eig = symmetric_eigen(&h).unwrap();
            for (k, &lambda) in eig.values.iter().enumerate() {
                let v = nalgebra::DVector::from_iterator(4, eig.vector(k).into_iter().map(|x| C64::new(x, 0.0)));
                let uv = &u * &v;
                let want = C64::from_polar(1.0, tau * lambda);
                for i in 0..4 {
                    assert!((uv[i] - want * v[i]).norm() < 1e-10);
                }
            }
        }
    }
}
