//! Gate and readout noise on the density-matrix simulator, plus the two
//! mitigation schemes: zero-noise extrapolation by global folding and
//! twirled readout error extinction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    bitstring, group_terms, parity_expectation, sample_counts, Circuit, DensityMatrix, Gate, MeasurementGroup, PauliTerm, PauliWord,
    QuantumState,
};

/// Density-matrix simulation is limited to this many qubits.
pub const MAX_NOISY_QUBITS: usize = 6;

/// Calibration factors below this make a TREX estimate unreliable.
pub const MIN_CALIBRATION_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Depolarizing probability after single-qubit gates.
    pub p1: f64,
    /// Depolarizing probability after gates on two or more qubits.
    pub p2: f64,
    /// Probability of reading `1` when the qubit is `0`.
    pub readout_p01: f64,
    /// Probability of reading `0` when the qubit is `1`.
    pub readout_p10: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            p1: 0.005,
            p2: 0.05,
            readout_p01: 0.005,
            readout_p10: 0.005,
        }
    }
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self {
            p1: 0.0,
            p2: 0.0,
            readout_p01: 0.0,
            readout_p10: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p1", self.p1), ("p2", self.p2), ("readout_p01", self.readout_p01), ("readout_p10", self.readout_p10)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(name, format!("probability must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    fn gate_probability(&self, gate: &Gate) -> f64 {
        if gate.num_targets() == 1 {
            self.p1
        } else {
            self.p2
        }
    }
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits > MAX_NOISY_QUBITS {
        return Err(invalid(
            "num_qubits",
            format!("noisy simulation supports at most {MAX_NOISY_QUBITS} qubits, got {num_qubits}"),
        ));
    }
    Ok(())
}

/// Run `circuit` on `rho`, depolarizing the support of every gate.
pub fn run_noisy(rho: &mut DensityMatrix, circuit: &Circuit, noise: &NoiseParams) -> Result<()> {
    noise.validate()?;
    check_size(circuit.num_qubits())?;
    if rho.num_qubits() != circuit.num_qubits() {
        return Err(Error::DimensionMismatch {
            expected: rho.num_qubits(),
            actual: circuit.num_qubits(),
        });
    }
    for g in circuit.gates() {
        rho.apply_gate(g)?;
        rho.depolarize(&g.targets(), noise.gate_probability(g))?;
    }
    Ok(())
}

/// The noisy output state of `circuit` started from `|0…0⟩`.
pub fn apply_noise(circuit: &Circuit, noise: &NoiseParams) -> Result<DensityMatrix> {
    check_size(circuit.num_qubits())?;
    let mut rho = DensityMatrix::zero(circuit.num_qubits())?;
    run_noisy(&mut rho, circuit, noise)?;
    Ok(rho)
}

/// Push ideal outcome probabilities through the per-qubit confusion matrix.
pub fn readout_probabilities(probabilities: &[f64], noise: &NoiseParams) -> Vec<f64> {
    let mut p = probabilities.to_vec();
    let num_qubits = p.len().trailing_zeros() as usize;
    let (e01, e10) = (noise.readout_p01, noise.readout_p10);
    for q in 0..num_qubits {
        let bit = 1 << q;
        for k in (0..p.len()).filter(|k| k & bit == 0) {
            let (p0, p1) = (p[k], p[k | bit]);
            p[k] = (1.0 - e01) * p0 + e10 * p1;
            p[k | bit] = e01 * p0 + (1.0 - e10) * p1;
        }
    }
    p
}

/// Observed outcome frequencies: exact readout-confused probabilities when
/// `shots == 0`, otherwise empirical frequencies of `shots` samples.
pub fn measured_frequencies(probabilities: &[f64], noise: &NoiseParams, shots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let confused = readout_probabilities(probabilities, noise);
    if shots == 0 {
        return Ok(confused);
    }
    let counts = sample_counts(&confused, shots, rng)?;
    Ok(counts.into_iter().map(|c| c as f64 / shots as f64).collect())
}

/// Readout outcome counts of `shots` measurements of a noisy state, keyed by
/// bitstring.
pub fn sample_noisy(rho: &DensityMatrix, noise: &NoiseParams, shots: usize, seed: u64) -> Result<BTreeMap<String, u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = sample_counts(&readout_probabilities(&rho.probabilities(), noise), shots, &mut rng)?;
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (bitstring(i, rho.num_qubits()), c))
        .collect())
}

/// Shot allotment per group: an even split, remainder to the first groups.
fn split_shots(shots: usize, groups: usize) -> Result<Vec<usize>> {
    if shots == 0 {
        return Ok(vec![0; groups]);
    }
    if shots < groups {
        return Err(invalid("shots", format!("{shots} shots cannot cover {groups} measurement bases")));
    }
    Ok((0..groups).map(|i| shots / groups + usize::from(i < shots % groups)).collect())
}

fn rotated_probabilities(prepared: &DensityMatrix, group: &MeasurementGroup, extra: &[Gate], noise: &NoiseParams) -> Result<Vec<f64>> {
    let mut rho = prepared.clone();
    let mut tail = Circuit::new(prepared.num_qubits())?;
    for g in group.rotation().into_iter().chain(extra.iter().cloned()) {
        tail.push(g)?;
    }
    run_noisy(&mut rho, &tail, noise)?;
    Ok(rho.probabilities())
}

fn noisy_expectation_rng(circuit: &Circuit, terms: &[PauliTerm], noise: &NoiseParams, shots: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let prepared = apply_noise(circuit, noise)?;
    let (offset, groups) = group_terms(terms);
    let allot = split_shots(shots, groups.len())?;
    let mut total = offset;
    for (g, &s) in groups.iter().zip(&allot) {
        let probs = rotated_probabilities(&prepared, g, &[], noise)?;
        total += g.evaluate(&measured_frequencies(&probs, noise, s, rng)?);
    }
    Ok(total)
}

/// `Σ c_i ⟨P_i⟩` on the noisy state prepared by `circuit`, with basis
/// rotations also subject to noise and readout error at measurement.
/// `shots == 0` gives the exact noisy expectation.
pub fn noisy_expectation(circuit: &Circuit, terms: &[PauliTerm], noise: &NoiseParams, shots: usize, seed: u64) -> Result<f64> {
    noisy_expectation_rng(circuit, terms, noise, shots, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `G (G†G)^{(λ-1)/2}` for odd `λ`.
pub fn fold_global(circuit: &Circuit, scale: usize) -> Result<Circuit> {
    if scale % 2 == 0 {
        return Err(invalid("scale_factors", format!("folding needs odd scale factors, got {scale}")));
    }
    let mut out = circuit.clone();
    let inverse = circuit.inverse();
    for _ in 0..(scale - 1) / 2 {
        out.append(&inverse)?;
        out.append(circuit)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    Linear,
    Quadratic,
}

impl Extrapolation {
    pub fn order(&self) -> usize {
        match self {
            Extrapolation::Linear => 1,
            Extrapolation::Quadratic => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZneConfig {
    pub scale_factors: Vec<usize>,
    pub extrapolation: Extrapolation,
}

impl Default for ZneConfig {
    fn default() -> Self {
        Self {
            scale_factors: vec![1, 3, 5],
            extrapolation: Extrapolation::Quadratic,
        }
    }
}

impl ZneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale_factors.first() != Some(&1) {
            return Err(invalid("scale_factors", "the first scale factor must be 1"));
        }
        if self.scale_factors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("scale_factors", "scale factors must be strictly increasing"));
        }
        if let Some(s) = self.scale_factors.iter().find(|s| *s % 2 == 0) {
            return Err(invalid("scale_factors", format!("scale factors must be odd, got {s}")));
        }
        let needed = self.extrapolation.order() + 1;
        if self.scale_factors.len() < needed {
            return Err(Error::ExtrapolationUnderdetermined {
                needed,
                got: self.scale_factors.len(),
            });
        }
        Ok(())
    }
}

/// Least-squares polynomial of degree `order` through `(λ_i, E_i)`,
/// evaluated at `λ = 0`.
pub fn extrapolate_to_zero(scales: &[f64], values: &[f64], order: usize) -> Result<f64> {
    if scales.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: scales.len(),
            actual: values.len(),
        });
    }
    if scales.len() < order + 1 {
        return Err(Error::ExtrapolationUnderdetermined {
            needed: order + 1,
            got: scales.len(),
        });
    }
    let v = DMatrix::from_fn(scales.len(), order + 1, |i, j| scales[i].powi(j as i32));
    let y = DVector::from_column_slice(values);
    let coeffs = v
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| invalid("scale_factors", e.to_string()))?;
    Ok(coeffs[0])
}

/// Expectations at each folded circuit, then extrapolated to zero noise.
pub fn zne_expectation(circuit: &Circuit, terms: &[PauliTerm], noise: &NoiseParams, zne: &ZneConfig, shots: usize, seed: u64) -> Result<f64> {
    zne.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(zne.scale_factors.len());
    for &s in &zne.scale_factors {
        values.push(noisy_expectation_rng(&fold_global(circuit, s)?, terms, noise, shots, &mut rng)?);
    }
    let scales: Vec<f64> = zne.scale_factors.iter().map(|&s| s as f64).collect();
    extrapolate_to_zero(&scales, &values, zne.extrapolation.order())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrexConfig {
    pub num_twirls: usize,
    pub calibration_shots: usize,
}

impl Default for TrexConfig {
    fn default() -> Self {
        Self {
            num_twirls: 16,
            calibration_shots: 8192,
        }
    }
}

impl TrexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_twirls == 0 {
            return Err(invalid("num_twirls", "at least one twirl is required"));
        }
        Ok(())
    }
}

/// Twirl masks and the shots each receives. Exact mode averages over every
/// mask; sampled mode draws `num_twirls` random masks.
fn twirl_plan(num_qubits: usize, num_twirls: usize, shots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    if shots == 0 {
        return Ok((0..1usize << num_qubits).map(|m| (m, 0)).collect());
    }
    let allot = split_shots(shots, num_twirls)?;
    Ok(allot
        .into_iter()
        .map(|s| (rng.random_range(0..1usize << num_qubits), s))
        .collect())
}

/// Parity estimates for every term in `group`, averaged over twirls, with
/// outcomes un-flipped by the twirl mask.
fn twirled_parities(
    prepared: &DensityMatrix,
    group: &MeasurementGroup,
    noise: &NoiseParams,
    plan: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let q = prepared.num_qubits();
    let mut sums = vec![0.0; group.terms.len()];
    let mut weight = 0.0;
    for &(mask, shots) in plan {
        let flips: Vec<Gate> = (0..q).filter(|b| mask >> b & 1 == 1).map(Gate::X).collect();
        let probs = rotated_probabilities(prepared, group, &flips, noise)?;
        let freqs = measured_frequencies(&probs, noise, shots, rng)?;
        let mut unflipped = vec![0.0; freqs.len()];
        for (k, f) in freqs.iter().enumerate() {
            unflipped[k ^ mask] += f;
        }
        let w = if shots == 0 { 1.0 } else { shots as f64 };
        for (acc, &(_, support)) in sums.iter_mut().zip(&group.terms) {
            *acc += w * parity_expectation(&unflipped, support);
        }
        weight += w;
    }
    Ok(sums.into_iter().map(|s| s / weight).collect())
}

/// `Z` on the qubits in `support`, `I` elsewhere.
fn z_word(support: usize, num_qubits: usize) -> String {
    (0..num_qubits)
        .rev()
        .map(|b| if support >> b & 1 == 1 { 'Z' } else { 'I' })
        .collect()
}

/// Twirled readout with calibration on `|0…0⟩`. Each term's twirled value
/// is divided by the twirled value of the same parity on the calibration
/// state.
pub fn trex_expectation(circuit: &Circuit, terms: &[PauliTerm], noise: &NoiseParams, trex: &TrexConfig, shots: usize, seed: u64) -> Result<f64> {
    trex.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = circuit.num_qubits();
    let prepared = apply_noise(circuit, noise)?;
    let blank = DensityMatrix::zero(q)?;
    let (offset, groups) = group_terms(terms);
    let allot = split_shots(shots, groups.len())?;
    let calibration_shots = if shots == 0 { 0 } else { trex.calibration_shots };
    let mut factors: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = offset;
    for (g, &s) in groups.iter().zip(&allot) {
        let plan = twirl_plan(q, trex.num_twirls, s, &mut rng)?;
        let raw = twirled_parities(&prepared, g, noise, &plan, &mut rng)?;
        for (value, &(c, support)) in raw.iter().zip(&g.terms) {
            let factor = match factors.get(&support) {
                Some(f) => *f,
                None => {
                    let cal_plan = twirl_plan(q, trex.num_twirls, calibration_shots, &mut rng)?;
                    let z_group = MeasurementGroup {
                        basis: PauliWord::parse(&"Z".repeat(q))?,
                        terms: vec![(1.0, support)],
                    };
                    let f = twirled_parities(&blank, &z_group, noise, &cal_plan, &mut rng)?[0];
                    factors.insert(support, f);
                    f
                }
            };
            if !(factor.abs() >= MIN_CALIBRATION_FACTOR) {
                return Err(Error::UnreliableCalibration {
                    word: z_word(support, q),
                    factor,
                });
            }
            total += c * value / factor;
        }
    }
    Ok(total)
}
