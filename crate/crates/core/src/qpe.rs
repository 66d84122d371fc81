//! Quantum phase estimation of the zero-mode.
//!
//! The query register holds the padded Hamiltonian's basis states on qubits
//! `0..m`; the precision register sits on qubits `m..m+t`. After the inverse
//! Fourier transform, reading `k` from the precision register means the phase
//! `k / 2^t` of `exp(iτH)`. The zero-mode sits in the all-zeros bin, and the
//! query distribution conditioned on that bin gives `|b_n|²`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fpe::FpeHamiltonian;
use crate::linalg::gershgorin_bound;
use crate::quantum::{
    bitstring, default_penalty, matrix_exponential_unitary, pad_hamiltonian, sample_counts, Circuit, Gate, PaddedHamiltonian,
    PhaseWrap, QuantumState, Statevector, C64, MAX_QUBITS,
};

/// Below this zero-bin weight the zero-mode counts as unresolved.
pub const MIN_ZERO_BIN_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeScale {
    /// `U = exp(iτH)` for this τ, phases wrapping modulo `2π`.
    Fixed(f64),
    /// `τ = π / g` with `g` the Gershgorin bound of the padded matrix. No
    /// wrapping, but low eigenvalues crowd into the zero bin.
    GershgorinPi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryInit {
    Uniform,
    /// Real amplitudes over the padded query register.
    State(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpeConfig {
    pub num_precision_qubits: usize,
    /// `0` means exact probabilities.
    pub shots: usize,
    pub time_scale: TimeScale,
    pub init_query_state: QueryInit,
    pub seed: u64,
}

impl Default for QpeConfig {
    fn default() -> Self {
        Self {
            num_precision_qubits: 7,
            shots: 8192,
            time_scale: TimeScale::Fixed(1.0),
            init_query_state: QueryInit::Uniform,
            seed: 0,
        }
    }
}

impl QpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_precision_qubits == 0 {
            return Err(invalid("num_precision_qubits", "at least one precision qubit is required"));
        }
        if let TimeScale::Fixed(tau) = self.time_scale {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(invalid("tau", format!("time scale must be positive and finite, got {tau}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpeResult {
    /// Precision-register outcomes: probabilities in exact mode, counts when
    /// sampled.
    pub phase_histogram: BTreeMap<String, f64>,
    /// Fraction of the weight in the zero-phase bin.
    pub zero_bin_weight: f64,
    /// Query-register distribution conditioned on the zero bin, over the
    /// padded register.
    pub query_distribution: Vec<f64>,
    /// `|b_n|` for the logical states.
    pub abs_amplitudes: Vec<f64>,
    /// `|b_n|` with signs copied from a classical reference, when one was
    /// supplied.
    pub signed_amplitudes: Option<Vec<f64>>,
    /// Conditional weight on padding states.
    pub padding_weight: f64,
    pub time_scale: f64,
    pub shots: usize,
}

/// Hadamards on the precision register, controlled powers of `u`, then the
/// inverse Fourier transform. The query state is prepared separately.
pub fn build_qpe_circuit(u: &DMatrix<C64>, num_precision_qubits: usize) -> Result<Circuit> {
    let dim = u.nrows();
    if dim != u.ncols() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: u.ncols(),
        });
    }
    if dim < 2 || !dim.is_power_of_two() {
        return Err(invalid("U", format!("dimension must be a power of two ≥ 2, got {dim}")));
    }
    let m = dim.trailing_zeros() as usize;
    let t = num_precision_qubits;
    if t == 0 {
        return Err(invalid("num_precision_qubits", "at least one precision qubit is required"));
    }
    let mut c = Circuit::new(m + t)?;
    for j in 0..t {
        c.push(Gate::H(m + j))?;
    }
    let mut power = u.clone();
    for j in 0..t {
        let mut controlled = DMatrix::identity(2 * dim, 2 * dim);
        controlled.view_mut((dim, dim), (dim, dim)).copy_from(&power);
        let targets: Vec<usize> = (0..m).chain(std::iter::once(m + j)).collect();
        c.push(Gate::unitary(targets, controlled)?)?;
        if j + 1 < t {
            power = &power * &power;
        }
    }
    let precision: Vec<usize> = (m..m + t).collect();
    c.append(&fourier_transform(m + t, &precision)?.inverse())?;
    Ok(c)
}

/// QFT on `qubits`, listed least significant first:
/// `|x⟩ → 2^{-t/2} Σ_y e^{2πixy/2^t} |y⟩`.
pub fn fourier_transform(num_qubits: usize, qubits: &[usize]) -> Result<Circuit> {
    let t = qubits.len();
    let mut c = Circuit::new(num_qubits)?;
    for a in (0..t).rev() {
        c.push(Gate::H(qubits[a]))?;
        for b in (0..a).rev() {
            c.push(Gate::CPhase {
                control: qubits[b],
                target: qubits[a],
                angle: PI / (1u64 << (a - b)) as f64,
            })?;
        }
    }
    for a in 0..t / 2 {
        c.push(Gate::Swap(qubits[a], qubits[t - 1 - a]))?;
    }
    Ok(c)
}

/// Joint outcome probabilities of QPE run from `query ⊗ |0…0⟩`.
pub fn qpe_probabilities(u: &DMatrix<C64>, query: &Statevector, num_precision_qubits: usize) -> Result<Vec<f64>> {
    if query.dim() != u.nrows() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            actual: query.dim(),
        });
    }
    if query.num_qubits() + num_precision_qubits > MAX_QUBITS {
        return Err(invalid("num_precision_qubits", format!("register would exceed {MAX_QUBITS} qubits")));
    }
    let circuit = build_qpe_circuit(u, num_precision_qubits)?;
    let mut state = query.tensor_low(&Statevector::zero(num_precision_qubits)?)?;
    state.apply_circuit(&circuit)?;
    Ok(state.probabilities())
}

/// Smallest penalty `≥ floor` whose phase `τ·penalty` is `π` modulo `2π`,
/// so padding states land in the bin opposite the zero bin.
fn aligned_penalty(floor: f64, tau: f64) -> f64 {
    let period = 2.0 * PI / tau;
    let k = ((floor * tau - PI) / (2.0 * PI)).ceil().max(0.0);
    (PI / tau) + k * period
}

fn padded_for_qpe(h: &FpeHamiltonian, scale: TimeScale) -> Result<(PaddedHamiltonian, f64, PhaseWrap)> {
    let floor = default_penalty(h);
    match scale {
        TimeScale::Fixed(tau) => {
            let needs_padding = !h.dim().is_power_of_two() || h.dim() == 1;
            let penalty = if needs_padding { aligned_penalty(floor, tau) } else { floor };
            Ok((pad_hamiltonian(h, penalty)?, tau, PhaseWrap::Allow))
        }
        TimeScale::GershgorinPi => {
            let padded = pad_hamiltonian(h, floor)?;
            let tau = PI / gershgorin_bound(&padded.matrix);
            Ok((padded, tau, PhaseWrap::Reject))
        }
    }
}

/// Copy signs from `reference` onto magnitudes.
pub fn apply_signs(magnitudes: &[f64], reference: &[f64]) -> Vec<f64> {
    magnitudes
        .iter()
        .zip(reference)
        .map(|(m, r)| if *r < 0.0 { -m } else { *m })
        .collect()
}

/// Run QPE on `H` and read `|b_n|` from the zero-phase bin.
pub fn qpe_zero_mode(h: &FpeHamiltonian, config: &QpeConfig, sign_reference: Option<&[f64]>) -> Result<QpeResult> {
    config.validate()?;
    let (padded, tau, wrap) = padded_for_qpe(h, config.time_scale)?;
    let m = padded.num_qubits;
    let t = config.num_precision_qubits;
    let u = matrix_exponential_unitary(&padded.matrix, tau, wrap)?;
    let query = match &config.init_query_state {
        QueryInit::Uniform => Statevector::uniform(m)?,
        QueryInit::State(amps) => {
            if amps.len() != 1 << m {
                return Err(Error::DimensionMismatch {
                    expected: 1 << m,
                    actual: amps.len(),
                });
            }
            Statevector::from_real(amps)?
        }
    };
    let joint = qpe_probabilities(&u, &query, t)?;
    let weights: Vec<f64> = if config.shots == 0 {
        joint
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        sample_counts(&joint, config.shots, &mut rng)?.into_iter().map(|c| c as f64).collect()
    };
    let query_dim = 1usize << m;
    let mut phase_histogram = BTreeMap::new();
    for (idx, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            *phase_histogram.entry(bitstring(idx >> m, t)).or_insert(0.0) += w;
        }
    }
    let total: f64 = weights.iter().sum();
    let zero_bin: Vec<f64> = weights[..query_dim].to_vec();
    let zero_total: f64 = zero_bin.iter().sum();
    let zero_bin_weight = zero_total / total;
    if zero_bin_weight < MIN_ZERO_BIN_WEIGHT {
        return Err(Error::ZeroModeNotResolved {
            fraction: zero_bin_weight,
        });
    }
    let query_distribution: Vec<f64> = zero_bin.iter().map(|w| w / zero_total).collect();
    let n = padded.logical_dim;
    let abs_amplitudes: Vec<f64> = query_distribution[..n].iter().map(|p| p.sqrt()).collect();
    let padding_weight = query_distribution[n..].iter().sum();
    let signed_amplitudes = match sign_reference {
        Some(r) if r.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.len(),
            })
        }
        Some(r) => Some(apply_signs(&abs_amplitudes, r)),
        None => None,
    };
    Ok(QpeResult {
        phase_histogram,
        zero_bin_weight,
        query_distribution,
        abs_amplitudes,
        signed_amplitudes,
        padding_weight,
        time_scale: tau,
        shots: config.shots,
    })
}
