//! Variational search for the zero-mode.
//!
//! A real-amplitude ansatz of `RY` layers joined by `CX` ladders is tuned
//! to minimize `⟨ψ(θ)|H|ψ(θ)⟩` on the padded Hamiltonian. The cost can be
//! exact, shot-sampled, or evaluated on the noisy density-matrix simulator
//! with optional mitigation. Whatever the cost model, the final amplitudes
//! are read from the ideal statevector at the optimum.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fpe::FpeHamiltonian;
use crate::hermite::basis_integrals;
use crate::noise::{noisy_expectation, trex_expectation, zne_expectation, NoiseParams, TrexConfig, ZneConfig};
use crate::quantum::{
    default_penalty, group_terms, pad_hamiltonian, pauli_decompose, sample_counts, Circuit, Gate, PauliTerm, QuantumState, Statevector,
};

/// Leakage into padding states above this is flagged.
pub const LEAKAGE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entanglement {
    /// `CX(i → i+1)` for each neighbouring pair.
    Linear,
    /// `CX(i → j)` for every `i < j`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    pub reps: usize,
    pub entanglement: Entanglement,
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, reps: usize) -> Self {
        Self {
            num_qubits,
            reps,
            entanglement: Entanglement::Linear,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.num_qubits * (self.reps + 1)
    }
}

/// `RY` column, then `reps` times an entangling block and another `RY`
/// column. Parameter `l·q + i` drives qubit `i` in column `l`.
pub fn build_ansatz(spec: &AnsatzSpec, theta: &[f64]) -> Result<Circuit> {
    if theta.len() != spec.num_parameters() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_parameters(),
            actual: theta.len(),
        });
    }
    let q = spec.num_qubits;
    let mut c = Circuit::new(q)?;
    for layer in 0..=spec.reps {
        if layer > 0 {
            for i in 0..q {
                let targets: Vec<usize> = match spec.entanglement {
                    Entanglement::Linear => (i + 1..(i + 2).min(q)).collect(),
                    Entanglement::Full => (i + 1..q).collect(),
                };
                for j in targets {
                    c.push(Gate::Cx { control: i, target: j })?;
                }
            }
        }
        for i in 0..q {
            c.push(Gate::Ry {
                target: i,
                angle: theta[layer * q + i],
            })?;
        }
    }
    Ok(c)
}

/// `Σ c_i ⟨ψ|P_i|ψ⟩`: exact when `shots == 0`, otherwise measured with
/// shots split evenly over the measurement bases.
pub fn expectation(terms: &[PauliTerm], state: &Statevector, shots: usize, seed: u64) -> Result<f64> {
    if shots == 0 {
        return Ok(state.expectation(terms));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampled_expectation(terms, state, shots, &mut rng)
}

fn sampled_expectation(terms: &[PauliTerm], state: &Statevector, shots: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (offset, groups) = group_terms(terms);
    if shots < groups.len() {
        return Err(invalid("shots", format!("{shots} shots cannot cover {} measurement bases", groups.len())));
    }
    let mut total = offset;
    for (i, g) in groups.iter().enumerate() {
        let s = shots / groups.len() + usize::from(i < shots % groups.len());
        let mut rotated = state.clone();
        for gate in g.rotation() {
            rotated.apply_gate(&gate)?;
        }
        let counts = sample_counts(&rotated.probabilities(), s, rng)?;
        let freqs: Vec<f64> = counts.into_iter().map(|c| c as f64 / s as f64).collect();
        total += g.evaluate(&freqs);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mitigation {
    None,
    Zne(ZneConfig),
    Trex(TrexConfig),
}

/// SPSA gains. `a = None` calibrates the step from a gradient probe;
/// `stability = None` uses a tenth of the iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaConfig {
    pub a: Option<f64>,
    pub c: f64,
    pub stability: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    /// Size of the first update step after calibration.
    pub target_step: f64,
    pub calibration_steps: usize,
    /// Reject updates that raise the objective (one extra evaluation per
    /// iteration).
    pub blocking: bool,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: None,
            c: 0.1,
            stability: None,
            alpha: 0.602,
            gamma: 0.101,
            target_step: 2.0,
            calibration_steps: 25,
            blocking: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImfilConfig {
    pub lower: f64,
    pub upper: f64,
    pub initial_mesh: f64,
    pub min_mesh: f64,
    pub max_backtracks: usize,
}

impl Default for ImfilConfig {
    fn default() -> Self {
        Self {
            lower: -PI,
            upper: PI,
            initial_mesh: 0.5,
            min_mesh: 1e-3,
            max_backtracks: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Spsa(SpsaConfig),
    /// Implicit filtering; `max_iterations` is then the evaluation budget.
    Imfil(ImfilConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeConfig {
    pub optimizer: Optimizer,
    pub max_iterations: usize,
    /// `0` means exact expectations.
    pub shots: usize,
    pub seed: u64,
    /// Gate and readout noise; `None` uses the ideal statevector.
    pub noise: Option<NoiseParams>,
    pub mitigation: Mitigation,
    /// Padding penalty; `None` means twice the Gershgorin bound.
    pub penalty: Option<f64>,
}

impl Default for VqeConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Spsa(SpsaConfig::default()),
            max_iterations: 500,
            shots: 0,
            seed: 0,
            noise: None,
            mitigation: Mitigation::None,
            penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub theta: Vec<f64>,
    /// Objective estimate at the returned point.
    pub value: f64,
    pub energy_trace: Vec<f64>,
    pub evaluations: usize,
}

fn bernoulli(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

fn shifted(theta: &[f64], delta: &[f64], scale: f64) -> Vec<f64> {
    theta.iter().zip(delta).map(|(t, d)| t + scale * d).collect()
}

/// Two-point simultaneous-perturbation descent. The trace holds
/// `(f₊ + f₋)/2` per iteration; the best iterate and the last one are
/// re-evaluated and the lower is returned. With `blocking` a step is kept
/// only if the objective at the new point does not rise.
pub fn spsa_minimize<F>(mut cost: F, theta0: &[f64], max_iterations: usize, config: &SpsaConfig, seed: u64) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if max_iterations == 0 {
        return Err(invalid("max_iterations", "at least one iteration is required"));
    }
    if !(config.c > 0.0) || config.a.is_some_and(|a| !(a > 0.0)) {
        return Err(invalid("spsa", "gains must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = theta0.len();
    let stability = config.stability.unwrap_or(0.1 * max_iterations as f64);
    let mut evaluations = 0;
    let a = match config.a {
        Some(a) => a,
        None => {
            let steps = config.calibration_steps.max(1);
            let mut magnitude = 0.0;
            for _ in 0..steps {
                let delta = bernoulli(dim, &mut rng);
                let plus = cost(&shifted(theta0, &delta, config.c))?;
                let minus = cost(&shifted(theta0, &delta, -config.c))?;
                evaluations += 2;
                magnitude += ((plus - minus) / (2.0 * config.c)).abs();
            }
            magnitude /= steps as f64;
            let scale = (stability + 1.0).powf(config.alpha);
            if magnitude > 1e-10 {
                config.target_step * scale / magnitude
            } else {
                config.target_step * scale
            }
        }
    };
    let mut theta = theta0.to_vec();
    let mut trace = Vec::with_capacity(max_iterations);
    let mut best = (f64::INFINITY, theta.clone());
    let mut current = if config.blocking {
        evaluations += 1;
        cost(&theta)?
    } else {
        f64::NAN
    };
    for k in 0..max_iterations {
        let ak = a / (stability + k as f64 + 1.0).powf(config.alpha);
        let ck = config.c / (k as f64 + 1.0).powf(config.gamma);
        let delta = bernoulli(dim, &mut rng);
        let plus = cost(&shifted(&theta, &delta, ck))?;
        let minus = cost(&shifted(&theta, &delta, -ck))?;
        evaluations += 2;
        let estimate = 0.5 * (plus + minus);
        if !estimate.is_finite() {
            return Err(invalid("cost", format!("non-finite objective at iteration {k}")));
        }
        trace.push(estimate);
        if estimate < best.0 {
            best = (estimate, theta.clone());
        }
        let g = (plus - minus) / (2.0 * ck);
        let next: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ak * g * d).collect();
        if config.blocking {
            let value = cost(&next)?;
            evaluations += 1;
            if value <= current {
                current = value;
                theta = next;
            }
        } else {
            theta = next;
        }
    }
    let final_value = cost(&theta)?;
    let best_value = cost(&best.1)?;
    evaluations += 2;
    let (value, theta) = if best_value < final_value { (best_value, best.1) } else { (final_value, theta) };
    Ok(OptimizeResult {
        theta,
        value,
        energy_trace: trace,
        evaluations,
    })
}

/// Implicit filtering on a box: central differences on a mesh `h`, a
/// projected backtracking line search along the negative stencil gradient,
/// and `h` halved whenever the stencil finds no improvement. Stops when the
/// mesh drops below `min_mesh` or `budget` evaluations are spent.
pub fn imfil_minimize<F>(mut cost: F, theta0: &[f64], config: &ImfilConfig, budget: usize) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(config.upper > config.lower) || !(config.initial_mesh > 0.0) || !(config.min_mesh > 0.0) {
        return Err(invalid("imfil", "bounds must be ordered and mesh sizes positive"));
    }
    let width = config.upper - config.lower;
    let project = |x: f64| x.clamp(config.lower, config.upper);
    let mut x: Vec<f64> = theta0.iter().map(|&t| project(t)).collect();
    let mut fx = cost(&x)?;
    let mut evaluations = 1;
    let mut h = config.initial_mesh;
    let mut trace = Vec::new();
    while h >= config.min_mesh && evaluations + 2 * x.len() <= budget {
        let step = h * width;
        let mut grad = vec![0.0; x.len()];
        let mut best_stencil = (fx, None);
        for i in 0..x.len() {
            let mut values = [0.0; 2];
            let mut spots = [0.0; 2];
            for (slot, sign) in [1.0, -1.0].iter().enumerate() {
                let mut y = x.clone();
                y[i] = project(x[i] + sign * step);
                let fy = cost(&y)?;
                evaluations += 1;
                if fy < best_stencil.0 {
                    best_stencil = (fy, Some(y.clone()));
                }
                values[slot] = fy;
                spots[slot] = y[i];
            }
            let span = spots[0] - spots[1];
            grad[i] = if span > 0.0 { (values[0] - values[1]) / span } else { 0.0 };
        }
        let Some(stencil_point) = best_stencil.1 else {
            h *= 0.5;
            trace.push(fx);
            continue;
        };
        // Line search from a full mesh-scaled step down.
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut accepted = None;
        if gnorm > 0.0 {
            let mut lambda = 1.0;
            for _ in 0..config.max_backtracks {
                if evaluations >= budget {
                    break;
                }
                let y: Vec<f64> = x.iter().zip(&grad).map(|(xi, g)| project(xi - lambda * g)).collect();
                let fy = cost(&y)?;
                evaluations += 1;
                if fy < best_stencil.0 {
                    accepted = Some((y, fy));
                    break;
                }
                lambda *= 0.5;
            }
        }
        match accepted {
            Some((y, fy)) => {
                x = y;
                fx = fy;
            }
            None => {
                x = stencil_point;
                fx = best_stencil.0;
            }
        }
        trace.push(fx);
    }
    Ok(OptimizeResult {
        theta: x,
        value: fx,
        energy_trace: trace,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeResult {
    pub theta_opt: Vec<f64>,
    pub energy_trace: Vec<f64>,
    /// Ideal statevector at `theta_opt`, global phase fixed.
    pub final_state: Statevector,
    /// Real amplitudes of the logical states, unit-norm over the full
    /// register and signed so that the density integrates positively.
    pub amplitudes: Vec<f64>,
    /// Weight on padding states.
    pub leakage: f64,
    pub leakage_exceeded: bool,
    /// Exact `⟨H⟩` of the ideal final state.
    pub final_energy: f64,
    /// The cost model's estimate at `theta_opt`.
    pub estimated_energy: f64,
    pub evaluations: usize,
}

/// Cost model for one VQE run.
struct Estimator<'a> {
    spec: AnsatzSpec,
    terms: &'a [PauliTerm],
    shots: usize,
    noise: Option<NoiseParams>,
    mitigation: &'a Mitigation,
    rng: ChaCha8Rng,
}

impl Estimator<'_> {
    fn estimate(&mut self, theta: &[f64]) -> Result<f64> {
        let circuit = build_ansatz(&self.spec, theta)?;
        let noisy = self.noise.is_some() || *self.mitigation != Mitigation::None;
        if !noisy {
            let mut psi = Statevector::zero(self.spec.num_qubits)?;
            psi.apply_circuit(&circuit)?;
            return if self.shots == 0 {
                Ok(psi.expectation(self.terms))
            } else {
                sampled_expectation(self.terms, &psi, self.shots, &mut self.rng)
            };
        }
        let noise = self.noise.unwrap_or_else(NoiseParams::noiseless);
        let seed = self.rng.random();
        match self.mitigation {
            Mitigation::None => noisy_expectation(&circuit, self.terms, &noise, self.shots, seed),
            Mitigation::Zne(z) => zne_expectation(&circuit, self.terms, &noise, z, self.shots, seed),
            Mitigation::Trex(t) => trex_expectation(&circuit, self.terms, &noise, t, self.shots, seed),
        }
    }
}

/// Stream ids carved out of one seed so the initial point, the optimizer
/// and the shot noise draw from independent generators.
const STREAM_INIT: u64 = 0;
const STREAM_OPTIMIZER: u64 = 1;
const STREAM_ESTIMATOR: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Optimize the ansatz against `H` and read out the zero-mode amplitudes.
pub fn run_vqe(h: &FpeHamiltonian, ansatz: &AnsatzSpec, config: &VqeConfig) -> Result<VqeResult> {
    if config.max_iterations == 0 {
        return Err(invalid("max_iterations", "at least one iteration is required"));
    }
    if let Some(n) = &config.noise {
        n.validate()?;
    }
    let penalty = config.penalty.unwrap_or_else(|| default_penalty(h));
    let padded = pad_hamiltonian(h, penalty)?;
    if ansatz.num_qubits != padded.num_qubits {
        return Err(Error::DimensionMismatch {
            expected: padded.num_qubits,
            actual: ansatz.num_qubits,
        });
    }
    let terms = pauli_decompose(&padded.matrix)?;
    let mut init = stream(config.seed, STREAM_INIT);
    let theta0: Vec<f64> = (0..ansatz.num_parameters()).map(|_| init.random_range(-PI..=PI)).collect();
    let mut estimator = Estimator {
        spec: *ansatz,
        terms: &terms,
        shots: config.shots,
        noise: config.noise,
        mitigation: &config.mitigation,
        rng: stream(config.seed, STREAM_ESTIMATOR),
    };
    let outcome = match &config.optimizer {
        Optimizer::Spsa(s) => {
            let seed = stream(config.seed, STREAM_OPTIMIZER).random();
            spsa_minimize(|t| estimator.estimate(t), &theta0, config.max_iterations, s, seed)?
        }
        Optimizer::Imfil(c) => imfil_minimize(|t| estimator.estimate(t), &theta0, c, config.max_iterations)?,
    };

    let mut state = Statevector::zero(ansatz.num_qubits)?;
    state.apply_circuit(&build_ansatz(ansatz, &outcome.theta)?)?;
    state.fix_global_phase();
    let real: Vec<f64> = state.amplitudes().iter().map(|a| a.re).collect();
    let n = padded.logical_dim;
    let leakage: f64 = real[n..].iter().map(|a| a * a).sum();
    let mut amplitudes = real[..n].to_vec();
    let functional: f64 = match &h.source {
        Some(l) => {
            let ints = basis_integrals(&l.basis);
            amplitudes.iter().zip(&ints.norm_integrals).map(|(b, i)| b * i).sum()
        }
        None => amplitudes.iter().sum(),
    };
    if functional < 0.0 {
        amplitudes.iter_mut().for_each(|b| *b = -*b);
    }
    let final_energy = state.expectation(&terms);
    Ok(VqeResult {
        theta_opt: outcome.theta,
        energy_trace: outcome.energy_trace,
        final_state: state,
        amplitudes,
        leakage,
        leakage_exceeded: leakage > LEAKAGE_THRESHOLD,
        final_energy,
        estimated_energy: outcome.value,
        evaluations: outcome.evaluations,
    })
}
