//! Harmonic-oscillator (Hermite function) basis.
//!
//! Basis functions use the orthonormal convention
//!
//! ```text
//! φ_n(x) = H_n(x/ℓ) exp(-x²/2ℓ²) / (π^{1/4} √(2ⁿ n! ℓ))
//! ```
//!
//! so that `∫ φ_m φ_n dx = δ_mn` for every length scale `ℓ`. The ladder
//! operators act as `a|n⟩ = √n |n-1⟩` and `a†|n⟩ = √(n+1) |n+1⟩`, giving
//! `x = ℓ(a + a†)/√2` and `d/dx = (a - a†)/(√2 ℓ)`.
//!
//! Only even indices carry the symmetric steady state. The operator matrices
//! are nevertheless built over all indices `0..2N + headroom`, because odd
//! states appear as intermediates in products such as `D·X`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Extra indices kept above the even block so that products up to `D·X³`
/// are exact on that block.
pub const DEFAULT_HEADROOM: usize = 4;

/// A truncated basis: `num_even_states` even functions `φ_0, φ_2, …, φ_{2N-2}`
/// with length scale `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    num_even_states: usize,
    length_scale: f64,
    headroom: usize,
}

impl BasisSpec {
    pub fn new(num_even_states: usize, length_scale: f64) -> Result<Self> {
        Self::with_headroom(num_even_states, length_scale, DEFAULT_HEADROOM)
    }

    pub fn with_headroom(num_even_states: usize, length_scale: f64, headroom: usize) -> Result<Self> {
        if num_even_states == 0 {
            return Err(invalid("N", "number of even basis states must be at least 1"));
        }
        if !(length_scale > 0.0) || !length_scale.is_finite() {
            return Err(invalid("ell", format!("length scale must be positive, got {length_scale}")));
        }
        Ok(Self {
            num_even_states,
            length_scale,
            headroom,
        })
    }

    pub fn num_even_states(&self) -> usize {
        self.num_even_states
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn headroom(&self) -> usize {
        self.headroom
    }

    /// Size `M = 2N + headroom` of the full (even and odd) working space.
    pub fn full_dimension(&self) -> usize {
        2 * self.num_even_states + self.headroom
    }

    /// The even basis indices `0, 2, …, 2N-2`.
    pub fn even_indices(&self) -> impl Iterator<Item = usize> {
        (0..self.num_even_states).map(|k| 2 * k)
    }
}

/// Ladder, position and derivative matrices over the full working space.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    pub lower: DMatrix<f64>,
    pub raise: DMatrix<f64>,
    pub position: DMatrix<f64>,
    pub derivative: DMatrix<f64>,
}

impl OperatorMatrices {
    pub fn dimension(&self) -> usize {
        self.lower.nrows()
    }
}

pub fn build_operator_matrices(spec: &BasisSpec) -> OperatorMatrices {
    let m = spec.full_dimension();
    let ell = spec.length_scale();
    let mut lower = DMatrix::<f64>::zeros(m, m);
    for n in 1..m {
        lower[(n - 1, n)] = (n as f64).sqrt();
    }
    let raise = lower.transpose();
    let position = (&lower + &raise) * (ell / std::f64::consts::SQRT_2);
    let derivative = (&lower - &raise) * (1.0 / (std::f64::consts::SQRT_2 * ell));
    OperatorMatrices {
        lower,
        raise,
        position,
        derivative,
    }
}

/// Physicists' Hermite polynomial `H_n(y)` by the three-term recurrence
/// `H_{k+1} = 2y H_k - 2k H_{k-1}`.
pub fn hermite_polynomial(n: usize, y: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * y;
    for k in 1..n {
        let next = 2.0 * y * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(2ⁿ n!)`, accumulated term by term.
fn ln_norm_factor(n: usize) -> f64 {
    (1..=n).map(|k| (2.0 * k as f64).ln()).sum()
}

/// Evaluate `φ_n(x)` for even `n`.
pub fn eval_basis(n: usize, length_scale: f64, x: f64) -> Result<f64> {
    if n % 2 != 0 {
        return Err(invalid("n", format!("basis index must be even, got {n}")));
    }
    if !(length_scale > 0.0) {
        return Err(invalid("ell", "length scale must be positive"));
    }
    Ok(hermite_function(n, length_scale, x))
}

/// `φ_n(x)` for any `n` (odd indices allowed). Used by the quadrature oracles.
pub fn hermite_function(n: usize, length_scale: f64, x: f64) -> f64 {
    hermite_polynomial(n, x / length_scale) * envelope(n, length_scale, x)
}

/// `φ_n(x) / H_n(x/ℓ)`: the Gaussian factor times the normalization.
pub(crate) fn envelope(n: usize, length_scale: f64, x: f64) -> f64 {
    let y = x / length_scale;
    (-0.25 * std::f64::consts::PI.ln() - 0.5 * (ln_norm_factor(n) + length_scale.ln()) - 0.5 * y * y).exp()
}

/// `∫ φ_n dx` and `∫ x² φ_n dx` for the even basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisIntegrals {
    pub norm_integrals: Vec<f64>,
    pub second_moment_integrals: Vec<f64>,
}

impl BasisIntegrals {
    /// `I_n` for a general index; zero for odd `n`.
    pub fn norm_integral(&self, n: usize) -> f64 {
        if n % 2 == 1 {
            0.0
        } else {
            self.norm_integrals.get(n / 2).copied().unwrap_or(0.0)
        }
    }

    /// `J_n` for a general index; zero for odd `n`.
    pub fn second_moment_integral(&self, n: usize) -> f64 {
        if n % 2 == 1 {
            0.0
        } else {
            self.second_moment_integrals.get(n / 2).copied().unwrap_or(0.0)
        }
    }
}

/// Closed forms from the generating function of `H_n`:
///
/// ```text
/// ∫ H_{2k}(y) e^{-y²/2} dy       = √(2π) (2k)!/k!
/// ∫ y² H_{2k}(y) e^{-y²/2} dy    = √(2π) (2k)!/k! · (1 + 4k)
/// ```
///
/// After normalization the ratio `I_{n+2}/I_n = √((n+1)/(n+2))`, so the
/// integrals are generated without any factorials. `J_n = ℓ² (1 + 2n) I_n`.
pub fn basis_integrals(spec: &BasisSpec) -> BasisIntegrals {
    let ell = spec.length_scale();
    let n_even = spec.num_even_states();
    let mut norm_integrals = Vec::with_capacity(n_even);
    let mut current = (2.0 * std::f64::consts::PI).sqrt() * ell.sqrt() / std::f64::consts::PI.powf(0.25);
    for k in 0..n_even {
        let n = 2 * k;
        norm_integrals.push(current);
        current *= ((n + 1) as f64 / (n + 2) as f64).sqrt();
    }
    let second_moment_integrals = norm_integrals
        .iter()
        .enumerate()
        .map(|(k, i_n)| ell * ell * (1.0 + 4.0 * k as f64) * i_n)
        .collect();
    BasisIntegrals {
        norm_integrals,
        second_moment_integrals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn small_operator_entries() {
        let spec = BasisSpec::with_headroom(1, 1.0, 2).unwrap();
        let ops = build_operator_matrices(&spec);
        assert_eq!(ops.dimension(), 4);
        assert_eq!(ops.lower[(0, 1)], 1.0);
        assert_eq!(ops.lower[(1, 2)], SQRT_2);
        assert!((ops.position[(0, 1)] - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((ops.position[(1, 0)] - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((ops.derivative[(0, 1)] - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((ops.derivative[(1, 0)] + 1.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(ops.raise, ops.lower.transpose());
    }

    #[test]
    fn ground_state_second_moment() {
        let spec = BasisSpec::new(3, 1.0).unwrap();
        let ops = build_operator_matrices(&spec);
        let xx = &ops.position * &ops.position;
        assert!((xx[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn commutator_is_identity_away_from_edge() {
        let spec = BasisSpec::new(4, 0.7).unwrap();
        let ops = build_operator_matrices(&spec);
        let comm = &ops.lower * &ops.raise - &ops.raise * &ops.lower;
        let m = ops.dimension();
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((comm[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetry_structure() {
        let spec = BasisSpec::new(5, 0.5).unwrap();
        let ops = build_operator_matrices(&spec);
        assert_eq!(ops.position, ops.position.transpose());
        assert_eq!(ops.derivative, -ops.derivative.transpose());
        let m = ops.dimension();
        for i in 0..m {
            for j in 0..m {
                if i.abs_diff(j) != 1 {
                    assert_eq!(ops.position[(i, j)], 0.0);
                    assert_eq!(ops.derivative[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn basis_values() {
        assert!((eval_basis(0, 1.0, 0.0).unwrap() - PI.powf(-0.25)).abs() < 1e-15);
        let expect = -2.0 / (PI.powf(0.25) * 8f64.sqrt());
        assert!((eval_basis(2, 1.0, 0.0).unwrap() - expect).abs() < 1e-15);
        // Reference from an independent 40-digit evaluation (mpmath.hermite).
        let v = eval_basis(12, 0.5, 0.7).unwrap();
        assert!((v - 0.416_845_112_427_884_345_4).abs() < 1e-13, "{v}");
    }

    #[test]
    fn rejects_odd_and_bad_scale() {
        assert!(eval_basis(3, 1.0, 0.0).is_err());
        assert!(eval_basis(2, 0.0, 0.0).is_err());
        assert!(BasisSpec::new(0, 1.0).is_err());
        assert!(BasisSpec::new(2, -1.0).is_err());
        assert!(BasisSpec::new(2, f64::NAN).is_err());
    }

    #[test]
    fn even_parity_is_exact() {
        for n in (0..30).step_by(2) {
            for &x in &[0.1, 0.77, 1.3, 2.9] {
                assert_eq!(eval_basis(n, 0.5, x).unwrap(), eval_basis(n, 0.5, -x).unwrap());
            }
        }
    }

    #[test]
    fn integral_closed_forms() {
        let spec = BasisSpec::new(6, 0.5).unwrap();
        let ints = basis_integrals(&spec);
        assert!((ints.second_moment_integrals[0] / ints.norm_integrals[0] - 0.25).abs() < 1e-15);
        assert_eq!(ints.norm_integral(3), 0.0);
        assert_eq!(ints.second_moment_integral(5), 0.0);

        let spec1 = BasisSpec::new(1, 1.0).unwrap();
        // Reference: adaptive quadrature of φ_0 over [-12, 12].
        assert!((basis_integrals(&spec1).norm_integrals[0] - 1.882_792_527_553_429_6).abs() < 1e-12);
    }

    #[test]
    fn integrals_match_quadrature() {
        for &ell in &[0.5, 1.0, 1.7] {
            let spec = BasisSpec::new(24, ell).unwrap();
            let ints = basis_integrals(&spec);
            let r = 12.0 * ell * (2.0 * 24.0f64).sqrt();
            for (k, n) in spec.even_indices().enumerate() {
                let i_n = quad::integrate_split(|x| hermite_function(n, ell, x), -r, r, 16, 1e-13).unwrap();
                let j_n = quad::integrate_split(|x| x * x * hermite_function(n, ell, x), -r, r, 16, 1e-13).unwrap();
                assert!((i_n - ints.norm_integrals[k]).abs() < 1e-12, "I_{n} ell={ell}");
                let j_ref = ints.second_moment_integrals[k];
                assert!((j_n - j_ref).abs() < 1e-13 * j_ref.abs().max(10.0), "J_{n} ell={ell}");
            }
        }
    }

    #[test]
    fn orthonormality() {
        let ell = 0.5;
        let n_even = 12;
        let r = 12.0 * ell * (2.0 * n_even as f64).sqrt();
        for m in (0..2 * n_even).step_by(2) {
            for n in (m..2 * n_even).step_by(2) {
                let v = quad::integrate_split(
                    |x| hermite_function(m, ell, x) * hermite_function(n, ell, x),
                    -r,
                    r,
                    16,
                    1e-13,
                )
                .unwrap();
                let expect = if m == n { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "<{m}|{n}> = {v}");
            }
        }
    }

    #[test]
    fn operators_match_quadrature() {
        let ell = 0.8;
        let spec = BasisSpec::new(5, ell).unwrap();
        let ops = build_operator_matrices(&spec);
        let top = ops.dimension() - spec.headroom();
        let r = 12.0 * ell * (2.0 * top as f64).sqrt();
        // d/dx φ_n via H_n' = 2n H_{n-1}, independent of the ladder algebra.
        let dphi = |n: usize, x: f64| {
            let y = x / ell;
            let dh = if n == 0 { 0.0 } else { 2.0 * n as f64 * hermite_polynomial(n - 1, y) };
            let h = hermite_polynomial(n, y);
            (dh - y * h) * envelope(n, ell, x) / ell
        };
        for m in 0..top {
            for n in 0..top {
                let x_mn = quad::integrate_split(
                    |x| hermite_function(m, ell, x) * x * hermite_function(n, ell, x),
                    -r,
                    r,
                    8,
                    1e-13,
                )
                .unwrap();
                let d_mn =
                    quad::integrate_split(|x| hermite_function(m, ell, x) * dphi(n, x), -r, r, 8, 1e-13).unwrap();
                assert!((x_mn - ops.position[(m, n)]).abs() < 1e-10, "X[{m},{n}]");
                assert!((d_mn - ops.derivative[(m, n)]).abs() < 1e-10, "D[{m},{n}]");
            }
        }
    }
}
