//! Classical zero-mode extraction: diagonalize `H`, fix the sign and L1
//! normalization of the ground state, and rebuild the density on a grid.

use crate::error::{Error, Result};
use crate::fpe::{build_fpe_matrix, build_hamiltonian, FpeHamiltonian, FpeMatrix, ModelParams};
use crate::hermite::{basis_integrals, hermite_function, BasisIntegrals, BasisSpec};
pub use crate::linalg::EigenDecomposition;
use crate::linalg::symmetric_eigen;

/// Points in the default reconstruction grid on `[-2, 2]`.
pub const DEFAULT_GRID_POINTS: usize = 401;

/// Amplitudes `b_n` over the even basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMode {
    pub amplitudes: Vec<f64>,
    pub eigenvalue: f64,
    /// Set once `Σ b_n I_n = 1` has been imposed.
    pub normalized: bool,
}

impl ZeroMode {
    /// Wrap externally obtained amplitudes (QPE, VQE) as an unnormalized mode.
    pub fn raw(amplitudes: Vec<f64>, eigenvalue: f64) -> Self {
        Self {
            amplitudes,
            eigenvalue,
            normalized: false,
        }
    }

    /// `Σ b_n I_n`, i.e. `⟨1⟩`.
    pub fn l1_functional(&self, integrals: &BasisIntegrals) -> f64 {
        self.amplitudes
            .iter()
            .zip(&integrals.norm_integrals)
            .map(|(b, i)| b * i)
            .sum()
    }
}

pub fn eigendecompose(h: &FpeHamiltonian) -> Result<EigenDecomposition> {
    symmetric_eigen(&h.entries)
}

/// Ground state of `H`, before any normalization.
pub fn solve_zero_mode(h: &FpeHamiltonian) -> Result<ZeroMode> {
    let eig = eigendecompose(h)?;
    if eig.dim() >= 2 {
        let gap = eig.values[1] - eig.values[0];
        let threshold = 1e-12 * h.entries.norm();
        if gap < threshold {
            return Err(Error::DegenerateZeroMode { gap, threshold });
        }
    }
    Ok(ZeroMode::raw(eig.vector(0), eig.values[0]))
}

/// Flip the sign if needed and scale so that `Σ b_n I_n = 1`.
pub fn normalize_zero_mode(raw: &ZeroMode, integrals: &BasisIntegrals) -> Result<ZeroMode> {
    let s = raw.l1_functional(integrals);
    let scale: f64 = raw
        .amplitudes
        .iter()
        .zip(&integrals.norm_integrals)
        .map(|(b, i)| (b * i).abs())
        .sum();
    if !(s.abs() > 1e-12 * scale) {
        return Err(Error::SpuriousZeroMode { value: s });
    }
    Ok(ZeroMode {
        amplitudes: raw.amplitudes.iter().map(|b| b / s).collect(),
        eigenvalue: raw.eigenvalue,
        normalized: true,
    })
}

/// A density sampled on a grid, with the runs where it goes negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfReconstruction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `(first, last)` grid points of each maximal run with `P < 0`.
    pub negative_regions: Vec<(f64, f64)>,
}

impl PdfReconstruction {
    pub fn is_negative(&self, i: usize) -> bool {
        self.values[i] < 0.0
    }
}

/// `P(x_i) = Σ_n b_n φ_n(x_i)`.
pub fn reconstruct_pdf(mode: &ZeroMode, basis: &BasisSpec, grid: &[f64]) -> PdfReconstruction {
    let ell = basis.length_scale();
    let values: Vec<f64> = grid
        .iter()
        .map(|&x| {
            mode.amplitudes
                .iter()
                .enumerate()
                .map(|(k, b)| b * hermite_function(2 * k, ell, x))
                .sum()
        })
        .collect();
    let mut negative_regions = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match (v < 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                negative_regions.push((grid[s], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        negative_regions.push((grid[s], grid[grid.len() - 1]));
    }
    PdfReconstruction {
        grid: grid.to_vec(),
        values,
        negative_regions,
    }
}

/// `⟨x²⟩ = Σ_n b_n J_n` for a normalized mode.
pub fn moment_from_amplitudes(mode: &ZeroMode, integrals: &BasisIntegrals) -> f64 {
    debug_assert!(mode.normalized, "moments need an L1-normalized mode");
    mode.amplitudes
        .iter()
        .zip(&integrals.second_moment_integrals)
        .map(|(b, j)| b * j)
        .sum()
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(-2.0, 2.0, DEFAULT_GRID_POINTS)
}

/// `max_i |a_i - b_i|`
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Everything the classical pipeline produces for one `(params, basis)`.
#[derive(Debug, Clone)]
pub struct ClassicalSolution {
    pub basis: BasisSpec,
    pub fpe: FpeMatrix,
    pub hamiltonian: FpeHamiltonian,
    pub integrals: BasisIntegrals,
    pub mode: ZeroMode,
}

impl ClassicalSolution {
    pub fn second_moment(&self) -> f64 {
        moment_from_amplitudes(&self.mode, &self.integrals)
    }

    pub fn pdf(&self, grid: &[f64]) -> PdfReconstruction {
        reconstruct_pdf(&self.mode, &self.basis, grid)
    }
}

pub fn solve_classical(params: &ModelParams, basis: &BasisSpec) -> Result<ClassicalSolution> {
    let fpe = build_fpe_matrix(params, basis)?;
    let hamiltonian = build_hamiltonian(&fpe);
    let integrals = basis_integrals(basis);
    let raw = solve_zero_mode(&hamiltonian)?;
    let mode = normalize_zero_mode(&raw, &integrals)?;
    Ok(ClassicalSolution {
        basis: *basis,
        fpe,
        hamiltonian,
        integrals,
        mode,
    })
}
