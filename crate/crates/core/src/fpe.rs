//! The Fokker-Planck operator projected onto the even Hermite basis.
//!
//! For drift `u(x) = -a x - b x³` and diffusivity `Γ` the operator in flux
//! form is `L P = d/dx (u P) - Γ d²P/dx²`. In the ladder basis this is
//!
//! ```text
//! L = -a D·X - b D·X·X·X - Γ D·D
//! ```
//!
//! assembled over the full working space and then restricted to the even
//! indices. The restriction is exact as long as the working space has enough
//! headroom for the intermediate indices of `D·X³`.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::hermite::{build_operator_matrices, envelope, hermite_function, hermite_polynomial, BasisSpec, OperatorMatrices};
use crate::output::fmt17;
use crate::quad;

/// Drift and diffusion coefficients `(a, b, Γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    drift_linear: f64,
    drift_cubic: f64,
    diffusivity: f64,
}

impl ModelParams {
    pub fn new(drift_linear: f64, drift_cubic: f64, diffusivity: f64) -> Result<Self> {
        if !drift_linear.is_finite() {
            return Err(invalid("a", "must be finite"));
        }
        if !(drift_cubic >= 0.0) || !drift_cubic.is_finite() {
            return Err(invalid("b", format!("cubic drift must be non-negative for stability, got {drift_cubic}")));
        }
        if !(diffusivity > 0.0) || !diffusivity.is_finite() {
            return Err(invalid("gamma", format!("diffusivity must be positive, got {diffusivity}")));
        }
        Ok(Self {
            drift_linear,
            drift_cubic,
            diffusivity,
        })
    }

    /// `a`
    pub fn a(&self) -> f64 {
        self.drift_linear
    }

    /// `b`
    pub fn b(&self) -> f64 {
        self.drift_cubic
    }

    /// `Γ`
    pub fn gamma(&self) -> f64 {
        self.diffusivity
    }

    /// All three coefficients multiplied by `kappa > 0`.
    pub fn scaled(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(invalid("kappa", "scale factor must be positive"));
        }
        Self::new(kappa * self.a(), kappa * self.b(), kappa * self.gamma())
    }

    /// Drift velocity `u(x)`.
    pub fn velocity(&self, x: f64) -> f64 {
        -self.a() * x - self.b() * x * x * x
    }

    /// `u'(x)`
    pub fn velocity_slope(&self, x: f64) -> f64 {
        -self.a() - 3.0 * self.b() * x * x
    }
}

/// Headroom needed so that the even block of `L` is exact.
fn required_headroom(params: &ModelParams) -> usize {
    if params.b() > 0.0 {
        4
    } else {
        2
    }
}

/// `N × N` matrix of `L` over the even basis states.
#[derive(Debug, Clone)]
pub struct FpeMatrix {
    pub entries: DMatrix<f64>,
    pub params: ModelParams,
    pub basis: BasisSpec,
}

impl FpeMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Row-major CSV with a one-line comment header.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# L matrix N={} a={} b={} gamma={} ell={}\n",
            self.basis.num_even_states(),
            self.params.a(),
            self.params.b(),
            self.params.gamma(),
            self.basis.length_scale()
        );
        for row in self.entries.row_iter() {
            let cells: Vec<String> = row.iter().map(|&x| fmt17(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `L` over the full working space (even and odd indices).
pub fn assemble_full_operator(params: &ModelParams, ops: &OperatorMatrices) -> DMatrix<f64> {
    let d = &ops.derivative;
    let x = &ops.position;
    let dx = d * x;
    let mut l = &dx * (-params.a());
    if params.b() != 0.0 {
        let dxxx = &dx * x * x;
        l -= dxxx * params.b();
    }
    l -= (d * d) * params.gamma();
    l
}

pub fn build_fpe_matrix(params: &ModelParams, basis: &BasisSpec) -> Result<FpeMatrix> {
    let required = required_headroom(params);
    if basis.headroom() < required {
        return Err(Error::InsufficientHeadroom {
            headroom: basis.headroom(),
            required,
        });
    }
    let ops = build_operator_matrices(basis);
    let full = assemble_full_operator(params, &ops);
    let n = basis.num_even_states();
    let entries = DMatrix::from_fn(n, n, |i, j| full[(2 * i, 2 * j)]);
    Ok(FpeMatrix {
        entries,
        params: *params,
        basis: *basis,
    })
}

/// The symmetric positive semidefinite matrix `H = LᵀL` sharing the
/// zero-mode of `L`.
#[derive(Debug, Clone)]
pub struct FpeHamiltonian {
    pub entries: DMatrix<f64>,
    pub source: Option<FpeMatrix>,
}

impl FpeHamiltonian {
    /// Wrap an arbitrary symmetric matrix (e.g. a test fixture).
    pub fn from_symmetric(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        Ok(Self { entries, source: None })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// `H_mn = Σ_p L_pm L_pn`, summed over the same truncated even states.
pub fn normal_matrix(l: &DMatrix<f64>) -> DMatrix<f64> {
    let h = l.transpose() * l;
    // Symmetrize so that H is exactly symmetric in floating point.
    (&h + h.transpose()) * 0.5
}

pub fn build_hamiltonian(l: &FpeMatrix) -> FpeHamiltonian {
    FpeHamiltonian {
        entries: normal_matrix(&l.entries),
        source: Some(l.clone()),
    }
}

/// `⟨φ_m | L φ_n⟩` by direct quadrature of the differential operator.
///
/// Derivatives of `φ_n` come from `H_n' = 2n H_{n-1}` and the Hermite
/// differential equation, not from the ladder matrices, so this is an
/// independent route to the matrix elements.
pub fn quadrature_matrix_element(m: usize, n: usize, params: &ModelParams, length_scale: f64) -> Result<f64> {
    if m % 2 != 0 || n % 2 != 0 {
        return Err(invalid("m,n", "matrix element indices must be even"));
    }
    if !(length_scale > 0.0) {
        return Err(invalid("ell", "length scale must be positive"));
    }
    let ell = length_scale;
    let gamma = params.gamma();
    let dphi_n = |x: f64| {
        let y = x / ell;
        let h = hermite_polynomial(n, y);
        let dh = if n == 0 {
            0.0
        } else {
            2.0 * n as f64 * hermite_polynomial(n - 1, y)
        };
        (dh - y * h) * envelope(n, ell, x) / ell
    };
    let d2phi_n = |x: f64| {
        let y = x / ell;
        (y * y - (2 * n + 1) as f64) * hermite_function(n, ell, x) / (ell * ell)
    };
    let integrand = |x: f64| {
        let phi_n = hermite_function(n, ell, x);
        let flux_div = params.velocity_slope(x) * phi_n + params.velocity(x) * dphi_n(x);
        hermite_function(m, ell, x) * (flux_div - gamma * d2phi_n(x))
    };
    let top = m.max(n) as f64 + 2.0;
    let r = 12.0 * ell * top.sqrt();
    let panels = 8 + m.max(n) / 2;
    quad::integrate_split(integrand, -r, r, panels, 1e-11)
}
