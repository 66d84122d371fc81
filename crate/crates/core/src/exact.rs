//! Closed-form stationary density `P(x) = 𝒩 exp(-a x²/2Γ - b x⁴/4Γ)`.

use crate::error::{invalid, Result};
use crate::fpe::ModelParams;
use crate::quad;

/// Exponent value at the edge of the integration window. `e^-40 ≈ 4e-18`, so
/// the discarded tails are far below every tolerance used downstream.
const TAIL_EXPONENT: f64 = 40.0;

/// A normalized exact density.
#[derive(Debug, Clone, Copy)]
pub struct ExactPdf {
    pub params: ModelParams,
    /// Half-width `R` of the integration window `[-R, R]`.
    pub quad_domain: f64,
    /// Absolute tolerance used for the normalization integral.
    pub quad_tol: f64,
    // P(x) = exp(-E(x) - shift) / scaled_integral
    shift: f64,
    scaled_integral: f64,
}

impl ExactPdf {
    /// The normalization constant `𝒩`.
    pub fn norm_constant(&self) -> f64 {
        (-self.shift).exp() / self.scaled_integral
    }

    pub fn eval(&self, x: f64) -> f64 {
        (-exponent(&self.params, x) - self.shift).exp() / self.scaled_integral
    }
}

fn exponent(p: &ModelParams, x: f64) -> f64 {
    let x2 = x * x;
    (p.a() * x2 / 2.0 + p.b() * x2 * x2 / 4.0) / p.gamma()
}

/// Smallest `R` with `E(R) = TAIL_EXPONENT`, never below the conventional
/// window `6·max(1, (Γ/max(b, a, 1))^{1/4})`.
fn domain(p: &ModelParams) -> f64 {
    let (a, b, g) = (p.a(), p.b(), p.gamma());
    let tail = if b > 0.0 {
        let lin = a / (2.0 * g);
        let quart = b / (4.0 * g);
        let s = (-lin + (lin * lin + 4.0 * quart * TAIL_EXPONENT).sqrt()) / (2.0 * quart);
        s.sqrt()
    } else {
        (2.0 * g * TAIL_EXPONENT / a).sqrt()
    };
    let conventional = 6.0 * (g / b.max(a).max(1.0)).powf(0.25).max(1.0);
    tail.max(conventional)
}

pub fn make_exact_pdf(params: &ModelParams) -> Result<ExactPdf> {
    if params.b() == 0.0 && params.a() <= 0.0 {
        return Err(invalid("a", "with b = 0 the density is normalizable only for a > 0"));
    }
    let r = domain(params);
    // Minimum of E: at x = 0 unless a < 0, where it sits at x² = -a/b.
    let shift = if params.a() < 0.0 {
        exponent(params, (-params.a() / params.b()).sqrt())
    } else {
        0.0
    };
    let quad_tol = 1e-13;
    let scaled_integral = quad::integrate_split(|x| (-exponent(params, x) - shift).exp(), -r, r, 8, quad_tol)?;
    Ok(ExactPdf {
        params: *params,
        quad_domain: r,
        quad_tol,
        shift,
        scaled_integral,
    })
}

/// `∫ x^k P(x) dx` for even `k ≤ 8`; odd `k` is zero by symmetry.
pub fn exact_moment(pdf: &ExactPdf, k: u32) -> Result<f64> {
    if k % 2 == 1 {
        return Ok(0.0);
    }
    if k > 8 {
        return Err(invalid("k", format!("moments are supported up to order 8, got {k}")));
    }
    let r = pdf.quad_domain;
    quad::integrate_split(|x| x.powi(k as i32) * pdf.eval(x), -r, r, 8, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal() {
        let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
        let pdf = make_exact_pdf(&p).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((pdf.eval(0.0) - expect).abs() < 1e-14);
        assert!((exact_moment(&pdf, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((exact_moment(&pdf, 4).unwrap() - 3.0).abs() < 1e-11);
    }

    #[test]
    fn bistable_reference_values() {
        // 40-digit mpmath quadrature over the real line.
        let p = ModelParams::new(-1.0, 2.0, 1.0).unwrap();
        let pdf = make_exact_pdf(&p).unwrap();
        assert!((pdf.norm_constant() - 0.351_282_883_881_739_86).abs() < 1e-12);
        assert!((pdf.eval(0.0) - pdf.norm_constant()).abs() < 1e-15);
        let x2 = exact_moment(&pdf, 2).unwrap();
        assert!((x2 - 0.645_232_271_614_592_26).abs() < 1e-11);
        for &x in &[0.3, 0.7071, 1.2, 2.5] {
            assert_eq!(pdf.eval(x), pdf.eval(-x));
        }
    }

    #[test]
    fn monostable_reference_value() {
        let p = ModelParams::new(1.0, 2.0, 1.0).unwrap();
        let pdf = make_exact_pdf(&p).unwrap();
        assert!((pdf.norm_constant() - 0.571_773_365_353_341_81).abs() < 1e-12);
        assert!((exact_moment(&pdf, 2).unwrap() - 0.365_957_321_230_843_86).abs() < 1e-11);
    }

    #[test]
    fn moment_properties() {
        for &(a, b, g) in &[(1.0, 0.0, 1.0), (-1.0, 2.0, 1.0), (1.0, 2.0, 1.0), (-3.0, 0.5, 0.2)] {
            let pdf = make_exact_pdf(&ModelParams::new(a, b, g).unwrap()).unwrap();
            let m0 = exact_moment(&pdf, 0).unwrap();
            let m2 = exact_moment(&pdf, 2).unwrap();
            let m4 = exact_moment(&pdf, 4).unwrap();
            assert!((m0 - 1.0).abs() < 1e-10);
            assert!(m2 > 0.0);
            assert!(m4 >= m2 * m2);
            assert_eq!(exact_moment(&pdf, 3).unwrap(), 0.0);
        }
        let pdf = make_exact_pdf(&ModelParams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(exact_moment(&pdf, 10).is_err());
    }

    #[test]
    fn rescaling_leaves_density_unchanged() {
        let base = ModelParams::new(-1.0, 2.0, 1.0).unwrap();
        let p1 = make_exact_pdf(&base).unwrap();
        for &kappa in &[0.1, 10.0] {
            let pk = make_exact_pdf(&base.scaled(kappa).unwrap()).unwrap();
            for i in -40..=40 {
                let x = i as f64 * 0.05;
                assert!((p1.eval(x) - pk.eval(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_unnormalizable() {
        assert!(make_exact_pdf(&ModelParams::new(0.0, 0.0, 1.0).unwrap()).is_err());
        assert!(make_exact_pdf(&ModelParams::new(-1.0, 0.0, 1.0).unwrap()).is_err());
    }
}
