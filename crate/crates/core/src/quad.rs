//! Adaptive quadrature on finite intervals.
//!
//! Each panel is integrated with Gauss-Legendre rules of two orders. Their
//! difference is the error estimate; panels that miss the target are bisected.
//! A panel also counts as converged once the estimate is at round-off level
//! relative to `∫|f|`, so cancelling integrands with tiny absolute targets
//! still terminate.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 30;
const LOW_ORDER: usize = 20;
const HIGH_ORDER: usize = 40;
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

fn rules() -> &'static (GaussLegendre, GaussLegendre) {
    static RULES: OnceLock<(GaussLegendre, GaussLegendre)> = OnceLock::new();
    RULES.get_or_init(|| {
        let rule = |n| GaussLegendre::new(NonZeroUsize::new(n).expect("nonzero order"));
        (rule(LOW_ORDER), rule(HIGH_ORDER))
    })
}

/// Integrate `f` over `[a, b]` to the absolute tolerance `tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_panels(&f, a, b, tol, 0)
}

/// Integrate over `[a, b]` after first splitting it into `panels` equal
/// pieces. Useful for oscillatory integrands whose scale is known.
pub fn integrate_split<F>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let per_panel = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            integrate_panels(&f, lo, lo + width, per_panel, 0)
        })
        .sum()
}

fn integrate_panels<F>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (low, high) = rules();
    let coarse = low.integrate(a, b, f);
    let mut magnitude = 0.0;
    let fine = high.integrate(a, b, |x| {
        let v = f(x);
        magnitude += v.abs();
        v
    });
    let magnitude = magnitude * (b - a).abs() / HIGH_ORDER as f64;
    let estimate = (fine - coarse).abs();
    if estimate <= tol || estimate <= ROUNDOFF * magnitude {
        return Ok(fine);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailed { tolerance: tol, estimate });
    }
    let mid = 0.5 * (a + b);
    let left = integrate_panels(f, a, mid, 0.5 * tol, depth + 1)?;
    let right = integrate_panels(f, mid, b, 0.5 * tol, depth + 1)?;
    Ok(left + right)
}
