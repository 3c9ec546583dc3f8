//! Scalar special functions and one-dimensional quadrature.

use std::f64::consts::PI;

use statrs::function::{erf, gamma};

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Log density of `N(mean, var)` at `x`.
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// `log Σ exp(v_i)`, stable for large magnitudes. Returns `-inf` for an empty
/// slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log surface area of the unit sphere `S^{d-1}` embedded in `R^d`.
pub fn ln_unit_sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    std::f64::consts::LN_2 + half * PI.ln() - ln_gamma(half)
}

/// `log I_ν(x)` for `ν ≥ 0`, `x ≥ 0`, by the ascending power series summed in
/// log space. Adequate for the moderate concentrations used by the sphere
/// random walk; cost grows linearly in `x`.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let lx2 = (x / 2.0).ln();
    let term = |m: f64| (2.0 * m + nu) * lx2 - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0);
    // terms peak near m ≈ x/2; sum outward until they are negligible
    let peak = (x / 2.0).floor();
    let top = term(peak);
    let mut acc = 0.0;
    let mut m = peak;
    loop {
        let t = (term(m) - top).exp();
        acc += t;
        if t < 1e-17 * acc || m == 0.0 {
            break;
        }
        m -= 1.0;
    }
    let mut m = peak + 1.0;
    loop {
        let t = (term(m) - top).exp();
        acc += t;
        if t < 1e-17 * acc {
            break;
        }
        m += 1.0;
    }
    top + acc.ln()
}

const MAX_DEPTH: usize = 50;

/// Adaptive Simpson quadrature of `f` over `[lo, hi]` to absolute tolerance
/// `tol`, with Richardson correction on accepted panels.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if hi == lo {
        return Ok(0.0);
    }
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let v = simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH, &mut ok);
    if ok && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure { lo, hi })
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // a minimum depth keeps narrow peaks from being missed by the first panel
    if depth + 6 <= MAX_DEPTH && delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, ok)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, ok)
}

/// Integrates over consecutive breakpoints, splitting the tolerance evenly.
pub fn adaptive_simpson_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Result<f64> {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], tol / pieces))
        .sum()
}
