use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{EstimatorSpec, SummaryStatistic};

const MAD_CONSISTENCY: f64 = 1.4826;
const ZERO_SCALE_RATIO: f64 = 1e-12;
/// Newton polishing is attempted once the scaled residual drops below this.
const NEWTON_SWITCH: f64 = 1e-3;

/// Least-squares coefficients via a Householder factorization.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let qty = qr.q().tr_mul(y);
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient {
            rank: 0,
            cols: x.ncols(),
        })
}

/// Median absolute deviation about the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Max-norm of the estimating equations at `stat`, divided by `n`.
pub fn estimating_equation_residual(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &EstimatorSpec,
    stat: &SummaryStatistic,
) -> f64 {
    let r = standardized_residuals(x, y, &stat.b, stat.s);
    equation_residual(x, &r, spec)
}

fn standardized_residuals(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, s: f64) -> DVector<f64> {
    (y - x * b) / s
}

fn equation_residual(x: &DMatrix<f64>, r: &DVector<f64>, spec: &EstimatorSpec) -> f64 {
    let n = r.len() as f64;
    let psi = r.map(|u| spec.psi.psi(u));
    let coef = x.tr_mul(&psi).amax();
    let scale: f64 = r.iter().map(|&u| spec.chi.chi(u)).sum::<f64>().abs();
    coef.max(scale) / n
}

/// Solves the simultaneous estimating equations by iteratively reweighted
/// least squares, polished with Newton steps near the root.
///
/// Without `init` the iteration starts from least squares and
/// `1.4826·MAD` of its residuals, a start that is itself regression and
/// scale equivariant.
pub fn irls_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &EstimatorSpec,
    init: Option<(&DVector<f64>, f64)>,
) -> Result<SummaryStatistic> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("y has {} entries, X has {n} rows", y.len())));
    }
    if n <= p {
        return Err(Error::TooFewRows { n, p });
    }

    let b_ls = least_squares(x, y)?;
    let ls_resid = y - x * &b_ls;
    // reference scale for collapse detection: RMS of the least-squares residuals
    let reference = (ls_resid.norm_squared() / n as f64).sqrt();
    if !(reference > 1e-13 * y.amax()) || !reference.is_finite() {
        return Err(Error::ZeroScale);
    }

    let (mut b, mut s) = match init {
        Some((b0, s0)) => {
            if !(s0 > 0.0) || b0.len() != p {
                return Err(Error::InvalidInput("initial scale must be positive".into()));
            }
            (b0.clone(), s0)
        }
        None => {
            let s0 = MAD_CONSISTENCY * mad(ls_resid.as_slice());
            (b_ls, if s0 > 0.0 { s0 } else { reference })
        }
    };

    let mut residual = f64::INFINITY;
    for _ in 0..spec.max_iter {
        let r = standardized_residuals(x, y, &b, s);
        residual = equation_residual(x, &r, spec);
        if residual <= spec.tol {
            return Ok(SummaryStatistic { b, s });
        }
        let mut stepped = false;
        if residual < NEWTON_SWITCH {
            if let Some((nb, ns)) = newton_step(x, &r, &b, s, spec) {
                let nr = standardized_residuals(x, y, &nb, ns);
                if equation_residual(x, &nr, spec) < residual {
                    b = nb;
                    s = ns;
                    stepped = true;
                }
            }
        }
        if !stepped {
            let (nb, ns) = irls_step(x, y, &r, s, spec).ok_or(Error::NoConvergence {
                iterations: spec.max_iter,
                residual,
            })?;
            b = nb;
            s = ns;
        }
        if !(s > ZERO_SCALE_RATIO * reference) {
            return Err(Error::ZeroScale);
        }
    }
    let r = standardized_residuals(x, y, &b, s);
    residual = residual.min(equation_residual(x, &r, spec));
    if residual <= spec.tol {
        return Ok(SummaryStatistic { b, s });
    }
    Err(Error::NoConvergence {
        iterations: spec.max_iter,
        residual,
    })
}

/// Weighted least-squares coefficient step followed by the scale step
/// `s² ← s² · mean ρ(r) / target`.
fn irls_step(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DVector<f64>,
    s: f64,
    spec: &EstimatorSpec,
) -> Option<(DVector<f64>, f64)> {
    let (n, p) = x.shape();
    let w = r.map(|u| spec.psi.weight(u));
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    for i in 0..n {
        let xi = x.row(i);
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        xtwx.ger(wi, &xi.transpose(), &xi.transpose(), 1.0);
        xtwy.axpy(wi * y[i], &xi.transpose(), 1.0);
    }
    let b = xtwx.cholesky()?.solve(&xtwy);
    let r_new = (y - x * &b) / s;
    let mean_rho = r_new.iter().map(|&u| spec.chi.rho(u)).sum::<f64>() / n as f64;
    let s_new = s * (mean_rho / spec.chi.target()).sqrt();
    Some((b, s_new))
}

/// The (p+1)×(p+1) matrix of derivatives of the estimating equations,
/// shared by the Newton step and implicit differentiation:
///
/// ```text
/// [ Σψ'(r)xxᵀ   Σψ'(r) r x ]
/// [ Σχ'(r)xᵀ    Σχ'(r) r   ]
/// ```
pub(super) fn equation_jacobian(x: &DMatrix<f64>, r: &DVector<f64>, spec: &EstimatorSpec) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut m = DMatrix::<f64>::zeros(p + 1, p + 1);
    for i in 0..n {
        let dpsi = spec.psi.dpsi(r[i]);
        let dchi = spec.chi.dchi(r[i]);
        for a in 0..p {
            let xa = x[(i, a)];
            for c in 0..p {
                m[(a, c)] += dpsi * xa * x[(i, c)];
            }
            m[(a, p)] += dpsi * r[i] * xa;
            m[(p, a)] += dchi * xa;
        }
        m[(p, p)] += dchi * r[i];
    }
    m
}

fn newton_step(
    x: &DMatrix<f64>,
    r: &DVector<f64>,
    b: &DVector<f64>,
    s: f64,
    spec: &EstimatorSpec,
) -> Option<(DVector<f64>, f64)> {
    let p = x.ncols();
    let m = equation_jacobian(x, r, spec);
    let psi = r.map(|u| spec.psi.psi(u));
    let mut f = DVector::<f64>::zeros(p + 1);
    f.rows_mut(0, p).copy_from(&x.tr_mul(&psi));
    f[p] = r.iter().map(|&u| spec.chi.chi(u)).sum();
    // F(b, s) has Jacobian −M/s, so the Newton update is (δb, δs) = s·M⁻¹F
    let delta = m.lu().solve(&f)? * s;
    let nb = b + delta.rows(0, p);
    let ns = s + delta[p];
    (ns > 0.0 && ns.is_finite() && nb.iter().all(|v| v.is_finite())).then_some((nb, ns))
}
