use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{adaptive_simpson, normal_cdf, normal_pdf, normal_sf};

use super::Psi;

/// ψ families that carry a tuning constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunedFamily {
    Huber,
    Tukey,
}

impl TunedFamily {
    fn psi(self, t: f64) -> Psi {
        match self {
            TunedFamily::Huber => Psi::Huber { k: t },
            TunedFamily::Tukey => Psi::Tukey { c: t },
        }
    }

    fn bracket(self) -> (f64, f64) {
        match self {
            TunedFamily::Huber => (1e-3, 20.0),
            TunedFamily::Tukey => (0.5, 60.0),
        }
    }
}

const QUAD_TOL: f64 = 1e-13;

/// Asymptotic efficiency at the standard normal of the location M-estimator
/// with the given tuning: `(∫ψ'φ)² / ∫ψ²φ`.
pub fn efficiency(family: TunedFamily, tuning: f64) -> Result<f64> {
    let psi = family.psi(tuning);
    let (num, den) = match family {
        TunedFamily::Huber => {
            let k = tuning;
            let slope = adaptive_simpson(normal_pdf, -k, k, QUAD_TOL)?;
            let inner = adaptive_simpson(|u| u * u * normal_pdf(u), -k, k, QUAD_TOL)?;
            (slope, inner + 2.0 * k * k * normal_sf(k))
        }
        TunedFamily::Tukey => {
            let c = tuning;
            let slope = adaptive_simpson(|u| psi.dpsi(u) * normal_pdf(u), -c, c, QUAD_TOL)?;
            let var = adaptive_simpson(|u| psi.psi(u).powi(2) * normal_pdf(u), -c, c, QUAD_TOL)?;
            (slope, var)
        }
    };
    Ok(num * num / den)
}

/// Tuning constant giving the requested efficiency at the normal, by
/// bisection on the quadrature-evaluated efficiency.
pub fn solve_tuning(family: TunedFamily, target: f64) -> Result<f64> {
    if !(target > 0.5 && target < 0.9999) {
        return Err(Error::NoBracket { efficiency: target });
    }
    let (mut lo, mut hi) = family.bracket();
    let (elo, ehi) = (efficiency(family, lo)?, efficiency(family, hi)?);
    if !(elo < target && target < ehi) {
        return Err(Error::NoBracket { efficiency: target });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = efficiency(family, mid)?;
        if (e - target).abs() < 1e-12 || hi - lo < 1e-12 {
            return Ok(mid);
        }
        if e < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `β_k = E min(|Z|, k)²` for standard normal `Z`, in closed form:
/// `(2Φ(k) − 1) − 2kφ(k) + 2k²(1 − Φ(k))`.
pub fn chi_centering(k: f64) -> f64 {
    (2.0 * normal_cdf(k) - 1.0) - 2.0 * k * normal_pdf(k) + 2.0 * k * k * normal_sf(k)
}
