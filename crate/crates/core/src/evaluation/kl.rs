use crate::error::{Error, Result};
use crate::special::{adaptive_simpson, normal_ln_pdf};

use super::PredictiveDensity;

const KL_TOL: f64 = 1e-5;
const KL_HALF_WIDTH: f64 = 10.0;

/// `KL(N(θ, σ²) ‖ f̂)`: divergence from the good-data law of a group to a
/// fitted predictive, by adaptive Simpson over `θ ± 10σ`.
pub fn kl_good_data(pred: &PredictiveDensity, theta: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput("true variance must be positive".into()));
    }
    let sd = sigma2.sqrt();
    adaptive_simpson(
        |y| {
            let lf = normal_ln_pdf(y, theta, sigma2);
            lf.exp() * (lf - pred.log_density(y))
        },
        theta - KL_HALF_WIDTH * sd,
        theta + KL_HALF_WIDTH * sd,
        KL_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_divergence_is_zero() {
        let p = PredictiveDensity::plug_in(0.3, 2.5);
        assert!(kl_good_data(&p, 0.3, 2.5).unwrap().abs() < 1e-6);
    }

    #[test]
    fn shifted_normal() {
        let p = PredictiveDensity::plug_in(1.0, 4.0);
        assert!((kl_good_data(&p, 0.0, 4.0).unwrap() - 0.125).abs() < 1e-5);
    }

    #[test]
    fn different_variances() {
        // KL(N(0,a)‖N(0,b)) = ½(a/b − 1 − ln(a/b))
        let (a, b) = (4.0, 9.0);
        let p = PredictiveDensity::plug_in(0.0, b);
        let exact = 0.5 * (a / b - 1.0 - (a / b).ln());
        assert!((kl_good_data(&p, 0.0, a).unwrap() - exact).abs() < 1e-5);
    }
}
