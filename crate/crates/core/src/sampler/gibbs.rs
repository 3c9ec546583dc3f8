use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::special::LN_SQRT_2PI;

use super::{NIGPrior, PriorForm, ThetaState};

/// `Σ log N(y_i | x_iᵀβ, σ²)`.
pub fn normal_log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, theta: &ThetaState) -> f64 {
    let n = y.len() as f64;
    let rss = (y - x * &theta.beta).norm_squared();
    -n * (LN_SQRT_2PI + 0.5 * theta.sigma2.ln()) - 0.5 * rss / theta.sigma2
}

/// Draw from `IG(shape, rate)`.
pub(crate) fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|_| Error::NumericalPD)?;
    let v: f64 = g.sample(rng);
    if v > 0.0 && v.is_finite() {
        Ok(1.0 / v)
    } else {
        Err(Error::NumericalPD)
    }
}

/// Draw from `N(m, scale · P⁻¹)` given the precision `P`.
fn sample_from_precision<R: Rng + ?Sized>(
    m: &DVector<f64>,
    precision: DMatrix<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = precision.cholesky().ok_or(Error::NumericalPD)?;
    let z = DVector::<f64>::from_fn(m.len(), |_, _| rng.sample(StandardNormal));
    let v = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NumericalPD)?;
    Ok(m + v * scale.sqrt())
}

/// Exact draw of `θ` from its full-data conditional under the normal model.
///
/// With an independent prior this is one two-block Gibbs update
/// (`β | σ², y` then `σ² | β, y`, starting from `current`); with a conjugate
/// prior `(β, σ²)` is drawn jointly and `current` is ignored.
pub fn gibbs_theta_normal<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &NIGPrior,
    current: &ThetaState,
    rng: &mut R,
) -> Result<ThetaState> {
    gibbs_theta_weighted(x, y, None, prior, current, rng)
}

/// As [`gibbs_theta_normal`] with observation `i` having variance
/// `σ²/w_i` (precision weights, as in a normal scale mixture).
pub fn gibbs_theta_weighted<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&DVector<f64>>,
    prior: &NIGPrior,
    current: &ThetaState,
    rng: &mut R,
) -> Result<ThetaState> {
    let (n, p) = x.shape();
    let (xtwx, xtwy, ytwy) = match weights {
        None => (x.tr_mul(x), x.tr_mul(y), y.norm_squared()),
        Some(w) => {
            let wx = DMatrix::from_fn(n, p, |i, j| w[i] * x[(i, j)]);
            let ytwy = y.iter().zip(w.iter()).map(|(v, wi)| wi * v * v).sum();
            (wx.tr_mul(x), wx.tr_mul(y), ytwy)
        }
    };
    let prior_prec = prior.sigma0.clone().try_inverse().ok_or(Error::NumericalPD)?;
    let prior_shift = &prior_prec * &prior.mu0;
    let shape = prior.a0 + n as f64 / 2.0;

    match prior.form {
        PriorForm::Independent => {
            let s2 = current.sigma2;
            let prec = &prior_prec + &xtwx / s2;
            let rhs = &prior_shift + &xtwy / s2;
            let mean = solve_spd(&prec, &rhs)?;
            let beta = sample_from_precision(&mean, prec, 1.0, rng)?;
            let resid = y - x * &beta;
            let wrss: f64 = match weights {
                None => resid.norm_squared(),
                Some(w) => resid.iter().zip(w.iter()).map(|(r, wi)| wi * r * r).sum(),
            };
            let sigma2 = sample_inv_gamma(shape, prior.b0 + 0.5 * wrss, rng)?;
            Ok(ThetaState { beta, sigma2 })
        }
        PriorForm::Conjugate => {
            let prec = &prior_prec + &xtwx;
            let rhs = &prior_shift + &xtwy;
            let mean = solve_spd(&prec, &rhs)?;
            let quad = ytwy + prior.mu0.dot(&prior_shift) - mean.dot(&(&prec * &mean));
            let rate = prior.b0 + 0.5 * quad.max(0.0);
            let sigma2 = sample_inv_gamma(shape, rate, rng)?;
            let beta = sample_from_precision(&mean, prec, sigma2, rng)?;
            Ok(ThetaState { beta, sigma2 })
        }
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(a.clone().cholesky().ok_or(Error::NumericalPD)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tight_prior_pins_beta() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![10.0, 11.0, 9.0, 12.0]);
        let prior = NIGPrior::scalar(-3.0, 1e-12, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut theta = ThetaState {
            beta: DVector::from_element(1, 0.0),
            sigma2: 1.0,
        };
        for _ in 0..50 {
            theta = gibbs_theta_normal(&x, &y, &prior, &theta, &mut rng).unwrap();
            assert!((theta.beta[0] + 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn empty_data_draws_from_prior() {
        let x = DMatrix::<f64>::zeros(0, 1);
        let y = DVector::<f64>::zeros(0);
        let mut prior = NIGPrior::scalar(2.0, 0.25, 6.0, 10.0).unwrap();
        prior.form = PriorForm::Conjugate;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta0 = ThetaState {
            beta: DVector::from_element(1, 0.0),
            sigma2: 1.0,
        };
        let m = 40_000;
        let (mut sb, mut ss) = (0.0, 0.0);
        for _ in 0..m {
            let t = gibbs_theta_normal(&x, &y, &prior, &theta0, &mut rng).unwrap();
            sb += t.beta[0];
            ss += t.sigma2;
        }
        assert!((sb / m as f64 - 2.0).abs() < 0.02);
        // E σ² = b/(a − 1) = 2
        assert!((ss / m as f64 - 2.0).abs() < 0.03);
    }

    #[test]
    fn conjugate_draws_match_posterior_moments() {
        // hand-derived NIG posterior for n = 4, p = 1, μ0 = 0, Σ0 = 1, a0 = 3, b0 = 2
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5]);
        let prior = NIGPrior::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            3.0,
            2.0,
            PriorForm::Conjugate,
        )
        .unwrap();
        let lambda = 5.0;
        let mu_n = 5.0 / lambda;
        let a_n = 5.0;
        let b_n = 2.0 + 0.5 * (7.5 - lambda * mu_n * mu_n);
        let e_s2 = b_n / (a_n - 1.0);
        let var_beta = e_s2 / lambda;
        let var_s2 = e_s2 * e_s2 / (a_n - 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta0 = ThetaState {
            beta: DVector::from_element(1, 0.0),
            sigma2: 1.0,
        };
        let m = 100_000;
        let draws: Vec<ThetaState> = (0..m)
            .map(|_| gibbs_theta_normal(&x, &y, &prior, &theta0, &mut rng).unwrap())
            .collect();
        let mb = draws.iter().map(|t| t.beta[0]).sum::<f64>() / m as f64;
        let ms = draws.iter().map(|t| t.sigma2).sum::<f64>() / m as f64;
        let vb = draws.iter().map(|t| (t.beta[0] - mb).powi(2)).sum::<f64>() / m as f64;
        assert!((mb - mu_n).abs() < 3.0 * (var_beta / m as f64).sqrt());
        assert!((ms - e_s2).abs() < 3.0 * (var_s2 / m as f64).sqrt());
        assert!((vb / var_beta - 1.0).abs() < 0.03);
    }

    #[test]
    fn log_likelihood_matches_direct_sum() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.1, 1.2, 1.7]);
        let theta = ThetaState {
            beta: DVector::from_vec(vec![0.2, 0.8]),
            sigma2: 0.3,
        };
        let direct: f64 = (0..3)
            .map(|i| crate::special::normal_ln_pdf(y[i], 0.2 + 0.8 * x[(i, 1)], 0.3))
            .sum();
        assert!((normal_log_likelihood(&x, &y, &theta) - direct).abs() < 1e-12);
    }
}
