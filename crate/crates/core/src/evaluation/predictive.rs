use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sampler::ThetaState;
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::special::{adaptive_simpson, log_sum_exp, normal_cdf, normal_ln_pdf};

/// Fewest posterior draws accepted for a Monte Carlo predictive.
pub const MIN_DRAWS: usize = 100;

/// Equal-weight mixture: the Monte Carlo posterior predictive
/// `(1/S) Σ f(ỹ | x̃ᵀβ⁽ˢ⁾, σ²⁽ˢ⁾)` with `f` normal or Student-t, or a single
/// plug-in normal.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDensity {
    means: Vec<f64>,
    vars: Vec<f64>,
    /// Degrees of freedom of t components; `None` for normal components.
    df: Option<f64>,
}

impl PredictiveDensity {
    pub fn from_draws(draws: &[ThetaState], x_new: &DVector<f64>) -> Result<Self> {
        if draws.len() < MIN_DRAWS {
            return Err(Error::TooFewDraws {
                required: MIN_DRAWS,
                got: draws.len(),
            });
        }
        Ok(PredictiveDensity {
            means: draws.iter().map(|t| t.beta.dot(x_new)).collect(),
            vars: draws.iter().map(|t| t.sigma2).collect(),
            df: None,
        })
    }

    /// Predictive of the Student-t sampling model: components
    /// `t_ν(x̃ᵀβ, σ²)` where `σ²` is the squared scale.
    pub fn from_t_draws(draws: &[ThetaState], x_new: &DVector<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!("degrees of freedom {nu} must be positive")));
        }
        let mut p = PredictiveDensity::from_draws(draws, x_new)?;
        p.df = Some(nu);
        Ok(p)
    }

    /// Location-only shorthand: `x̃ = 1`.
    pub fn from_location_draws(draws: &[ThetaState]) -> Result<Self> {
        PredictiveDensity::from_draws(draws, &DVector::from_element(1, 1.0))
    }

    /// `N(mean, var)`, used for classical fits.
    pub fn plug_in(mean: f64, var: f64) -> Self {
        PredictiveDensity {
            means: vec![mean],
            vars: vec![var],
            df: None,
        }
    }

    fn std_t(&self) -> Option<StudentsT> {
        self.df.map(|nu| StudentsT::new(0.0, 1.0, nu).expect("validated degrees of freedom"))
    }

    fn component_ln_pdf(&self, t: Option<&StudentsT>, y: f64, m: f64, v: f64) -> f64 {
        match t {
            None => normal_ln_pdf(y, m, v),
            Some(t) => t.ln_pdf((y - m) / v.sqrt()) - 0.5 * v.ln(),
        }
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn log_density(&self, y: f64) -> f64 {
        let t = self.std_t();
        if self.means.len() == 1 {
            return self.component_ln_pdf(t.as_ref(), y, self.means[0], self.vars[0]);
        }
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.vars)
            .map(|(&m, &v)| self.component_ln_pdf(t.as_ref(), y, m, v))
            .collect();
        log_sum_exp(&terms) - (self.means.len() as f64).ln()
    }

    pub fn density(&self, y: f64) -> f64 {
        self.log_density(y).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let t = self.std_t();
        let total: f64 = self
            .means
            .iter()
            .zip(&self.vars)
            .map(|(&m, &v)| {
                let z = (y - m) / v.sqrt();
                match &t {
                    None => normal_cdf(z),
                    Some(t) => t.cdf(z),
                }
            })
            .sum();
        total / self.means.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    /// Interval containing essentially all of the mass.
    pub fn support(&self) -> (f64, f64) {
        let sd = self.vars.iter().copied().fold(0.0, f64::max).sqrt();
        let lo = self.means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reach = match self.std_t() {
            None => 12.0,
            Some(t) => t.inverse_cdf(1.0 - 1e-12),
        };
        (lo - reach * sd, hi + reach * sd)
    }

    /// Quantile by bisection on the mixture cdf.
    pub fn quantile(&self, q: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Equal-tailed central interval.
    pub fn central_interval(&self, level: f64) -> (f64, f64) {
        let tail = (1.0 - level) / 2.0;
        (self.quantile(tail), self.quantile(1.0 - tail))
    }

    /// Numerical integral of the density over its support.
    pub fn total_mass(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        adaptive_simpson(|y| self.density(y), lo, hi, 1e-8)
    }

    /// `(ỹ, log f̂(ỹ))` on an even grid.
    pub fn log_density_grid(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        let step = if points > 1 { (hi - lo) / (points - 1) as f64 } else { 0.0 };
        (0..points)
            .map(|i| {
                let y = lo + step * i as f64;
                (y, self.log_density(y))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_gamma;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Normal};

    fn theta(b: f64, s2: f64) -> ThetaState {
        ThetaState {
            beta: DVector::from_element(1, b),
            sigma2: s2,
        }
    }

    #[test]
    fn too_few_draws() {
        let draws = vec![theta(0.0, 1.0); 99];
        assert!(matches!(
            PredictiveDensity::from_location_draws(&draws),
            Err(Error::TooFewDraws { required: 100, got: 99 })
        ));
    }

    #[test]
    fn repeated_draw_is_a_normal() {
        let draws = vec![theta(1.5, 2.0); 100];
        let p = PredictiveDensity::from_location_draws(&draws).unwrap();
        for &y in &[-3.0, 0.0, 1.5, 4.2] {
            assert!((p.log_density(y) - normal_ln_pdf(y, 1.5, 2.0)).abs() < 1e-12);
        }
        let (lo, hi) = p.central_interval(0.95);
        assert!((hi - 1.5 - 1.959_963_985 * 2f64.sqrt()).abs() < 1e-6);
        assert!((lo + hi - 3.0).abs() < 1e-8);
    }

    #[test]
    fn conjugate_draws_give_student_t_predictive() {
        // β | σ² ~ N(m, σ²/λ), σ² ~ IG(a, b) ⇒ ỹ ~ t_{2a}(m, (b/a)(1 + 1/λ))
        let (m, lambda, a, b): (f64, f64, f64, f64) = (0.7, 4.0, 6.0, 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gamma = Gamma::new(a, 1.0 / b).unwrap();
        let draws: Vec<ThetaState> = (0..40_000)
            .map(|_| {
                let s2 = 1.0 / gamma.sample(&mut rng);
                let beta = Normal::new(m, (s2 / lambda).sqrt()).unwrap().sample(&mut rng);
                theta(beta, s2)
            })
            .collect();
        let p = PredictiveDensity::from_location_draws(&draws).unwrap();
        let nu = 2.0 * a;
        let scale2 = b / a * (1.0 + 1.0 / lambda);
        let t_pdf = |y: f64| {
            let z2 = (y - m).powi(2) / scale2;
            (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI * scale2).ln()
                - (nu + 1.0) / 2.0 * (1.0 + z2 / nu).ln())
            .exp()
        };
        let sup = (0..=200)
            .map(|i| -8.0 + 0.08 * i as f64)
            .map(|y| (p.density(y) - t_pdf(y)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-2, "sup error {sup}");
    }

    #[test]
    fn t_components() {
        let draws = vec![theta(2.0, 9.0); 100];
        let p = PredictiveDensity::from_t_draws(&draws, &DVector::from_element(1, 1.0), 5.0).unwrap();
        // t_5 density at 0: Γ(3)/(Γ(5/2)√(5π))
        let at_centre = (ln_gamma(3.0) - ln_gamma(2.5) - 0.5 * (5.0 * std::f64::consts::PI).ln()).exp() / 3.0;
        assert!((p.density(2.0) - at_centre).abs() < 1e-12);
        assert!((p.cdf(2.0) - 0.5).abs() < 1e-12);
        assert!((p.total_mass().unwrap() - 1.0).abs() < 1e-6);
        let (lo, hi) = p.central_interval(0.95);
        // t_5 0.975 quantile 2.570582
        assert!((hi - 2.0 - 3.0 * 2.570_581_836).abs() < 1e-5);
        assert!((lo + hi - 4.0).abs() < 1e-8);
    }

    #[test]
    fn mixture_integrates_to_one() {
        let draws: Vec<ThetaState> = (0..150).map(|i| theta((i as f64 * 0.37).sin(), 0.5 + (i % 7) as f64)).collect();
        let p = PredictiveDensity::from_location_draws(&draws).unwrap();
        let mass = p.total_mass().unwrap();
        assert!((mass - 1.0).abs() < 1e-3);
    }
}
