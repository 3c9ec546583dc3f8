//! Simultaneous M-estimators of regression coefficients and scale.
//!
//! The conditioning statistic `T(y) = (b, s)` solves
//!
//! ```text
//! Σ ψ((y_i − x_iᵀb)/s) x_i = 0
//! Σ χ((y_i − x_iᵀb)/s)     = 0
//! ```
//!
//! with `ψ` odd and `χ` even. Location problems are the special case of a
//! single column of ones.

mod gradients;
mod irls;
mod tuning;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use gradients::{normal_space_basis, statistic_gradients, StatisticGradients};
pub use irls::{estimating_equation_residual, irls_solve, least_squares, mad};
pub use tuning::{chi_centering, efficiency, solve_tuning, TunedFamily};

/// Efficiency at the normal used for every default tuning constant.
pub const DEFAULT_EFFICIENCY: f64 = 0.95;

/// ψ function for the coefficient equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Psi {
    Huber { k: f64 },
    Tukey { c: f64 },
    LeastSquares,
}

impl Psi {
    pub fn psi(&self, u: f64) -> f64 {
        match *self {
            Psi::Huber { k } => u.clamp(-k, k),
            Psi::Tukey { c } => {
                if u.abs() <= c {
                    let t = 1.0 - (u / c).powi(2);
                    u * t * t
                } else {
                    0.0
                }
            }
            Psi::LeastSquares => u,
        }
    }

    /// Derivative of ψ. At the Huber corners `|u| = k` the derivative from
    /// the interior region is used.
    pub fn dpsi(&self, u: f64) -> f64 {
        match *self {
            Psi::Huber { k } => {
                if u.abs() <= k {
                    1.0
                } else {
                    0.0
                }
            }
            Psi::Tukey { c } => {
                if u.abs() <= c {
                    let t = (u / c).powi(2);
                    (1.0 - t) * (1.0 - 5.0 * t)
                } else {
                    0.0
                }
            }
            Psi::LeastSquares => 1.0,
        }
    }

    /// IRLS weight `ψ(u)/u`, equal to 1 at `u = 0`.
    pub fn weight(&self, u: f64) -> f64 {
        match *self {
            Psi::Huber { k } => {
                if u.abs() <= k {
                    1.0
                } else {
                    k / u.abs()
                }
            }
            Psi::Tukey { c } => {
                if u.abs() <= c {
                    let t = 1.0 - (u / c).powi(2);
                    t * t
                } else {
                    0.0
                }
            }
            Psi::LeastSquares => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Psi::Huber { .. } => "huber",
            Psi::Tukey { .. } => "tukey",
            Psi::LeastSquares => "least_squares",
        }
    }
}

/// χ function for the scale equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chi {
    /// `χ(u) = min(|u|, k)² − β_k` with `β_k = E min(|Z|, k)²`.
    HuberProposal2 { k: f64, centering: f64 },
    /// `χ(u) = u² − 1`: the n-denominator standard deviation.
    SdMoment,
}

impl Chi {
    pub fn huber_proposal2(k: f64) -> Self {
        Chi::HuberProposal2 {
            k,
            centering: chi_centering(k),
        }
    }

    pub fn chi(&self, u: f64) -> f64 {
        self.rho(u) - self.target()
    }

    pub fn dchi(&self, u: f64) -> f64 {
        match *self {
            Chi::HuberProposal2 { k, .. } => {
                if u.abs() <= k {
                    2.0 * u
                } else {
                    0.0
                }
            }
            Chi::SdMoment => 2.0 * u,
        }
    }

    /// Nonnegative part of χ; the scale step rescales `s²` by
    /// `mean ρ(r) / target`.
    pub(crate) fn rho(&self, u: f64) -> f64 {
        match *self {
            Chi::HuberProposal2 { k, .. } => u.abs().min(k).powi(2),
            Chi::SdMoment => u * u,
        }
    }

    pub(crate) fn target(&self) -> f64 {
        match *self {
            Chi::HuberProposal2 { centering, .. } => centering,
            Chi::SdMoment => 1.0,
        }
    }
}

/// ψ/χ pair plus solver settings; defines the conditioning statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub psi: Psi,
    pub chi: Chi,
    pub tol: f64,
    pub max_iter: usize,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

impl EstimatorSpec {
    pub fn new(psi: Psi, chi: Chi) -> Self {
        EstimatorSpec {
            psi,
            chi,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    /// Huber ψ with Huber proposal-2 scale, both at 95% efficiency.
    pub fn huber() -> Self {
        let k = default_huber_k();
        EstimatorSpec::new(Psi::Huber { k }, Chi::huber_proposal2(k))
    }

    /// Tukey biweight ψ with Huber proposal-2 scale, both at 95% efficiency.
    pub fn tukey() -> Self {
        let c = default_tukey_c();
        EstimatorSpec::new(Psi::Tukey { c }, Chi::huber_proposal2(default_huber_k()))
    }

    /// Least-squares coefficients with the n-denominator residual scale;
    /// sufficient under the normal linear model.
    pub fn least_squares() -> Self {
        EstimatorSpec::new(Psi::LeastSquares, Chi::SdMoment)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("estimator tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("estimator max_iter must be at least 1");
        }
        match self.psi {
            Psi::Huber { k } if !(k > 0.0) => return bad("huber k must be positive"),
            Psi::Tukey { c } if !(c > 0.0) => return bad("tukey c must be positive"),
            _ => {}
        }
        if let Chi::HuberProposal2 { k, .. } = self.chi {
            if !(k > 0.0) {
                return bad("proposal-2 k must be positive");
            }
        }
        Ok(())
    }
}

fn default_huber_k() -> f64 {
    static K: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *K.get_or_init(|| {
        solve_tuning(TunedFamily::Huber, DEFAULT_EFFICIENCY).expect("95% Huber tuning is attainable")
    })
}

fn default_tukey_c() -> f64 {
    static C: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *C.get_or_init(|| {
        solve_tuning(TunedFamily::Tukey, DEFAULT_EFFICIENCY).expect("95% Tukey tuning is attainable")
    })
}

/// The observed conditioning statistic `(b, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStatistic {
    pub b: DVector<f64>,
    pub s: f64,
}

impl SummaryStatistic {
    /// Largest absolute difference over coefficients and scale.
    pub fn max_deviation(&self, other: &SummaryStatistic) -> f64 {
        let db = (&self.b - &other.b).amax();
        db.max((self.s - other.s).abs())
    }
}

/// Convenience: fit the statistic to `(X, y)` without an initial value.
pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, spec: &EstimatorSpec) -> crate::Result<SummaryStatistic> {
    irls_solve(x, y, spec, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_is_odd() {
        let fams = [Psi::Huber { k: 1.345 }, Psi::Tukey { c: 4.685 }, Psi::LeastSquares];
        for f in fams {
            for &u in &[0.1, 0.9, 1.345, 2.0, 4.0, 6.0] {
                assert_eq!(f.psi(-u), -f.psi(u));
                assert!((f.weight(u) * u - f.psi(u)).abs() < 1e-15);
            }
            assert_eq!(f.weight(0.0), 1.0);
        }
    }

    #[test]
    fn family_shapes() {
        let h = Psi::Huber { k: 1.5 };
        assert_eq!(h.psi(3.0), 1.5);
        assert_eq!(h.psi(-0.4), -0.4);
        let t = Psi::Tukey { c: 2.0 };
        assert_eq!(t.psi(2.5), 0.0);
        assert!((t.psi(1.0) - 1.0 * (0.75f64).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fams = [Psi::Huber { k: 1.345 }, Psi::Tukey { c: 4.685 }];
        for f in fams {
            for &u in &[-3.3, -0.7, 0.2, 1.1, 4.0] {
                let h = 1e-6;
                let fd = (f.psi(u + h) - f.psi(u - h)) / (2.0 * h);
                assert!((fd - f.dpsi(u)).abs() < 1e-8, "{f:?} at {u}");
            }
        }
        let chi = Chi::huber_proposal2(1.345);
        for &u in &[-2.0, -0.3, 0.8, 1.2] {
            let h = 1e-6;
            let fd = (chi.chi(u + h) - chi.chi(u - h)) / (2.0 * h);
            assert!((fd - chi.dchi(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn default_specs_use_95_percent_constants() {
        match EstimatorSpec::huber().psi {
            Psi::Huber { k } => assert!((k - 1.345).abs() < 0.01),
            _ => unreachable!(),
        }
        match EstimatorSpec::tukey().psi {
            Psi::Tukey { c } => assert!((c - 4.685).abs() < 0.01),
            _ => unreachable!(),
        }
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut s = EstimatorSpec::huber();
        s.tol = 0.0;
        assert!(s.validate().is_err());
        let mut s = EstimatorSpec::huber();
        s.max_iter = 0;
        assert!(s.validate().is_err());
        assert!(EstimatorSpec::tukey().validate().is_ok());
    }
}
