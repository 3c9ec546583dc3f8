//! Data-augmented Metropolis-within-Gibbs sampling of the restricted
//! posterior `π(θ | T(y_obs))`.
//!
//! One sweep alternates two full conditionals:
//!
//! 1. the complete data `y | θ, T(y) = T(y_obs)`, updated by a Metropolis
//!    step whose proposals live on the constraint manifold `A`;
//! 2. `θ | y`, the ordinary full-data posterior, drawn exactly.

mod chain;
mod gibbs;
mod hierarchical;
mod proposal;
mod student_t;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{run_chain, run_normal_full, ChainOutput};
pub use gibbs::{gibbs_theta_normal, gibbs_theta_weighted, normal_log_likelihood};
pub use hierarchical::{run_hierarchical, HierarchicalOutput, HyperPrior};
pub use proposal::{
    h_transform, inverse_h, log_acceptance_ratio, mh_augment_step, proposal_log_density, AugmentState,
    ProposalEvaluation, RestrictedContext, SphereDensity, StepOutcome, Transformed,
};
pub use student_t::{run_student_t_baseline, t_adjusted_prior};

/// Where a response vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Augmented,
}

/// Response vector with its design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::InvalidInput(format!(
                "response has {} entries but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            y,
            x,
            provenance: Provenance::Observed,
        })
    }

    /// Location-scale data: the design is a single column of ones.
    pub fn location(y: DVector<f64>) -> Self {
        let n = y.len();
        Dataset {
            y,
            x: DMatrix::from_element(n, 1, 1.0),
            provenance: Provenance::Observed,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// How `β` and `σ²` are coupled a priori.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorForm {
    /// `β ~ N(μ0, Σ0)` independent of `σ² ~ IG(a0, b0)`.
    Independent,
    /// `β | σ² ~ N(μ0, σ²Σ0)`, `σ² ~ IG(a0, b0)`.
    Conjugate,
}

/// Normal / inverse-gamma prior on `(β, σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NIGPrior {
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub a0: f64,
    pub b0: f64,
    pub form: PriorForm,
}

impl NIGPrior {
    pub fn new(mu0: DVector<f64>, sigma0: DMatrix<f64>, a0: f64, b0: f64, form: PriorForm) -> Result<Self> {
        let prior = NIGPrior {
            mu0,
            sigma0,
            a0,
            b0,
            form,
        };
        prior.validate()?;
        Ok(prior)
    }

    /// Scalar-coefficient prior `β ~ N(mean, var)`, independent of `σ²`.
    pub fn scalar(mean: f64, var: f64, a0: f64, b0: f64) -> Result<Self> {
        NIGPrior::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
            a0,
            b0,
            PriorForm::Independent,
        )
    }

    pub fn p(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mu0.len();
        if p == 0 || self.sigma0.shape() != (p, p) {
            return Err(Error::Config(format!(
                "prior covariance must be {p}×{p}, got {:?}",
                self.sigma0.shape()
            )));
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::Config("inverse-gamma parameters must be positive".into()));
        }
        let asym = (&self.sigma0 - self.sigma0.transpose()).amax();
        if asym > 1e-10 * self.sigma0.amax().max(1e-300) {
            return Err(Error::Config("prior covariance is not symmetric".into()));
        }
        let min_eig = self.sigma0.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::Config("prior covariance is not positive definite".into()));
        }
        Ok(())
    }
}

/// Model parameters `θ = (β, σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaState {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

/// Base distribution for sphere proposals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKind {
    /// Independence proposal, uniform on the sphere.
    UniformSphere,
    /// Von Mises–Fisher step centred at the current sphere point.
    SphereRandomWalk { kappa: f64 },
}

/// Chain length, thinning, seed and proposal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub proposal: ProposalKind,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            seed: 0,
            proposal: ProposalKind::UniformSphere,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn_in must be smaller than iterations".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let ProposalKind::SphereRandomWalk { kappa } = self.proposal {
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::Config("random-walk concentration must be positive".into()));
            }
        }
        Ok(())
    }

    /// Whether iteration `it` (0-based) is kept.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in) % self.thin == 0
    }

    pub fn kept_count(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Independent stream `index` under the same seed.
    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index + 1);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_validation() {
        assert!(NIGPrior::scalar(0.0, 1.0, 2.0, 1.0).is_ok());
        assert!(NIGPrior::scalar(0.0, -1.0, 2.0, 1.0).is_err());
        assert!(NIGPrior::scalar(0.0, 1.0, 0.0, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(NIGPrior::new(DVector::zeros(2), asym, 1.0, 1.0, PriorForm::Conjugate).is_err());
    }

    #[test]
    fn chain_config_thinning() {
        let c = ChainConfig {
            iterations: 20,
            burn_in: 5,
            thin: 4,
            ..ChainConfig::default()
        };
        let kept: Vec<usize> = (0..20).filter(|&i| c.keeps(i)).collect();
        assert_eq!(kept, vec![5, 9, 13, 17]);
        assert_eq!(c.kept_count(), 4);
        assert!(ChainConfig { burn_in: 20, ..c }.validate().is_err());
        assert!(ChainConfig { thin: 0, ..c }.validate().is_err());
    }

    #[test]
    fn dataset_shape_check() {
        assert!(Dataset::new(DVector::zeros(3), DMatrix::zeros(4, 1)).is_err());
        let d = Dataset::location(DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!((d.n(), d.p()), (3, 1));
    }
}
