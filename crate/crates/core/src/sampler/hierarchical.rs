use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

use super::chain::{repair_drift, MAX_CONSECUTIVE_FAILURES, REPAIR_EVERY};
use super::gibbs::{gibbs_theta_normal, sample_inv_gamma};
use super::proposal::{mh_augment_step, AugmentState, RestrictedContext, StepOutcome};
use super::{ChainConfig, Dataset, NIGPrior, PriorForm, ThetaState};

/// `σ_i² ~ IG(a_s, b_s)` for every group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub a_s: f64,
    pub b_s: f64,
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_s > 0.0 && self.b_s > 0.0) {
            return Err(Error::Config("a_s and b_s must be positive".into()));
        }
        Ok(())
    }
}

/// Per-group draws plus the shared hyperparameters.
#[derive(Clone, Debug)]
pub struct HierarchicalOutput {
    /// `groups[i][k]` is draw `k` of `(θ_i, σ_i²)`; `beta` has length 1.
    pub groups: Vec<Vec<ThetaState>>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    /// Per-group acceptance rates (0 for unrestricted fits).
    pub acceptance_rates: Vec<f64>,
    pub failed_proposals: usize,
    pub max_constraint_deviation: f64,
}

struct GroupState {
    data: Dataset,
    ctx: Option<RestrictedContext>,
    aug: Option<AugmentState>,
    theta: ThetaState,
    rng: ChaCha8Rng,
    accepted: usize,
    attempted: usize,
    failed: usize,
    consecutive: usize,
    last_failure: Option<String>,
    draws: Vec<ThetaState>,
    max_dev: f64,
}

impl GroupState {
    fn y(&self) -> &DVector<f64> {
        match &self.aug {
            Some(a) => &a.y,
            None => &self.data.y,
        }
    }

    fn sweep(&mut self, mu: f64, tau2: f64, hyper: &HyperPrior, it: usize, config: &ChainConfig) -> Result<()> {
        if let (Some(ctx), Some(aug)) = (&self.ctx, &mut self.aug) {
            self.attempted += 1;
            match mh_augment_step(aug, &self.theta, ctx, &mut self.rng) {
                StepOutcome::Accepted => {
                    self.accepted += 1;
                    self.consecutive = 0;
                }
                StepOutcome::Rejected => self.consecutive = 0,
                StepOutcome::Failed(e) => {
                    self.failed += 1;
                    self.consecutive += 1;
                    self.last_failure = Some(e.to_string());
                }
            }
        }
        let prior = NIGPrior {
            mu0: DVector::from_element(1, mu),
            sigma0: DMatrix::from_element(1, 1, tau2),
            a0: hyper.a_s,
            b0: hyper.b_s,
            form: PriorForm::Independent,
        };
        let y = self.y().clone();
        self.theta = gibbs_theta_normal(&self.data.x, &y, &prior, &self.theta, &mut self.rng)?;

        if let (Some(ctx), Some(aug)) = (&self.ctx, &mut self.aug) {
            if (it + 1) % REPAIR_EVERY == 0 {
                repair_drift(ctx, aug)?;
            }
            if config.keeps(it) {
                self.max_dev = self.max_dev.max(ctx.constraint_deviation(&aug.y)?);
            }
        }
        if config.keeps(it) {
            self.draws.push(self.theta.clone());
        }
        Ok(())
    }
}

/// Gibbs sampler for the normal hierarchical location model
///
/// ```text
/// θ_i ~ N(μ, τ²),  σ_i² ~ IG(a_s, b_s),  y_ij ~ N(θ_i, σ_i²),  π(μ, τ²) ∝ τ⁻²
/// ```
///
/// With `spec` set, each group's data are replaced by augmented data
/// conditioned on that group's own statistic, giving the restricted
/// posterior; with `None` the groups' observed data are used directly.
///
/// Group updates within a sweep are independent given `(μ, τ²)` and run in
/// parallel, each on its own random substream; `(μ, τ²)` are then drawn from
/// the main stream.
pub fn run_hierarchical(
    groups: &[Dataset],
    hyper: &HyperPrior,
    spec: Option<&EstimatorSpec>,
    config: &ChainConfig,
) -> Result<HierarchicalOutput> {
    config.validate()?;
    hyper.validate()?;
    let g = groups.len();
    if g < 3 {
        return Err(Error::ImproperPosterior { groups: g });
    }
    for (i, d) in groups.iter().enumerate() {
        if d.p() != 1 || d.x.iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidInput(format!("group {i} is not a location-scale dataset")));
        }
        if d.n() < 3 {
            return Err(Error::TooFewRows { n: d.n(), p: 1 });
        }
    }

    let mut states = groups
        .iter()
        .enumerate()
        .map(|(i, d)| init_group(d, spec, config, i))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = config.rng();
    let thetas: Vec<f64> = states.iter().map(|s| s.theta.beta[0]).collect();
    let mut mu = thetas.iter().sum::<f64>() / g as f64;
    let mut tau2 = {
        let v = thetas.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / (g - 1) as f64;
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };

    let mut mu_draws = Vec::with_capacity(config.kept_count());
    let mut tau2_draws = Vec::with_capacity(config.kept_count());
    for it in 0..config.iterations {
        states
            .par_iter_mut()
            .try_for_each(|s| s.sweep(mu, tau2, hyper, it, config))?;
        if let Some(s) = states.iter().find(|s| s.consecutive >= MAX_CONSECUTIVE_FAILURES) {
            return Err(Error::TooManyFailedProposals {
                count: s.consecutive,
                last: s.last_failure.clone().unwrap_or_default(),
            });
        }

        let thetas: Vec<f64> = states.iter().map(|s| s.theta.beta[0]).collect();
        let mean = thetas.iter().sum::<f64>() / g as f64;
        let z: f64 = rng.sample(StandardNormal);
        mu = mean + (tau2 / g as f64).sqrt() * z;
        let ss: f64 = thetas.iter().map(|t| (t - mu).powi(2)).sum();
        tau2 = sample_inv_gamma(g as f64 / 2.0, ss / 2.0, &mut rng)?;

        if config.keeps(it) {
            mu_draws.push(mu);
            tau2_draws.push(tau2);
        }
    }

    Ok(HierarchicalOutput {
        acceptance_rates: states
            .iter()
            .map(|s| {
                if s.attempted == 0 {
                    0.0
                } else {
                    s.accepted as f64 / s.attempted as f64
                }
            })
            .collect(),
        failed_proposals: states.iter().map(|s| s.failed).sum(),
        max_constraint_deviation: states.iter().map(|s| s.max_dev).fold(0.0, f64::max),
        groups: states.into_iter().map(|s| s.draws).collect(),
        mu: mu_draws,
        tau2: tau2_draws,
    })
}

fn init_group(d: &Dataset, spec: Option<&EstimatorSpec>, config: &ChainConfig, index: usize) -> Result<GroupState> {
    let (ctx, aug, theta) = match spec {
        Some(spec) => {
            let ctx = RestrictedContext::new(&d.x, &d.y, spec, config.proposal)?;
            let aug = AugmentState::new(&ctx, d.y.clone())?;
            let theta = ThetaState {
                beta: ctx.target.b.clone(),
                sigma2: ctx.target.s.powi(2),
            };
            (Some(ctx), Some(aug), theta)
        }
        None => (None, None, super::chain::initial_theta(d)?),
    };
    Ok(GroupState {
        data: d.clone(),
        ctx,
        aug,
        theta,
        rng: config.substream(index as u64),
        accepted: 0,
        attempted: 0,
        failed: 0,
        consecutive: 0,
        last_failure: None,
        draws: Vec::with_capacity(config.kept_count()),
        max_dev: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ProposalKind;
    use rand::SeedableRng;

    fn groups(g: usize, n: usize, seed: u64) -> Vec<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g)
            .map(|i| {
                let y = DVector::from_fn(n, |_, _| i as f64 + 1.5 * rng.sample::<f64, _>(StandardNormal));
                Dataset::location(y)
            })
            .collect()
    }

    fn cfg(seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: 400,
            burn_in: 100,
            thin: 2,
            seed,
            proposal: ProposalKind::UniformSphere,
        }
    }

    #[test]
    fn needs_three_groups() {
        let hyper = HyperPrior { a_s: 5.0, b_s: 10.0 };
        let err = run_hierarchical(&groups(2, 5, 1), &hyper, None, &cfg(1)).unwrap_err();
        assert!(matches!(err, Error::ImproperPosterior { groups: 2 }));
    }

    #[test]
    fn restricted_groups_keep_their_statistics() {
        let hyper = HyperPrior { a_s: 5.0, b_s: 10.0 };
        let spec = EstimatorSpec::huber();
        let out = run_hierarchical(&groups(4, 8, 2), &hyper, Some(&spec), &cfg(2)).unwrap();
        assert_eq!(out.groups.len(), 4);
        assert_eq!(out.groups[0].len(), 150);
        assert_eq!(out.mu.len(), 150);
        assert!(out.max_constraint_deviation <= 10.0 * spec.tol);
        assert!(out.acceptance_rates.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn parallel_sweeps_are_deterministic() {
        let hyper = HyperPrior { a_s: 5.0, b_s: 10.0 };
        let spec = EstimatorSpec::tukey();
        let a = run_hierarchical(&groups(5, 6, 3), &hyper, Some(&spec), &cfg(9)).unwrap();
        let b = run_hierarchical(&groups(5, 6, 3), &hyper, Some(&spec), &cfg(9)).unwrap();
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn identical_groups_pool_toward_common_mean() {
        let hyper = HyperPrior { a_s: 5.0, b_s: 10.0 };
        let base = groups(1, 30, 4).remove(0);
        let gs = vec![base.clone(); 6];
        let out = run_hierarchical(
            &gs,
            &hyper,
            None,
            &ChainConfig {
                iterations: 3000,
                burn_in: 500,
                thin: 1,
                ..cfg(4)
            },
        )
        .unwrap();
        let mean_mu = out.mu.iter().sum::<f64>() / out.mu.len() as f64;
        assert!((mean_mu - base.y.mean()).abs() < 0.1, "{mean_mu} vs {}", base.y.mean());
    }
}
