use crate::error::{Error, Result};
use crate::estimators::{least_squares, EstimatorSpec, SummaryStatistic};

use super::gibbs::{gibbs_theta_normal, normal_log_likelihood};
use super::proposal::{h_transform, inverse_h, mh_augment_step, AugmentState, RestrictedContext, StepOutcome};
use super::{ChainConfig, Dataset, NIGPrior, Provenance, ThetaState};

/// Consecutive failed proposals tolerated before a chain gives up.
pub(crate) const MAX_CONSECUTIVE_FAILURES: usize = 500;
/// Iterations between drift checks on the augmented data.
pub(crate) const REPAIR_EVERY: usize = 100;

/// Draws and diagnostics from one chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Post-burn-in, thinned.
    pub draws: Vec<ThetaState>,
    pub augmented_final: Dataset,
    /// `accepted / attempted`, or 0 when no Metropolis steps were taken.
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub attempted: usize,
    /// Proposals rejected because the proposal itself could not be built.
    pub failed_proposals: usize,
    /// `log f(y|θ)` of the current complete data, every iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Proposal log density of the current augmented data, every iteration
    /// (empty for unrestricted chains).
    pub log_proposal_trace: Vec<f64>,
    /// Largest `|T(y_aug) − T(y_obs)|` over recorded iterations.
    pub max_constraint_deviation: f64,
    /// The conditioning statistic, for restricted chains.
    pub target: Option<SummaryStatistic>,
}

impl ChainOutput {
    pub fn beta_draws(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|t| t.beta[j]).collect()
    }

    pub fn sigma2_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|t| t.sigma2).collect()
    }
}

/// Restricted-posterior chain for the normal linear model conditioned on
/// `T(y_obs)` under `spec`.
///
/// Starts from the observed data (which lies on the manifold) and
/// `θ = (b_obs, s_obs²)`. Every 100 iterations the statistic of the augmented
/// data is re-solved and, if it has drifted by more than ten solver
/// tolerances, the data are pushed back onto the manifold.
pub fn run_chain(data: &Dataset, prior: &NIGPrior, spec: &EstimatorSpec, config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    prior.validate()?;
    check_prior_dim(prior, data)?;
    let ctx = RestrictedContext::new(&data.x, &data.y, spec, config.proposal)?;
    let mut state = AugmentState::new(&ctx, data.y.clone())?;
    let mut theta = ThetaState {
        beta: ctx.target.b.clone(),
        sigma2: ctx.target.s.powi(2),
    };
    let mut rng = config.rng();

    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.kept_count()),
        augmented_final: data.clone(),
        acceptance_rate: 0.0,
        accepted: 0,
        attempted: 0,
        failed_proposals: 0,
        log_likelihood_trace: Vec::with_capacity(config.iterations),
        log_proposal_trace: Vec::with_capacity(config.iterations),
        max_constraint_deviation: 0.0,
        target: Some(ctx.target.clone()),
    };
    let mut consecutive = 0;

    for it in 0..config.iterations {
        out.attempted += 1;
        match mh_augment_step(&mut state, &theta, &ctx, &mut rng) {
            StepOutcome::Accepted => {
                out.accepted += 1;
                consecutive = 0;
            }
            StepOutcome::Rejected => consecutive = 0,
            StepOutcome::Failed(e) => {
                out.failed_proposals += 1;
                consecutive += 1;
                if consecutive >= MAX_CONSECUTIVE_FAILURES {
                    return Err(Error::TooManyFailedProposals {
                        count: consecutive,
                        last: e.to_string(),
                    });
                }
            }
        }
        theta = gibbs_theta_normal(&ctx.x, &state.y, prior, &theta, &mut rng)?;

        if (it + 1) % REPAIR_EVERY == 0 {
            repair_drift(&ctx, &mut state)?;
        }
        if config.keeps(it) {
            let dev = ctx.constraint_deviation(&state.y)?;
            out.max_constraint_deviation = out.max_constraint_deviation.max(dev);
            out.draws.push(theta.clone());
        }
        out.log_likelihood_trace
            .push(normal_log_likelihood(&ctx.x, &state.y, &theta));
        out.log_proposal_trace.push(state.eval.log_density);
    }

    out.acceptance_rate = out.accepted as f64 / out.attempted as f64;
    out.augmented_final = Dataset {
        y: state.y,
        x: data.x.clone(),
        provenance: Provenance::Augmented,
    };
    Ok(out)
}

/// Re-projects the augmented data onto the manifold when accumulated
/// rounding has moved its statistic by more than the drift limit.
pub(crate) fn repair_drift(ctx: &RestrictedContext, state: &mut AugmentState) -> Result<()> {
    let dev = ctx.constraint_deviation(&state.y)?;
    if dev > ctx.drift_limit() {
        let z = inverse_h(&state.y, &ctx.geom)?;
        let t = h_transform(z.as_vector(), &ctx.x, &ctx.target, &ctx.spec)?;
        *state = AugmentState::new(ctx, t.y)?;
    }
    Ok(())
}

/// Ordinary full-data Gibbs sampler for the normal model, the normal-theory
/// baseline.
pub fn run_normal_full(data: &Dataset, prior: &NIGPrior, config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    prior.validate()?;
    check_prior_dim(prior, data)?;
    let mut theta = initial_theta(data)?;
    let mut rng = config.rng();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.kept_count()),
        augmented_final: data.clone(),
        acceptance_rate: 0.0,
        accepted: 0,
        attempted: 0,
        failed_proposals: 0,
        log_likelihood_trace: Vec::with_capacity(config.iterations),
        log_proposal_trace: Vec::new(),
        max_constraint_deviation: 0.0,
        target: None,
    };
    for it in 0..config.iterations {
        theta = gibbs_theta_normal(&data.x, &data.y, prior, &theta, &mut rng)?;
        if config.keeps(it) {
            out.draws.push(theta.clone());
        }
        out.log_likelihood_trace
            .push(normal_log_likelihood(&data.x, &data.y, &theta));
    }
    Ok(out)
}

/// Least-squares coefficients and residual variance (floored away from 0).
pub(crate) fn initial_theta(data: &Dataset) -> Result<ThetaState> {
    let beta = least_squares(&data.x, &data.y)?;
    let rss = (&data.y - &data.x * &beta).norm_squared();
    let sigma2 = (rss / data.n().max(1) as f64).max(1e-8 * (1.0 + data.y.norm_squared() / data.n().max(1) as f64));
    Ok(ThetaState { beta, sigma2 })
}

pub(crate) fn check_prior_dim(prior: &NIGPrior, data: &Dataset) -> Result<()> {
    if prior.p() != data.p() {
        return Err(Error::Config(format!(
            "prior has {} coefficients, design has {}",
            prior.p(),
            data.p()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{PriorForm, ProposalKind};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn small_location() -> Dataset {
        Dataset::location(DVector::from_vec(vec![
            1.2, 0.4, -0.3, 2.2, 0.9, 1.5, 0.1, 7.0, 1.1, 0.6,
        ]))
    }

    fn short(seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: 600,
            burn_in: 100,
            thin: 1,
            seed,
            proposal: ProposalKind::UniformSphere,
        }
    }

    #[test]
    fn seeded_chains_are_identical() {
        let data = small_location();
        let prior = NIGPrior::scalar(0.0, 100.0, 2.0, 1.0).unwrap();
        let a = run_chain(&data, &prior, &EstimatorSpec::huber(), &short(11)).unwrap();
        let b = run_chain(&data, &prior, &EstimatorSpec::huber(), &short(11)).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.accepted, b.accepted);
        let c = run_chain(&data, &prior, &EstimatorSpec::huber(), &short(12)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn restricted_chain_keeps_the_constraint() {
        let data = small_location();
        let prior = NIGPrior::scalar(0.0, 100.0, 2.0, 1.0).unwrap();
        let spec = EstimatorSpec::tukey();
        let out = run_chain(&data, &prior, &spec, &short(3)).unwrap();
        assert_eq!(out.draws.len(), 500);
        assert!(out.max_constraint_deviation <= 10.0 * spec.tol);
        assert_eq!(out.acceptance_rate, out.accepted as f64 / out.attempted as f64);
        assert!(out.acceptance_rate > 0.05 && out.acceptance_rate < 0.999);
        assert_eq!(out.augmented_final.provenance, Provenance::Augmented);
    }

    #[test]
    fn random_walk_proposal_runs() {
        let data = small_location();
        let prior = NIGPrior::scalar(0.0, 100.0, 2.0, 1.0).unwrap();
        let cfg = ChainConfig {
            proposal: ProposalKind::SphereRandomWalk { kappa: 20.0 },
            ..short(5)
        };
        let out = run_chain(&data, &prior, &EstimatorSpec::huber(), &cfg).unwrap();
        assert!(out.acceptance_rate > 0.1);
    }

    #[test]
    fn full_data_chain_centres_on_conjugate_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = DVector::from_fn(40, |_, _| 3.0 + rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::location(y.clone());
        let prior = NIGPrior::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 10.0),
            2.0,
            2.0,
            PriorForm::Conjugate,
        )
        .unwrap();
        let cfg = ChainConfig {
            iterations: 4000,
            burn_in: 0,
            thin: 1,
            ..short(1)
        };
        let out = run_normal_full(&data, &prior, &cfg).unwrap();
        let mean = out.beta_draws(0).iter().sum::<f64>() / 4000.0;
        let exact = y.sum() / (40.0 + 0.1);
        assert!((mean - exact).abs() < 0.02);
    }

    #[test]
    fn prior_dimension_mismatch_is_a_config_error() {
        let prior = NIGPrior::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            2.0,
            1.0,
            PriorForm::Independent,
        )
        .unwrap();
        let err = run_chain(&small_location(), &prior, &EstimatorSpec::huber(), &short(1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
