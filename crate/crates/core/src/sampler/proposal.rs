use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::{irls_solve, normal_space_basis, statistic_gradients, EstimatorSpec, SummaryStatistic};
use crate::geometry::{build_geometry, sample_sphere, vol_p, GeometryCache, SphereSample};
use crate::special::{ln_bessel_i, ln_unit_sphere_area};

use super::gibbs::normal_log_likelihood;
use super::{ProposalKind, ThetaState};

const MIN_SCALE: f64 = 1e-12;
const MIN_COS: f64 = 1e-12;
/// Allowed statistic drift, in units of the solver tolerance.
pub(crate) const DRIFT_FACTOR: f64 = 10.0;

/// Everything fixed over a restricted chain: the design, its geometry, the
/// estimator and the observed statistic.
#[derive(Clone, Debug)]
pub struct RestrictedContext {
    pub x: DMatrix<f64>,
    pub geom: GeometryCache,
    pub spec: EstimatorSpec,
    pub target: SummaryStatistic,
    pub proposal: ProposalKind,
}

impl RestrictedContext {
    pub fn new(x: &DMatrix<f64>, y_obs: &DVector<f64>, spec: &EstimatorSpec, proposal: ProposalKind) -> Result<Self> {
        spec.validate()?;
        let geom = build_geometry(x)?;
        if geom.project_complement(y_obs).norm() < MIN_SCALE * y_obs.amax().max(1.0) {
            return Err(Error::DegenerateProjection);
        }
        let target = irls_solve(x, y_obs, spec, None)?;
        Ok(RestrictedContext {
            x: x.clone(),
            geom,
            spec: *spec,
            target,
            proposal,
        })
    }

    /// `max(|b − b_obs|, |s − s_obs|)` with `T(y)` re-solved from scratch.
    pub fn constraint_deviation(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(irls_solve(&self.x, y, &self.spec, None)?.max_deviation(&self.target))
    }

    pub(crate) fn drift_limit(&self) -> f64 {
        DRIFT_FACTOR * self.spec.tol
    }
}

/// Output of the h-transform.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub y: DVector<f64>,
    /// `s_obs / s(z)`.
    pub r: f64,
    /// `T(z)` for the input vector.
    pub z_stat: SummaryStatistic,
}

/// Maps `z` onto the constraint manifold:
/// `y = r·z + X(b_obs − b(X, r·z))` with `r = s_obs / s(X, z)`.
///
/// By equivariance `b(X, r·z) = r·b(X, z)`, so one solve at `z` suffices.
pub fn h_transform(
    z: &DVector<f64>,
    x: &DMatrix<f64>,
    target: &SummaryStatistic,
    spec: &EstimatorSpec,
) -> Result<Transformed> {
    let z_stat = irls_solve(x, z, spec, None)?;
    if !(z_stat.s > MIN_SCALE) {
        return Err(Error::ZeroScale);
    }
    let r = target.s / z_stat.s;
    let shift = &target.b - &z_stat.b * r;
    let y = z * r + x * shift;

    // warm-started re-solve: returns at once when the equations already hold
    let check = irls_solve(x, &y, spec, Some((&target.b, target.s)))?;
    let deviation = check.max_deviation(target);
    if deviation > DRIFT_FACTOR * spec.tol {
        return Err(Error::PostConditionViolated { deviation });
    }
    Ok(Transformed { y, r, z_stat })
}

/// `z* = Qy / ‖Qy‖`, the sphere point that `h` maps to `y`.
pub fn inverse_h(y: &DVector<f64>, geom: &GeometryCache) -> Result<SphereSample> {
    SphereSample::from_vector(geom, y)
}

/// Density of sphere proposals with respect to surface measure on the unit
/// sphere of `C⊥(X)`.
#[derive(Clone, Debug, PartialEq)]
pub enum SphereDensity {
    Uniform,
    VonMisesFisher { mean: DVector<f64>, kappa: f64 },
}

impl SphereDensity {
    /// Log density at unit vector `z`; `dim` is the ambient dimension
    /// `n − p` of the complement.
    pub fn log_density(&self, z: &DVector<f64>, dim: usize) -> f64 {
        match self {
            SphereDensity::Uniform => -ln_unit_sphere_area(dim),
            SphereDensity::VonMisesFisher { mean, kappa } => vmf_log_norm(dim, *kappa) + kappa * mean.dot(z),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, geom: &GeometryCache, rng: &mut R) -> Result<SphereSample> {
        match self {
            SphereDensity::Uniform => sample_sphere(geom, rng),
            SphereDensity::VonMisesFisher { mean, kappa } => sample_vmf(geom, mean, *kappa, rng),
        }
    }
}

fn vmf_log_norm(dim: usize, kappa: f64) -> f64 {
    let h = dim as f64 / 2.0;
    (h - 1.0) * kappa.ln() - h * (2.0 * std::f64::consts::PI).ln() - ln_bessel_i(h - 1.0, kappa)
}

/// Wood's rejection sampler for the cosine to the mean direction, then a
/// uniform direction in the tangent space of the mean.
fn sample_vmf<R: Rng + ?Sized>(geom: &GeometryCache, mean: &DVector<f64>, kappa: f64, rng: &mut R) -> Result<SphereSample> {
    let d = geom.n() - geom.p();
    let dm1 = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let w = loop {
        let zb: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * zb) / (1.0 - (1.0 - b) * zb);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    for _ in 0..100 {
        let g = DVector::<f64>::from_fn(geom.n(), |_, _| rng.sample(StandardNormal));
        let mut v = geom.project_complement(&g);
        v.axpy(-mean.dot(&v), mean, 1.0);
        let norm = v.norm();
        if norm > 1e-12 {
            let z = mean * w + v * ((1.0 - w * w).max(0.0).sqrt() / norm);
            return SphereSample::from_vector(geom, &z);
        }
    }
    Err(Error::DegenerateDraw { attempts: 100 })
}

/// The factors of the proposal density of a dataset on the manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalEvaluation {
    /// `s_obs / s(X, z*)`, equal to `‖Qy‖` on the manifold.
    pub r: f64,
    pub log_cos_gamma: f64,
    pub log_vol_p: f64,
    /// `log p(z*)` under the sphere base density.
    pub log_base: f64,
    pub log_density: f64,
    /// `n − p − 1`.
    pub manifold_dim: usize,
}

impl ProposalEvaluation {
    fn assemble(r: f64, log_cos_gamma: f64, log_vol_p: f64, log_base: f64, manifold_dim: usize) -> Self {
        let mut e = ProposalEvaluation {
            r,
            log_cos_gamma,
            log_vol_p,
            log_base,
            log_density: 0.0,
            manifold_dim,
        };
        e.log_density = e.reassembled();
        e
    }

    /// `log p(z*) − (n−p−1) log r + log|cos γ| + log Vol(P)`.
    pub fn reassembled(&self) -> f64 {
        self.log_base - self.manifold_dim as f64 * self.r.ln() + self.log_cos_gamma + self.log_vol_p
    }

    /// Everything except the base density.
    pub fn log_jacobian(&self) -> f64 {
        self.log_density - self.log_base
    }
}

/// Density, with respect to surface measure on the manifold, of proposing
/// `y` by drawing `z*` from `base` and applying the h-transform.
///
/// `cos γ` compares the sphere normal `z = Qy` with `∇s(X, y)`, and the
/// tangent volume comes from the normal-space basis of the statistic
/// gradients. `y` must satisfy `T(y) = target`.
pub fn proposal_log_density(y: &DVector<f64>, ctx: &RestrictedContext, base: &SphereDensity) -> Result<ProposalEvaluation> {
    let z = ctx.geom.project_complement(y);
    let r = z.norm();
    if r < MIN_SCALE {
        return Err(Error::DegenerateProjection);
    }
    let z_star = &z / r;

    let grads = statistic_gradients(&ctx.x, y, &ctx.spec, &ctx.target)?;
    let gs = &grads.grad_s;
    let cos = gs.dot(&z) / (gs.norm() * r);
    if !(cos.abs() >= MIN_COS) {
        return Err(Error::NearTangentDegeneracy { cos: cos.abs() });
    }
    let basis = normal_space_basis(&grads)?;
    let vol = vol_p(&ctx.geom, &basis)?;
    let log_base = base.log_density(&z_star, ctx.geom.n() - ctx.geom.p());
    Ok(ProposalEvaluation::assemble(
        r,
        cos.abs().ln(),
        vol.log_vol,
        log_base,
        ctx.geom.manifold_dim(),
    ))
}

/// Current augmented dataset with its sphere point and cached density
/// factors.
#[derive(Clone, Debug)]
pub struct AugmentState {
    pub y: DVector<f64>,
    pub z_star: DVector<f64>,
    pub eval: ProposalEvaluation,
}

impl AugmentState {
    /// `y` must lie on the manifold (the observed data always does).
    pub fn new(ctx: &RestrictedContext, y: DVector<f64>) -> Result<Self> {
        let z_star = inverse_h(&y, &ctx.geom)?.into_vector();
        let eval = proposal_log_density(&y, ctx, &SphereDensity::Uniform)?;
        Ok(AugmentState { y, z_star, eval })
    }
}

/// Result of one augmentation step. A failed proposal (for instance a
/// proposed `z*` whose scale collapses) leaves the state unchanged and counts
/// as a rejection.
#[derive(Debug)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    Failed(Error),
}

/// `log R = log f(y_p|θ) − log f(y_c|θ) + log p(y_c) − log p(y_p)`.
pub fn log_acceptance_ratio(
    x: &DMatrix<f64>,
    theta: &ThetaState,
    y_current: &DVector<f64>,
    log_q_current: f64,
    y_proposed: &DVector<f64>,
    log_q_proposed: f64,
) -> f64 {
    normal_log_likelihood(x, y_proposed, theta) - normal_log_likelihood(x, y_current, theta) + log_q_current
        - log_q_proposed
}

/// Metropolis–Hastings update of the augmented data given `θ`.
pub fn mh_augment_step<R: Rng + ?Sized>(
    state: &mut AugmentState,
    theta: &ThetaState,
    ctx: &RestrictedContext,
    rng: &mut R,
) -> StepOutcome {
    let forward = base_at(ctx.proposal, &state.z_star);
    let proposed = forward
        .sample(&ctx.geom, rng)
        .and_then(|z| h_transform(z.as_vector(), &ctx.x, &ctx.target, &ctx.spec))
        .and_then(|t| {
            let eval = proposal_log_density(&t.y, ctx, &forward)?;
            let z_star = inverse_h(&t.y, &ctx.geom)?.into_vector();
            Ok((t.y, z_star, eval))
        });
    let (y_p, z_p, eval_p) = match proposed {
        Ok(v) => v,
        Err(e) => return StepOutcome::Failed(e),
    };

    let reverse = base_at(ctx.proposal, &z_p);
    let dim = ctx.geom.n() - ctx.geom.p();
    let log_q_current = state.eval.log_jacobian() + reverse.log_density(&state.z_star, dim);
    let log_r = log_acceptance_ratio(&ctx.x, theta, &state.y, log_q_current, &y_p, eval_p.log_density);

    let u: f64 = rng.random();
    if u.ln() < log_r {
        *state = AugmentState {
            y: y_p,
            z_star: z_p,
            eval: eval_p,
        };
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

fn base_at(kind: ProposalKind, centre: &DVector<f64>) -> SphereDensity {
    match kind {
        ProposalKind::UniformSphere => SphereDensity::Uniform,
        ProposalKind::SphereRandomWalk { kappa } => SphereDensity::VonMisesFisher {
            mean: centre.clone(),
            kappa,
        },
    }
}
