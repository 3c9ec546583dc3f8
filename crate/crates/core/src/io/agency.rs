//! Synthetic stand-in for grouped agency performance data.
//!
//! Each state has its own regression line through the origin on a square-root
//! count scale. A share of agencies has a second contract type with a flatter
//! line, and some agencies close before the final period and report zero.
//! Three periods are generated: an early period used to set priors, the
//! covariate period and the response period.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgencyDesign {
    /// Agency count per state.
    pub state_sizes: Vec<usize>,
    pub slope: f64,
    /// Between-state sd of the slope.
    pub slope_sd: f64,
    pub noise_sd: f64,
    /// Slope multiplier for the second contract type.
    pub type2_factor: f64,
    pub type2_fraction: f64,
    pub closed_fraction: f64,
}

impl Default for AgencyDesign {
    fn default() -> Self {
        AgencyDesign {
            state_sizes: vec![222, 40, 117, 46],
            slope: 1.0,
            slope_sd: 0.05,
            noise_sd: 0.12,
            type2_factor: 0.6,
            type2_fraction: 0.2,
            closed_fraction: 0.1,
        }
    }
}

impl AgencyDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.state_sizes.is_empty() || self.state_sizes.iter().any(|&n| n < 8) {
            return bad("every state needs at least 8 agencies");
        }
        if !(self.noise_sd > 0.0) || !(self.slope_sd >= 0.0) || !self.slope.is_finite() {
            return bad("agency noise must be positive and slopes finite");
        }
        for f in [self.type2_fraction, self.closed_fraction] {
            if !(0.0..1.0).contains(&f) {
                return bad("agency fractions must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agency {
    pub state: String,
    /// Contract type, 1 or 2.
    pub kind: u8,
    pub open: bool,
    pub early: f64,
    pub x: f64,
    pub y: f64,
}

/// All agencies of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct AgencyState {
    pub name: String,
    pub agencies: Vec<Agency>,
}

impl AgencyState {
    /// `y` on `x` without intercept.
    pub fn current(&self) -> Result<Dataset> {
        self.regression(|a| a.x, |a| a.y)
    }

    /// The earlier period: `x` on `early`.
    pub fn prior_period(&self) -> Result<Dataset> {
        self.regression(|a| a.early, |a| a.x)
    }

    fn regression(&self, x: impl Fn(&Agency) -> f64, y: impl Fn(&Agency) -> f64) -> Result<Dataset> {
        let n = self.agencies.len();
        Dataset::new(
            DVector::from_iterator(n, self.agencies.iter().map(&y)),
            DMatrix::from_iterator(n, 1, self.agencies.iter().map(&x)),
        )
    }

    /// Open type-1 agencies: the cases predictions are judged on.
    pub fn scored(&self) -> Vec<bool> {
        self.agencies.iter().map(|a| a.open && a.kind == 1).collect()
    }
}

pub fn synthetic_agency<R: Rng + ?Sized>(design: &AgencyDesign, rng: &mut R) -> Result<Vec<AgencyState>> {
    design.validate()?;
    let noise = Normal::new(0.0, design.noise_sd).expect("validated sd");
    let base = Normal::new(1.2, 0.45).expect("constant");
    let mut states = Vec::with_capacity(design.state_sizes.len());
    for (s, &n) in design.state_sizes.iter().enumerate() {
        let slope = design.slope + design.slope_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let name = format!("state{:02}", s + 1);
        let agencies = (0..n)
            .map(|_| {
                let kind = if rng.random::<f64>() < design.type2_fraction { 2 } else { 1 };
                let b = if kind == 2 { slope * design.type2_factor } else { slope };
                let early = f64::abs(base.sample(rng)) + 0.1;
                let x = (slope * early + noise.sample(rng)).max(0.0);
                let open = rng.random::<f64>() >= design.closed_fraction;
                let y = if open { (b * x + noise.sample(rng)).max(0.0) } else { 0.0 };
                Agency {
                    state: name.clone(),
                    kind,
                    open,
                    early,
                    x,
                    y,
                }
            })
            .collect();
        states.push(AgencyState { name, agencies });
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes_and_zero_mass() {
        let d = AgencyDesign::default();
        let states = synthetic_agency(&d, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(states.iter().map(|s| s.agencies.len()).collect::<Vec<_>>(), d.state_sizes);
        let all: Vec<&Agency> = states.iter().flat_map(|s| &s.agencies).collect();
        let closed = all.iter().filter(|a| !a.open).count() as f64 / all.len() as f64;
        assert!((closed - 0.1).abs() < 0.05);
        assert!(all.iter().filter(|a| !a.open).all(|a| a.y == 0.0));
        assert!(all.iter().any(|a| a.kind == 2));
    }

    #[test]
    fn deterministic() {
        let d = AgencyDesign::default();
        let a = synthetic_agency(&d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = synthetic_agency(&d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }
}
