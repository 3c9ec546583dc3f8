use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factorial design for contaminated grouped data:
/// `θ_i ~ N(μ, τ²)`, `y_ij ~ (1 − p_i) N(θ_i, σ²) + p_i N(θ_i, m_i σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
    pub p_levels: Vec<f64>,
    pub m_levels: Vec<f64>,
    pub n_levels: Vec<usize>,
    pub replicates: usize,
}

impl SimulationDesign {
    /// Five replicates of the 3×2×3 factorial: 90 groups.
    pub fn standard() -> Self {
        SimulationDesign {
            mu: 0.0,
            tau2: 1.0,
            sigma2: 4.0,
            p_levels: vec![0.1, 0.2, 0.3],
            m_levels: vec![9.0, 25.0],
            n_levels: vec![25, 50, 100],
            replicates: 5,
        }
    }

    /// One replicate of the same factorial: 18 groups.
    pub fn desk() -> Self {
        SimulationDesign {
            replicates: 1,
            ..SimulationDesign::standard()
        }
    }

    pub fn group_count(&self) -> usize {
        self.p_levels.len() * self.m_levels.len() * self.n_levels.len() * self.replicates
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sigma2 > 0.0) || !(self.tau2 >= 0.0) || !self.mu.is_finite() {
            return bad("design needs sigma2 > 0, tau2 >= 0 and finite mu".into());
        }
        if self.p_levels.is_empty() || self.m_levels.is_empty() || self.n_levels.is_empty() || self.replicates == 0 {
            return bad("design factors and replicates must be non-empty".into());
        }
        if let Some(p) = self.p_levels.iter().find(|p| !(**p >= 0.0 && **p < 1.0)) {
            return bad(format!("contamination probability {p} outside [0, 1)"));
        }
        if let Some(m) = self.m_levels.iter().find(|m| !(**m > 1.0)) {
            return bad(format!("variance inflation {m} must exceed 1"));
        }
        if let Some(n) = self.n_levels.iter().find(|n| **n < 3) {
            return bad(format!("group size {n} below 3"));
        }
        Ok(())
    }
}

/// One simulated group with its design cell and true location.
#[derive(Clone, Debug, PartialEq)]
pub struct SimGroup {
    pub p: f64,
    pub m: f64,
    pub n: usize,
    pub replicate: usize,
    pub theta: f64,
    pub y: DVector<f64>,
}

/// Draws one grouped dataset. Groups are ordered replicate, then `p`, then
/// `m`, then `n`.
pub fn simulate_contaminated<R: Rng + ?Sized>(design: &SimulationDesign, rng: &mut R) -> Result<Vec<SimGroup>> {
    design.validate()?;
    let sd = design.sigma2.sqrt();
    let mut out = Vec::with_capacity(design.group_count());
    for replicate in 0..design.replicates {
        for &p in &design.p_levels {
            for &m in &design.m_levels {
                for &n in &design.n_levels {
                    let z: f64 = rng.sample(StandardNormal);
                    let theta = design.mu + design.tau2.sqrt() * z;
                    let wide = m.sqrt() * sd;
                    let y = DVector::from_fn(n, |_, _| {
                        let scale = if rng.random::<f64>() < p { wide } else { sd };
                        theta + scale * rng.sample::<f64, _>(StandardNormal)
                    });
                    out.push(SimGroup {
                        p,
                        m,
                        n,
                        replicate,
                        theta,
                        y,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variance(y: &DVector<f64>) -> f64 {
        let m = y.mean();
        y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64
    }

    #[test]
    fn standard_design_has_ninety_groups() {
        let d = SimulationDesign::standard();
        assert_eq!(d.group_count(), 90);
        let groups = simulate_contaminated(&d, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(groups.len(), 90);
        assert_eq!(groups.iter().filter(|g| g.n == 100).count(), 30);
    }

    #[test]
    fn mixture_variance() {
        for &(p, m) in &[(0.0, 9.0), (0.2, 9.0), (0.1, 25.0)] {
            let d = SimulationDesign {
                p_levels: vec![p],
                m_levels: vec![m],
                n_levels: vec![100_000],
                replicates: 1,
                ..SimulationDesign::standard()
            };
            let g = simulate_contaminated(&d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            let expect = (1.0 - p) * 4.0 + p * m * 4.0;
            let v = variance(&g[0].y);
            assert!((v / expect - 1.0).abs() < 0.02, "p={p} m={m}: {v} vs {expect}");
        }
    }

    #[test]
    fn invalid_designs() {
        let mut d = SimulationDesign::desk();
        d.p_levels = vec![1.0];
        assert!(d.validate().is_err());
        let mut d = SimulationDesign::desk();
        d.m_levels = vec![1.0];
        assert!(d.validate().is_err());
        let mut d = SimulationDesign::desk();
        d.n_levels = vec![2];
        assert!(d.validate().is_err());
    }

    #[test]
    fn seeded_draws_repeat() {
        let d = SimulationDesign::desk();
        let a = simulate_contaminated(&d, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate_contaminated(&d, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
