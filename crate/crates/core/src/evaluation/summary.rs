use serde::{Deserialize, Serialize};

/// Posterior summary of one scalar quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of `mean` by batch means.
    pub mc_se: f64,
    pub q025: f64,
    pub q975: f64,
}

impl DrawSummary {
    pub fn of(draws: &[f64]) -> Self {
        DrawSummary {
            mean: mean(draws),
            sd: sd(draws),
            mc_se: batch_means_se(draws, 20),
            q025: quantile(draws, 0.025),
            q975: quantile(draws, 0.975),
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation, `n − 1` denominator.
pub fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (the usual "type 7" rule).
pub fn quantile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Standard error of the mean of a correlated sequence from `batches`
/// contiguous batch means. Leftover draws at the end are ignored.
pub fn batch_means_se(v: &[f64], batches: usize) -> f64 {
    let size = v.len() / batches.max(1);
    if batches < 2 || size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = v.chunks_exact(size).take(batches).map(mean).collect();
    sd(&means) / (batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn batch_se_matches_iid_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..40_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let se = batch_means_se(&v, 20);
        let iid = 1.0 / (v.len() as f64).sqrt();
        assert!((se / iid - 1.0).abs() < 0.5, "{se} vs {iid}");
    }

    #[test]
    fn ar1_inflates_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let v: Vec<f64> = (0..40_000)
            .map(|_| {
                x = 0.9 * x + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                x
            })
            .collect();
        // long-run variance of AR(1): σ²/(1−φ)² = 100
        let expect = (100.0 / v.len() as f64).sqrt();
        let se = batch_means_se(&v, 20);
        assert!((se / expect - 1.0).abs() < 0.5, "{se} vs {expect}");
    }
}
