use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trimmed mean holdout log density for every method on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct TlmScore {
    /// `floor(αM)`.
    pub trimmed: usize,
    /// Holdout cases that survived trimming, in original order.
    pub kept: Vec<usize>,
    /// One score per method.
    pub scores: Vec<f64>,
}

/// Trimmed log marginal pseudo-likelihood.
///
/// `logdens[k][i]` is method `k`'s log predictive density at holdout case
/// `i`. Cases are ranked by the `base` method's values (ties broken by case
/// index), the lowest `floor(α·M)` are dropped, and every method is averaged
/// over the remaining cases.
pub fn tlm_score(logdens: &[Vec<f64>], base: usize, alpha: f64) -> Result<TlmScore> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("trimming fraction {alpha} outside [0, 1)")));
    }
    let base_vals = logdens
        .get(base)
        .ok_or_else(|| Error::InvalidInput(format!("base method {base} out of range")))?;
    let m = base_vals.len();
    if logdens.iter().any(|v| v.len() != m) {
        return Err(Error::InvalidInput("methods scored on different holdout sets".into()));
    }
    let trimmed = (alpha * m as f64).floor() as usize;
    if trimmed >= m {
        return Err(Error::EmptyAfterTrim { trimmed, total: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    // sort_by is stable, so equal base values keep index order
    order.sort_by(|&a, &b| base_vals[a].total_cmp(&base_vals[b]));
    let mut kept: Vec<usize> = order[trimmed..].to_vec();
    kept.sort_unstable();
    let denom = (m - trimmed) as f64;
    let scores = logdens
        .iter()
        .map(|v| kept.iter().map(|&i| v[i]).sum::<f64>() / denom)
        .collect();
    Ok(TlmScore { trimmed, kept, scores })
}

/// TLM scores across repeated splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlmReport {
    pub alpha: f64,
    pub base: String,
    pub methods: Vec<String>,
    /// `per_split[s][k]`: method `k` on split `s`.
    pub per_split: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl TlmReport {
    pub fn from_splits(methods: Vec<String>, base: usize, alpha: f64, splits: &[TlmScore]) -> Self {
        let k = methods.len();
        let s = splits.len() as f64;
        let per_split: Vec<Vec<f64>> = splits.iter().map(|t| t.scores.clone()).collect();
        let mean: Vec<f64> = (0..k).map(|j| per_split.iter().map(|r| r[j]).sum::<f64>() / s).collect();
        let sd = (0..k)
            .map(|j| {
                if splits.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = per_split.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                (ss / (s - 1.0)).sqrt()
            })
            .collect();
        TlmReport {
            alpha,
            base: methods.get(base).cloned().unwrap_or_default(),
            methods,
            per_split,
            mean,
            sd,
        }
    }
}

/// Case indices of a training/holdout partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Random training/holdout split of `n` cases.
///
/// Within each stratum the training size is `fraction · size` rounded to the
/// nearest integer (halves round up), kept between 1 and `size − 1` so both
/// sides are non-empty. Without strata all cases form one stratum.
pub fn crossval_split<R: Rng + ?Sized>(
    n: usize,
    fraction: f64,
    strata: Option<&[String]>,
    rng: &mut R,
) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("training fraction {fraction} outside (0, 1)")));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match strata {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidInput("one stratum label per case is required".into()));
            }
            for (i, l) in labels.iter().enumerate() {
                groups.entry(l.as_str()).or_default().push(i);
            }
        }
        None => {
            groups.insert("all", (0..n).collect());
        }
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (label, mut idx) in groups {
        let size = idx.len();
        if size < 2 {
            return Err(Error::StratumTooSmall {
                stratum: label.to_string(),
                size,
            });
        }
        let k = ((fraction * size as f64).round() as usize).clamp(1, size - 1);
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..k]);
        holdout.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok(Split { train, holdout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_trace() {
        let base = vec![-9.0, -1.0, -2.0, -8.0, -3.0];
        let other = vec![-1.0, -2.0, -3.0, -4.0, -5.0];
        let t = tlm_score(&[base, other], 0, 0.3).unwrap();
        assert_eq!(t.trimmed, 1);
        assert_eq!(t.kept, vec![1, 2, 3, 4]);
        assert_eq!(t.scores, vec![-14.0 / 4.0, -14.0 / 4.0]);
    }

    #[test]
    fn zero_alpha_is_plain_mean() {
        let v = vec![-1.0, -2.5, -0.5];
        let t = tlm_score(&[v], 0, 0.0).unwrap();
        assert!((t.scores[0] + 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_are_trim_invariant() {
        let v = vec![-2.0; 7];
        for alpha in [0.0, 0.2, 0.5, 0.9] {
            assert_eq!(tlm_score(&[v.clone()], 0, alpha).unwrap().scores[0], -2.0);
        }
    }

    #[test]
    fn ties_keep_lower_indices_first() {
        let v = vec![-1.0, -1.0, -1.0, 0.0];
        let w = vec![10.0, 20.0, 30.0, 40.0];
        let t = tlm_score(&[v, w], 0, 0.5).unwrap();
        assert_eq!(t.kept, vec![2, 3]);
    }

    #[test]
    fn nothing_left_to_score() {
        assert_eq!(tlm_score(&[vec![-1.0]], 0, 0.99).unwrap().trimmed, 0);
        assert!(matches!(
            tlm_score(&[vec![]], 0, 0.0),
            Err(Error::EmptyAfterTrim { trimmed: 0, total: 0 })
        ));
        assert!(tlm_score(&[vec![-1.0, -2.0]], 0, 1.0).is_err());
    }

    #[test]
    fn unstratified_partition() {
        let s = crossval_split(10, 0.5, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((s.train.len(), s.holdout.len()), (5, 5));
        let mut all: Vec<usize> = s.train.iter().chain(&s.holdout).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_rounding() {
        let labels: Vec<String> = (0..10).map(|i| if i < 7 { "a".into() } else { "b".into() }).collect();
        let s = crossval_split(10, 0.5, Some(&labels), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(s.train.iter().filter(|&&i| i < 7).count(), 4);
        assert_eq!(s.train.iter().filter(|&&i| i >= 7).count(), 2);
    }

    #[test]
    fn tiny_stratum_is_rejected() {
        let labels: Vec<String> = vec!["a".into(), "a".into(), "b".into()];
        let err = crossval_split(3, 0.5, Some(&labels), &mut ChaCha8Rng::seed_from_u64(3)).unwrap_err();
        assert!(matches!(err, Error::StratumTooSmall { size: 1, .. }));
    }
}
