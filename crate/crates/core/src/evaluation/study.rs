use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, EstimatorSpec};
use crate::sampler::{run_hierarchical, ChainConfig, Dataset, HyperPrior};

use super::{kl_good_data, simulate_contaminated, PredictiveDensity, SimGroup, SimulationDesign};

/// A way of turning one grouped dataset into per-group predictives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fitter {
    /// Hierarchical normal model on the full data.
    NormalTheory,
    /// Hierarchical normal model conditioned on each group's statistic.
    Restricted { name: String, spec: EstimatorSpec },
    /// Groupwise classical fit, scored as `N(b̂, ŝ²)`.
    PlugIn { name: String, spec: EstimatorSpec },
    /// The generating good-data law itself; scores zero up to quadrature.
    Truth,
}

impl Fitter {
    pub fn label(&self) -> &str {
        match self {
            Fitter::NormalTheory => "normal",
            Fitter::Restricted { name, .. } | Fitter::PlugIn { name, .. } => name,
            Fitter::Truth => "truth",
        }
    }

    pub fn uses_prior(&self) -> bool {
        matches!(self, Fitter::NormalTheory | Fitter::Restricted { .. })
    }

    /// Normal theory, Huber and Tukey restricted, and the two classical
    /// plug-ins.
    pub fn standard_set() -> Vec<Fitter> {
        vec![
            Fitter::NormalTheory,
            Fitter::Restricted {
                name: "huber_restricted".into(),
                spec: EstimatorSpec::huber(),
            },
            Fitter::Restricted {
                name: "tukey_restricted".into(),
                spec: EstimatorSpec::tukey(),
            },
            Fitter::PlugIn {
                name: "huber_plugin".into(),
                spec: EstimatorSpec::huber(),
            },
            Fitter::PlugIn {
                name: "tukey_plugin".into(),
                spec: EstimatorSpec::tukey(),
            },
        ]
    }
}

/// `σ_i² ~ IG(a_s, 4·a_s·c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSetting {
    pub a_s: f64,
    pub c: f64,
}

impl PriorSetting {
    pub fn hyper(&self) -> HyperPrior {
        HyperPrior {
            a_s: self.a_s,
            b_s: 4.0 * self.a_s * self.c,
        }
    }

    pub fn label(&self) -> String {
        format!("a_s={},c={}", self.a_s, self.c)
    }
}

/// Design cell of one group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub index: usize,
    pub p: f64,
    pub m: f64,
    pub n: usize,
    pub replicate: usize,
}

/// KL values of one (fitter, prior) combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlCell {
    pub fitter: String,
    pub prior: Option<PriorSetting>,
    /// `kl[k][i]`: dataset `k`, group `i`; `None` where the fit failed.
    pub kl: Vec<Option<Vec<f64>>>,
    /// Mean over datasets and groups.
    pub mean: f64,
    /// Standard error between dataset means, `K − 1` denominator.
    pub se: f64,
    pub failures: Vec<String>,
}

impl KlCell {
    /// `fitter` or `fitter[a_s=…,c=…]`.
    pub fn method(&self) -> String {
        match &self.prior {
            Some(p) => format!("{}[{}]", self.fitter, p.label()),
            None => self.fitter.clone(),
        }
    }

    fn successful(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.kl.iter().flatten()
    }

    /// Mean and standard error over datasets for group `i`.
    pub fn group_summary(&self, i: usize) -> (f64, f64) {
        let vals: Vec<f64> = self.successful().map(|row| row[i]).collect();
        mean_and_se(&vals)
    }
}

/// Mean KL by level of one design factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainEffect {
    pub method: String,
    pub factor: String,
    pub level: f64,
    pub mean: f64,
}

/// Result of a simulation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub groups: Vec<GroupInfo>,
    pub datasets: usize,
    pub cells: Vec<KlCell>,
}

impl KlReport {
    pub fn cell(&self, fitter: &str, prior: Option<PriorSetting>) -> Option<&KlCell> {
        self.cells.iter().find(|c| c.fitter == fitter && c.prior == prior)
    }

    /// Averages over `n`, `p` and `m` levels for each cell.
    pub fn main_effects(&self) -> Vec<MainEffect> {
        let mut out = Vec::new();
        for cell in &self.cells {
            let rows: Vec<&Vec<f64>> = cell.successful().collect();
            for factor in ["n", "p", "m"] {
                let level_of = |g: &GroupInfo| match factor {
                    "n" => g.n as f64,
                    "p" => g.p,
                    _ => g.m,
                };
                let mut levels: Vec<f64> = self.groups.iter().map(level_of).collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                for level in levels {
                    let vals: Vec<f64> = rows
                        .iter()
                        .flat_map(|row| {
                            self.groups
                                .iter()
                                .filter(move |g| level_of(g) == level)
                                .map(move |g| row[g.index])
                        })
                        .collect();
                    if vals.is_empty() {
                        continue;
                    }
                    out.push(MainEffect {
                        method: cell.method(),
                        factor: factor.to_string(),
                        level,
                        mean: vals.iter().sum::<f64>() / vals.len() as f64,
                    });
                }
            }
        }
        out
    }
}

fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let k = vals.len() as f64;
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / k;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (k * (k - 1.0))).sqrt())
}

/// Seed for an independent task derived from the study seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.next_u64()
}

/// Generates `k` datasets from `design` and scores every fitter (and, for
/// Bayesian fitters, every prior) by KL against each group's good-data law.
///
/// Tasks run in parallel, each seeded from `chain.seed` and its position, so
/// results do not depend on scheduling. A failed fit is recorded in its cell
/// and does not stop the study.
pub fn run_simulation_study(
    design: &SimulationDesign,
    priors: &[PriorSetting],
    fitters: &[Fitter],
    k: usize,
    chain: &ChainConfig,
) -> Result<KlReport> {
    design.validate()?;
    chain.validate()?;
    if k == 0 {
        return Err(Error::Config("at least one dataset is required".into()));
    }
    if priors.is_empty() && fitters.iter().any(Fitter::uses_prior) {
        return Err(Error::Config("Bayesian fitters need at least one prior".into()));
    }
    for p in priors {
        p.hyper().validate()?;
    }

    let datasets: Vec<Vec<SimGroup>> = (0..k)
        .map(|d| simulate_contaminated(design, &mut ChaCha8Rng::seed_from_u64(derive_seed(chain.seed, d as u64))))
        .collect::<Result<_>>()?;
    let groups: Vec<GroupInfo> = datasets[0]
        .iter()
        .enumerate()
        .map(|(index, g)| GroupInfo {
            index,
            p: g.p,
            m: g.m,
            n: g.n,
            replicate: g.replicate,
        })
        .collect();

    // (fitter, prior) cells
    let mut cells: Vec<(usize, Option<usize>)> = Vec::new();
    for (fi, f) in fitters.iter().enumerate() {
        if f.uses_prior() {
            cells.extend((0..priors.len()).map(|pi| (fi, Some(pi))));
        } else {
            cells.push((fi, None));
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..k).map(move |d| (c, d))).collect();
    let results: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(c, d)| {
            let (fi, pi) = cells[c];
            let tag = 1_000_000 + (c as u64) * 10_000 + d as u64;
            let cfg = ChainConfig {
                seed: derive_seed(chain.seed, tag),
                ..*chain
            };
            score_fit(&fitters[fi], pi.map(|i| &priors[i]), &datasets[d], design.sigma2, &cfg)
        })
        .collect();

    let mut out_cells = Vec::with_capacity(cells.len());
    for (c, &(fi, pi)) in cells.iter().enumerate() {
        let mut kl = Vec::with_capacity(k);
        let mut failures = Vec::new();
        for d in 0..k {
            match &results[c * k + d] {
                Ok(v) => kl.push(Some(v.clone())),
                Err(e) => {
                    kl.push(None);
                    failures.push(format!("dataset {d}: {e}"));
                }
            }
        }
        let dataset_means: Vec<f64> = kl
            .iter()
            .flatten()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        let (mean, se) = mean_and_se(&dataset_means);
        out_cells.push(KlCell {
            fitter: fitters[fi].label().to_string(),
            prior: pi.map(|i| priors[i]),
            kl,
            mean,
            se,
            failures,
        });
    }
    Ok(KlReport {
        groups,
        datasets: k,
        cells: out_cells,
    })
}

fn score_fit(
    fitter: &Fitter,
    prior: Option<&PriorSetting>,
    groups: &[SimGroup],
    sigma2: f64,
    chain: &ChainConfig,
) -> Result<Vec<f64>> {
    let preds: Vec<PredictiveDensity> = match fitter {
        Fitter::Truth => groups.iter().map(|g| PredictiveDensity::plug_in(g.theta, sigma2)).collect(),
        Fitter::PlugIn { spec, .. } => groups
            .iter()
            .map(|g| {
                let d = Dataset::location(g.y.clone());
                let t = fit(&d.x, &d.y, spec)?;
                Ok(PredictiveDensity::plug_in(t.b[0], t.s * t.s))
            })
            .collect::<Result<_>>()?,
        Fitter::NormalTheory | Fitter::Restricted { .. } => {
            let data: Vec<Dataset> = groups.iter().map(|g| Dataset::location(g.y.clone())).collect();
            let spec = match fitter {
                Fitter::Restricted { spec, .. } => Some(spec),
                _ => None,
            };
            let hyper = prior.expect("Bayesian fitter scored without a prior").hyper();
            let out = run_hierarchical(&data, &hyper, spec, chain)?;
            out.groups
                .iter()
                .map(|draws| PredictiveDensity::from_location_draws(draws))
                .collect::<Result<_>>()?
        }
    };
    preds
        .iter()
        .zip(groups)
        .map(|(p, g)| kl_good_data(p, g.theta, sigma2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ProposalKind;

    fn tiny_design() -> SimulationDesign {
        SimulationDesign {
            p_levels: vec![0.1],
            m_levels: vec![9.0, 25.0],
            n_levels: vec![10, 20],
            ..SimulationDesign::desk()
        }
    }

    fn short_chain() -> ChainConfig {
        ChainConfig {
            iterations: 400,
            burn_in: 100,
            thin: 1,
            seed: 17,
            proposal: ProposalKind::UniformSphere,
        }
    }

    #[test]
    fn se_uses_k_minus_one() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (2.0f64 / 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truth_scores_zero() {
        let r = run_simulation_study(&tiny_design(), &[], &[Fitter::Truth], 2, &short_chain()).unwrap();
        assert!(r.cells[0].mean.abs() < 1e-6);
    }

    #[test]
    fn smoke_report_is_complete() {
        let priors = [PriorSetting { a_s: 5.0, c: 1.0 }];
        let r = run_simulation_study(&tiny_design(), &priors, &Fitter::standard_set(), 2, &short_chain()).unwrap();
        assert_eq!(r.cells.len(), 5);
        assert_eq!(r.groups.len(), 4);
        for c in &r.cells {
            assert!(c.failures.is_empty(), "{:?}", c.failures);
            assert_eq!(c.kl.len(), 2);
            for row in c.kl.iter().flatten() {
                assert_eq!(row.len(), 4);
                assert!(row.iter().all(|&v| v >= -1e-9));
            }
        }
        // 5 cells × (2 n-levels + 1 p-level + 2 m-levels)
        assert_eq!(r.main_effects().len(), 25);
    }

    #[test]
    fn study_is_deterministic() {
        let priors = [PriorSetting { a_s: 5.0, c: 0.5 }];
        let fitters = &Fitter::standard_set()[..2];
        let a = run_simulation_study(&tiny_design(), &priors, fitters, 2, &short_chain()).unwrap();
        let b = run_simulation_study(&tiny_design(), &priors, fitters, 2, &short_chain()).unwrap();
        assert_eq!(a, b);
    }
}
