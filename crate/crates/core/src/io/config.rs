use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{solve_tuning, Chi, EstimatorSpec, Psi, TunedFamily, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::evaluation::{Fitter, PriorSetting, SimulationDesign};
use crate::sampler::{ChainConfig, NIGPrior, PriorForm, ProposalKind};

use super::agency::AgencyDesign;
use super::embedded::EmbeddedDataset;
use super::tabular::CsvSchema;

/// Everything a run needs, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required; the `--seed` flag takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Regression,
    /// Normal hierarchical location model over the groups of the data.
    Hierarchical,
}

/// How the posterior is formed by `fit`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Conditioned on the estimator's statistic.
    #[default]
    Restricted,
    /// Full-data normal model.
    Normal,
    /// Full-data Student-t model with `evaluation.nu` degrees of freedom.
    StudentT,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Restricted => "restricted",
            Method::Normal => "normal",
            Method::StudentT => "student_t",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `newcomb`, `phones`, `synthetic_agency`, or a CSV path.
    pub source: String,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub design: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub agency: AgencyDesign,
}

fn yes() -> bool {
    true
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: "newcomb".into(),
            response: None,
            design: Vec::new(),
            group: None,
            intercept: true,
            agency: AgencyDesign::default(),
        }
    }
}

impl DataSection {
    pub fn embedded(&self) -> Option<EmbeddedDataset> {
        EmbeddedDataset::by_name(&self.source)
    }

    pub fn is_synthetic(&self) -> bool {
        self.source == "synthetic_agency"
    }

    /// Column schema, with the embedded files' own column names as defaults.
    pub fn schema(&self) -> Result<CsvSchema> {
        let default_response = match self.embedded().map(|e| e.name) {
            Some("newcomb") => Some("time"),
            Some("belgian_phones") => Some("calls"),
            _ => None,
        };
        let response = self
            .response
            .clone()
            .or(default_response.map(String::from))
            .ok_or_else(|| Error::Config("data.response is required for CSV sources".into()))?;
        Ok(CsvSchema {
            response,
            design: self.design.clone(),
            group: self.group.clone(),
            intercept: self.intercept,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiChoice {
    #[default]
    Huber,
    Tukey,
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default)]
    pub psi: PsiChoice,
    /// Normal efficiency that fixes the ψ tuning constant.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Proposal-2 constant; defaults to the Huber constant at `efficiency`.
    #[serde(default)]
    pub scale_k: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_efficiency() -> f64 {
    crate::estimators::DEFAULT_EFFICIENCY
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            psi: PsiChoice::Huber,
            efficiency: default_efficiency(),
            scale_k: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl EstimatorSection {
    pub fn spec(&self) -> Result<EstimatorSpec> {
        let huber_k = || solve_tuning(TunedFamily::Huber, self.efficiency);
        let scale = || -> Result<Chi> { Ok(Chi::huber_proposal2(self.scale_k.map_or_else(huber_k, Ok)?)) };
        let (psi, chi) = match self.psi {
            PsiChoice::Huber => (Psi::Huber { k: huber_k()? }, scale()?),
            PsiChoice::Tukey => (
                Psi::Tukey {
                    c: solve_tuning(TunedFamily::Tukey, self.efficiency)?,
                },
                scale()?,
            ),
            PsiChoice::LeastSquares => (Psi::LeastSquares, Chi::SdMoment),
        };
        let spec = EstimatorSpec {
            psi,
            chi,
            tol: self.tol,
            max_iter: self.max_iter,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Normal–inverse-gamma prior. Give either `cov0` or a diagonal `var0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default)]
    pub mu0: Vec<f64>,
    #[serde(default)]
    pub cov0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub var0: Option<f64>,
    #[serde(default)]
    pub a0: Option<f64>,
    #[serde(default)]
    pub b0: Option<f64>,
    #[serde(default)]
    pub form: Option<PriorForm>,
    /// `σ_i² ~ IG(a_s, b_s)` for hierarchical models.
    #[serde(default)]
    pub a_s: Option<f64>,
    #[serde(default)]
    pub b_s: Option<f64>,
}

impl PriorSection {
    pub fn nig(&self) -> Result<NIGPrior> {
        let p = self.mu0.len();
        if p == 0 {
            return Err(Error::Config("prior.mu0 is required".into()));
        }
        let sigma0 = match (&self.cov0, self.var0) {
            (Some(rows), None) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Config(format!("prior.cov0 must be {p} x {p}")));
                }
                DMatrix::from_fn(p, p, |i, j| rows[i][j])
            }
            (None, Some(v)) => DMatrix::from_diagonal_element(p, p, v),
            _ => return Err(Error::Config("give exactly one of prior.cov0 and prior.var0".into())),
        };
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("prior.{name} is required")));
        NIGPrior::new(
            DVector::from_vec(self.mu0.clone()),
            sigma0,
            need(self.a0, "a0")?,
            need(self.b0, "b0")?,
            self.form.unwrap_or(PriorForm::Independent),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalChoice {
    Uniform,
    RandomWalk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal: ProposalChoice,
    /// Concentration of the random-walk proposal.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSection {
            iterations: c.iterations,
            burn_in: c.burn_in,
            thin: c.thin,
            proposal: ProposalChoice::Uniform,
            kappa: None,
        }
    }
}

impl ChainSection {
    pub fn config(&self, seed: u64) -> Result<ChainConfig> {
        let proposal = match (self.proposal, self.kappa) {
            (ProposalChoice::Uniform, _) => ProposalKind::UniformSphere,
            (ProposalChoice::RandomWalk, Some(kappa)) => ProposalKind::SphereRandomWalk { kappa },
            (ProposalChoice::RandomWalk, None) => {
                return Err(Error::Config("random_walk proposal needs chain.kappa".into()))
            }
        };
        let c = ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            proposal,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Held-out scoring settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub alphas: Vec<f64>,
    /// Method whose log densities order the trimming.
    pub base: String,
    pub splits: usize,
    pub train_fraction: f64,
    /// Degrees of freedom of the t model.
    pub nu: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            alphas: vec![0.0, 0.1, 0.2, 0.3],
            base: "student_t".into(),
            splits: 10,
            train_fraction: 0.5,
            nu: 5.0,
        }
    }
}

impl EvaluationSection {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0..1.0).contains(a)) {
            return Err(Error::Config("evaluation.alphas must be non-empty values in [0, 1)".into()));
        }
        if self.splits == 0 || !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("evaluation needs splits >= 1 and train_fraction in (0, 1)".into()));
        }
        if !(self.nu > 2.0) {
            return Err(Error::Config("evaluation.nu must exceed 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub design: SimulationDesign,
    /// Number of simulated datasets.
    pub datasets: usize,
    pub priors: Vec<PriorSetting>,
    pub fitters: Vec<Fitter>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            design: SimulationDesign::desk(),
            datasets: 5,
            priors: vec![PriorSetting { a_s: 5.0, c: 0.5 }, PriorSetting { a_s: 5.0, c: 1.0 }],
            fitters: Fitter::standard_set(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text)
    }

    /// The seed after applying a command-line override.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            self.seed = Some(s);
        }
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("a seed is required (config `seed` or --seed)".into()));
        }
        if self.data.embedded().is_none() && !self.data.is_synthetic() && !Path::new(&self.data.source).is_file() {
            return Err(Error::Config(format!("data file {} does not exist", self.data.source)));
        }
        self.estimator.spec()?;
        self.chain.config(0)?;
        self.evaluation.validate()?;
        self.simulation.design.validate()?;
        Ok(())
    }

    /// The config as JSON, for echoing into reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }

    /// The baked-in configuration of a named reproduction.
    pub fn canonical(name: &str) -> Result<RunConfig> {
        let text = match name {
            "newcomb" => include_str!("../../configs/newcomb.toml"),
            "phones" => include_str!("../../configs/phones.toml"),
            "simulation" => include_str!("../../configs/simulation.toml"),
            other => return Err(Error::Config(format!("unknown reproduction {other}"))),
        };
        RunConfig::from_toml(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml("seed = 3\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.chain.iterations, 20_000);
        assert_eq!(c.data.source, "newcomb");
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("seed = 1\nbogus = 2\n"), Err(Error::Config(_))));
    }

    #[test]
    fn seed_must_be_present() {
        let mut c = RunConfig::from_toml("").unwrap();
        assert!(c.validate().is_err());
        assert_eq!(c.resolve_seed(Some(9)).unwrap(), 9);
        c.validate().unwrap();
    }

    #[test]
    fn missing_data_file() {
        let c = RunConfig::from_toml("seed = 1\n[data]\nsource = \"/nonexistent/file.csv\"\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn estimator_choices() {
        let c = RunConfig::from_toml("[estimator]\npsi = \"tukey\"\n").unwrap();
        let spec = c.estimator.spec().unwrap();
        match spec.psi {
            Psi::Tukey { c } => assert!((c - 4.685).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        match spec.chi {
            Chi::HuberProposal2 { k, .. } => assert!((k - 1.345).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prior_section() {
        let c = RunConfig::from_toml("[prior]\nmu0 = [1.0, 2.0]\nvar0 = 4.0\na0 = 3.0\nb0 = 2.0\n").unwrap();
        let p = c.prior.nig().unwrap();
        assert_eq!(p.sigma0[(1, 1)], 4.0);
        assert_eq!(p.form, PriorForm::Independent);
        let c = RunConfig::from_toml("[prior]\nmu0 = [1.0]\na0 = 3.0\nb0 = 2.0\n").unwrap();
        assert!(c.prior.nig().is_err());
    }

    #[test]
    fn canonical_configs_parse() {
        for name in ["newcomb", "phones", "simulation"] {
            let c = RunConfig::canonical(name).unwrap();
            c.validate().unwrap();
        }
        assert!(RunConfig::canonical("nope").is_err());
    }
}
