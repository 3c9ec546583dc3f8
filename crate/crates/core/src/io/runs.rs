//! The `fit`, `simulate`, `evaluate` and `selftest` workflows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit as estimate, least_squares, EstimatorSpec};
use crate::evaluation::{
    crossval_split, derive_seed, run_simulation_study, tlm_score, DrawSummary, GroupInfo, PredictiveDensity,
    TlmReport, TlmScore,
};
use crate::sampler::{
    run_chain, run_hierarchical, run_normal_full, run_student_t_baseline, t_adjusted_prior, ChainConfig,
    ChainOutput, Dataset, HyperPrior, NIGPrior, PriorForm,
};

use super::agency::{synthetic_agency, AgencyState};
use super::config::{Method, ModelKind, PsiChoice, RunConfig};
use super::report::{emit_report, group_label, kl_summary, tlm_rows, Report, ReportFormat, RunStamp};
use super::tabular::{csv_io, load_csv, LoadedData};

/// Files written by a workflow and its summary report.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub report: Report,
}

impl RunStamp {
    pub fn of(config: &RunConfig) -> Result<Self> {
        let seed = config
            .seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))?;
        Ok(RunStamp {
            seed,
            config: config.echo(),
        })
    }
}

/// Writes a plot-data CSV. Two leading `#` lines carry the seed and the
/// resolved config as compact JSON.
pub(crate) fn write_table(path: &Path, stamp: &RunStamp, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# seed: {}", stamp.seed)?;
    writeln!(file, "# config: {}", stamp.config)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        w.write_record(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the summary report in `format`, and always as JSON.
pub(crate) fn write_summary(
    out: &Path,
    stem: &str,
    report: &Report,
    format: ReportFormat,
    stamp: &RunStamp,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let json = out.join(format!("{stem}.json"));
    emit_report(report, ReportFormat::Json, &json, stamp)?;
    files.push(json);
    if format == ReportFormat::Csv {
        let csv = out.join(format!("{stem}.csv"));
        emit_report(report, ReportFormat::Csv, &csv, stamp)?;
        files.push(csv);
    }
    Ok(())
}

/// A Bayesian model for one regression dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Normal,
    StudentT { nu: f64 },
    Restricted { spec: EstimatorSpec },
}

impl ModelSpec {
    /// Runs the chain; the t model gets the variance-matched prior.
    pub fn run(&self, data: &Dataset, prior: &NIGPrior, chain: &ChainConfig) -> Result<ChainOutput> {
        match self {
            ModelSpec::Normal => run_normal_full(data, prior, chain),
            ModelSpec::StudentT { nu } => run_student_t_baseline(data, &t_adjusted_prior(prior, *nu)?, *nu, chain),
            ModelSpec::Restricted { spec } => run_chain(data, prior, spec, chain),
        }
    }

    pub fn predictive(&self, out: &ChainOutput, x_new: &DVector<f64>) -> Result<PredictiveDensity> {
        match self {
            ModelSpec::StudentT { nu } => PredictiveDensity::from_t_draws(&out.draws, x_new, *nu),
            _ => PredictiveDensity::from_draws(&out.draws, x_new),
        }
    }

    pub fn is_restricted(&self) -> bool {
        matches!(self, ModelSpec::Restricted { .. })
    }
}

/// Posterior summary rows for one chain.
pub(crate) fn posterior_rows(r: &mut Report, method: &str, group: &str, out: &ChainOutput, coefs: &[String]) {
    for (j, name) in coefs.iter().enumerate() {
        let s = DrawSummary::of(&out.beta_draws(j));
        r.push(method, group, &format!("{name}_mean"), s.mean, Some(s.mc_se));
        r.push(method, group, &format!("{name}_sd"), s.sd, None);
        r.push(method, group, &format!("{name}_q025"), s.q025, None);
        r.push(method, group, &format!("{name}_q975"), s.q975, None);
    }
    let s = DrawSummary::of(&out.sigma2_draws());
    r.push(method, group, "sigma2_mean", s.mean, Some(s.mc_se));
    r.push(method, group, "sigma2_sd", s.sd, None);
    if out.target.is_some() {
        r.push(method, group, "acceptance_rate", out.acceptance_rate, None);
        r.push(method, group, "failed_proposals", out.failed_proposals as f64, None);
        r.push(method, group, "max_constraint_deviation", out.max_constraint_deviation, None);
    }
}

fn coef_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("beta{j}")).collect()
}

fn load_data(config: &RunConfig) -> Result<LoadedData> {
    let schema = config.data.schema()?;
    match config.data.embedded() {
        Some(e) => e.load(&schema),
        None if config.data.is_synthetic() => Err(Error::Config(
            "synthetic_agency data are only used by `evaluate`".into(),
        )),
        None => load_csv(Path::new(&config.data.source), &schema),
    }
}

fn model_for(config: &RunConfig) -> Result<ModelSpec> {
    Ok(match config.method {
        Method::Restricted => ModelSpec::Restricted {
            spec: config.estimator.spec()?,
        },
        Method::Normal => ModelSpec::Normal,
        Method::StudentT => ModelSpec::StudentT {
            nu: config.evaluation.nu,
        },
    })
}

/// Posterior draws for the configured data, model and prior.
pub fn fit(config: &RunConfig, out: &Path, format: ReportFormat) -> Result<RunOutput> {
    config.validate()?;
    let stamp = RunStamp::of(config)?;
    let data = load_data(config)?;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut report = Report::default();
    let method = config.method.label();

    match config.model {
        ModelKind::Regression => {
            let prior = config.prior.nig()?;
            let model = model_for(config)?;
            let outputs: Vec<ChainOutput> = data
                .datasets
                .par_iter()
                .enumerate()
                .map(|(g, d)| model.run(d, &prior, &config.chain.config(derive_seed(stamp.seed, g as u64))?))
                .collect::<Result<_>>()?;
            let p = prior.p();
            let names = coef_names(p);
            let mut header = vec!["group", "draw"];
            header.extend(names.iter().map(String::as_str));
            header.push("sigma2");
            let mut rows = Vec::new();
            for (label, o) in data.labels.iter().zip(&outputs) {
                posterior_rows(&mut report, method, label, o, &names);
                for (i, t) in o.draws.iter().enumerate() {
                    let mut row = vec![label.clone(), i.to_string()];
                    row.extend(t.beta.iter().map(|b| b.to_string()));
                    row.push(t.sigma2.to_string());
                    rows.push(row);
                }
            }
            let path = out.join("fit_draws.csv");
            write_table(&path, &stamp, &header, &rows)?;
            files.push(path);
        }
        ModelKind::Hierarchical => {
            let hyper = HyperPrior {
                a_s: config.prior.a_s.ok_or_else(|| Error::Config("prior.a_s is required".into()))?,
                b_s: config.prior.b_s.ok_or_else(|| Error::Config("prior.b_s is required".into()))?,
            };
            let spec = match config.method {
                Method::Restricted => Some(config.estimator.spec()?),
                Method::Normal => None,
                Method::StudentT => {
                    return Err(Error::Config("the hierarchical model has no t variant".into()));
                }
            };
            let groups: Vec<Dataset> = data
                .datasets
                .iter()
                .map(|d| Dataset::location(d.y.clone()))
                .collect();
            let h = run_hierarchical(&groups, &hyper, spec.as_ref(), &config.chain.config(stamp.seed)?)?;
            let mut rows = Vec::new();
            for (g, (label, draws)) in data.labels.iter().zip(&h.groups).enumerate() {
                let theta: Vec<f64> = draws.iter().map(|t| t.beta[0]).collect();
                let s2: Vec<f64> = draws.iter().map(|t| t.sigma2).collect();
                let st = DrawSummary::of(&theta);
                report.push(method, label, "theta_mean", st.mean, Some(st.mc_se));
                report.push(method, label, "theta_sd", st.sd, None);
                let ss = DrawSummary::of(&s2);
                report.push(method, label, "sigma2_mean", ss.mean, Some(ss.mc_se));
                if spec.is_some() {
                    report.push(method, label, "acceptance_rate", h.acceptance_rates[g], None);
                }
                for (i, t) in draws.iter().enumerate() {
                    rows.push(vec![label.clone(), i.to_string(), t.beta[0].to_string(), t.sigma2.to_string()]);
                }
            }
            let mu = DrawSummary::of(&h.mu);
            report.push(method, "all", "mu_mean", mu.mean, Some(mu.mc_se));
            let tau2 = DrawSummary::of(&h.tau2);
            report.push(method, "all", "tau2_mean", tau2.mean, Some(tau2.mc_se));
            let path = out.join("fit_draws.csv");
            write_table(&path, &stamp, &["group", "draw", "theta", "sigma2"], &rows)?;
            files.push(path);
            let hyper_rows: Vec<Vec<String>> = h
                .mu
                .iter()
                .zip(&h.tau2)
                .enumerate()
                .map(|(i, (m, t))| vec![i.to_string(), m.to_string(), t.to_string()])
                .collect();
            let path = out.join("fit_hyper_draws.csv");
            write_table(&path, &stamp, &["draw", "mu", "tau2"], &hyper_rows)?;
            files.push(path);
        }
    }
    write_summary(out, "fit_summary", &report, format, &stamp, &mut files)?;
    Ok(RunOutput { files, report })
}

/// The contaminated grouped-data study under `config.simulation`.
pub fn simulate(config: &RunConfig, out: &Path, format: ReportFormat, stem: &str) -> Result<RunOutput> {
    config.validate()?;
    let stamp = RunStamp::of(config)?;
    let sim = &config.simulation;
    let chain = config.chain.config(stamp.seed)?;
    let kl = run_simulation_study(&sim.design, &sim.priors, &sim.fitters, sim.datasets, &chain)?;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();

    let groups_path = out.join(format!("{stem}_kl_groups.{}", format.extension()));
    emit_report(&Report::from(&kl), format, &groups_path, &stamp)?;
    files.push(groups_path);

    let design_rows: Vec<Vec<String>> = kl
        .groups
        .iter()
        .map(|g: &GroupInfo| {
            vec![
                group_label(g.index),
                g.p.to_string(),
                g.m.to_string(),
                g.n.to_string(),
                g.replicate.to_string(),
            ]
        })
        .collect();
    let design_path = out.join(format!("{stem}_groups.csv"));
    write_table(&design_path, &stamp, &["group", "p", "m", "n", "replicate"], &design_rows)?;
    files.push(design_path);

    let report = kl_summary(&kl);
    write_summary(out, &format!("{stem}_summary"), &report, format, &stamp, &mut files)?;
    Ok(RunOutput { files, report })
}

/// Methods scored by `evaluate`, in report order.
pub const TLM_METHODS: [&str; 7] = [
    "normal",
    "student_t",
    "huber_restricted",
    "tukey_restricted",
    "huber_plugin",
    "tukey_plugin",
    "ols",
];

/// One state's data for held-out scoring.
struct ScoringGroup {
    name: String,
    data: Dataset,
    scored: Vec<bool>,
    prior: NIGPrior,
}

/// Prior from a Huber fit to the earlier period: `μ0 = b̂`,
/// `σ0² = n_p·se(b̂)²`, `a0 = 5`, `b0 = 4ŝ²`, with `se(b̂) = ŝ/‖x‖`.
fn agency_prior(state: &AgencyState) -> Result<NIGPrior> {
    let early = state.prior_period()?;
    let t = estimate(&early.x, &early.y, &EstimatorSpec::huber())?;
    let n_p = early.n() as f64;
    let se2 = t.s * t.s / early.x.column(0).norm_squared();
    NIGPrior::new(
        t.b.clone(),
        DMatrix::from_element(1, 1, n_p * se2),
        5.0,
        4.0 * t.s * t.s,
        PriorForm::Independent,
    )
}

/// Trimmed held-out log predictive scores over repeated random splits.
///
/// Every state is split `evaluation.splits` times; each split fits all of
/// [`TLM_METHODS`] to the training part and scores the scored cases of the
/// holdout (open type-1 agencies for synthetic data, every case otherwise).
pub fn evaluate(config: &RunConfig, out: &Path, format: ReportFormat) -> Result<RunOutput> {
    config.validate()?;
    let stamp = RunStamp::of(config)?;
    let ev = &config.evaluation;
    let base = TLM_METHODS
        .iter()
        .position(|m| *m == ev.base)
        .ok_or_else(|| Error::Config(format!("unknown base method {}", ev.base)))?;

    let groups: Vec<ScoringGroup> = if config.data.is_synthetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(stamp.seed, 0));
        synthetic_agency(&config.data.agency, &mut rng)?
            .iter()
            .map(|s| {
                Ok(ScoringGroup {
                    name: s.name.clone(),
                    data: s.current()?,
                    scored: s.scored(),
                    prior: agency_prior(s)?,
                })
            })
            .collect::<Result<_>>()?
    } else {
        let loaded = load_data(config)?;
        let prior = config.prior.nig()?;
        loaded
            .labels
            .into_iter()
            .zip(loaded.datasets)
            .map(|(name, data)| ScoringGroup {
                scored: vec![true; data.n()],
                name,
                data,
                prior: prior.clone(),
            })
            .collect()
    };

    let mut est = config.estimator;
    est.psi = PsiChoice::Huber;
    let huber = est.spec()?;
    est.psi = PsiChoice::Tukey;
    let tukey = est.spec()?;
    let models = [
        ModelSpec::Normal,
        ModelSpec::StudentT { nu: ev.nu },
        ModelSpec::Restricted { spec: huber.clone() },
        ModelSpec::Restricted { spec: tukey.clone() },
    ];
    let plugins = [Some(huber), Some(tukey), None];

    let tasks: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..ev.splits).map(move |k| (g, k)))
        .collect();
    let scored: Vec<Result<Vec<Vec<f64>>>> = tasks
        .par_iter()
        .map(|&(g, k)| {
            let group = &groups[g];
            let tag = 1_000 + (g as u64) * 100_000 + k as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(stamp.seed, tag));
            let split = crossval_split(group.data.n(), ev.train_fraction, None, &mut rng)?;
            let train = subset(&group.data, &split.train)?;
            let holdout: Vec<usize> = split.holdout.iter().copied().filter(|&i| group.scored[i]).collect();
            let chain = config.chain.config(derive_seed(stamp.seed, tag + 50_000))?;
            let mut logdens = Vec::with_capacity(TLM_METHODS.len());
            for m in &models {
                let fitted = m.run(&train, &group.prior, &chain)?;
                let scores = holdout
                    .iter()
                    .map(|&i| {
                        let x = group.data.x.row(i).transpose();
                        Ok(m.predictive(&fitted, &x)?.log_density(group.data.y[i]))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                logdens.push(scores);
            }
            for spec in &plugins {
                let (b, s2) = match spec {
                    Some(spec) => {
                        let t = estimate(&train.x, &train.y, spec)?;
                        (t.b, t.s * t.s)
                    }
                    None => {
                        let b = least_squares(&train.x, &train.y)?;
                        let rss = (&train.y - &train.x * &b).norm_squared();
                        (b, rss / (train.n() - train.p()) as f64)
                    }
                };
                let scores = holdout
                    .iter()
                    .map(|&i| {
                        let mean = group.data.x.row(i).transpose().dot(&b);
                        PredictiveDensity::plug_in(mean, s2).log_density(group.data.y[i])
                    })
                    .collect();
                logdens.push(scores);
            }
            Ok(logdens)
        })
        .collect();

    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut report = Report::default();
    let methods: Vec<String> = TLM_METHODS.iter().map(|s| s.to_string()).collect();
    let mut split_rows = Vec::new();
    // per alpha, per state: scores of the successful splits
    let mut overall: Vec<Vec<Vec<f64>>> = vec![Vec::new(); ev.alphas.len()];
    for (g, group) in groups.iter().enumerate() {
        let results: Vec<(usize, &Vec<Vec<f64>>)> = (0..ev.splits)
            .filter_map(|k| scored[g * ev.splits + k].as_ref().ok().map(|r| (k, r)))
            .collect();
        let failed = ev.splits - results.len();
        report.push("all_methods", &group.name, "failed_splits", failed as f64, None);
        if results.is_empty() {
            continue;
        }
        for (a, &alpha) in ev.alphas.iter().enumerate() {
            let per_split: Vec<TlmScore> = results
                .iter()
                .map(|(_, logdens)| tlm_score(logdens, base, alpha))
                .collect::<Result<_>>()?;
            for ((k, _), s) in results.iter().zip(&per_split) {
                for (m, v) in methods.iter().zip(&s.scores) {
                    split_rows.push(vec![
                        group.name.clone(),
                        k.to_string(),
                        alpha.to_string(),
                        m.clone(),
                        v.to_string(),
                    ]);
                }
            }
            let tlm = TlmReport::from_splits(methods.clone(), base, alpha, &per_split);
            report.extend(tlm_rows(&tlm, &group.name));
            overall[a].push(tlm.mean.clone());
        }
    }
    for (a, &alpha) in ev.alphas.iter().enumerate() {
        let states = overall[a].len();
        if states == 0 {
            continue;
        }
        for (j, m) in methods.iter().enumerate() {
            let v = overall[a].iter().map(|r| r[j]).sum::<f64>() / states as f64;
            report.push(m, "all", &format!("tlm[alpha={alpha}]"), v, None);
        }
    }
    let splits_path = out.join("evaluate_splits.csv");
    write_table(&splits_path, &stamp, &["group", "split", "alpha", "method", "tlm"], &split_rows)?;
    files.push(splits_path);
    write_summary(out, "evaluate_tlm", &report, format, &stamp, &mut files)?;
    Ok(RunOutput { files, report })
}

fn subset(d: &Dataset, rows: &[usize]) -> Result<Dataset> {
    Dataset::new(d.y.select_rows(rows), d.x.select_rows(rows))
}

/// Quick internal checks: embedded checksums, default tuning constants, the
/// circle density, and constraint maintenance on a short Newcomb chain.
/// Returns one row per check with value 1 for pass and 0 for fail.
pub fn selftest() -> Result<Report> {
    use crate::estimators::{solve_tuning, TunedFamily};
    use crate::sampler::{proposal_log_density, ProposalKind, RestrictedContext, SphereDensity};

    let mut r = Report::default();
    let mut check = |name: &str, ok: bool, value: f64| {
        r.push("selftest", name, "pass", if ok { 1.0 } else { 0.0 }, None);
        r.push("selftest", name, "value", value, None);
    };

    check("embedded_checksums", super::embedded::verify_embedded().is_ok(), 0.0);
    let k = solve_tuning(TunedFamily::Huber, 0.95)?;
    check("huber_k", (k - 1.345).abs() < 1e-3, k);
    let c = solve_tuning(TunedFamily::Tukey, 0.95)?;
    check("tukey_c", (c - 4.685).abs() < 1e-3, c);

    let x = DMatrix::from_element(3, 1, 1.0);
    let y = DVector::from_vec(vec![0.3, 1.9, -0.4]);
    let ctx = RestrictedContext::new(&x, &y, &EstimatorSpec::least_squares(), ProposalKind::UniformSphere)?;
    let e = proposal_log_density(&y, &ctx, &SphereDensity::Uniform)?;
    let expect = -(2.0 * std::f64::consts::PI * 3f64.sqrt() * ctx.target.s).ln();
    let rel = ((e.log_density - expect) / expect).abs();
    check("circle_density", rel < 1e-8, rel);

    let data = super::embedded::newcomb()?;
    let prior = NIGPrior::scalar(23.6, 2.04 * 2.04, 5.0, 10.0)?;
    let chain = ChainConfig {
        iterations: 2_000,
        burn_in: 500,
        thin: 5,
        seed: 1,
        proposal: ProposalKind::UniformSphere,
    };
    let spec = EstimatorSpec::huber();
    let o = run_chain(&data, &prior, &spec, &chain)?;
    check(
        "constraint_maintenance",
        o.max_constraint_deviation <= 10.0 * spec.tol && o.acceptance_rate > 0.0,
        o.max_constraint_deviation,
    );
    Ok(r)
}

/// Whether every check in a selftest report passed.
pub fn selftest_passed(r: &Report) -> bool {
    r.rows.iter().filter(|row| row.metric == "pass").all(|row| row.value == 1.0)
}

