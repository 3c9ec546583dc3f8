//! Named reproductions with their priors fixed in code.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::derive_seed;
use crate::sampler::{ChainOutput, Dataset, NIGPrior, PriorForm};

use super::config::{PsiChoice, RunConfig};
use super::embedded::{newcomb, phones, PHONES_YEAR_CENTRE};
use super::report::{Report, ReportFormat, RunStamp};
use super::runs::{posterior_rows, simulate, write_summary, write_table, ModelSpec, RunOutput};

/// Names accepted by [`reproduce`].
pub const REPRODUCTIONS: [&str; 3] = ["newcomb", "phones", "simulation"];

/// Runs a named study. `config` supplies the seed, chain settings and
/// estimator tolerances; the data and priors are fixed.
pub fn reproduce(name: &str, config: &RunConfig, out: &Path, format: ReportFormat) -> Result<RunOutput> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    match name {
        "newcomb" => reproduce_newcomb(config, out, format),
        "phones" => reproduce_phones(config, out, format),
        "simulation" => simulate(config, out, format, "simulation"),
        other => Err(Error::Config(format!(
            "unknown reproduction {other}; expected one of {}",
            REPRODUCTIONS.join(", ")
        ))),
    }
}

/// Normal, t, Huber-restricted and Tukey-restricted models in that order.
fn standard_models(config: &RunConfig) -> Result<Vec<(&'static str, ModelSpec)>> {
    let mut est = config.estimator;
    est.psi = PsiChoice::Huber;
    let huber = est.spec()?;
    est.psi = PsiChoice::Tukey;
    let tukey = est.spec()?;
    Ok(vec![
        ("normal", ModelSpec::Normal),
        (
            "student_t",
            ModelSpec::StudentT {
                nu: config.evaluation.nu,
            },
        ),
        ("huber_restricted", ModelSpec::Restricted { spec: huber }),
        ("tukey_restricted", ModelSpec::Restricted { spec: tukey }),
    ])
}

/// Fits each `(name, model, data)` on its own derived seed.
fn run_all(
    config: &RunConfig,
    seed: u64,
    jobs: &[(&str, ModelSpec, &Dataset)],
    prior: &NIGPrior,
) -> Result<Vec<ChainOutput>> {
    jobs.par_iter()
        .enumerate()
        .map(|(i, (_, model, data))| model.run(data, prior, &config.chain.config(derive_seed(seed, i as u64))?))
        .collect()
}

/// `β ~ N(23.6, 2.04²)`, `σ² ~ IG(5, 10)` on the 66 passage times.
pub fn newcomb_prior() -> Result<NIGPrior> {
    NIGPrior::scalar(23.6, 2.04 * 2.04, 5.0, 10.0)
}

fn reproduce_newcomb(config: &RunConfig, out: &Path, format: ReportFormat) -> Result<RunOutput> {
    let stamp = RunStamp::of(config)?;
    let data = newcomb()?;
    let prior = newcomb_prior()?;
    let jobs: Vec<(&str, ModelSpec, &Dataset)> = standard_models(config)?
        .into_iter()
        .map(|(n, m)| (n, m, &data))
        .collect();
    let outputs = run_all(config, stamp.seed, &jobs, &prior)?;
    let one = DVector::from_element(1, 1.0);

    let mut report = Report::default();
    let mut draw_rows = Vec::new();
    let mut grid_rows = Vec::new();
    for ((name, model, _), o) in jobs.iter().zip(&outputs) {
        posterior_rows(&mut report, name, "all", o, &["beta".to_string()]);
        let pred = model.predictive(o, &one)?;
        let (lo, hi) = pred.central_interval(0.95);
        report.push(name, "all", "pred_lo95", lo, None);
        report.push(name, "all", "pred_hi95", hi, None);
        report.push(name, "all", "pred_width95", hi - lo, None);
        for (i, t) in o.draws.iter().enumerate() {
            draw_rows.push(vec![name.to_string(), i.to_string(), t.beta[0].to_string(), t.sigma2.to_string()]);
        }
        for (y, ld) in pred.log_density_grid(-60.0, 60.0, 481) {
            grid_rows.push(vec![name.to_string(), y.to_string(), ld.to_string()]);
        }
    }

    let mut files = Vec::new();
    let path = out.join("newcomb_draws.csv");
    write_table(&path, &stamp, &["model", "draw", "beta", "sigma2"], &draw_rows)?;
    files.push(path);
    let path = out.join("newcomb_predictive.csv");
    write_table(&path, &stamp, &["model", "y", "log_density"], &grid_rows)?;
    files.push(path);
    write_summary(out, "newcomb_summary", &report, format, &stamp, &mut files)?;
    Ok(RunOutput { files, report })
}

/// Cases used to set the phone-data prior.
pub const PHONES_PRIOR_ROWS: [usize; 3] = [0, 1, 2];

/// Prior from the first three years: `μ0 = (1.87, 0.03)`,
/// `Σ0 = g·σ0²·(XpᵀXp)⁻¹` with `σ0 = 0.03` and `g = 21`, `σ² ~ IG(2, 1)`.
pub fn phones_prior() -> Result<NIGPrior> {
    let xp = phones()?.regression(&PHONES_PRIOR_ROWS)?.x;
    let xtx: DMatrix<f64> = xp.tr_mul(&xp);
    let inv = xtx.try_inverse().ok_or(Error::NumericalPD)?;
    let sigma0 = inv * (21.0 * 0.03 * 0.03);
    NIGPrior::new(
        DVector::from_vec(vec![1.87, 0.03]),
        (&sigma0 + sigma0.transpose()) * 0.5,
        2.0,
        1.0,
        PriorForm::Independent,
    )
}

fn reproduce_phones(config: &RunConfig, out: &Path, format: ReportFormat) -> Result<RunOutput> {
    let stamp = RunStamp::of(config)?;
    let ph = phones()?;
    let prior = phones_prior()?;
    let fit_rows: Vec<usize> = (PHONES_PRIOR_ROWS.len()..ph.year.len()).collect();
    // the years where minutes were recorded instead of calls
    let clean_rows: Vec<usize> = fit_rows
        .iter()
        .copied()
        .filter(|&i| !(63.0..=70.0).contains(&ph.year[i]))
        .collect();
    let all = ph.regression(&fit_rows)?;
    let clean = ph.regression(&clean_rows)?;

    let mut jobs: Vec<(&str, ModelSpec, &Dataset)> = standard_models(config)?
        .into_iter()
        .map(|(n, m)| (n, m, &all))
        .collect();
    jobs.insert(1, ("normal_clean", ModelSpec::Normal, &clean));
    let outputs = run_all(config, stamp.seed, &jobs, &prior)?;

    let coefs = ["intercept".to_string(), "slope".to_string()];
    let mut report = Report::default();
    let mut draw_rows = Vec::new();
    let mut grid_rows = Vec::new();
    for ((name, model, _), o) in jobs.iter().zip(&outputs) {
        posterior_rows(&mut report, name, "all", o, &coefs);
        for (i, t) in o.draws.iter().enumerate() {
            draw_rows.push(vec![
                name.to_string(),
                i.to_string(),
                t.beta[0].to_string(),
                t.beta[1].to_string(),
                t.sigma2.to_string(),
            ]);
        }
        for step in 0..=46 {
            let year = 50.0 + 0.5 * step as f64;
            let x = DVector::from_vec(vec![1.0, year - PHONES_YEAR_CENTRE]);
            let pred = model.predictive(o, &x)?;
            let (lo, hi) = pred.central_interval(0.95);
            grid_rows.push(vec![
                name.to_string(),
                year.to_string(),
                pred.quantile(0.5).to_string(),
                lo.to_string(),
                hi.to_string(),
            ]);
        }
    }

    let mut files = Vec::new();
    let path = out.join("phones_draws.csv");
    write_table(&path, &stamp, &["model", "draw", "intercept", "slope", "sigma2"], &draw_rows)?;
    files.push(path);
    let path = out.join("phones_predictive.csv");
    write_table(&path, &stamp, &["model", "year", "median", "lo95", "hi95"], &grid_rows)?;
    files.push(path);
    write_summary(out, "phones_summary", &report, format, &stamp, &mut files)?;
    Ok(RunOutput { files, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phones_prior_matches_hand_inverse() {
        let p = phones_prior().unwrap();
        // centred years -11.5, -10.5, -9.5: Σx = -31.5, Σx² = 332.75
        let det = 3.0 * 332.75 - 31.5 * 31.5;
        let scale = 21.0 * 0.0009;
        let close = |got: f64, want: f64| (got - want).abs() <= 1e-10 * want.abs();
        assert!(close(p.sigma0[(0, 0)], scale * 332.75 / det));
        assert!(close(p.sigma0[(0, 1)], scale * 31.5 / det));
        assert!(close(p.sigma0[(1, 1)], scale * 3.0 / det));
    }

    #[test]
    fn unknown_name() {
        let c = RunConfig::from_toml("seed = 1\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            reproduce("nope", &c, dir.path(), ReportFormat::Json),
            Err(Error::Config(_))
        ));
    }
}
