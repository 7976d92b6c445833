use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DerivativeSource, ExperimentConfig, GridVar, Method};
use crate::dynamics::{
    add_noise, builtin_system, exact_derivatives, rk4_integrate, NoiseConfig, OdeSystemSpec, Trajectory, VectorField,
};
use crate::ensemble::{esindy_aggregate, esindy_with, Aggregate};
use crate::error::{Error, Result};
use crate::features::{
    estimate_derivatives, evaluate_library, fit_columns, finite_difference_derivatives, smoothed_states, MonomialBasis,
    Smoothing,
};
use crate::inference::{bias_corrected_ridge, debiased_lasso, DebiasedOptions, RidgeOptions};
use crate::regression::{lasso_cv_scaled, ols_inference, stls};
use crate::semms::{semms_fit, semms_select, SemmsOptions};

/// Library, response and ground truth for one noisy realization.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub theta: DMatrix<f64>,
    pub xdot: DMatrix<f64>,
    pub basis: MonomialBasis,
    pub truth: Option<OdeSystemSpec>,
}

/// The noise-free simulation behind a configuration.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub system: OdeSystemSpec,
    pub clean: Trajectory,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let system = builtin_system(&cfg.system, &cfg.params, cfg.degree)?;
        let p = cfg.protocol()?;
        let clean = rk4_integrate(&system, &p.x0, p.t_span, p.step)?;
        Ok(Self { system, clean })
    }

    pub fn noisy(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Trajectory> {
        add_noise(
            &self.clean,
            &NoiseConfig {
                sigma_scale: cfg.noise,
                mode: cfg.noise_mode,
                seed,
            },
        )
    }

    pub fn dataset(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
        let noisy = self.noisy(cfg, seed)?;
        let mut data = if cfg.derivatives == DerivativeSource::Exact {
            let basis = MonomialBasis::new(noisy.dim(), cfg.degree)?;
            Dataset {
                theta: evaluate_library(&noisy.states, &basis)?.theta,
                xdot: exact_derivatives(&self.system, &self.clean.states),
                times: noisy.times,
                basis,
                truth: None,
            }
        } else {
            build_dataset(&noisy, cfg.degree, cfg.derivatives)?
        };
        data.truth = Some(self.system.clone());
        Ok(data)
    }
}

/// Library and derivative estimates from an observed trajectory. Exact
/// derivatives need the generating system and are rejected here.
pub fn build_dataset(traj: &Trajectory, degree: u32, source: DerivativeSource) -> Result<Dataset> {
    let basis = MonomialBasis::new(traj.dim(), degree)?;
    let (states, xdot) = match source {
        DerivativeSource::Spline => {
            let splines = fit_columns(&traj.times, &traj.states, Smoothing::Gcv)?;
            (
                smoothed_states(&splines, &traj.times)?,
                estimate_derivatives(&splines, &traj.times)?.xdot,
            )
        }
        DerivativeSource::FiniteDifference => (
            traj.states.clone(),
            finite_difference_derivatives(&traj.times, &traj.states)?.xdot,
        ),
        DerivativeSource::Exact => {
            return Err(Error::config("exact derivatives need a built-in system"));
        }
    };
    let theta = evaluate_library(&states, &basis)?.theta;
    Ok(Dataset {
        times: traj.times.clone(),
        theta,
        xdot,
        basis,
        truth: None,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sigma_hat: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
}

/// One row per library term. Statistics a method does not produce stay
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRow {
    pub term: String,
    pub estimate: f64,
    pub std_err: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub p_value: Option<f64>,
    pub post_null_prob: Option<f64>,
    /// Ensemble inclusion probability.
    pub inclusion: Option<f64>,
    pub selected: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct CoefficientReport {
    pub method: Method,
    /// Zero-based state dimension.
    pub dim: usize,
    pub rows: Vec<TermRow>,
    /// Least squares on the selected terms, zero elsewhere.
    pub refit: Option<DVector<f64>>,
    pub diagnostics: Diagnostics,
}

impl CoefficientReport {
    /// Selected term indices, or `None` if the method made no decision.
    pub fn support(&self) -> Option<Vec<usize>> {
        let mut out = Vec::new();
        for (j, r) in self.rows.iter().enumerate() {
            match r.selected {
                None => return None,
                Some(true) => out.push(j),
                Some(false) => {}
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub message: String,
    pub numerical: bool,
}

impl From<Error> for CellError {
    fn from(e: Error) -> Self {
        Self {
            numerical: e.is_numerical(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub method: Method,
    pub dim: usize,
    pub result: std::result::Result<CoefficientReport, CellError>,
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub term_names: Vec<String>,
    pub cells: Vec<Cell>,
}

/// Seed for a method's own randomness, kept apart from the noise stream.
fn method_seed(seed: u64, method: Method, dim: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((method as u64) << 8 | dim as u64)
}

/// Simulates, adds noise with `seed`, and runs every method on every state
/// dimension. A failing method leaves the other cells untouched.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<SingleRun> {
    cfg.validate()?;
    let sim = Simulation::new(cfg)?;
    let data = sim.dataset(cfg, seed)?;
    Ok(run_methods(&data, cfg, seed))
}

pub fn run_methods(data: &Dataset, cfg: &ExperimentConfig, seed: u64) -> SingleRun {
    let term_names = data.basis.term_names();
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for dim in 0..data.xdot.ncols() {
            let y = data.xdot.column(dim).into_owned();
            let result = fit_method(method, &data.theta, &y, &term_names, cfg, method_seed(seed, method, dim))
                .map(|(rows, refit, diagnostics)| CoefficientReport {
                    method,
                    dim,
                    rows,
                    refit,
                    diagnostics,
                })
                .map_err(CellError::from);
            cells.push(Cell { method, dim, result });
        }
    }
    SingleRun { term_names, cells }
}

type Fitted = (Vec<TermRow>, Option<DVector<f64>>, Diagnostics);

fn blank_rows(names: &[String], estimates: &DVector<f64>) -> Vec<TermRow> {
    names
        .iter()
        .zip(estimates.iter())
        .map(|(term, &estimate)| TermRow {
            term: term.clone(),
            estimate,
            std_err: None,
            ci_lo: None,
            ci_hi: None,
            p_value: None,
            post_null_prob: None,
            inclusion: None,
            selected: None,
        })
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Least squares on the selected columns; `None` when that is impossible.
fn refit(theta: &DMatrix<f64>, y: &DVector<f64>, selected: &[bool]) -> Option<DVector<f64>> {
    let cols: Vec<usize> = (0..selected.len()).filter(|&j| selected[j]).collect();
    if cols.is_empty() {
        return Some(DVector::zeros(selected.len()));
    }
    let fit = ols_inference(&theta.select_columns(&cols), y, 0.05).ok()?;
    let mut out = DVector::zeros(selected.len());
    for (a, &j) in cols.iter().enumerate() {
        out[j] = fit.coefficients[a];
    }
    Some(out)
}

fn fit_method(
    method: Method,
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Fitted> {
    let s = &cfg.settings;
    match method {
        Method::Lasso => {
            let (beta, lambda) = lasso_cv_scaled(theta, y, &s.cv)?;
            let mut rows = blank_rows(names, &beta);
            for r in &mut rows {
                r.selected = Some(r.estimate != 0.0);
            }
            let diag = Diagnostics {
                lambda: Some(lambda),
                ..Default::default()
            };
            Ok((rows, None, diag))
        }
        Method::DebiasedLasso => {
            let rep = debiased_lasso(
                theta,
                y,
                &DebiasedOptions {
                    sigma: s.sigma_estimator,
                    alpha: cfg.alpha,
                    holm: s.debiased_holm,
                    ..Default::default()
                },
            )?;
            let mut rows = blank_rows(names, &rep.estimates);
            let p = rep.adjusted_p.as_ref().unwrap_or(&rep.p_values);
            for (j, r) in rows.iter_mut().enumerate() {
                r.std_err = finite(rep.std_errors[j]);
                r.ci_lo = finite(rep.ci_lo[j]);
                r.ci_hi = finite(rep.ci_hi[j]);
                r.p_value = finite(p[j]);
                r.selected = Some(rep.selected[j]);
            }
            let diag = Diagnostics {
                sigma_hat: Some(rep.sigma_hat),
                lambda: Some(rep.lambda),
                mu: Some(rep.mu),
            };
            Ok((rows, refit(theta, y, &rep.selected), diag))
        }
        Method::BcRidge => {
            let rep = bias_corrected_ridge(
                theta,
                y,
                &RidgeOptions {
                    sigma: s.sigma_estimator,
                    alpha: cfg.alpha,
                    xi: s.ridge_xi,
                    ..Default::default()
                },
            )?;
            let mut rows = blank_rows(names, &rep.estimates);
            for (j, r) in rows.iter_mut().enumerate() {
                r.std_err = finite(rep.std_errors[j]);
                r.p_value = finite(rep.adjusted_p[j]);
                r.selected = Some(rep.selected[j]);
            }
            let diag = Diagnostics {
                sigma_hat: Some(rep.sigma_hat),
                lambda: Some(rep.lambda),
                mu: None,
            };
            Ok((rows, refit(theta, y, &rep.selected), diag))
        }
        Method::Semms => {
            let model = semms_fit(
                theta,
                y,
                &SemmsOptions {
                    restarts: s.semms_restarts,
                    seed,
                    ..Default::default()
                },
            )?;
            let sel = semms_select(&model, theta, y, s.semms_threshold, cfg.alpha)?;
            let mut rows = blank_rows(names, &sel.coefficients);
            for (j, r) in rows.iter_mut().enumerate() {
                r.post_null_prob = Some(sel.null_prob[j]);
                r.selected = Some(false);
            }
            if !sel.empty {
                for (a, &j) in sel.selected.iter().enumerate() {
                    let r = &mut rows[j];
                    r.std_err = finite(sel.refit.std_errors[a]);
                    r.ci_lo = finite(sel.refit.ci_lo[a]);
                    r.ci_hi = finite(sel.refit.ci_hi[a]);
                    r.p_value = finite(sel.refit.p_values[a]);
                    r.selected = Some(true);
                }
            }
            let diag = Diagnostics {
                sigma_hat: Some(model.error_var.sqrt()),
                ..Default::default()
            };
            Ok((rows, Some(sel.coefficients), diag))
        }
        Method::Esindy => {
            let cv = s.cv;
            let rep = esindy_with(theta, y, s.esindy_q, seed, |xb, yb| {
                lasso_cv_scaled(xb, yb, &cv).map(|(b, _)| b)
            })?;
            let mean = esindy_aggregate(&rep, 0.0, Aggregate::Mean)?;
            let mut rows = blank_rows(names, &mean);
            for (j, r) in rows.iter_mut().enumerate() {
                r.inclusion = Some(rep.inclusion[j]);
                r.selected = s.esindy_threshold.map(|t| rep.inclusion[j] >= t);
            }
            Ok((rows, None, Diagnostics::default()))
        }
        Method::Stls => {
            let fit = stls(theta, y, s.stls_threshold, 100)?;
            let mut rows = blank_rows(names, &fit.coefficients);
            for r in &mut rows {
                r.selected = Some(r.estimate != 0.0);
            }
            Ok((rows, None, Diagnostics::default()))
        }
    }
}

/// One line of `sweep.csv`. `dim` is a 1-based dimension, or `system` on
/// the rows carrying the all-dimensions success rate, whose `term` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_var: String,
    pub grid_value: f64,
    pub method: String,
    pub dim: String,
    pub term: Option<String>,
    pub sel_freq: Option<f64>,
    pub success_rate: Option<f64>,
    /// Replicates that contributed.
    pub n_ok: usize,
}

/// One line of `boxplot.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub grid_var: String,
    pub grid_value: f64,
    pub method: String,
    pub dim: usize,
    pub term: String,
    pub replicate: usize,
    pub estimate: f64,
    pub selected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub grid_var: String,
    pub grid_value: f64,
    pub method: String,
    pub dim: String,
    pub replicate: usize,
    pub numerical: bool,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub boxplot: Vec<BoxRow>,
    pub failures: Vec<FailureRow>,
}

impl SweepSummary {
    pub fn frequency(&self, grid_value: f64, method: Method, dim: usize, term: &str) -> Option<f64> {
        let dim = (dim + 1).to_string();
        self.rows
            .iter()
            .find(|r| {
                r.grid_value == grid_value && r.method == method.as_str() && r.dim == dim && r.term.as_deref() == Some(term)
            })
            .and_then(|r| r.sel_freq)
    }

    pub fn success(&self, grid_value: f64, method: Method, dim: Option<usize>) -> Option<f64> {
        let dim = dim.map_or("system".to_string(), |d| (d + 1).to_string());
        self.rows
            .iter()
            .find(|r| r.grid_value == grid_value && r.method == method.as_str() && r.dim == dim)
            .and_then(|r| r.success_rate)
    }
}

/// Grid values of the sweep; the configured noise level when there is no grid.
pub fn grid_points(cfg: &ExperimentConfig) -> (GridVar, Vec<f64>) {
    match &cfg.grid {
        Some(g) => (g.variable, g.values.clone()),
        None => (GridVar::Sigma, vec![cfg.noise]),
    }
}

/// Runs `replicates` seeded datasets at every grid value. Replicate `r`
/// uses seed `seed + r`; results do not depend on scheduling.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let (var, values) = grid_points(cfg);
    let configs: Vec<ExperimentConfig> = values.iter().map(|&v| cfg.at_grid_point(var, v)).collect();
    let sims: Vec<Simulation> = configs.iter().map(Simulation::new).collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|g| (0..cfg.replicates).map(move |r| (g, r)))
        .collect();
    let runs: Vec<std::result::Result<SingleRun, CellError>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let data = sims[g].dataset(&configs[g], seed)?;
            Ok(run_methods(&data, &configs[g], seed))
        })
        .collect();

    let mut summary = SweepSummary::default();
    let dims = sims[0].system.dim();
    let names = sims[0].system.basis.term_names();
    for (g, &value) in values.iter().enumerate() {
        let truth: Vec<Vec<usize>> = (0..dims).map(|d| sims[g].system.support(d)).collect();
        let runs_here: Vec<(usize, &std::result::Result<SingleRun, CellError>)> = jobs
            .iter()
            .zip(&runs)
            .filter(|((gg, _), _)| *gg == g)
            .map(|((_, r), run)| (*r, run))
            .collect();
        for &method in &cfg.methods {
            let mut system_hits = 0usize;
            let mut system_ok = 0usize;
            let mut system_decided = true;
            // Per replicate: did every dimension succeed, and did all fit.
            let mut per_rep: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
            for d in 0..dims {
                let mut counts = vec![0usize; names.len()];
                let (mut ok, mut hits) = (0usize, 0usize);
                let mut decided = true;
                for &(r, run) in &runs_here {
                    let cell = match run {
                        Ok(run) => run
                            .cells
                            .iter()
                            .find(|c| c.method == method && c.dim == d)
                            .map(|c| c.result.clone())
                            .expect("every method and dimension has a cell"),
                        Err(e) => Err(e.clone()),
                    };
                    let entry = per_rep.entry(r).or_insert((true, true));
                    match cell {
                        Ok(rep) => {
                            ok += 1;
                            for (j, row) in rep.rows.iter().enumerate() {
                                summary.boxplot.push(BoxRow {
                                    grid_var: var.as_str().into(),
                                    grid_value: value,
                                    method: method.as_str().into(),
                                    dim: d + 1,
                                    term: names[j].clone(),
                                    replicate: r,
                                    estimate: row.estimate,
                                    selected: row.selected,
                                });
                            }
                            match rep.support() {
                                Some(s) => {
                                    for &j in &s {
                                        counts[j] += 1;
                                    }
                                    let exact = s == truth[d];
                                    hits += exact as usize;
                                    entry.0 &= exact;
                                }
                                None => decided = false,
                            }
                        }
                        Err(e) => {
                            entry.1 = false;
                            summary.failures.push(FailureRow {
                                grid_var: var.as_str().into(),
                                grid_value: value,
                                method: method.as_str().into(),
                                dim: (d + 1).to_string(),
                                replicate: r,
                                numerical: e.numerical,
                                message: e.message,
                            });
                        }
                    }
                }
                system_decided &= decided;
                let rate = |k: usize| (decided && ok > 0).then(|| k as f64 / ok as f64);
                let success = rate(hits);
                for (j, name) in names.iter().enumerate() {
                    summary.rows.push(SweepRow {
                        grid_var: var.as_str().into(),
                        grid_value: value,
                        method: method.as_str().into(),
                        dim: (d + 1).to_string(),
                        term: Some(name.clone()),
                        sel_freq: rate(counts[j]),
                        success_rate: success,
                        n_ok: ok,
                    });
                }
            }
            for &(all_exact, all_ok) in per_rep.values() {
                if all_ok {
                    system_ok += 1;
                    system_hits += all_exact as usize;
                }
            }
            summary.rows.push(SweepRow {
                grid_var: var.as_str().into(),
                grid_value: value,
                method: method.as_str().into(),
                dim: "system".into(),
                term: None,
                sel_freq: None,
                success_rate: (system_decided && system_ok > 0).then(|| system_hits as f64 / system_ok as f64),
                n_ok: system_ok,
            });
        }
    }
    Ok(summary)
}
