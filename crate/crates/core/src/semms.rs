//! Empirical Bayes variable selection with a three-component normal mixture
//! prior on the coefficients.
//!
//! The model on the scaled design `Z` (unit mean square columns) is
//!
//! ```text
//! y = Z b + e,   e ~ N(0, s2 I),   b_k = g_k u_k,
//! g_k in {-1, 0, +1} with probabilities (p_L, p_0, p_R),   u_k ~ N(mu, tau2)
//! ```
//!
//! so a non-null coefficient is drawn from `N(+mu, tau2)` or `N(-mu, tau2)`.
//! The fit alternates over a factorized posterior `q(b_k, g_k)` that puts a
//! point mass at zero on `g_k = 0` and `N(m_k±, v_k)` on the two slabs.
//! For predictor `k` with partial residual `r_k` and `d_k = |z_k|^2`:
//!
//! ```text
//! v_k  = 1 / (d_k / s2 + 1 / tau2)
//! m_k± = v_k (z_k' r_k / s2 ± mu / tau2)
//! log q_k(±) = log p_± + log(v_k / tau2) / 2 + m_k±^2 / (2 v_k) - mu^2 / (2 tau2) + c
//! log q_k(0) = log p_0 + c
//! ```
//!
//! Hyperparameters are then set to `p = mean of q`, `mu` and `tau2` to the
//! q-weighted moments of the slab posteriors, and `s2 = E|y - Z b|^2 / n`.
//! Both steps maximize the same evidence lower bound, which is recorded in
//! `elbo_trace` and never decreases.
//!
//! With a single slab member the bound keeps growing as `tau2 -> 0`, so
//! `tau2` is kept above `1e-12` times the mean square of `y` and the model
//! records when it sits on that floor.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows, ColumnScaling};
use crate::regression::{ols_inference, OlsInference};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemmsOptions {
    pub max_iters: usize,
    /// Stop once the bound improves by less than `tol` (relative to its size).
    pub tol: f64,
    /// Independent starts; the first is unperturbed, the rest jittered.
    pub restarts: usize,
    pub seed: u64,
    /// Fraction of predictors, by absolute marginal correlation, that start
    /// on a slab.
    pub init_fraction: f64,
}

impl Default for SemmsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            restarts: 5,
            seed: 0,
            init_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemmsModel {
    pub p_l: f64,
    pub p_0: f64,
    pub p_r: f64,
    pub slab_mean: f64,
    pub slab_var: f64,
    pub error_var: f64,
    /// `[q_L, q_0, q_R]` per predictor.
    pub posterior: Vec<[f64; 3]>,
    /// Posterior mean coefficients in original units.
    pub coefficients: DVector<f64>,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The slab variance ended on its lower bound.
    pub slab_at_floor: bool,
    /// Which start produced this fit.
    pub restart: usize,
}

impl SemmsModel {
    pub fn null_probabilities(&self) -> Vec<f64> {
        self.posterior.iter().map(|q| q[1]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SemmsSelection {
    pub selected: Vec<usize>,
    pub null_prob: Vec<f64>,
    /// Least squares on the selected columns, or on an intercept alone when
    /// nothing is selected.
    pub refit: OlsInference,
    /// Refit coefficients spread over all predictors, zero where unselected.
    pub coefficients: DVector<f64>,
    pub empty: bool,
}

/// Best of `opts.restarts` fits by final bound.
pub fn semms_fit(x: &DMatrix<f64>, y: &DVector<f64>, opts: &SemmsOptions) -> Result<SemmsModel> {
    validate(x, y, opts)?;
    let data = Data::new(x, y);
    let base = data.initial_responsibilities(opts.init_fraction);
    let runs: Vec<Result<SemmsModel>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                base.clone()
            } else {
                jitter(&base, opts.seed.wrapping_add(r as u64))
            };
            data.run(&init, opts).map(|mut m| {
                m.restart = r;
                m
            })
        })
        .collect();

    let mut best: Option<SemmsModel> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(m) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| m.elbo_trace.last() > b.elbo_trace.last());
                if better {
                    best = Some(m);
                }
            }
            Err(e) => {
                log::warn!("mixture fit restart failed: {e}");
                last_err = Some(e);
            }
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Single fit from the given `[q_L, q_0, q_R]` starting responsibilities.
pub fn semms_fit_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: &[[f64; 3]],
    opts: &SemmsOptions,
) -> Result<SemmsModel> {
    validate(x, y, opts)?;
    if init.len() != x.ncols() {
        return Err(Error::input(format!(
            "{} starting responsibilities for {} predictors",
            init.len(),
            x.ncols()
        )));
    }
    for q in init {
        if q.iter().any(|v| !(*v >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::input("starting responsibilities must be probability triples"));
        }
    }
    Data::new(x, y).run(init, opts)
}

/// Terms whose posterior null probability is below `threshold`, refitted by
/// least squares.
pub fn semms_select(
    model: &SemmsModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    threshold: f64,
    alpha: f64,
) -> Result<SemmsSelection> {
    check_rows(x, y)?;
    if model.posterior.len() != x.ncols() {
        return Err(Error::input("model and design disagree on the number of predictors"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let null_prob = model.null_probabilities();
    let selected: Vec<usize> = (0..x.ncols())
        .filter(|&k| null_prob[k] < threshold || threshold >= 1.0)
        .collect();
    let mut coefficients = DVector::zeros(x.ncols());
    if selected.is_empty() {
        let ones = DMatrix::from_element(x.nrows(), 1, 1.0);
        return Ok(SemmsSelection {
            refit: ols_inference(&ones, y, alpha)?,
            selected,
            null_prob,
            coefficients,
            empty: true,
        });
    }
    let xs = x.select_columns(&selected);
    let refit = ols_inference(&xs, y, alpha)?;
    for (a, &k) in selected.iter().enumerate() {
        coefficients[k] = refit.coefficients[a];
    }
    Ok(SemmsSelection {
        selected,
        null_prob,
        refit,
        coefficients,
        empty: false,
    })
}

fn validate(x: &DMatrix<f64>, y: &DVector<f64>, opts: &SemmsOptions) -> Result<()> {
    check_rows(x, y)?;
    check_finite_matrix(x, "design")?;
    check_finite_vector(y, "response")?;
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::input("design is empty"));
    }
    if opts.max_iters == 0 || !(opts.tol >= 0.0) {
        return Err(Error::config("mixture fit needs max_iters >= 1 and tol >= 0"));
    }
    if !(opts.init_fraction > 0.0 && opts.init_fraction <= 1.0) {
        return Err(Error::config("init_fraction must lie in (0, 1]"));
    }
    Ok(())
}

/// Mixes each starting triple with a random one.
fn jitter(base: &[[f64; 3]], seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.iter()
        .map(|q| {
            let w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let s: f64 = w.iter().sum();
            let mut out = [0.0; 3];
            for c in 0..3 {
                out[c] = 0.5 * q[c] + 0.5 * w[c] / s;
            }
            out
        })
        .collect()
}

struct Data {
    z: DMatrix<f64>,
    y: DVector<f64>,
    scaling: ColumnScaling,
    d: Vec<f64>,
    active: Vec<bool>,
    /// Sweep order: decreasing absolute marginal correlation.
    order: Vec<usize>,
    corr: Vec<f64>,
    /// Lower bounds on the error and slab variances.
    floor: f64,
}

struct State {
    q: Vec<[f64; 3]>,
    m: Vec<[f64; 2]>,
    v: Vec<f64>,
    fitted: DVector<f64>,
    pi: [f64; 3],
    mu: f64,
    tau2: f64,
    s2: f64,
}

impl State {
    fn mean(&self, k: usize) -> f64 {
        self.q[k][0] * self.m[k][0] + self.q[k][2] * self.m[k][1]
    }

    fn second_moment(&self, k: usize) -> f64 {
        self.q[k][0] * (self.m[k][0].powi(2) + self.v[k]) + self.q[k][2] * (self.m[k][1].powi(2) + self.v[k])
    }
}

impl Data {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let scaling = ColumnScaling::fit(x);
        let z = scaling.apply(x);
        let d: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
        let active: Vec<bool> = d.iter().map(|&v| v > 0.0).collect();
        let ynorm = y.norm();
        let corr: Vec<f64> = (0..z.ncols())
            .map(|k| {
                if active[k] && ynorm > 0.0 {
                    z.column(k).dot(y) / (d[k].sqrt() * ynorm)
                } else {
                    0.0
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..z.ncols()).filter(|&k| active[k]).collect();
        order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
        let ms = y.norm_squared() / y.len() as f64;
        Self {
            floor: 1e-12 * if ms > 0.0 { ms } else { 1.0 },
            z,
            y: y.clone(),
            scaling,
            d,
            active,
            order,
            corr,
        }
    }

    /// The most correlated predictors start on the slab matching the sign of
    /// their correlation; the rest start null.
    fn initial_responsibilities(&self, fraction: f64) -> Vec<[f64; 3]> {
        let take = ((self.order.len() as f64 * fraction).ceil() as usize).max(1);
        let mut q = vec![[0.0, 1.0, 0.0]; self.z.ncols()];
        for &k in self.order.iter().take(take) {
            if self.corr[k] > 0.0 {
                q[k] = [0.0, 0.0, 1.0];
            } else if self.corr[k] < 0.0 {
                q[k] = [1.0, 0.0, 0.0];
            }
        }
        q
    }

    fn run(&self, init: &[[f64; 3]], opts: &SemmsOptions) -> Result<SemmsModel> {
        let n = self.z.nrows() as f64;
        let p = self.z.ncols();
        let count = self.active.iter().filter(|&&a| a).count().max(1) as f64;

        // Slab means start at the marginal least-squares coefficients.
        let mut q = init.to_vec();
        let mut m = vec![[0.0; 2]; p];
        let mut slab_sizes = Vec::new();
        for k in 0..p {
            if !self.active[k] {
                q[k] = [0.0, 1.0, 0.0];
                continue;
            }
            let b = self.z.column(k).dot(&self.y) / self.d[k];
            m[k] = [b, b];
            if q[k][0] + q[k][2] > 0.0 {
                slab_sizes.push(b.abs());
            }
        }
        let ms = self.y.norm_squared() / n;
        let (mu, tau2) = if slab_sizes.is_empty() {
            (0.0, ms.max(1.0))
        } else {
            let mean = slab_sizes.iter().sum::<f64>() / slab_sizes.len() as f64;
            let spread = slab_sizes.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / slab_sizes.len() as f64;
            (mean, (spread + 0.25 * mean * mean).max(1e-6 * ms).max(10.0 * self.floor))
        };
        let mut st = State {
            fitted: DVector::zeros(self.z.nrows()),
            v: vec![0.0; p],
            q,
            m,
            // Every component starts with some mass so none is lost for good.
            pi: [0.1, 0.8, 0.1],
            mu,
            tau2,
            s2: (0.5 * ms).max(self.floor),
        };
        for k in 0..p {
            if self.active[k] {
                let b = st.mean(k);
                st.fitted.axpy(b, &self.z.column(k), 1.0);
            }
        }

        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iters {
            iterations += 1;
            self.e_step(&mut st);
            self.m_step(&mut st, count)?;
            let elbo = self.elbo(&st);
            if let Some(&prev) = trace.last() {
                let prev: f64 = prev;
                if elbo < prev - 1e-6 * prev.abs().max(1.0) {
                    log::warn!("mixture bound decreased from {prev} to {elbo}");
                }
                trace.push(elbo);
                if (elbo - prev).abs() < opts.tol * prev.abs().max(1.0) {
                    converged = true;
                    break;
                }
            } else {
                trace.push(elbo);
            }
        }

        let coefficients = DVector::from_fn(p, |k, _| self.scaling.unscale(k, st.mean(k)));
        Ok(SemmsModel {
            p_l: st.pi[0],
            p_0: st.pi[1],
            p_r: st.pi[2],
            slab_mean: st.mu,
            slab_var: st.tau2,
            error_var: st.s2,
            posterior: st.q,
            coefficients,
            elbo_trace: trace,
            iterations,
            converged,
            slab_at_floor: st.tau2 <= self.floor,
            restart: 0,
        })
    }

    fn e_step(&self, st: &mut State) {
        let log_pi: Vec<f64> = st.pi.iter().map(|v| v.ln()).collect();
        for &k in &self.order {
            let col = self.z.column(k);
            let old = st.mean(k);
            // z_k' r_k with r_k the residual excluding predictor k.
            let zr = col.dot(&self.y) - col.dot(&st.fitted) + self.d[k] * old;
            let v = 1.0 / (self.d[k] / st.s2 + 1.0 / st.tau2);
            let ml = v * (zr / st.s2 - st.mu / st.tau2);
            let mr = v * (zr / st.s2 + st.mu / st.tau2);
            let shared = 0.5 * (v / st.tau2).ln() - st.mu * st.mu / (2.0 * st.tau2);
            let logits = [
                log_pi[0] + shared + ml * ml / (2.0 * v),
                log_pi[1],
                log_pi[2] + shared + mr * mr / (2.0 * v),
            ];
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            st.q[k] = [w[0] / total, w[1] / total, w[2] / total];
            st.m[k] = [ml, mr];
            st.v[k] = v;
            let new = st.mean(k);
            if new != old {
                st.fitted.axpy(new - old, &col, 1.0);
            }
        }
    }

    fn m_step(&self, st: &mut State, count: f64) -> Result<()> {
        let mut pi = [0.0; 3];
        let (mut slab, mut first) = (0.0, 0.0);
        for &k in &self.order {
            for c in 0..3 {
                pi[c] += st.q[k][c];
            }
            slab += st.q[k][0] + st.q[k][2];
            first += st.q[k][2] * st.m[k][1] - st.q[k][0] * st.m[k][0];
        }
        st.pi = pi.map(|v| v / count);
        // With no slab mass the bound does not depend on mu or tau2.
        if slab > 1e-10 {
            let mu = first / slab;
            let mut second = 0.0;
            for &k in &self.order {
                second += st.q[k][2] * ((st.m[k][1] - mu).powi(2) + st.v[k])
                    + st.q[k][0] * ((st.m[k][0] + mu).powi(2) + st.v[k]);
            }
            let tau2 = second / slab;
            if !tau2.is_finite() || !mu.is_finite() {
                return Err(Error::DegenerateSlab(tau2));
            }
            st.mu = mu;
            st.tau2 = tau2.max(self.floor);
        }
        st.s2 = (self.expected_rss(st) / self.z.nrows() as f64).max(self.floor);
        Ok(())
    }

    fn expected_rss(&self, st: &State) -> f64 {
        let mut rss = (&self.y - &st.fitted).norm_squared();
        for &k in &self.order {
            rss += self.d[k] * (st.second_moment(k) - st.mean(k).powi(2)).max(0.0);
        }
        rss
    }

    fn elbo(&self, st: &State) -> f64 {
        let n = self.z.nrows() as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut total = -0.5 * n * (two_pi * st.s2).ln() - self.expected_rss(st) / (2.0 * st.s2);
        // Responsibilities this small contribute nothing representable, but
        // their ratios and logs can overflow.
        const NEGLIGIBLE: f64 = 1e-300;
        for &k in &self.order {
            for c in 0..3 {
                let qc = st.q[k][c];
                if qc > NEGLIGIBLE {
                    total += qc * (st.pi[c].ln() - qc.ln());
                }
            }
            let v = st.v[k];
            let slab_term = |m: f64, centre: f64| {
                0.5 * (v / st.tau2).ln() + 0.5 - ((m - centre).powi(2) + v) / (2.0 * st.tau2)
            };
            if st.q[k][0] > NEGLIGIBLE {
                total += st.q[k][0] * slab_term(st.m[k][0], -st.mu);
            }
            if st.q[k][2] > NEGLIGIBLE {
                total += st.q[k][2] * slab_term(st.m[k][1], st.mu);
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    fn assert_simplex(model: &SemmsModel) {
        for q in &model.posterior {
            assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!((model.p_l + model.p_0 + model.p_r - 1.0).abs() < 1e-10);
    }

    fn assert_monotone(model: &SemmsModel) {
        assert!(model.elbo_trace.iter().all(|v| v.is_finite()));
        for w in model.elbo_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "bound fell from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_response_is_all_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(50, 6, &mut rng);
        let model = semms_fit(&x, &DVector::zeros(50), &SemmsOptions::default()).unwrap();
        assert!(model.posterior.iter().all(|q| q[1] > 0.999));
        assert!(model.p_0 > 0.999);
        assert_simplex(&model);
        let sel = semms_select(&model, &x, &DVector::zeros(50), 0.5, 0.05).unwrap();
        assert!(sel.empty && sel.selected.is_empty());
    }

    #[test]
    fn single_strong_signal() {
        let mut hits = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = gaussian(200, 10, &mut rng);
            let y = x.column(3) * 5.0 + DVector::from_fn(200, |_, _| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let model = semms_fit(&x, &y, &SemmsOptions::default()).unwrap();
            assert_simplex(&model);
            assert_monotone(&model);
            let others = (0..10).filter(|&k| k != 3).all(|k| model.posterior[k][1] > 0.9);
            if model.posterior[3][2] > 0.99 && others {
                hits += 1;
            }
        }
        assert!(hits >= 38, "{hits}/40");
    }

    #[test]
    fn sign_flip_swaps_slabs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(80, 6, &mut rng);
        let y = x.column(0) * 2.0 - x.column(2) + DVector::from_fn(80, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let opts = SemmsOptions::default();
        let init = Data::new(&x, &y).initial_responsibilities(0.5);
        let mirrored: Vec<[f64; 3]> = init.iter().map(|q| [q[2], q[1], q[0]]).collect();
        let a = semms_fit_from(&x, &y, &init, &opts).unwrap();
        let b = semms_fit_from(&x, &(-&y), &mirrored, &opts).unwrap();
        for k in 0..6 {
            assert!((a.posterior[k][0] - b.posterior[k][2]).abs() < 1e-12);
            assert!((a.posterior[k][2] - b.posterior[k][0]).abs() < 1e-12);
            assert!((a.coefficients[k] + b.coefficients[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_one_selects_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(60, 4, &mut rng);
        let y = x.column(1) * 3.0 + DVector::from_fn(60, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let model = semms_fit(&x, &y, &SemmsOptions::default()).unwrap();
        let sel = semms_select(&model, &x, &y, 1.0, 0.05).unwrap();
        assert_eq!(sel.selected, vec![0, 1, 2, 3]);
        let sel = semms_select(&model, &x, &y, 0.5, 0.05).unwrap();
        assert!(sel.selected.contains(&1));
        assert!((sel.coefficients[1] - sel.refit.coefficients[sel.selected.iter().position(|&k| k == 1).unwrap()]).abs() == 0.0);
    }

    #[test]
    fn bound_never_decreases() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let x = gaussian(60, 8, &mut rng);
            let y = x.column(0) * 1.5 - x.column(5) * 0.7
                + DVector::from_fn(60, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let model = semms_fit(&x, &y, &SemmsOptions { seed, ..Default::default() }).unwrap();
            assert_monotone(&model);
            assert_simplex(&model);
        }
    }

    #[test]
    fn permuting_columns_permutes_posteriors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian(100, 7, &mut rng);
        let y = x.column(2) * 2.0 + x.column(4) * -1.0
            + DVector::from_fn(100, |_, _| 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let perm = [6, 2, 0, 5, 1, 4, 3];
        let xp = DMatrix::from_fn(100, 7, |i, j| x[(i, perm[j])]);
        let opts = SemmsOptions { restarts: 1, ..Default::default() };
        let a = semms_fit(&x, &y, &opts).unwrap();
        let b = semms_fit(&xp, &y, &opts).unwrap();
        for (j, &k) in perm.iter().enumerate() {
            for c in 0..3 {
                assert!((a.posterior[k][c] - b.posterior[j][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bad_inputs() {
        let x = DMatrix::zeros(10, 2);
        let y = DVector::zeros(10);
        let opts = SemmsOptions { max_iters: 0, ..Default::default() };
        assert!(matches!(semms_fit(&x, &y, &opts), Err(Error::Config(_))));
        assert!(semms_fit_from(&x, &y, &[[0.0, 1.0, 0.0]], &SemmsOptions::default()).is_err());
        assert!(semms_fit(&x, &DVector::zeros(9), &SemmsOptions::default()).is_err());
    }
}
