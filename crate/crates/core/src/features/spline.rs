//! Cubic smoothing splines in Reinsch form.
//!
//! For knots `t_0 < ... < t_{n-1}` the fit minimizes
//! `sum (y_i - f(t_i))^2 + lambda * integral f''(t)^2 dt`.
//! With `Q` the `n x (n-2)` second-difference matrix and `R` the tridiagonal
//! Gram matrix of the hat functions, the interior second derivatives `gamma`
//! solve `(R + lambda Q'Q) gamma = Q'y` and the fitted values are
//! `g = y - lambda Q gamma`. `R + lambda Q'Q` is pentadiagonal, so fits cost
//! O(n). The GCV trace `tr(A) = n - lambda tr((R + lambda Q'Q)^-1 Q'Q)` uses
//! the Hutchinson-de Hoog recursion for the central band of the inverse.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the smoothing parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "lambda")]
pub enum Smoothing {
    /// Minimize generalized cross-validation over a fixed log grid.
    Gcv,
    Fixed(f64),
}

/// Points in the GCV grid.
pub const GCV_GRID_POINTS: usize = 41;
/// Decades covered by the GCV grid, centred on the data-driven scale.
pub const GCV_GRID_DECADES: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    /// `[a, b, c, d]` of `a + b s + c s^2 + d s^3` with `s = t - knots[i]`.
    pieces: Vec<[f64; 4]>,
    lambda: f64,
    gcv: Option<f64>,
}

impl SmoothingSpline {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn pieces(&self) -> &[[f64; 4]] {
        &self.pieces
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// GCV score of the chosen smoothing parameter (GCV fits only).
    pub fn gcv_score(&self) -> Option<f64> {
        self.gcv
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.domain();
        let slack = 1e-12 * (hi - lo);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::input(format!(
                "spline evaluation at t = {t} outside the fitted interval [{lo}, {hi}]"
            )));
        }
        let i = self
            .knots
            .partition_point(|&k| k <= t)
            .saturating_sub(1)
            .min(self.pieces.len() - 1);
        Ok((i, t - self.knots[i]))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [a, b, c, d] = self.pieces[i];
        Ok(a + s * (b + s * (c + s * d)))
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [_, b, c, d] = self.pieces[i];
        Ok(b + s * (2.0 * c + 3.0 * s * d))
    }

    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [_, _, c, d] = self.pieces[i];
        Ok(2.0 * c + 6.0 * s * d)
    }
}

/// Pentadiagonal symmetric matrix: `diag[i]`, `off1[i] = (i, i+1)`, `off2[i] = (i, i+2)`.
#[derive(Debug, Clone)]
struct Band {
    diag: Vec<f64>,
    off1: Vec<f64>,
    off2: Vec<f64>,
}

impl Band {
    fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off1: vec![0.0; n.saturating_sub(1)],
            off2: vec![0.0; n.saturating_sub(2)],
        }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match j - i {
            0 => self.diag[i],
            1 => self.off1[i],
            2 => self.off2[i],
            _ => 0.0,
        }
    }

    fn combine(&self, weight: f64, other: &Band) -> Band {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + weight * y).collect();
        Band {
            diag: mix(&self.diag, &other.diag),
            off1: mix(&self.off1, &other.off1),
            off2: mix(&self.off2, &other.off2),
        }
    }
}

/// `L D L'` factor of a pentadiagonal SPD matrix; `l1[i] = L[i+1][i]`, `l2[i] = L[i+2][i]`.
struct BandLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandLdl {
    fn factor(a: &Band) -> Result<Self> {
        let n = a.len();
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n.saturating_sub(1)];
        let mut l2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n {
            let mut di = a.diag[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::Conditioning(format!(
                    "spline system lost positive definiteness at row {i}"
                )));
            }
            d[i] = di;
            if i + 1 < n {
                let mut v = a.off1[i];
                if i >= 1 {
                    v -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = v / di;
            }
            if i + 2 < n {
                l2[i] = a.off2[i] / di;
            }
        }
        Ok(Self { d, l1, l2 })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                x[i] -= self.l1[i - 1] * x[i - 1];
            }
            if i >= 2 {
                x[i] -= self.l2[i - 2] * x[i - 2];
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                x[i] -= self.l1[i] * x[i + 1];
            }
            if i + 2 < n {
                x[i] -= self.l2[i] * x[i + 2];
            }
        }
        x
    }

    /// Central pentadiagonal band of the inverse.
    fn inverse_band(&self) -> Band {
        let n = self.d.len();
        let mut s = Band::zeros(n);
        let l1 = |i: usize| if i + 1 < n { self.l1[i] } else { 0.0 };
        let l2 = |i: usize| if i + 2 < n { self.l2[i] } else { 0.0 };
        for i in (0..n).rev() {
            let s11 = if i + 1 < n { s.diag[i + 1] } else { 0.0 };
            let s22 = if i + 2 < n { s.diag[i + 2] } else { 0.0 };
            let s12 = if i + 2 < n { s.off1[i + 1] } else { 0.0 };
            let off2 = -l1(i) * s12 - l2(i) * s22;
            let off1 = -l1(i) * s11 - l2(i) * s12;
            if i + 2 < n {
                s.off2[i] = off2;
            }
            if i + 1 < n {
                s.off1[i] = off1;
            }
            s.diag[i] = 1.0 / self.d[i] - l1(i) * off1 - l2(i) * off2;
        }
        s
    }
}

struct Reinsch<'a> {
    y: &'a [f64],
    h: Vec<f64>,
    r: Band,
    qtq: Band,
    qty: Vec<f64>,
}

struct Fit {
    fitted: Vec<f64>,
    gamma: Vec<f64>,
    rss: f64,
    trace: f64,
}

impl<'a> Reinsch<'a> {
    fn new(t: &[f64], y: &'a [f64]) -> Self {
        let n = t.len();
        let m = n - 2;
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mut r = Band::zeros(m);
        for i in 0..m {
            r.diag[i] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < m {
                r.off1[i] = h[i + 1] / 6.0;
            }
        }
        // Column i of Q has entries at rows i, i+1, i+2.
        let qa: Vec<f64> = (0..m).map(|i| 1.0 / h[i]).collect();
        let qb: Vec<f64> = (0..m).map(|i| -1.0 / h[i] - 1.0 / h[i + 1]).collect();
        let qc: Vec<f64> = (0..m).map(|i| 1.0 / h[i + 1]).collect();
        let mut qtq = Band::zeros(m);
        for i in 0..m {
            qtq.diag[i] = qa[i] * qa[i] + qb[i] * qb[i] + qc[i] * qc[i];
            if i + 1 < m {
                qtq.off1[i] = qb[i] * qa[i + 1] + qc[i] * qb[i + 1];
            }
            if i + 2 < m {
                qtq.off2[i] = qc[i] * qa[i + 2];
            }
        }
        let qty = (0..m)
            .map(|i| qa[i] * y[i] + qb[i] * y[i + 1] + qc[i] * y[i + 2])
            .collect();
        Self { y, h, r, qtq, qty }
    }

    fn q_times(&self, gamma: &[f64]) -> Vec<f64> {
        let n = self.y.len();
        let mut out = vec![0.0; n];
        for (i, &g) in gamma.iter().enumerate() {
            out[i] += g / self.h[i];
            out[i + 1] -= g * (1.0 / self.h[i] + 1.0 / self.h[i + 1]);
            out[i + 2] += g / self.h[i + 1];
        }
        out
    }

    fn fit(&self, lambda: f64, with_trace: bool) -> Result<Fit> {
        let system = self.r.combine(lambda, &self.qtq);
        let ldl = BandLdl::factor(&system)?;
        let gamma = ldl.solve(&self.qty);
        let qg = self.q_times(&gamma);
        let fitted: Vec<f64> = self.y.iter().zip(&qg).map(|(y, q)| y - lambda * q).collect();
        let rss = self.y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
        let trace = if with_trace {
            let inv = ldl.inverse_band();
            let m = inv.len();
            let mut tr = 0.0;
            for i in 0..m {
                for j in i.saturating_sub(2)..(i + 3).min(m) {
                    tr += inv.get(i, j) * self.qtq.get(j, i);
                }
            }
            self.y.len() as f64 - lambda * tr
        } else {
            f64::NAN
        };
        Ok(Fit {
            fitted,
            gamma,
            rss,
            trace,
        })
    }
}

fn validate(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::input(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 4 {
        return Err(Error::input("a smoothing spline needs at least 4 points"));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::input("spline data contain non-finite values"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("spline times must be strictly increasing"));
    }
    Ok(())
}

/// The 41-point log grid for GCV, centred on `n` times the mean squared
/// second difference of the data, with time measured in units of the mean
/// sampling step (so the centre is multiplied by that step cubed).
pub fn gcv_grid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let msd = values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2))
        .sum::<f64>()
        / (n - 2) as f64;
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    let centre = n as f64 * msd * step.powi(3);
    let centre = if centre.is_finite() && centre > 0.0 { centre } else { step.powi(3) };
    let start = centre.log10() - GCV_GRID_DECADES / 2.0;
    let inc = GCV_GRID_DECADES / (GCV_GRID_POINTS - 1) as f64;
    (0..GCV_GRID_POINTS)
        .map(|k| 10f64.powf(start + inc * k as f64))
        .collect()
}

/// Generalized cross-validation score `n RSS / (n - tr A)^2`.
pub fn gcv_score(times: &[f64], values: &[f64], lambda: f64) -> Result<f64> {
    validate(times, values)?;
    let fit = Reinsch::new(times, values).fit(lambda, true)?;
    Ok(gcv_from(values.len(), &fit))
}

fn gcv_from(n: usize, fit: &Fit) -> f64 {
    let n = n as f64;
    let denom = n - fit.trace;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        n * fit.rss / (denom * denom)
    }
}

pub fn fit_smoothing_spline(
    times: &[f64],
    values: &[f64],
    smoothing: Smoothing,
) -> Result<SmoothingSpline> {
    validate(times, values)?;
    let problem = Reinsch::new(times, values);
    let (lambda, fit, gcv) = match smoothing {
        Smoothing::Fixed(lambda) => {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::input(format!(
                    "smoothing parameter must be finite and non-negative, got {lambda}"
                )));
            }
            (lambda, problem.fit(lambda, false)?, None)
        }
        Smoothing::Gcv => {
            let grid = gcv_grid(times, values);
            let inc = 10f64.powf(GCV_GRID_DECADES / (GCV_GRID_POINTS - 1) as f64);
            let score_at = |lambda: f64| -> Result<(Fit, f64)> {
                let fit = problem.fit(lambda, true)?;
                let score = gcv_from(values.len(), &fit);
                Ok((fit, score))
            };
            let mut best: Option<(usize, f64, Fit, f64)> = None;
            for (k, &lambda) in grid.iter().enumerate() {
                let (fit, score) = score_at(lambda)?;
                if best.as_ref().is_none_or(|(_, _, _, s)| score < *s) {
                    best = Some((k, lambda, fit, score));
                }
            }
            let (k, mut lambda, mut fit, mut score) = best.expect("non-empty grid");
            // An optimum on the edge means the grid missed it; keep stepping
            // outward while the score improves.
            if k == 0 || k == grid.len() - 1 {
                let factor = if k == 0 { 1.0 / inc } else { inc };
                for _ in 0..GCV_GRID_POINTS - 1 {
                    let next = lambda * factor;
                    let (f, sc) = score_at(next)?;
                    if !(sc < score) {
                        break;
                    }
                    (lambda, fit, score) = (next, f, sc);
                }
            }
            (lambda, fit, Some(score))
        }
    };
    Ok(assemble(times, &problem.h, fit, lambda, gcv))
}

fn assemble(times: &[f64], h: &[f64], fit: Fit, lambda: f64, gcv: Option<f64>) -> SmoothingSpline {
    let n = times.len();
    let mut second = vec![0.0; n];
    second[1..n - 1].copy_from_slice(&fit.gamma);
    let g = &fit.fitted;
    let pieces = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let b = (g[i + 1] - g[i]) / hi - hi * (2.0 * second[i] + second[i + 1]) / 6.0;
            let c = second[i] / 2.0;
            let d = (second[i + 1] - second[i]) / (6.0 * hi);
            [g[i], b, c, d]
        })
        .collect();
    SmoothingSpline {
        knots: times.to_vec(),
        pieces,
        lambda,
        gcv,
    }
}

/// Fits one spline per column of `states`.
pub fn fit_columns(times: &[f64], states: &DMatrix<f64>, smoothing: Smoothing) -> Result<Vec<SmoothingSpline>> {
    (0..states.ncols())
        .map(|j| {
            let column: Vec<f64> = states.column(j).iter().copied().collect();
            fit_smoothing_spline(times, &column, smoothing)
        })
        .collect()
}
