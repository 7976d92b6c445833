//! Benchmark ODE systems, fixed-step RK4 integration, and observation noise.
//!
//! A system is stored as a sparse coefficient matrix over a monomial basis,
//! `dx/dt = Theta(x) B`, so recovered supports can be compared exactly with
//! the truth.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MonomialBasis;

/// Right-hand side of an autonomous ODE.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, state: &[f64], out: &mut [f64]);
}

/// Adapts a closure `f(x, dxdt)` into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        (self.f)(state, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystemSpec {
    pub name: String,
    pub basis: MonomialBasis,
    /// `basis.len() x dim`; column `i` holds the coefficients of equation `i`.
    pub coefficients: DMatrix<f64>,
}

impl OdeSystemSpec {
    pub fn new(name: impl Into<String>, basis: MonomialBasis, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.nrows() != basis.len() || coefficients.ncols() != basis.dim() {
            return Err(Error::input(format!(
                "coefficient matrix is {}x{} but the basis needs {}x{}",
                coefficients.nrows(),
                coefficients.ncols(),
                basis.len(),
                basis.dim()
            )));
        }
        for (i, col) in coefficients.column_iter().enumerate() {
            if col.iter().all(|&c| c == 0.0) {
                return Err(Error::input(format!("equation {} has no non-zero term", i + 1)));
            }
        }
        Ok(Self {
            name: name.into(),
            basis,
            coefficients,
        })
    }

    /// Indices of the non-zero terms of equation `dim`.
    pub fn support(&self, dim: usize) -> Vec<usize> {
        self.coefficients
            .column(dim)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn coefficient(&self, term: &str, dim: usize) -> Option<f64> {
        self.basis.index_of_name(term).map(|j| self.coefficients[(j, dim)])
    }
}

impl VectorField for OdeSystemSpec {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        let row = self.basis.evaluate_row(state);
        for (i, o) in out.iter_mut().enumerate() {
            *o = row
                .iter()
                .zip(self.coefficients.column(i).iter())
                .map(|(t, b)| t * b)
                .sum();
        }
    }
}

/// Parameters for the built-in systems; unset values take the defaults used
/// in the simulation studies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

/// Names accepted by [`builtin_system`].
pub const BUILTIN_SYSTEMS: [&str; 3] = ["van_der_pol", "spiral", "lotka_volterra"];

/// Initial state, time span and step of the reference simulation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub x0: Vec<f64>,
    pub t_span: (f64, f64),
    pub step: f64,
}

pub fn default_protocol(name: &str) -> Result<Protocol> {
    match name {
        "van_der_pol" => Ok(Protocol {
            x0: vec![1.0, 0.0],
            t_span: (0.0, 15.0),
            step: 0.01,
        }),
        "spiral" => Ok(Protocol {
            x0: vec![2.0, 0.0],
            t_span: (0.0, 20.0),
            step: 0.05,
        }),
        "lotka_volterra" => Ok(Protocol {
            x0: vec![1.0, 1.0],
            t_span: (0.0, 15.0),
            step: 0.01,
        }),
        other => Err(unknown_system(other)),
    }
}

fn unknown_system(name: &str) -> Error {
    Error::config(format!(
        "unknown system '{name}' (expected one of {})",
        BUILTIN_SYSTEMS.join(", ")
    ))
}

/// Builds a named system over the degree-`degree` monomial basis in two variables.
///
/// * `van_der_pol`: `x1' = x2`, `x2' = -x1 + mu x2 - mu x1^2 x2` (default `mu = 2`).
/// * `spiral`: `x1' = -alpha x1 + beta x2`, `x2' = -alpha x2 - beta x1`
///   (defaults `alpha = 1/3`, `beta = 3`).
/// * `lotka_volterra`: `x1' = alpha x1 - beta x1 x2`, `x2' = delta x1 x2 - gamma x2`
///   (defaults `2/3, 4/3, 1, 1`).
pub fn builtin_system(name: &str, params: &SystemParams, degree: u32) -> Result<OdeSystemSpec> {
    let (required, terms): (u32, Vec<(&str, usize, f64)>) = match name {
        "van_der_pol" => {
            let mu = params.mu.unwrap_or(2.0);
            (3, vec![("x2", 0, 1.0), ("x1", 1, -1.0), ("x2", 1, mu), ("x1^2*x2", 1, -mu)])
        }
        "spiral" => {
            let alpha = params.alpha.unwrap_or(1.0 / 3.0);
            let beta = params.beta.unwrap_or(3.0);
            (
                1,
                vec![("x1", 0, -alpha), ("x2", 0, beta), ("x1", 1, -beta), ("x2", 1, -alpha)],
            )
        }
        "lotka_volterra" => {
            let alpha = params.alpha.unwrap_or(2.0 / 3.0);
            let beta = params.beta.unwrap_or(4.0 / 3.0);
            let gamma = params.gamma.unwrap_or(1.0);
            let delta = params.delta.unwrap_or(1.0);
            (
                2,
                vec![("x1", 0, alpha), ("x1*x2", 0, -beta), ("x2", 1, -gamma), ("x1*x2", 1, delta)],
            )
        }
        other => return Err(unknown_system(other)),
    };
    if degree < required {
        return Err(Error::config(format!(
            "system '{name}' needs a library of degree at least {required}, got {degree}"
        )));
    }
    let values = [params.mu, params.alpha, params.beta, params.gamma, params.delta];
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config("system parameters must be finite"));
    }
    let basis = MonomialBasis::new(2, degree)?;
    let mut b = DMatrix::zeros(basis.len(), 2);
    for (term, dim, value) in terms {
        let j = basis.index_of_name(term).expect("built-in term in basis");
        b[(j, dim)] += value;
    }
    OdeSystemSpec::new(name, basis, b)
}

/// Time grid plus one state row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: DMatrix<f64>) -> Result<Self> {
        if times.len() != states.nrows() {
            return Err(Error::input(format!(
                "{} times but {} state rows",
                times.len(),
                states.nrows()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("trajectory times must be strictly increasing"));
        }
        if times.iter().chain(states.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("trajectory contains non-finite values"));
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// Writes `t,x1,...,xd` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut record = vec![t.to_string()];
            record.extend(self.states.row(i).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let d = header.len().saturating_sub(1);
        if d == 0 || &header[0] != "t" {
            return Err(Error::input("trajectory CSV must start with a 't' column"));
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("x{}", i + 1) {
                return Err(Error::input(format!("unexpected trajectory column '{name}'")));
            }
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("bad number '{s}' in trajectory CSV")))
            };
            times.push(parse(&record[0])?);
            for field in record.iter().skip(1) {
                values.push(parse(field)?);
            }
        }
        let states = DMatrix::from_row_slice(times.len(), d, &values);
        Self::new(times, states)
    }
}

/// Classic fourth-order Runge-Kutta with `round((t1 - t0) / h)` steps.
///
/// Grid points are `t0 + i h`; the final point is pinned to `t1`, so the last
/// step absorbs any mismatch between the span and the step.
pub fn rk4_integrate<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t_span: (f64, f64),
    step: f64,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::input(format!("step must be positive, got {step}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::input(format!("degenerate time span [{t0}, {t1}]")));
    }
    let d = field.dim();
    if x0.len() != d {
        return Err(Error::input(format!(
            "initial state has length {} but the system has dimension {d}",
            x0.len()
        )));
    }
    let n = (((t1 - t0) / step).round() as usize).max(1);
    let times: Vec<f64> = (0..=n)
        .map(|i| if i == n { t1 } else { t0 + i as f64 * step })
        .collect();

    let mut states = DMatrix::zeros(n + 1, d);
    let mut x = x0.to_vec();
    for (l, v) in x.iter().enumerate() {
        states[(0, l)] = *v;
    }
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for i in 0..n {
        let h = times[i + 1] - times[i];
        field.eval(&x, &mut k1);
        for l in 0..d {
            tmp[l] = x[l] + 0.5 * h * k1[l];
        }
        field.eval(&tmp, &mut k2);
        for l in 0..d {
            tmp[l] = x[l] + 0.5 * h * k2[l];
        }
        field.eval(&tmp, &mut k3);
        for l in 0..d {
            tmp[l] = x[l] + h * k3[l];
        }
        field.eval(&tmp, &mut k4);
        for l in 0..d {
            x[l] += h / 6.0 * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: i + 1,
                time: times[i + 1],
            });
        }
        for l in 0..d {
            states[(i + 1, l)] = x[l];
        }
    }
    Ok(Trajectory { times, states })
}

/// Evaluates the true right-hand side at every state of a trajectory.
pub fn exact_derivatives<V: VectorField + ?Sized>(field: &V, states: &DMatrix<f64>) -> DMatrix<f64> {
    let d = field.dim();
    let mut out = DMatrix::zeros(states.nrows(), d);
    let mut row = vec![0.0; d];
    let mut dx = vec![0.0; d];
    for i in 0..states.nrows() {
        for l in 0..d {
            row[l] = states[(i, l)];
        }
        field.eval(&row, &mut dx);
        for l in 0..d {
            out[(i, l)] = dx[l];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Standard deviation is `sigma_scale`.
    Absolute,
    /// Standard deviation is `sigma_scale * max |X_ij|`.
    MaxScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_scale: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseConfig {
    /// Per-entry standard deviation this configuration applies to `states`.
    pub fn std_dev(&self, states: &DMatrix<f64>) -> f64 {
        match self.mode {
            NoiseMode::Absolute => self.sigma_scale,
            NoiseMode::MaxScaled => self.sigma_scale * states.amax(),
        }
    }
}

/// Adds i.i.d. Gaussian noise to every state entry, deterministically in the seed.
pub fn add_noise(traj: &Trajectory, cfg: &NoiseConfig) -> Result<Trajectory> {
    if !(cfg.sigma_scale >= 0.0) || !cfg.sigma_scale.is_finite() {
        return Err(Error::config(format!(
            "noise scale must be non-negative, got {}",
            cfg.sigma_scale
        )));
    }
    let sd = cfg.std_dev(&traj.states);
    if sd == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = traj.states.clone();
    // Row-major draw order so the noise does not depend on storage layout.
    for i in 0..states.nrows() {
        for j in 0..states.ncols() {
            states[(i, j)] += normal.sample(&mut rng);
        }
    }
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::evaluate_library;

    fn decay() -> FnField<impl Fn(&[f64], &mut [f64])> {
        FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = -x[0])
    }

    #[test]
    fn constant_flow_stays_put() {
        let f = FnField::new(1, |_: &[f64], out: &mut [f64]| out[0] = 0.0);
        let traj = rk4_integrate(&f, &[1.0], (0.0, 2.0), 0.3).unwrap();
        assert!(traj.states.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn one_step_of_decay_matches_hand_value() {
        let traj = rk4_integrate(&decay(), &[1.0], (0.0, 0.1), 0.1).unwrap();
        assert_eq!(traj.len(), 2);
        // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
        assert!((traj.states[(1, 0)] - 0.9048375).abs() < 1e-7);
        assert!((traj.states[(1, 0)] - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn step_count_and_grid() {
        let traj = rk4_integrate(&decay(), &[1.0], (0.0, 15.0), 0.01).unwrap();
        assert_eq!(traj.len(), 1501);
        assert_eq!(traj.times[1500], 15.0);
        let odd = rk4_integrate(&decay(), &[1.0], (0.0, 1.0), 0.3).unwrap();
        assert_eq!(odd.len(), 4);
        assert_eq!(*odd.times.last().unwrap(), 1.0);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let traj = rk4_integrate(&decay(), &[1.0], (0.0, 1.0), h).unwrap();
            (traj.states[(traj.len() - 1, 0)] - (-1.0f64).exp()).abs()
        };
        for h in [0.1, 0.05, 0.025] {
            let ratio = err(h) / err(h / 2.0);
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} at h = {h}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(rk4_integrate(&decay(), &[1.0], (0.0, 1.0), 0.0).is_err());
        assert!(rk4_integrate(&decay(), &[1.0], (1.0, 1.0), 0.1).is_err());
        assert!(rk4_integrate(&decay(), &[1.0, 2.0], (0.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let f = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        match rk4_integrate(&f, &[1.0], (0.0, 5.0), 0.1) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 9 && step <= 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn van_der_pol_coefficients() {
        let s = builtin_system("van_der_pol", &SystemParams::default(), 4).unwrap();
        assert_eq!(s.basis.len(), 15);
        assert_eq!(s.coefficient("x2", 0), Some(1.0));
        assert_eq!(s.coefficient("x1", 1), Some(-1.0));
        assert_eq!(s.coefficient("x2", 1), Some(2.0));
        assert_eq!(s.coefficient("x1^2*x2", 1), Some(-2.0));
        assert_eq!(s.support(0).len(), 1);
        assert_eq!(s.support(1).len(), 3);
    }

    #[test]
    fn spiral_coefficients() {
        let s = builtin_system("spiral", &SystemParams::default(), 4).unwrap();
        assert!((s.coefficient("x1", 0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.coefficient("x2", 0), Some(3.0));
        assert_eq!(s.coefficient("x1", 1), Some(-3.0));
        assert!((s.coefficient("x2", 1).unwrap() + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lotka_volterra_matches_matrix_form() {
        let p = SystemParams {
            alpha: Some(1.1),
            beta: Some(0.4),
            gamma: Some(0.4),
            delta: Some(0.1),
            ..Default::default()
        };
        let s = builtin_system("lotka_volterra", &p, 2).unwrap();
        assert_eq!(s.coefficient("x1", 0), Some(1.1));
        assert_eq!(s.coefficient("x2", 1), Some(-0.4));
        assert_eq!(s.coefficient("x1*x2", 0), Some(-0.4));
        assert_eq!(s.coefficient("x1*x2", 1), Some(0.1));
        assert_eq!(s.coefficients.iter().filter(|&&c| c != 0.0).count(), 4);
    }

    #[test]
    fn unknown_system_and_low_degree_are_config_errors() {
        assert!(matches!(
            builtin_system("lorenz", &SystemParams::default(), 4),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            builtin_system("van_der_pol", &SystemParams::default(), 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn vector_field_equals_library_product() {
        let s = builtin_system("van_der_pol", &SystemParams { mu: Some(1.7), ..Default::default() }, 4).unwrap();
        let states = DMatrix::from_row_slice(4, 2, &[0.3, -1.2, 2.0, 0.5, -1.5, 3.1, 0.0, 0.0]);
        let theta = evaluate_library(&states, &s.basis).unwrap().theta;
        let via_library = &theta * &s.coefficients;
        let direct = exact_derivatives(&s, &states);
        for i in 0..4 {
            let (x1, x2) = (states[(i, 0)], states[(i, 1)]);
            assert_eq!(direct[(i, 0)], via_library[(i, 0)]);
            assert_eq!(direct[(i, 1)], via_library[(i, 1)]);
            let expected = -x1 + 1.7 * (1.0 - x1 * x1) * x2;
            assert!((direct[(i, 1)] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let traj = rk4_integrate(&decay(), &[1.0], (0.0, 1.0), 0.1).unwrap();
        let cfg = NoiseConfig { sigma_scale: 0.0, mode: NoiseMode::MaxScaled, seed: 7 };
        assert_eq!(add_noise(&traj, &cfg).unwrap(), traj);
    }

    #[test]
    fn max_scaled_standard_deviation() {
        let states = DMatrix::from_row_slice(2, 2, &[1.0, -4.0, 2.0, 3.0]);
        let cfg = NoiseConfig { sigma_scale: 0.25, mode: NoiseMode::MaxScaled, seed: 0 };
        assert_eq!(cfg.std_dev(&states), 1.0);
    }

    #[test]
    fn noise_is_deterministic_and_centred() {
        let n = 4000;
        let traj = Trajectory::new((0..n).map(|i| i as f64).collect(), DMatrix::from_element(n, 2, 1.5)).unwrap();
        let cfg = NoiseConfig { sigma_scale: 0.3, mode: NoiseMode::Absolute, seed: 42 };
        let a = add_noise(&traj, &cfg).unwrap();
        let b = add_noise(&traj, &cfg).unwrap();
        assert_eq!(a, b);
        let diffs: Vec<f64> = (&a.states - &traj.states).iter().copied().collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean.abs() <= 4.0 * 0.3 / (diffs.len() as f64).sqrt());
        let other = add_noise(&traj, &NoiseConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let s = builtin_system("spiral", &SystemParams::default(), 2).unwrap();
        let traj = rk4_integrate(&s, &[2.0, 0.0], (0.0, 1.0), 0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn trajectory_rejects_unsorted_times() {
        assert!(Trajectory::new(vec![0.0, 0.0], DMatrix::zeros(2, 1)).is_err());
        assert!(Trajectory::read_csv("t,y\n0,1\n".as_bytes()).is_err());
    }
}
