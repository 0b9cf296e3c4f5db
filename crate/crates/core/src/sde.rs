//! Euler–Maruyama integration of the `n`-family Wright–Fisher diffusion
//! with selection and mutation, and of its scalar frequency process.
//!
//! A state holds `2n` coordinates: fit masses `x_0..x_{n-1}` followed by the
//! unfit masses `x_n..x_{2n-1}` of the same families. The diffusion matrix
//! is `a_ij = x_i (δ_ij - x_j)`. After each step negative coordinates are
//! clamped to zero and the vector is renormalized onto the simplex.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::analytics::EquilibriumSampler;
use crate::error::{invalid_argument, invalid_parameter, Result};
use crate::rng::run_replicates;
use crate::scalar::Real;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState<T> {
    x: Vec<T>,
}

impl<T: Real> SimplexState<T> {
    /// Accepts `2n` nonnegative coordinates summing to one (up to `1e-9`).
    pub fn new(x: Vec<T>) -> Result<Self> {
        if x.is_empty() || x.len() % 2 != 0 {
            return Err(invalid_argument(format!("need 2n coordinates, got {}", x.len())));
        }
        if x.iter().any(|&v| !(v >= T::zero())) {
            return Err(invalid_argument("coordinates must be nonnegative"));
        }
        let sum: f64 = x.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid_argument(format!("coordinates sum to {sum}, not 1")));
        }
        Ok(Self { x })
    }

    /// Every family starts with `(ybar / n, (1 - ybar) / n)`.
    pub fn uniform_families(n: usize, ybar: T) -> Result<Self> {
        if n == 0 {
            return Err(invalid_parameter("need at least one family"));
        }
        if !(ybar >= T::zero() && ybar <= T::one()) {
            return Err(invalid_argument(format!("frequency {ybar} outside [0, 1]")));
        }
        let nn = T::from_count(n);
        let mut x = vec![ybar / nn; n];
        x.extend(std::iter::repeat_n((T::one() - ybar) / nn, n));
        Ok(Self { x })
    }

    pub fn families(&self) -> usize {
        self.x.len() / 2
    }

    pub fn coords(&self) -> &[T] {
        &self.x
    }

    /// Total fit mass `Ȳ`.
    pub fn fit_total(&self) -> T {
        self.x[..self.families()].iter().copied().sum()
    }

    /// `(φ1, φ2, φ3)`.
    pub fn observables(&self) -> (T, T, T) {
        observables(&self.x)
    }
}

/// The three moment functionals
/// `φ1 = Σ f_i²`, `φ2 = Σ f_i (y_i - f_i Ȳ)` and
/// `φ3 = Σ (y_i - f_i Ȳ)² - 2 φ2 Ȳ`, with `f_i = y_i + z_i`.
pub fn observables<T: Real>(x: &[T]) -> (T, T, T) {
    let n = x.len() / 2;
    let ybar: T = x[..n].iter().copied().sum();
    let (mut p1, mut p2, mut sq) = (T::zero(), T::zero(), T::zero());
    for i in 0..n {
        let f = x[i] + x[i + n];
        let d = x[i] - f * ybar;
        p1 = p1 + f * f;
        p2 = p2 + f * d;
        sq = sq + d * d;
    }
    let two = T::lit(2.0);
    (p1, p2, sq - two * p2 * ybar)
}

/// Drift over all `2n` coordinates; the components sum to zero.
pub fn drift<T: Real>(x: &[T], alpha: T, theta0: T, theta1: T) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    drift_into(x, alpha, theta0, theta1, &mut out);
    out
}

fn drift_into<T: Real>(x: &[T], alpha: T, theta0: T, theta1: T, out: &mut [T]) {
    let n = x.len() / 2;
    let ybar: T = x[..n].iter().copied().sum();
    let zbar: T = x[n..].iter().copied().sum();
    for i in 0..n {
        let (y, z) = (x[i], x[i + n]);
        out[i] = alpha * zbar * y + theta0 * z - theta1 * y;
        out[i + n] = -alpha * ybar * z + theta1 * y - theta0 * z;
    }
}

/// Diffusion matrix over the first `2n - 1` (free) coordinates.
pub fn covariance<T: Real>(x: &[T]) -> DMatrix<T> {
    let m = x.len() - 1;
    DMatrix::from_fn(m, m, |i, j| cov_entry(x, i, j))
}

/// Diffusion matrix over all `2n` coordinates (rows sum to zero).
pub fn covariance_full<T: Real>(x: &[T]) -> DMatrix<T> {
    let m = x.len();
    DMatrix::from_fn(m, m, |i, j| cov_entry(x, i, j))
}

fn cov_entry<T: Real>(x: &[T], i: usize, j: usize) -> T {
    let delta = if i == j { T::one() } else { T::zero() };
    x[i] * (delta - x[j])
}

/// How the Gaussian increment with covariance `a(x) dt` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScheme {
    /// `ξ'_i = √x_i ξ_i - x_i Σ_j √x_j ξ_j`, an exact square root of
    /// `diag(x) - x xᵀ` on the simplex at O(n) cost.
    #[default]
    Factor,
    /// Symmetric eigendecomposition of the free `(2n-1)`-block with negative
    /// eigenvalues clipped to zero; O(n³) per step.
    Eigen,
}

/// How an Euler update that left the simplex is brought back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// A negative fit or unfit mass is set to zero and the deficit is taken
    /// from the other mass of the same family, so family sizes move exactly
    /// as the aggregated update says; a family whose size turns negative is
    /// emptied. Then renormalize.
    #[default]
    Family,
    /// Clamp every coordinate at zero independently, then renormalize.
    /// Near the boundary this feeds mass into almost-empty coordinates and
    /// biases family sizes toward uniform when mutation is on.
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeConfig<T> {
    pub n: usize,
    pub dt: T,
    pub alpha: T,
    pub theta0: T,
    pub theta1: T,
    pub seed: u64,
    pub paths: usize,
    pub noise: NoiseScheme,
    pub projection: Projection,
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_FIXATION_TOL: f64 = 1e-9;

impl<T: Real> SdeConfig<T> {
    pub fn new(n: usize, alpha: T, theta0: T, theta1: T) -> Self {
        Self {
            n,
            dt: T::lit(DEFAULT_DT),
            alpha,
            theta0,
            theta1,
            seed: 0,
            paths: 500,
            noise: NoiseScheme::Factor,
            projection: Projection::Family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid_parameter("need at least one family"));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(invalid_parameter(format!("dt must be positive, got {}", self.dt)));
        }
        for (name, v) in [("alpha", self.alpha), ("theta0", self.theta0), ("theta1", self.theta1)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(invalid_parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Stateful Euler–Maruyama stepper; keeps scratch buffers and counts the
/// steps that had to fall back to diagonal noise.
#[derive(Debug, Clone)]
pub struct EmIntegrator<T> {
    cfg: SdeConfig<T>,
    drift: Vec<T>,
    noise: Vec<T>,
    fallbacks: usize,
}

impl<T: Real> EmIntegrator<T> {
    pub fn new(cfg: SdeConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let m = 2 * cfg.n;
        Ok(Self { cfg, drift: vec![T::zero(); m], noise: vec![T::zero(); m], fallbacks: 0 })
    }

    pub fn config(&self) -> &SdeConfig<T> {
        &self.cfg
    }

    /// Steps where the eigendecomposition failed and diagonal noise was used.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// One step of size `dt` followed by projection onto the simplex.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut SimplexState<T>, rng: &mut R) {
        let dt = self.cfg.dt;
        self.step_by(state, dt, rng);
    }

    fn step_by<R: Rng + ?Sized>(&mut self, state: &mut SimplexState<T>, dt: T, rng: &mut R) {
        assert_eq!(state.families(), self.cfg.n, "state does not match configured family count");
        let x = &mut state.x;
        drift_into(x, self.cfg.alpha, self.cfg.theta0, self.cfg.theta1, &mut self.drift);
        match self.cfg.noise {
            NoiseScheme::Factor => factor_noise(x, &mut self.noise, rng),
            NoiseScheme::Eigen => {
                if !eigen_noise(x, &mut self.noise, rng) {
                    self.fallbacks += 1;
                    diagonal_noise(x, &mut self.noise, rng);
                }
            }
        }
        let sq = dt.sqrt();
        for ((xi, &b), &w) in x.iter_mut().zip(&self.drift).zip(&self.noise) {
            *xi = *xi + b * dt + sq * w;
        }
        project(x, self.cfg.projection);
    }

    /// Integrates for `duration`, with a shortened last step if needed.
    pub fn run<R: Rng + ?Sized>(&mut self, state: &mut SimplexState<T>, duration: T, rng: &mut R) {
        let (steps, rest) = split_duration(duration, self.cfg.dt);
        for _ in 0..steps {
            self.step(state, rng);
        }
        if rest > T::zero() {
            self.step_by(state, rest, rng);
        }
    }
}

/// Maps an Euler update back onto the simplex.
fn project<T: Real>(x: &mut [T], projection: Projection) {
    let n = x.len() / 2;
    match projection {
        Projection::Coordinate => {
            for xi in x.iter_mut() {
                *xi = xi.max(T::zero());
            }
        }
        Projection::Family => {
            for i in 0..n {
                let (y, z) = (x[i], x[i + n]);
                let f = y + z;
                (x[i], x[i + n]) = if f <= T::zero() {
                    (T::zero(), T::zero())
                } else if y < T::zero() {
                    (T::zero(), f)
                } else if z < T::zero() {
                    (f, T::zero())
                } else {
                    (y, z)
                };
            }
        }
    }
    let total: T = x.iter().copied().sum();
    if total > T::zero() {
        for xi in x.iter_mut() {
            *xi = *xi / total;
        }
    }
}

/// Whole steps of size `dt` in `duration` and the leftover.
fn split_duration<T: Real>(duration: T, dt: T) -> (usize, T) {
    let ratio = (duration / dt).as_f64();
    let steps = (ratio + 1e-9).floor().max(0.0) as usize;
    let rest = duration - dt * T::from_count(steps);
    (steps, if rest > dt * T::lit(1e-9) { rest } else { T::zero() })
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let g: f64 = StandardNormal.sample(rng);
    T::lit(g)
}

fn factor_noise<T: Real, R: Rng + ?Sized>(x: &[T], out: &mut [T], rng: &mut R) {
    let mut common = T::zero();
    for (o, &xi) in out.iter_mut().zip(x) {
        let w = xi.sqrt() * gaussian::<T, _>(rng);
        *o = w;
        common = common + w;
    }
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = *o - xi * common;
    }
}

fn eigen_noise<T: Real, R: Rng + ?Sized>(x: &[T], out: &mut [T], rng: &mut R) -> bool {
    let m = x.len() - 1;
    let a = DMatrix::from_fn(m, m, |i, j| cov_entry(x, i, j).as_f64());
    let Some(eig) = a.try_symmetric_eigen(1e-14, 10_000) else {
        return false;
    };
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let xi = DVector::from_fn(m, |k, _| {
        let g: f64 = StandardNormal.sample(rng);
        g * eig.eigenvalues[k].max(0.0).sqrt()
    });
    let w = &eig.eigenvectors * xi;
    let mut sum = 0.0;
    for k in 0..m {
        out[k] = T::lit(w[k]);
        sum += w[k];
    }
    out[m] = T::lit(-sum);
    true
}

fn diagonal_noise<T: Real, R: Rng + ?Sized>(x: &[T], out: &mut [T], rng: &mut R) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = (xi * (T::one() - xi)).max(T::zero()).sqrt() * gaussian::<T, _>(rng);
    }
}

/// Clamped Euler path of the scalar frequency diffusion with drift
/// `-θ1 y + θ0 (1 - y) + α y (1 - y)` and diffusion `y (1 - y)`; returns
/// the endpoint.
pub fn simulate_scalar_wf<T: Real, R: Rng + ?Sized>(
    y0: T,
    alpha: T,
    theta0: T,
    theta1: T,
    t: T,
    dt: T,
    rng: &mut R,
) -> Result<T> {
    if !(y0 >= T::zero() && y0 <= T::one()) {
        return Err(invalid_argument(format!("initial frequency {y0} outside [0, 1]")));
    }
    if !(dt > T::zero()) {
        return Err(invalid_parameter("dt must be positive"));
    }
    let (steps, rest) = split_duration(t, dt);
    let mut y = y0;
    let advance = |y: T, h: T, rng: &mut R| {
        let one = T::one();
        let b = -theta1 * y + theta0 * (one - y) + alpha * y * (one - y);
        let s = (y * (one - y)).max(T::zero()).sqrt();
        (y + b * h + s * h.sqrt() * gaussian::<T, _>(rng)).max(T::zero()).min(one)
    };
    for _ in 0..steps {
        y = advance(y, dt, rng);
    }
    if rest > T::zero() {
        y = advance(y, rest, rng);
    }
    Ok(y)
}

/// Where the fit frequency at the start of the family window comes from.
#[derive(Debug, Clone, Copy)]
pub enum FrequencyStart<'a, T> {
    /// Scalar diffusion from `y0` run for `T - h`.
    Scalar { y0: T },
    /// Stationary law of the scalar diffusion.
    Stationary(&'a EquilibriumSampler<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyEstimate<T> {
    /// `E[φ1(X_h)]`, the estimate of `P(R_T ≤ h)`.
    pub phi1: Estimate<T>,
    pub phi2: Estimate<T>,
    pub fallbacks: usize,
}

/// Estimates `P(R_T ≤ h)`: draw `Ȳ_{T-h}`, start all `n` families at
/// `(Ȳ/n, (1-Ȳ)/n)`, integrate the family diffusion for `h` and average
/// `φ1` over `cfg.paths` paths.
pub fn thm_key_estimator<T: Real>(
    cfg: &SdeConfig<T>,
    t: T,
    h: T,
    start: FrequencyStart<'_, T>,
) -> Result<KeyEstimate<T>> {
    cfg.validate()?;
    if !(h > T::zero() && h < t) {
        return Err(invalid_argument(format!("need 0 < h < T, got h={h}, T={t}")));
    }
    if cfg.paths == 0 {
        return Err(invalid_argument("need at least one path"));
    }
    let results = run_replicates(cfg.paths, cfg.seed, |_, rng| {
        let ybar = match start {
            FrequencyStart::Scalar { y0 } => {
                simulate_scalar_wf(y0, cfg.alpha, cfg.theta0, cfg.theta1, t - h, cfg.dt, rng).expect("validated")
            }
            FrequencyStart::Stationary(sampler) => sampler.sample(rng),
        };
        let mut state = SimplexState::uniform_families(cfg.n, ybar).expect("frequency in [0, 1]");
        let mut em = EmIntegrator::new(cfg.clone()).expect("validated");
        em.run(&mut state, h, rng);
        let (p1, p2, _) = state.observables();
        (p1, p2, em.fallbacks())
    });
    let phi1: Vec<T> = results.iter().map(|r| r.0).collect();
    let phi2: Vec<T> = results.iter().map(|r| r.1).collect();
    Ok(KeyEstimate {
        phi1: Estimate::from_samples(&phi1),
        phi2: Estimate::from_samples(&phi2),
        fallbacks: results.iter().map(|r| r.2).sum(),
    })
}

/// Closed-form solution of
/// `f' = 1 - f + 2α g`, `f(0) = 1/n` and
/// `g' = -(3 + 2θ + α) g + 4α m2`, `g(0) = 0`,
/// where `m2 = E[(1 - Ȳ)²]`. Returns `(f(t), g(t))`.
pub fn bounding_ode<T: Real>(alpha: T, theta: T, n: usize, t: T, m2: T) -> (T, T) {
    let one = T::one();
    let k = T::lit(3.0) + T::lit(2.0) * theta + alpha;
    let c = T::lit(4.0) * alpha * m2;
    let ek = (-k * t).exp();
    let e1 = (-t).exp();
    let g = c / k * (one - ek);
    let inv_n = one / T::from_count(n);
    let f = inv_n * e1 + one - e1 + T::lit(2.0) * alpha * c / k * ((one - e1) - (e1 - ek) / (k - one));
    (f, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPoint<T> {
    pub t: T,
    pub phi1: T,
    pub phi2: T,
    pub fit_total: T,
}

/// Integrates for `duration`, recording observables every `every` steps
/// (and at the start and end).
pub fn record_path<T: Real, R: Rng + ?Sized>(
    integrator: &mut EmIntegrator<T>,
    state: &mut SimplexState<T>,
    duration: T,
    every: usize,
    rng: &mut R,
) -> Vec<PathPoint<T>> {
    let dt = integrator.config().dt;
    let (steps, rest) = split_duration(duration, dt);
    let every = every.max(1);
    let point = |s: &SimplexState<T>, t: T| {
        let (phi1, phi2, _) = s.observables();
        PathPoint { t, phi1, phi2, fit_total: s.fit_total() }
    };
    let mut out = vec![point(state, T::zero())];
    for k in 1..=steps {
        integrator.step(state, rng);
        if k % every == 0 || (k == steps && rest == T::zero()) {
            out.push(point(state, dt * T::from_count(k)));
        }
    }
    if rest > T::zero() {
        integrator.step_by(state, rest, rng);
        out.push(point(state, duration));
    }
    out
}

/// First recorded time with `φ1 ≥ 1 - tol`, or `+∞`.
pub fn detect_fixation<T: Real>(path: &[PathPoint<T>], tol: T) -> T {
    path.iter().find(|p| p.phi1 >= T::one() - tol).map_or(T::infinity(), |p| p.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;
    use crate::stats::{mean_and_stderr, EmpiricalCdf};

    fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let raw: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn scalar_drift_is_recovered_for_one_family() {
        let (a, t0, t1) = (1.7f64, 0.4, 0.9);
        for x in [0.0, 0.2, 0.5, 0.93, 1.0] {
            let b = drift(&[x, 1.0 - x], a, t0, t1);
            let expected = a * x * (1.0 - x) + t0 * (1.0 - x) - t1 * x;
            assert!((b[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn drift_vanishes_without_selection_or_mutation_and_sums_to_zero() {
        let mut rng = replicate_rng(1, 0);
        for _ in 0..50 {
            let x = random_simplex(4, &mut rng);
            assert!(drift(&x, 0.0, 0.0, 0.0).iter().all(|&v| v == 0.0));
            let s: f64 = drift(&x, 2.0, 0.3, 0.7).iter().sum();
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_properties() {
        let vertex = vec![0.0, 1.0, 0.0, 0.0];
        assert!(covariance(&vertex).iter().all(|&v| v == 0.0));
        let mut rng = replicate_rng(2, 0);
        let x = random_simplex(3, &mut rng);
        let a = covariance(&x);
        for i in 0..5 {
            assert!(a[(i, i)] >= 0.0);
            assert!((a[(i, i)] - x[i] * (1.0 - x[i])).abs() < 1e-15);
        }
        let full = covariance_full(&x);
        for i in 0..6 {
            assert!(full.row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn factor_noise_has_the_right_covariance() {
        let mut rng = replicate_rng(3, 0);
        let x = random_simplex(2, &mut rng);
        let m = 200_000;
        let mut acc = DMatrix::<f64>::zeros(4, 4);
        let mut w = vec![0.0; 4];
        for _ in 0..m {
            factor_noise(&x, &mut w, &mut rng);
            assert!(w.iter().sum::<f64>().abs() < 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    acc[(i, j)] += w[i] * w[j];
                }
            }
        }
        let target = covariance_full(&x);
        let err = (acc / m as f64 - target).abs().max();
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn vertex_is_fixed_by_a_step() {
        for noise in [NoiseScheme::Factor, NoiseScheme::Eigen] {
            let mut cfg = SdeConfig::<f64>::new(2, 0.0, 0.0, 0.0);
            cfg.noise = noise;
            let mut em = EmIntegrator::new(cfg).unwrap();
            let mut s = SimplexState::<f64>::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
            let mut rng = replicate_rng(4, 0);
            em.step(&mut s, &mut rng);
            assert_eq!(s.coords(), &[0.0, 0.0, 1.0, 0.0]);
            assert_eq!(em.fallbacks(), 0);
        }
    }

    #[test]
    fn steps_stay_on_the_simplex() {
        for noise in [NoiseScheme::Factor, NoiseScheme::Eigen] {
            let mut cfg = SdeConfig::<f64>::new(3, 4.0, 0.5, 0.5);
            cfg.noise = noise;
            cfg.dt = 0.01;
            let mut em = EmIntegrator::new(cfg).unwrap();
            let mut rng = replicate_rng(5, 0);
            let mut s = SimplexState::<f64>::uniform_families(3, 0.3).unwrap();
            for _ in 0..2000 {
                em.step(&mut s, &mut rng);
                assert!(s.coords().iter().all(|&v| v >= 0.0));
                assert!((s.coords().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_family_increment_variance() {
        // Oracle: Var[x' - x | x] = x(1 - x) dt for the neutral scalar case.
        let mut cfg = SdeConfig::<f64>::new(1, 0.0, 0.0, 0.0);
        cfg.dt = 1e-4;
        let mut em = EmIntegrator::new(cfg).unwrap();
        let mut rng = replicate_rng(6, 0);
        let x0 = 0.3;
        let incs: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut s = SimplexState::<f64>::new(vec![x0, 1.0 - x0]).unwrap();
                em.step(&mut s, &mut rng);
                s.coords()[0] - x0
            })
            .collect();
        let (mean, _) = mean_and_stderr(&incs);
        let var = incs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / incs.len() as f64;
        let target = x0 * (1.0 - x0) * 1e-4;
        assert!((var / target - 1.0).abs() < 0.02, "{var} vs {target}");
    }

    #[test]
    fn eigen_and_factor_schemes_agree_in_law() {
        let run = |noise, seed| {
            let mut cfg = SdeConfig::<f64>::new(2, 2.0, 0.5, 0.5);
            cfg.noise = noise;
            cfg.dt = 5e-3;
            run_replicates(2000, seed, move |_, rng| {
                let mut em = EmIntegrator::new(cfg.clone()).unwrap();
                let mut s = SimplexState::<f64>::uniform_families(2, 0.5).unwrap();
                em.run(&mut s, 1.0, rng);
                s.observables().0
            })
        };
        let a = Estimate::from_samples(&run(NoiseScheme::Factor, 7));
        let b = Estimate::from_samples(&run(NoiseScheme::Eigen, 8));
        assert!((a.mean - b.mean).abs() < 4.0 * (a.stderr.hypot(b.stderr)), "{a:?} {b:?}");
    }

    #[test]
    fn scalar_wf_boundaries_and_mean() {
        let mut rng = replicate_rng(9, 0);
        assert_eq!(simulate_scalar_wf(0.0, 3.0, 0.0, 1.0, 2.0, 1e-3, &mut rng).unwrap(), 0.0);
        assert_eq!(simulate_scalar_wf(1.0, 3.0, 1.0, 0.0, 2.0, 1e-3, &mut rng).unwrap(), 1.0);
        assert!(simulate_scalar_wf(1.5, 0.0, 0.0, 0.0, 1.0, 1e-3, &mut rng).is_err());
        // dE[Y]/dt = θ(1 - 2E[Y]) gives E[Y_t] = 1/2 + (y0 - 1/2) e^{-2θt}.
        let (theta, t, y0) = (0.8f64, 1.5, 0.1);
        let ys = run_replicates(4000, 10, |_, rng| simulate_scalar_wf(y0, 0.0, theta, theta, t, 1e-3, rng).unwrap());
        let (mean, se) = mean_and_stderr(&ys);
        let expected = 0.5 + (y0 - 0.5) * (-2.0 * theta * t).exp();
        assert!((mean - expected).abs() < 4.0 * se + 2e-3, "{mean} vs {expected}");
    }

    #[test]
    fn observables_at_special_points() {
        let s = SimplexState::<f64>::uniform_families(5, 0.37).unwrap();
        let (p1, p2, _) = s.observables();
        assert!((p1 - 0.2).abs() < 1e-15);
        assert!(p2.abs() < 1e-15);
        let single = SimplexState::<f64>::new(vec![0.4, 0.0, 0.6, 0.0]).unwrap();
        assert_eq!(single.observables().0, 1.0);
        let fit = SimplexState::<f64>::uniform_families(4, 1.0).unwrap();
        assert!(fit.observables().1.abs() < 1e-15);
    }

    #[test]
    fn bounding_ode_matches_rk4() {
        let (alpha, theta, n, m2) = (3.0, 0.5, 8, 0.12);
        let k = 3.0 + 2.0 * theta + alpha;
        let rhs = |f: f64, g: f64| (1.0 - f + 2.0 * alpha * g, -k * g + 4.0 * alpha * m2);
        let (mut f, mut g) = (1.0 / n as f64, 0.0);
        let h = 1e-4;
        for step in 1..=30_000 {
            let (a1, b1) = rhs(f, g);
            let (a2, b2) = rhs(f + 0.5 * h * a1, g + 0.5 * h * b1);
            let (a3, b3) = rhs(f + 0.5 * h * a2, g + 0.5 * h * b2);
            let (a4, b4) = rhs(f + h * a3, g + h * b3);
            f += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            g += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            if step % 5000 == 0 {
                let (fc, gc) = bounding_ode(alpha, theta, n, step as f64 * h, m2);
                assert!((fc - f).abs() < 1e-10 && (gc - g).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bounding_ode_special_cases() {
        for t in [0.0, 0.5, 2.0] {
            let (f, g) = bounding_ode(0.0, 0.5, 10, t, 0.3);
            assert!((f - (0.1 * (-t as f64).exp() + 1.0 - (-t as f64).exp())).abs() < 1e-15);
            assert_eq!(g, 0.0);
        }
        let (f, g) = bounding_ode(4.0f64, 0.5, 7, 0.0, 0.3);
        assert!((f - 1.0 / 7.0).abs() < 1e-15 && g == 0.0);
    }

    #[test]
    fn bounding_ode_large_alpha_asymptote() {
        // With m2 = (θ² + θ/2)/α² the limit is (1 - e^{-h})(1 + 4(θ + 2θ²)/α)
        // up to O(1/α²).
        let (theta, h) = (0.5, 1.0);
        for alpha in [20.0, 40.0, 80.0, 160.0, 1000.0] {
            let m2 = (theta * theta + theta / 2.0) / (alpha * alpha);
            let (f, _) = bounding_ode(alpha, theta, usize::MAX, h, m2);
            let target = (1.0 - (-h as f64).exp()) * (1.0 + 4.0 * (theta + 2.0 * theta * theta) / alpha);
            let scaled = (f - target).abs() * alpha * alpha;
            assert!(scaled < 15.0, "alpha={alpha}: {scaled}");
        }
    }

    #[test]
    fn key_estimator_rejects_bad_window() {
        let cfg = SdeConfig::<f64>::new(4, 0.0, 0.5, 0.5);
        assert!(thm_key_estimator(&cfg, 1.0, 1.0, FrequencyStart::Scalar { y0: 0.5 }).is_err());
        assert!(thm_key_estimator(&cfg, 1.0, 0.0, FrequencyStart::Scalar { y0: 0.5 }).is_err());
    }

    #[test]
    fn key_estimator_small_h_and_neutral_law() {
        let mut cfg = SdeConfig::<f64>::new(8, 0.0, 0.5, 0.5);
        cfg.paths = 50;
        let est = thm_key_estimator(&cfg, 2.0, 1e-3, FrequencyStart::Scalar { y0: 0.5 }).unwrap();
        assert!((est.phi1.mean - 0.125).abs() < 2e-3);
        cfg.paths = 1000;
        cfg.seed = 3;
        let h: f64 = 1.0;
        let est = thm_key_estimator(&cfg, 3.0, h, FrequencyStart::Scalar { y0: 0.5 }).unwrap();
        let exact = 0.125 * (-h).exp() + 1.0 - (-h).exp();
        assert!((est.phi1.mean - exact).abs() < 3.0 * est.phi1.stderr + 0.01, "{:?} vs {exact}", est.phi1);
        assert_eq!(est.fallbacks, 0);
    }

    #[test]
    fn halving_dt_changes_little() {
        let mut est = Vec::new();
        for (k, dt) in [0.004, 0.002, 0.001].into_iter().enumerate() {
            let mut cfg = SdeConfig::<f64>::new(4, 1.0, 0.5, 0.5);
            cfg.dt = dt;
            cfg.paths = 4000;
            cfg.seed = 50 + k as u64;
            est.push(thm_key_estimator(&cfg, 2.0, 0.8, FrequencyStart::Scalar { y0: 0.5 }).unwrap().phi1);
        }
        for w in est.windows(2) {
            let gap = (w[0].mean - w[1].mean).abs();
            assert!(gap < 3.0 * w[0].stderr.hypot(w[1].stderr) + 0.005, "{est:?}");
        }
    }

    #[test]
    fn family_projection_removes_mutation_bias() {
        // Neutral family sizes ignore mutation; the coordinate clamp does not.
        let h: f64 = 1.0;
        let exact = 0.125 * (-h).exp() + 1.0 - (-h).exp();
        let mut cfg = SdeConfig::<f64>::new(8, 0.0, 0.5, 0.5);
        cfg.dt = 1e-2;
        cfg.paths = 4000;
        cfg.seed = 60;
        let family = thm_key_estimator(&cfg, 2.0, h, FrequencyStart::Scalar { y0: 0.5 }).unwrap().phi1;
        cfg.projection = Projection::Coordinate;
        let coordinate = thm_key_estimator(&cfg, 2.0, h, FrequencyStart::Scalar { y0: 0.5 }).unwrap().phi1;
        assert!((family.mean - exact).abs() < 3.0 * family.stderr + 0.01, "{family:?}");
        assert!(exact - coordinate.mean > 0.03, "{coordinate:?}");
    }

    #[test]
    fn phi2_mean_is_nonnegative_under_selection() {
        let mut cfg = SdeConfig::<f64>::new(8, 3.0, 0.5, 0.5);
        cfg.paths = 800;
        cfg.seed = 12;
        for h in [0.25, 0.5, 1.0] {
            let est = thm_key_estimator(&cfg, 2.0, h, FrequencyStart::Scalar { y0: 0.5 }).unwrap();
            assert!(est.phi2.mean >= -3.0 * est.phi2.stderr, "h={h}: {:?}", est.phi2);
        }
    }

    #[test]
    fn fit_marginal_matches_scalar_diffusion() {
        let mut cfg = SdeConfig::<f64>::new(4, 2.0, 0.5, 0.5);
        cfg.dt = 2e-3;
        let m = 3000;
        for (k, t) in [0.3, 1.0, 2.0].into_iter().enumerate() {
            let full = run_replicates(m, 20 + k as u64, |_, rng| {
                let mut em = EmIntegrator::new(cfg.clone()).unwrap();
                let mut s = SimplexState::<f64>::uniform_families(4, 0.4).unwrap();
                em.run(&mut s, t, rng);
                s.fit_total()
            });
            let scalar = run_replicates(m, 30 + k as u64, |_, rng| {
                simulate_scalar_wf(0.4, 2.0, 0.5, 0.5, t, cfg.dt, rng).unwrap()
            });
            let a = EmpiricalCdf::new(full).unwrap();
            let b = EmpiricalCdf::new(scalar).unwrap();
            let ks = crate::stats::merged_grid(&a, &b)
                .into_iter()
                .map(|h| (a.query(h) - b.query(h)).abs())
                .fold(0.0f64, f64::max);
            assert!(ks <= 0.05, "t={t}: KS {ks}");
        }
    }

    #[test]
    fn fixation_detection_and_phi2_afterwards() {
        let mut cfg = SdeConfig::<f64>::new(3, 2.0, 0.5, 0.5);
        cfg.dt = 1e-3;
        let mut rng = replicate_rng(40, 0);
        let mut em = EmIntegrator::new(cfg.clone()).unwrap();
        let mut fixed = SimplexState::<f64>::new(vec![0.3, 0.0, 0.0, 0.7, 0.0, 0.0]).unwrap();
        let path = record_path(&mut em, &mut fixed, 0.5, 10, &mut rng);
        assert_eq!(detect_fixation(&path, DEFAULT_FIXATION_TOL), 0.0);
        let mut s = SimplexState::<f64>::uniform_families(3, 0.5).unwrap();
        let path = record_path(&mut em, &mut s, 20.0, 1, &mut rng);
        let ft = detect_fixation(&path, DEFAULT_FIXATION_TOL);
        assert!(ft.is_finite());
        for p in path.iter().filter(|p| p.t >= ft) {
            assert!(p.phi2.abs() <= 1e-8, "{p:?}");
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let mut cfg = SdeConfig::<f32>::new(4, 1.0, 0.5, 0.5);
        cfg.paths = 20;
        let est = thm_key_estimator(&cfg, 2.0, 0.5, FrequencyStart::Scalar { y0: 0.5 }).unwrap();
        assert!(est.phi1.mean > 0.25 && est.phi1.mean <= 1.0);
    }
}
