//! Closed-form laws: the neutral distance law, the small-selection
//! expansion, the stationary frequency law and its moments, and the
//! large-selection upper curve.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid_argument, invalid_parameter, Error, Result};
use crate::quadrature::{integrate, integrate_beta_weighted};
use crate::scalar::Real;

/// `P(R_t ≤ h)` without selection: `1 - e^{-h}` below the horizon, 1 above.
pub fn neutral_cdf<T: Real>(h: T, t: T) -> T {
    if h >= t {
        T::one()
    } else {
        T::one() - (-h).exp()
    }
}

/// Second-order coefficient of the distance CDF in the selection rate:
/// `τ(h) = -e^{-8h}/735 + h e^{-h}/42 + e^{-3h}/60 - 3 e^{-h}/196`.
pub fn tau<T: Real>(h: T) -> T {
    let e1 = (-h).exp();
    -T::lit(1.0 / 735.0) * (-T::lit(8.0) * h).exp()
        + T::lit(1.0 / 42.0) * h * e1
        + T::lit(1.0 / 60.0) * (-T::lit(3.0) * h).exp()
        - T::lit(3.0 / 196.0) * e1
}

/// `τ'(h)`.
pub fn tau_derivative<T: Real>(h: T) -> T {
    let e1 = (-h).exp();
    T::lit(8.0 / 735.0) * (-T::lit(8.0) * h).exp() - T::lit(1.0 / 42.0) * h * e1 + T::lit(1.0 / 42.0) * e1
        - T::lit(1.0 / 20.0) * (-T::lit(3.0) * h).exp()
        + T::lit(3.0 / 196.0) * e1
}

/// `τ(0)` in exact rational arithmetic.
pub fn tau_at_zero_exact() -> BigRational {
    let r = |p: i64, q: i64| BigRational::new(BigInt::from(p), BigInt::from(q));
    -r(1, 735) + r(1, 60) - r(3, 196)
}

/// Selection rates above this make the second-order expansion advisory.
pub const SMALL_ALPHA_LIMIT: f64 = 0.5;

/// A value from an asymptotic expansion together with whether the
/// parameters lie in the range where it is expected to be accurate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expansion<T> {
    pub value: T,
    pub within_validity: bool,
}

/// `1 - e^{-h} + α² τ(h)`, stationary case with `θ0 = θ1 = 1/2`.
pub fn small_alpha_cdf<T: Real>(h: T, alpha: T) -> Expansion<T> {
    Expansion {
        value: T::one() - (-h).exp() + alpha * alpha * tau(h),
        within_validity: alpha.as_f64() <= SMALL_ALPHA_LIMIT,
    }
}

/// `e^{-h} + α² τ'(h)`.
pub fn small_alpha_density<T: Real>(h: T, alpha: T) -> Expansion<T> {
    Expansion {
        value: (-h).exp() + alpha * alpha * tau_derivative(h),
        within_validity: alpha.as_f64() <= SMALL_ALPHA_LIMIT,
    }
}

/// `E[e^{-2λR}] ≈ 1/(1+2λ) + α² λ / (3 (4+λ)(3+2λ)(1+2λ)²)`.
pub fn laplace_expansion<T: Real>(lambda: T, alpha: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let a = one + two * lambda;
    one / a + alpha * alpha * lambda / (T::lit(3.0) * (T::lit(4.0) + lambda) * (T::lit(3.0) + two * lambda) * a * a)
}

/// `(1 - e^{-h}) (1 + 4(θ + 2θ²)/α)`, capped at 1.
pub fn upper_bound_curve<T: Real>(h: T, alpha: T, theta: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(invalid_parameter("the upper curve needs alpha > 0"));
    }
    let c = T::lit(4.0) * (theta + T::lit(2.0) * theta * theta) / alpha;
    Ok(((T::one() - (-h).exp()) * (T::one() + c)).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSpec<T> {
    pub alpha: T,
    pub theta0: T,
    pub theta1: T,
    pub grid_size: usize,
}

pub const DEFAULT_GRID_SIZE: usize = 20_001;
const QUAD_TOL: f64 = 1e-13;

impl<T: Real> EquilibriumSpec<T> {
    pub fn new(alpha: T, theta0: T, theta1: T) -> Result<Self> {
        let s = Self { alpha, theta0, theta1, grid_size: DEFAULT_GRID_SIZE };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > T::zero() && self.theta1 > T::zero()) {
            return Err(Error::Unsupported(format!(
                "stationary law needs positive mutation rates, got ({}, {})",
                self.theta0, self.theta1
            )));
        }
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return Err(invalid_parameter(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.grid_size < 2 {
            return Err(invalid_parameter("grid needs at least two points"));
        }
        Ok(())
    }

    fn exponents(&self) -> (f64, f64, f64) {
        (2.0 * self.theta0.as_f64(), 2.0 * self.theta1.as_f64(), self.alpha.as_f64())
    }

    /// `∫_a^b x^{2θ0-1} (1-x)^{2θ1-1} e^{2α(x-1)} g(x) dx`; the factor
    /// `e^{-2α}` keeps large selection rates from overflowing.
    fn kernel_integral<G: Fn(f64) -> f64>(&self, g: G, a: f64, b: f64) -> f64 {
        let (p, q, alpha) = self.exponents();
        integrate_beta_weighted(|x| (2.0 * alpha * (x - 1.0)).exp() * g(x), p, q, a, b, QUAD_TOL).value
    }

    fn normalizer(&self) -> f64 {
        self.kernel_integral(|_| 1.0, 0.0, 1.0)
    }
}

/// Stationary density `ρ(x) ∝ x^{2θ0-1} (1-x)^{2θ1-1} e^{2αx}` of the
/// fit frequency.
pub fn equilibrium_density<T: Real>(x: T, spec: &EquilibriumSpec<T>) -> Result<T> {
    spec.validate()?;
    let xf = x.as_f64();
    if !(xf > 0.0 && xf < 1.0) {
        return Err(invalid_argument(format!("density evaluated at {x}, outside (0, 1)")));
    }
    let (p, q, alpha) = spec.exponents();
    let kernel = xf.powf(p - 1.0) * (1.0 - xf).powf(q - 1.0) * (2.0 * alpha * (xf - 1.0)).exp();
    Ok(T::lit(kernel / spec.normalizer()))
}

/// Inverse-CDF sampler built from the stationary CDF tabulated on a uniform
/// grid, with linear interpolation between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSampler<T> {
    spec: EquilibriumSpec<T>,
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl<T: Real> EquilibriumSampler<T> {
    pub fn new(spec: EquilibriumSpec<T>) -> Result<Self> {
        spec.validate()?;
        let m = spec.grid_size;
        let grid: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in grid.windows(2) {
            acc += spec.kernel_integral(|_| 1.0, w[0], w[1]);
            cdf.push(acc);
        }
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Self { spec, grid, cdf })
    }

    pub fn spec(&self) -> &EquilibriumSpec<T> {
        &self.spec
    }

    /// Tabulated CDF at `x` (linear between grid points).
    pub fn cdf(&self, x: T) -> T {
        let x = x.as_f64().clamp(0.0, 1.0);
        let k = self.grid.partition_point(|&g| g <= x).clamp(1, self.grid.len() - 1);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        T::lit(c0 + (c1 - c0) * (x - x0) / (x1 - x0))
    }

    /// Inverse of the tabulated CDF at `u ∈ [0, 1]`.
    pub fn quantile(&self, u: T) -> T {
        let u = u.as_f64().clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        T::lit(x0 + frac * (x1 - x0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.quantile(T::lit(rng.random::<f64>()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumMoments<T> {
    /// `E[1 - Ȳ]`.
    pub m1: T,
    /// `E[(1 - Ȳ)²]`.
    pub m2: T,
    /// `α m1`, tends to `θ` as `α → ∞` when `θ0 = θ1 = θ`.
    pub scaled_m1: T,
    /// `α² m2`, tends to `θ² + θ/2`.
    pub scaled_m2: T,
    pub closed_form: bool,
}

/// Closed forms for `θ0 = θ1 = 1/2`:
/// `m1 = (1/α - 2/(e^{2α} - 1)) / 2` and
/// `m2 = (1/α² - 2(α+1)/(α(e^{2α} - 1))) / 2`.
pub fn half_theta_moments<T: Real>(alpha: T) -> Result<(T, T)> {
    let a = alpha.as_f64();
    if !(a > 0.0) {
        return Err(invalid_parameter("closed-form moments need alpha > 0"));
    }
    let em1 = (2.0 * a).exp_m1();
    let m1 = 0.5 * (1.0 / a - 2.0 / em1);
    let m2 = 0.5 * (1.0 / (a * a) - 2.0 * (a + 1.0) / (a * em1));
    Ok((T::lit(m1), T::lit(m2)))
}

/// Below this the closed forms lose digits to cancellation.
const CLOSED_FORM_MIN_ALPHA: f64 = 1e-2;

/// `(E[1-Ȳ], E[(1-Ȳ)²])` by quadrature against the stationary density.
pub fn quadrature_moments<T: Real>(spec: &EquilibriumSpec<T>) -> Result<(T, T)> {
    spec.validate()?;
    let z = spec.normalizer();
    let m1 = spec.kernel_integral(|x| 1.0 - x, 0.0, 1.0) / z;
    let m2 = spec.kernel_integral(|x| (1.0 - x) * (1.0 - x), 0.0, 1.0) / z;
    Ok((T::lit(m1), T::lit(m2)))
}

pub fn equilibrium_moments<T: Real>(alpha: T, theta0: T, theta1: T) -> Result<EquilibriumMoments<T>> {
    let spec = EquilibriumSpec::new(alpha, theta0, theta1)?;
    let half = T::lit(0.5);
    let closed = theta0 == half && theta1 == half && alpha.as_f64() >= CLOSED_FORM_MIN_ALPHA;
    let (m1, m2) = if closed { half_theta_moments(alpha)? } else { quadrature_moments(&spec)? };
    Ok(EquilibriumMoments { m1, m2, scaled_m1: alpha * m1, scaled_m2: alpha * alpha * m2, closed_form: closed })
}

/// `∫_0^∞ e^{-2λh} g(h) dh` for the rapidly decaying integrands used here.
pub fn laplace_quadrature<G: Fn(f64) -> f64>(g: G, lambda: f64) -> f64 {
    // The integrands decay at least like e^{-h}; beyond 80 the tail is
    // below 1e-34.
    integrate(|h| (-2.0 * lambda * h).exp() * g(h), 0.0, 80.0, 1e-15, 0.0).value
}
