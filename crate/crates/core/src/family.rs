//! Family decomposition of the Moran population.
//!
//! Individuals alive at some reference time each found a family; afterwards
//! we follow, per family, how many descendants carry the fit and the unfit
//! type. The sum of squared family sizes after a duration `h` has the same
//! expectation as the probability that two individuals sampled (with
//! replacement) at the end are within distance `h`.
//!
//! The chain is driven by the Moran events themselves, so masses are exact
//! integer counts over `N` and every coordinate jump has the rate it has in
//! the particle system: a transfer of one unit from coordinate `a` to `b`
//! happens at rate `c_a c_b / 2` by resampling plus `(alpha/N) c_a c_b` by
//! selection when `a` is a fit coordinate.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{invalid_argument, Result};
use crate::moran::{init_population, ordered_pair, ModelParams, Tracking};
use crate::rng::run_replicates;
use crate::scalar::Real;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyState<T> {
    t: T,
    fit: Vec<u32>,
    unfit: Vec<u32>,
    /// Family label of each particle.
    family: Vec<u32>,
    /// Type of each particle (1 = fit).
    kind: Vec<u8>,
    sum_sq: u64,
    nonzero: usize,
}

impl<T: Real> FamilyState<T> {
    /// Every individual founds its own family: `Y_i = u_i / N`,
    /// `Z_i = (1 - u_i) / N`.
    pub fn from_population(types: &[u8]) -> Result<Self> {
        if types.iter().any(|&u| u > 1) {
            return Err(invalid_argument("types must be 0 or 1"));
        }
        let fit = types.iter().map(|&u| u as u32).collect();
        let unfit = types.iter().map(|&u| 1 - u as u32).collect();
        Self::from_counts(fit, unfit)
    }

    /// Families with the given fit and unfit descendant counts; `N` is the
    /// total count.
    pub fn from_counts(fit: Vec<u32>, unfit: Vec<u32>) -> Result<Self> {
        if fit.len() != unfit.len() {
            return Err(crate::Error::DimensionMismatch { expected: fit.len(), actual: unfit.len() });
        }
        let total: u64 = fit.iter().chain(&unfit).map(|&c| c as u64).sum();
        if fit.is_empty() || total < 2 {
            return Err(invalid_argument("need at least one family and two particles"));
        }
        let mut family = Vec::with_capacity(total as usize);
        let mut kind = Vec::with_capacity(total as usize);
        for (i, (&y, &z)) in fit.iter().zip(&unfit).enumerate() {
            family.extend(std::iter::repeat_n(i as u32, (y + z) as usize));
            kind.extend(std::iter::repeat_n(1u8, y as usize));
            kind.extend(std::iter::repeat_n(0u8, z as usize));
        }
        let sum_sq = fit.iter().zip(&unfit).map(|(&y, &z)| ((y + z) as u64).pow(2)).sum();
        let nonzero = fit.iter().zip(&unfit).filter(|(&y, &z)| y + z > 0).count();
        Ok(Self { t: T::zero(), fit, unfit, family, kind, sum_sq, nonzero })
    }

    pub fn time(&self) -> T {
        self.t
    }

    /// Underlying particle count `N`.
    pub fn particles(&self) -> usize {
        self.kind.len()
    }

    /// Number of founding families `n`.
    pub fn families(&self) -> usize {
        self.fit.len()
    }

    pub fn fit_counts(&self) -> &[u32] {
        &self.fit
    }

    pub fn unfit_counts(&self) -> &[u32] {
        &self.unfit
    }

    /// Fit masses `Y_i`.
    pub fn fit_masses(&self) -> Vec<T> {
        let n = T::from_count(self.particles());
        self.fit.iter().map(|&c| T::from_count(c as usize) / n).collect()
    }

    /// Unfit masses `Z_i`.
    pub fn unfit_masses(&self) -> Vec<T> {
        let n = T::from_count(self.particles());
        self.unfit.iter().map(|&c| T::from_count(c as usize) / n).collect()
    }

    /// Number of families that still have descendants.
    pub fn nonzero_families(&self) -> usize {
        self.nonzero
    }

    /// `Σ_i (Y_i + Z_i)²`.
    pub fn statistic(&self) -> T {
        let n = self.particles() as f64;
        T::lit(self.sum_sq as f64 / (n * n))
    }

    /// True once a single family holds the whole population.
    pub fn is_fixed(&self) -> bool {
        self.nonzero == 1
    }

    /// Draws and applies one event; returns whether it changed the state.
    pub fn step<R: Rng + ?Sized>(&mut self, params: &ModelParams<T>, rng: &mut R) -> bool {
        let wait: f64 = Exp1.sample(rng);
        self.t = self.t + T::lit(wait / params.total_rate());
        self.fire(params, rng)
    }

    /// Advances by `duration`; events past the end are discarded.
    pub fn run_for<R: Rng + ?Sized>(&mut self, params: &ModelParams<T>, duration: T, rng: &mut R) {
        self.run_observed(params, duration, rng, |_| {});
    }

    /// Like [`run_for`](Self::run_for), calling `observe` after every
    /// effective event.
    pub fn run_observed<R, F>(&mut self, params: &ModelParams<T>, duration: T, rng: &mut R, mut observe: F)
    where
        R: Rng + ?Sized,
        F: FnMut(&Self),
    {
        let end = self.t + duration;
        let rate = params.total_rate();
        if rate <= 0.0 {
            self.t = end;
            return;
        }
        loop {
            let wait: f64 = Exp1.sample(rng);
            let next = self.t + T::lit(wait / rate);
            if next > end {
                self.t = end;
                return;
            }
            self.t = next;
            if self.fire(params, rng) {
                observe(self);
            }
        }
    }

    fn fire<R: Rng + ?Sized>(&mut self, params: &ModelParams<T>, rng: &mut R) -> bool {
        assert_eq!(params.n, self.particles(), "parameters do not match particle count");
        let n = self.particles();
        let (res, sel, _) = params.channel_rates();
        let u = rng.random::<f64>() * params.total_rate();
        if u < res + sel {
            let slot = if u < res { u / res } else { (u - res) / sel } * (n * (n - 1)) as f64;
            let (source, target) = ordered_pair(slot, n);
            if u >= res && self.kind[source] == 0 {
                return false;
            }
            self.birth(source, target);
            true
        } else {
            let v = u - res - sel;
            let theta0 = params.theta0.as_f64();
            let theta1 = params.theta1.as_f64();
            let (from, i) = if v < n as f64 * theta0 {
                (0u8, ((v / theta0) as usize).min(n - 1))
            } else {
                (1u8, (((v - n as f64 * theta0) / theta1) as usize).min(n - 1))
            };
            if self.kind[i] != from {
                return false;
            }
            let f = self.family[i] as usize;
            self.kind[i] = 1 - from;
            if from == 0 {
                self.unfit[f] -= 1;
                self.fit[f] += 1;
            } else {
                self.fit[f] -= 1;
                self.unfit[f] += 1;
            }
            true
        }
    }

    fn birth(&mut self, source: usize, target: usize) {
        let (fs, ft) = (self.family[source] as usize, self.family[target] as usize);
        let (ks, kt) = (self.kind[source], self.kind[target]);
        if fs == ft && ks == kt {
            return;
        }
        if fs != ft {
            let (a, b) = (self.total(fs), self.total(ft));
            // (a + 1)² + (b - 1)² - a² - b² = 2(a - b + 1)
            self.sum_sq = self.sum_sq + 2 * a + 2 - 2 * b;
            if b == 1 {
                self.nonzero -= 1;
            }
        }
        if kt == 1 {
            self.fit[ft] -= 1;
        } else {
            self.unfit[ft] -= 1;
        }
        if ks == 1 {
            self.fit[fs] += 1;
        } else {
            self.unfit[fs] += 1;
        }
        self.family[target] = fs as u32;
        self.kind[target] = ks;
    }

    fn total(&self, f: usize) -> u64 {
        (self.fit[f] + self.unfit[f]) as u64
    }

    /// Exact generator of the count chain applied to `g`, by enumerating
    /// every coordinate jump with its rate. Coordinates are fit counts
    /// followed by unfit counts.
    pub fn apply_jump_generator<G>(&self, params: &ModelParams<T>, g: G) -> f64
    where
        G: Fn(&[u32], &[u32]) -> f64,
    {
        let nf = self.families();
        let n = self.particles() as f64;
        let alpha = params.alpha.as_f64();
        let (theta0, theta1) = (params.theta0.as_f64(), params.theta1.as_f64());
        let base = g(&self.fit, &self.unfit);
        let mut coords: Vec<u32> = self.fit.iter().chain(&self.unfit).copied().collect();
        let mut total = 0.0;
        let eval = |coords: &[u32]| g(&coords[..nf], &coords[nf..]) - base;
        for a in 0..2 * nf {
            for b in 0..2 * nf {
                if a == b || coords[a] == 0 || coords[b] == 0 {
                    continue;
                }
                let pairs = coords[a] as f64 * coords[b] as f64;
                let mut rate = pairs / 2.0;
                if a < nf {
                    rate += alpha / n * pairs;
                }
                coords[a] += 1;
                coords[b] -= 1;
                total += rate * eval(&coords);
                coords[a] -= 1;
                coords[b] += 1;
            }
        }
        for i in 0..nf {
            let (y, z) = (i, nf + i);
            if coords[z] > 0 {
                let rate = theta0 * coords[z] as f64;
                coords[z] -= 1;
                coords[y] += 1;
                total += rate * eval(&coords);
                coords[z] += 1;
                coords[y] -= 1;
            }
            if coords[y] > 0 {
                let rate = theta1 * coords[y] as f64;
                coords[y] -= 1;
                coords[z] += 1;
                total += rate * eval(&coords);
                coords[y] += 1;
                coords[z] -= 1;
            }
        }
        total
    }
}

/// One recorded point of a family trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilySnapshot<T> {
    pub t: T,
    pub statistic: T,
    pub nonzero_families: usize,
}

/// Runs for `duration`, recording the initial state and every change.
pub fn record_trajectory<T: Real, R: Rng + ?Sized>(
    state: &mut FamilyState<T>,
    params: &ModelParams<T>,
    duration: T,
    rng: &mut R,
) -> Vec<FamilySnapshot<T>> {
    let snap = |s: &FamilyState<T>| FamilySnapshot {
        t: s.time(),
        statistic: s.statistic(),
        nonzero_families: s.nonzero_families(),
    };
    let mut out = vec![snap(state)];
    state.run_observed(params, duration, rng, |s| out.push(snap(s)));
    out
}

/// First time at which one family holds everything, measured from the start
/// of the trajectory; `+∞` if that never happens within the recording.
pub fn fixation_time<T: Real>(trajectory: &[FamilySnapshot<T>]) -> T {
    let Some(start) = trajectory.first() else {
        return T::infinity();
    };
    trajectory.iter().find(|s| s.nonzero_families == 1).map_or(T::infinity(), |s| s.t - start.t)
}

/// Default horizon after which [`time_to_fixation`] gives up.
pub const DEFAULT_FIXATION_CUTOFF: f64 = 50.0;

/// Runs until one family holds everything and returns the elapsed time, or
/// `+∞` if `cutoff` is reached first.
pub fn time_to_fixation<T: Real, R: Rng + ?Sized>(
    state: &mut FamilyState<T>,
    params: &ModelParams<T>,
    cutoff: T,
    rng: &mut R,
) -> T {
    let start = state.time();
    let end = start + cutoff;
    while !state.is_fixed() {
        state.step(params, rng);
        if state.time() > end {
            return T::infinity();
        }
    }
    state.time() - start
}

/// Monte Carlo estimate of `P(R_{T+h} ≤ h)` through the family identity:
/// run the type process to `T`, found one family per individual, run the
/// family chain for `h` and average the sum of squared family sizes.
pub fn estimate_cdf_via_families<T: Real>(
    params: &ModelParams<T>,
    t: T,
    h: T,
    replicates: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    params.validate()?;
    if h < T::zero() || t < T::zero() {
        return Err(invalid_argument("times must be nonnegative"));
    }
    if replicates == 0 {
        return Err(invalid_argument("need at least one replicate"));
    }
    let values = run_replicates(replicates, seed, |_, rng| {
        let mut pop = init_population(params, rng, Tracking::TYPES_ONLY).expect("validated");
        pop.run_until(params, t, rng).expect("t >= 0");
        let mut fam = FamilyState::from_population(pop.types()).expect("binary types");
        fam.run_for(params, h, rng);
        fam.statistic()
    });
    Ok(Estimate::from_samples(&values))
}
