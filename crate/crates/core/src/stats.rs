//! Empirical distribution functions with Dvoretzky–Kiefer–Wolfowitz bands,
//! stochastic-dominance verdicts, Laplace functionals and crossing scans.

use serde::Serialize;

use crate::error::{invalid_argument, Result};
use crate::scalar::Real;

/// Step CDF of a finite sample. `query` is right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf<T> {
    samples: Vec<T>,
}

impl<T: Real> EmpiricalCdf<T> {
    /// Builds the CDF; rejects empty input and NaNs.
    pub fn new(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid_argument("empirical CDF needs at least one sample"));
        }
        if samples.iter().any(|s| s.is_nan()) {
            return Err(invalid_argument("empirical CDF samples contain NaN"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    /// Fraction of samples `<= h`.
    pub fn query(&self, h: T) -> T {
        let k = self.samples.partition_point(|&s| s <= h);
        T::from_count(k) / T::from_count(self.samples.len())
    }

    pub fn mean(&self) -> T {
        self.samples.iter().copied().sum::<T>() / T::from_count(self.len())
    }

    /// Standard error of the sample mean (zero for a single sample).
    pub fn stderr(&self) -> T {
        mean_and_stderr(&self.samples).1
    }

    /// Half-width of the uniform DKW band at confidence `1 - delta`.
    pub fn band(&self, delta: T) -> T {
        dkw_band(self.len(), delta)
    }

    /// `sup_h |F(h) - reference(h)|` evaluated on both sides of every jump.
    pub fn sup_distance<F>(&self, reference: F) -> T
    where
        F: Fn(T) -> T,
    {
        let m = T::from_count(self.len());
        let mut worst = T::zero();
        for (k, &s) in self.samples.iter().enumerate() {
            let r = reference(s);
            let below = T::from_count(k) / m;
            let above = T::from_count(k + 1) / m;
            worst = worst.max((r - below).abs()).max((above - r).abs());
        }
        worst
    }

    /// `sup_{h in [lo, hi]} |F(h) - reference(h)|`, with the supremum taken
    /// over jump points inside the window plus the window endpoints.
    pub fn sup_distance_on<F>(&self, lo: T, hi: T, reference: F) -> T
    where
        F: Fn(T) -> T,
    {
        let (above, below) = self.excess_on(lo, hi, reference);
        above.max(below)
    }

    /// One-sided deviations on `[lo, hi]` against a continuous reference:
    /// `(sup (F̂ - ref), sup (ref - F̂))`, with left limits at jumps.
    pub fn excess_on<F>(&self, lo: T, hi: T, reference: F) -> (T, T)
    where
        F: Fn(T) -> T,
    {
        let m = T::from_count(self.len());
        let (mut above, mut below) = (T::neg_infinity(), T::neg_infinity());
        let mut visit = |value: T, r: T| {
            above = above.max(value - r);
            below = below.max(r - value);
        };
        visit(self.query(lo), reference(lo));
        visit(self.query(hi), reference(hi));
        for &s in &self.samples {
            if s < lo || s > hi {
                continue;
            }
            let r = reference(s);
            // Left limit at a jump that lies strictly inside the window.
            if s > lo {
                let left = T::from_count(self.samples.partition_point(|&v| v < s)) / m;
                visit(left, r);
            }
            visit(self.query(s), r);
        }
        (above, below)
    }
}

/// DKW half-width `sqrt(ln(2/delta) / (2m))`.
pub fn dkw_band<T: Real>(m: usize, delta: T) -> T {
    assert!(m >= 1, "DKW band needs m >= 1");
    assert!(delta > T::zero() && delta < T::one(), "delta must lie in (0, 1)");
    ((T::lit(2.0) / delta).ln() / (T::lit(2.0) * T::from_count(m))).sqrt()
}

pub fn mean_and_stderr<T: Real>(values: &[T]) -> (T, T) {
    let m = values.len();
    if m == 0 {
        return (T::nan(), T::nan());
    }
    let mean = values.iter().copied().sum::<T>() / T::from_count(m);
    if m == 1 {
        return (mean, T::zero());
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_count(m - 1);
    (mean, (var / T::from_count(m)).sqrt())
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub stderr: T,
    pub count: usize,
}

impl<T: Real> Estimate<T> {
    pub fn from_samples(values: &[T]) -> Self {
        let (mean, stderr) = mean_and_stderr(values);
        Self { mean, stderr, count: values.len() }
    }

    /// Half-width of the two-sided normal confidence interval at level
    /// `confidence` (e.g. 0.99).
    pub fn half_width(&self, confidence: T) -> T {
        normal_quantile(T::lit(0.5) + confidence / T::lit(2.0)) * self.stderr
    }
}

/// Whether two estimates agree within the sum of their CI half-widths.
pub fn agree_within_ci<T: Real>(a: &Estimate<T>, b: &Estimate<T>, confidence: T) -> bool {
    (a.mean - b.mean).abs() <= a.half_width(confidence) + b.half_width(confidence)
}

/// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9).
pub fn normal_quantile<T: Real>(p: T) -> T {
    let p = p.as_f64();
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    T::lit(x)
}

/// Outcome of `dominance_check`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceVerdict<T> {
    pub pass: bool,
    /// `max_h (G(h) - F(h))` over the merged sample grid.
    pub max_violation: T,
    /// Location of the maximal violation.
    pub at: T,
    pub slack: T,
}

/// Tests `F >= G` pointwise (i.e. the law behind `F` is stochastically
/// smaller) up to `slack`. Both CDFs are step functions, so checking the
/// merged jump grid is exact.
pub fn dominance_check<T: Real>(f: &EmpiricalCdf<T>, g: &EmpiricalCdf<T>, slack: T) -> DominanceVerdict<T> {
    let mut max_violation = T::neg_infinity();
    let mut at = T::zero();
    for &h in merged_grid(f, g).iter() {
        let v = g.query(h) - f.query(h);
        if v > max_violation {
            max_violation = v;
            at = h;
        }
    }
    // Below the smallest sample both CDFs vanish.
    if max_violation < T::zero() {
        max_violation = T::zero();
    }
    DominanceVerdict { pass: max_violation <= slack, max_violation, at, slack }
}

/// Default slack: twice the sum of the two DKW half-widths at `delta`.
pub fn default_dominance_slack<T: Real>(m_f: usize, m_g: usize, delta: T) -> T {
    T::lit(2.0) * (dkw_band(m_f, delta) + dkw_band(m_g, delta))
}

/// Sample estimate of `E[exp(-2 lambda R)]` with its standard error.
pub fn laplace_estimate<T: Real>(f: &EmpiricalCdf<T>, lambda: T) -> Result<Estimate<T>> {
    if lambda < T::zero() {
        return Err(invalid_argument("lambda must be >= 0"));
    }
    let values: Vec<T> = f.samples().iter().map(|&s| (-T::lit(2.0) * lambda * s).exp()).collect();
    Ok(Estimate::from_samples(&values))
}

/// An interval of the merged grid on which `F - G` changes sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing<T> {
    pub from: T,
    pub to: T,
    /// Sign of `F - G` on the left end (+1 or -1).
    pub sign_before: i8,
}

/// Finds sign changes of `F - G`, counting only grid points where the gap
/// exceeds `band` (pass the combined DKW half-widths).
pub fn crossing_scan<T: Real>(f: &EmpiricalCdf<T>, g: &EmpiricalCdf<T>, band: T) -> Vec<Crossing<T>> {
    let mut out = Vec::new();
    let mut last: Option<(T, i8)> = None;
    for &h in merged_grid(f, g).iter() {
        let d = f.query(h) - g.query(h);
        if d.abs() <= band {
            continue;
        }
        let sign = if d > T::zero() { 1 } else { -1 };
        if let Some((h0, s0)) = last {
            if s0 != sign {
                out.push(Crossing { from: h0, to: h, sign_before: s0 });
            }
        }
        last = Some((h, sign));
    }
    out
}

pub fn merged_grid<T: Real>(f: &EmpiricalCdf<T>, g: &EmpiricalCdf<T>) -> Vec<T> {
    let (a, b) = (f.samples(), g.samples());
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    out
}

/// CDF-validity check used when reloading emitted tables: values within
/// `[0, 1]` and nondecreasing along increasing abscissae.
pub fn is_valid_cdf_table<T: Real>(points: &[(T, T)]) -> bool {
    points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1)
        && points.iter().all(|&(_, v)| v >= T::zero() && v <= T::one())
}
