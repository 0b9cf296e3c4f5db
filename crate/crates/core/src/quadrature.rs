//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use serde::Serialize;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    /// False when the subdivision limit was hit before the tolerance.
    pub converged: bool,
}

const MAX_INTERVALS: usize = 4000;

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = r * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// `∫_a^b f` to within `max(abs_tol, rel_tol |I|)` (estimated).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, evaluations: 0, converged: true };
    }
    let (value, error) = kronrod(&f, a, b);
    let mut parts = vec![(a, b, value, error)];
    let mut evaluations = 15;
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || parts.len() >= MAX_INTERVALS {
            return Quadrature { value: total, error: err, evaluations, converged: parts.len() < MAX_INTERVALS };
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let left = kronrod(&f, lo, mid);
        let right = kronrod(&f, mid, hi);
        evaluations += 30;
        parts.push((lo, mid, left.0, left.1));
        parts.push((mid, hi, right.0, right.1));
    }
}

/// `∫_a^b x^{p-1} (1-x)^{q-1} g(x) dx` for `0 ≤ a < b ≤ 1` and smooth `g`.
///
/// Pieces touching an endpoint with an exponent below one are mapped with
/// `x = u^{1/p}` (resp. `1 - x = v^{1/q}`), which removes the power
/// singularity from the integrand.
pub fn integrate_beta_weighted<G: Fn(f64) -> f64>(g: G, p: f64, q: f64, a: f64, b: f64, tol: f64) -> Quadrature {
    let weight = |x: f64| x.powf(p - 1.0) * (1.0 - x).powf(q - 1.0);
    let mid = 0.5;
    let mut pieces: Vec<Quadrature> = Vec::new();
    let (lo_end, hi_start) = (a.max(0.0), b.min(1.0));
    // Left piece [a, min(b, 1/2)].
    if lo_end < mid {
        let hi = hi_start.min(mid);
        if lo_end == 0.0 && p < 1.0 {
            // x = u^{1/p}, dx = (1/p) u^{1/p - 1} du, x^{p-1} dx = (1/p) du.
            let h = |u: f64| {
                let x = u.powf(1.0 / p);
                (1.0 - x).powf(q - 1.0) * g(x) / p
            };
            pieces.push(integrate(h, 0.0, hi.powf(p), tol, 0.0));
        } else {
            pieces.push(integrate(|x| weight(x) * g(x), lo_end, hi, tol, 0.0));
        }
    }
    // Right piece [max(a, 1/2), b].
    if hi_start > mid {
        let lo = lo_end.max(mid);
        if hi_start == 1.0 && q < 1.0 {
            let h = |v: f64| {
                let x = 1.0 - v.powf(1.0 / q);
                x.powf(p - 1.0) * g(x) / q
            };
            pieces.push(integrate(h, 0.0, (1.0 - lo).powf(q), tol, 0.0));
        } else {
            pieces.push(integrate(|x| weight(x) * g(x), lo, hi_start, tol, 0.0));
        }
    }
    pieces.into_iter().fold(Quadrature { value: 0.0, error: 0.0, evaluations: 0, converged: true }, |acc, q| {
        Quadrature {
            value: acc.value + q.value,
            error: acc.error + q.error,
            evaluations: acc.evaluations + q.evaluations,
            converged: acc.converged && q.converged,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-14, 0.0);
        assert!((r.value - 10.0).abs() < 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn oscillatory_and_peaked() {
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13, 0.0);
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x: f64| (-200.0 * (x - 0.7).powi(2)).exp(), 0.0, 1.4, 1e-13, 0.0);
        let exact = (std::f64::consts::PI / 200.0).sqrt();
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn singular_endpoints() {
        // ∫ x^{-1/2} (1-x)^{-1/2} = π.
        let r = integrate_beta_weighted(|_| 1.0, 0.5, 0.5, 0.0, 1.0, 1e-13);
        assert!((r.value - std::f64::consts::PI).abs() < 1e-11, "{}", r.value);
        // ∫ x^{-0.8} = 5 on [0, 1].
        let r = integrate_beta_weighted(|_| 1.0, 0.2, 1.0, 0.0, 1.0, 1e-13);
        assert!((r.value - 5.0).abs() < 1e-10, "{}", r.value);
        // Partial range away from the singularity.
        let r = integrate_beta_weighted(|_| 1.0, 0.2, 1.0, 0.25, 0.75, 1e-13);
        let exact = 5.0 * (0.75f64.powf(0.2) - 0.25f64.powf(0.2));
        assert!((r.value - exact).abs() < 1e-11);
    }
}
