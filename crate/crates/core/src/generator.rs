//! Exact symbolic action of the limiting generator on polynomial observables.
//!
//! Polynomials live over `2n + 3` variables: fit masses `y_0..y_{n-1}`,
//! unfit masses `z_0..z_{n-1}`, then `alpha`, `theta0`, `theta1`. The
//! generator acts on the `2n - 1` free coordinates; `z_{n-1}` is eliminated
//! through `z_{n-1} = 1 - Σ(other masses)` before differentiation.

use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polynomial::{rational, RationalPolynomial};

type P = RationalPolynomial;

/// Variable indices for `n` families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(crate::error::invalid_argument("at least one family is required"));
        }
        Ok(Self { n })
    }

    pub fn nvars(&self) -> usize {
        2 * self.n + 3
    }

    pub fn y(&self, i: usize) -> usize {
        i
    }

    pub fn z(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn alpha(&self) -> usize {
        2 * self.n
    }

    pub fn theta0(&self) -> usize {
        2 * self.n + 1
    }

    pub fn theta1(&self) -> usize {
        2 * self.n + 2
    }

    /// Index of the coordinate removed by the simplex constraint.
    pub fn eliminated(&self) -> usize {
        2 * self.n - 1
    }

    pub fn free(&self) -> std::ops::Range<usize> {
        0..2 * self.n - 1
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n).map(|i| format!("y{}", i + 1)).collect();
        names.extend((0..self.n).map(|i| format!("z{}", i + 1)));
        names.extend(["alpha", "theta0", "theta1"].map(String::from));
        names
    }

    pub fn var(&self, k: usize) -> P {
        P::var(self.nvars(), k)
    }

    pub fn int(&self, c: i64) -> P {
        P::from_int(self.nvars(), c)
    }

    /// `Ȳ = Σ y_i`.
    pub fn ybar(&self) -> P {
        P::sum_of(self.nvars(), (0..self.n).map(|i| self.y(i)))
    }

    /// `Z̄ = Σ z_i` (unreduced).
    pub fn zbar(&self) -> P {
        P::sum_of(self.nvars(), (0..self.n).map(|i| self.z(i)))
    }

    fn family(&self, i: usize) -> P {
        &self.var(self.y(i)) + &self.var(self.z(i))
    }

    fn sum_products(&self, a: impl Fn(usize) -> usize, b: impl Fn(usize) -> usize) -> P {
        (0..self.n).fold(P::zero(self.nvars()), |acc, i| acc + &self.var(a(i)) * &self.var(b(i)))
    }

    pub fn sum_y2(&self) -> P {
        self.sum_products(|i| self.y(i), |i| self.y(i))
    }

    pub fn sum_z2(&self) -> P {
        self.sum_products(|i| self.z(i), |i| self.z(i))
    }

    pub fn sum_yz(&self) -> P {
        self.sum_products(|i| self.y(i), |i| self.z(i))
    }

    /// `φ1 = Σ f_i²` with `f_i = y_i + z_i`.
    pub fn phi1(&self) -> P {
        (0..self.n).fold(P::zero(self.nvars()), |acc, i| acc + self.family(i).pow(2))
    }

    /// `φ2 = Σ f_i (y_i - f_i Ȳ)`.
    pub fn phi2(&self) -> P {
        let ybar = self.ybar();
        (0..self.n).fold(P::zero(self.nvars()), |acc, i| {
            let f = self.family(i);
            let d = &self.var(self.y(i)) - &(&f * &ybar);
            acc + &f * &d
        })
    }

    /// `φ3 = Σ (y_i - f_i Ȳ)² - 2 φ2 Ȳ`.
    pub fn phi3(&self) -> P {
        let ybar = self.ybar();
        let sq = (0..self.n).fold(P::zero(self.nvars()), |acc, i| {
            let d = &self.var(self.y(i)) - &(&self.family(i) * &ybar);
            acc + d.pow(2)
        });
        &sq - &(&self.phi2() * &ybar).scale(&rational(2, 1))
    }

    /// Replaces `z_{n-1}` by `1 - Σ(other masses)`.
    pub fn reduce(&self, p: &P) -> P {
        let others = P::sum_of(self.nvars(), self.free());
        p.substitute(self.eliminated(), &(&self.int(1) - &others))
    }
}

/// Which part of the generator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorPart {
    Resampling,
    Selection,
    Mutation,
    Full,
}

impl GeneratorPart {
    pub fn label(self) -> &'static str {
        match self {
            Self::Resampling => "L_res",
            Self::Selection => "L_sel",
            Self::Mutation => "L_mut",
            Self::Full => "L",
        }
    }
}

/// `½ Σ_{i,j} x_i (δ_ij - x_j) ∂_i ∂_j p` over the free coordinates, for
/// `p` already reduced.
fn resampling(layout: &Layout, p: &P) -> P {
    let free = layout.free();
    let half = rational(1, 2);
    let mut out = P::zero(layout.nvars());
    for (e, c) in p.terms() {
        for i in free.clone() {
            if e[i] == 0 {
                continue;
            }
            // x_i ∂_i² x^e = e_i (e_i - 1) x^{e - 1_i}
            if e[i] >= 2 {
                let mut f = e.clone();
                f[i] -= 1;
                let k = i64::from(e[i]) * (i64::from(e[i]) - 1);
                out.add_term(f, c.clone() * rational(k, 1) * half.clone());
            }
            // -x_i x_j ∂_i ∂_j x^e = -e_i (e_j - δ_ij) x^e
            for j in free.clone() {
                let ej = i64::from(e[j]) - i64::from(i == j);
                if ej <= 0 {
                    continue;
                }
                let k = i64::from(e[i]) * ej;
                out.add_term(e.clone(), -(c.clone() * rational(k, 1) * half.clone()));
            }
        }
    }
    out
}

/// Drift polynomials for the free coordinates.
fn drift(layout: &Layout, part: GeneratorPart) -> Vec<P> {
    let n = layout.n;
    let one = layout.int(1);
    let z_last = &one - &P::sum_of(layout.nvars(), layout.free());
    let z = |i: usize| if i == n - 1 { z_last.clone() } else { layout.var(layout.z(i)) };
    let y = |i: usize| layout.var(layout.y(i));
    let (alpha, theta0, theta1) =
        (layout.var(layout.alpha()), layout.var(layout.theta0()), layout.var(layout.theta1()));
    let ybar = layout.ybar();
    let zbar = &one - &ybar;
    let mut b = vec![P::zero(layout.nvars()); 2 * n - 1];
    for i in 0..n {
        let sel_y = &(&alpha * &zbar) * &y(i);
        let mut_y = &(&theta0 * &z(i)) - &(&theta1 * &y(i));
        let sel_z = -&(&(&alpha * &ybar) * &z(i));
        let mut_z = -&mut_y;
        let (by, bz) = match part {
            GeneratorPart::Selection => (sel_y, sel_z),
            GeneratorPart::Mutation => (mut_y, mut_z),
            GeneratorPart::Full => (sel_y + mut_y, sel_z + mut_z),
            GeneratorPart::Resampling => continue,
        };
        b[layout.y(i)] = by;
        if i < n - 1 {
            b[layout.z(i)] = bz;
        }
    }
    b
}

/// Applies a generator part to `p`. The result is a reduced polynomial
/// (free of `z_{n-1}`).
pub fn apply_generator(p: &P, part: GeneratorPart, n: usize) -> Result<P> {
    let layout = Layout::new(n)?;
    if p.nvars() != layout.nvars() {
        return Err(Error::DimensionMismatch { expected: layout.nvars(), actual: p.nvars() });
    }
    let p = layout.reduce(p);
    let mut out = match part {
        GeneratorPart::Resampling | GeneratorPart::Full => resampling(&layout, &p),
        _ => P::zero(layout.nvars()),
    };
    if part != GeneratorPart::Resampling {
        for (k, b) in drift(&layout, part).iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            let d = p.derivative(k);
            if !d.is_zero() {
                out = out + b * &d;
            }
        }
    }
    Ok(out)
}

/// Outcome of one symbolic identity.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub label: String,
    /// `computed - expected`, reduced; zero iff the identity holds.
    pub difference: P,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.difference.is_zero()
    }
}

fn check(layout: &Layout, label: String, computed: P, expected: &P) -> IdentityCheck {
    IdentityCheck { label, difference: &computed - &layout.reduce(expected) }
}

/// `L φ1 = 1 - φ1 + 2α φ2` and `L φ2 = -(3 + θ0 + θ1 - α) φ2 + α φ3`.
pub fn verify_moment_identities(n: usize) -> Result<Vec<IdentityCheck>> {
    let l = Layout::new(n)?;
    let (phi1, phi2, phi3) = (l.phi1(), l.phi2(), l.phi3());
    let (alpha, theta0, theta1) = (l.var(l.alpha()), l.var(l.theta0()), l.var(l.theta1()));
    let rhs1 = &(&l.int(1) - &phi1) + &(&alpha * &phi2).scale(&rational(2, 1));
    let rate = &(&(&l.int(3) + &theta0) + &theta1) - &alpha;
    let rhs2 = &(&alpha * &phi3) - &(&rate * &phi2);
    Ok(vec![
        check(&l, format!("L phi1 (n={n})"), apply_generator(&phi1, GeneratorPart::Full, n)?, &rhs1),
        check(&l, format!("L phi2 (n={n})"), apply_generator(&phi2, GeneratorPart::Full, n)?, &rhs2),
    ])
}

/// Which reading of the selection image of `Ȳ^m Σ y_i z_i` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableVariant {
    /// `(m+1)α Ȳ^m Σy_iz_i - (m+2)α Ȳ^{m+1} Σy_iz_i`.
    Corrected,
    /// Second term with `Ȳ^m`, as commonly printed; does not hold.
    Misprinted,
}

/// One row of the image table: observable, generator part, expected image.
#[derive(Debug, Clone)]
pub struct TableEntry {
    pub observable: &'static str,
    pub part: GeneratorPart,
    pub input: P,
    pub expected: P,
}

/// The nine images of `Ȳ^m Σy_i²`, `Z̄^m Σz_i²`, `Ȳ^m Σy_iz_i` under the
/// resampling, mutation and selection parts, for `n` families.
pub fn image_table(n: usize, m: u32, variant: TableVariant) -> Result<Vec<TableEntry>> {
    let l = Layout::new(n)?;
    let r = |p: i64| rational(p, 1);
    let mi = i64::from(m);
    let (alpha, theta0, theta1) = (l.var(l.alpha()), l.var(l.theta0()), l.var(l.theta1()));
    let (yb, zb) = (l.ybar(), l.zbar());
    let (y2, z2, yz) = (l.sum_y2(), l.sum_z2(), l.sum_yz());
    let pw = |b: &P, k: i64| b.pow(k as u32);
    let pairs = mi * (mi - 1) / 2;
    let mut rows = Vec::with_capacity(9);

    // Ȳ^m Σ y_i²
    let base = &pw(&yb, mi) * &y2;
    let lower = if m > 0 { &pw(&yb, mi - 1) * &y2 } else { P::zero(l.nvars()) };
    rows.push(TableEntry {
        observable: "Ybar^m sum y^2",
        part: GeneratorPart::Resampling,
        input: base.clone(),
        expected: pw(&yb, mi + 1) + lower.scale(&r(2 * mi + pairs)) - base.scale(&r(1 + 2 * mi + pairs)),
    });
    rows.push(TableEntry {
        observable: "Ybar^m sum y^2",
        part: GeneratorPart::Mutation,
        input: base.clone(),
        expected: (&theta0 * &(&pw(&yb, mi) * &yz)).scale(&r(2)) + (&theta0 * &lower).scale(&r(mi))
            - &(&theta0.scale(&r(mi)) + &theta1.scale(&r(mi + 2))) * &base,
    });
    rows.push(TableEntry {
        observable: "Ybar^m sum y^2",
        part: GeneratorPart::Selection,
        input: base.clone(),
        expected: (&alpha * &base).scale(&r(mi + 2)) - (&alpha * &(&yb * &base)).scale(&r(mi + 2)),
    });

    // Z̄^m Σ z_i²
    let base = &pw(&zb, mi) * &z2;
    let lower = if m > 0 { &pw(&zb, mi - 1) * &z2 } else { P::zero(l.nvars()) };
    rows.push(TableEntry {
        observable: "Zbar^m sum z^2",
        part: GeneratorPart::Resampling,
        input: base.clone(),
        expected: pw(&zb, mi + 1) + lower.scale(&r(2 * mi + pairs)) - base.scale(&r(1 + 2 * mi + pairs)),
    });
    rows.push(TableEntry {
        observable: "Zbar^m sum z^2",
        part: GeneratorPart::Mutation,
        input: base.clone(),
        expected: (&theta1 * &(&pw(&zb, mi) * &yz)).scale(&r(2)) + (&theta1 * &lower).scale(&r(mi))
            - &(&theta1.scale(&r(mi)) + &theta0.scale(&r(mi + 2))) * &base,
    });
    rows.push(TableEntry {
        observable: "Zbar^m sum z^2",
        part: GeneratorPart::Selection,
        input: base.clone(),
        expected: (&alpha * &(&zb * &base)).scale(&r(mi + 2)) - (&alpha * &base).scale(&r(mi + 2)),
    });

    // Ȳ^m Σ y_i z_i
    let base = &pw(&yb, mi) * &yz;
    let lower = if m > 0 { &pw(&yb, mi - 1) * &yz } else { P::zero(l.nvars()) };
    rows.push(TableEntry {
        observable: "Ybar^m sum yz",
        part: GeneratorPart::Resampling,
        input: base.clone(),
        expected: lower.scale(&r(mi + pairs)) - base.scale(&r(1 + 2 * mi + pairs)),
    });
    rows.push(TableEntry {
        observable: "Ybar^m sum yz",
        part: GeneratorPart::Mutation,
        input: base.clone(),
        expected: &theta1 * &(&pw(&yb, mi) * &y2) + &theta0 * &(&pw(&yb, mi) * &z2) + (&theta0 * &lower).scale(&r(mi))
            - (&(&theta0 + &theta1) * &base).scale(&r(mi + 1)),
    });
    let second = match variant {
        TableVariant::Corrected => &yb * &base,
        TableVariant::Misprinted => base.clone(),
    };
    rows.push(TableEntry {
        observable: "Ybar^m sum yz",
        part: GeneratorPart::Selection,
        input: base.clone(),
        expected: (&alpha * &base).scale(&r(mi + 1)) - (&alpha * &second).scale(&r(mi + 2)),
    });
    Ok(rows)
}

/// Result of checking an image table.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub n: usize,
    pub exponent: u32,
    pub variant: TableVariant,
    pub checks: Vec<IdentityCheck>,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(IdentityCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for TableReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = Layout { n: self.n }.names();
        for c in &self.checks {
            if c.passed() {
                writeln!(f, "ok    {}", c.label)?;
            } else {
                writeln!(f, "FAIL  {}: difference {}", c.label, c.difference.display_with(&names))?;
            }
        }
        Ok(())
    }
}

/// Checks every row of [`image_table`] with exponent `m` against
/// [`apply_generator`].
pub fn verify_image_table(n: usize, m: u32, variant: TableVariant) -> Result<TableReport> {
    let layout = Layout::new(n)?;
    let checks = image_table(n, m, variant)?
        .into_iter()
        .map(|row| {
            let computed = apply_generator(&row.input, row.part, n)?;
            let label = format!("{} {} (n={n}, m={m})", row.part.label(), row.observable);
            Ok(check(&layout, label, computed, &row.expected))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TableReport { n, exponent: m, variant, checks })
}

/// The table with the exponent tied to the number of families, `m = n`.
pub fn verify_appendix_table(n: usize) -> Result<TableReport> {
    verify_image_table(n, n as u32, TableVariant::Corrected)
}

/// Evaluates a reduced image at simplex coordinates `x` (length `2n`) and
/// parameters.
pub fn evaluate(p: &P, x: &[f64], alpha: f64, theta0: f64, theta1: f64) -> f64 {
    let mut point = x.to_vec();
    point.extend([alpha, theta0, theta1]);
    p.eval(&point)
}

/// Applies the generator numerically to an unreduced polynomial at `x`,
/// using the full-coordinate drift and diffusion matrix of the SDE and
/// symbolic first and second derivatives.
pub fn numeric_generator(p: &P, x: &[f64], alpha: f64, theta0: f64, theta1: f64) -> Result<f64> {
    let n = x.len() / 2;
    let layout = Layout::new(n)?;
    if p.nvars() != layout.nvars() || x.len() != 2 * n {
        return Err(Error::DimensionMismatch { expected: layout.nvars(), actual: p.nvars() });
    }
    let b = crate::sde::drift(x, alpha, theta0, theta1);
    let a = crate::sde::covariance_full(x);
    let at = |q: &P| evaluate(q, x, alpha, theta0, theta1);
    let mut total = 0.0;
    for i in 0..2 * n {
        let di = p.derivative(i);
        if di.is_zero() {
            continue;
        }
        total += b[i] * at(&di);
        for j in 0..2 * n {
            let dij = di.derivative(j);
            if !dij.is_zero() {
                total += 0.5 * a[(i, j)] * at(&dij);
            }
        }
    }
    Ok(total)
}

/// `true` iff every coefficient is an integer.
pub fn is_integral(p: &P) -> bool {
    p.terms().all(|(_, c)| c.is_integer())
}

/// Coefficient of the constant term.
pub fn constant_term(p: &P) -> BigRational {
    p.terms().find(|(e, _)| e.iter().all(|&d| d == 0)).map(|(_, c)| c.clone()).unwrap_or_else(BigRational::zero)
}
